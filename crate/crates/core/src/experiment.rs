//! Config-driven multi-seed runs and scaling sweeps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{ExperimentConfig, Mode, Task};
use crate::dynamics::{params_from, run, DadaoParams, Probes, RunMode, RunOptions, Trajectory};
use crate::events::EventStream;
use crate::graph::{Normalization, TimeVaryingTopology};
use crate::objectives::{make_linear_regression_with, make_logistic, LinearRegressionSpec, Objective};
use crate::{Error, Result};

/// Everything a seed needs, built once per config.
#[derive(Debug, Clone)]
pub struct ExperimentSetup {
    pub config: ExperimentConfig,
    pub topology: TimeVaryingTopology,
    pub objective: Objective,
    pub params: DadaoParams,
    /// `λ*` of the topology.
    pub lambda_star: f64,
    /// Communication rate actually used.
    pub lambda: f64,
    /// `(sup χ₁, sup χ₂)` of the rate-scaled gossip matrices.
    pub chi_star: (f64, f64),
}

impl ExperimentSetup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate().map_err(|e| e.in_stage("config"))?;
        let objective = build_objective(cfg).map_err(|e| e.in_stage("objective"))?;
        let topology = cfg.graph.build().map_err(|e| e.in_stage("topology"))?;
        let (lambda_star, lambda, chi_star) = (|| {
            let lambda_star = topology.lambda_star_with(Normalization::TotalRate)?;
            let lambda = lambda_star * cfg.lambda_scale;
            Ok((lambda_star, lambda, topology.gossip_constants(lambda)?))
        })()
        .map_err(|e: Error| e.in_stage("topology"))?;
        let mu = cfg.mu.unwrap_or(objective.mu());
        let l = cfg.l.unwrap_or(objective.smoothness()) * cfg.l_scale;
        let params = params_from(mu, l, chi_star.0).map_err(|e| e.in_stage("parameters"))?;
        Ok(Self {
            config: cfg.clone(),
            topology,
            objective,
            params,
            lambda_star,
            lambda,
            chi_star,
        })
    }

    /// The rate condition `χ₁*χ₂* ≤ 1/2`.
    pub fn precondition_holds(&self) -> bool {
        self.chi_star.0 * self.chi_star.1 <= 0.5 * (1.0 + 1e-9)
    }

    pub fn run_mode(&self) -> RunMode {
        match self.config.mode {
            Mode::Exact => RunMode::ExactGradient,
            Mode::Sgd { batch } => RunMode::Stochastic { batch },
        }
    }

    /// One seed on the configured probe grid.
    pub fn run_seed(&self, seed: u64) -> Result<Trajectory> {
        let cfg = &self.config;
        let mut opts = RunOptions::new(Probes::uniform(cfg.t_max, cfg.probe_count), self.lambda, seed);
        opts.lyapunov = cfg.lyapunov;
        self.run_with(seed, cfg.t_max, &opts)
    }

    pub fn run_with(&self, seed: u64, t_max: f64, opts: &RunOptions) -> Result<Trajectory> {
        let events = EventStream::new(&self.topology, self.lambda, t_max, seed)?;
        run(events, &self.topology, &self.objective, &self.params, self.run_mode(), opts)
    }
}

fn build_objective(cfg: &ExperimentConfig) -> Result<Objective> {
    let n = cfg.graph.n;
    match cfg.task {
        Task::LinReg => {
            let spec = LinearRegressionSpec {
                noise: cfg.noise,
                heterogeneity: cfg.heterogeneity,
                ..LinearRegressionSpec::new(n, cfg.m, cfg.d)
            };
            make_linear_regression_with(spec, cfg.data_seed)
        }
        Task::LogReg { mu_reg } => make_logistic(n, cfg.m, cfg.d, mu_reg, cfg.data_seed),
    }
}

/// Least-squares line through `(t, ln y)` over the final 80% of the points
/// with `y > 0`. Returns `(slope, R²)`, `NaN`s when fewer than two points remain.
pub fn log_linear_fit(times: &[f64], values: &[f64]) -> (f64, f64) {
    let start = times.len() / 5;
    let pts: Vec<(f64, f64)> = times[start..]
        .iter()
        .zip(&values[start..])
        .filter(|(_, v)| **v > 0.0 && v.is_finite())
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    linear_fit(&pts)
}

/// Ordinary least squares `y = a + b x`; returns `(b, R²)`.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    if pts.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let b = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (b, r2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedSummary {
    pub seed: u64,
    pub final_mean_dist_sq: f64,
    pub slope: f64,
    pub r2: f64,
    pub grad_events: u64,
    pub comm_events: u64,
    pub sigma_sq_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub chi1_star: f64,
    pub chi2_star: f64,
    pub lambda_star: f64,
    pub lambda: f64,
    pub mu: f64,
    pub l: f64,
    pub precondition_holds: bool,
    pub no_events: bool,
    pub seeds: Vec<SeedSummary>,
    /// Files written, relative to the output directory.
    pub files: Vec<String>,
}

impl ExperimentSummary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "chi1_star = {:e}", self.chi1_star);
        let _ = writeln!(s, "chi2_star = {:e}", self.chi2_star);
        let _ = writeln!(s, "lambda_star = {:e}", self.lambda_star);
        let _ = writeln!(s, "lambda = {:e}", self.lambda);
        let _ = writeln!(s, "mu = {:e}", self.mu);
        let _ = writeln!(s, "L = {:e}", self.l);
        let pre = if self.precondition_holds {
            "ok".to_string()
        } else {
            format!("violated (chi1*chi2* = {:e} > 0.5)", self.chi1_star * self.chi2_star)
        };
        let _ = writeln!(s, "precondition = {pre}");
        let _ = writeln!(s, "no_events = {}", self.no_events);
        let total_g: u64 = self.seeds.iter().map(|r| r.grad_events).sum();
        let total_c: u64 = self.seeds.iter().map(|r| r.comm_events).sum();
        let _ = writeln!(s, "total_grad_events = {total_g}");
        let _ = writeln!(s, "total_comm_events = {total_c}");
        let _ = writeln!(s);
        let _ = writeln!(s, "seed,final_mean_dist_sq,slope,r2,grad_events,comm_events,sigma_sq_hat");
        for r in &self.seeds {
            let sigma = r.sigma_sq_hat.map(|v| v.to_string()).unwrap_or_else(|| "NaN".into());
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.seed, r.final_mean_dist_sq, r.slope, r.r2, r.grad_events, r.comm_events, sigma
            );
        }
        s
    }
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<()> {
    std::fs::write(dir.join(name), body).map_err(|e| Error::from(e).in_stage("output"))
}

/// Runs every seed in parallel and writes `trajectory_seed_<s>.csv`,
/// `summary.txt` and `manifest.txt` under `output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    let setup = ExperimentSetup::new(cfg)?;
    let trajectories = cfg
        .seeds
        .par_iter()
        .map(|&seed| setup.run_seed(seed).map(|t| (seed, t)))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("simulation"))?;

    let out: PathBuf = cfg.output_dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::from(e).in_stage("output"))?;
    let mut files = Vec::new();
    let mut seeds = Vec::new();
    for (seed, tr) in &trajectories {
        let name = format!("trajectory_seed_{seed}.csv");
        write_file(&out, &name, &tr.to_csv())?;
        files.push(name);
        let times: Vec<f64> = tr.records.iter().map(|r| r.time).collect();
        let dists: Vec<f64> = tr.records.iter().map(|r| r.mean_dist_sq).collect();
        let (slope, r2) = log_linear_fit(&times, &dists);
        seeds.push(SeedSummary {
            seed: *seed,
            final_mean_dist_sq: dists.last().copied().unwrap_or(f64::NAN),
            slope,
            r2,
            grad_events: tr.grad_events,
            comm_events: tr.comm_events,
            sigma_sq_hat: tr.sigma_sq_hat,
        });
    }
    let mut summary = ExperimentSummary {
        chi1_star: setup.chi_star.0,
        chi2_star: setup.chi_star.1,
        lambda_star: setup.lambda_star,
        lambda: setup.lambda,
        mu: setup.params.mu,
        l: setup.params.l,
        precondition_holds: setup.precondition_holds(),
        no_events: trajectories.iter().all(|(_, t)| t.grad_events + t.comm_events == 0),
        seeds,
        files: Vec::new(),
    };
    write_file(&out, "summary.txt", &summary.to_text())?;
    files.push("summary.txt".into());
    write_file(&out, "config.txt", &cfg.to_text())?;
    files.push("config.txt".into());
    write_manifest(&out, cfg, &files)?;
    files.push("manifest.txt".into());
    summary.files = files;
    Ok(summary)
}

fn write_manifest(out: &Path, cfg: &ExperimentConfig, files: &[String]) -> Result<()> {
    let mut m = String::new();
    let _ = writeln!(m, "config_sha256 = {}", cfg.hash());
    for f in files {
        let _ = writeln!(m, "file = {f}");
    }
    write_file(out, "manifest.txt", &m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub lambda_star: f64,
    /// Means over the seeds that reached the target.
    pub comms_to_eps: f64,
    pub grads_to_eps: f64,
    pub time_to_eps: f64,
    /// Seeds that reached the target before the event cap or horizon.
    pub reached: usize,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Log-log slopes of `comms_to_eps` and `grads_to_eps` against `n`.
    pub comms_exponent: f64,
    pub grads_exponent: f64,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,lambda_star,comms_to_eps,grads_to_eps,time_to_eps,reached,seeds\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.n, r.lambda_star, r.comms_to_eps, r.grads_to_eps, r.time_to_eps, r.reached, r.seeds
            );
        }
        s
    }
}

/// Writes `sweep.csv`, `config.txt` and `manifest.txt` under `output_dir`
/// and returns the file names.
pub fn save_sweep(cfg: &ExperimentConfig, table: &SweepTable) -> Result<Vec<String>> {
    let out = cfg.output_dir.as_path();
    std::fs::create_dir_all(out).map_err(|e| Error::from(e).in_stage("output"))?;
    write_file(out, "sweep.csv", &table.to_csv())?;
    write_file(out, "config.txt", &cfg.to_text())?;
    let mut files = vec!["sweep.csv".to_string(), "config.txt".to_string()];
    write_manifest(out, cfg, &files)?;
    files.push("manifest.txt".into());
    Ok(files)
}

/// Runs each `n` until `mean_dist_sq ≤ eps · mean_dist_sq(0)`, probing every
/// `sweep.probe_dt`. `run.t_max` bounds the horizon and `sweep.max_events`
/// the event count; rows that never reach the target are flagged.
pub fn scaling_sweep(cfg: &ExperimentConfig, n_values: &[usize]) -> Result<SweepTable> {
    if n_values.len() < 2 {
        return Err(Error::param("a sweep needs at least two values of n").in_stage("config"));
    }
    let setups = n_values
        .iter()
        .map(|&n| {
            let mut c = cfg.clone();
            c.graph.n = n;
            ExperimentSetup::new(&c)
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u64)> = (0..setups.len())
        .flat_map(|k| cfg.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(k, seed)| {
            let setup = &setups[k];
            let x_star = setup.objective.x_star();
            let mut opts = RunOptions::new(
                Probes::Every {
                    dt: cfg.sweep_probe_dt,
                    until: cfg.t_max,
                },
                setup.lambda,
                seed,
            );
            opts.lyapunov = false;
            opts.max_events = Some(cfg.sweep_max_events);
            // Zero initialization: the initial mean distance is ‖x*‖².
            opts.stop_below = Some(cfg.sweep_eps * x_star.norm_squared());
            setup.run_with(seed, cfg.t_max, &opts).map(|t| (k, t))
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("simulation"))?;

    let rows: Vec<SweepRow> = setups
        .iter()
        .enumerate()
        .map(|(k, setup)| {
            let hits: Vec<_> = results
                .iter()
                .filter(|(kk, t)| *kk == k && t.stopped_early)
                .filter_map(|(_, t)| t.records.last())
                .collect();
            let mean = |f: &dyn Fn(&crate::metrics::ProbeRecord) -> f64| {
                if hits.is_empty() {
                    f64::NAN
                } else {
                    hits.iter().map(|r| f(r)).sum::<f64>() / hits.len() as f64
                }
            };
            SweepRow {
                n: setup.topology.n(),
                lambda_star: setup.lambda_star,
                comms_to_eps: mean(&|r| r.comm_events as f64),
                grads_to_eps: mean(&|r| r.grad_events as f64),
                time_to_eps: mean(&|r| r.time),
                reached: hits.len(),
                seeds: cfg.seeds.len(),
            }
        })
        .collect();
    let exponent = |f: &dyn Fn(&SweepRow) -> f64| {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.reached > 0)
            .map(|r| ((r.n as f64).ln(), f(r).ln()))
            .collect();
        linear_fit(&pts).0
    };
    let comms_exponent = exponent(&|r| r.comms_to_eps);
    let grads_exponent = exponent(&|r| r.grads_to_eps);
    Ok(SweepTable {
        rows,
        comms_exponent,
        grads_exponent,
    })
}
