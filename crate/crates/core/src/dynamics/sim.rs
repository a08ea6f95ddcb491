use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;

use super::drift::DriftMatrix;
use super::state::{gossip_jump_in_place, propagate, NodeState};
use super::DadaoParams;
use crate::events::{Event, EventKind};
use crate::graph::TimeVaryingTopology;
use crate::metrics::{self, LyapunovCoefficients, ProbeRecord, RunningAverage};
use crate::objectives::{Objective, SaddleCertificate};
use crate::rng::{self, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    ExactGradient,
    /// Mini-batch gradients over `batch` distinct local samples.
    Stochastic { batch: usize },
}

/// Times at which metrics are recorded.
#[derive(Debug, Clone, PartialEq)]
pub enum Probes {
    /// Explicit nondecreasing times.
    At(Vec<f64>),
    /// `0, dt, 2dt, ...` up to and including `until`.
    Every { dt: f64, until: f64 },
}

impl Probes {
    /// `count ≥ 2` evenly spaced probes on `[0, t_max]`.
    pub fn uniform(t_max: f64, count: usize) -> Self {
        let count = count.max(2);
        Probes::At(
            (0..count)
                .map(|k| t_max * k as f64 / (count - 1) as f64)
                .collect(),
        )
    }

    fn validate(&self) -> Result<()> {
        match self {
            Probes::At(ts) => {
                if ts.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                    return Err(Error::param("probe times must be finite and >= 0"));
                }
                if ts.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::param("probe times must be sorted"));
                }
            }
            Probes::Every { dt, until } => {
                if !(dt.is_finite() && *dt > 0.0 && until.is_finite() && *until >= 0.0) {
                    return Err(Error::param(format!("bad probe grid dt={dt} until={until}")));
                }
            }
        }
        Ok(())
    }

    fn time(&self, k: usize) -> Option<f64> {
        match self {
            Probes::At(ts) => ts.get(k).copied(),
            Probes::Every { dt, until } => {
                let t = k as f64 * dt;
                (t <= *until).then_some(t)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub probes: Probes,
    /// Evaluate the Lyapunov potential at probes (`NaN` otherwise).
    pub lyapunov: bool,
    /// Global communication rate; scales `Λ(t)` inside the potential.
    pub gossip_rate: f64,
    /// Stop at the first probe whose `mean_dist_sq` is below this value.
    pub stop_below: Option<f64>,
    pub max_events: Option<usize>,
    /// Seed of the mini-batch stream.
    pub seed: u64,
    /// Initial states; all-zero when `None`.
    pub initial: Option<Vec<NodeState>>,
    /// Keep the propagated states of every probe.
    pub keep_snapshots: bool,
}

impl RunOptions {
    pub fn new(probes: Probes, gossip_rate: f64, seed: u64) -> Self {
        Self {
            probes,
            lyapunov: true,
            gossip_rate,
            stop_below: None,
            max_events: None,
            seed,
            initial: None,
            keep_snapshots: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<ProbeRecord>,
    /// States propagated to `end_time`.
    pub final_states: Vec<NodeState>,
    pub end_time: f64,
    pub grad_events: u64,
    pub comm_events: u64,
    /// Empirical `E‖ĝ − ∇f_i‖²` over gradient events (stochastic mode only).
    pub sigma_sq_hat: Option<f64>,
    pub stopped_early: bool,
    pub hit_event_cap: bool,
    /// Probe-time states, one entry per record when requested.
    pub snapshots: Vec<Vec<NodeState>>,
}

impl Trajectory {
    pub fn final_x(&self) -> Vec<DVector<f64>> {
        self.final_states.iter().map(|s| s.x.clone()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(metrics::TRAJECTORY_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }
}

struct Sim<'a> {
    topo: &'a TimeVaryingTopology,
    objective: &'a Objective,
    params: &'a DadaoParams,
    drift: DriftMatrix,
    opts: &'a RunOptions,
    cert: Option<SaddleCertificate>,
    pinv_cache: Vec<Option<DMatrix<f64>>>,
    states: Vec<NodeState>,
    avg: RunningAverage,
    records: Vec<ProbeRecord>,
    snapshots: Vec<Vec<NodeState>>,
    grad_events: u64,
    comm_events: u64,
    next_probe: usize,
}

impl Sim<'_> {
    fn gossip_pinv(&mut self, t: f64) -> &DMatrix<f64> {
        let idx = self.topo.index_at(t);
        let (topo, rate, n) = (self.topo, self.opts.gossip_rate, self.states.len());
        self.pinv_cache[idx].get_or_insert_with(|| {
            if topo.graphs()[idx].total_weight() > 0.0 && rate > 0.0 {
                topo.gossip_matrix(idx, rate).pseudo_inverse().clone()
            } else {
                DMatrix::zeros(n, n)
            }
        })
    }

    fn probe(&mut self, t: f64) -> Result<()> {
        let snap = self
            .states
            .iter()
            .map(|s| propagate(s, t, &self.drift))
            .collect::<Result<Vec<_>>>()?;
        let x_star = self.objective.x_star();
        let lyap = if self.opts.lyapunov {
            let coeffs = LyapunovCoefficients::at(t, self.params);
            let nu = self.params.nu;
            let pinv = self.gossip_pinv(t).clone();
            let cert = self.cert.as_ref().expect("certificate is built when the potential is requested");
            metrics::lyapunov(&snap, &coeffs, cert, &pinv, self.objective, nu)?
        } else {
            f64::NAN
        };
        self.records.push(ProbeRecord {
            time: t,
            grad_events: self.grad_events,
            comm_events: self.comm_events,
            mean_dist_sq: metrics::mean_dist_sq(&snap, x_star),
            consensus_err: metrics::consensus_err(&snap),
            lyapunov: lyap,
            running_avg_dist_sq: self.avg.dist_sq(x_star)?,
        });
        if self.opts.keep_snapshots {
            self.snapshots.push(snap);
        }
        Ok(())
    }

    /// Records every pending probe strictly before `t` (all of them for `None`).
    /// Returns `true` when the stopping threshold was reached.
    fn flush_probes(&mut self, t: Option<f64>) -> Result<bool> {
        while let Some(tp) = self.opts.probes.time(self.next_probe) {
            if t.is_some_and(|t| tp >= t) {
                break;
            }
            self.next_probe += 1;
            self.probe(tp)?;
            let dist = self.records.last().map(|r| r.mean_dist_sq).unwrap_or(f64::INFINITY);
            if self.opts.stop_below.is_some_and(|eps| dist < eps) {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// Replays `events` in order. Only the nodes touched by an event are advanced;
/// probes evaluate metrics on propagated copies.
pub fn run(
    events: impl IntoIterator<Item = Event>,
    topo: &TimeVaryingTopology,
    objective: &Objective,
    params: &DadaoParams,
    mode: RunMode,
    opts: &RunOptions,
) -> Result<Trajectory> {
    let n = topo.n();
    let d = objective.d();
    if objective.n() != n {
        return Err(Error::param(format!(
            "objective has {} nodes, topology has {n}",
            objective.n()
        )));
    }
    if let RunMode::Stochastic { batch } = mode {
        if batch == 0 {
            return Err(Error::param("mini-batch size must be >= 1"));
        }
    }
    opts.probes.validate()?;
    let states = match &opts.initial {
        Some(init) => {
            if init.len() != n || init.iter().any(|s| s.d() != d) {
                return Err(Error::param("initial states do not match (n, d)"));
            }
            init.clone()
        }
        None => vec![NodeState::zeros(d); n],
    };
    let mut avg = RunningAverage::new(n, d);
    for (i, s) in states.iter().enumerate() {
        avg.push(i, &s.x);
    }
    let cert = if opts.lyapunov {
        Some(objective.saddle_certificate(params.nu)?)
    } else {
        None
    };
    let mut sim = Sim {
        topo,
        objective,
        params,
        drift: DriftMatrix::new(params),
        opts,
        cert,
        pinv_cache: vec![None; topo.graphs().len()],
        states,
        avg,
        records: Vec::new(),
        snapshots: Vec::new(),
        grad_events: 0,
        comm_events: 0,
        next_probe: 0,
    };
    let mut mb_rng: ChaCha8Rng = rng::stream(opts.seed, Stream::MiniBatch);
    let mut noise_sum = 0.0;
    let mut last_time = sim.states.iter().map(|s| s.last_update).fold(0.0, f64::max);
    let mut stopped_early = false;
    let mut hit_event_cap = false;

    for (index, ev) in events.into_iter().enumerate() {
        if opts.max_events.is_some_and(|cap| index >= cap) {
            hit_event_cap = true;
            break;
        }
        let step = |sim: &mut Sim, noise_sum: &mut f64, mb_rng: &mut ChaCha8Rng| -> Result<bool> {
            if ev.time < last_time || !ev.time.is_finite() {
                return Err(Error::Ordering {
                    from: last_time,
                    to: ev.time,
                });
            }
            if sim.flush_probes(Some(ev.time))? {
                return Ok(true);
            }
            match ev.kind {
                EventKind::GradientSpike { node } => {
                    if node >= n {
                        return Err(Error::param(format!("node {node} out of range")));
                    }
                    let s = &mut sim.states[node];
                    s.propagate_in_place(ev.time, &sim.drift)?;
                    let grad = match mode {
                        RunMode::ExactGradient => objective.grad_fi(node, &s.x),
                        RunMode::Stochastic { batch } => {
                            let g = objective.stochastic_grad_fi(node, &s.x, batch, mb_rng)?;
                            *noise_sum += (&g - objective.grad_fi(node, &s.x)).norm_squared();
                            g
                        }
                    };
                    s.gradient_jump_in_place(node, &grad, params)?;
                    sim.avg.push(node, &s.x);
                    sim.grad_events += 1;
                }
                EventKind::CommSpike { i, j } => {
                    if i >= n || j >= n || i == j {
                        return Err(Error::param(format!("bad edge ({i}, {j})")));
                    }
                    let (lo, hi) = (i.min(j), i.max(j));
                    let (head, tail) = sim.states.split_at_mut(hi);
                    let (a, b) = (&mut head[lo], &mut tail[0]);
                    a.propagate_in_place(ev.time, &sim.drift)?;
                    b.propagate_in_place(ev.time, &sim.drift)?;
                    gossip_jump_in_place(a, b, params)?;
                    sim.avg.push(lo, &a.x);
                    sim.avg.push(hi, &b.x);
                    sim.comm_events += 1;
                }
            }
            Ok(false)
        };
        if step(&mut sim, &mut noise_sum, &mut mb_rng).map_err(|e| e.at_event(index))? {
            stopped_early = true;
            break;
        }
        last_time = ev.time;
    }
    if !stopped_early && !hit_event_cap {
        stopped_early = sim.flush_probes(None)?;
    }

    let end_time = sim
        .records
        .last()
        .map(|r| r.time)
        .unwrap_or(0.0)
        .max(last_time);
    let final_states = sim
        .states
        .iter()
        .map(|s| propagate(s, end_time.max(s.last_update), &sim.drift))
        .collect::<Result<Vec<_>>>()?;
    let sigma_sq_hat = match mode {
        RunMode::Stochastic { .. } if sim.grad_events > 0 => Some(noise_sum / sim.grad_events as f64),
        _ => None,
    };
    Ok(Trajectory {
        records: sim.records,
        final_states,
        end_time,
        grad_events: sim.grad_events,
        comm_events: sim.comm_events,
        sigma_sq_hat,
        stopped_early,
        hit_event_cap,
        snapshots: sim.snapshots,
    })
}
