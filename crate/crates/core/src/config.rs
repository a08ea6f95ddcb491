//! Plain-text experiment configuration.
//!
//! One `key = value` per line, `#` starts a comment, nested keys are dotted:
//!
//! ```text
//! task = linreg
//! graph.kind = complete
//! graph.n = 20
//! data.m = 100
//! data.d = 5
//! run.t_max = 400
//! run.seeds = 0..10
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::graph::{generate_sequence, read_topology, GraphKind, TimeVaryingTopology};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Task {
    LinReg,
    /// Logistic regression with the given ridge `μ`.
    LogReg { mu_reg: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Exact,
    Sgd { batch: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphSpec {
    pub kind: GraphKind,
    pub n: usize,
    /// Number of graphs in the sequence.
    pub count: usize,
    /// Switch frequency `f`.
    pub f: f64,
    pub seed: u64,
    /// Edge-list file overriding the generator.
    pub file: Option<PathBuf>,
}

impl GraphSpec {
    pub fn build(&self) -> Result<TimeVaryingTopology> {
        if let Some(path) = &self.file {
            let topo = read_topology(path)?;
            if topo.n() != self.n {
                return Err(Error::param(format!(
                    "graph.file has n={}, config says graph.n={}",
                    topo.n(),
                    self.n
                )));
            }
            return Ok(topo);
        }
        let graphs = generate_sequence(self.kind, self.n, self.count, self.seed)?;
        TimeVaryingTopology::new(graphs, self.f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub graph: GraphSpec,
    pub m: usize,
    pub d: usize,
    pub noise: f64,
    pub heterogeneity: f64,
    pub data_seed: u64,
    pub t_max: f64,
    pub probe_count: usize,
    pub seeds: Vec<u64>,
    pub mode: Mode,
    /// Smoothness handed to the method is `l_scale · L`.
    pub l_scale: f64,
    /// Communication rate is `lambda_scale · λ*`.
    pub lambda_scale: f64,
    /// Explicit `(μ, L)` overrides.
    pub mu: Option<f64>,
    pub l: Option<f64>,
    pub lyapunov: bool,
    pub output_dir: PathBuf,
    pub sweep_eps: f64,
    pub sweep_max_events: usize,
    pub sweep_probe_dt: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::LinReg,
            graph: GraphSpec {
                kind: GraphKind::Complete,
                n: 20,
                count: 1,
                f: 1.0,
                seed: 0,
                file: None,
            },
            m: 100,
            d: 5,
            noise: 0.1,
            heterogeneity: 1.0,
            data_seed: 0,
            t_max: 100.0,
            probe_count: 100,
            seeds: vec![0],
            mode: Mode::Exact,
            l_scale: 1.0,
            lambda_scale: 1.0,
            mu: None,
            l: None,
            lyapunov: true,
            output_dir: PathBuf::from("out"),
            sweep_eps: 1e-6,
            sweep_max_events: 10_000_000,
            sweep_probe_dt: 0.5,
        }
    }
}

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse()
        .map_err(|e| Error::parse(line, format!("{key}: cannot parse {v:?}: {e}")))
}

/// `0,1,5` or `0..10` (half-open) or a mix: `0..3,7`.
pub fn parse_seeds(v: &str) -> std::result::Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in v.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|e| format!("{part:?}: {e}"))?;
            let b: u64 = b.trim().parse().map_err(|e| format!("{part:?}: {e}"))?;
            out.extend(a..b);
        } else {
            out.push(part.parse().map_err(|e| format!("{part:?}: {e}"))?);
        }
    }
    if out.is_empty() {
        return Err("empty seed list".into());
    }
    Ok(out)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| Error::parse(line, format!("expected key = value, got {body:?}")))?;
            let key = key.trim().to_string();
            if kv.insert(key.clone(), (line, value.trim().to_string())).is_some() {
                return Err(Error::parse(line, format!("duplicate key {key}")));
            }
        }

        let mut cfg = ExperimentConfig::default();
        let mut task = None;
        let mut mu_reg = None;
        let mut kind = None;
        let mut radius = None;
        let mut dim = None;
        let mut mode = None;
        let mut batch = None;
        for (key, (line, v)) in &kv {
            let (line, v) = (*line, v.as_str());
            match key.as_str() {
                "task" => task = Some((line, v.to_string())),
                "graph.kind" => kind = Some((line, v.to_string())),
                "graph.n" => cfg.graph.n = parse_value(line, key, v)?,
                "graph.radius" => radius = Some(parse_value::<f64>(line, key, v)?),
                "graph.dim" => dim = Some(parse_value::<u32>(line, key, v)?),
                "graph.count" => cfg.graph.count = parse_value(line, key, v)?,
                "graph.f" => cfg.graph.f = parse_value(line, key, v)?,
                "graph.seed" => cfg.graph.seed = parse_value(line, key, v)?,
                "graph.file" => cfg.graph.file = Some(PathBuf::from(v)),
                "data.m" => cfg.m = parse_value(line, key, v)?,
                "data.d" => cfg.d = parse_value(line, key, v)?,
                "data.mu_reg" => mu_reg = Some(parse_value::<f64>(line, key, v)?),
                "data.noise" => cfg.noise = parse_value(line, key, v)?,
                "data.heterogeneity" => cfg.heterogeneity = parse_value(line, key, v)?,
                "data.seed" => cfg.data_seed = parse_value(line, key, v)?,
                "run.t_max" => cfg.t_max = parse_value(line, key, v)?,
                "run.probes" => cfg.probe_count = parse_value(line, key, v)?,
                "run.seeds" => cfg.seeds = parse_seeds(v).map_err(|e| Error::parse(line, e))?,
                "run.mode" => mode = Some((line, v.to_string())),
                "run.batch" => batch = Some(parse_value::<usize>(line, key, v)?),
                "run.l_scale" => cfg.l_scale = parse_value(line, key, v)?,
                "run.lambda_scale" => cfg.lambda_scale = parse_value(line, key, v)?,
                "run.mu" => cfg.mu = Some(parse_value(line, key, v)?),
                "run.L" => cfg.l = Some(parse_value(line, key, v)?),
                "run.lyapunov" => cfg.lyapunov = parse_value(line, key, v)?,
                "output_dir" => cfg.output_dir = PathBuf::from(v),
                "sweep.eps" => cfg.sweep_eps = parse_value(line, key, v)?,
                "sweep.max_events" => cfg.sweep_max_events = parse_value(line, key, v)?,
                "sweep.probe_dt" => cfg.sweep_probe_dt = parse_value(line, key, v)?,
                _ => return Err(Error::parse(line, format!("unknown key {key}"))),
            }
        }

        cfg.task = match task {
            None => return Err(Error::param("missing key task")),
            Some((_, t)) if t == "linreg" => Task::LinReg,
            Some((line, t)) if t == "logreg" => Task::LogReg {
                mu_reg: mu_reg.ok_or_else(|| Error::parse(line, "logreg needs data.mu_reg"))?,
            },
            Some((line, t)) => return Err(Error::parse(line, format!("unknown task {t:?}"))),
        };
        if let Some((line, k)) = kind {
            cfg.graph.kind = match k.as_str() {
                "star" => GraphKind::Star,
                "line" => GraphKind::Line,
                "cycle" => GraphKind::Cycle,
                "complete" => GraphKind::Complete,
                "grid" => GraphKind::Grid { dim: dim.unwrap_or(2) },
                "geometric" => GraphKind::RandomGeometric {
                    radius: radius.ok_or_else(|| Error::parse(line, "geometric needs graph.radius"))?,
                },
                other => return Err(Error::parse(line, format!("unknown graph kind {other:?}"))),
            };
        }
        cfg.mode = match mode {
            None => Mode::Exact,
            Some((_, m)) if m == "exact" => Mode::Exact,
            Some((line, m)) if m == "sgd" => Mode::Sgd {
                batch: batch.ok_or_else(|| Error::parse(line, "sgd needs run.batch"))?,
            },
            Some((line, m)) => return Err(Error::parse(line, format!("unknown mode {m:?}"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Checks every constraint that does not need data or graphs.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("graph.f", self.graph.f),
            ("run.l_scale", self.l_scale),
            ("run.lambda_scale", self.lambda_scale),
            ("sweep.eps", self.sweep_eps),
            ("sweep.probe_dt", self.sweep_probe_dt),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.t_max.is_finite() && self.t_max >= 0.0) {
            return Err(Error::param("run.t_max must be >= 0"));
        }
        if self.graph.n < 2 || self.m < 1 || self.d < 1 || self.graph.count < 1 {
            return Err(Error::param("need graph.n >= 2, data.m >= 1, data.d >= 1, graph.count >= 1"));
        }
        if self.probe_count < 2 {
            return Err(Error::param("run.probes must be >= 2"));
        }
        if let Task::LogReg { mu_reg } = self.task {
            if !(mu_reg.is_finite() && mu_reg > 0.0) {
                return Err(Error::param(format!("data.mu_reg must be positive, got {mu_reg}")));
            }
        }
        if let Mode::Sgd { batch } = self.mode {
            if batch == 0 || batch > self.m {
                return Err(Error::param(format!("run.batch {batch} outside [1, {}]", self.m)));
            }
        }
        if let (Some(mu), Some(l)) = (self.mu, self.l) {
            if mu > l {
                return Err(Error::param(format!("need mu <= L, got mu={mu} > L={l}")));
            }
        }
        for v in self.mu.iter().chain(self.l.iter()) {
            if !(v.is_finite() && *v > 0.0) {
                return Err(Error::param(format!("run.mu and run.L must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Canonical rendering; parsing it yields the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        match self.task {
            Task::LinReg => put("task", "linreg".into()),
            Task::LogReg { mu_reg } => {
                put("task", "logreg".into());
                put("data.mu_reg", format!("{mu_reg:e}"));
            }
        }
        match self.graph.kind {
            GraphKind::Star => put("graph.kind", "star".into()),
            GraphKind::Line => put("graph.kind", "line".into()),
            GraphKind::Cycle => put("graph.kind", "cycle".into()),
            GraphKind::Complete => put("graph.kind", "complete".into()),
            GraphKind::Grid { dim } => {
                put("graph.kind", "grid".into());
                put("graph.dim", dim.to_string());
            }
            GraphKind::RandomGeometric { radius } => {
                put("graph.kind", "geometric".into());
                put("graph.radius", format!("{radius:e}"));
            }
        }
        put("graph.n", self.graph.n.to_string());
        put("graph.count", self.graph.count.to_string());
        put("graph.f", format!("{:e}", self.graph.f));
        put("graph.seed", self.graph.seed.to_string());
        if let Some(f) = &self.graph.file {
            put("graph.file", f.display().to_string());
        }
        put("data.m", self.m.to_string());
        put("data.d", self.d.to_string());
        put("data.noise", format!("{:e}", self.noise));
        put("data.heterogeneity", format!("{:e}", self.heterogeneity));
        put("data.seed", self.data_seed.to_string());
        put("run.t_max", format!("{:e}", self.t_max));
        put("run.probes", self.probe_count.to_string());
        put(
            "run.seeds",
            self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
        );
        match self.mode {
            Mode::Exact => put("run.mode", "exact".into()),
            Mode::Sgd { batch } => {
                put("run.mode", "sgd".into());
                put("run.batch", batch.to_string());
            }
        }
        put("run.l_scale", format!("{:e}", self.l_scale));
        put("run.lambda_scale", format!("{:e}", self.lambda_scale));
        if let Some(mu) = self.mu {
            put("run.mu", format!("{mu:e}"));
        }
        if let Some(l) = self.l {
            put("run.L", format!("{l:e}"));
        }
        put("run.lyapunov", self.lyapunov.to_string());
        put("output_dir", self.output_dir.display().to_string());
        put("sweep.eps", format!("{:e}", self.sweep_eps));
        put("sweep.max_events", self.sweep_max_events.to_string());
        put("sweep.probe_dt", format!("{:e}", self.sweep_probe_dt));
        s
    }

    /// SHA-256 of [`Self::to_text`] with `output_dir` left out, hex encoded.
    pub fn hash(&self) -> String {
        let text = Self {
            output_dir: PathBuf::new(),
            ..self.clone()
        }
        .to_text();
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# a comment
task = logreg
data.mu_reg = 0.1   # ridge
graph.kind = geometric
graph.radius = 0.4
graph.n = 20
graph.count = 50
graph.f = 2
run.seeds = 0..3, 9
run.mode = sgd
run.batch = 10
output_dir = results/x
";

    #[test]
    fn parses_sample() {
        let c = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.task, Task::LogReg { mu_reg: 0.1 });
        assert_eq!(c.graph.kind, GraphKind::RandomGeometric { radius: 0.4 });
        assert_eq!((c.graph.n, c.graph.count, c.graph.f), (20, 50, 2.0));
        assert_eq!(c.seeds, vec![0, 1, 2, 9]);
        assert_eq!(c.mode, Mode::Sgd { batch: 10 });
        assert_eq!(c.output_dir, PathBuf::from("results/x"));
        assert_eq!(c.m, 100);
    }

    #[test]
    fn canonical_text_roundtrips() {
        let c = ExperimentConfig::parse(SAMPLE).unwrap();
        let again = ExperimentConfig::parse(&c.to_text()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
        assert_eq!(c.hash().len(), 64);
        let other = ExperimentConfig { t_max: 5.0, ..c };
        assert_ne!(other.hash(), again.hash());
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            "graph.n = 3",
            "task = linreg\ntask = linreg",
            "task = logreg",
            "task = linreg\nrun.bogus = 1",
            "task = linreg\ngraph.n = many",
            "task = linreg\nrun.mode = sgd",
            "task = linreg\nrun.probes = 1",
            "task = linreg\nrun.mu = 4\nrun.L = 2",
            "task = linreg\nrun.mode = sgd\nrun.batch = 101",
            "task = linreg\nno equals sign",
        ];
        for text in bad {
            assert!(ExperimentConfig::parse(text).is_err(), "{text:?}");
        }
    }

    #[test]
    fn parse_error_carries_line() {
        let err = ExperimentConfig::parse("task = linreg\n\n# x\nfoo = 1").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
    }

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("4").unwrap(), vec![4]);
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert!(parse_seeds("").is_err());
        assert!(parse_seeds("a..b").is_err());
    }
}
