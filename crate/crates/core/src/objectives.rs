//! Synthetic decentralized objectives.
//!
//! Node `i` holds `m` samples `(a_ij, b_ij)` and a local loss
//!
//! * linear regression: `f_i(x) = (1/m) Σ_j (a_ijᵀx − c_ij)² + (ρ/2)‖x‖²`
//! * logistic regression: `f_i(x) = (1/m) Σ_j log(1 + exp(−b_ij a_ijᵀx)) + (μ/2)‖x‖²`
//!
//! `μ` and `L` are per-node bounds (every `f_i` is `μ`-strongly convex and
//! `L`-smooth) and `x*` is certified against the first-order condition
//! `Σ_i ∇f_i(x*) = 0` with a solver that shares no code with the simulator.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::{self, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectiveKind {
    LinearRegression { ridge: f64 },
    LogisticRegression { mu_reg: f64 },
}

impl ObjectiveKind {
    fn tag(&self) -> &'static str {
        match self {
            ObjectiveKind::LinearRegression { .. } => "linreg",
            ObjectiveKind::LogisticRegression { .. } => "logreg",
        }
    }

    fn reg(&self) -> f64 {
        match *self {
            ObjectiveKind::LinearRegression { ridge } => ridge,
            ObjectiveKind::LogisticRegression { mu_reg } => mu_reg,
        }
    }
}

/// `m × d` features and `m` labels held by one node.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDataset {
    pub features: DMatrix<f64>,
    pub labels: DVector<f64>,
}

impl LocalDataset {
    pub fn new(features: DMatrix<f64>, labels: DVector<f64>) -> Result<Self> {
        if features.nrows() == 0 || features.nrows() != labels.len() {
            return Err(Error::param("dataset needs m >= 1 rows and one label per row"));
        }
        if features.iter().chain(labels.iter()).any(|v| !v.is_finite()) {
            return Err(Error::param("dataset has non-finite entries"));
        }
        Ok(Self { features, labels })
    }

    pub fn m(&self) -> usize {
        self.features.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct Objective {
    kind: ObjectiveKind,
    datasets: Vec<LocalDataset>,
    d: usize,
    mu: f64,
    l: f64,
    x_star: DVector<f64>,
}

/// Saddle point of the augmented Lagrangian: `x*` repeated on every node,
/// `y*_i = ∇f_i(x*) − νx*`, `z*_i = −νx* − y*_i`.
#[derive(Debug, Clone)]
pub struct SaddleCertificate {
    pub x_star: DVector<f64>,
    pub y_star: Vec<DVector<f64>>,
    pub z_star: Vec<DVector<f64>>,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Bregman divergence of `s ↦ log(1 + e^{−s})` between `u` and `v`.
fn logistic_bregman(u: f64, v: f64) -> f64 {
    let h = u - v;
    if h.abs() < 1e-3 {
        // fourth-order Taylor expansion around v
        let p = sigmoid(v);
        let q = 1.0 - p;
        let d2 = p * q;
        let d3 = d2 * (q - p);
        let d4 = d2 * (1.0 - 6.0 * p * q);
        let h2 = h * h;
        h2 * (d2 / 2.0 + h * d3 / 6.0 + h2 * d4 / 24.0)
    } else {
        softplus(-u) - softplus(-v) + sigmoid(-v) * h
    }
}

fn gram_extremes(a: &DMatrix<f64>, scale: f64) -> (f64, f64) {
    let g = (a.transpose() * a) * scale;
    let ev = g.symmetric_eigen().eigenvalues;
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo.max(0.0), hi)
}

impl Objective {
    /// Computes `μ`, `L` and a certified `x*` for the given data.
    pub fn new(kind: ObjectiveKind, datasets: Vec<LocalDataset>) -> Result<Self> {
        let first = datasets.first().ok_or_else(|| Error::param("need at least one node"))?;
        let d = first.features.ncols();
        if d == 0 || datasets.iter().any(|ds| ds.features.ncols() != d) {
            return Err(Error::param("all datasets must share d >= 1"));
        }
        let reg = kind.reg();
        if !(reg.is_finite() && reg >= 0.0) {
            return Err(Error::param(format!("regularization must be >= 0, got {reg}")));
        }
        let mut obj = match kind {
            ObjectiveKind::LinearRegression { ridge } => {
                let mut mu = f64::INFINITY;
                let mut l: f64 = 0.0;
                for ds in &datasets {
                    let (lo, hi) = gram_extremes(&ds.features, 2.0 / ds.m() as f64);
                    mu = mu.min(lo + ridge);
                    l = l.max(hi + ridge);
                }
                if mu <= 1e-12 * l.max(1.0) {
                    return Err(Error::param(
                        "a local least-squares problem is not strongly convex (μ = 0); add a ridge",
                    ));
                }
                Self {
                    kind,
                    datasets,
                    d,
                    mu,
                    l,
                    x_star: DVector::zeros(d),
                }
            }
            ObjectiveKind::LogisticRegression { mu_reg } => {
                if mu_reg <= 0.0 {
                    return Err(Error::param("logistic regression needs mu_reg > 0"));
                }
                let l = datasets
                    .iter()
                    .map(|ds| gram_extremes(&ds.features, 0.25 / ds.m() as f64).1)
                    .fold(0.0, f64::max)
                    + mu_reg;
                Self {
                    kind,
                    datasets,
                    d,
                    mu: mu_reg,
                    l,
                    x_star: DVector::zeros(d),
                }
            }
        };
        obj.x_star = match kind {
            ObjectiveKind::LinearRegression { .. } => obj.solve_normal_equations()?,
            ObjectiveKind::LogisticRegression { .. } => obj.solve_by_newton()?,
        };
        obj.certify()?;
        Ok(obj)
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.datasets.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn smoothness(&self) -> f64 {
        self.l
    }

    pub fn x_star(&self) -> &DVector<f64> {
        &self.x_star
    }

    pub fn datasets(&self) -> &[LocalDataset] {
        &self.datasets
    }

    /// Hessian of `f_i` for linear regression; `None` for logistic.
    pub fn local_hessian(&self, i: usize) -> Option<DMatrix<f64>> {
        match self.kind {
            ObjectiveKind::LinearRegression { ridge } => {
                let a = &self.datasets[i].features;
                let m = a.nrows() as f64;
                Some(a.transpose() * a * (2.0 / m) + DMatrix::identity(self.d, self.d) * ridge)
            }
            ObjectiveKind::LogisticRegression { .. } => None,
        }
    }

    pub fn loss_fi(&self, i: usize, x: &DVector<f64>) -> f64 {
        let ds = &self.datasets[i];
        let m = ds.m() as f64;
        let pred = &ds.features * x;
        let data = match self.kind {
            ObjectiveKind::LinearRegression { .. } => (pred - &ds.labels).norm_squared() / m,
            ObjectiveKind::LogisticRegression { .. } => {
                pred.iter()
                    .zip(ds.labels.iter())
                    .map(|(p, b)| softplus(-b * p))
                    .sum::<f64>()
                    / m
            }
        };
        data + 0.5 * self.kind.reg() * x.norm_squared()
    }

    /// `d_{f_i}(x, y) = f_i(x) − f_i(y) − ⟨∇f_i(y), x − y⟩`, evaluated without
    /// the cancellation of the direct formula.
    pub fn bregman_fi(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let ds = &self.datasets[i];
        let m = ds.m() as f64;
        let diff = x - y;
        let reg = 0.5 * self.kind.reg() * diff.norm_squared();
        match self.kind {
            ObjectiveKind::LinearRegression { .. } => (&ds.features * &diff).norm_squared() / m + reg,
            ObjectiveKind::LogisticRegression { .. } => {
                let (px, py) = (&ds.features * x, &ds.features * y);
                let data: f64 = (0..ds.m())
                    .map(|r| {
                        let b = ds.labels[r];
                        logistic_bregman(b * px[r], b * py[r])
                    })
                    .sum();
                data / m + reg
            }
        }
    }

    pub fn grad_fi(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        let ds = &self.datasets[i];
        let rows: Vec<usize> = (0..ds.m()).collect();
        self.batch_gradient(i, x, &rows)
    }

    /// Mean-loss gradient over a uniform batch of `batch` distinct samples.
    pub fn stochastic_grad_fi<R: Rng + ?Sized>(
        &self,
        i: usize,
        x: &DVector<f64>,
        batch: usize,
        rng: &mut R,
    ) -> Result<DVector<f64>> {
        let m = self.datasets[i].m();
        if batch == 0 || batch > m {
            return Err(Error::param(format!("batch size {batch} outside [1, {m}]")));
        }
        if batch == m {
            return Ok(self.grad_fi(i, x));
        }
        let rows = rand::seq::index::sample(rng, m, batch).into_vec();
        Ok(self.batch_gradient(i, x, &rows))
    }

    fn batch_gradient(&self, i: usize, x: &DVector<f64>, rows: &[usize]) -> DVector<f64> {
        let ds = &self.datasets[i];
        let mut g = x * self.kind.reg();
        let scale = 1.0 / rows.len() as f64;
        for &r in rows {
            let a = ds.features.row(r);
            let p = a.dot(&x.transpose());
            let coef = match self.kind {
                ObjectiveKind::LinearRegression { .. } => 2.0 * (p - ds.labels[r]),
                ObjectiveKind::LogisticRegression { .. } => {
                    let b = ds.labels[r];
                    -b * sigmoid(-b * p)
                }
            };
            for k in 0..self.d {
                g[k] += scale * coef * a[k];
            }
        }
        g
    }

    pub fn total_loss(&self, x: &DVector<f64>) -> f64 {
        (0..self.n()).map(|i| self.loss_fi(i, x)).sum()
    }

    pub fn total_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        (0..self.n()).fold(DVector::zeros(self.d), |acc, i| acc + self.grad_fi(i, x))
    }

    fn solve_normal_equations(&self) -> Result<DVector<f64>> {
        let mut h = DMatrix::zeros(self.d, self.d);
        let mut rhs = DVector::zeros(self.d);
        for (i, ds) in self.datasets.iter().enumerate() {
            h += self.local_hessian(i).expect("linear regression");
            rhs += ds.features.transpose() * &ds.labels * (2.0 / ds.m() as f64);
        }
        h.cholesky()
            .map(|c| c.solve(&rhs))
            .ok_or_else(|| Error::Certification("normal equations are singular".into()))
    }

    /// Damped Newton on `Σ f_i` with Armijo backtracking.
    fn solve_by_newton(&self) -> Result<DVector<f64>> {
        let n = self.n() as f64;
        let tol = 1e-12 * n;
        let mut x = DVector::zeros(self.d);
        let mut f = self.total_loss(&x);
        for _ in 0..200 {
            let g = self.total_grad(&x);
            if g.norm() <= tol {
                return Ok(x);
            }
            let dir = self
                .total_hessian(&x)
                .cholesky()
                .map(|c| c.solve(&g))
                .ok_or_else(|| Error::Certification("logistic Hessian is not positive definite".into()))?;
            let slope = g.dot(&dir);
            let gn = g.norm();
            let noise = 8.0 * f64::EPSILON * f.abs().max(1.0);
            let mut step = 1.0;
            loop {
                let cand = &x - &dir * step;
                let fc = self.total_loss(&cand);
                // near the optimum loss differences are below rounding; fall back to the gradient norm
                let flat = fc <= f + noise && self.total_grad(&cand).norm() < gn;
                if fc <= f - 1e-4 * step * slope || flat || step < 1e-10 {
                    x = cand;
                    f = fc;
                    break;
                }
                step *= 0.5;
            }
        }
        let g = self.total_grad(&x);
        if g.norm() <= tol {
            return Ok(x);
        }
        Err(Error::Certification("logistic solver did not reach ‖∇‖ ≤ 1e-12".into()))
    }

    fn total_hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::identity(self.d, self.d) * (self.kind.reg() * self.n() as f64);
        for ds in &self.datasets {
            let pred = &ds.features * x;
            let m = ds.m() as f64;
            let mut scaled = ds.features.clone();
            for (r, mut row) in scaled.row_iter_mut().enumerate() {
                let s = sigmoid(ds.labels[r] * pred[r]);
                row *= s * (1.0 - s) * ds.labels[r] * ds.labels[r] / m;
            }
            h += ds.features.transpose() * scaled;
        }
        h
    }

    fn certify(&self) -> Result<()> {
        let r = self.total_grad(&self.x_star).norm();
        let bound = 1e-9 * self.n() as f64 * self.l * (1.0 + self.x_star.norm());
        if r.is_finite() && r <= bound {
            Ok(())
        } else {
            Err(Error::Certification(format!(
                "‖Σ∇f_i(x*)‖ = {r:e} exceeds {bound:e}"
            )))
        }
    }

    pub fn saddle_certificate(&self, nu: f64) -> Result<SaddleCertificate> {
        let x = self.x_star.clone();
        let y_star: Vec<DVector<f64>> = (0..self.n())
            .map(|i| self.grad_fi(i, &x) - &x * nu)
            .collect();
        let z_star: Vec<DVector<f64>> = y_star.iter().map(|y| -(&x * nu) - y).collect();
        let sum_z = z_star.iter().fold(DVector::zeros(self.d), |a, z| a + z);
        let bound = 1e-9 * self.n() as f64 * self.l * (1.0 + x.norm());
        if sum_z.norm() > bound {
            return Err(Error::Certification(format!(
                "Σ z* has norm {:e} > {bound:e}",
                sum_z.norm()
            )));
        }
        Ok(SaddleCertificate {
            x_star: x,
            y_star,
            z_star,
        })
    }

    /// One `node_<i>.csv` per node (`label,feat_0,...`) plus `manifest.txt`.
    pub fn save_csv(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (i, ds) in self.datasets.iter().enumerate() {
            let mut s = String::from("label");
            for k in 0..self.d {
                let _ = write!(s, ",feat_{k}");
            }
            s.push('\n');
            for r in 0..ds.m() {
                let _ = write!(s, "{}", ds.labels[r]);
                for k in 0..self.d {
                    let _ = write!(s, ",{}", ds.features[(r, k)]);
                }
                s.push('\n');
            }
            std::fs::write(dir.join(format!("node_{i}.csv")), s)?;
        }
        let xs: Vec<String> = self.x_star.iter().map(|v| v.to_string()).collect();
        let manifest = format!(
            "n = {}\nm = {}\nd = {}\nkind = {}\nreg = {}\nmu = {}\nL = {}\nx_star = {}\n",
            self.n(),
            self.datasets[0].m(),
            self.d,
            self.kind.tag(),
            self.kind.reg(),
            self.mu,
            self.l,
            xs.join(",")
        );
        std::fs::write(dir.join("manifest.txt"), manifest)?;
        Ok(())
    }

    /// Reloads a dataset directory and checks the recomputed constants against
    /// the manifest.
    pub fn load_csv(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = std::fs::read_to_string(dir.join("manifest.txt"))?;
        let mut get = std::collections::HashMap::new();
        for (ln, line) in manifest.lines().enumerate() {
            if let Some((k, v)) = line.split_once('=') {
                get.insert(k.trim().to_string(), v.trim().to_string());
            } else if !line.trim().is_empty() {
                return Err(Error::parse(ln + 1, "expected `key = value`"));
            }
        }
        let field = |k: &str| -> Result<&String> {
            get.get(k).ok_or_else(|| Error::param(format!("manifest is missing `{k}`")))
        };
        let num = |k: &str| -> Result<f64> {
            field(k)?.parse().map_err(|_| Error::param(format!("manifest `{k}` is not a number")))
        };
        let n = num("n")? as usize;
        let reg = num("reg")?;
        let kind = match field("kind")?.as_str() {
            "linreg" => ObjectiveKind::LinearRegression { ridge: reg },
            "logreg" => ObjectiveKind::LogisticRegression { mu_reg: reg },
            other => return Err(Error::param(format!("unknown objective kind `{other}`"))),
        };
        let mut datasets = Vec::with_capacity(n);
        for i in 0..n {
            let text = std::fs::read_to_string(dir.join(format!("node_{i}.csv")))?;
            let mut labels = Vec::new();
            let mut feats = Vec::new();
            let mut d = None;
            for (ln, line) in text.lines().enumerate().skip(1) {
                let vals = line
                    .split(',')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::parse(ln + 1, "bad number"))?;
                if *d.get_or_insert(vals.len() - 1) != vals.len() - 1 {
                    return Err(Error::parse(ln + 1, "ragged row"));
                }
                labels.push(vals[0]);
                feats.extend_from_slice(&vals[1..]);
            }
            let d = d.ok_or_else(|| Error::param(format!("node_{i}.csv is empty")))?;
            let m = labels.len();
            datasets.push(LocalDataset::new(
                DMatrix::from_row_slice(m, d, &feats),
                DVector::from_vec(labels),
            )?);
        }
        let obj = Self::new(kind, datasets)?;
        for (k, v) in [("mu", obj.mu), ("L", obj.l)] {
            let want = num(k)?;
            if (want - v).abs() > 1e-9 * want.abs().max(1.0) {
                return Err(Error::Certification(format!("manifest {k}={want} but data gives {v}")));
            }
        }
        Ok(obj)
    }
}

/// Knobs of the linear-regression generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearRegressionSpec {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    /// Std of the additive target noise.
    pub noise: f64,
    /// Std of the per-node deviation of the planted weights from a shared vector.
    pub heterogeneity: f64,
    pub ridge: f64,
}

impl LinearRegressionSpec {
    pub fn new(n: usize, m: usize, d: usize) -> Self {
        Self {
            n,
            m,
            d,
            noise: 0.1,
            heterogeneity: 1.0,
            ridge: 0.0,
        }
    }
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn gaussian_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Planted linear model with Gaussian features: `c = a·(w + δ_i) + noise`.
pub fn make_linear_regression_with(spec: LinearRegressionSpec, seed: u64) -> Result<Objective> {
    let LinearRegressionSpec { n, m, d, noise, heterogeneity, ridge } = spec;
    if n == 0 || m == 0 || d == 0 {
        return Err(Error::param("n, m, d must all be >= 1"));
    }
    let mut rng = rng::stream(seed, Stream::Data);
    let shared = gaussian_vector(d, &mut rng);
    let datasets = (0..n)
        .map(|_| {
            let a = gaussian_matrix(m, d, &mut rng);
            let w = &shared + gaussian_vector(d, &mut rng) * heterogeneity;
            let c = &a * w + gaussian_vector(m, &mut rng) * noise;
            LocalDataset::new(a, c)
        })
        .collect::<Result<Vec<_>>>()?;
    Objective::new(ObjectiveKind::LinearRegression { ridge }, datasets)
}

pub fn make_linear_regression(n: usize, m: usize, d: usize, seed: u64) -> Result<Objective> {
    make_linear_regression_with(LinearRegressionSpec::new(n, m, d), seed)
}

/// Two Gaussian clusters at `±c` (per node, around a shared direction) with
/// ±1 labels.
pub fn make_logistic(n: usize, m: usize, d: usize, mu_reg: f64, seed: u64) -> Result<Objective> {
    if n == 0 || m == 0 || d == 0 {
        return Err(Error::param("n, m, d must all be >= 1"));
    }
    if mu_reg.is_nan() || mu_reg <= 0.0 {
        return Err(Error::param(format!("mu_reg must be > 0, got {mu_reg}")));
    }
    let mut rng = rng::stream(seed, Stream::Data);
    let shared = gaussian_vector(d, &mut rng) * (1.5 / (d as f64).sqrt());
    let datasets = (0..n)
        .map(|_| {
            let center = &shared + gaussian_vector(d, &mut rng) * (0.5 / (d as f64).sqrt());
            let labels = DVector::from_fn(m, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
            let mut a = gaussian_matrix(m, d, &mut rng);
            for r in 0..m {
                for k in 0..d {
                    a[(r, k)] += labels[r] * center[k];
                }
            }
            LocalDataset::new(a, labels)
        })
        .collect::<Result<Vec<_>>>()?;
    Objective::new(ObjectiveKind::LogisticRegression { mu_reg }, datasets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_linreg(points: &[(f64, f64)]) -> Objective {
        let datasets = points
            .iter()
            .map(|&(a, c)| {
                LocalDataset::new(DMatrix::from_element(1, 1, a), DVector::from_element(1, c)).unwrap()
            })
            .collect();
        Objective::new(ObjectiveKind::LinearRegression { ridge: 0.0 }, datasets).unwrap()
    }

    #[test]
    fn linreg_constant_fit() {
        let obj = scalar_linreg(&[(1.0, 1.0), (1.0, 1.0), (1.0, 1.0)]);
        assert_relative_eq!(obj.x_star()[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(obj.loss_fi(0, obj.x_star()), 0.0, epsilon = 1e-28);
    }

    #[test]
    fn linreg_two_nodes_average() {
        // minimizes x² + (x − 2)²
        let obj = scalar_linreg(&[(1.0, 0.0), (1.0, 2.0)]);
        assert_relative_eq!(obj.x_star()[0], 1.0, epsilon = 1e-14);
        assert_eq!(obj.mu(), 2.0);
        assert_eq!(obj.smoothness(), 2.0);
    }

    #[test]
    fn linreg_recovers_planted_weights_without_noise() {
        let spec = LinearRegressionSpec {
            noise: 0.0,
            heterogeneity: 0.0,
            ..LinearRegressionSpec::new(4, 30, 5)
        };
        let obj = make_linear_regression_with(spec, 3).unwrap();
        for i in 0..obj.n() {
            assert!(obj.loss_fi(i, obj.x_star()) < 1e-20);
        }
    }

    #[test]
    fn linreg_degenerate_node_needs_ridge() {
        let spec = LinearRegressionSpec::new(3, 2, 5);
        assert!(matches!(make_linear_regression_with(spec, 0), Err(Error::Parameter(_))));
        let ridged = LinearRegressionSpec { ridge: 0.1, ..spec };
        assert!(make_linear_regression_with(ridged, 0).is_ok());
    }

    #[test]
    fn logistic_pure_regularizer() {
        let datasets = vec![
            LocalDataset::new(DMatrix::zeros(3, 2), DVector::from_element(3, 1.0)).unwrap(),
        ];
        let obj = Objective::new(ObjectiveKind::LogisticRegression { mu_reg: 0.5 }, datasets).unwrap();
        assert!(obj.x_star().norm() < 1e-14);
        assert_eq!(obj.mu(), 0.5);
    }

    #[test]
    fn logistic_scalar_matches_bisection() {
        let datasets = vec![
            LocalDataset::new(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 1.0)).unwrap(),
        ];
        let obj = Objective::new(ObjectiveKind::LogisticRegression { mu_reg: 1.0 }, datasets).unwrap();
        // Oracle: bisection on x − 1/(1 + eˣ) = 0.
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid - 1.0 / (1.0 + mid.exp()) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert_relative_eq!(obj.x_star()[0], lo, epsilon = 1e-11);
        assert_relative_eq!(lo, 0.401058, epsilon = 1e-6);
        assert!((lo - 1.0 / (1.0 + lo.exp())).abs() < 1e-12);
    }

    #[test]
    fn bregman_matches_direct_formula() {
        let lin = make_linear_regression(3, 20, 4, 2).unwrap();
        let log = make_logistic(3, 20, 4, 0.2, 2).unwrap();
        let mut rng = rng::stream(5, Stream::Data);
        for obj in [&lin, &log] {
            for _ in 0..20 {
                let x = gaussian_vector(4, &mut rng);
                let y = gaussian_vector(4, &mut rng);
                for i in 0..3 {
                    let direct = obj.loss_fi(i, &x) - obj.loss_fi(i, &y) - obj.grad_fi(i, &y).dot(&(&x - &y));
                    assert_relative_eq!(obj.bregman_fi(i, &x, &y), direct, max_relative = 1e-9);
                }
            }
            // tiny displacement: positive and quadratic in the step
            let y = obj.x_star().clone();
            let dir = gaussian_vector(4, &mut rng);
            let b1 = obj.bregman_fi(0, &(&y + &dir * 1e-7), &y);
            let b2 = obj.bregman_fi(0, &(&y + &dir * 2e-7), &y);
            assert!(b1 > 0.0);
            assert_relative_eq!(b2 / b1, 4.0, max_relative = 1e-5);
        }
    }

    #[test]
    fn logistic_mu_is_regularizer() {
        let obj = make_logistic(5, 40, 4, 0.3, 1).unwrap();
        assert_eq!(obj.mu(), 0.3);
        assert!(obj.smoothness() > 0.3);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let objs = [make_linear_regression(3, 20, 4, 5).unwrap(), make_logistic(3, 20, 4, 0.1, 5).unwrap()];
        let mut rng = rng::stream(99, Stream::Data);
        for obj in &objs {
            for _ in 0..20 {
                let x = gaussian_vector(obj.d(), &mut rng);
                for i in 0..obj.n() {
                    let g = obj.grad_fi(i, &x);
                    let h = 1e-6;
                    for k in 0..obj.d() {
                        let mut xp = x.clone();
                        let mut xm = x.clone();
                        xp[k] += h;
                        xm[k] -= h;
                        let fd = (obj.loss_fi(i, &xp) - obj.loss_fi(i, &xm)) / (2.0 * h);
                        assert!((fd - g[k]).abs() <= 1e-5 * g.norm().max(1.0), "fd {fd} vs {}", g[k]);
                    }
                }
            }
        }
    }

    #[test]
    fn quadratic_gradient_is_affine() {
        let obj = make_linear_regression(2, 15, 3, 8).unwrap();
        let mut rng = rng::stream(1, Stream::Data);
        let x = gaussian_vector(3, &mut rng);
        let y = gaussian_vector(3, &mut rng);
        let h = obj.local_hessian(1).unwrap();
        let lhs = obj.grad_fi(1, &(&x + &y));
        let rhs = obj.grad_fi(1, &x) + &h * &y;
        assert!((lhs - rhs).norm() < 1e-10);
        // local minimizer has zero local gradient
        let local = h.clone().cholesky().unwrap().solve(&-obj.grad_fi(1, &DVector::zeros(3)));
        assert!(obj.grad_fi(1, &local).norm() < 1e-10);
    }

    #[test]
    fn bregman_sandwich() {
        let objs = [make_linear_regression(3, 25, 4, 2).unwrap(), make_logistic(3, 25, 4, 0.2, 2).unwrap()];
        let mut rng = rng::stream(4, Stream::Data);
        for obj in &objs {
            for _ in 0..100 {
                let x = gaussian_vector(obj.d(), &mut rng);
                let y = gaussian_vector(obj.d(), &mut rng);
                let dist = (&x - &y).norm_squared();
                for i in 0..obj.n() {
                    let br = obj.loss_fi(i, &x) - obj.loss_fi(i, &y) - obj.grad_fi(i, &y).dot(&(&x - &y));
                    assert!(br >= 0.5 * obj.mu() * dist - 1e-10);
                    assert!(br <= 0.5 * obj.smoothness() * dist + 1e-10);
                }
            }
        }
    }

    #[test]
    fn stochastic_gradient_full_batch_and_range() {
        let obj = make_linear_regression(2, 10, 3, 0).unwrap();
        let x = DVector::from_element(3, 0.5);
        let mut rng = rng::stream(0, Stream::MiniBatch);
        assert_eq!(obj.stochastic_grad_fi(0, &x, 10, &mut rng).unwrap(), obj.grad_fi(0, &x));
        assert!(obj.stochastic_grad_fi(0, &x, 0, &mut rng).is_err());
        assert!(obj.stochastic_grad_fi(0, &x, 11, &mut rng).is_err());
    }

    #[test]
    fn stochastic_gradient_is_unbiased_and_variance_shrinks() {
        let obj = make_linear_regression(1, 20, 2, 6).unwrap();
        let x = DVector::from_element(2, 0.3);
        let full = obj.grad_fi(0, &x);
        let mut rng = rng::stream(5, Stream::MiniBatch);
        let mut variances = Vec::new();
        for batch in [1, 10, 20] {
            let draws = 100_000;
            let mut sum = DVector::zeros(2);
            let mut sq = 0.0;
            for _ in 0..draws {
                let g = obj.stochastic_grad_fi(0, &x, batch, &mut rng).unwrap();
                sq += (&g - &full).norm_squared();
                sum += g;
            }
            let mean = sum / draws as f64;
            let var = sq / draws as f64;
            // 3σ per coordinate of the Monte Carlo mean
            for k in 0..2 {
                assert!((mean[k] - full[k]).abs() <= 3.0 * (var / draws as f64).sqrt() + 1e-12);
            }
            variances.push(var);
        }
        assert!(variances[0] > variances[1] && variances[1] > variances[2]);
        assert!(variances[2] < 1e-20);
    }

    #[test]
    fn saddle_certificate_consistency() {
        let obj = make_logistic(4, 20, 3, 0.5, 1).unwrap();
        let nu = obj.mu() / 2.0;
        let cert = obj.saddle_certificate(nu).unwrap();
        let sum_y = cert.y_star.iter().fold(DVector::zeros(3), |a, y| a + y);
        let want = -(cert.x_star.clone() * (nu * obj.n() as f64));
        assert!((sum_y - want).norm() < 1e-9);
        let sum_z = cert.z_star.iter().fold(DVector::zeros(3), |a, z| a + z);
        assert!(sum_z.norm() < 1e-9);
    }

    #[test]
    fn csv_roundtrip() {
        let obj = make_logistic(3, 8, 2, 0.4, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        obj.save_csv(dir.path()).unwrap();
        let back = Objective::load_csv(dir.path()).unwrap();
        assert_eq!(back.datasets(), obj.datasets());
        assert_eq!(back.x_star(), obj.x_star());
    }
}
