//! Convergence diagnostics evaluated at probe times.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{DadaoParams, NodeState};
use crate::objectives::{Objective, SaddleCertificate};
use crate::{Error, Result};

/// Weights of the Lyapunov potential at one instant. All six share the factor
/// `exp(τ√(ν/L)·t)` and are tied by
/// `4Ã = νA`, `Ã = 2LνB̃`, `(δ/2)B̃ = αB`, `θB̃ = β̃C̃ = αC`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovCoefficients {
    pub a: f64,
    pub a_t: f64,
    pub b: f64,
    pub b_t: f64,
    pub c: f64,
    pub c_t: f64,
}

impl LyapunovCoefficients {
    pub fn at(t: f64, p: &DadaoParams) -> Self {
        let a = (p.lyapunov_rate() * t).exp();
        let a_t = p.nu / 4.0 * a;
        let b_t = a_t / (2.0 * p.l * p.nu);
        let b = p.delta / (2.0 * p.alpha) * b_t;
        let c = p.theta / p.alpha * b_t;
        let c_t = p.theta / p.beta_t * b_t;
        Self { a, a_t, b, b_t, c, c_t }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRecord {
    pub time: f64,
    pub grad_events: u64,
    pub comm_events: u64,
    pub mean_dist_sq: f64,
    pub consensus_err: f64,
    pub lyapunov: f64,
    pub running_avg_dist_sq: f64,
}

pub const TRAJECTORY_HEADER: &str =
    "time,grad_events,comm_events,mean_dist_sq,consensus_err,lyapunov,running_avg_dist_sq";

impl ProbeRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.time,
            self.grad_events,
            self.comm_events,
            self.mean_dist_sq,
            self.consensus_err,
            self.lyapunov,
            self.running_avg_dist_sq
        )
    }
}

/// `(1/n) Σ_i ‖x_i − x*‖²`.
pub fn mean_dist_sq(states: &[NodeState], x_star: &DVector<f64>) -> f64 {
    if states.is_empty() {
        return 0.0;
    }
    states.iter().map(|s| (&s.x - x_star).norm_squared()).sum::<f64>() / states.len() as f64
}

/// `‖πx‖² = Σ_i ‖x_i − x̄‖²`.
pub fn consensus_err(states: &[NodeState]) -> f64 {
    if states.is_empty() {
        return 0.0;
    }
    let d = states[0].d();
    let mean = states.iter().fold(DVector::zeros(d), |acc, s| acc + &s.x) / states.len() as f64;
    states.iter().map(|s| (&s.x - &mean).norm_squared()).sum()
}

/// Bregman divergence `d_F(x, x*)` of `F(x) = Σ f_i(x_i) − (ν/2)‖x‖²`.
pub fn bregman_f(states: &[NodeState], x_star: &DVector<f64>, objective: &Objective, nu: f64) -> f64 {
    states
        .iter()
        .enumerate()
        .map(|(i, s)| objective.bregman_fi(i, &s.x, x_star) - 0.5 * nu * (&s.x - x_star).norm_squared())
        .sum()
}

/// `Σ_k v_{·k}ᵀ P v_{·k}` for the `n × d` stack `v`.
fn stacked_quadratic(blocks: &[DVector<f64>], p: &DMatrix<f64>) -> f64 {
    let n = blocks.len();
    if n == 0 {
        return 0.0;
    }
    let d = blocks[0].len();
    (0..d)
        .map(|k| {
            let col = DVector::from_fn(n, |i, _| blocks[i][k]);
            col.dot(&(p * &col))
        })
        .sum()
}

/// The potential
/// `A‖x−x*‖² + Ã d_F(x,x*) + B‖y−y*‖² + B̃‖ỹ−y*‖² + C‖z+y−z*−y*‖² + C̃‖z̃−z*‖²_{Λ⁺}`
/// where `gossip_pinv` is `Λ(t)⁺` of the active gossip matrix.
pub fn lyapunov(
    states: &[NodeState],
    coeffs: &LyapunovCoefficients,
    cert: &SaddleCertificate,
    gossip_pinv: &DMatrix<f64>,
    objective: &Objective,
    nu: f64,
) -> Result<f64> {
    let n = states.len();
    if cert.y_star.len() != n || gossip_pinv.nrows() != n {
        return Err(Error::param("state, certificate and gossip matrix sizes differ"));
    }
    let xs = &cert.x_star;
    let mut dist_x = 0.0;
    let mut dist_y = 0.0;
    let mut dist_yt = 0.0;
    let mut dist_yz = 0.0;
    let mut zt_dev = Vec::with_capacity(n);
    for (i, s) in states.iter().enumerate() {
        dist_x += (&s.x - xs).norm_squared();
        dist_y += (&s.y - &cert.y_star[i]).norm_squared();
        dist_yt += (&s.y_t - &cert.y_star[i]).norm_squared();
        dist_yz += (&s.z + &s.y - &cert.z_star[i] - &cert.y_star[i]).norm_squared();
        zt_dev.push(&s.z_t - &cert.z_star[i]);
    }
    let breg = bregman_f(states, xs, objective, nu);
    let resist = stacked_quadratic(&zt_dev, gossip_pinv);
    Ok(coeffs.a * dist_x
        + coeffs.a_t * breg
        + coeffs.b * dist_y
        + coeffs.b_t * dist_yt
        + coeffs.c * dist_yz
        + coeffs.c_t * resist)
}

/// Streaming per-node mean of post-event `x` snapshots.
#[derive(Debug, Clone)]
pub struct RunningAverage {
    sums: Vec<DVector<f64>>,
    counts: Vec<u64>,
}

impl RunningAverage {
    pub fn new(n: usize, d: usize) -> Self {
        Self {
            sums: vec![DVector::zeros(d); n],
            counts: vec![0; n],
        }
    }

    pub fn push(&mut self, node: usize, x: &DVector<f64>) {
        self.sums[node] += x;
        self.counts[node] += 1;
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// `(1/n) Σ_i ‖(1/k_i) Σ_j x_j^(i) − x*‖²`.
    pub fn dist_sq(&self, x_star: &DVector<f64>) -> Result<f64> {
        if self.counts.contains(&0) {
            return Err(Error::param("running average needs at least one snapshot per node"));
        }
        let n = self.sums.len() as f64;
        Ok(self
            .sums
            .iter()
            .zip(&self.counts)
            .map(|(s, &k)| (s / k as f64 - x_star).norm_squared())
            .sum::<f64>()
            / n)
    }
}

/// Batch form of [`RunningAverage::dist_sq`].
pub fn running_avg_dist(histories: &[Vec<DVector<f64>>], x_star: &DVector<f64>) -> Result<f64> {
    if histories.is_empty() || histories.iter().any(|h| h.is_empty()) {
        return Err(Error::param("running average needs at least one snapshot per node"));
    }
    let total: f64 = histories
        .iter()
        .map(|h| {
            let mean = h.iter().fold(DVector::zeros(x_star.len()), |a, x| a + x) / h.len() as f64;
            (mean - x_star).norm_squared()
        })
        .sum();
    Ok(total / histories.len() as f64)
}
