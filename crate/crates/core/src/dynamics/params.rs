use crate::{Error, Result};

/// The scalar constants of the dynamics, resolved from `(μ, L, χ₁*)`.
///
/// Fields with a `_t` suffix are the tilde variants (`η̃`, `γ̃`, ...).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DadaoParams {
    pub mu: f64,
    pub l: f64,
    pub nu: f64,
    pub chi1_star: f64,
    pub eta: f64,
    pub eta_t: f64,
    pub gamma: f64,
    pub gamma_t: f64,
    pub delta: f64,
    pub delta_t: f64,
    pub alpha: f64,
    pub alpha_t: f64,
    pub beta: f64,
    pub beta_t: f64,
    pub theta: f64,
}

/// `ν = μ/2`, `τ = 1/8`, `γ = 1/(4L)` and everything that follows from them.
/// `χ₁*` is the connectivity constant of the rate-scaled gossip matrix and
/// only enters `β̃`.
pub fn params_from(mu: f64, l: f64, chi1_star: f64) -> Result<DadaoParams> {
    for (name, v) in [("mu", mu), ("L", l), ("chi1_star", chi1_star)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::param(format!("{name} must be positive and finite, got {v}")));
        }
    }
    if mu > l {
        return Err(Error::param(format!("need mu <= L, got mu={mu} > L={l}")));
    }
    let nu = mu / 2.0;
    let r = (nu / l).sqrt();
    Ok(DadaoParams {
        mu,
        l,
        nu,
        chi1_star,
        eta: r / 8.0,
        eta_t: r / 8.0,
        gamma: 1.0 / (4.0 * l),
        gamma_t: 1.0 / (4.0 * (nu * l).sqrt()),
        delta: r / 4.0,
        delta_t: 1.0,
        alpha: r / 4.0,
        alpha_t: r / 8.0,
        beta: 0.5,
        beta_t: 2.0 * chi1_star / r,
        theta: 0.5 / r,
    })
}

impl DadaoParams {
    /// Exponential rate `τ√(ν/L)` shared by the Lyapunov coefficients.
    pub fn lyapunov_rate(&self) -> f64 {
        (self.nu / self.l).sqrt() / 8.0
    }
}
