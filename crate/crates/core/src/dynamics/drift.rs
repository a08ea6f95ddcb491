//! The per-node linear drift and its exact propagator.
//!
//! State ordering is `(x, x̃, y, ỹ, z, z̃)`. Between events each node obeys
//!
//! ```text
//! dx  = η(x̃ − x)            dy = α(ỹ − y)             dz  = α(z̃ − z)
//! dx̃  = η̃(x − x̃)            dỹ = −θ(y + z + νx̃)       dz̃  = α̃(z − z̃)
//! ```
//!
//! applied coordinate-wise, so the `d`-dimensional flow is `exp(Δt·𝒜) ⊗ I_d`.

use nalgebra::{Matrix6, Vector6};

use super::DadaoParams;

pub const X: usize = 0;
pub const X_T: usize = 1;
pub const Y: usize = 2;
pub const Y_T: usize = 3;
pub const Z: usize = 4;
pub const Z_T: usize = 5;

/// Right-hand side of the six scalar drift equations.
pub fn drift_rhs(p: &DadaoParams, s: &Vector6<f64>) -> Vector6<f64> {
    Vector6::new(
        p.eta * (s[X_T] - s[X]),
        p.eta_t * (s[X] - s[X_T]),
        p.alpha * (s[Y_T] - s[Y]),
        -p.theta * (s[Y] + s[Z] + p.nu * s[X_T]),
        p.alpha * (s[Z_T] - s[Z]),
        p.alpha_t * (s[Z] - s[Z_T]),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftMatrix {
    a: Matrix6<f64>,
}

impl DriftMatrix {
    pub fn new(p: &DadaoParams) -> Self {
        let (eta, eta_t, alpha, alpha_t, theta, nu) =
            (p.eta, p.eta_t, p.alpha, p.alpha_t, p.theta, p.nu);
        #[rustfmt::skip]
        let a = Matrix6::new(
            -eta,   eta,         0.0,    0.0,    0.0,      0.0,
            eta_t,  -eta_t,      0.0,    0.0,    0.0,      0.0,
            0.0,    0.0,         -alpha, alpha,  0.0,      0.0,
            0.0,    -theta * nu, -theta, 0.0,    -theta,   0.0,
            0.0,    0.0,         0.0,    0.0,    -alpha,   alpha,
            0.0,    0.0,         0.0,    0.0,    alpha_t,  -alpha_t,
        );
        // Each column must be the drift of the corresponding unit state.
        for k in 0..6 {
            let col = drift_rhs(p, &Vector6::ith(k, 1.0));
            assert_eq!(a.column(k), col.column(0), "drift matrix column {k} disagrees with the ODE");
        }
        Self { a }
    }

    pub fn matrix(&self) -> &Matrix6<f64> {
        &self.a
    }

    /// `exp(dt · 𝒜)`.
    pub fn propagator(&self, dt: f64) -> Matrix6<f64> {
        if dt == 0.0 {
            return Matrix6::identity();
        }
        expm6(&(self.a * dt))
    }
}

pub fn drift_matrix(p: &DadaoParams) -> DriftMatrix {
    DriftMatrix::new(p)
}

// Padé [13/13] coefficients.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Scaling-and-squaring matrix exponential with a degree-13 Padé approximant.
pub fn expm6(a: &Matrix6<f64>) -> Matrix6<f64> {
    let norm1 = (0..6)
        .map(|c| a.column(c).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let s = if norm1 > THETA13 {
        (norm1 / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a * 2f64.powi(-s);
    let b = &PADE13;
    let id = Matrix6::<f64>::identity();
    let a2 = a * a;
    let a4 = a2 * a2;
    let a6 = a4 * a2;
    let u = a * (a6 * (a6 * b[13] + a4 * b[11] + a2 * b[9]) + a6 * b[7] + a4 * b[5] + a2 * b[3] + id * b[1]);
    let v = a6 * (a6 * b[12] + a4 * b[10] + a2 * b[8]) + a6 * b[6] + a4 * b[4] + a2 * b[2] + id * b[0];
    let mut r = (v - u)
        .lu()
        .solve(&(v + u))
        .expect("Padé denominator is nonsingular after scaling");
    for _ in 0..s {
        r = r * r;
    }
    r
}
