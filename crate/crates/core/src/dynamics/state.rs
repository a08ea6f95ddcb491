use nalgebra::DVector;

use super::drift::DriftMatrix;
use super::DadaoParams;
use crate::{Error, Result};

/// The six `d`-dimensional blocks of one worker and the time they refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub x: DVector<f64>,
    pub x_t: DVector<f64>,
    pub y: DVector<f64>,
    pub y_t: DVector<f64>,
    pub z: DVector<f64>,
    pub z_t: DVector<f64>,
    pub last_update: f64,
}

impl NodeState {
    pub fn zeros(d: usize) -> Self {
        let z = DVector::zeros(d);
        Self {
            x: z.clone(),
            x_t: z.clone(),
            y: z.clone(),
            y_t: z.clone(),
            z: z.clone(),
            z_t: z,
            last_update: 0.0,
        }
    }

    pub fn d(&self) -> usize {
        self.x.len()
    }

    /// Blocks in drift-matrix order.
    pub fn blocks(&self) -> [&DVector<f64>; 6] {
        [&self.x, &self.x_t, &self.y, &self.y_t, &self.z, &self.z_t]
    }

    fn blocks_mut(&mut self) -> [&mut DVector<f64>; 6] {
        [
            &mut self.x,
            &mut self.x_t,
            &mut self.y,
            &mut self.y_t,
            &mut self.z,
            &mut self.z_t,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Advances the state to `to_time` with the exact flow `exp(Δt·𝒜) ⊗ I_d`.
    pub fn propagate_in_place(&mut self, to_time: f64, drift: &DriftMatrix) -> Result<()> {
        if to_time < self.last_update {
            return Err(Error::Ordering {
                from: self.last_update,
                to: to_time,
            });
        }
        let dt = to_time - self.last_update;
        if dt > 0.0 {
            let e = drift.propagator(dt);
            let d = self.d();
            let mut blocks = self.blocks_mut();
            for k in 0..d {
                let v: [f64; 6] = std::array::from_fn(|r| blocks[r][k]);
                for (r, block) in blocks.iter_mut().enumerate() {
                    block[k] = (0..6).map(|c| e[(r, c)] * v[c]).sum();
                }
            }
        }
        self.last_update = to_time;
        Ok(())
    }

    /// Applies a gradient spike: with `g = grad − νx − ỹ`,
    /// `x −= γg`, `x̃ −= γ̃g`, `ỹ += (δ + δ̃)g`.
    pub fn gradient_jump_in_place(&mut self, node: usize, grad: &DVector<f64>, p: &DadaoParams) -> Result<()> {
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { node });
        }
        let g = grad - &self.x * p.nu - &self.y_t;
        self.x.axpy(-p.gamma, &g, 1.0);
        self.x_t.axpy(-p.gamma_t, &g, 1.0);
        self.y_t.axpy(p.delta + p.delta_t, &g, 1.0);
        if !self.is_finite() {
            return Err(Error::NonFinite { node });
        }
        Ok(())
    }
}

pub fn propagate(s: &NodeState, to_time: f64, drift: &DriftMatrix) -> Result<NodeState> {
    let mut out = s.clone();
    out.propagate_in_place(to_time, drift)?;
    Ok(out)
}

pub fn gradient_jump(s: &NodeState, node: usize, grad: &DVector<f64>, p: &DadaoParams) -> Result<NodeState> {
    let mut out = s.clone();
    out.gradient_jump_in_place(node, grad, p)?;
    Ok(out)
}

/// Pairwise exchange on edge `(i, j)`: `m = (y_i + z_i) − (y_j + z_j)`,
/// `z_i −= βm`, `z̃_i −= β̃m`, `z_j += βm`, `z̃_j += β̃m`.
pub fn gossip_jump_in_place(si: &mut NodeState, sj: &mut NodeState, p: &DadaoParams) -> Result<()> {
    if si.last_update != sj.last_update {
        return Err(Error::Ordering {
            from: si.last_update,
            to: sj.last_update,
        });
    }
    let m = &si.y + &si.z - &sj.y - &sj.z;
    si.z.axpy(-p.beta, &m, 1.0);
    si.z_t.axpy(-p.beta_t, &m, 1.0);
    sj.z.axpy(p.beta, &m, 1.0);
    sj.z_t.axpy(p.beta_t, &m, 1.0);
    Ok(())
}

pub fn gossip_jump(si: &NodeState, sj: &NodeState, p: &DadaoParams) -> Result<(NodeState, NodeState)> {
    let (mut a, mut b) = (si.clone(), sj.clone());
    gossip_jump_in_place(&mut a, &mut b, p)?;
    Ok((a, b))
}
