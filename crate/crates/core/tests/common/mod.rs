#![allow(dead_code)]

use dadao::dynamics::drift::drift_rhs;
use dadao::dynamics::DadaoParams;
use dadao::graph::{build_laplacian, chi1, chi2, Graph};
use nalgebra::{DMatrix, DVector, Vector6};
use rand::Rng;

/// Connected graph on `n` nodes: a random spanning tree plus extra edges,
/// with weights in `[0.1, 2)`.
pub fn random_weighted_graph<R: Rng>(n: usize, rng: &mut R) -> Graph {
    let mut edges = Vec::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        edges.push((u, v));
    }
    let extra = rng.random_range(0..=n);
    for _ in 0..extra {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b && !edges.contains(&(a.min(b), a.max(b))) {
            edges.push((a.min(b), a.max(b)));
        }
    }
    Graph::new(n, edges.into_iter().map(|(a, b)| (a, b, rng.random_range(0.1..2.0)))).unwrap()
}

pub fn random_matrix<R: Rng>(r: usize, c: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn centered(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
    }
    out
}

fn edge_vector(n: usize, i: usize, j: usize) -> DVector<f64> {
    let mut u = DVector::zeros(n);
    u[i] = 1.0;
    u[j] = -1.0;
    u
}

/// Checks the connectivity-constant bounds, the spiking-contraction identity,
/// and the resistance inequality for one weighted graph and one stacked state
/// `x ∈ R^{n×d}`. Returns a description of the first violation.
pub fn check_graph_lemmas(g: &Graph, x: &DMatrix<f64>) -> Result<(), String> {
    let n = g.n();
    let lap = build_laplacian(g);
    let m = lap.matrix();
    let lmax = lap.largest_eigenvalue();
    let tol = 1e-9 * lmax.max(1.0);
    let trace = m.trace();
    let c1 = chi1(&lap).map_err(|e| e.to_string())?;
    let c2 = chi2(&lap, g).map_err(|e| e.to_string())?;
    let pinv = lap.pseudo_inverse();

    if let Some(ev) = lap.eigenvalues().iter().find(|&&v| v < -tol) {
        return Err(format!("negative eigenvalue {ev}"));
    }
    let lower = (n as f64 - 1.0) / trace;
    if lower > c1.min(c2) * (1.0 + 1e-9) {
        return Err(format!("(n-1)/Tr = {lower} > min(chi1, chi2) = {}", c1.min(c2)));
    }
    // Σ λ_ij R_ij = Tr(Λ⁺Λ) = n − 1
    let mut weighted_res = 0.0;
    let mut min_w = f64::INFINITY;
    for e in g.edges() {
        let u = edge_vector(n, e.i, e.j);
        weighted_res += e.weight * u.dot(&(pinv * &u));
        min_w = min_w.min(e.weight);
    }
    if (weighted_res - (n as f64 - 1.0)).abs() > 1e-8 * n as f64 {
        return Err(format!("sum of weighted resistances {weighted_res} != n-1"));
    }
    // c with c·λ_ij ≥ Tr/(2|E|) for every edge
    let ne = g.edge_count() as f64;
    let c = trace / (2.0 * ne * min_w);
    if c < 1.0 - 1e-12 {
        return Err(format!("c = {c} < 1"));
    }
    // λ_ij R_ij ≤ n − 1 with λ_ij ≥ Tr/(2c|E|) puts c in the numerator.
    let upper = c * (n as f64 - 1.0) * ne / trace;
    if c2 > upper * (1.0 + 1e-9) {
        return Err(format!("chi2 = {c2} > c(n-1)|E|/Tr = {upper}"));
    }
    let uniform = g.edges().iter().all(|e| (e.weight - min_w).abs() <= 1e-12 * min_w);
    let printed = (n as f64 - 1.0) * ne / (c * trace);
    if uniform && c2 > printed * (1.0 + 1e-9) {
        return Err(format!("chi2 = {c2} > (n-1)|E|/(c Tr) = {printed} with uniform weights"));
    }

    let px = centered(x);
    let px_sq = px.norm_squared();
    let quad = (x.transpose() * m * x).trace();
    // Expanded contraction: Σ λ_ij [‖πx‖² − ‖x_i − x_j‖² ... ] collapses to −xᵀΛx.
    let mut expanded = 0.0;
    let mut literal = 0.0;
    let mut half_step = 0.0;
    for e in g.edges() {
        let u = edge_vector(n, e.i, e.j);
        let uut_x = &u * (u.transpose() * x);
        let diff_sq = (x.row(e.i) - x.row(e.j)).norm_squared();
        let cross = px.dot(&uut_x);
        expanded += e.weight * ((px_sq + diff_sq - 2.0 * cross) - px_sq);
        literal += e.weight * ((&uut_x - &px).norm_squared() - px_sq);
        half_step += e.weight * ((&px - &uut_x * 0.5).norm_squared() - px_sq);
    }
    let scale = quad.abs().max(px_sq).max(1e-300);
    if (expanded + quad).abs() > 1e-9 * scale {
        return Err(format!("expanded contraction {expanded} != -x^T L x = {}", -quad));
    }
    if -quad > -px_sq / c1 + 1e-9 * scale {
        return Err(format!("-x^T L x = {} > -|pi x|^2/chi1 = {}", -quad, -px_sq / c1));
    }
    // With ‖uuᵀx‖² = 2‖x_i − x_j‖² the printed summand cancels exactly.
    if literal.abs() > 1e-9 * scale {
        return Err(format!("literal contraction sum {literal} != 0"));
    }
    // A half step along the edge contracts by exactly half of xᵀΛx.
    if (half_step + 0.5 * quad).abs() > 1e-9 * scale {
        return Err(format!("half-step contraction {half_step} != -x^T L x / 2"));
    }

    for e in g.edges() {
        let u = edge_vector(n, e.i, e.j);
        let v = &u * (u.transpose() * x);
        let lhs = (v.transpose() * pinv * &v).trace();
        let rhs = c2 * v.norm_squared();
        if lhs > rhs * (1.0 + 1e-9) + 1e-12 {
            return Err(format!("resistance bound {lhs} > {rhs} on edge ({}, {})", e.i, e.j));
        }
    }
    Ok(())
}

/// Classical RK4 on the six scalar drift equations with step close to `h`.
pub fn rk4(p: &DadaoParams, mut s: Vector6<f64>, t: f64, h: f64) -> Vector6<f64> {
    let steps = (t / h).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    for _ in 0..steps {
        let k1 = drift_rhs(p, &s);
        let k2 = drift_rhs(p, &(s + k1 * (h / 2.0)));
        let k3 = drift_rhs(p, &(s + k2 * (h / 2.0)));
        let k4 = drift_rhs(p, &(s + k3 * h));
        s += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    s
}

/// Largest `|Σ_i z_i|` and `|Σ_i z̃_i|` over a set of states.
pub fn span_residual(states: &[dadao::NodeState]) -> f64 {
    let d = states[0].d();
    let sum_z = states.iter().fold(DVector::zeros(d), |a, s| a + &s.z);
    let sum_zt = states.iter().fold(DVector::zeros(d), |a, s| a + &s.z_t);
    sum_z.norm().max(sum_zt.norm())
}

/// Magnitude scale of the `z` blocks.
pub fn span_scale(states: &[dadao::NodeState]) -> f64 {
    states
        .iter()
        .map(|s| s.z.norm().max(s.z_t.norm()))
        .fold(1.0, f64::max)
}
