//! Graphs, gossip Laplacians and the spectral constants the method depends on.
//!
//! For a weighted undirected graph the gossip matrix is
//! `Λ = Σ_{(i,j)∈E} λ_ij (e_i − e_j)(e_i − e_j)ᵀ`. Two constants summarize it:
//!
//! * `χ₁ = 1 / λ₂(Λ)`, the inverse of the smallest eigenvalue on `1⊥`
//!   (instantaneous connectivity);
//! * `χ₂ = ½ max_{(i,j)∈E} (e_i − e_j)ᵀ Λ⁺ (e_i − e_j)`, half the largest
//!   effective resistance across a present edge.
//!
//! Everything is dense: the simulator targets a few hundred nodes at most.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::rng::{self, Stream};
use crate::{Error, Result};

/// Relative eigenvalue cutoff: `λ < RANK_TOL · λ_max` counts as zero.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Undirected graph with canonical edges (`i < j`) and nonnegative rates.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
}

impl Graph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut out: Vec<Edge> = Vec::new();
        for (a, b, w) in edges {
            if a == b {
                return Err(Error::param(format!("self-loop on node {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::param(format!("edge ({a},{b}) out of range for n={n}")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::param(format!("edge ({a},{b}) has invalid weight {w}")));
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            out.push(Edge { i, j, weight: w });
        }
        out.sort_by_key(|e| (e.i, e.j));
        if let Some(w) = out.windows(2).find(|w| (w[0].i, w[0].j) == (w[1].i, w[1].j)) {
            return Err(Error::param(format!("duplicate edge ({},{})", w[0].i, w[0].j)));
        }
        Ok(Self { n, edges: out })
    }

    /// Unit-weight graph from a list of pairs.
    pub fn unweighted(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        Self::new(n, pairs.into_iter().map(|(i, j)| (i, j, 1.0)))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// `Σ λ_ij`, i.e. half the trace of the Laplacian.
    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.n, self.edges.iter().map(|e| (e.i, e.j, e.weight * c)))
    }

    /// Connected components over edges with positive weight, each sorted,
    /// ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in self.edges.iter().filter(|e| e.weight > 0.0) {
            let (a, b) = (find(&mut parent, e.i), find(&mut parent, e.j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut slot = vec![usize::MAX; self.n];
        for v in 0..self.n {
            let r = find(&mut parent, v);
            if slot[r] == usize::MAX {
                slot[r] = groups.len();
                groups.push(Vec::new());
            }
            groups[slot[r]].push(v);
        }
        groups
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }
}

/// Dense Laplacian with its eigendecomposition and pseudo-inverse computed once.
#[derive(Debug, Clone)]
pub struct LaplacianMatrix {
    matrix: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    pinv: DMatrix<f64>,
}

impl LaplacianMatrix {
    /// Wraps an arbitrary symmetric PSD matrix (used for rescaled Laplacians).
    pub fn from_matrix(matrix: DMatrix<f64>) -> Self {
        let (eigenvalues, eigenvectors) = sorted_eigen(&matrix);
        let pinv = pinv_from_eigen(&eigenvalues, &eigenvectors);
        Self {
            matrix,
            eigenvalues,
            eigenvectors,
            pinv,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn pseudo_inverse(&self) -> &DMatrix<f64> {
        &self.pinv
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn largest_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(0.0, f64::max)
    }

    fn cutoff(&self) -> f64 {
        RANK_TOL * self.largest_eigenvalue()
    }

    /// Smallest eigenvalue on the complement of the all-ones vector.
    fn fiedler_value(&self) -> Result<f64> {
        if self.n() < 2 {
            return Err(Error::param("χ₁ needs at least two nodes"));
        }
        let l2 = self.eigenvalues[1];
        if l2 <= self.cutoff() {
            Err(Error::Disconnected)
        } else {
            Ok(l2)
        }
    }

    /// `c · Λ`, recomputing the decomposition.
    pub fn scaled(&self, c: f64) -> Self {
        Self::from_matrix(&self.matrix * c)
    }

    /// `xᵀ Λ⁺ x`.
    pub fn pinv_quadratic(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.pinv * x))
    }
}

fn sorted_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

fn pinv_from_eigen(values: &DVector<f64>, vectors: &DMatrix<f64>) -> DMatrix<f64> {
    let n = values.len();
    let cutoff = RANK_TOL * values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let lambda = values[k];
        if lambda.abs() <= cutoff || lambda == 0.0 {
            continue;
        }
        let v = vectors.column(k);
        out += (v * v.transpose()) / lambda;
    }
    out
}

/// `Σ λ_ij (e_i − e_j)(e_i − e_j)ᵀ`.
pub fn build_laplacian(g: &Graph) -> LaplacianMatrix {
    let n = g.n();
    let mut m = DMatrix::zeros(n, n);
    for e in g.edges() {
        m[(e.i, e.i)] += e.weight;
        m[(e.j, e.j)] += e.weight;
        m[(e.i, e.j)] -= e.weight;
        m[(e.j, e.i)] -= e.weight;
    }
    LaplacianMatrix::from_matrix(m)
}

/// Moore–Penrose pseudo-inverse of a symmetric PSD matrix.
pub fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, vectors) = sorted_eigen(m);
    pinv_from_eigen(&values, &vectors)
}

pub fn chi1(l: &LaplacianMatrix) -> Result<f64> {
    Ok(1.0 / l.fiedler_value()?)
}

/// Half the largest effective resistance over the edges of `g`.
pub fn chi2(l: &LaplacianMatrix, g: &Graph) -> Result<f64> {
    l.fiedler_value()?;
    let p = l.pseudo_inverse();
    let worst = g
        .edges()
        .iter()
        .map(|e| p[(e.i, e.i)] + p[(e.j, e.j)] - 2.0 * p[(e.i, e.j)])
        .fold(0.0, f64::max);
    Ok(0.5 * worst)
}

/// `λ₂ / λ_max`.
pub fn spectral_gap(l: &LaplacianMatrix) -> Result<f64> {
    Ok(l.fiedler_value()? / l.largest_eigenvalue())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralReport {
    pub chi1: f64,
    pub chi2: f64,
    pub spectral_gap: f64,
    pub trace: f64,
}

pub fn spectral_report(g: &Graph) -> Result<SpectralReport> {
    let l = build_laplacian(g);
    Ok(SpectralReport {
        chi1: chi1(&l)?,
        chi2: chi2(&l, g)?,
        spectral_gap: spectral_gap(&l)?,
        trace: l.trace(),
    })
}

/// How a graph Laplacian is normalized into a unit-rate gossip matrix before
/// `λ*` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// `ℒ / |E|`.
    #[default]
    EdgeCount,
    /// `ℒ / Σ λ_ij`; identical to `EdgeCount` for unit weights and invariant
    /// under rescaling of the weights.
    TotalRate,
}

impl Normalization {
    fn divisor(self, g: &Graph) -> f64 {
        match self {
            Normalization::EdgeCount => g.edge_count() as f64,
            Normalization::TotalRate => g.total_weight(),
        }
    }
}

/// Piecewise-constant sequence of graphs; graph `⌊t·f⌋ mod len` is active at `t`.
#[derive(Debug, Clone)]
pub struct TimeVaryingTopology {
    graphs: Vec<Graph>,
    laplacians: Vec<LaplacianMatrix>,
    switch_frequency: f64,
}

impl TimeVaryingTopology {
    pub fn new(graphs: Vec<Graph>, switch_frequency: f64) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::param("topology needs at least one graph"));
        }
        if !(switch_frequency.is_finite() && switch_frequency > 0.0) {
            return Err(Error::param(format!(
                "switch frequency must be positive, got {switch_frequency}"
            )));
        }
        let n = graphs[0].n();
        if graphs.iter().any(|g| g.n() != n) {
            return Err(Error::param("all graphs in a topology must share n"));
        }
        if graphs.iter().any(|g| !g.is_connected()) {
            return Err(Error::Disconnected);
        }
        let laplacians = graphs.iter().map(build_laplacian).collect();
        Ok(Self {
            graphs,
            laplacians,
            switch_frequency,
        })
    }

    pub fn fixed(g: Graph) -> Result<Self> {
        Self::new(vec![g], 1.0)
    }

    pub fn n(&self) -> usize {
        self.graphs[0].n()
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn laplacians(&self) -> &[LaplacianMatrix] {
        &self.laplacians
    }

    pub fn switch_frequency(&self) -> f64 {
        self.switch_frequency
    }

    pub fn index_at(&self, t: f64) -> usize {
        let slot = (t * self.switch_frequency).floor();
        if slot <= 0.0 {
            0
        } else {
            (slot as u64 % self.graphs.len() as u64) as usize
        }
    }

    pub fn active(&self, t: f64) -> &Graph {
        &self.graphs[self.index_at(t)]
    }

    /// `(sup_t χ₁[ℒ/N], sup_t χ₂[ℒ/N])` for the chosen normalization `N`.
    pub fn normalized_constants(&self, norm: Normalization) -> Result<(f64, f64)> {
        let mut c1: f64 = 0.0;
        let mut c2: f64 = 0.0;
        for (g, l) in self.graphs.iter().zip(&self.laplacians) {
            // χ(L / s) = s · χ(L)
            let s = norm.divisor(g);
            c1 = c1.max(s * chi1(l)?);
            c2 = c2.max(s * chi2(l, g)?);
        }
        Ok((c1, c2))
    }

    /// `λ* = sqrt(2 · sup χ₁[ℒ/|E|] · sup χ₂[ℒ/|E|])`.
    pub fn lambda_star(&self) -> Result<f64> {
        self.lambda_star_with(Normalization::EdgeCount)
    }

    pub fn lambda_star_with(&self, norm: Normalization) -> Result<f64> {
        let (c1, c2) = self.normalized_constants(norm)?;
        Ok((2.0 * c1 * c2).sqrt())
    }

    /// Gossip matrix `Λ = (rate / Σλ_ij) · ℒ` of graph `index` when edges fire
    /// proportionally to their weight under a global communication rate.
    pub fn gossip_matrix(&self, index: usize, rate: f64) -> LaplacianMatrix {
        let g = &self.graphs[index];
        self.laplacians[index].scaled(rate / g.total_weight())
    }

    /// `(sup χ₁[Λ], sup χ₂[Λ])` of the rate-scaled gossip matrices.
    pub fn gossip_constants(&self, rate: f64) -> Result<(f64, f64)> {
        let (c1, c2) = self.normalized_constants(Normalization::TotalRate)?;
        Ok((c1 / rate, c2 / rate))
    }
}

pub fn lambda_star(topo: &TimeVaryingTopology) -> Result<f64> {
    topo.lambda_star()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraphKind {
    Star,
    Line,
    Cycle,
    Complete,
    Grid { dim: u32 },
    RandomGeometric { radius: f64 },
}

pub fn generate(kind: GraphKind, n: usize, seed: u64) -> Result<Graph> {
    let mut rng = rng::stream(seed, Stream::Graph);
    generate_with(kind, n, &mut rng)
}

/// `count` graphs drawn from one generator stream.
pub fn generate_sequence(kind: GraphKind, n: usize, count: usize, seed: u64) -> Result<Vec<Graph>> {
    let mut rng = rng::stream(seed, Stream::Graph);
    (0..count).map(|_| generate_with(kind, n, &mut rng)).collect()
}

pub fn generate_with<R: Rng + ?Sized>(kind: GraphKind, n: usize, rng: &mut R) -> Result<Graph> {
    if n < 2 {
        return Err(Error::param(format!("graph needs n >= 2, got {n}")));
    }
    match kind {
        GraphKind::Star => Graph::unweighted(n, (1..n).map(|k| (0, k))),
        GraphKind::Line => Graph::unweighted(n, (0..n - 1).map(|k| (k, k + 1))),
        GraphKind::Cycle => {
            if n < 3 {
                return Err(Error::param("cycle needs n >= 3"));
            }
            Graph::unweighted(n, (0..n).map(|k| (k, (k + 1) % n)))
        }
        GraphKind::Complete => {
            Graph::unweighted(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
        }
        GraphKind::Grid { dim } => grid(n, dim),
        GraphKind::RandomGeometric { radius } => random_geometric(n, radius, rng),
    }
}

fn grid(n: usize, dim: u32) -> Result<Graph> {
    if dim == 0 {
        return Err(Error::param("grid dimension must be >= 1"));
    }
    let side = (n as f64).powf(1.0 / dim as f64).round() as usize;
    if side < 2 || side.pow(dim) != n {
        return Err(Error::param(format!("n={n} is not a perfect {dim}-th power")));
    }
    let mut pairs = Vec::new();
    for v in 0..n {
        let mut stride = 1;
        for _ in 0..dim {
            if (v / stride) % side + 1 < side {
                pairs.push((v, v + stride));
            }
            stride *= side;
        }
    }
    Graph::unweighted(n, pairs)
}

fn random_geometric<R: Rng + ?Sized>(n: usize, radius: f64, rng: &mut R) -> Result<Graph> {
    if !(radius > 0.0 && radius <= std::f64::consts::SQRT_2) {
        return Err(Error::param(format!("radius must lie in (0, √2], got {radius}")));
    }
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
            if (dx * dx + dy * dy).sqrt() < radius {
                pairs.push((i, j));
            }
        }
    }
    // Stitch components in order: one random node of each to one of the next.
    let comps = Graph::unweighted(n, pairs.iter().copied())?.components();
    for w in comps.windows(2) {
        let a = *w[0].choose(rng).expect("component is nonempty");
        let b = *w[1].choose(rng).expect("component is nonempty");
        pairs.push((a, b));
    }
    Graph::unweighted(n, pairs)
}

// ---------------------------------------------------------------------------
// Edge-list format
//
//   n <count> f <frequency>
//   graph 0
//   i j weight
//   ...
//   graph 1
//   ...

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_topology(topo: &TimeVaryingTopology) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "n {} f {}", topo.n(), fmt_f64(topo.switch_frequency()));
    for (k, g) in topo.graphs().iter().enumerate() {
        let _ = writeln!(s, "graph {k}");
        for e in g.edges() {
            let _ = writeln!(s, "{} {} {}", e.i, e.j, fmt_f64(e.weight));
        }
    }
    s
}

pub fn parse_topology(text: &str) -> Result<TimeVaryingTopology> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hl, header) = lines.next().ok_or_else(|| Error::parse(1, "empty input"))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 4 || h[0] != "n" || h[2] != "f" {
        return Err(Error::parse(hl, "expected header `n <count> f <frequency>`"));
    }
    let n: usize = h[1].parse().map_err(|_| Error::parse(hl, "bad node count"))?;
    let f: f64 = h[3].parse().map_err(|_| Error::parse(hl, "bad frequency"))?;

    let mut blocks: Vec<Vec<(usize, usize, f64)>> = Vec::new();
    for (ln, line) in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok[0] == "graph" {
            let idx: usize = tok
                .get(1)
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::parse(ln, "bad graph index"))?;
            if idx != blocks.len() {
                return Err(Error::parse(ln, format!("expected graph {}", blocks.len())));
            }
            blocks.push(Vec::new());
            continue;
        }
        let block = blocks
            .last_mut()
            .ok_or_else(|| Error::parse(ln, "edge before first `graph` line"))?;
        if !(2..=3).contains(&tok.len()) {
            return Err(Error::parse(ln, "expected `i j [weight]`"));
        }
        let i = tok[0].parse().map_err(|_| Error::parse(ln, "bad node index"))?;
        let j = tok[1].parse().map_err(|_| Error::parse(ln, "bad node index"))?;
        let w = match tok.get(2) {
            Some(t) => t.parse().map_err(|_| Error::parse(ln, "bad weight"))?,
            None => 1.0,
        };
        block.push((i, j, w));
    }
    let graphs = blocks
        .into_iter()
        .map(|b| Graph::new(n, b))
        .collect::<Result<Vec<_>>>()?;
    TimeVaryingTopology::new(graphs, f)
}

pub fn read_topology(path: impl AsRef<Path>) -> Result<TimeVaryingTopology> {
    parse_topology(&std::fs::read_to_string(path)?)
}

pub fn save_topology(topo: &TimeVaryingTopology, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_topology(topo))?;
    Ok(())
}
