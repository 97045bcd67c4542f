//! Model parameters and samplers for SFP, IGIRG/GIRG and threshold graphs.

mod sampler;

use crate::geometry::{dist, CellIndex, Cube, Point, Topology};
use crate::rng::{self, hash_unit, Purpose};
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use std::f64::consts::E;
use thiserror::Error;

pub use sampler::{expected_edge_count, sample_edges};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("expected edge count {expected:.3e} exceeds the cap {cap:.3e}")]
    MemoryBudget { expected: f64, cap: f64 },
    #[error("thetas must be a probability vector (sum {0})")]
    BadThetas(f64),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

/// Slowly varying correction in the weight tail `P(W > w) = ell(w) w^{-(tau-1)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Ell {
    One,
    /// `(log(e + w) / log(e + 1))^a`, normalised so that `ell(1) = 1`.
    LogPower { a: f64 },
}

impl Ell {
    pub fn eval(&self, w: f64) -> f64 {
        match *self {
            Ell::One => 1.0,
            Ell::LogPower { a } => ((E + w).ln() / (E + 1.0).ln()).powf(a),
        }
    }

    /// Infimum over `[lo, hi]`; both shipped variants are monotone.
    pub fn inf_on(&self, lo: f64, hi: f64) -> f64 {
        self.eval(lo).min(self.eval(hi))
    }

    pub fn sup_on(&self, lo: f64, hi: f64) -> f64 {
        self.eval(lo).max(self.eval(hi))
    }
}

/// Distribution of the edge factors `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LDist {
    /// `F_L(t) = t^beta` on `[0, 1]`.
    Power { beta: f64 },
    /// `F_L(t) = 1 - exp(-rate t)`; behaves like `beta = 1` near zero.
    Exponential { rate: f64 },
    /// `L = value`; the `beta = infinity` case.
    Constant { value: f64 },
}

impl LDist {
    pub fn beta(&self) -> f64 {
        match *self {
            LDist::Power { beta } => beta,
            LDist::Exponential { .. } => 1.0,
            LDist::Constant { .. } => f64::INFINITY,
        }
    }

    /// Inverse CDF at `u` in (0, 1].
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            LDist::Power { beta } => u.powf(1.0 / beta),
            LDist::Exponential { rate } => -(-u).ln_1p() / rate,
            LDist::Constant { value } => value,
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match *self {
            LDist::Power { beta } => t.clamp(0.0, 1.0).powf(beta),
            LDist::Exponential { rate } => 1.0 - (-rate * t.max(0.0)).exp(),
            LDist::Constant { value } => {
                if t >= value {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VertexModel {
    /// Integer lattice points (scale-free percolation).
    Lattice,
    /// Uniform points: Poisson count, or a fixed count when `n_target` is given.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TopologyKind {
    Euclidean,
    Torus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub d: usize,
    pub tau: f64,
    /// `f64::INFINITY` selects the threshold kernel.
    pub alpha: f64,
    pub mu: f64,
    /// Kernel constant used by the generator.
    pub c: f64,
    pub c_lower: f64,
    pub c_upper: f64,
    pub ell: Ell,
    pub l_dist: LDist,
    pub vertex_model: VertexModel,
    pub topology: TopologyKind,
}

impl ModelParams {
    /// Reference parameters: `d = 2`, exponential `L`, lattice torus.
    pub fn reference(mu: f64) -> Self {
        ModelParams {
            d: 2,
            tau: 2.3,
            alpha: 5.0,
            mu,
            c: 1.0,
            c_lower: 1.0,
            c_upper: 1.0,
            ell: Ell::One,
            l_dist: LDist::Exponential { rate: 1.0 },
            vertex_model: VertexModel::Lattice,
            topology: TopologyKind::Torus,
        }
    }

    pub fn girg(d: usize, tau: f64, alpha: f64, mu: f64) -> Self {
        ModelParams {
            d,
            tau,
            alpha,
            mu,
            c: 1.0,
            c_lower: 1.0,
            c_upper: 1.0,
            ell: Ell::One,
            l_dist: LDist::Exponential { rate: 1.0 },
            vertex_model: VertexModel::Poisson,
            topology: TopologyKind::Euclidean,
        }
    }

    pub fn beta(&self) -> f64 {
        self.l_dist.beta()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidParam(m.to_string()));
        if self.d == 0 {
            return bad("d must be at least 1");
        }
        if !(self.tau > 2.0) || !self.tau.is_finite() {
            return bad("tau must be finite and > 2");
        }
        if !(self.alpha > 1.0) {
            return bad("alpha must be > 1");
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return bad("mu must be finite and >= 0");
        }
        if !(self.c > 0.0 && self.c <= 1.0) {
            return bad("kernel constant must lie in (0, 1]");
        }
        if !(self.c_lower <= self.c && self.c <= self.c_upper) {
            return bad("kernel constant must lie in [c_lower, c_upper]");
        }
        if let Ell::LogPower { a } = self.ell {
            // Keeps ell(w) w^{-(tau-1)} strictly decreasing, hence invertible.
            if !(a < self.tau - 1.0) || !a.is_finite() {
                return bad("ell exponent must be < tau - 1");
            }
        }
        match self.l_dist {
            LDist::Power { beta } if !(beta > 0.0) || !beta.is_finite() => bad("beta must be > 0"),
            LDist::Exponential { rate } if !(rate > 0.0) || !rate.is_finite() => {
                bad("rate must be > 0")
            }
            LDist::Constant { value } if !(value > 0.0) || !value.is_finite() => {
                bad("constant L must be > 0")
            }
            _ => Ok(()),
        }
    }

    pub fn topology_for(&self, cube: &Cube) -> Topology {
        match self.topology {
            TopologyKind::Euclidean => Topology::Euclidean,
            TopologyKind::Torus => Topology::Torus { side: cube.side },
        }
    }

    /// Tail `P(W > w)`.
    pub fn weight_tail(&self, w: f64) -> f64 {
        if w < 1.0 {
            1.0
        } else {
            self.ell.eval(w) * w.powf(-(self.tau - 1.0))
        }
    }

    /// `E[W]`: closed form for `ell = 1`, quadrature otherwise.
    pub fn mean_weight(&self) -> f64 {
        match self.ell {
            Ell::One => (self.tau - 1.0) / (self.tau - 2.0),
            Ell::LogPower { .. } => {
                // E[W] = 1 + int_1^inf P(W > w) dw; substitute w = e^s.
                let g = |s: f64| self.weight_tail(s.exp()) * s.exp();
                let upper = 80.0 / (self.tau - 2.0);
                let n = 200_000usize;
                let h = upper / n as f64;
                let mut acc = g(0.0) + g(upper);
                for i in 1..n {
                    let s = i as f64 * h;
                    acc += if i % 2 == 1 { 4.0 } else { 2.0 } * g(s);
                }
                1.0 + acc * h / 3.0
            }
        }
    }

    /// Inverse-CDF weight for a uniform `u` in (0, 1].
    pub fn weight_quantile(&self, u: f64) -> f64 {
        match self.ell {
            Ell::One => u.powf(-1.0 / (self.tau - 1.0)),
            Ell::LogPower { .. } => {
                if u >= 1.0 {
                    return 1.0;
                }
                // Solve tail(w) = u on log-scale.
                let mut lo = 0.0f64;
                let mut hi = 1.0f64;
                while self.weight_tail(hi.exp()) > u {
                    hi *= 2.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.weight_tail(mid.exp()) > u {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo < 1e-15 * hi.max(1.0) {
                        break;
                    }
                }
                hi.exp()
            }
        }
    }

    /// Connection probability for distance `r` and weights `w1`, `w2`.
    pub fn connection_prob(&self, r: f64, w1: f64, w2: f64, mean_weight: f64) -> f64 {
        self.connection_prob_rd(r.powi(self.d as i32), w1, w2, mean_weight)
    }

    /// Same as [`Self::connection_prob`] with `r^d` precomputed.
    #[inline]
    pub fn connection_prob_rd(&self, rd: f64, w1: f64, w2: f64, mean_weight: f64) -> f64 {
        if self.alpha.is_infinite() {
            if w1 * w2 >= rd {
                self.c_lower
            } else {
                0.0
            }
        } else {
            let x = w1 * w2 / (mean_weight * rd);
            if x >= 1.0 {
                self.c
            } else if self.alpha.fract() == 0.0 && self.alpha <= 16.0 {
                self.c * x.powi(self.alpha as i32)
            } else {
                self.c * x.powf(self.alpha)
            }
        }
    }
}

/// Checked connection probability.
pub fn connection_prob(r: f64, w1: f64, w2: f64, params: &ModelParams) -> Result<f64, ModelError> {
    if !(r > 0.0) {
        return Err(ModelError::InvalidParam("distance must be > 0".into()));
    }
    Ok(params.connection_prob(r, w1, w2, params.mean_weight()))
}

/// Weight for a uniform draw from `rng`.
pub fn sample_weight<R: rand::Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> f64 {
    params.weight_quantile(rng::open01(rng))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedVertex {
    pub id: usize,
    pub pos: Point,
    pub weight: f64,
}

/// Realized weighted vertex set in flat layout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VertexSet {
    pub d: usize,
    pub coords: Vec<f64>,
    pub weights: Vec<f64>,
}

impl VertexSet {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn pos(&self, v: usize) -> &[f64] {
        &self.coords[v * self.d..(v + 1) * self.d]
    }

    pub fn push(&mut self, pos: &[f64], w: f64) {
        self.coords.extend_from_slice(pos);
        self.weights.push(w);
    }
}

/// Undirected edge with `u < v` and its factor `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: u32,
    pub v: u32,
    pub l: f64,
}

#[inline]
pub fn pair_key(u: u32, v: u32) -> u64 {
    let (a, b) = if u < v { (u, v) } else { (v, u) };
    ((a as u64) << 32) | b as u64
}

#[derive(Debug, Clone)]
pub struct GraphRealization {
    pub params: ModelParams,
    pub cube: Cube,
    pub vertices: VertexSet,
    pub edges: Vec<Edge>,
    pub index: CellIndex,
    pub seed: u64,
}

impl GraphRealization {
    /// Assembles a realization, sorting edges and checking the invariants.
    pub fn from_parts(
        params: ModelParams,
        cube: Cube,
        vertices: VertexSet,
        mut edges: Vec<Edge>,
        seed: u64,
    ) -> Result<Self, ModelError> {
        params.validate()?;
        if vertices.d != params.d || cube.dim() != params.d {
            return Err(ModelError::InvalidParam("dimension mismatch".into()));
        }
        let n = vertices.len() as u32;
        for e in edges.iter_mut() {
            if e.u > e.v {
                std::mem::swap(&mut e.u, &mut e.v);
            }
            if e.u == e.v || e.v >= n || !(e.l > 0.0) {
                return Err(ModelError::InvalidParam(format!("bad edge {}-{}", e.u, e.v)));
            }
        }
        edges.sort_unstable_by_key(|e| pair_key(e.u, e.v));
        if edges.windows(2).any(|w| w[0].u == w[1].u && w[0].v == w[1].v) {
            return Err(ModelError::InvalidParam("duplicate edge".into()));
        }
        let topo = params.topology_for(&cube);
        let index = CellIndex::build(&vertices.coords, &cube, topo, None);
        Ok(GraphRealization { params, cube, vertices, edges, index, seed })
    }

    pub fn n(&self) -> usize {
        self.vertices.len()
    }

    pub fn topology(&self) -> Topology {
        self.index.topology()
    }

    pub fn pos(&self, v: usize) -> &[f64] {
        self.vertices.pos(v)
    }

    pub fn weight(&self, v: usize) -> f64 {
        self.vertices.weights[v]
    }

    pub fn vertex(&self, v: usize) -> WeightedVertex {
        WeightedVertex { id: v, pos: Point(self.pos(v).to_vec()), weight: self.weight(v) }
    }

    pub fn dist(&self, u: usize, v: usize) -> f64 {
        dist(self.pos(u), self.pos(v), self.topology())
    }

    /// Same vertices and parameters, different edge list.
    pub fn with_edges(&self, edges: Vec<Edge>) -> Result<Self, ModelError> {
        GraphRealization::from_parts(
            self.params.clone(),
            self.cube.clone(),
            self.vertices.clone(),
            edges,
            self.seed,
        )
    }
}

/// Samples positions and weights.
pub fn sample_vertices(
    params: &ModelParams,
    cube: &Cube,
    n_target: Option<usize>,
    seed: u64,
) -> Result<VertexSet, ModelError> {
    params.validate()?;
    let d = params.d;
    if cube.dim() != d {
        return Err(ModelError::InvalidParam("cube dimension differs from d".into()));
    }
    if cube.volume() < 1.0 {
        return Err(ModelError::InvalidParam("cube volume must be at least 1".into()));
    }
    let mut vs = VertexSet { d, ..Default::default() };
    match params.vertex_model {
        VertexModel::Lattice => {
            let axes: Vec<Vec<f64>> = cube
                .min
                .0
                .iter()
                .map(|&m| {
                    let mut k = m.ceil();
                    let mut pts = Vec::new();
                    while k < m + cube.side {
                        pts.push(k);
                        k += 1.0;
                    }
                    pts
                })
                .collect();
            let per: Vec<usize> = axes.iter().map(Vec::len).collect();
            let total: usize = per.iter().product();
            let mut pos = vec![0.0; d];
            for i in 0..total {
                let mut r = i;
                for a in 0..d {
                    pos[a] = axes[a][r % per[a]];
                    r /= per[a];
                }
                vs.push(&pos, 1.0);
            }
        }
        VertexModel::Poisson => {
            let n = match n_target {
                Some(n) => n,
                None => {
                    let mut r = rng::stream(seed, Purpose::Count, 0);
                    Poisson::new(cube.volume())
                        .map_err(|e| ModelError::InvalidParam(e.to_string()))?
                        .sample(&mut r) as usize
                }
            };
            let mut pos = vec![0.0; d];
            for i in 0..n {
                for a in 0..d {
                    // hash_unit is in (0, 1]; reflect to [0, 1).
                    let u = 1.0 - hash_unit(seed, Purpose::Position, i as u64, a as u64);
                    pos[a] = cube.min.0[a] + u * cube.side;
                }
                vs.push(&pos, 1.0);
            }
        }
    }
    if vs.len() > u32::MAX as usize {
        return Err(ModelError::InvalidParam("too many vertices".into()));
    }
    for (i, w) in vs.weights.iter_mut().enumerate() {
        *w = params.weight_quantile(hash_unit(seed, Purpose::Weight, i as u64, 0));
    }
    Ok(vs)
}

/// Options for edge sampling.
#[derive(Debug, Clone, Copy)]
pub struct SampleOptions {
    /// Refuse to sample when the expected number of edges exceeds this.
    pub max_expected_edges: f64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions { max_expected_edges: 2.0e8 }
    }
}

/// Samples a full realization.
pub fn sample_graph(
    params: &ModelParams,
    cube: &Cube,
    n_target: Option<usize>,
    seed: u64,
) -> Result<GraphRealization, ModelError> {
    sample_graph_with(params, cube, n_target, seed, SampleOptions::default())
}

pub fn sample_graph_with(
    params: &ModelParams,
    cube: &Cube,
    n_target: Option<usize>,
    seed: u64,
    opts: SampleOptions,
) -> Result<GraphRealization, ModelError> {
    let vs = sample_vertices(params, cube, n_target, seed)?;
    graph_on_vertices(params, cube, vs, seed, opts)
}

/// Samples edges on a fixed weighted vertex set (e.g. with planted vertices).
pub fn graph_on_vertices(
    params: &ModelParams,
    cube: &Cube,
    vs: VertexSet,
    seed: u64,
    opts: SampleOptions,
) -> Result<GraphRealization, ModelError> {
    params.validate()?;
    let expected = expected_edge_count(params, cube, &vs);
    if expected > opts.max_expected_edges {
        return Err(ModelError::MemoryBudget { expected, cap: opts.max_expected_edges });
    }
    let edges = sample_edges(params, cube, &vs, seed, 0);
    GraphRealization::from_parts(params.clone(), cube.clone(), vs, edges, seed)
}

/// Independent `theta`-percolation of the edge set; `L` values are kept.
pub fn percolate(g: &GraphRealization, theta: f64, seed: u64) -> Result<GraphRealization, ModelError> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(ModelError::InvalidParam("theta must lie in [0, 1]".into()));
    }
    let kept = g
        .edges
        .iter()
        .copied()
        .filter(|e| hash_unit(seed, Purpose::Percolate, pair_key(e.u, e.v), 0) <= theta)
        .collect();
    g.with_edges(kept)
}

/// Edge-disjoint slices of a graph together with each union edge's label.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureSlices {
    pub slices: Vec<Vec<Edge>>,
    /// Label of each edge of the union graph, aligned with its sorted edge list.
    pub labels: Vec<u16>,
}

impl ExposureSlices {
    pub fn rounds(&self) -> usize {
        self.slices.len()
    }

    /// Structural invariant: disjoint slices whose union is `edges`.
    pub fn check(&self, edges: &[Edge]) -> bool {
        let mut all: Vec<(u64, usize)> = self
            .slices
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.iter().map(move |e| (pair_key(e.u, e.v), i)))
            .collect();
        all.sort_unstable();
        if all.windows(2).any(|w| w[0].0 == w[1].0) || all.len() != edges.len() {
            return false;
        }
        edges
            .iter()
            .zip(&self.labels)
            .all(|(e, &z)| all.binary_search(&(pair_key(e.u, e.v), z as usize)).is_ok())
    }
}

fn validate_thetas(thetas: &[f64]) -> Result<(), ModelError> {
    let s: f64 = thetas.iter().sum();
    if thetas.is_empty() || thetas.iter().any(|t| !(*t >= 0.0)) || (s - 1.0).abs() > 1e-12 {
        return Err(ModelError::BadThetas(s));
    }
    Ok(())
}

/// Categorical draw from a uniform in (0, 1].
fn categorical(thetas: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, t) in thetas.iter().enumerate() {
        acc += t;
        if u <= acc {
            return i;
        }
    }
    thetas.len() - 1
}

/// Exposure setting: `r` conditionally iid copies `G_i*` on the same weighted
/// vertex set, labels `Z_e ~ categorical(thetas)`, slice `i` keeps the edges of
/// `G_i*` labelled `i`, and the union takes each edge's `L` from its slice.
pub fn exposure_split(
    vertices: VertexSet,
    thetas: &[f64],
    params: &ModelParams,
    cube: &Cube,
    seed: u64,
) -> Result<(GraphRealization, ExposureSlices), ModelError> {
    validate_thetas(thetas)?;
    params.validate()?;
    let mut slices = Vec::with_capacity(thetas.len());
    for i in 0..thetas.len() {
        let copy = sample_edges(params, cube, &vertices, seed, i as u64 + 1);
        let slice: Vec<Edge> = copy
            .into_iter()
            .filter(|e| {
                let u = hash_unit(seed, Purpose::Label, pair_key(e.u, e.v), 0);
                categorical(thetas, u) == i
            })
            .collect();
        slices.push(slice);
    }
    let mut union: Vec<(Edge, u16)> = slices
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.iter().map(move |e| (*e, i as u16)))
        .collect();
    union.sort_unstable_by_key(|(e, _)| pair_key(e.u, e.v));
    let labels = union.iter().map(|(_, z)| *z).collect();
    let g = GraphRealization::from_parts(
        params.clone(),
        cube.clone(),
        vertices,
        union.into_iter().map(|(e, _)| e).collect(),
        seed,
    )?;
    let ex = ExposureSlices { slices, labels };
    debug_assert!(ex.check(&g.edges));
    Ok((g, ex))
}

/// Labels the edges of an existing realization iid by `thetas`.
///
/// The pair (union, slices) has the same law as in [`exposure_split`]: an edge is
/// in the union with probability `h`, and given that, its label is `i` with
/// probability `theta_i h / h = theta_i`, independently over pairs.
pub fn label_edges(g: &GraphRealization, thetas: &[f64], seed: u64) -> Result<ExposureSlices, ModelError> {
    validate_thetas(thetas)?;
    let mut slices = vec![Vec::new(); thetas.len()];
    let mut labels = Vec::with_capacity(g.edges.len());
    for e in &g.edges {
        let z = categorical(thetas, hash_unit(seed, Purpose::Label, pair_key(e.u, e.v), 1));
        slices[z].push(*e);
        labels.push(z as u16);
    }
    Ok(ExposureSlices { slices, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn weight_quantile_examples() {
        let p = ModelParams::girg(2, 3.0, 2.0, 0.0);
        assert_eq!(p.weight_quantile(1.0), 1.0);
        assert!((p.weight_quantile(0.25) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn weight_tail_monte_carlo() {
        let p = ModelParams::girg(2, 2.5, 2.0, 0.0);
        let mut r = rng::stream(1, Purpose::Experiment, 0);
        let n = 1_000_000;
        let ws: Vec<f64> = (0..n).map(|_| sample_weight(&p, &mut r)).collect();
        for w in [2.0, 5.0, 10.0, 20.0, 50.0] {
            let emp = ws.iter().filter(|&&x| x >= w).count() as f64 / n as f64;
            let th = p.weight_tail(w);
            assert!((emp / th - 1.0).abs() < 0.05, "w={w} emp={emp} th={th}");
        }
    }

    #[test]
    fn log_power_ell_inverts() {
        let mut p = ModelParams::girg(1, 2.5, 2.0, 0.0);
        p.ell = Ell::LogPower { a: 1.0 };
        for u in [0.9, 0.5, 0.1, 1e-3, 1e-6] {
            let w = p.weight_quantile(u);
            assert!((p.weight_tail(w) / u - 1.0).abs() < 1e-9);
        }
        assert!(p.mean_weight() > 3.0);
        p.ell = Ell::LogPower { a: 2.0 };
        assert!(p.validate().is_err());
    }

    #[test]
    fn mean_weight_quadrature_matches_closed_form() {
        // a = 0 reduces to ell = 1.
        let mut p = ModelParams::girg(1, 2.4, 2.0, 0.0);
        p.ell = Ell::LogPower { a: 0.0 };
        assert!((p.mean_weight() - 1.4 / 0.4).abs() < 1e-6);
    }

    #[test]
    fn kernel_examples() {
        let p = ModelParams::reference(1.0);
        let ew = p.mean_weight();
        assert_eq!(p.connection_prob(1.0, 10.0, 10.0, ew), 1.0);
        let x: f64 = 2.0 * 3.0 / (ew * 16.0);
        assert!((p.connection_prob(4.0, 2.0, 3.0, ew) - x.powi(5)).abs() < 1e-15);
        let mut t = p.clone();
        t.alpha = f64::INFINITY;
        assert_eq!(t.connection_prob(2.0, 1.0, 2.0, ew), 0.0);
        assert_eq!(t.connection_prob(2.0, 2.0, 2.0, ew), 1.0);
        assert!(connection_prob(0.0, 1.0, 1.0, &p).is_err());
    }

    #[test]
    fn l_quantiles() {
        assert_eq!(LDist::Constant { value: 1.0 }.quantile(0.3), 1.0);
        assert!((LDist::Power { beta: 2.0 }.quantile(0.25) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lattice_half_open() {
        let mut p = ModelParams::reference(0.0);
        p.topology = TopologyKind::Euclidean;
        let cube = Cube::origin(2, 5.0).unwrap();
        let vs = sample_vertices(&p, &cube, None, 1).unwrap();
        assert_eq!(vs.len(), 25);
        assert!(vs.coords.iter().all(|&c| (0.0..5.0).contains(&c)));
    }

    #[test]
    fn single_vertex_has_no_edges() {
        let p = ModelParams::girg(2, 2.5, 2.0, 0.0);
        let cube = Cube::origin(2, 10.0).unwrap();
        let g = sample_graph(&p, &cube, Some(1), 3).unwrap();
        assert_eq!(g.n(), 1);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn determinism() {
        let p = ModelParams::girg(2, 2.5, 1.5, 0.0);
        let cube = Cube::origin(2, 40.0).unwrap();
        let a = sample_graph(&p, &cube, None, 9).unwrap();
        let b = sample_graph(&p, &cube, None, 9).unwrap();
        assert_eq!(a.vertices, b.vertices);
        assert_eq!(a.edges, b.edges);
        let c = sample_graph(&p, &cube, None, 10).unwrap();
        assert_ne!(a.edges, c.edges);
    }

    #[test]
    fn percolate_extremes_and_binomial() {
        let p = ModelParams::girg(2, 2.5, 2.0, 0.0);
        let cube = Cube::origin(2, 60.0).unwrap();
        let g = sample_graph(&p, &cube, None, 4).unwrap();
        assert_eq!(percolate(&g, 1.0, 1).unwrap().edges, g.edges);
        assert!(percolate(&g, 0.0, 1).unwrap().edges.is_empty());
        let m = g.edges.len() as f64;
        let mut ok = 0;
        for s in 0..200 {
            let k = percolate(&g, 0.5, s).unwrap().edges.len() as f64;
            if (k - m / 2.0).abs() <= 4.0 * (m / 4.0).sqrt() {
                ok += 1;
            }
        }
        assert!(ok >= 198);
    }

    #[test]
    fn exposure_single_round_is_plain_graph() {
        let p = ModelParams::girg(2, 2.5, 2.0, 0.0);
        let cube = Cube::origin(2, 20.0).unwrap();
        let vs = sample_vertices(&p, &cube, None, 2).unwrap();
        let (g, ex) = exposure_split(vs, &[1.0], &p, &cube, 5).unwrap();
        assert_eq!(ex.slices.len(), 1);
        assert_eq!(ex.slices[0], g.edges);
        assert!(ex.check(&g.edges));
        assert!(exposure_split(g.vertices.clone(), &[0.5, 0.4], &p, &cube, 5).is_err());
    }

    #[test]
    fn exposure_slices_partition_union() {
        let p = ModelParams::girg(2, 2.5, 1.5, 0.0);
        let cube = Cube::origin(2, 30.0).unwrap();
        let vs = sample_vertices(&p, &cube, None, 2).unwrap();
        let (g, ex) = exposure_split(vs, &[0.2, 0.3, 0.5], &p, &cube, 8).unwrap();
        assert!(ex.check(&g.edges));
        let ls = label_edges(&g, &[0.5, 0.5], 3).unwrap();
        assert!(ls.check(&g.edges));
    }

    #[test]
    fn categorical_boundaries() {
        let t = [0.25, 0.25, 0.5];
        assert_eq!(categorical(&t, 0.25), 0);
        assert_eq!(categorical(&t, 0.26), 1);
        assert_eq!(categorical(&t, 1.0), 2);
        let mut r = rng::stream(0, Purpose::Experiment, 1);
        let mut counts = [0usize; 3];
        for _ in 0..100_000 {
            counts[categorical(&t, rng::open01(&mut r))] += 1;
        }
        assert!((counts[2] as f64 / 1e5 - 0.5).abs() < 0.01);
        let _ = r.random::<u8>();
    }
}
