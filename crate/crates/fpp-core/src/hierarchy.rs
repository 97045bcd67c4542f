//! Hierarchies of cheap bridges and the path assembled from them.
//!
//! A hierarchy of depth `R` embeds the binary strings `{0,1}^R` (up to the
//! padding relation `~T`) into the vertex set. Level `i` adds, for every
//! `sigma` of length `i - 2`, a 3-edge bridge between two vertices near
//! `y_{sigma 0}` and `y_{sigma 1}`. After the last bridge level every embedded
//! vertex climbs to weight `w_bar` along a weight-increasing path, and the
//! remaining level-`R` gaps are closed through common neighbours.
//!
//! Each stage draws fresh edges only from its own exposure slice; edges chosen
//! in earlier stages may be reused at marginal cost zero.

use crate::cost::CostedGraph;
use crate::geometry::{displacement, point_segment_distance};
use crate::model::ExposureSlices;
use crate::theory::{check_validity, HierarchyParams, PhaseParams};
use rayon::prelude::*;
use serde::{Serialize, Serializer};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HierarchyError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("expected {expected} exposure slices, got {got}")]
    SliceCount { expected: usize, got: usize },
    #[error("hierarchy parameters were chosen for xi = {hp} but |y0 - y1| = {actual}")]
    ScaleMismatch { hp: f64, actual: f64 },
    #[error("no join for gap {0}")]
    MissingJoin(BinString),
    #[error("hierarchy is incomplete")]
    Incomplete,
}

// ---------------------------------------------------------------------------
// Binary strings

/// A string over `{0, 1}`. The empty string is allowed and stands for the root.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct BinString(Vec<u8>);

impl BinString {
    pub fn new(bits: Vec<u8>) -> Option<Self> {
        bits.iter().all(|&b| b <= 1).then_some(BinString(bits))
    }

    pub fn parse(s: &str) -> Option<Self> {
        s.bytes()
            .map(|c| match c {
                b'0' => Some(0),
                b'1' => Some(1),
                _ => None,
            })
            .collect::<Option<Vec<u8>>>()
            .map(BinString)
    }

    pub fn repeat(bit: u8, n: usize) -> Self {
        BinString(vec![bit & 1; n])
    }

    /// All strings of length `len` in lexicographic order.
    pub fn all(len: usize) -> Vec<Self> {
        assert!(len < 32, "string length {len} too large to enumerate");
        (0u32..1 << len)
            .map(|k| BinString((0..len).map(|j| ((k >> (len - 1 - j)) & 1) as u8).collect()))
            .collect()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> Option<u8> {
        self.0.last().copied()
    }

    pub fn push(&self, bit: u8) -> Self {
        let mut b = self.0.clone();
        b.push(bit & 1);
        BinString(b)
    }

    pub fn concat(&self, tail: &str) -> Self {
        let mut b = self.0.clone();
        b.extend(BinString::parse(tail).expect("binary literal").0);
        BinString(b)
    }

    /// Every bit equal (the classes of `0` and `1`).
    pub fn is_constant(&self) -> bool {
        self.0.windows(2).all(|w| w[0] == w[1])
    }
}

impl fmt::Display for BinString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b == 0 { "0" } else { "1" })?;
        }
        Ok(())
    }
}

impl Serialize for BinString {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// `s T_k`: repeats the last bit `k` more times.
pub fn pad_t(s: &BinString, k: usize) -> BinString {
    match s.last() {
        Some(b) => {
            let mut out = s.0.clone();
            out.extend(std::iter::repeat_n(b, k));
            BinString(out)
        }
        None => s.clone(),
    }
}

/// `s T^c`: appends the complement of the last bit.
pub fn pad_tc(s: &BinString) -> BinString {
    match s.last() {
        Some(b) => s.push(1 - b),
        None => s.clone(),
    }
}

/// Shortest member of the `~T` class of `s` (trailing repeats stripped).
pub fn class_representative(s: &BinString) -> BinString {
    let mut b = s.0.clone();
    while b.len() >= 2 && b[b.len() - 1] == b[b.len() - 2] {
        b.pop();
    }
    BinString(b)
}

/// The level `i` at which the class of `s` first appears, i.e. `s ~T sigma` with `sigma` in `Xi_i`.
pub fn level_first_appearing(s: &BinString) -> usize {
    class_representative(s).len()
}

/// Whether `s` lies in `Xi_i` for `i = s.len()`.
pub fn is_new_at_own_level(s: &BinString) -> bool {
    s.len() == 1 || (s.len() >= 2 && s.0[s.len() - 1] != s.0[s.len() - 2])
}

/// The level-`level` sibling of the class of `s`: `(sigma T_{j-1}) T^c` with `j = level - i`.
pub fn sibling(s: &BinString, level: usize) -> Option<BinString> {
    let rep = class_representative(s);
    if rep.is_empty() || level <= rep.len() {
        return None;
    }
    Some(pad_tc(&pad_t(&rep, level - rep.len() - 1)))
}

/// Pairs `(sigma 01, sigma 10)` for `sigma` in `{0,1}^{level-2}`.
pub fn newly_appearing_cousins(level: usize) -> Vec<(BinString, BinString)> {
    if level < 2 {
        return Vec::new();
    }
    BinString::all(level - 2)
        .into_iter()
        .map(|s| (s.concat("01"), s.concat("10")))
        .collect()
}

// ---------------------------------------------------------------------------
// Edge access

/// Which edges a search may use and at what marginal cost.
#[derive(Debug, Clone, Copy)]
pub struct EdgeAccess<'a> {
    /// Round label of every edge; `None` makes every edge available.
    labels: Option<&'a [u16]>,
    round: u16,
    chosen: Option<&'a HashMap<usize, u16>>,
}

impl<'a> EdgeAccess<'a> {
    /// Every edge available at its full cost.
    pub fn all() -> Self {
        EdgeAccess { labels: None, round: 0, chosen: None }
    }

    /// Edges of slice `round` at full cost, plus previously chosen edges at cost zero.
    pub fn round(labels: &'a [u16], round: u16, chosen: &'a HashMap<usize, u16>) -> Self {
        EdgeAccess { labels: Some(labels), round, chosen: Some(chosen) }
    }

    /// Marginal cost of edge `e` with cost `c`, or `None` if it may not be used.
    pub fn marginal(&self, e: usize, c: f64) -> Option<f64> {
        if self.chosen.is_some_and(|m| m.contains_key(&e)) {
            return Some(0.0);
        }
        match self.labels {
            None => Some(c),
            Some(l) if l[e] == self.round => Some(c),
            Some(_) => None,
        }
    }
}

/// Neighbours `(vertex, edge)` of `v` in increasing vertex order.
fn sorted_neighbours(g: &CostedGraph, v: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = g.neighbours(v).iter().map(|&(u, e)| (u as usize, e as usize)).collect();
    out.sort_unstable();
    out
}

fn in_window(w: f64, lo: f64, hi: f64) -> bool {
    w >= lo && w <= hi
}

// ---------------------------------------------------------------------------
// Bridges

/// Scale and exponents of one bridge search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BridgeQuery {
    /// Distance scale `D`.
    pub scale: f64,
    pub gamma: f64,
    pub z: f64,
    pub eta: f64,
    pub w_under: f64,
    /// Anchors must satisfy `|x0 - x1| <= c_h D`.
    pub c_h: f64,
}

impl BridgeQuery {
    pub fn from_params(hp: &HierarchyParams, scale: f64) -> Self {
        BridgeQuery {
            scale,
            gamma: hp.gamma,
            z: hp.z,
            eta: hp.eta,
            w_under: hp.w_under,
            c_h: hp.c_h as f64,
        }
    }

    /// Search radius `D^gamma`.
    pub fn radius(&self) -> f64 {
        self.scale.powf(self.gamma)
    }

    /// Weight window of the bridge-edge endpoints.
    pub fn high_window(&self) -> (f64, f64) {
        let s = self.w_under * self.scale.powf(self.z / 2.0);
        (5.0 * s, 20.0 * s)
    }

    /// Weight window of the bridge endpoints.
    pub fn low_window(&self) -> (f64, f64) {
        (self.w_under, 4.0 * self.w_under)
    }

    /// Cost cap `w^{3 mu} D^eta` for each of the three edges.
    pub fn edge_cap(&self, mu: f64) -> f64 {
        self.w_under.powf(3.0 * mu) * self.scale.powf(self.eta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bridge {
    /// `x' a b y'`.
    pub path: Vec<usize>,
    pub edges: Vec<usize>,
    pub cost: f64,
    pub marginal_cost: f64,
    pub round: u16,
}

impl Bridge {
    pub fn start(&self) -> usize {
        self.path[0]
    }

    pub fn end(&self) -> usize {
        self.path[self.path.len() - 1]
    }
}

/// Why a bridge search came back empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BridgeMiss {
    /// The net has no vertex in the required ball and weight window around an anchor.
    EmptyLayer { anchor: usize, window: &'static str },
    /// Candidates exist but none has a cheap edge to a low-weight net vertex.
    NoQualified { anchor: usize },
    /// No cheap edge joins the qualified candidates of the two anchors.
    NoBridgeEdge,
}

/// Deterministic search for a 3-edge bridge `x' a b y'` between the anchors.
///
/// `a` ranges over net vertices in `B_{D^gamma}(x0)` with weight in the high
/// window, in increasing id order, and is kept if it has a cheap edge to a
/// net vertex `x'` within `D^gamma` in the low window (the first such `x'`).
/// Likewise for `b` around `x1`. The first pair `(a, b)` in lexicographic
/// order joined by a cheap edge gives the bridge.
pub fn find_bridge(
    g: &CostedGraph,
    net: &[bool],
    access: &EdgeAccess,
    x0: usize,
    x1: usize,
    q: &BridgeQuery,
) -> Result<Result<Bridge, BridgeMiss>, HierarchyError> {
    let base = &g.base;
    if net.len() != g.n() || x0 >= g.n() || x1 >= g.n() {
        return Err(HierarchyError::InvalidInput("net mask or anchors out of range".into()));
    }
    if !net[x0] || !net[x1] {
        return Err(HierarchyError::InvalidInput("anchors must lie in the net".into()));
    }
    if base.dist(x0, x1) > q.c_h * q.scale {
        return Err(HierarchyError::InvalidInput(format!(
            "anchors at distance {} exceed c_h D = {}",
            base.dist(x0, x1),
            q.c_h * q.scale
        )));
    }
    let r = q.radius();
    let (hlo, hhi) = q.high_window();
    let (llo, lhi) = q.low_window();
    let cap = q.edge_cap(g.mu);

    let qualified = |anchor: usize| -> Result<Vec<(usize, usize, f64, usize)>, BridgeMiss> {
        let near = base.index.ball_query(base.pos(anchor), r);
        let cands: Vec<usize> = near
            .into_iter()
            .filter(|&v| net[v] && in_window(base.weight(v), hlo, hhi))
            .collect();
        if cands.is_empty() {
            return Err(BridgeMiss::EmptyLayer { anchor, window: "high" });
        }
        let mut out = Vec::new();
        for a in cands {
            // (a, x', marginal cost of x'a, edge index)
            let hit = sorted_neighbours(g, a).into_iter().find_map(|(x, e)| {
                if !net[x] || !in_window(base.weight(x), llo, lhi) || base.dist(a, x) > r || g.costs[e] > cap {
                    return None;
                }
                access.marginal(e, g.costs[e]).map(|m| (x, m, e))
            });
            if let Some((x, m, e)) = hit {
                out.push((a, x, m, e));
            }
        }
        if out.is_empty() {
            Err(BridgeMiss::NoQualified { anchor })
        } else {
            Ok(out)
        }
    };
    let z0 = match qualified(x0) {
        Ok(z) => z,
        Err(m) => return Ok(Err(m)),
    };
    let z1 = match qualified(x1) {
        Ok(z) => z,
        Err(m) => return Ok(Err(m)),
    };
    let z1_map: HashMap<usize, (usize, f64, usize)> = z1.iter().map(|&(b, y, m, e)| (b, (y, m, e))).collect();
    for &(a, x, mx, ex) in &z0 {
        for (b, e) in sorted_neighbours(g, a) {
            let Some(&(y, my, ey)) = z1_map.get(&b) else { continue };
            if y == x || b == x || a == y || g.costs[e] > cap {
                continue;
            }
            let Some(mb) = access.marginal(e, g.costs[e]) else { continue };
            let edges = vec![ex, e, ey];
            let cost = edges.iter().map(|&e| g.costs[e]).sum();
            return Ok(Ok(Bridge {
                path: vec![x, a, b, y],
                edges,
                cost,
                marginal_cost: mx + mb + my,
                round: access.round,
            }));
        }
    }
    Ok(Err(BridgeMiss::NoBridgeEdge))
}

/// Reasons a path fails to be a `(D, U, w)`-valid bridge for the anchors `(x0, x1)`.
pub fn bridge_violations(
    g: &CostedGraph,
    path: &[usize],
    marginal_cost: f64,
    x0: usize,
    x1: usize,
    dist_cap: f64,
    u: f64,
    w: f64,
) -> Vec<&'static str> {
    let mut out = Vec::new();
    if path.len() < 2 {
        out.push("too-short");
        return out;
    }
    if path.windows(2).any(|p| g.edge_between(p[0], p[1]).is_none()) {
        out.push("missing-edge");
    }
    let (s, t) = (path[0], path[path.len() - 1]);
    let b = &g.base;
    if !in_window(b.weight(s), w, 4.0 * w) || !in_window(b.weight(t), w, 4.0 * w) {
        out.push("endpoint-weight");
    }
    if b.dist(x0, s) > dist_cap || b.dist(x1, t) > dist_cap {
        out.push("endpoint-distance");
    }
    if marginal_cost > u {
        out.push("cost");
    }
    out
}

// ---------------------------------------------------------------------------
// Weight-increasing paths and joins

/// Number of hops `q = ceil(log(log K / log M) / log(1 / (tau - 2 + 2 d tau delta)))`, at least 0.
pub fn wip_steps(m: f64, k: f64, tau: f64, d: usize, delta: f64) -> Result<u32, HierarchyError> {
    let b = tau - 2.0 + 2.0 * d as f64 * tau * delta;
    if !(b > 0.0 && b < 1.0) {
        return Err(HierarchyError::InvalidInput(format!("tau - 2 + 2 d tau delta = {b} outside (0, 1)")));
    }
    if !(m > 1.0 && k >= m) {
        return Err(HierarchyError::InvalidInput("need 1 < M <= K".into()));
    }
    let q = ((k.ln() / m.ln()).ln() / (1.0 / b).ln()).ceil();
    Ok(q.max(0.0) as u32)
}

/// Inputs of [`weight_increasing_path`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClimbQuery {
    pub m: f64,
    pub k: f64,
    /// Hop length `D`.
    pub hop: f64,
    /// Cost cap `U` per hop.
    pub u: f64,
    pub tau: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClimbFailure {
    /// 1-based step that found no admissible hop.
    pub step: u32,
    pub at: usize,
}

/// Greedy weight-increasing path from `y0`.
///
/// Step `i` targets `M_i = min(M^{1/b^i}, K)` and moves to the first net
/// neighbour within `D` whose weight lies in `[M_i/2, 2 M_i]` and whose edge
/// costs at most `U`. A step is skipped when the current weight already lies
/// in its window, so the path has at most `q` edges and ends in `[K/2, 2K]`.
pub fn weight_increasing_path(
    g: &CostedGraph,
    net: &[bool],
    access: &EdgeAccess,
    y0: usize,
    cq: &ClimbQuery,
) -> Result<Result<Vec<usize>, ClimbFailure>, HierarchyError> {
    let base = &g.base;
    let d = base.params.d;
    let q = wip_steps(cq.m, cq.k, cq.tau, d, cq.delta)?;
    if !in_window(base.weight(y0), cq.m / 2.0, 2.0 * cq.m) {
        return Err(HierarchyError::InvalidInput(format!("start weight {} outside [M/2, 2M]", base.weight(y0))));
    }
    let b = cq.tau - 2.0 + 2.0 * d as f64 * cq.tau * cq.delta;
    let (lm, lk) = (cq.m.ln(), cq.k.ln());
    let mut path = vec![y0];
    let mut cur = y0;
    for i in 1..=q {
        let target = (lm / b.powi(i as i32)).min(lk).exp();
        let (lo, hi) = (target / 2.0, 2.0 * target);
        if in_window(base.weight(cur), lo, hi) {
            continue;
        }
        let next = sorted_neighbours(g, cur).into_iter().find(|&(v, e)| {
            net[v]
                && in_window(base.weight(v), lo, hi)
                && base.dist(cur, v) <= cq.hop
                && g.costs[e] <= cq.u
                && access.marginal(e, g.costs[e]).is_some()
        });
        match next {
            Some((v, _)) => {
                path.push(v);
                cur = v;
            }
            None => return Ok(Err(ClimbFailure { step: i, at: cur })),
        }
    }
    if !in_window(base.weight(cur), cq.k / 2.0, 2.0 * cq.k) {
        return Ok(Err(ClimbFailure { step: q + 1, at: cur }));
    }
    Ok(Ok(path))
}

/// First common neighbour `v` in the net within `D` of `x0` with `C(x0 v) + C(v x1) <= D^{2 mu d}`.
pub fn common_neighbour_join(
    g: &CostedGraph,
    net: &[bool],
    access: &EdgeAccess,
    x0: usize,
    x1: usize,
    scale: f64,
) -> Option<Vec<usize>> {
    let base = &g.base;
    let cap = scale.powf(2.0 * g.mu * base.params.d as f64);
    for (v, e0) in sorted_neighbours(g, x0) {
        if v == x1 || !net[v] || base.dist(x0, v) > scale {
            continue;
        }
        let Some(e1) = g.edge_between(v, x1) else { continue };
        if access.marginal(e0, g.costs[e0]).is_none() || access.marginal(e1, g.costs[e1]).is_none() {
            continue;
        }
        if g.costs[e0] + g.costs[e1] <= cap {
            return Some(vec![x0, v, x1]);
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Building

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stage {
    Bridge,
    Climb,
    Join,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageFailure {
    pub stage: Stage,
    pub sigma: BinString,
    /// 0-based slice index of the failing round.
    pub round: u16,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BridgeRecord {
    /// `P_sigma` joins `y_{sigma 01}` and `y_{sigma 10}`.
    pub sigma: BinString,
    /// The 3-edge bridge between the low-weight vertices.
    pub low: Bridge,
    /// Full bridge path between the high-weight vertices (once climbed).
    pub path: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hierarchy {
    pub depth: usize,
    pub y0: usize,
    pub y1: usize,
    pub xi: f64,
    pub params: HierarchyParams,
    /// Deepest bridge level completed (1 means only `{y0, y1}`).
    pub levels_done: usize,
    /// Low-weight embedding, keyed by class representative.
    pub low: BTreeMap<BinString, usize>,
    /// Final embedding `y_sigma`, keyed by class representative.
    pub embedding: BTreeMap<BinString, usize>,
    pub bridges: Vec<BridgeRecord>,
    /// Weight-increasing path from the low to the final vertex of each class.
    pub climbs: BTreeMap<BinString, Vec<usize>>,
    /// Common-neighbour path for every level-R gap `sigma` in `{0,1}^{R-1}`.
    pub joins: BTreeMap<BinString, Vec<usize>>,
    /// Round (slice index) in which each used edge was first chosen.
    pub edge_round: BTreeMap<usize, u16>,
}

impl Hierarchy {
    /// `y_sigma` for any string of length at most `R`, through its class.
    pub fn vertex(&self, s: &BinString) -> Option<usize> {
        self.embedding.get(&class_representative(s)).copied()
    }

    pub fn complete(&self) -> bool {
        self.levels_done == self.depth && self.embedding.len() == 1 << self.depth && self.joins.len() + 2 == 1 << (self.depth - 1)
    }

    /// Bridge cap `U = c_H w_bar^{4 mu} xi^eta` of the climbed hierarchy.
    pub fn bridge_cap(&self, mu: f64) -> f64 {
        self.params.c_h as f64 * self.params.w_bar.powf(4.0 * mu) * self.xi.powf(self.params.eta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildOutcome {
    pub hierarchy: Hierarchy,
    pub failure: Option<StageFailure>,
    /// Side conditions of the parameter choice that fail at this scale.
    pub unmet: Vec<&'static str>,
}

/// `D_i = xi^{gamma^i}`.
fn scale_at(xi: f64, gamma: f64, i: usize) -> f64 {
    xi.powf(gamma.powi(i as i32))
}

fn record_edges(chosen: &mut HashMap<usize, u16>, path: &[usize], g: &CostedGraph, round: u16) {
    for p in path.windows(2) {
        if let Some(e) = g.edge_between(p[0], p[1]) {
            chosen.entry(e).or_insert(round);
        }
    }
}

/// Builds a hierarchy of depth `hp.r` between `y0` and `y1`.
///
/// Slices: `0..R-1` for the bridge levels `2..=R`, `R-1` for the climbs and
/// `R` for the joins, so `slices.rounds()` must equal `R + 1`. On failure the
/// deepest completed part is returned together with the failing stage.
pub fn build_hierarchy(
    g: &CostedGraph,
    slices: &ExposureSlices,
    net: &[bool],
    y0: usize,
    y1: usize,
    hp: &HierarchyParams,
) -> Result<BuildOutcome, HierarchyError> {
    let big_r = hp.r as usize;
    if big_r < 2 {
        return Err(HierarchyError::InvalidInput("depth must be at least 2".into()));
    }
    if slices.rounds() != big_r + 1 {
        return Err(HierarchyError::SliceCount { expected: big_r + 1, got: slices.rounds() });
    }
    if slices.labels.len() != g.base.edges.len() {
        return Err(HierarchyError::InvalidInput("slice labels do not match the edge list".into()));
    }
    if net.len() != g.n() || y0 >= g.n() || y1 >= g.n() || y0 == y1 {
        return Err(HierarchyError::InvalidInput("bad net mask or endpoints".into()));
    }
    if !net[y0] || !net[y1] {
        return Err(HierarchyError::InvalidInput("endpoints must lie in the net".into()));
    }
    let xi = g.base.dist(y0, y1);
    if (xi - hp.xi).abs() > 1e-9 * xi.max(1.0) {
        return Err(HierarchyError::ScaleMismatch { hp: hp.xi, actual: xi });
    }
    let par = PhaseParams::from(&g.base.params);
    let unmet = check_validity(hp, xi, &par).reasons;
    let labels = &slices.labels[..];
    let mu = g.mu;

    let zero = BinString::repeat(0, 1);
    let one = BinString::repeat(1, 1);
    let mut h = Hierarchy {
        depth: big_r,
        y0,
        y1,
        xi,
        params: hp.clone(),
        levels_done: 1,
        low: BTreeMap::from([(zero.clone(), y0), (one.clone(), y1)]),
        embedding: BTreeMap::new(),
        bridges: Vec::new(),
        climbs: BTreeMap::new(),
        joins: BTreeMap::new(),
        edge_round: BTreeMap::new(),
    };
    let mut chosen: HashMap<usize, u16> = HashMap::new();
    let fail = |h: Hierarchy, chosen: &HashMap<usize, u16>, f: StageFailure| {
        let mut h = h;
        h.edge_round = chosen.iter().map(|(&e, &r)| (e, r)).collect();
        Ok(BuildOutcome { hierarchy: h, failure: Some(f), unmet: unmet.clone() })
    };

    for level in 2..=big_r {
        let round = (level - 2) as u16;
        let q = BridgeQuery::from_params(hp, scale_at(xi, hp.gamma, level - 2));
        let sigmas = BinString::all(level - 2);
        let access = EdgeAccess::round(labels, round, &chosen);
        let found: Vec<Result<Result<Bridge, BridgeMiss>, HierarchyError>> = sigmas
            .par_iter()
            .map(|s| {
                let a = h.low[&class_representative(&s.push(0))];
                let b = h.low[&class_representative(&s.push(1))];
                find_bridge(g, net, &access, a, b, &q)
            })
            .collect();
        let mut new_bridges = Vec::with_capacity(sigmas.len());
        for (s, r) in sigmas.into_iter().zip(found) {
            match r {
                Ok(Ok(b)) => new_bridges.push((s, b)),
                Ok(Err(miss)) => {
                    let f = StageFailure { stage: Stage::Bridge, sigma: s, round, detail: format!("{miss:?}") };
                    return fail(h, &chosen, f);
                }
                Err(e) => {
                    let f = StageFailure { stage: Stage::Bridge, sigma: s, round, detail: e.to_string() };
                    return fail(h, &chosen, f);
                }
            }
        }
        for (s, b) in new_bridges {
            for &e in &b.edges {
                chosen.entry(e).or_insert(round);
            }
            h.low.insert(s.concat("01"), b.start());
            h.low.insert(s.concat("10"), b.end());
            h.bridges.push(BridgeRecord { sigma: s, path: b.path.clone(), low: b });
        }
        h.levels_done = level;
    }

    // Climb every class except {0}, {1} from weight ~w_under to ~w_bar.
    let round = (big_r - 1) as u16;
    let gr = scale_at(xi, hp.gamma, big_r - 1);
    let cq = ClimbQuery {
        m: 2.0 * hp.w_under,
        k: 2.0 * hp.w_bar,
        hop: 4.0 * gr,
        u: hp.w_bar.powf(4.0 * mu) * xi.powf(hp.eta),
        tau: g.base.params.tau,
        delta: hp.delta,
    };
    let classes: Vec<(BinString, usize)> = h
        .low
        .iter()
        .filter(|(s, _)| s.len() >= 2)
        .map(|(s, &v)| (s.clone(), v))
        .collect();
    let access = EdgeAccess::round(labels, round, &chosen);
    let climbs: Vec<_> = classes
        .par_iter()
        .map(|(_, v)| weight_increasing_path(g, net, &access, *v, &cq))
        .collect();
    let mut climbed = BTreeMap::new();
    for ((s, _), r) in classes.into_iter().zip(climbs) {
        match r {
            Ok(Ok(p)) => {
                climbed.insert(s, p);
            }
            Ok(Err(cf)) => {
                let f = StageFailure { stage: Stage::Climb, sigma: s, round, detail: format!("{cf:?}") };
                return fail(h, &chosen, f);
            }
            Err(e) => {
                let f = StageFailure { stage: Stage::Climb, sigma: s, round, detail: e.to_string() };
                return fail(h, &chosen, f);
            }
        }
    }
    for p in climbed.values() {
        record_edges(&mut chosen, p, g, round);
    }
    h.embedding.insert(zero, y0);
    h.embedding.insert(one, y1);
    for (s, p) in &climbed {
        h.embedding.insert(s.clone(), *p.last().expect("nonempty climb"));
    }
    for rec in &mut h.bridges {
        let up0 = &climbed[&rec.sigma.concat("01")];
        let up1 = &climbed[&rec.sigma.concat("10")];
        let mut path: Vec<usize> = up0.iter().rev().copied().collect();
        path.extend_from_slice(&rec.low.path[1..]);
        path.extend_from_slice(&up1[1..]);
        rec.path = path;
    }
    h.climbs = climbed;

    // Close the level-R gaps.
    let round = big_r as u16;
    let access = EdgeAccess::round(labels, round, &chosen);
    let gaps: Vec<BinString> = BinString::all(big_r - 1).into_iter().filter(|s| !s.is_constant()).collect();
    let joins: Vec<Option<Vec<usize>>> = gaps
        .par_iter()
        .map(|s| {
            let a = h.vertex(&s.push(0)).expect("embedded");
            let b = h.vertex(&s.push(1)).expect("embedded");
            if a == b {
                Some(vec![a])
            } else {
                common_neighbour_join(g, net, &access, a, b, gr)
            }
        })
        .collect();
    for (s, j) in gaps.into_iter().zip(joins) {
        match j {
            Some(p) => {
                h.joins.insert(s, p);
            }
            None => {
                let f = StageFailure { stage: Stage::Join, sigma: s, round, detail: "no common neighbour".into() };
                return fail(h, &chosen, f);
            }
        }
    }
    for p in h.joins.values() {
        record_edges(&mut chosen, p, g, round);
    }
    h.edge_round = chosen.into_iter().collect();
    Ok(BuildOutcome { hierarchy: h, failure: None, unmet })
}

// ---------------------------------------------------------------------------
// Assembly and validation

/// Position of `v` in the frame centred at `origin` (shortest torus image).
fn rel(g: &CostedGraph, origin: usize, v: usize) -> Vec<f64> {
    let b = &g.base;
    displacement(b.pos(origin), b.pos(v), b.topology())
}

/// Maximal distance of `vertices` from the segment between `y0` and `y1`.
pub fn deviation(g: &CostedGraph, y0: usize, y1: usize, vertices: impl IntoIterator<Item = usize>) -> f64 {
    let a = vec![0.0; g.base.params.d];
    let b = rel(g, y0, y1);
    vertices
        .into_iter()
        .map(|v| point_segment_distance(&rel(g, y0, v), &a, &b))
        .fold(0.0, f64::max)
}

/// Drops cycles: whenever a vertex recurs, the loop since its first visit is cut.
pub fn loop_erase(walk: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(walk.len());
    let mut at: HashMap<usize, usize> = HashMap::new();
    for &v in walk {
        if let Some(&i) = at.get(&v) {
            for u in out.drain(i + 1..) {
                at.remove(&u);
            }
        } else {
            at.insert(v, out.len());
            out.push(v);
        }
    }
    out
}

fn distinct_edge_cost(g: &CostedGraph, walk: &[usize]) -> Option<f64> {
    let mut seen = HashSet::new();
    let mut total = 0.0;
    for p in walk.windows(2) {
        let e = g.edge_between(p[0], p[1])?;
        if seen.insert(e) {
            total += g.costs[e];
        }
    }
    Some(total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssembledPath {
    pub path: Vec<usize>,
    /// Concatenation of bridges and joins before cycles are removed.
    pub walk: Vec<usize>,
    pub cost: f64,
    /// Cost of the walk with every distinct edge counted once.
    pub walk_cost: f64,
    pub deviation: f64,
    pub start: usize,
    pub end: usize,
}

/// Concatenates bridges and joins in lexicographic order of the level-R
/// strings (omitting `0^R` and `1^R`) and removes cycles.
pub fn assemble_path(h: &Hierarchy, g: &CostedGraph) -> Result<AssembledPath, HierarchyError> {
    if !h.complete() {
        return Err(HierarchyError::Incomplete);
    }
    let big_r = h.depth;
    let order: Vec<BinString> = BinString::all(big_r).into_iter().filter(|s| !s.is_constant()).collect();
    let bridge_of: HashMap<&BinString, &BridgeRecord> = h.bridges.iter().map(|b| (&b.sigma, b)).collect();
    let mut walk = vec![h.vertex(&order[0]).expect("embedded")];
    for pair in order.windows(2) {
        let (s, t) = (&pair[0], &pair[1]);
        let seg: Vec<usize> = if s.last() == Some(0) {
            // Siblings s = tau 0, t = tau 1.
            let tau = BinString::new(s.bits()[..big_r - 1].to_vec()).expect("bits");
            h.joins.get(&tau).cloned().ok_or(HierarchyError::MissingJoin(tau))?
        } else {
            // s = rho 0 1..1, t = rho 1 0..0: the bridge P_rho.
            let k = s.bits().iter().rposition(|&b| b == 0).expect("not constant");
            let rho = BinString::new(s.bits()[..k].to_vec()).expect("bits");
            bridge_of
                .get(&rho)
                .map(|b| b.path.clone())
                .ok_or_else(|| HierarchyError::InvalidInput(format!("missing bridge {rho}")))?
        };
        let from = h.vertex(s).expect("embedded");
        let to = h.vertex(t).expect("embedded");
        if seg.first() != Some(&from) || seg.last() != Some(&to) {
            return Err(HierarchyError::InvalidInput(format!("segment {s}->{t} has wrong endpoints")));
        }
        walk.extend_from_slice(&seg[1..]);
    }
    let path = loop_erase(&walk);
    let walk_cost = distinct_edge_cost(g, &walk).ok_or_else(|| HierarchyError::InvalidInput("walk uses a missing edge".into()))?;
    let cost = distinct_edge_cost(g, &path).expect("sub-path of the walk");
    Ok(AssembledPath {
        deviation: deviation(g, h.y0, h.y1, path.iter().copied()),
        start: path[0],
        end: *path.last().expect("nonempty"),
        path,
        walk,
        cost,
        walk_cost,
    })
}

/// `c_H 2^R w_bar^{4 mu} xi^eta`.
pub fn path_cost_bound(hp: &HierarchyParams, xi: f64, mu: f64) -> f64 {
    hp.c_h as f64 * 2f64.powi(hp.r as i32) * hp.w_bar.powf(4.0 * mu) * xi.powf(hp.eta)
}

/// `3 c_H xi^gamma`.
pub fn path_deviation_bound(hp: &HierarchyParams, xi: f64) -> f64 {
    3.0 * hp.c_h as f64 * xi.powf(hp.gamma)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierarchyReport {
    /// H1: every non-constant string's point has weight in `[w_bar, 4 w_bar]`.
    pub h1: bool,
    /// H2: siblings at depth `i` are within `c_H |y0 - y1|^{gamma^i}`.
    pub h2: bool,
    /// H3: one bridge per internal string, joining `y_{s01}` to `y_{s10}` with
    /// marginal cost at most `cap`.
    pub h3: bool,
    /// Every used edge was first chosen in the round of its own slice.
    pub rounds: bool,
    pub in_net: bool,
    /// Endpoints of the assembled path lie within `c_H xi^{gamma^{R-1}}` of `y0`, `y1`.
    pub endpoints: bool,
    pub deviation: f64,
    pub deviation_ok: bool,
    /// `C(E^-(P_sigma))` in bridge order.
    pub marginal_costs: Vec<f64>,
    pub cap: f64,
    pub problems: Vec<String>,
}

impl HierarchyReport {
    pub fn valid(&self) -> bool {
        self.h1 && self.h2 && self.h3 && self.rounds && self.in_net && self.endpoints && self.deviation_ok
    }
}

/// Checks (H1)-(H3), round discipline, net containment, endpoint distances and the deviation bound `2 c_H xi^gamma`.
pub fn validate_hierarchy(
    h: &Hierarchy,
    g: &CostedGraph,
    slices: Option<&ExposureSlices>,
    net: &[bool],
) -> Result<HierarchyReport, HierarchyError> {
    if !h.complete() {
        return Err(HierarchyError::Incomplete);
    }
    let hp = &h.params;
    let b = &g.base;
    let big_r = h.depth;
    let c_h = hp.c_h as f64;
    let xi = b.dist(h.y0, h.y1);
    let mut problems = Vec::new();

    let mut h1 = true;
    for s in BinString::all(big_r) {
        if s.is_constant() {
            continue;
        }
        let v = h.vertex(&s).expect("embedded");
        if !in_window(b.weight(v), hp.w_bar, 4.0 * hp.w_bar) {
            h1 = false;
            problems.push(format!("H1: y_{s} = {v} has weight {}", b.weight(v)));
        }
    }

    let mut h2 = true;
    for i in 0..big_r {
        let cap = c_h * scale_at(xi, hp.gamma, i);
        for s in BinString::all(i) {
            let (u, v) = (h.vertex(&s.push(0)).expect("embedded"), h.vertex(&s.push(1)).expect("embedded"));
            if b.dist(u, v) > cap {
                h2 = false;
                problems.push(format!("H2: |y_{s}0 - y_{s}1| = {} > {cap}", b.dist(u, v)));
            }
        }
    }

    let cap = h.bridge_cap(g.mu);
    let mut h3 = h.bridges.len() + 1 == 1 << (big_r - 1);
    if !h3 {
        problems.push(format!("H3: {} bridges for depth {big_r}", h.bridges.len()));
    }
    let mut seen: HashSet<usize> = HashSet::new();
    let mut marginal_costs = Vec::with_capacity(h.bridges.len());
    for rec in &h.bridges {
        let (a, z) = (h.vertex(&rec.sigma.concat("01")), h.vertex(&rec.sigma.concat("10")));
        if rec.path.first().copied() != a || rec.path.last().copied() != z {
            h3 = false;
            problems.push(format!("H3: P_{} has wrong endpoints", rec.sigma));
        }
        let mut m = 0.0;
        for p in rec.path.windows(2) {
            match g.edge_between(p[0], p[1]) {
                Some(e) => {
                    if seen.insert(e) {
                        m += g.costs[e];
                    }
                }
                None => {
                    h3 = false;
                    problems.push(format!("H3: P_{} uses a missing edge {}-{}", rec.sigma, p[0], p[1]));
                }
            }
        }
        if m > cap {
            h3 = false;
            problems.push(format!("H3: C(E^-(P_{})) = {m} > {cap}", rec.sigma));
        }
        marginal_costs.push(m);
    }

    let mut rounds = true;
    if let Some(sl) = slices {
        for (&e, &r) in &h.edge_round {
            if sl.labels.get(e) != Some(&r) {
                rounds = false;
                problems.push(format!("round: edge {e} chosen in round {r} but labelled {:?}", sl.labels.get(e)));
            }
        }
    }

    let mut all_vertices: Vec<usize> = h.embedding.values().copied().collect();
    for rec in &h.bridges {
        all_vertices.extend_from_slice(&rec.path);
    }
    for j in h.joins.values() {
        all_vertices.extend_from_slice(j);
    }
    let in_net = all_vertices.iter().all(|&v| net.get(v) == Some(&true));
    if !in_net {
        problems.push("some hierarchy vertex lies outside the net".into());
    }

    let last = scale_at(xi, hp.gamma, big_r - 1);
    let s0 = h.vertex(&BinString::repeat(0, big_r - 1).push(1)).expect("embedded");
    let s1 = h.vertex(&BinString::repeat(1, big_r - 1).push(0)).expect("embedded");
    let endpoints = b.dist(h.y0, s0) <= c_h * last && b.dist(h.y1, s1) <= c_h * last;
    if !endpoints {
        problems.push("endpoint too far from its anchor".into());
    }

    let bridge_vertices = h.bridges.iter().flat_map(|r| r.path.iter().copied()).chain(h.embedding.values().copied());
    let dev = deviation(g, h.y0, h.y1, bridge_vertices);
    let deviation_ok = dev <= 2.0 * c_h * xi.powf(hp.gamma);
    if !deviation_ok {
        problems.push(format!("deviation {dev} exceeds 2 c_H xi^gamma"));
    }
    Ok(HierarchyReport { h1, h2, h3, rounds, in_net, endpoints, deviation: dev, deviation_ok, marginal_costs, cap, problems })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::assign_costs;
    use crate::geometry::Cube;
    use crate::model::{label_edges, Edge, GraphRealization, LDist, ModelParams, TopologyKind, VertexModel, VertexSet};
    use crate::theory::choose_hierarchy_params;
    use std::sync::Arc;

    fn bs(s: &str) -> BinString {
        BinString::parse(s).unwrap()
    }

    #[test]
    fn string_examples() {
        assert_eq!(pad_t(&bs("01"), 1), bs("011"));
        assert_eq!(pad_t(&bs("10"), 3), bs("10000"));
        assert_eq!(pad_tc(&bs("01")), bs("010"));
        assert_eq!(sibling(&bs("01"), 3), Some(bs("010")));
        assert_eq!(sibling(&bs("0111"), 3), Some(bs("010")));
        assert_eq!(sibling(&bs("01"), 4), Some(bs("0110")));
        assert_eq!(sibling(&bs("01"), 2), None);
        assert_eq!(class_representative(&bs("0111")), bs("01"));
        assert_eq!(class_representative(&bs("000")), bs("0"));
        assert_eq!(level_first_appearing(&bs("0110")), 4);
        assert_eq!(
            newly_appearing_cousins(3),
            vec![(bs("001"), bs("010")), (bs("101"), bs("110"))]
        );
        assert_eq!(newly_appearing_cousins(2), vec![(bs("01"), bs("10"))]);
        assert_eq!(bs("0110").to_string(), "0110");
        assert!(BinString::parse("012").is_none());
    }

    #[test]
    fn class_count_is_two_to_the_level() {
        for i in 1..=12usize {
            let reps: HashSet<BinString> = BinString::all(i).iter().map(class_representative).collect();
            // Independent count: strings new at their own level k, summed over k <= i.
            let by_levels: usize = (1..=i).map(|k| BinString::all(k).iter().filter(|s| is_new_at_own_level(s)).count()).sum();
            assert_eq!(reps.len(), 1 << i);
            assert_eq!(by_levels, 1 << i);
            for k in 3..=i {
                assert_eq!(newly_appearing_cousins(k).len(), 1 << (k - 2));
            }
        }
    }

    #[test]
    fn q_formula() {
        // b = 0.5 + 2 * 2.5 * 0.01 = 0.55; log(log 256 / log 4) = log 4.
        let b: f64 = 0.55;
        let expect = (4f64.ln() / (1.0 / b).ln()).ceil() as u32;
        assert_eq!(expect, 3);
        assert_eq!(wip_steps(4.0, 256.0, 2.5, 1, 0.01).unwrap(), expect);
        assert_eq!(wip_steps(4.0, 4.0, 2.5, 1, 0.01).unwrap(), 0);
        assert!(wip_steps(1.0, 4.0, 2.5, 1, 0.01).is_err());
    }

    #[test]
    fn loop_erasure() {
        assert_eq!(loop_erase(&[1, 2, 3, 2, 4]), vec![1, 2, 4]);
        assert_eq!(loop_erase(&[1, 2, 3, 1, 5]), vec![1, 5]);
        assert_eq!(loop_erase(&[1, 2, 3]), vec![1, 2, 3]);
    }

    /// Hand-built graph on the line: anchors 0 and 5 far apart.
    fn toy(weights: &[f64], xs: &[f64], edges: &[(u32, u32, f64)]) -> CostedGraph {
        let mut p = ModelParams::girg(1, 2.5, 1.5, 0.5);
        p.l_dist = LDist::Power { beta: 1.0 };
        let mut vs = VertexSet { d: 1, ..Default::default() };
        for (x, w) in xs.iter().zip(weights) {
            vs.push(&[*x], *w);
        }
        let es = edges.iter().map(|&(u, v, l)| Edge { u, v, l }).collect();
        let g = GraphRealization::from_parts(p, Cube::origin(1, 200.0).unwrap(), vs, es, 0).unwrap();
        assign_costs(Arc::new(g)).unwrap()
    }

    fn toy_query() -> BridgeQuery {
        // D = 100, gamma = 0.5 -> radius 10; windows [1, 4] and [5, 20]; cap = 1.
        BridgeQuery { scale: 100.0, gamma: 0.5, z: 0.0, eta: 0.0, w_under: 1.0, c_h: 2.0 }
    }

    /// Exhaustive oracle: all ordered (x, a, b, y) satisfying the bridge rules.
    fn oracle(g: &CostedGraph, x0: usize, x1: usize, q: &BridgeQuery) -> Vec<Vec<usize>> {
        let n = g.n();
        let b = &g.base;
        let cap = q.edge_cap(g.mu);
        let r = q.radius();
        let w = |v: usize| b.weight(v);
        let ok = |u: usize, v: usize| g.cost_between(u, v).is_some_and(|c| c <= cap);
        let mut out = Vec::new();
        for x in 0..n {
            for a in 0..n {
                for bb in 0..n {
                    for y in 0..n {
                        let distinct = [x, a, bb, y].iter().collect::<HashSet<_>>().len() == 4;
                        if distinct
                            && (1.0..=4.0).contains(&w(x))
                            && (1.0..=4.0).contains(&w(y))
                            && (5.0..=20.0).contains(&w(a))
                            && (5.0..=20.0).contains(&w(bb))
                            && b.dist(a, x0) <= r
                            && b.dist(bb, x1) <= r
                            && b.dist(x, a) <= r
                            && b.dist(y, bb) <= r
                            && ok(x, a)
                            && ok(a, bb)
                            && ok(bb, y)
                        {
                            out.push(vec![x, a, bb, y]);
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn six_vertex_bridge_matches_oracle() {
        // 0, 5: anchors; 1, 4: low weight endpoints; 2, 3: high weight bridge ends.
        let xs = [0.0, 3.0, 5.0, 95.0, 97.0, 100.0];
        let ws = [1.0, 2.0, 9.0, 9.0, 2.0, 1.0];
        // cost = L (w w)^{1/2}; choose L so every edge costs 0.9.
        let l = |a: f64, b: f64| 0.9 / (a * b).sqrt();
        let edges = [
            (1, 2, l(2.0, 9.0)),
            (2, 3, l(9.0, 9.0)),
            (3, 4, l(9.0, 2.0)),
            (0, 2, 50.0), // too expensive
            (0, 5, 0.1),
        ];
        let g = toy(&ws, &xs, &edges);
        let q = toy_query();
        let net = vec![true; 6];
        let got = find_bridge(&g, &net, &EdgeAccess::all(), 0, 5, &q).unwrap().unwrap();
        let all = oracle(&g, 0, 5, &q);
        assert_eq!(all, vec![vec![1, 2, 3, 4]]);
        assert_eq!(got.path, all[0]);
        assert!((got.cost - 2.7).abs() < 1e-12);
        let u = 3.0 * q.edge_cap(g.mu);
        assert!(bridge_violations(&g, &got.path, got.marginal_cost, 0, 5, 2.0 * q.radius(), u, 1.0).is_empty());
        // Restricting to a slice that lacks the middle edge kills the bridge.
        let labels: Vec<u16> = g.base.edges.iter().map(|e| if (e.u, e.v) == (2, 3) { 1 } else { 0 }).collect();
        let chosen = HashMap::new();
        let acc = EdgeAccess::round(&labels, 0, &chosen);
        assert_eq!(find_bridge(&g, &net, &acc, 0, 5, &q).unwrap(), Err(BridgeMiss::NoBridgeEdge));
        // ... unless it was chosen earlier, in which case it is free.
        let chosen = HashMap::from([(g.edge_between(2, 3).unwrap(), 0u16)]);
        let acc = EdgeAccess::round(&labels, 0, &chosen);
        let b = find_bridge(&g, &net, &acc, 0, 5, &q).unwrap().unwrap();
        assert!((b.marginal_cost - 1.8).abs() < 1e-12);
    }

    #[test]
    fn empty_candidate_sets() {
        let g = toy(&[1.0, 1.0], &[0.0, 100.0], &[(0, 1, 0.5)]);
        let net = vec![true; 2];
        let r = find_bridge(&g, &net, &EdgeAccess::all(), 0, 1, &toy_query()).unwrap();
        assert_eq!(r, Err(BridgeMiss::EmptyLayer { anchor: 0, window: "high" }));
        // Anchors too far apart for c_H D.
        let far = BridgeQuery { scale: 10.0, ..toy_query() };
        assert!(find_bridge(&g, &net, &EdgeAccess::all(), 0, 1, &far).is_err());
    }

    #[test]
    fn climb_and_join_on_toy() {
        // Weights 4 -> 16 -> 150 along cheap short edges; b = 0.55 as above, so the
        // targets are M_1 ~ 12.4, M_2 ~ 98 and M_3 = K = 256.
        let g = toy(
            &[4.0, 16.0, 150.0, 300.0, 220.0],
            &[0.0, 1.0, 2.0, 3.0, 4.0],
            &[(0, 1, 1e-3), (1, 2, 1e-3), (2, 3, 1e-3), (3, 4, 1e-3), (2, 4, 1e3)],
        );
        let net = vec![true; 5];
        let cq = ClimbQuery { m: 4.0, k: 256.0, hop: 2.0, u: 5.0, tau: 2.5, delta: 0.01 };
        let p = weight_increasing_path(&g, &net, &EdgeAccess::all(), 0, &cq).unwrap().unwrap();
        assert!(p.len() - 1 <= wip_steps(4.0, 256.0, 2.5, 1, 0.01).unwrap() as usize);
        assert_eq!(*p.last().unwrap(), 2);
        for w in p.windows(2) {
            assert!(g.cost_between(w[0], w[1]).unwrap() <= cq.u);
            assert!(g.base.dist(w[0], w[1]) <= cq.hop);
        }
        assert!((128.0..=512.0).contains(&g.base.weight(2)));
        // Zero-hop case.
        let cq0 = ClimbQuery { m: 4.0, k: 4.0, ..cq };
        assert_eq!(weight_increasing_path(&g, &net, &EdgeAccess::all(), 0, &cq0).unwrap().unwrap(), vec![0]);
        // Dead end: nothing heavier than vertex 4's window nearby.
        let cq_far = ClimbQuery { m: 4.0, k: 1e6, ..cq };
        let err = weight_increasing_path(&g, &net, &EdgeAccess::all(), 0, &cq_far).unwrap().unwrap_err();
        assert!(err.step >= 1);

        // Common neighbour of 2 and 4: vertex 3 (the direct 2-4 edge is not a 2-path).
        let j = common_neighbour_join(&g, &net, &EdgeAccess::all(), 2, 4, 2.0).unwrap();
        assert_eq!(j, vec![2, 3, 4]);
        let oracle: Vec<usize> = (0..5)
            .filter(|&v| v != 2 && v != 4 && g.base.dist(2, v) <= 2.0)
            .filter(|&v| match (g.cost_between(2, v), g.cost_between(v, 4)) {
                (Some(a), Some(b)) => a + b <= 2f64.powf(2.0 * g.mu),
                _ => false,
            })
            .collect();
        assert_eq!(oracle, vec![3]);
        assert!(common_neighbour_join(&g, &net, &EdgeAccess::all(), 0, 4, 2.0).is_none());
    }

    /// Polylog instance on a small Poisson GIRG; returns successful builds.
    fn polylog_run(seed: u64, side: f64, depth: u32) -> Option<(CostedGraph, ExposureSlices, Hierarchy)> {
        let mut p = ModelParams::girg(2, 2.3, 1.5, 0.5);
        p.l_dist = LDist::Power { beta: 1.0 };
        p.vertex_model = VertexModel::Poisson;
        p.topology = TopologyKind::Euclidean;
        let cube = Cube::origin(2, side).unwrap();
        let g = crate::model::sample_graph(&p, &cube, None, seed).unwrap();
        let cg = assign_costs(Arc::new(g)).unwrap();
        let b = &cg.base;
        let pick = |x: f64| b.index.ball_query(&[x, x], 5.0).into_iter().next();
        let (y0, y1) = (pick(0.17 * side)?, pick(0.83 * side)?);
        let xi = b.dist(y0, y1);
        let par = PhaseParams::from(&b.params);
        let hp = choose_hierarchy_params(&par, xi, 0.05, 0.1, 0.01).ok()?.with_rounds(depth);
        let slices = label_edges(b, &vec![1.0 / (depth as f64 + 1.0); depth as usize + 1], seed).unwrap();
        let net = vec![true; cg.n()];
        let out = build_hierarchy(&cg, &slices, &net, y0, y1, &hp).unwrap();
        out.failure.is_none().then_some((cg, slices, out.hierarchy))
    }

    #[test]
    fn built_hierarchies_validate() {
        let mut ok = 0;
        for seed in 0..6 {
            let Some((cg, slices, h)) = polylog_run(seed, 120.0, 2) else { continue };
            ok += 1;
            let net = vec![true; cg.n()];
            let rep = validate_hierarchy(&h, &cg, Some(&slices), &net).unwrap();
            assert!(rep.valid(), "{:?}", rep.problems);
            let ap = assemble_path(&h, &cg).unwrap();
            assert_eq!(ap.start, h.vertex(&bs("01")).unwrap());
            assert_eq!(ap.end, h.vertex(&bs("10")).unwrap());
            // R = 2: the path is the single climbed bridge.
            assert_eq!(ap.walk, h.bridges[0].path);
            let partition: f64 = rep.marginal_costs.iter().sum();
            assert!((ap.walk_cost - partition).abs() <= 1e-9 * partition.max(1.0));
            assert!(ap.cost <= path_cost_bound(&h.params, h.xi, cg.mu));
            assert!(ap.deviation <= path_deviation_bound(&h.params, h.xi));

            // Independent recomputation of H2 at level 0.
            assert!(cg.base.dist(h.y0, h.y1) <= h.params.c_h as f64 * h.xi);

            // Perturbing one interior weight breaks H1.
            let v = h.vertex(&bs("01")).unwrap();
            let mut g2 = (*cg.base).clone();
            g2.vertices.weights[v] = 5.0 * h.params.w_bar;
            let cg2 = assign_costs(Arc::new(g2)).unwrap();
            let rep2 = validate_hierarchy(&h, &cg2, Some(&slices), &net).unwrap();
            assert!(!rep2.h1);
        }
        assert!(ok > 0, "no successful build at the test scale");
    }

    #[test]
    fn deeper_hierarchy_assembles() {
        let mut ok = 0;
        for seed in 0..6 {
            let Some((cg, slices, h)) = polylog_run(seed, 200.0, 3) else { continue };
            ok += 1;
            let net = vec![true; cg.n()];
            let rep = validate_hierarchy(&h, &cg, Some(&slices), &net).unwrap();
            assert!(rep.valid(), "{:?}", rep.problems);
            assert_eq!(h.bridges.len(), 3);
            assert_eq!(h.joins.len(), 2);
            let ap = assemble_path(&h, &cg).unwrap();
            let partition: f64 = rep.marginal_costs.iter().sum::<f64>()
                + h.joins.values().map(|j| distinct_edge_cost(&cg, j).unwrap()).sum::<f64>();
            // Joins may reuse bridge edges; the walk cost never exceeds the partitioned sum.
            assert!(ap.walk_cost <= partition + 1e-9);
            assert!(ap.cost <= ap.walk_cost + 1e-9);
            assert!(ap.cost <= path_cost_bound(&h.params, h.xi, cg.mu));
        }
        assert!(ok > 0, "no successful depth-3 build at the test scale");
    }

    #[test]
    fn wrong_slice_count_is_rejected() {
        let g = toy(&[1.0, 1.0], &[0.0, 100.0], &[(0, 1, 0.5)]);
        let par = PhaseParams::from(&g.base.params);
        let hp = choose_hierarchy_params(&par, 100.0, 0.05, 0.01, 0.01).unwrap().with_rounds(2);
        let sl = label_edges(&g.base, &[1.0], 0).unwrap();
        let err = build_hierarchy(&g, &sl, &[true, true], 0, 1, &hp).unwrap_err();
        assert_eq!(err, HierarchyError::SliceCount { expected: 3, got: 1 });
    }
}
