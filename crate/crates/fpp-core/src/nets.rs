//! Multi-scale pseudorandom nets: radius sets, nested box partitions, dyadic
//! weight covers, the goodness recursion and direct net verification.
//!
//! Levels are 1-based throughout (`i = 1..=R`), matching the radii `r_1 < .. < r_R`.

use crate::geometry::{CellIndex, Cube};
use crate::model::{Ell, GraphRealization, ModelParams, VertexSet};
use crate::rng::{self, Purpose};
use crate::theory::iterated_log;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("w0 search exceeded its budget")]
    SearchBudget,
    #[error("radius set is not well spaced: {0:?}")]
    NotWellSpaced(SpacingViolation),
    #[error("partition would have {0} boxes")]
    TooManyBoxes(f64),
}

/// Weight ceiling `f(r)` used by the nets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Ceiling {
    /// The full constant `((2d)^{2tau+d+8} log(16R/delta))^{-1/(tau-1)}`.
    Formula,
    /// `c r^{d/(tau-1)} (1 ∧ inf ell)^{1/(tau-1)}`; for desk-scale experiments.
    Scaled { c: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetParams {
    pub d: usize,
    pub tau: f64,
    pub ell: Ell,
    pub delta: f64,
    pub w0: f64,
    pub ceiling: Ceiling,
}

impl NetParams {
    /// Full-strength defaults: computed `w0` and the formula ceiling.
    pub fn new(model: &ModelParams, delta: f64) -> Result<Self, NetError> {
        if !(delta > 0.0 && delta < 1.0 / 16.0) {
            return Err(NetError::InvalidParam(format!("delta must lie in (0, 1/16), got {delta}")));
        }
        let w0 = compute_w0(&model.ell, model.tau)?;
        Ok(NetParams { d: model.d, tau: model.tau, ell: model.ell, delta, w0, ceiling: Ceiling::Formula })
    }

    pub fn with_w0(mut self, w0: f64) -> Self {
        self.w0 = w0;
        self
    }

    pub fn with_ceiling(mut self, ceiling: Ceiling) -> Self {
        self.ceiling = ceiling;
        self
    }

    /// `ell(w) w^{-(tau-1)}`, the tail density scale.
    pub fn tail_scale(&self, w: f64) -> f64 {
        self.ell.eval(w) * w.powf(-(self.tau - 1.0))
    }

    /// `sup_{[lo, hi]} ell · lo^{-(tau-1)}`, an upper bound for the tail scale
    /// anywhere in `[lo, hi]`.
    pub fn density_bound(&self, lo: f64, hi: f64) -> f64 {
        self.ell.sup_on(lo, hi) * lo.powf(1.0 - self.tau)
    }

    fn tail(&self, w: f64) -> f64 {
        if w < 1.0 {
            1.0
        } else {
            self.tail_scale(w)
        }
    }

    /// `P(W in [lo, hi))`.
    pub fn prob_interval(&self, lo: f64, hi: f64) -> f64 {
        (self.tail(lo) - self.tail(hi)).max(0.0)
    }

    pub fn f(&self, r: f64, big_r: usize) -> f64 {
        match self.ceiling {
            Ceiling::Formula => f_r_delta(r, big_r, self.delta, self.w0, &self.ell, self.tau, self.d),
            Ceiling::Scaled { c } => c * r.powf(self.d as f64 / (self.tau - 1.0)) * self.ell_factor(r),
        }
    }

    fn ell_factor(&self, r: f64) -> f64 {
        let top = r.powf(self.d as f64 / (self.tau - 1.0));
        let inf = if top < self.w0 { f64::INFINITY } else { self.ell.inf_on(self.w0, top) };
        inf.min(1.0).powf(1.0 / (self.tau - 1.0))
    }

    /// Smallest `r` with `f(r) >= w0`, by bisection on `log r`.
    pub fn f_threshold(&self, big_r: usize) -> f64 {
        let mut hi = 1.0f64;
        while self.f(hi, big_r) < self.w0 {
            hi *= 2.0;
            if hi > 1e300 {
                return f64::INFINITY;
            }
        }
        let mut lo = hi / 2.0;
        if self.f(lo, big_r) >= self.w0 {
            return lo.min(1.0);
        }
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if self.f(mid, big_r) >= self.w0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    fn net_constant(&self) -> f64 {
        let d = self.d as f64;
        (2.0 * d).powf(d + self.tau + 5.0)
    }
}

/// Smallest integer `w0 >= 1` such that for all `w >= w0` and `t in [1/2, 2]`:
/// `ell(w) w^{-(tau-1)} < 2^{-tau-8}` and `0.99 <= ell(tw)/ell(w) <= 1.01`.
///
/// Returned as `f64`: for logarithmic `ell` the ratio condition alone pushes
/// `w0` to about `e^{69}`. Above `2^53` the result is exact to relative `1e-15`.
pub fn compute_w0(ell: &Ell, tau: f64) -> Result<f64, NetError> {
    if !(tau > 2.0) {
        return Err(NetError::InvalidParam(format!("tau must exceed 2, got {tau}")));
    }
    let bound = 2f64.powf(-tau - 8.0);
    let good = |w: f64| -> bool {
        let lw = ell.eval(w);
        if !(lw * w.powf(-(tau - 1.0)) < bound) {
            return false;
        }
        (0..=32).all(|k| {
            let t = 0.5 * 4f64.powf(k as f64 / 32.0);
            let q = ell.eval(t * w) / lw;
            (0.99..=1.01).contains(&q)
        })
    };
    let mut floor = 1.0f64;
    for _attempt in 0..64 {
        // Doubling to a point where the predicate holds, then bisection.
        let mut hi = floor;
        while !good(hi) {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(NetError::SearchBudget);
            }
        }
        let mut lo = floor.max(hi / 2.0);
        let cand = if good(lo) {
            lo
        } else {
            while hi - lo > (hi * 1e-15).max(1.0) {
                let mid = if hi < 9.0e15 { ((lo + hi) / 2.0).floor() } else { 0.5 * (lo + hi) };
                if mid <= lo || mid >= hi {
                    break;
                }
                if good(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        };
        // Verify the predicate upward from the candidate on a fine geometric grid.
        let mut bad = None;
        let mut w = cand;
        while w < cand * 2f64.powi(40) {
            if !good(w) {
                bad = Some(w);
                break;
            }
            w *= 1.001;
        }
        match bad {
            None => return Ok(cand),
            Some(x) => floor = x.floor() + 1.0,
        }
    }
    Err(NetError::SearchBudget)
}

/// `f_{R,delta}(r)` with the full constants.
pub fn f_r_delta(r: f64, big_r: usize, delta: f64, w0: f64, ell: &Ell, tau: f64, d: usize) -> f64 {
    let df = d as f64;
    let top = r.powf(df / (tau - 1.0));
    let inf = if top < w0 { f64::INFINITY } else { ell.inf_on(w0, top) };
    let c = (2.0 * df).powf(2.0 * tau + df + 8.0) * (16.0 * big_r as f64 / delta).ln();
    top * inf.min(1.0).powf(1.0 / (tau - 1.0)) * c.powf(-1.0 / (tau - 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiusSet {
    pub radii: Vec<f64>,
}

impl RadiusSet {
    pub fn new(radii: Vec<f64>) -> Result<Self, NetError> {
        if radii.is_empty() || radii[0] <= 0.0 || radii.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(NetError::InvalidParam("radii must be positive and strictly increasing".into()));
        }
        Ok(RadiusSet { radii })
    }

    /// `r_i = top / ratio^{R - i}`.
    pub fn geometric(top: f64, ratio: f64, count: usize) -> Result<Self, NetError> {
        if count == 0 || !(ratio > 1.0) {
            return Err(NetError::InvalidParam("need count >= 1 and ratio > 1".into()));
        }
        Self::new((0..count).map(|i| top / ratio.powi((count - 1 - i) as i32)).collect())
    }

    /// The radii used to derive weak nets from strong ones:
    /// `r_i = (xi sqrt d)^{eta^{R-i}}` with `eta = 1 - eps/2`.
    pub fn weak_choice(xi: f64, eps: f64, d: usize) -> Result<Self, NetError> {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(NetError::InvalidParam("eps must lie in (0, 1/2)".into()));
        }
        let top = xi * (d as f64).sqrt();
        let eta = 1.0 - eps / 2.0;
        let ll = iterated_log(top, 2).unwrap_or(0.0);
        let l4 = iterated_log(top, 4).unwrap_or(0.0);
        let x = ((ll - l4 - (4.0 / eps).ln()) / (1.0 / eta).ln()).floor();
        let big_r = (2.0 + x).max(1.0) as usize;
        Self::new((1..=big_r).map(|i| top.powf(eta.powi((big_r - i) as i32))).collect())
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    /// `r_i` for 1-based `i`.
    pub fn r(&self, i: usize) -> f64 {
        self.radii[i - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpacingViolation {
    /// `"smallest-radius"` or `"radius-ratio"`.
    pub reason: &'static str,
    pub index: usize,
    pub value: f64,
    pub required: f64,
}

/// Exact evaluation of both well-spacedness inequalities.
pub fn is_well_spaced(rs: &RadiusSet, np: &NetParams) -> Result<(), SpacingViolation> {
    let big_r = rs.len();
    let rf = big_r as f64;
    let d = np.d as f64;
    let delta = np.delta;
    let small = (24.0 * d * (4.0 * rf / delta).ln().powf(1.0 / d))
        .max(np.w0.powf((np.tau - 1.0) / d))
        .max(np.f_threshold(big_r));
    if rs.r(1) < small {
        return Err(SpacingViolation { reason: "smallest-radius", index: 1, value: rs.r(1), required: small });
    }
    let ratio = 6.0 * rf.powf(1.0 / d) * ((2.0 * rf / delta).ln() / delta).powf(1.0 / d);
    for i in 2..=big_r {
        let q = rs.r(i) / rs.r(i - 1);
        if q < ratio {
            return Err(SpacingViolation { reason: "radius-ratio", index: i, value: q, required: ratio });
        }
    }
    Ok(())
}

/// How strictly radius sets are vetted before building a partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Spacing {
    /// Full well-spacedness.
    Strict,
    /// Only what the nested construction needs: `r_{i-1} <= r_i / 2`.
    Structural,
}

/// Nested partitions `P_1, .., P_R` of a cube. Level `i` cuts every axis into
/// `per_axis[i-1]` half-open intervals of length `sides[i-1]`; points on the
/// upper faces go to the last interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RPartition {
    pub min: Vec<f64>,
    pub xi: f64,
    pub sides: Vec<f64>,
    pub per_axis: Vec<u64>,
}

impl RPartition {
    pub fn levels(&self) -> usize {
        self.sides.len()
    }

    pub fn d(&self) -> usize {
        self.min.len()
    }

    /// `r'_i`.
    pub fn side(&self, i: usize) -> f64 {
        self.sides[i - 1]
    }

    pub fn boxes(&self, i: usize) -> u64 {
        self.per_axis[i - 1].pow(self.d() as u32)
    }

    /// Per-axis number of level-`i-1` boxes inside one level-`i` box.
    pub fn ratio(&self, i: usize) -> u64 {
        self.per_axis[i - 2] / self.per_axis[i - 1]
    }

    /// Per-axis indices at the finest level.
    /// Boundaries `min + k r'_1` of the finest grid decide membership exactly,
    /// so this agrees with [`Self::box_cube`] to the last bit.
    pub fn finest_index(&self, p: &[f64]) -> Vec<u64> {
        let m = self.per_axis[0];
        let s = self.side(1);
        p.iter()
            .zip(&self.min)
            .map(|(&x, &lo)| {
                let t = ((x - lo) / s).floor();
                let mut k = if t < 0.0 { 0 } else { (t as u64).min(m - 1) };
                while k > 0 && x < lo + k as f64 * s {
                    k -= 1;
                }
                while k + 1 < m && x >= lo + (k + 1) as f64 * s {
                    k += 1;
                }
                k
            })
            .collect()
    }

    /// Box id at level `i` from finest per-axis indices.
    pub fn box_from_finest(&self, i: usize, fine: &[u64]) -> u64 {
        let m = self.per_axis[i - 1];
        let f = self.per_axis[0] / m;
        fine.iter().rev().fold(0u64, |acc, &x| acc * m + x / f)
    }

    pub fn box_of(&self, i: usize, p: &[f64]) -> u64 {
        self.box_from_finest(i, &self.finest_index(p))
    }

    pub fn decode(&self, i: usize, b: u64) -> Vec<u64> {
        let m = self.per_axis[i - 1];
        let mut b = b;
        (0..self.d())
            .map(|_| {
                let x = b % m;
                b /= m;
                x
            })
            .collect()
    }

    /// The level-`i+1` box containing level-`i` box `b`.
    pub fn parent(&self, i: usize, b: u64) -> u64 {
        let r = self.ratio(i + 1);
        let m = self.per_axis[i];
        self.decode(i, b).iter().rev().fold(0u64, |acc, &x| acc * m + x / r)
    }

    /// Lower corner (on the finest grid) and side of box `b` at level `i`.
    pub fn box_cube(&self, i: usize, b: u64) -> (Vec<f64>, f64) {
        let f = self.per_axis[0] / self.per_axis[i - 1];
        let s1 = self.side(1);
        let lo = self.decode(i, b).iter().zip(&self.min).map(|(&k, &m)| m + (k * f) as f64 * s1).collect();
        (lo, self.side(i))
    }
}

/// Builds the nested partitions with `r'_R = xi` and
/// `r'_{i-1} = r'_i / ceil(sqrt(d) r'_i / r_{i-1})`.
pub fn build_r_partition(q: &Cube, rs: &RadiusSet, np: &NetParams, spacing: Spacing) -> Result<RPartition, NetError> {
    let d = q.dim();
    if d != np.d {
        return Err(NetError::InvalidParam("cube dimension differs from d".into()));
    }
    let sd = (d as f64).sqrt();
    let xi = q.side;
    let top = rs.r(rs.len());
    if ((top - xi * sd) / top).abs() > 1e-9 {
        return Err(NetError::InvalidParam(format!("r_R = {top} must equal side * sqrt(d) = {}", xi * sd)));
    }
    match spacing {
        Spacing::Strict => is_well_spaced(rs, np).map_err(NetError::NotWellSpaced)?,
        Spacing::Structural => {
            for i in 2..=rs.len() {
                if rs.r(i - 1) > rs.r(i) / 2.0 {
                    return Err(NetError::NotWellSpaced(SpacingViolation {
                        reason: "radius-ratio",
                        index: i,
                        value: rs.r(i) / rs.r(i - 1),
                        required: 2.0,
                    }));
                }
            }
        }
    }
    let big_r = rs.len();
    let mut per_axis = vec![1u64; big_r];
    let mut sides = vec![xi; big_r];
    for i in (2..=big_r).rev() {
        let k = (sd * sides[i - 1] / rs.r(i - 1)).ceil().max(1.0) as u64;
        per_axis[i - 2] = per_axis[i - 1] * k;
        sides[i - 2] = xi / per_axis[i - 2] as f64;
    }
    let total = (per_axis[0] as f64).powi(d as i32);
    if total > 5e7 {
        return Err(NetError::TooManyBoxes(total));
    }
    for i in 1..=big_r {
        let s = sides[i - 1];
        let r = rs.r(i);
        if s > r / sd * (1.0 + 1e-12) || s < r / (2.0 * sd) * (1.0 - 1e-12) {
            return Err(NetError::InvalidParam(format!("side {s} of level {i} outside [r/(2 sqrt d), r/sqrt d]")));
        }
    }
    Ok(RPartition { min: q.min.0.clone(), xi, sides, per_axis })
}

/// Base-2 cover of `[a, b]`: `I_j = [2^{j-1} a, 2^j a)` for `j = 1..=jmax`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Base2Cover {
    pub a: f64,
    pub b: f64,
    pub jmax: usize,
}

impl Base2Cover {
    /// Empty (`jmax = 0`) when `b < a`.
    pub fn new(a: f64, b: f64) -> Self {
        if !(b >= a) || !(a > 0.0) {
            return Base2Cover { a, b, jmax: 0 };
        }
        let mut j = ((b / a).log2().floor() as usize) + 1;
        while j > 1 && Self::lo_of(a, j) > b {
            j -= 1;
        }
        while Self::lo_of(a, j + 1) <= b {
            j += 1;
        }
        Base2Cover { a, b, jmax: j }
    }

    fn lo_of(a: f64, j: usize) -> f64 {
        a * 2f64.powi(j as i32 - 1)
    }

    pub fn interval(&self, j: usize) -> (f64, f64) {
        (Self::lo_of(self.a, j), Self::lo_of(self.a, j + 1))
    }

    /// Index of the interval containing `w`, if any.
    pub fn index_of(&self, w: f64) -> Option<usize> {
        if self.jmax == 0 || !(w >= self.a) {
            return None;
        }
        let mut j = ((w / self.a).log2().floor() as i64 + 1).max(1) as usize;
        while j > 1 && Self::lo_of(self.a, j) > w {
            j -= 1;
        }
        while Self::lo_of(self.a, j + 1) <= w {
            j += 1;
        }
        (j <= self.jmax).then_some(j)
    }
}

/// Partition plus weight cover, with `j_star(i)` and `mu_i(I_j)` per level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HyperrectangleCover {
    pub partition: RPartition,
    pub radii: RadiusSet,
    pub cover: Base2Cover,
    pub f_values: Vec<f64>,
    pub jstar: Vec<usize>,
    pub mu: Vec<Vec<f64>>,
}

impl HyperrectangleCover {
    pub fn levels(&self) -> usize {
        self.partition.levels()
    }

    pub fn jstar(&self, i: usize) -> usize {
        self.jstar[i - 1]
    }

    /// `mu_i(I_j)` for 1-based `i` and `j`.
    pub fn mu(&self, i: usize, j: usize) -> f64 {
        self.mu[i - 1][j - 1]
    }

    /// No level has any weight interval; the weight conditions are vacuous.
    pub fn weights_vacuous(&self) -> bool {
        self.jstar.iter().all(|&j| j == 0)
    }
}

pub fn build_cover(q: &Cube, rs: &RadiusSet, np: &NetParams, spacing: Spacing) -> Result<HyperrectangleCover, NetError> {
    let partition = build_r_partition(q, rs, np, spacing)?;
    let big_r = rs.len();
    let f_values: Vec<f64> = rs.radii.iter().map(|&r| np.f(r, big_r)).collect();
    let cover = Base2Cover::new(np.w0, f_values[big_r - 1]);
    let jstar: Vec<usize> = f_values.iter().map(|&f| cover.index_of(f).unwrap_or(0)).collect();
    let d = np.d as i32;
    let mu = (1..=big_r)
        .map(|i| {
            (1..=jstar[i - 1])
                .map(|j| {
                    let (lo, hi) = cover.interval(j);
                    partition.side(i).powi(d) * np.prob_interval(lo, hi)
                })
                .collect()
        })
        .collect();
    Ok(HyperrectangleCover { partition, radii: rs.clone(), cover, f_values, jstar, mu })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelTable {
    pub level: usize,
    pub jstar: usize,
    /// B1: few enough bad sub-boxes at the level below.
    pub b1: Vec<bool>,
    /// B2: the number of good vertices is within a constant factor of the volume.
    pub b2: Vec<bool>,
    /// B3: per weight interval, the good-vertex count is within a constant factor of `mu_i(I_j)`.
    pub b3: Vec<bool>,
    /// Number of `i`-good vertices per box.
    pub good_total: Vec<u32>,
    /// `good_weight[b * jstar + j - 1]`: `i`-good vertices of box `b` with weight in `I_j`.
    pub good_weight: Vec<u32>,
    pub bad_children: Vec<u32>,
}

impl LevelTable {
    pub fn good(&self, b: usize) -> bool {
        self.b1[b] && self.b2[b] && self.b3[b]
    }

    pub fn bad_boxes(&self) -> usize {
        (0..self.b1.len()).filter(|&b| !self.good(b)).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoodnessTable {
    pub levels: Vec<LevelTable>,
    /// Vertex ids inside `Q`.
    pub in_q: Vec<u32>,
    /// For each entry of `in_q`: the largest `i <= R` such that the vertex is `i`-good.
    pub good_level: Vec<u8>,
}

impl GoodnessTable {
    pub fn level(&self, i: usize) -> &LevelTable {
        &self.levels[i - 1]
    }

    pub fn q_good(&self) -> bool {
        self.levels.last().is_some_and(|t| t.good(0))
    }

    /// Sorted ids of the `i`-good vertices.
    pub fn good_set(&self, i: usize) -> Vec<u32> {
        self.in_q
            .iter()
            .zip(&self.good_level)
            .filter(|(_, &g)| g as usize >= i)
            .map(|(&v, _)| v)
            .collect()
    }
}

/// Bottom-up evaluation of box goodness and vertex goodness.
pub fn goodness_recursion(vs: &VertexSet, q: &Cube, cover: &HyperrectangleCover, np: &NetParams) -> GoodnessTable {
    let part = &cover.partition;
    let big_r = cover.levels();
    let rf = big_r as f64;
    let delta = np.delta;
    let d = np.d as i32;
    let in_q: Vec<u32> = (0..vs.len()).filter(|&v| q.contains(vs.pos(v))).map(|v| v as u32).collect();
    let fine: Vec<Vec<u64>> = in_q.iter().map(|&v| part.finest_index(vs.pos(v as usize))).collect();
    let widx: Vec<Option<usize>> = in_q.iter().map(|&v| cover.cover.index_of(vs.weights[v as usize])).collect();
    let mut good_level = vec![1u8; in_q.len()];
    let mut levels: Vec<LevelTable> = Vec::with_capacity(big_r);
    for i in 1..=big_r {
        let nb = part.boxes(i) as usize;
        let js = cover.jstar(i);
        let mut good_total = vec![0u32; nb];
        let mut good_weight = vec![0u32; nb * js];
        let mut boxes_of = Vec::with_capacity(in_q.len());
        for k in 0..in_q.len() {
            let b = part.box_from_finest(i, &fine[k]) as usize;
            boxes_of.push(b);
            if good_level[k] as usize >= i {
                good_total[b] += 1;
                if let Some(j) = widx[k] {
                    if j <= js {
                        good_weight[b * js + j - 1] += 1;
                    }
                }
            }
        }
        let mut bad_children = vec![0u32; nb];
        let allowed_bad = if i == 1 {
            f64::INFINITY
        } else {
            let prev = &levels[i - 2];
            for c in 0..prev.b1.len() {
                if !prev.good(c) {
                    bad_children[part.parent(i - 1, c as u64) as usize] += 1;
                }
            }
            2.0 * delta / rf * (part.ratio(i) as f64).powi(d)
        };
        let vol = part.side(i).powi(d);
        let lo_total = (0.5 - 2.0 * (i as f64 - 1.0) * delta / rf) * vol;
        let hi_total = 2.0 * vol;
        let lo_w = (1.0 - 2.0 * i as f64 * delta / rf) / 8.0;
        let mus = &cover.mu[i - 1];
        let flags: Vec<(bool, bool, bool)> = (0..nb)
            .into_par_iter()
            .map(|b| {
                let b1 = (bad_children[b] as f64) <= allowed_bad;
                let t = good_total[b] as f64;
                let b2 = t >= lo_total && t <= hi_total;
                let b3 = (0..js).all(|j| {
                    let c = good_weight[b * js + j] as f64;
                    c >= lo_w * mus[j] && c <= 8.0 * mus[j]
                });
                (b1, b2, b3)
            })
            .collect();
        let table = LevelTable {
            level: i,
            jstar: js,
            b1: flags.iter().map(|f| f.0).collect(),
            b2: flags.iter().map(|f| f.1).collect(),
            b3: flags.iter().map(|f| f.2).collect(),
            good_total,
            good_weight,
            bad_children,
        };
        if i < big_r {
            for k in 0..in_q.len() {
                if good_level[k] as usize == i && table.good(boxes_of[k]) {
                    good_level[k] = (i + 1) as u8;
                }
            }
        }
        levels.push(table);
    }
    GoodnessTable { levels, in_q, good_level }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum NetKind {
    Strong { delta: f64, radii: Vec<f64> },
    Weak { eps: f64, w1: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetCertificate {
    pub kind: NetKind,
    pub w0: f64,
    pub ceiling: Ceiling,
    /// Sorted vertex ids.
    pub members: Vec<u32>,
    pub verified: bool,
    pub weights_vacuous: bool,
}

impl NetCertificate {
    pub fn contains(&self, v: u32) -> bool {
        self.members.binary_search(&v).is_ok()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Membership as a dense flag vector over `n` vertices.
    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &v in &self.members {
            m[v as usize] = true;
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetViolation {
    /// `"cardinality"`, `"density"` or `"params"`.
    pub reason: &'static str,
    pub vertex: Option<u32>,
    pub r: f64,
    pub w: f64,
    pub count: f64,
    pub required: f64,
}

impl NetViolation {
    fn cardinality(count: usize, required: f64) -> Self {
        NetViolation { reason: "cardinality", vertex: None, r: 0.0, w: 0.0, count: count as f64, required }
    }
}

/// Spatial index over the members whose weight lies in `[lo, hi)`.
struct MemberIndex {
    weights: Vec<f64>,
    index: CellIndex,
}

impl MemberIndex {
    fn build(g: &GraphRealization, members: &[u32], lo: f64, hi: f64, cell: f64) -> Self {
        let ids: Vec<u32> =
            members.iter().copied().filter(|&v| (lo..hi).contains(&g.weight(v as usize))).collect();
        let mut coords = Vec::with_capacity(ids.len() * g.params.d);
        for &v in &ids {
            coords.extend_from_slice(g.pos(v as usize));
        }
        let weights = ids.iter().map(|&v| g.weight(v as usize)).collect();
        let index = CellIndex::build(&coords, &g.cube, g.topology(), Some(cell.max(1e-9)));
        MemberIndex { weights, index }
    }

    fn weights_within(&self, center: &[f64], r: f64) -> Vec<f64> {
        self.index.ball_query(center, r).into_iter().map(|k| self.weights[k]).collect()
    }
}

fn count_in(ws: &[f64], lo: f64, hi: f64, closed: bool) -> usize {
    ws.iter().filter(|&&w| w >= lo && (w < hi || (closed && w <= hi))).count()
}

/// Direct check of the net-defining density bound at every member, every radius
/// `r_i` and every interval `I_j` with `j <= j_star(i)`:
/// `|N ∩ B_{r_i}(v) × I_j| >= r_i^d sup_{I_j} ell · lo_j^{-(tau-1)} / (2d)^{d+tau+5}`.
/// The requirement uses `sup_{I_j} ell`; since `I_j ⊆ [w/2, 2w]` for all
/// `w ∈ I_j`, this covers every `w ∈ [w0, f(r_i)]`.
pub fn verify_strong_net(
    g: &GraphRealization,
    members: &[u32],
    q: &Cube,
    cover: &HyperrectangleCover,
    np: &NetParams,
) -> Result<(), NetViolation> {
    if (members.len() as f64) < q.volume() / 4.0 {
        return Err(NetViolation::cardinality(members.len(), q.volume() / 4.0));
    }
    let jtop = cover.jstar.iter().copied().max().unwrap_or(0);
    if jtop == 0 {
        return Ok(());
    }
    let (lo_all, _) = cover.cover.interval(1);
    let (_, hi_all) = cover.cover.interval(jtop);
    let c = np.net_constant();
    let d = np.d as i32;
    for i in 1..=cover.levels() {
        let js = cover.jstar(i);
        if js == 0 {
            continue;
        }
        let r = cover.radii.r(i);
        let idx = MemberIndex::build(g, members, lo_all, hi_all, r / 2.0);
        let res: Option<NetViolation> = members.par_iter().find_map_first(|&v| {
            let ws = idx.weights_within(g.pos(v as usize), r);
            (1..=js).find_map(|j| {
                let (lo, hi) = cover.cover.interval(j);
                let cnt = count_in(&ws, lo, hi, false);
                let req = r.powi(d) * np.density_bound(lo, hi) / c;
                ((cnt as f64) < req).then_some(NetViolation {
                    reason: "density",
                    vertex: Some(v),
                    r,
                    w: lo,
                    count: cnt as f64,
                    required: req,
                })
            })
        });
        if let Some(viol) = res {
            return Err(viol);
        }
    }
    Ok(())
}

/// Returns the `R`-good vertex set as a verified certificate when `Q` is `R`-good.
pub fn strong_net(
    g: &GraphRealization,
    q: &Cube,
    rs: &RadiusSet,
    np: &NetParams,
    spacing: Spacing,
) -> Result<Option<NetCertificate>, NetError> {
    if g.n() == 0 {
        return Ok(None);
    }
    let cover = build_cover(q, rs, np, spacing)?;
    let table = goodness_recursion(&g.vertices, q, &cover, np);
    Ok(certificate_from(g, q, &cover, &table, np))
}

pub fn certificate_from(
    g: &GraphRealization,
    q: &Cube,
    cover: &HyperrectangleCover,
    table: &GoodnessTable,
    np: &NetParams,
) -> Option<NetCertificate> {
    if !table.q_good() {
        return None;
    }
    let members = table.good_set(cover.levels());
    let verified = verify_strong_net(g, &members, q, cover, np).is_ok();
    Some(NetCertificate {
        kind: NetKind::Strong { delta: np.delta, radii: cover.radii.radii.clone() },
        w0: np.w0,
        ceiling: np.ceiling,
        members,
        verified,
        weights_vacuous: cover.weights_vacuous(),
    })
}

/// Dyadic cells `[x, min(2x, hi)]` covering `[lo, hi]`.
pub fn dyadic_cells(lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    if !(lo > 0.0) || !(hi >= lo) {
        return out;
    }
    let mut x = lo;
    loop {
        let top = (2.0 * x).min(hi);
        out.push((x, top));
        if top >= hi {
            break;
        }
        x = top;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakNetParams {
    pub eps: f64,
    pub w1: f64,
    /// Overrides the smallest radius `(log log (xi sqrt d))^{4/eps}`.
    pub r_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakNetReport {
    pub ok: bool,
    pub violation: Option<NetViolation>,
    pub r_range: (f64, f64),
    pub grid_points: usize,
}

/// Radius range of the weak-net condition for a cube of side `xi`.
pub fn weak_radius_range(xi: f64, d: usize, wp: &WeakNetParams) -> (f64, f64) {
    let top = xi * (d as f64).sqrt();
    let lo = wp.r_min.unwrap_or_else(|| iterated_log(top, 2).unwrap_or(0.0).max(0.0).powf(4.0 / wp.eps));
    (lo.max(f64::MIN_POSITIVE), top)
}

/// Conservative dyadic verification of the weak-net bound
/// `|N ∩ B_r(v) × [w/2, 2w]| >= r^{d(1-eps)} ell(w) w^{-(tau-1)}`
/// for `r` in the weak radius range and `w ∈ [w1, r^{d/(tau-1) - eps}]`.
/// On the cell `[r_k, r_k'] × [w_m, 2 w_m]` the left side is at least the count in
/// `B_{r_k} × [w_m, 2 w_m]` and the right side at most
/// `r_k'^{d(1-eps)} sup_{[w_m, 2 w_m]} ell · w_m^{-(tau-1)}`; passing is therefore
/// sufficient. See `docs/weak-net-grid.md`.
pub fn weak_net_check(
    g: &GraphRealization,
    members: &[u32],
    q: &Cube,
    np: &NetParams,
    wp: &WeakNetParams,
) -> WeakNetReport {
    let (r_lo, r_hi) = weak_radius_range(q.side, np.d, wp);
    let fail = |v: NetViolation, n| WeakNetReport { ok: false, violation: Some(v), r_range: (r_lo, r_hi), grid_points: n };
    if wp.w1 < np.w0 {
        let v = NetViolation { reason: "params", vertex: None, r: 0.0, w: wp.w1, count: 0.0, required: np.w0 };
        return fail(v, 0);
    }
    if (members.len() as f64) < q.volume() / 4.0 {
        return fail(NetViolation::cardinality(members.len(), q.volume() / 4.0), 0);
    }
    let d = np.d as f64;
    let expo = d / (np.tau - 1.0) - wp.eps;
    let mut grid = 0usize;
    for (ra, rb) in dyadic_cells(r_lo, r_hi) {
        let wcells = dyadic_cells(wp.w1, rb.powf(expo));
        if wcells.is_empty() {
            continue;
        }
        let w_hi = 2.0 * wcells.last().unwrap().0;
        let idx = MemberIndex::build(g, members, wp.w1, w_hi + f64::EPSILON * w_hi, ra / 2.0);
        let rhs_r = rb.powf(d * (1.0 - wp.eps));
        let res = members.par_iter().find_map_first(|&v| {
            let ws = idx.weights_within(g.pos(v as usize), ra);
            wcells.iter().find_map(|&(wm, _)| {
                let cnt = count_in(&ws, wm, 2.0 * wm, true);
                let req = rhs_r * np.density_bound(wm, 2.0 * wm);
                ((cnt as f64) < req).then_some(NetViolation {
                    reason: "density",
                    vertex: Some(v),
                    r: ra,
                    w: wm,
                    count: cnt as f64,
                    required: req,
                })
            })
        });
        grid += wcells.len();
        if let Some(v) = res {
            return fail(v, grid);
        }
    }
    WeakNetReport { ok: true, violation: None, r_range: (r_lo, r_hi), grid_points: grid }
}

/// The monotone extension from strong to weak nets: for every dyadic radius
/// `r ∈ [r_1, r_R]` with `r_j <= r`, and every `I_m` with `m <= j_star(j)`,
/// `|N ∩ B_r(v) × I_m| >= r_j^d sup_{I_m} ell · lo_m^{-(tau-1)} / (2d)^{d+tau+5}`.
pub fn strong_to_weak_step(
    g: &GraphRealization,
    cert: &NetCertificate,
    cover: &HyperrectangleCover,
    np: &NetParams,
) -> Result<(), NetViolation> {
    let rs = &cover.radii;
    let c = np.net_constant();
    let d = np.d as i32;
    for (ra, _) in dyadic_cells(rs.r(1), rs.r(rs.len())) {
        let j = (1..=rs.len()).rev().find(|&j| rs.r(j) <= ra * (1.0 + 1e-12)).unwrap_or(1);
        let js = cover.jstar(j);
        if js == 0 {
            continue;
        }
        let (lo_all, _) = cover.cover.interval(1);
        let (_, hi_all) = cover.cover.interval(js);
        let idx = MemberIndex::build(g, &cert.members, lo_all, hi_all, ra / 2.0);
        let rj = rs.r(j);
        let res = cert.members.par_iter().find_map_first(|&v| {
            let ws = idx.weights_within(g.pos(v as usize), ra);
            (1..=js).find_map(|m| {
                let (lo, hi) = cover.cover.interval(m);
                let cnt = count_in(&ws, lo, hi, false);
                let req = rj.powi(d) * np.density_bound(lo, hi) / c;
                ((cnt as f64) < req).then_some(NetViolation {
                    reason: "density",
                    vertex: Some(v),
                    r: ra,
                    w: lo,
                    count: cnt as f64,
                    required: req,
                })
            })
        });
        if let Some(v) = res {
            return Err(v);
        }
    }
    Ok(())
}

/// Adds vertices at the given positions with freshly drawn weights.
pub fn plant_vertices(vs: &mut VertexSet, model: &ModelParams, points: &[Vec<f64>], seed: u64) {
    let mut r = rng::stream(seed, Purpose::Weight, u64::MAX);
    for p in points {
        let u: f64 = 1.0 - r.random::<f64>();
        vs.push(p, model.weight_quantile(u));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExistenceEstimate {
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
    pub std_err: f64,
}

/// Fraction of vertex-set realizations on `q` for which `Q` is `R`-good and every
/// planted point is an `R`-good vertex. Edges are not needed and not sampled.
pub fn net_existence_rate(
    model: &ModelParams,
    q: &Cube,
    rs: &RadiusSet,
    np: &NetParams,
    spacing: Spacing,
    planted: &[Vec<f64>],
    trials: usize,
    seed: u64,
) -> Result<ExistenceEstimate, NetError> {
    let cover = build_cover(q, rs, np, spacing)?;
    let successes = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<bool, NetError> {
            let s = rng::mix(&[seed, t as u64]);
            let mut vs = crate::model::sample_vertices(model, q, None, s)
                .map_err(|e| NetError::InvalidParam(e.to_string()))?;
            let first_planted = vs.len() as u32;
            plant_vertices(&mut vs, model, planted, s);
            let table = goodness_recursion(&vs, q, &cover, np);
            if !table.q_good() {
                return Ok(false);
            }
            let good = table.good_set(cover.levels());
            Ok((0..planted.len() as u32).all(|k| good.binary_search(&(first_planted + k)).is_ok()))
        })
        .collect::<Result<Vec<bool>, _>>()?
        .into_iter()
        .filter(|&b| b)
        .count();
    let rate = successes as f64 / trials.max(1) as f64;
    Ok(ExistenceEstimate { trials, successes, rate, std_err: (rate * (1.0 - rate) / trials.max(1) as f64).sqrt() })
}
