//! Exact subquadratic edge sampler.
//!
//! Vertices are grouped into geometric weight layers and, per layer, sorted by
//! Morton code. For each pair of layers we recurse over pairs of neighbouring
//! dyadic cells. Children of a neighbouring pair that are no longer neighbours
//! form a block in which every pair has probability at most `p_bar` (kernel at
//! the block's minimal distance with the layers' maximal weights); such blocks
//! are sampled by geometric skipping and thinned by `p / p_bar`. Recursion stops
//! once refinement no longer lowers `p_bar`, and the remaining pairs get
//! individual coins. Every unordered pair is visited exactly once, so the law is
//! exactly that of independent coins.

use super::{pair_key, Edge, ModelParams, VertexSet};
use crate::geometry::{dist_sq, Cube, Topology};
#[cfg(test)]
use crate::geometry::dist;
use crate::rng::{self, hash_unit, mix, Purpose};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const DIRECT_PAIRS: usize = 4;
const DIRECT_BLOCK: usize = 4;

/// Ratio between consecutive layer boundaries. Within a layer weights differ by
/// at most this factor, so in the unsaturated range `p_bar` overshoots by at
/// most `base^(2 alpha)` (2 for alpha <= 2; thinner layers stop paying off for
/// large alpha because the distance slack dominates).
fn layer_base(alpha: f64) -> f64 {
    let e = if alpha.is_infinite() { 1.0 } else { (0.5 / alpha).max(0.25) };
    2f64.powf(e)
}

fn ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    std::f64::consts::PI.powf(h) / statrs::function::gamma::gamma(h + 1.0)
}

/// Rough expected edge count used for the memory cap.
pub fn expected_edge_count(params: &ModelParams, cube: &Cube, vs: &VertexSet) -> f64 {
    let n = vs.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let rho = n / cube.volume();
    let m = vs.weights.iter().sum::<f64>() / n;
    let vd = ball_volume(params.d);
    if params.alpha.is_infinite() {
        0.5 * n * rho * params.c * vd * m * m
    } else {
        0.5 * n * rho * params.c * vd * m * params.alpha / (params.alpha - 1.0)
    }
}

type Coords = [u64; 8];

struct Layer {
    /// (Morton code, vertex id), sorted.
    items: Vec<(u64, u32)>,
    wmax: f64,
}

struct Ctx<'a> {
    params: &'a ModelParams,
    vs: &'a VertexSet,
    topo: Topology,
    ew: f64,
    d: usize,
    levels: u32,
    side: f64,
    torus: bool,
}

impl Ctx<'_> {
    fn kernel(&self, r: f64, w1: f64, w2: f64) -> f64 {
        self.params.connection_prob(r, w1, w2, self.ew)
    }

    fn prob(&self, a: u32, b: u32) -> f64 {
        let (a, b) = (a as usize, b as usize);
        let s = dist_sq(self.vs.pos(a), self.vs.pos(b), self.topo);
        let rd = match self.d {
            1 => s.sqrt(),
            2 => s,
            d => s.powf(d as f64 / 2.0),
        };
        self.params.connection_prob_rd(rd, self.vs.weights[a], self.vs.weights[b], self.ew)
    }

    /// (neighbours?, minimal distance) of two cells at level `lvl`, given by
    /// their integer coordinates.
    fn relation(&self, lvl: u32, xa: &[u64], xb: &[u64]) -> (bool, f64) {
        let m = 1u64 << lvl;
        let s = self.side / m as f64;
        let mut neighbour = true;
        let mut gap2 = 0.0;
        for a in 0..self.d {
            let mut diff = xa[a].abs_diff(xb[a]);
            if self.torus {
                diff = diff.min(m - diff);
            }
            if diff > 1 {
                neighbour = false;
                let g = (diff - 1) as f64 * s;
                gap2 += g * g;
            }
        }
        (neighbour, gap2.sqrt())
    }

    fn coin(&self, a: u32, b: u32, rng: &mut ChaCha8Rng, out: &mut Vec<(u32, u32)>) {
        let p = self.prob(a, b);
        if p > 0.0 && rng.random::<f64>() < p {
            out.push((a, b));
        }
    }

    fn direct(
        &self,
        ra: &[(u64, u32)],
        rb: &[(u64, u32)],
        triangle: bool,
        rng: &mut ChaCha8Rng,
        out: &mut Vec<(u32, u32)>,
    ) {
        if triangle {
            for i in 0..ra.len() {
                for j in i + 1..ra.len() {
                    self.coin(ra[i].1, ra[j].1, rng, out);
                }
            }
        } else {
            for x in ra {
                for y in rb {
                    self.coin(x.1, y.1, rng, out);
                }
            }
        }
    }

    fn sparse(
        &self,
        ra: &[(u64, u32)],
        rb: &[(u64, u32)],
        p_bar: f64,
        rng: &mut ChaCha8Rng,
        out: &mut Vec<(u32, u32)>,
    ) {
        if p_bar <= 0.0 {
            return;
        }
        let total = ra.len() * rb.len();
        if total <= DIRECT_BLOCK || p_bar >= 0.25 {
            self.direct(ra, rb, false, rng, out);
            return;
        }
        let lq = (-p_bar).ln_1p();
        let nb = rb.len();
        let mut t: usize = 0;
        let mut first = true;
        loop {
            let skip = (rng::open01(rng).ln() / lq).floor();
            if skip >= total as f64 {
                return;
            }
            t = if first { skip as usize } else { t + 1 + skip as usize };
            first = false;
            if t >= total {
                return;
            }
            let (a, b) = (ra[t / nb].1, rb[t % nb].1);
            let p = self.prob(a, b);
            if rng.random::<f64>() * p_bar < p {
                out.push((a, b));
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        &self,
        lvl: u32,
        (ca, xa, ra): (u64, Coords, &[(u64, u32)]),
        (cb, xb, rb): (u64, Coords, &[(u64, u32)]),
        same_layer: bool,
        same_cell: bool,
        (wk, wl): (f64, f64),
        rng: &mut ChaCha8Rng,
        out: &mut Vec<(u32, u32)>,
    ) {
        if ra.is_empty() || rb.is_empty() {
            return;
        }
        let triangle = same_layer && same_cell;
        let pairs = if triangle { ra.len() * (ra.len() - 1) / 2 } else { ra.len() * rb.len() };
        if pairs == 0 {
            return;
        }
        let child_side = self.side / (1u64 << (lvl + 1)) as f64;
        if lvl == self.levels || pairs <= DIRECT_PAIRS || self.kernel(child_side, wk, wl) >= 0.5 {
            self.direct(ra, rb, triangle, rng, out);
            return;
        }
        let fan = 1usize << self.d;
        let shift = self.d as u32 * (self.levels - lvl - 1);
        let d = self.d;
        let split = |r: &'_ [(u64, u32)], code: u64, x: &Coords| -> Vec<(u64, Coords, std::ops::Range<usize>)> {
            let mut v = Vec::with_capacity(fan);
            let mut lo = 0;
            for c in 0..fan as u64 {
                let child = (code << d) | c;
                let hi = lo + r[lo..].partition_point(|(m, _)| (m >> shift) <= child);
                if hi > lo {
                    let mut cx = *x;
                    for a in 0..d {
                        cx[a] = 2 * x[a] + ((c >> (d - 1 - a)) & 1);
                    }
                    v.push((child, cx, lo..hi));
                }
                lo = hi;
            }
            v
        };
        let ka = split(ra, ca, &xa);
        let kb = if triangle { ka.clone() } else { split(rb, cb, &xb) };
        for (ia, (ya, pa, sa)) in ka.iter().enumerate() {
            if sa.is_empty() {
                continue;
            }
            for (ib, (yb, pb, sb)) in kb.iter().enumerate() {
                if triangle && ib < ia {
                    continue;
                }
                let (sub_a, sub_b) = (&ra[sa.clone()], &rb[sb.clone()]);
                let (neighbour, gap) = self.relation(lvl + 1, &pa[..d], &pb[..d]);
                if neighbour {
                    self.recurse(
                        lvl + 1,
                        (*ya, *pa, sub_a),
                        (*yb, *pb, sub_b),
                        same_layer,
                        same_cell && ya == yb,
                        (wk, wl),
                        rng,
                        out,
                    );
                } else {
                    self.sparse(sub_a, sub_b, self.kernel(gap, wk, wl), rng, out);
                }
            }
        }
    }
}

/// Samples the edge set on `vs`. `tag` separates independent copies on the same
/// vertex set (used by the exposure setting); `L` values are keyed by
/// `(seed, tag, pair)`.
pub fn sample_edges(params: &ModelParams, cube: &Cube, vs: &VertexSet, seed: u64, tag: u64) -> Vec<Edge> {
    let n = vs.len();
    if n < 2 {
        return Vec::new();
    }
    let d = params.d;
    assert!(d <= 8, "sampler supports d <= 8");
    let levels = (62 / d as u32).min(30);
    let scale = (1u64 << levels) as f64;
    let base_ln = layer_base(params.alpha).ln();
    let mut layers: Vec<Layer> = Vec::new();
    for v in 0..n {
        let w = vs.weights[v];
        let k = (w.max(1.0).ln() / base_ln).floor() as usize;
        if layers.len() <= k {
            layers.resize_with(k + 1, || Layer { items: Vec::new(), wmax: 0.0 });
        }
        let p = vs.pos(v);
        let mut code = 0u64;
        let q: Vec<u64> = (0..d)
            .map(|a| {
                let t = ((p[a] - cube.min.0[a]) / cube.side * scale).floor();
                t.clamp(0.0, scale - 1.0) as u64
            })
            .collect();
        for bit in (0..levels).rev() {
            for qa in &q {
                code = (code << 1) | ((qa >> bit) & 1);
            }
        }
        layers[k].items.push((code, v as u32));
        layers[k].wmax = layers[k].wmax.max(w);
    }
    for l in layers.iter_mut() {
        l.items.sort_unstable();
    }
    let topo = params.topology_for(cube);
    let ctx = Ctx {
        params,
        vs,
        topo,
        ew: params.mean_weight(),
        d,
        levels,
        side: cube.side,
        torus: matches!(topo, Topology::Torus { .. }),
    };
    let mut jobs = Vec::new();
    for k in 0..layers.len() {
        for l in k..layers.len() {
            if !layers[k].items.is_empty() && !layers[l].items.is_empty() {
                jobs.push((k, l));
            }
        }
    }
    let pairs: Vec<Vec<(u32, u32)>> = jobs
        .par_iter()
        .map(|&(k, l)| {
            let mut rng = rng::stream(seed, Purpose::EdgeBlock, mix(&[tag, k as u64, l as u64]));
            let mut out = Vec::new();
            ctx.recurse(
                0,
                (0, [0; 8], &layers[k].items),
                (0, [0; 8], &layers[l].items),
                k == l,
                true,
                (layers[k].wmax, layers[l].wmax),
                &mut rng,
                &mut out,
            );
            out
        })
        .collect();
    let mut edges: Vec<Edge> = pairs
        .into_iter()
        .flatten()
        .map(|(a, b)| {
            let (u, v) = if a < b { (a, b) } else { (b, a) };
            let key = pair_key(u, v);
            let l = params.l_dist.quantile(hash_unit(seed, Purpose::LValue, key, tag));
            Edge { u, v, l }
        })
        .collect();
    edges.sort_unstable_by_key(|e| pair_key(e.u, e.v));
    edges
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_vertices, ModelParams, TopologyKind};

    /// Expected number of edges by summing exact probabilities.
    fn exact_mean(params: &ModelParams, cube: &Cube, vs: &VertexSet) -> (f64, f64) {
        let topo = params.topology_for(cube);
        let ew = params.mean_weight();
        let (mut m, mut var) = (0.0, 0.0);
        for a in 0..vs.len() {
            for b in a + 1..vs.len() {
                let r = dist(vs.pos(a), vs.pos(b), topo);
                let p = params.connection_prob(r, vs.weights[a], vs.weights[b], ew);
                m += p;
                var += p * (1.0 - p);
            }
        }
        (m, var)
    }

    fn check_mean(params: &ModelParams, side: f64, seeds: u64) {
        let cube = Cube::origin(params.d, side).unwrap();
        let vs = sample_vertices(params, &cube, None, 77).unwrap();
        let (m, var) = exact_mean(params, &cube, &vs);
        let mut total = 0.0;
        for s in 0..seeds {
            total += sample_edges(params, &cube, &vs, s, 0).len() as f64;
        }
        let mean = total / seeds as f64;
        let sd = (var / seeds as f64).sqrt();
        assert!((mean - m).abs() < 5.0 * sd + 1e-9, "mean {mean} vs exact {m} (sd {sd})");
    }

    #[test]
    fn edge_count_matches_exact_expectation() {
        let mut p = ModelParams::girg(2, 2.5, 1.5, 0.0);
        check_mean(&p, 30.0, 40);
        p.topology = TopologyKind::Torus;
        check_mean(&p, 30.0, 40);
        p.alpha = 5.0;
        check_mean(&p, 30.0, 40);
        p.alpha = f64::INFINITY;
        check_mean(&p, 30.0, 40);
        let p1 = ModelParams::girg(1, 2.3, 2.5, 0.0);
        check_mean(&p1, 800.0, 40);
        let p3 = ModelParams::girg(3, 2.7, 3.0, 0.0);
        check_mean(&p3, 10.0, 40);
    }

    #[test]
    fn per_pair_frequency_close_to_kernel() {
        // A few close pairs probed individually over many seeds.
        let p = ModelParams::girg(2, 2.5, 2.0, 0.0);
        let cube = Cube::origin(2, 12.0).unwrap();
        let vs = sample_vertices(&p, &cube, None, 5).unwrap();
        let topo = p.topology_for(&cube);
        let ew = p.mean_weight();
        let probes: Vec<(u32, u32)> = (1..6).map(|b| (0, b)).collect();
        let mut hits = vec![0usize; probes.len()];
        let trials = 4000;
        for s in 0..trials {
            let e = sample_edges(&p, &cube, &vs, s, 0);
            for (i, &(a, b)) in probes.iter().enumerate() {
                if e.binary_search_by_key(&pair_key(a, b), |e| pair_key(e.u, e.v)).is_ok() {
                    hits[i] += 1;
                }
            }
        }
        for (i, &(a, b)) in probes.iter().enumerate() {
            let r = dist(vs.pos(a as usize), vs.pos(b as usize), topo);
            let q = p.connection_prob(r, vs.weights[a as usize], vs.weights[b as usize], ew);
            let f = hits[i] as f64 / trials as f64;
            let sd = (q * (1.0 - q) / trials as f64).sqrt();
            assert!((f - q).abs() <= 5.0 * sd + 1e-3, "pair {a}-{b}: {f} vs {q}");
        }
    }

    #[test]
    fn no_loops_or_duplicates() {
        let p = ModelParams::girg(2, 2.2, 1.3, 0.0);
        let cube = Cube::origin(2, 50.0).unwrap();
        let vs = sample_vertices(&p, &cube, None, 1).unwrap();
        let e = sample_edges(&p, &cube, &vs, 3, 0);
        assert!(e.iter().all(|e| e.u < e.v));
        assert!(e.windows(2).all(|w| pair_key(w[0].u, w[0].v) < pair_key(w[1].u, w[1].v)));
    }
}
