//! Edge costs `L (W_u W_v)^mu`, cost distances and weight layers.

use crate::geometry::{displacement, point_segment_distance, Topology};
use crate::model::{GraphRealization, ModelParams};
use crate::rng::{self, Purpose};
use rand::Rng;
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::Arc;
use thiserror::Error;

pub const NONE: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("cost of edge {u}-{v} overflows")]
    Overflow { u: u32, v: u32 },
    #[error("vertex {0} does not exist")]
    NoSuchVertex(usize),
    #[error("empty layer")]
    EmptyLayer,
}

/// One draw of `L`.
pub fn sample_l<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> f64 {
    params.l_dist.quantile(rng::open01(rng))
}

/// A realization with a cost per edge and adjacency in CSR form.
#[derive(Debug, Clone)]
pub struct CostedGraph {
    pub base: Arc<GraphRealization>,
    pub mu: f64,
    /// Cost of `base.edges[i]`.
    pub costs: Vec<f64>,
    start: Vec<u32>,
    /// (neighbour, edge index)
    adj: Vec<(u32, u32)>,
}

fn build_adjacency(n: usize, edges: impl Iterator<Item = (u32, u32)> + Clone) -> (Vec<u32>, Vec<(u32, u32)>) {
    let mut start = vec![0u32; n + 1];
    for (u, v) in edges.clone() {
        start[u as usize + 1] += 1;
        start[v as usize + 1] += 1;
    }
    for i in 0..n {
        start[i + 1] += start[i];
    }
    let mut fill = start.clone();
    let mut adj = vec![(0, 0); start[n] as usize];
    for (i, (u, v)) in edges.enumerate() {
        adj[fill[u as usize] as usize] = (v, i as u32);
        fill[u as usize] += 1;
        adj[fill[v as usize] as usize] = (u, i as u32);
        fill[v as usize] += 1;
    }
    (start, adj)
}

impl CostedGraph {
    fn with_costs(base: Arc<GraphRealization>, mu: f64, costs: Vec<f64>) -> Self {
        let (start, adj) = build_adjacency(base.n(), base.edges.iter().map(|e| (e.u, e.v)));
        CostedGraph { base, mu, costs, start, adj }
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    /// (neighbour, edge index) pairs of `v`.
    pub fn neighbours(&self, v: usize) -> &[(u32, u32)] {
        &self.adj[self.start[v] as usize..self.start[v + 1] as usize]
    }

    pub fn degree(&self, v: usize) -> usize {
        (self.start[v + 1] - self.start[v]) as usize
    }

    /// Edge index of `uv`, if present.
    pub fn edge_between(&self, u: usize, v: usize) -> Option<usize> {
        let (a, b) = if self.degree(u) <= self.degree(v) { (u, v) } else { (v, u) };
        self.neighbours(a)
            .iter()
            .find(|(x, _)| *x as usize == b)
            .map(|(_, e)| *e as usize)
    }

    pub fn cost_between(&self, u: usize, v: usize) -> Option<f64> {
        self.edge_between(u, v).map(|e| self.costs[e])
    }
}

/// Costs with the model's own `mu`.
pub fn assign_costs(g: Arc<GraphRealization>) -> Result<CostedGraph, CostError> {
    let mu = g.params.mu;
    assign_costs_with_mu(g, mu)
}

/// Costs with an explicit `mu`, reusing the realization's `L` values.
pub fn assign_costs_with_mu(g: Arc<GraphRealization>, mu: f64) -> Result<CostedGraph, CostError> {
    let mut costs = Vec::with_capacity(g.edges.len());
    for e in &g.edges {
        let c = edge_cost(e.l, g.weight(e.u as usize), g.weight(e.v as usize), mu);
        if !c.is_finite() {
            return Err(CostError::Overflow { u: e.u, v: e.v });
        }
        costs.push(c);
    }
    Ok(CostedGraph::with_costs(g, mu, costs))
}

/// Unit costs: cost distance becomes graph distance.
pub fn unit_costs(g: Arc<GraphRealization>) -> CostedGraph {
    let m = g.edges.len();
    CostedGraph::with_costs(g, 0.0, vec![1.0; m])
}

#[inline]
pub fn edge_cost(l: f64, wu: f64, wv: f64, mu: f64) -> f64 {
    if mu == 0.0 {
        l
    } else {
        l * (wu * wv).powf(mu)
    }
}

/// Single-source shortest paths.
#[derive(Debug, Clone)]
pub struct DistanceField {
    pub source: usize,
    /// `f64::INFINITY` marks unreachable (or not settled after an early exit).
    pub dist: Vec<f64>,
    pub parent: Vec<u32>,
    /// Settling rank, `NONE` for unsettled vertices.
    pub order: Vec<u32>,
    pub settled: usize,
}

impl DistanceField {
    pub fn reachable(&self, v: usize) -> bool {
        self.dist[v].is_finite()
    }

    /// Vertex sequence from the source to `v`.
    pub fn path_to(&self, v: usize) -> Option<Vec<usize>> {
        if !self.reachable(v) {
            return None;
        }
        let mut p = vec![v];
        let mut cur = v;
        while cur != self.source {
            cur = self.parent[cur] as usize;
            p.push(cur);
        }
        p.reverse();
        Some(p)
    }
}

/// Label-setting shortest paths with lazy deletion; ties settle by vertex id.
/// With `targets`, stops once all of them are settled.
pub fn cost_distance(cg: &CostedGraph, src: usize, targets: Option<&[usize]>) -> Result<DistanceField, CostError> {
    let n = cg.n();
    if src >= n {
        return Err(CostError::NoSuchVertex(src));
    }
    if let Some(t) = targets.and_then(|t| t.iter().find(|&&t| t >= n)) {
        return Err(CostError::NoSuchVertex(*t));
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![NONE; n];
    let mut order = vec![NONE; n];
    let mut remaining = match targets {
        Some(t) => {
            let mut t = t.to_vec();
            t.sort_unstable();
            t.dedup();
            t.len()
        }
        None => usize::MAX,
    };
    let mut is_target = vec![false; if targets.is_some() { n } else { 0 }];
    if let Some(t) = targets {
        for &x in t {
            is_target[x] = true;
        }
    }
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(Reverse((0f64.to_bits(), src as u32)));
    let mut settled = 0usize;
    while let Some(Reverse((bits, u))) = heap.pop() {
        let u = u as usize;
        let du = f64::from_bits(bits);
        if order[u] != NONE || du > dist[u] {
            continue;
        }
        order[u] = settled as u32;
        settled += 1;
        if !is_target.is_empty() && is_target[u] {
            remaining -= 1;
            if remaining == 0 {
                break;
            }
        }
        for &(v, e) in cg.neighbours(u) {
            let v = v as usize;
            if order[v] != NONE {
                continue;
            }
            let nd = du + cg.costs[e as usize];
            if nd < dist[v] || (nd == dist[v] && (u as u32) < parent[v]) {
                dist[v] = nd;
                parent[v] = u as u32;
                heap.push(Reverse((nd.to_bits(), v as u32)));
            }
        }
    }
    // Tentative labels of unsettled vertices are not distances.
    for v in 0..n {
        if order[v] == NONE {
            dist[v] = f64::INFINITY;
            parent[v] = NONE;
        }
    }
    Ok(DistanceField { source: src, dist, parent, order, settled })
}

/// Breadth-first hop counts (`u32::MAX` for unreachable).
pub fn hop_distance(cg: &CostedGraph, src: usize) -> Vec<u32> {
    let mut hops = vec![NONE; cg.n()];
    let mut queue = std::collections::VecDeque::new();
    hops[src] = 0;
    queue.push_back(src);
    while let Some(u) = queue.pop_front() {
        for &(v, _) in cg.neighbours(u) {
            if hops[v as usize] == NONE {
                hops[v as usize] = hops[u] + 1;
                queue.push_back(v as usize);
            }
        }
    }
    hops
}

/// Infection rank of every vertex from `src` (`None` if unreachable).
pub fn infection_heatmap(cg: &CostedGraph, src: usize) -> Result<Vec<Option<u32>>, CostError> {
    let f = cost_distance(cg, src, None)?;
    Ok(f.order.iter().map(|&r| (r != NONE).then_some(r)).collect())
}

/// Vertex ids of the largest connected component, sorted.
pub fn largest_component(cg: &CostedGraph) -> Vec<usize> {
    let n = cg.n();
    let mut comp = vec![NONE; n];
    let mut best: Vec<usize> = Vec::new();
    let mut stack = Vec::new();
    for s in 0..n {
        if comp[s] != NONE {
            continue;
        }
        let mut members = vec![s];
        comp[s] = s as u32;
        stack.push(s);
        while let Some(u) = stack.pop() {
            for &(v, _) in cg.neighbours(u) {
                if comp[v as usize] == NONE {
                    comp[v as usize] = s as u32;
                    members.push(v as usize);
                    stack.push(v as usize);
                }
            }
        }
        if members.len() > best.len() {
            best = members;
        }
    }
    best.sort_unstable();
    best
}

/// Positions along a path, unwrapped step by step on the torus.
pub fn unwrap_path(g: &GraphRealization, path: &[usize]) -> Vec<Vec<f64>> {
    let topo = g.topology();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(path.len());
    for (i, &v) in path.iter().enumerate() {
        if i == 0 {
            out.push(g.pos(v).to_vec());
            continue;
        }
        let prev = &out[i - 1];
        let step = match topo {
            Topology::Euclidean => displacement(g.pos(path[i - 1]), g.pos(v), topo),
            Topology::Torus { .. } => displacement(g.pos(path[i - 1]), g.pos(v), topo),
        };
        out.push(prev.iter().zip(&step).map(|(a, s)| a + s).collect());
    }
    out
}

/// Maximal distance of path vertices from the segment joining `u` and `v`
/// (positions in the same unwrapped frame as the path).
pub fn deviation_from(positions: &[Vec<f64>], u: &[f64], v: &[f64]) -> f64 {
    positions
        .iter()
        .map(|x| point_segment_distance(x, u, v))
        .fold(0.0, f64::max)
}

/// Deviation of a path from the segment between its own endpoints.
pub fn path_deviation(g: &GraphRealization, path: &[usize]) -> f64 {
    if path.len() < 2 {
        return 0.0;
    }
    let pos = unwrap_path(g, path);
    let (a, b) = (pos[0].clone(), pos[pos.len() - 1].clone());
    deviation_from(&pos, &a, &b)
}

/// Total cost of a path, counting every distinct edge once; `None` if an edge is missing.
pub fn path_cost(cg: &CostedGraph, path: &[usize]) -> Option<f64> {
    let mut seen = std::collections::HashSet::new();
    let mut total = 0.0;
    for w in path.windows(2) {
        let e = cg.edge_between(w[0], w[1])?;
        if seen.insert(e) {
            total += cg.costs[e];
        }
    }
    Some(total)
}

/// Subgraph on weights in `[M, 2M]` with edges of cost at most `M^{3 mu}`.
#[derive(Debug, Clone)]
pub struct LayerGraph {
    pub m: f64,
    /// Global vertex ids, sorted.
    pub vertices: Vec<usize>,
    /// (local u, local v, cost, global edge index)
    pub edges: Vec<(u32, u32, f64, u32)>,
    start: Vec<u32>,
    adj: Vec<(u32, u32)>,
}

impl LayerGraph {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    fn neighbours(&self, v: usize) -> &[(u32, u32)] {
        &self.adj[self.start[v] as usize..self.start[v + 1] as usize]
    }

    /// Shortest paths inside the layer from local vertex `s`: (dist, parent).
    fn dijkstra(&self, s: usize) -> (Vec<f64>, Vec<u32>) {
        let n = self.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut parent = vec![NONE; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[s] = 0.0;
        heap.push(Reverse((0f64.to_bits(), s as u32)));
        while let Some(Reverse((bits, u))) = heap.pop() {
            let u = u as usize;
            if done[u] {
                continue;
            }
            done[u] = true;
            let du = f64::from_bits(bits);
            for &(v, e) in self.neighbours(u) {
                let nd = du + self.edges[e as usize].2;
                if nd < dist[v as usize] {
                    dist[v as usize] = nd;
                    parent[v as usize] = u as u32;
                    heap.push(Reverse((nd.to_bits(), v)));
                }
            }
        }
        (dist, parent)
    }
}

pub fn weight_layer(cg: &CostedGraph, m: f64) -> LayerGraph {
    let g = &cg.base;
    let vertices: Vec<usize> = (0..g.n()).filter(|&v| g.weight(v) >= m && g.weight(v) <= 2.0 * m).collect();
    let mut local = vec![NONE; g.n()];
    for (i, &v) in vertices.iter().enumerate() {
        local[v] = i as u32;
    }
    let cap = m.powf(3.0 * cg.mu);
    let edges: Vec<(u32, u32, f64, u32)> = g
        .edges
        .iter()
        .enumerate()
        .filter(|(i, e)| local[e.u as usize] != NONE && local[e.v as usize] != NONE && cg.costs[*i] <= cap)
        .map(|(i, e)| (local[e.u as usize], local[e.v as usize], cg.costs[i], i as u32))
        .collect();
    let (start, adj) = build_adjacency(vertices.len(), edges.iter().map(|e| (e.0, e.1)));
    LayerGraph { m, vertices, edges, start, adj }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LinearityReport {
    pub kappa_hat: f64,
    pub dev_hat: f64,
    pub connect_rate: f64,
    pub pairs: usize,
    pub connected: usize,
}

/// Which pairs of layer vertices to probe.
#[derive(Debug, Clone, Copy)]
pub enum PairPlan {
    All,
    Sample { pairs: usize, seed: u64 },
}

/// Linear-distance diagnostic on a weight layer.
pub fn layer_linearity_report(cg: &CostedGraph, layer: &LayerGraph, plan: PairPlan) -> Result<LinearityReport, CostError> {
    let k = layer.len();
    if k < 2 {
        return Err(CostError::EmptyLayer);
    }
    let mut pairs: Vec<(usize, usize)> = match plan {
        PairPlan::All => (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect(),
        PairPlan::Sample { pairs, seed } => {
            let mut r = rng::stream(seed, Purpose::Pairs, 0);
            (0..pairs)
                .map(|_| {
                    let a = r.random_range(0..k);
                    let mut b = r.random_range(0..k - 1);
                    if b >= a {
                        b += 1;
                    }
                    (a.min(b), a.max(b))
                })
                .collect()
        }
    };
    pairs.sort_unstable();
    let g = &cg.base;
    let mut rep = LinearityReport { kappa_hat: 0.0, dev_hat: 0.0, connect_rate: 0.0, pairs: pairs.len(), connected: 0 };
    let mut i = 0;
    while i < pairs.len() {
        let a = pairs[i].0;
        let (dist, parent) = layer.dijkstra(a);
        while i < pairs.len() && pairs[i].0 == a {
            let b = pairs[i].1;
            i += 1;
            if !dist[b].is_finite() {
                continue;
            }
            rep.connected += 1;
            let (ga, gb) = (layer.vertices[a], layer.vertices[b]);
            let euclid = g.dist(ga, gb);
            if euclid > 0.0 {
                rep.kappa_hat = rep.kappa_hat.max(dist[b] / euclid);
            }
            let mut path = vec![gb];
            let mut cur = b;
            while cur != a {
                cur = parent[cur] as usize;
                path.push(layer.vertices[cur]);
            }
            rep.dev_hat = rep.dev_hat.max(path_deviation(g, &path));
        }
    }
    rep.connect_rate = rep.connected as f64 / rep.pairs as f64;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Cube;
    use crate::model::{Edge, ModelParams, VertexSet};

    pub(crate) fn tiny(weights: &[f64], pos: &[f64], edges: &[(u32, u32, f64)], mu: f64) -> CostedGraph {
        let mut p = ModelParams::girg(1, 2.5, 2.0, mu);
        p.topology = crate::model::TopologyKind::Euclidean;
        let vs = VertexSet { d: 1, coords: pos.to_vec(), weights: weights.to_vec() };
        let e = edges.iter().map(|&(u, v, l)| Edge { u, v, l }).collect();
        let g = GraphRealization::from_parts(p, Cube::origin(1, 100.0).unwrap(), vs, e, 0).unwrap();
        assign_costs(Arc::new(g)).unwrap()
    }

    #[test]
    fn cost_examples() {
        assert_eq!(edge_cost(0.5, 2.0, 1.0, 1.0), 1.0);
        assert_eq!(edge_cost(0.7, 5.0, 9.0, 0.0), 0.7);
        let cg = tiny(&[1.0, 2.0, 1.0], &[0.0, 1.0, 2.0], &[(0, 1, 0.5), (1, 2, 0.25), (0, 2, 3.0)], 1.0);
        assert_eq!(cg.costs, vec![1.0, 3.0, 0.5]);
        let f = cost_distance(&cg, 0, None).unwrap();
        assert_eq!(f.dist[2], 1.5);
        assert_eq!(f.path_to(2).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn isolated_source() {
        let cg = tiny(&[1.0, 1.0], &[0.0, 5.0], &[], 1.0);
        let f = cost_distance(&cg, 0, None).unwrap();
        assert_eq!(f.dist[0], 0.0);
        assert!(f.dist[1].is_infinite());
        assert_eq!(infection_heatmap(&cg, 0).unwrap(), vec![Some(0), None]);
    }

    #[test]
    fn early_exit_settles_targets() {
        let cg = tiny(&[1.0; 4], &[0.0, 1.0, 2.0, 3.0], &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)], 0.0);
        let f = cost_distance(&cg, 0, Some(&[1])).unwrap();
        assert_eq!(f.dist[1], 1.0);
        assert!(f.dist[3].is_infinite());
        assert!(cost_distance(&cg, 9, None).is_err());
    }

    #[test]
    fn overflow_flagged() {
        let mut p = ModelParams::girg(1, 2.5, 2.0, 400.0);
        p.topology = crate::model::TopologyKind::Euclidean;
        let vs = VertexSet { d: 1, coords: vec![0.0, 1.0], weights: vec![1e3, 1e3] };
        let g = GraphRealization::from_parts(p, Cube::origin(1, 10.0).unwrap(), vs, vec![Edge { u: 0, v: 1, l: 1.0 }], 0).unwrap();
        assert!(matches!(assign_costs(Arc::new(g)), Err(CostError::Overflow { .. })));
    }

    #[test]
    fn layer_examples() {
        let cg = tiny(&[1.0, 1.5, 2.0, 5.0], &[0.0, 2.0, 4.0, 6.0], &[(0, 1, 0.5), (1, 2, 1.0), (2, 3, 0.1)], 0.0);
        assert!(weight_layer(&cg, 100.0).is_empty());
        let l = weight_layer(&cg, 1.0);
        assert_eq!(l.vertices, vec![0, 1, 2]);
        assert_eq!(l.edges.len(), 2);
        let two = tiny(&[1.0, 1.0], &[0.0, 4.0], &[(0, 1, 0.5)], 0.0);
        let rep = layer_linearity_report(&two, &weight_layer(&two, 1.0), PairPlan::All).unwrap();
        assert_eq!(rep.kappa_hat, 0.5 / 4.0);
        assert_eq!(rep.connect_rate, 1.0);
        let split = tiny(&[1.0; 3], &[0.0, 1.0, 9.0], &[(0, 1, 1.0)], 0.0);
        let rep = layer_linearity_report(&split, &weight_layer(&split, 1.0), PairPlan::All).unwrap();
        assert_eq!(rep.connected, 1);
        assert!((rep.connect_rate - 1.0 / 3.0).abs() < 1e-15);
        assert!(layer_linearity_report(&split, &weight_layer(&split, 50.0), PairPlan::All).is_err());
    }

    #[test]
    fn deviation_of_detour() {
        let cg = tiny(&[1.0; 3], &[0.0, 5.0, 2.0], &[(0, 1, 1.0), (1, 2, 1.0)], 0.0);
        // Path 0 -> 1 -> 2 overshoots the segment [0, 2] by 3.
        assert_eq!(path_deviation(&cg.base, &[0, 1, 2]), 3.0);
        assert_eq!(path_cost(&cg, &[0, 1, 2, 1]), Some(2.0));
        assert_eq!(path_cost(&cg, &[0, 2]), None);
    }
}
