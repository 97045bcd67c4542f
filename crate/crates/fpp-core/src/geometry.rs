//! Points, metrics, cubes and a cell-list index for ball queries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("invalid cube side {0}")]
    BadSide(f64),
}

/// A point in R^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self, GeometryError> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Ok(Point(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Topology {
    Euclidean,
    /// Periodic boundary on a cube of the given side.
    Torus { side: f64 },
}

/// Axis-parallel cube `[min, min + side]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub min: Point,
    pub side: f64,
}

impl Cube {
    pub fn new(min: Point, side: f64) -> Result<Self, GeometryError> {
        if !(side > 0.0) || !side.is_finite() {
            return Err(GeometryError::BadSide(side));
        }
        Ok(Cube { min, side })
    }

    /// Cube `[0, side]^d`.
    pub fn origin(d: usize, side: f64) -> Result<Self, GeometryError> {
        Cube::new(Point(vec![0.0; d]), side)
    }

    pub fn dim(&self) -> usize {
        self.min.dim()
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim() as i32)
    }

    pub fn center(&self) -> Point {
        Point(self.min.0.iter().map(|m| m + self.side / 2.0).collect())
    }

    /// Closed-cube membership.
    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p
                .iter()
                .zip(&self.min.0)
                .all(|(x, m)| *x >= *m && *x <= m + self.side)
    }
}

/// Distance in the given topology.
pub fn distance(p: &[f64], q: &[f64], topo: Topology) -> Result<f64, GeometryError> {
    if p.len() != q.len() {
        return Err(GeometryError::DimensionMismatch(p.len(), q.len()));
    }
    Ok(dist(p, q, topo))
}

/// Unchecked distance; callers guarantee equal lengths.
#[inline]
pub fn dist(p: &[f64], q: &[f64], topo: Topology) -> f64 {
    dist_sq(p, q, topo).sqrt()
}

#[inline]
pub fn dist_sq(p: &[f64], q: &[f64], topo: Topology) -> f64 {
    let mut s = 0.0;
    match topo {
        Topology::Euclidean => {
            for (a, b) in p.iter().zip(q) {
                let t = a - b;
                s += t * t;
            }
        }
        Topology::Torus { side } => {
            for (a, b) in p.iter().zip(q) {
                let t = wrap_delta(a - b, side).abs();
                s += t * t;
            }
        }
    }
    s
}

/// Signed displacement of minimal absolute value among periodic images.
#[inline]
pub fn wrap_delta(delta: f64, side: f64) -> f64 {
    let mut t = delta % side;
    if t > side / 2.0 {
        t -= side;
    } else if t < -side / 2.0 {
        t += side;
    }
    t
}

/// Displacement `q - p` in the given topology (nearest image on the torus).
pub fn displacement(p: &[f64], q: &[f64], topo: Topology) -> Vec<f64> {
    match topo {
        Topology::Euclidean => q.iter().zip(p).map(|(b, a)| b - a).collect(),
        Topology::Torus { side } => q
            .iter()
            .zip(p)
            .map(|(b, a)| wrap_delta(b - a, side))
            .collect(),
    }
}

/// Distance from `x` to the segment `[a, b]`, all given as displacements
/// relative to a common origin (so torus unwrapping is the caller's job).
pub fn point_segment_distance(x: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut ab2 = 0.0;
    let mut dot = 0.0;
    for i in 0..x.len() {
        let ab = b[i] - a[i];
        ab2 += ab * ab;
        dot += (x[i] - a[i]) * ab;
    }
    let t = if ab2 > 0.0 { (dot / ab2).clamp(0.0, 1.0) } else { 0.0 };
    let mut s = 0.0;
    for i in 0..x.len() {
        let p = a[i] + t * (b[i] - a[i]) - x[i];
        s += p * p;
    }
    s.sqrt()
}

/// Uniform grid of cells over a cube, stored in CSR layout.
#[derive(Debug, Clone)]
pub struct CellIndex {
    d: usize,
    min: Vec<f64>,
    per_axis: usize,
    cell_size: f64,
    topology: Topology,
    start: Vec<u32>,
    ids: Vec<u32>,
    coords: Vec<f64>,
}

impl CellIndex {
    /// Builds the index over flat coordinates (`coords.len() == n * d`).
    /// Points outside the cube are clamped to the boundary cells.
    pub fn build(
        coords: &[f64],
        cube: &Cube,
        topology: Topology,
        cell_size: Option<f64>,
    ) -> CellIndex {
        let d = cube.dim();
        let n = if d == 0 { 0 } else { coords.len() / d };
        let target = cell_size
            .unwrap_or_else(|| (cube.volume() / n.max(1) as f64).powf(1.0 / d as f64).max(1.0));
        // Cap the number of cells so tiny cell sizes on huge cubes cannot blow up memory.
        let max_cells = (4 * n).max(1 << 10) as f64;
        let mut per_axis = (cube.side / target).floor().max(1.0);
        while per_axis.powi(d as i32) > max_cells && per_axis > 1.0 {
            per_axis = (per_axis / 2.0).floor().max(1.0);
        }
        let per_axis = per_axis as usize;
        let cell_size = cube.side / per_axis as f64;
        let ncells = per_axis.pow(d as u32);
        let mut idx = CellIndex {
            d,
            min: cube.min.0.clone(),
            per_axis,
            cell_size,
            topology,
            start: vec![0; ncells + 1],
            ids: vec![0; n],
            coords: coords.to_vec(),
        };
        let cell_of: Vec<usize> = (0..n).map(|v| idx.cell_of(&coords[v * d..(v + 1) * d])).collect();
        for &c in &cell_of {
            idx.start[c + 1] += 1;
        }
        for c in 0..ncells {
            idx.start[c + 1] += idx.start[c];
        }
        let mut fill = idx.start.clone();
        for (v, &c) in cell_of.iter().enumerate() {
            idx.ids[fill[c] as usize] = v as u32;
            fill[c] += 1;
        }
        idx
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn axis_cell(&self, x: f64, axis: usize) -> usize {
        let k = ((x - self.min[axis]) / self.cell_size).floor();
        k.clamp(0.0, (self.per_axis - 1) as f64) as usize
    }

    /// Flat cell index containing `p`.
    pub fn cell_of(&self, p: &[f64]) -> usize {
        let mut c = 0;
        for a in (0..self.d).rev() {
            c = c * self.per_axis + self.axis_cell(p[a], a);
        }
        c
    }

    /// Vertex ids stored in a flat cell.
    pub fn cell_members(&self, c: usize) -> &[u32] {
        &self.ids[self.start[c] as usize..self.start[c + 1] as usize]
    }

    fn point(&self, v: u32) -> &[f64] {
        let v = v as usize;
        &self.coords[v * self.d..(v + 1) * self.d]
    }

    /// Visits every vertex in cells overlapping the closed ball; each vertex once.
    fn for_each_candidate(&self, center: &[f64], r: f64, mut f: impl FnMut(u32)) {
        let m = self.per_axis as i64;
        let mut lo = vec![0i64; self.d];
        let mut hi = vec![0i64; self.d];
        for a in 0..self.d {
            let l = ((center[a] - r - self.min[a]) / self.cell_size).floor() as i64;
            let h = ((center[a] + r - self.min[a]) / self.cell_size).floor() as i64;
            match self.topology {
                Topology::Torus { .. } if h - l + 1 >= m => {
                    lo[a] = 0;
                    hi[a] = m - 1;
                }
                Topology::Torus { .. } => {
                    lo[a] = l;
                    hi[a] = h;
                }
                Topology::Euclidean => {
                    lo[a] = l.clamp(0, m - 1);
                    hi[a] = h.clamp(0, m - 1);
                }
            }
        }
        let mut cur = lo.clone();
        loop {
            let mut c = 0usize;
            for a in (0..self.d).rev() {
                c = c * self.per_axis + cur[a].rem_euclid(m) as usize;
            }
            for &v in self.cell_members(c) {
                f(v);
            }
            let mut a = 0;
            loop {
                if a == self.d {
                    return;
                }
                cur[a] += 1;
                if cur[a] <= hi[a] {
                    break;
                }
                cur[a] = lo[a];
                a += 1;
            }
        }
    }

    /// Ids of indexed vertices with distance at most `r` from `center`, sorted.
    pub fn ball_query(&self, center: &[f64], r: f64) -> Vec<usize> {
        self.annulus_query(center, -1.0, r)
    }

    /// Ids with `r_in < distance <= r_out`, sorted.
    pub fn annulus_query(&self, center: &[f64], r_in: f64, r_out: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if r_out < 0.0 || self.ids.is_empty() {
            return out;
        }
        let (lo2, hi2) = (
            if r_in < 0.0 { -1.0 } else { r_in * r_in },
            r_out * r_out,
        );
        self.for_each_candidate(center, r_out, |v| {
            let s = dist_sq(center, self.point(v), self.topology);
            if s > lo2 && s <= hi2 {
                out.push(v as usize);
            }
        });
        out.sort_unstable();
        out
    }
}
