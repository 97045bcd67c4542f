//! Line-oriented text format for realizations.
//!
//! ```text
//! fpp-graph v1 <d> <tau> <alpha> <mu> <beta> <seed>
//! # cube <min_1> .. <min_d> <side>
//! # topology torus|euclidean
//! # kernel <c> <c_lower> <c_upper>
//! # ldist power <beta> | exponential <rate> | constant <value>
//! # ell one | logpower <a>
//! # vertices lattice|poisson
//! v <id> <x_1> .. <x_d> <w>
//! e <u> <v> <L>
//! ```
//!
//! Floats use Rust's shortest round-trip representation, so a write/read
//! cycle is bit-exact. Infinity is written as `inf`.

use crate::geometry::{Cube, Point};
use crate::model::{Edge, Ell, GraphRealization, LDist, ModelParams, TopologyKind, VertexModel, VertexSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

fn f(x: f64) -> String {
    format!("{x:e}")
}

pub fn write_graph<W: Write>(g: &GraphRealization, w: W) -> Result<(), IoError> {
    let mut w = BufWriter::new(w);
    let p = &g.params;
    writeln!(w, "fpp-graph v1 {} {} {} {} {} {}", p.d, f(p.tau), f(p.alpha), f(p.mu), f(p.beta()), g.seed)?;
    let mins: Vec<String> = g.cube.min.0.iter().map(|&x| f(x)).collect();
    writeln!(w, "# cube {} {}", mins.join(" "), f(g.cube.side))?;
    let topo = match p.topology {
        TopologyKind::Torus => "torus",
        TopologyKind::Euclidean => "euclidean",
    };
    writeln!(w, "# topology {topo}")?;
    writeln!(w, "# kernel {} {} {}", f(p.c), f(p.c_lower), f(p.c_upper))?;
    match p.l_dist {
        LDist::Power { beta } => writeln!(w, "# ldist power {}", f(beta))?,
        LDist::Exponential { rate } => writeln!(w, "# ldist exponential {}", f(rate))?,
        LDist::Constant { value } => writeln!(w, "# ldist constant {}", f(value))?,
    }
    match p.ell {
        Ell::One => writeln!(w, "# ell one")?,
        Ell::LogPower { a } => writeln!(w, "# ell logpower {}", f(a))?,
    }
    let vm = match p.vertex_model {
        VertexModel::Lattice => "lattice",
        VertexModel::Poisson => "poisson",
    };
    writeln!(w, "# vertices {vm}")?;
    for v in 0..g.n() {
        write!(w, "v {v}")?;
        for &x in g.pos(v) {
            write!(w, " {}", f(x))?;
        }
        writeln!(w, " {}", f(g.weight(v)))?;
    }
    for e in &g.edges {
        writeln!(w, "e {} {} {}", e.u, e.v, f(e.l))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_graph<R: BufRead>(r: R) -> Result<GraphRealization, IoError> {
    let mut lines = r.lines().enumerate();
    let err = |line: usize, msg: &str| IoError::Parse { line: line + 1, msg: msg.to_string() };
    let num = |line: usize, s: Option<&str>| -> Result<f64, IoError> {
        s.ok_or_else(|| err(line, "missing field"))?
            .parse::<f64>()
            .map_err(|e| err(line, &e.to_string()))
    };
    let (ln, header) = lines.next().ok_or_else(|| err(0, "empty file"))?;
    let header = header?;
    let mut it = header.split_whitespace();
    if it.next() != Some("fpp-graph") || it.next() != Some("v1") {
        return Err(err(ln, "expected header `fpp-graph v1`"));
    }
    let d = num(ln, it.next())? as usize;
    let tau = num(ln, it.next())?;
    let alpha = num(ln, it.next())?;
    let mu = num(ln, it.next())?;
    let beta = num(ln, it.next())?;
    let seed: u64 = it
        .next()
        .ok_or_else(|| err(ln, "missing seed"))?
        .parse()
        .map_err(|_| err(ln, "bad seed"))?;
    let mut params = ModelParams::girg(d, tau, alpha, mu);
    params.l_dist = if beta.is_infinite() { LDist::Constant { value: 1.0 } } else { LDist::Power { beta } };
    let mut cube = Cube::origin(d, 1.0).map_err(|e| err(ln, &e.to_string()))?;
    let mut vs = VertexSet { d, ..Default::default() };
    let mut edges = Vec::new();
    for (ln, line) in lines {
        let line = line?;
        let mut it = line.split_whitespace();
        match it.next() {
            None => continue,
            Some("#") => match it.next() {
                Some("cube") => {
                    let vals: Vec<f64> = it.map(|s| num(ln, Some(s))).collect::<Result<_, _>>()?;
                    if vals.len() != d + 1 {
                        return Err(err(ln, "cube needs d + 1 numbers"));
                    }
                    cube = Cube::new(Point(vals[..d].to_vec()), vals[d]).map_err(|e| err(ln, &e.to_string()))?;
                }
                Some("topology") => {
                    params.topology = match it.next() {
                        Some("torus") => TopologyKind::Torus,
                        Some("euclidean") => TopologyKind::Euclidean,
                        _ => return Err(err(ln, "unknown topology")),
                    }
                }
                Some("kernel") => {
                    params.c = num(ln, it.next())?;
                    params.c_lower = num(ln, it.next())?;
                    params.c_upper = num(ln, it.next())?;
                }
                Some("ldist") => {
                    params.l_dist = match it.next() {
                        Some("power") => LDist::Power { beta: num(ln, it.next())? },
                        Some("exponential") => LDist::Exponential { rate: num(ln, it.next())? },
                        Some("constant") => LDist::Constant { value: num(ln, it.next())? },
                        _ => return Err(err(ln, "unknown ldist")),
                    }
                }
                Some("ell") => {
                    params.ell = match it.next() {
                        Some("one") => Ell::One,
                        Some("logpower") => Ell::LogPower { a: num(ln, it.next())? },
                        _ => return Err(err(ln, "unknown ell")),
                    }
                }
                Some("vertices") => {
                    params.vertex_model = match it.next() {
                        Some("lattice") => VertexModel::Lattice,
                        Some("poisson") => VertexModel::Poisson,
                        _ => return Err(err(ln, "unknown vertex model")),
                    }
                }
                _ => {}
            },
            Some("v") => {
                let id = num(ln, it.next())? as usize;
                if id != vs.len() {
                    return Err(err(ln, "vertex ids must be consecutive from 0"));
                }
                let mut pos = [0.0; 16];
                if d > pos.len() {
                    return Err(err(ln, "dimension too large"));
                }
                for x in pos.iter_mut().take(d) {
                    *x = num(ln, it.next())?;
                }
                let w = num(ln, it.next())?;
                vs.push(&pos[..d], w);
            }
            Some("e") => {
                let u = num(ln, it.next())? as u32;
                let v = num(ln, it.next())? as u32;
                let l = num(ln, it.next())?;
                edges.push(Edge { u, v, l });
            }
            Some(other) if other.starts_with('#') => {}
            Some(_) => return Err(err(ln, "unknown record")),
        }
    }
    if (params.beta() - beta).abs() > 0.0 && !(params.beta().is_infinite() && beta.is_infinite()) {
        return Err(err(0, "header beta disagrees with the L distribution"));
    }
    Ok(GraphRealization::from_parts(params, cube, vs, edges, seed)?)
}

pub fn save_graph(g: &GraphRealization, path: &Path) -> Result<(), IoError> {
    write_graph(g, std::fs::File::create(path)?)
}

pub fn load_graph(path: &Path) -> Result<GraphRealization, IoError> {
    read_graph(BufReader::new(std::fs::File::open(path)?))
}
