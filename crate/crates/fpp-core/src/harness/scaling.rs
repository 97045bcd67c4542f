//! Center-to-vertex distance tables.

use super::config::{BandPlan, ExperimentConfig};
use super::HarnessError;
use crate::cost::{assign_costs_with_mu, cost_distance, hop_distance, largest_component, unit_costs, NONE};
use crate::geometry::Cube;
use crate::model::{sample_graph, GraphRealization};
use crate::rng::{stream, Purpose};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::sync::Arc;

/// One (source, target) measurement at one penalty exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub seed: u64,
    pub mu: f64,
    pub band: usize,
    pub source: usize,
    pub target: usize,
    pub euclid: f64,
    /// `f64::INFINITY` when unreachable.
    pub cost: f64,
    pub hops: Option<u32>,
}

/// A band that had fewer candidate vertices than requested.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Shortfall {
    pub seed: u64,
    pub band: usize,
    pub requested: usize,
    pub found: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingTable {
    pub rows: Vec<DistanceRow>,
    pub shortfalls: Vec<Shortfall>,
    /// `(seed, fraction of vertices in the largest component)`.
    pub components: Vec<(u64, f64)>,
}

impl ScalingTable {
    /// Rows at penalty exponent `mu`.
    pub fn at(&self, mu: f64) -> Vec<DistanceRow> {
        self.rows.iter().filter(|r| r.mu == mu).cloned().collect()
    }
}

/// The largest-component vertex closest to the center of the box.
pub fn central_vertex(g: &GraphRealization, component: &[usize]) -> Option<usize> {
    let c = g.cube.center();
    let topo = g.topology();
    component
        .iter()
        .copied()
        .min_by(|&a, &b| {
            let da = crate::geometry::dist_sq(g.pos(a), &c.0, topo);
            let db = crate::geometry::dist_sq(g.pos(b), &c.0, topo);
            da.total_cmp(&db).then(a.cmp(&b))
        })
}

/// Measures center-to-vertex distances on one realization.
///
/// The source is the component vertex nearest the box center. For every band
/// `(r_k, r_{k+1}]` of `plan`, up to `pairs_per_band` distinct component
/// vertices at that distance are drawn without replacement; bands with fewer
/// candidates are recorded as shortfalls and use all of them.
pub fn scaling_rows(
    g: Arc<GraphRealization>,
    plan: &BandPlan,
    mus: &[f64],
    seed: u64,
) -> Result<(Vec<DistanceRow>, Vec<Shortfall>, f64), HarnessError> {
    let unit = unit_costs(g.clone());
    let comp = largest_component(&unit);
    let fraction = comp.len() as f64 / g.n().max(1) as f64;
    if g.n() == 0 || fraction < 0.1 {
        return Err(HarnessError::ComponentTooSmall { seed, fraction, n: g.n() });
    }
    let mut in_comp = vec![false; g.n()];
    for &v in &comp {
        in_comp[v] = true;
    }
    let src = central_vertex(&g, &comp).expect("component is non-empty");
    let edges = plan.edges();
    let mut rng = stream(seed, Purpose::Pairs, 0);
    let mut targets: Vec<(usize, usize)> = Vec::new();
    let mut shortfalls = Vec::new();
    for b in 0..plan.count {
        let cand: Vec<usize> = g
            .index
            .annulus_query(g.pos(src), edges[b], edges[b + 1])
            .into_iter()
            .filter(|&v| in_comp[v] && v != src)
            .collect();
        let k = plan.pairs_per_band.min(cand.len());
        if k < plan.pairs_per_band {
            shortfalls.push(Shortfall { seed, band: b, requested: plan.pairs_per_band, found: k });
        }
        let mut picked: Vec<usize> = sample(&mut rng, cand.len(), k).into_iter().map(|i| cand[i]).collect();
        picked.sort_unstable();
        targets.extend(picked.into_iter().map(|v| (b, v)));
    }
    let hops = hop_distance(&unit, src);
    let tv: Vec<usize> = targets.iter().map(|t| t.1).collect();
    let mut rows = Vec::with_capacity(targets.len() * mus.len());
    for &mu in mus {
        let cg = assign_costs_with_mu(g.clone(), mu)?;
        let f = cost_distance(&cg, src, Some(&tv))?;
        rows.extend(targets.iter().map(|&(band, v)| DistanceRow {
            seed,
            mu,
            band,
            source: src,
            target: v,
            euclid: g.dist(src, v),
            cost: f.dist[v],
            hops: (hops[v] != NONE).then_some(hops[v]),
        }));
    }
    Ok((rows, shortfalls, fraction))
}

/// Samples one realization per seed and concatenates their tables.
///
/// Realizations run in parallel; rows are ordered by seed, then `mu`, band
/// and target, whatever the scheduling.
pub fn run_distance_scaling(cfg: &ExperimentConfig) -> Result<ScalingTable, HarnessError> {
    cfg.validate()?;
    let cube = Cube::origin(cfg.model.d, cfg.side)?;
    let parts: Vec<_> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let g = Arc::new(sample_graph(&cfg.model, &cube, cfg.n, seed)?);
            scaling_rows(g, &cfg.bands, &cfg.mus, seed)
        })
        .collect::<Result<_, _>>()?;
    let mut table = ScalingTable { rows: Vec::new(), shortfalls: Vec::new(), components: Vec::new() };
    for ((rows, short, frac), &seed) in parts.into_iter().zip(&cfg.seeds) {
        for s in &short {
            eprintln!(
                "fpp: seed {seed} band {}: {} of {} requested targets available",
                s.band, s.found, s.requested
            );
        }
        table.rows.extend(rows);
        table.shortfalls.extend(short);
        table.components.push((seed, frac));
    }
    Ok(table)
}

const HEADER: [&str; 8] = ["seed", "mu", "band", "source", "target", "euclid", "cost", "hops"];

fn fmt(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        "unreachable".into()
    }
}

pub fn write_csv<W: Write>(rows: &[DistanceRow], w: W) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(HEADER)?;
    for r in rows {
        out.write_record([
            r.seed.to_string(),
            fmt(r.mu),
            r.band.to_string(),
            r.source.to_string(),
            r.target.to_string(),
            fmt(r.euclid),
            fmt(r.cost),
            r.hops.map_or_else(|| "unreachable".into(), |h| h.to_string()),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<DistanceRow>, HarnessError> {
    let mut rd = csv::Reader::from_reader(r);
    if rd.headers()?.iter().ne(HEADER) {
        return Err(HarnessError::Config(format!("CSV header must be `{}`", HEADER.join(","))));
    }
    let bad = |line: usize, field: &str| HarnessError::Config(format!("CSV record {line}: bad `{field}`"));
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let get = |k: usize| rec.get(k).unwrap_or("");
        let float = |k: usize| -> Result<f64, HarnessError> {
            match get(k) {
                "unreachable" => Ok(f64::INFINITY),
                s => s.parse().map_err(|_| bad(i + 1, HEADER[k])),
            }
        };
        let int = |k: usize| -> Result<u64, HarnessError> { get(k).parse().map_err(|_| bad(i + 1, HEADER[k])) };
        rows.push(DistanceRow {
            seed: int(0)?,
            mu: float(1)?,
            band: int(2)? as usize,
            source: int(3)? as usize,
            target: int(4)? as usize,
            euclid: float(5)?,
            cost: float(6)?,
            hops: match get(7) {
                "unreachable" => None,
                s => Some(s.parse().map_err(|_| bad(i + 1, "hops"))?),
            },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::model::{Edge, ModelParams, VertexSet};

    fn two_vertex_graph() -> Arc<GraphRealization> {
        let mut p = ModelParams::girg(1, 2.5, 2.0, 1.0);
        p.topology = crate::model::TopologyKind::Euclidean;
        let mut vs = VertexSet { d: 1, ..Default::default() };
        vs.push(&[5.0], 1.0);
        vs.push(&[8.0], 2.0);
        let cube = Cube::new(Point(vec![0.0]), 10.0).unwrap();
        let e = vec![Edge { u: 0, v: 1, l: 0.5 }];
        Arc::new(GraphRealization::from_parts(p, cube, vs, e, 0).unwrap())
    }

    #[test]
    fn two_vertices_one_row() {
        let plan = BandPlan { count: 1, r_min: 1.0, r_max: 5.0, pairs_per_band: 1 };
        let (rows, short, frac) = scaling_rows(two_vertex_graph(), &plan, &[1.0], 0).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(short.is_empty());
        assert_eq!(frac, 1.0);
        let r = &rows[0];
        assert_eq!((r.source, r.target, r.hops), (0, 1, Some(1)));
        assert_eq!(r.euclid, 3.0);
        assert!((r.cost - 0.5 * 2f64).abs() < 1e-12);
    }

    #[test]
    fn small_component_aborts() {
        let g = two_vertex_graph();
        let g = Arc::new(g.with_edges(vec![]).unwrap());
        let mut vs = g.vertices.clone();
        for k in 0..30 {
            vs.push(&[0.1 + k as f64 * 0.3], 1.0);
        }
        let g = GraphRealization::from_parts(g.params.clone(), g.cube.clone(), vs, vec![Edge { u: 0, v: 1, l: 1.0 }], 0)
            .unwrap();
        let plan = BandPlan { count: 1, r_min: 1.0, r_max: 5.0, pairs_per_band: 1 };
        assert!(matches!(
            scaling_rows(Arc::new(g), &plan, &[0.0], 3),
            Err(HarnessError::ComponentTooSmall { seed: 3, .. })
        ));
    }

    #[test]
    fn csv_round_trip_and_header() {
        let rows = vec![
            DistanceRow { seed: 1, mu: 0.5, band: 0, source: 2, target: 3, euclid: 1.25, cost: 0.1, hops: Some(4) },
            DistanceRow {
                seed: 1,
                mu: 0.5,
                band: 1,
                source: 2,
                target: 9,
                euclid: 3.0,
                cost: f64::INFINITY,
                hops: None,
            },
        ];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "seed,mu,band,source,target,euclid,cost,hops\n1,0.5,0,2,3,1.25,0.1,4\n1,0.5,1,2,9,3,unreachable,unreachable\n"
        );
        assert_eq!(read_csv(&buf[..]).unwrap(), rows);
        assert!(read_csv(&b"a,b\n1,2\n"[..]).is_err());
    }
}
