//! Monte-Carlo runs of hierarchy construction.
//!
//! Each run samples a fresh realization, splits its edges into `R + 1`
//! exposure slices of equal probability, builds a hierarchy between two fixed
//! points and, on success, assembles and validates the path. The net is the
//! whole vertex set: at desk scale the strong-net weight ceilings are vacuous,
//! so every vertex qualifies.

use super::config::{ExperimentConfig, HierarchyPlan};
use super::HarnessError;
use crate::cost::{assign_costs, CostedGraph};
use crate::geometry::{dist_sq, Cube};
use crate::hierarchy::{
    assemble_path, build_hierarchy, path_cost_bound, path_deviation_bound, validate_hierarchy, AssembledPath,
    BuildOutcome, HierarchyReport, StageFailure,
};
use crate::model::{label_edges, sample_graph, GraphRealization, ModelParams};
use crate::theory::{choose_hierarchy_params, PhaseParams};
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub n: usize,
    pub xi: f64,
    pub rounds: u32,
    pub success: bool,
    pub failure: Option<StageFailure>,
    /// `validate_hierarchy` passed; `None` when the build failed.
    pub valid: Option<bool>,
    pub cost: Option<f64>,
    pub cost_bound: f64,
    pub deviation: Option<f64>,
    pub deviation_bound: f64,
    pub problems: Vec<String>,
    pub unmet: Vec<&'static str>,
}

impl RunSummary {
    /// Successful, valid and within both path bounds.
    pub fn sound(&self) -> bool {
        self.valid == Some(true)
            && self.cost.is_some_and(|c| c <= self.cost_bound)
            && self.deviation.is_some_and(|d| d <= self.deviation_bound)
    }
}

/// Everything a single run produced, for JSON traces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace {
    pub summary: RunSummary,
    pub outcome: BuildOutcome,
    pub report: Option<HierarchyReport>,
    pub path: Option<AssembledPath>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Campaign {
    pub runs: Vec<RunSummary>,
    pub successes: usize,
    pub success_rate: f64,
    /// Every successful run was sound.
    pub all_sound: bool,
}

/// Vertex nearest to `p`, ties to the smaller id.
pub fn nearest_vertex(g: &GraphRealization, p: &[f64]) -> Option<usize> {
    let topo = g.topology();
    (0..g.n()).min_by(|&a, &b| dist_sq(g.pos(a), p, topo).total_cmp(&dist_sq(g.pos(b), p, topo)).then(a.cmp(&b)))
}

/// Builds, assembles and validates one hierarchy on a given costed graph.
pub fn hierarchy_on(cg: &CostedGraph, plan: &HierarchyPlan, seed: u64) -> Result<RunTrace, HarnessError> {
    let b = &cg.base;
    let (lo, side) = (&b.cube.min.0, b.cube.side);
    let at = |f: f64| -> Vec<f64> { lo.iter().map(|m| m + f * side).collect() };
    let (y0, y1) = match (nearest_vertex(b, &at(plan.picks.0)), nearest_vertex(b, &at(plan.picks.1))) {
        (Some(a), Some(c)) if a != c => (a, c),
        _ => return Err(HarnessError::Config("endpoints coincide or the graph is empty".into())),
    };
    let xi = b.dist(y0, y1);
    let par = PhaseParams::from(&b.params);
    let mut hp = choose_hierarchy_params(&par, xi, plan.eps, plan.eps_prime, plan.delta)?;
    if let Some(r) = plan.depth {
        hp = hp.with_rounds(r);
    }
    let r = hp.r as usize;
    let slices = label_edges(b, &vec![1.0 / (r + 1) as f64; r + 1], seed)?;
    let net = vec![true; cg.n()];
    let outcome = build_hierarchy(cg, &slices, &net, y0, y1, &hp)?;
    let cost_bound = path_cost_bound(&hp, xi, cg.mu);
    let deviation_bound = path_deviation_bound(&hp, xi);
    let mut summary = RunSummary {
        seed,
        n: cg.n(),
        xi,
        rounds: hp.r,
        success: outcome.failure.is_none(),
        failure: outcome.failure.clone(),
        valid: None,
        cost: None,
        cost_bound,
        deviation: None,
        deviation_bound,
        problems: Vec::new(),
        unmet: outcome.unmet.clone(),
    };
    let (mut report, mut path) = (None, None);
    if summary.success {
        let rep = validate_hierarchy(&outcome.hierarchy, cg, Some(&slices), &net)?;
        let ap = assemble_path(&outcome.hierarchy, cg)?;
        summary.valid = Some(rep.valid());
        summary.problems = rep.problems.clone();
        summary.cost = Some(ap.cost);
        summary.deviation = Some(ap.deviation);
        report = Some(rep);
        path = Some(ap);
    }
    Ok(RunTrace { summary, outcome, report, path })
}

/// Samples a realization for `seed` and runs [`hierarchy_on`].
pub fn hierarchy_run(
    model: &ModelParams,
    side: f64,
    n: Option<usize>,
    plan: &HierarchyPlan,
    seed: u64,
) -> Result<RunTrace, HarnessError> {
    let cube = Cube::origin(model.d, side)?;
    let g = sample_graph(model, &cube, n, seed)?;
    let cg = assign_costs(Arc::new(g))?;
    hierarchy_on(&cg, plan, seed)
}

/// `plan.runs` runs on seeds `seeds[0], seeds[0] + 1, ..` unless more than
/// one seed is configured, in which case exactly those seeds are used.
pub fn run_hierarchy_campaign(cfg: &ExperimentConfig) -> Result<Campaign, HarnessError> {
    cfg.validate()?;
    let plan = &cfg.hierarchy;
    let seeds: Vec<u64> = if cfg.seeds.len() > 1 {
        cfg.seeds.clone()
    } else {
        (0..plan.runs as u64).map(|k| cfg.seeds[0] + k).collect()
    };
    let model = cfg.model_at(cfg.mus[0]);
    let runs: Vec<RunSummary> = seeds
        .par_iter()
        .map(|&s| hierarchy_run(&model, cfg.side, cfg.n, plan, s).map(|t| t.summary))
        .collect::<Result<_, _>>()?;
    let successes = runs.iter().filter(|r| r.success).count();
    Ok(Campaign {
        successes,
        success_rate: successes as f64 / runs.len() as f64,
        all_sound: runs.iter().filter(|r| r.success).all(RunSummary::sound),
        runs,
    })
}
