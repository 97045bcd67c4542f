//! Experiment plumbing: configuration, distance campaigns, growth fits,
//! heatmaps, hierarchy Monte Carlo and the statistics used to judge them.
//!
//! Every output is a function of the configuration and its seeds. Work items
//! run on the rayon pool; results are gathered in a fixed order, so the
//! thread count never changes a byte of output.

pub mod campaign;
pub mod config;
pub mod fit;
pub mod heatmap;
pub mod scaling;
pub mod stats;

pub use campaign::{hierarchy_on, hierarchy_run, run_hierarchy_campaign, Campaign, RunSummary, RunTrace};
pub use config::{BandPlan, ExperimentConfig, ExperimentKind, HierarchyPlan, ImageFormat};
pub use fit::{fit_growth, least_squares, FitResult, GrowthModel, LineFit};
pub use heatmap::{render_heatmaps, run_heatmap, HeatmapImage};
pub use scaling::{run_distance_scaling, scaling_rows, DistanceRow, ScalingTable, Shortfall};
pub use stats::{chi_square_two_sample, hill_estimator, ChiSquareTest};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("seed {seed}: largest component holds {:.1}% of {n} vertices (need 10%)", 100.0 * fraction)]
    ComponentTooSmall { seed: u64, fraction: f64, n: usize },
    #[error("fit: {0}")]
    Fit(String),
    #[error("image: {0}")]
    Image(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Cost(#[from] crate::cost::CostError),
    #[error(transparent)]
    Theory(#[from] crate::theory::TheoryError),
    #[error(transparent)]
    Net(#[from] crate::nets::NetError),
    #[error(transparent)]
    Hierarchy(#[from] crate::hierarchy::HierarchyError),
}

/// Sizes the global rayon pool from `FPP_THREADS` if it is set.
///
/// Must run before the pool is first used; later calls are no-ops. Returns
/// the thread count that was requested, if any.
pub fn init_threads() -> Result<Option<usize>, HarnessError> {
    let Ok(v) = std::env::var("FPP_THREADS") else { return Ok(None) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| HarnessError::Config(format!("FPP_THREADS must be a positive integer, got `{v}`")))?;
    // Already initialised (e.g. by a test harness) is fine.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(Some(n))
}
