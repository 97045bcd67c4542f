//! Infection-order images on a two-dimensional lattice.
//!
//! All images of one run share a single realization: the vertices, edges and
//! `L` values are sampled once and only the penalty exponent changes.

use super::config::{ExperimentConfig, ImageFormat};
use super::HarnessError;
use crate::cost::{assign_costs_with_mu, infection_heatmap};
use crate::geometry::Cube;
use crate::model::{sample_graph, GraphRealization, VertexModel};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapImage {
    pub mu: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major RGB, row 0 at the top.
    pub rgb: Vec<u8>,
}

// Dark blue (infected first) through green to yellow (last).
const STOPS: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

/// Colour for a position `t` in `[0, 1]` along the infection order.
pub fn colormap(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let k = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - k as f64;
    let mut c = [0u8; 3];
    for (i, ch) in c.iter_mut().enumerate() {
        *ch = (STOPS[k][i] + f * (STOPS[k + 1][i] - STOPS[k][i])).round() as u8;
    }
    c
}

/// Infection order from the vertex nearest the center, one image per `mu`.
/// Unreached vertices are black.
pub fn render_heatmaps(g: Arc<GraphRealization>, mus: &[f64]) -> Result<Vec<HeatmapImage>, HarnessError> {
    if g.params.d != 2 || g.params.vertex_model != VertexModel::Lattice {
        return Err(HarnessError::Config("heatmaps need a two-dimensional lattice".into()));
    }
    let side = g.cube.side.round() as usize;
    if side * side != g.n() {
        return Err(HarnessError::Config(format!("{} vertices do not fill a {side}x{side} lattice", g.n())));
    }
    let all: Vec<usize> = (0..g.n()).collect();
    let src = super::scaling::central_vertex(&g, &all).expect("lattice is non-empty");
    let min = &g.cube.min.0;
    mus.iter()
        .map(|&mu| {
            let cg = assign_costs_with_mu(g.clone(), mu)?;
            let order = infection_heatmap(&cg, src)?;
            let reached = order.iter().flatten().count().max(2);
            let mut rgb = vec![0u8; 3 * side * side];
            for (v, o) in order.iter().enumerate() {
                let p = g.pos(v);
                let x = (p[0] - min[0]).round() as usize;
                let y = side - 1 - (p[1] - min[1]).round() as usize;
                if let Some(r) = o {
                    let k = 3 * (y * side + x);
                    rgb[k..k + 3].copy_from_slice(&colormap(*r as f64 / (reached - 1) as f64));
                }
            }
            Ok(HeatmapImage { mu, width: side, height: side, rgb })
        })
        .collect()
}

/// Binary PPM (`P6`).
pub fn write_ppm<W: Write>(img: &HeatmapImage, mut w: W) -> std::io::Result<()> {
    write!(w, "P6\n{} {}\n255\n", img.width, img.height)?;
    w.write_all(&img.rgb)
}

pub fn write_png(img: &HeatmapImage, path: &Path) -> Result<(), HarnessError> {
    image::save_buffer(path, &img.rgb, img.width as u32, img.height as u32, image::ExtendedColorType::Rgb8)
        .map_err(|e| HarnessError::Image(e.to_string()))
}

/// Samples the configured lattice once (first seed) and writes one image per
/// `mu` into `out_dir`. Returns the written paths.
pub fn run_heatmap(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, HarnessError> {
    cfg.validate()?;
    let seed = cfg.seeds[0];
    let cube = Cube::origin(2, cfg.side)?;
    let g = Arc::new(sample_graph(&cfg.model, &cube, None, seed)?);
    let images = render_heatmaps(g, &cfg.mus)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut paths = Vec::new();
    for img in &images {
        let stem = format!("heatmap_mu{}_seed{seed}", img.mu);
        if matches!(cfg.format, ImageFormat::Png | ImageFormat::Both) {
            let p = cfg.out_dir.join(format!("{stem}.png"));
            write_png(img, &p)?;
            paths.push(p);
        }
        if matches!(cfg.format, ImageFormat::Ppm | ImageFormat::Both) {
            let p = cfg.out_dir.join(format!("{stem}.ppm"));
            write_ppm(img, std::io::BufWriter::new(std::fs::File::create(&p)?))?;
            paths.push(p);
        }
    }
    Ok(paths)
}
