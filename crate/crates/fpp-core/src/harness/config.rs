//! `key = value` experiment configuration.
//!
//! ```text
//! # distance scaling on the reference torus
//! kind = dist
//! model = reference
//! side = 300
//! mus = 0, 0.5, 1, 2
//! seeds = 1, 2, 3, 4, 5
//! bands = 10
//! r_min = 20
//! r_max = 212
//! pairs_per_band = 10
//! out_dir = out
//! ```
//!
//! Blank lines and `#` comments are ignored. Keys are collected into a map
//! before anything is interpreted, so their order does not matter and command
//! line overrides are plain insertions into that map.

use super::HarnessError;
use crate::model::{Ell, LDist, ModelParams, TopologyKind, VertexModel};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExperimentKind {
    Gen,
    Dist,
    Heatmap,
    Hierarchy,
    NetCheck,
}

/// Log-spaced distance bands and how many targets to draw from each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandPlan {
    pub count: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub pairs_per_band: usize,
}

impl BandPlan {
    /// `count + 1` log-spaced edges from `r_min` to `r_max`.
    pub fn edges(&self) -> Vec<f64> {
        let ratio = self.r_max / self.r_min;
        (0..=self.count).map(|k| self.r_min * ratio.powf(k as f64 / self.count as f64)).collect()
    }
}

/// Monte-Carlo settings for hierarchy runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HierarchyPlan {
    pub runs: usize,
    /// Explicit number of rounds; `None` keeps the chooser's value.
    pub depth: Option<u32>,
    pub eps: f64,
    pub eps_prime: f64,
    pub delta: f64,
    /// Endpoints are the vertices nearest to `(a, .., a)` and `(b, .., b)`,
    /// given as fractions of the box side.
    pub picks: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ImageFormat {
    Png,
    Ppm,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub model: ModelParams,
    pub side: f64,
    pub n: Option<usize>,
    pub mus: Vec<f64>,
    pub seeds: Vec<u64>,
    pub bands: BandPlan,
    pub hierarchy: HierarchyPlan,
    pub format: ImageFormat,
    pub out_dir: PathBuf,
}

const KEYS: &[&str] = &[
    "kind", "model", "d", "tau", "alpha", "beta", "l_dist", "l_rate", "l_value", "ell_a", "c", "c_lower", "c_upper",
    "vertices", "topology", "side", "n", "mu", "mus", "seed", "seeds", "bands", "r_min", "r_max",
    "pairs_per_band", "runs", "depth", "eps", "eps_prime", "delta", "pick_a", "pick_b", "format", "out_dir",
];

/// Splits config text into a key/value map.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, HarnessError> {
    let mut map = BTreeMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("line {}: expected `key = value`", ln + 1)))?;
        let k = k.trim().to_string();
        if !KEYS.contains(&k.as_str()) {
            return Err(HarnessError::Config(format!("line {}: unknown key `{k}`", ln + 1)));
        }
        if map.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(HarnessError::Config(format!("line {}: duplicate key `{k}`", ln + 1)));
        }
    }
    Ok(map)
}

fn num<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, HarnessError> {
    map.get(key)
        .map(|v| v.parse::<T>().map_err(|_| HarnessError::Config(format!("`{key}`: cannot parse `{v}`"))))
        .transpose()
}

fn list<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<Vec<T>>, HarnessError> {
    map.get(key)
        .map(|v| {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<T>().map_err(|_| HarnessError::Config(format!("`{key}`: cannot parse `{s}`"))))
                .collect()
        })
        .transpose()
}

fn parse_float(s: &str) -> Option<f64> {
    match s {
        "inf" | "infinity" => Some(f64::INFINITY),
        _ => s.parse().ok(),
    }
}

fn float(map: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>, HarnessError> {
    map.get(key)
        .map(|v| parse_float(v).ok_or_else(|| HarnessError::Config(format!("`{key}`: cannot parse `{v}`"))))
        .transpose()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        Self::from_map(&parse_pairs(text)?)
    }

    /// Applies `overrides` on top of `text` (either may be empty).
    pub fn with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self, HarnessError> {
        let mut map = parse_pairs(text)?;
        for (k, v) in overrides {
            map.insert(k.clone(), v.clone());
        }
        Self::from_map(&map)
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self, HarnessError> {
        if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(HarnessError::Config(format!("unknown key `{k}`")));
        }
        let kind = match map.get("kind").map(String::as_str) {
            Some("gen") => ExperimentKind::Gen,
            Some("dist") => ExperimentKind::Dist,
            Some("heatmap") => ExperimentKind::Heatmap,
            Some("hierarchy") => ExperimentKind::Hierarchy,
            Some("net-check") => ExperimentKind::NetCheck,
            Some(k) => return Err(HarnessError::Config(format!("unknown kind `{k}`"))),
            None => return Err(HarnessError::Config("`kind` is required".into())),
        };
        let mut model = match map.get("model").map(String::as_str) {
            None | Some("reference") => ModelParams::reference(0.0),
            Some("girg") => ModelParams::girg(2, 2.5, 2.0, 0.0),
            Some(m) => return Err(HarnessError::Config(format!("unknown model preset `{m}`"))),
        };
        if let Some(d) = num::<usize>(map, "d")? {
            model.d = d;
        }
        if let Some(t) = float(map, "tau")? {
            model.tau = t;
        }
        if let Some(a) = float(map, "alpha")? {
            model.alpha = a;
        }
        for (key, slot) in [("c", &mut model.c), ("c_lower", &mut model.c_lower), ("c_upper", &mut model.c_upper)] {
            if let Some(x) = float(map, key)? {
                *slot = x;
            }
        }
        model.l_dist = match map.get("l_dist").map(String::as_str) {
            None => match float(map, "beta")? {
                Some(beta) if beta.is_infinite() => LDist::Constant { value: 1.0 },
                Some(beta) => LDist::Power { beta },
                None => model.l_dist,
            },
            Some("power") => LDist::Power {
                beta: float(map, "beta")?.ok_or_else(|| HarnessError::Config("`l_dist = power` needs `beta`".into()))?,
            },
            Some("exponential") => LDist::Exponential { rate: float(map, "l_rate")?.unwrap_or(1.0) },
            Some("constant") => LDist::Constant { value: float(map, "l_value")?.unwrap_or(1.0) },
            Some(s) => return Err(HarnessError::Config(format!("unknown l_dist `{s}`"))),
        };
        if let Some(a) = float(map, "ell_a")? {
            model.ell = if a == 0.0 { Ell::One } else { Ell::LogPower { a } };
        }
        match map.get("vertices").map(String::as_str) {
            None => {}
            Some("lattice") => model.vertex_model = VertexModel::Lattice,
            Some("poisson") => model.vertex_model = VertexModel::Poisson,
            Some(s) => return Err(HarnessError::Config(format!("unknown vertex model `{s}`"))),
        }
        match map.get("topology").map(String::as_str) {
            None => {}
            Some("torus") => model.topology = TopologyKind::Torus,
            Some("euclidean") => model.topology = TopologyKind::Euclidean,
            Some(s) => return Err(HarnessError::Config(format!("unknown topology `{s}`"))),
        }
        let mus = match (float(map, "mu")?, map.contains_key("mus")) {
            (Some(_), true) => return Err(HarnessError::Config("give either `mu` or `mus`, not both".into())),
            (Some(m), false) => vec![m],
            (None, true) => list::<f64>(map, "mus")?.unwrap_or_default(),
            (None, false) => vec![model.mu],
        };
        model.mu = mus.first().copied().unwrap_or(model.mu);
        let seeds = match (num::<u64>(map, "seed")?, list::<u64>(map, "seeds")?) {
            (Some(_), Some(_)) => return Err(HarnessError::Config("give either `seed` or `seeds`, not both".into())),
            (Some(s), None) => vec![s],
            (None, Some(s)) => s,
            (None, None) => Vec::new(),
        };
        let side = float(map, "side")?.unwrap_or(100.0);
        let bands = BandPlan {
            count: num(map, "bands")?.unwrap_or(10),
            r_min: float(map, "r_min")?.unwrap_or(2.0),
            r_max: float(map, "r_max")?.unwrap_or(side / 2.0),
            pairs_per_band: num(map, "pairs_per_band")?.unwrap_or(50),
        };
        let hierarchy = HierarchyPlan {
            runs: num(map, "runs")?.unwrap_or(1),
            depth: num(map, "depth")?,
            eps: float(map, "eps")?.unwrap_or(0.05),
            eps_prime: float(map, "eps_prime")?.unwrap_or(0.1),
            delta: float(map, "delta")?.unwrap_or(0.01),
            picks: (float(map, "pick_a")?.unwrap_or(0.17), float(map, "pick_b")?.unwrap_or(0.83)),
        };
        let format = match map.get("format").map(String::as_str) {
            None | Some("png") => ImageFormat::Png,
            Some("ppm") => ImageFormat::Ppm,
            Some("both") => ImageFormat::Both,
            Some(s) => return Err(HarnessError::Config(format!("unknown image format `{s}`"))),
        };
        let cfg = ExperimentConfig {
            kind,
            model,
            side,
            n: num(map, "n")?,
            mus,
            seeds,
            bands,
            hierarchy,
            format,
            out_dir: map.get("out_dir").map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.seeds.is_empty() {
            return bad("seeds must be given explicitly (`seed` or `seeds`)");
        }
        if !(self.side > 0.0 && self.side.is_finite()) {
            return bad("`side` must be positive");
        }
        if self.mus.is_empty() {
            return bad("`mus` is empty");
        }
        for &mu in &self.mus {
            let mut p = self.model.clone();
            p.mu = mu;
            p.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        match self.kind {
            ExperimentKind::Dist => {
                let b = &self.bands;
                if b.count == 0 || b.pairs_per_band == 0 {
                    return bad("`bands` and `pairs_per_band` must be positive");
                }
                if !(b.r_min > 0.0 && b.r_max > b.r_min) {
                    return bad("need 0 < r_min < r_max");
                }
            }
            ExperimentKind::Heatmap => {
                if self.model.vertex_model != VertexModel::Lattice || self.model.d != 2 {
                    return bad("heatmaps need a two-dimensional lattice (`vertices = lattice`, `d = 2`)");
                }
            }
            ExperimentKind::Hierarchy => {
                let h = &self.hierarchy;
                if h.runs == 0 {
                    return bad("`runs` must be positive");
                }
                if !(0.0..=1.0).contains(&h.picks.0) || !(0.0..=1.0).contains(&h.picks.1) {
                    return bad("`pick_a` and `pick_b` are fractions of the side");
                }
                if self.mus.len() != 1 {
                    return bad("hierarchy runs take a single `mu`");
                }
            }
            ExperimentKind::Gen | ExperimentKind::NetCheck => {}
        }
        Ok(())
    }

    /// Model parameters with the penalty exponent replaced by `mu`.
    pub fn model_at(&self, mu: f64) -> ModelParams {
        let mut p = self.model.clone();
        p.mu = mu;
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_overrides() {
        let text = "kind = dist # trailing comment\n\nside = 50\nmus = 0, 1\nseeds = 3,4\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::Dist);
        assert_eq!(cfg.mus, vec![0.0, 1.0]);
        assert_eq!(cfg.seeds, vec![3, 4]);
        assert_eq!(cfg.bands.r_max, 25.0);
        assert_eq!(cfg.model.tau, 2.3);
        let o = vec![("side".to_string(), "80".to_string()), ("beta".to_string(), "inf".to_string())];
        let cfg = ExperimentConfig::with_overrides(text, &o).unwrap();
        assert_eq!(cfg.side, 80.0);
        assert_eq!(cfg.model.l_dist, LDist::Constant { value: 1.0 });
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "side = 5\nseed = 1",
            "kind = dist\nside = 5",
            "kind = dist\nseed = 1\nseed = 2",
            "kind = dist\nseed = 1\nfoo = 2",
            "kind = dist\nseed = 1\nr_min = 5\nr_max = 2",
            "kind = heatmap\nseed = 1\nvertices = poisson",
            "kind = dist\nseed = 1\nmu = 1\nmus = 2",
            "kind = dist\nseed = x",
            "kind = dist\nseed = 1\ntau = 1.5",
            "kind = gen seed = 1",
        ] {
            assert!(ExperimentConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn band_edges_are_log_spaced() {
        let b = BandPlan { count: 4, r_min: 1.0, r_max: 16.0, pairs_per_band: 1 };
        let e = b.edges();
        assert_eq!(e.len(), 5);
        for (k, x) in e.iter().enumerate() {
            assert!((x - 2f64.powi(k as i32)).abs() < 1e-12);
        }
    }
}
