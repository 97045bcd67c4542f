//! Command-line front end.
//!
//! Every subcommand reads an optional `--config FILE` (`key = value` lines)
//! and applies `--set key=value` overrides on top. Commands that sample
//! graphs require `--seed`.

use clap::{Args, Parser, Subcommand};
use fpp_core::geometry::Cube;
use fpp_core::harness::{self, fit_growth, ExperimentConfig, HarnessError};
use fpp_core::io::{load_graph, save_graph};
use fpp_core::model::sample_graph;
use fpp_core::nets::{
    build_cover, strong_net, strong_to_weak_step, weak_net_check, Ceiling, NetParams, RadiusSet, Spacing,
    WeakNetParams,
};
use fpp_core::theory::{phase_report, PhaseParams};
use serde::Serialize;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fpp", version, about = "First passage percolation on spatial scale-free graphs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    side: Option<f64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct Seeded {
    #[command(flatten)]
    common: Common,
    #[arg(long, required = true)]
    seed: u64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a realization and write it in the text graph format.
    Gen {
        #[command(flatten)]
        s: Seeded,
        #[arg(long)]
        out: PathBuf,
    },
    /// Phase, thresholds and growth exponents as JSON.
    Phase {
        #[command(flatten)]
        common: Common,
    },
    /// Center-to-vertex distance table as CSV.
    Dist {
        #[command(flatten)]
        s: Seeded,
        /// Further seeds; each adds one realization to the table.
        #[arg(long, value_delimiter = ',')]
        more_seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Growth fits of a distance CSV, one JSON object per `mu`.
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// Bootstrap seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Infection-order images, one per `mu`, from one realization.
    Heatmap {
        #[command(flatten)]
        s: Seeded,
    },
    /// Strong-net search and checks on a sampled or loaded graph.
    NetCheck {
        #[command(flatten)]
        s: Seeded,
        /// Read the graph from a file instead of sampling.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
        /// Radii `r_1 < .. < r_R`.
        #[arg(long, value_delimiter = ',', required = true)]
        radii: Vec<f64>,
        /// Use the scaled weight ceiling `c r^{d/(tau-1)}` instead of the formula.
        #[arg(long)]
        ceiling_c: Option<f64>,
        #[arg(long)]
        w0: Option<f64>,
        /// Only require `r_{i-1} <= r_i / 2` of the radii.
        #[arg(long)]
        structural: bool,
        /// Also run the weak-net check with this epsilon.
        #[arg(long)]
        weak_eps: Option<f64>,
    },
    /// Hierarchy construction: a JSON trace for one run, or a campaign summary
    /// when `runs > 1`.
    Hierarchy {
        #[command(flatten)]
        s: Seeded,
    },
}

fn load_config(c: &Common, kind: &str, seed: Option<u64>) -> Result<ExperimentConfig, HarnessError> {
    let text = match &c.config {
        Some(p) => std::fs::read_to_string(p)?,
        None => String::new(),
    };
    let mut map = harness::config::parse_pairs(&text)?;
    map.insert("kind".into(), kind.into());
    for kv in &c.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        map.insert(k.trim().into(), v.trim().into());
    }
    // `--seed` replaces any seed list from the file.
    if let Some(s) = seed {
        map.remove("seeds");
        map.insert("seed".into(), s.to_string());
    }
    if let Some(s) = c.side {
        map.insert("side".into(), s.to_string());
    }
    if let Some(d) = &c.out_dir {
        map.insert("out_dir".into(), d.display().to_string());
    }
    ExperimentConfig::from_map(&map)
}

fn print_json<T: Serialize>(v: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(v).map_err(|e| HarnessError::Config(e.to_string()))?;
    writeln!(std::io::stdout().lock(), "{text}")?;
    Ok(())
}

#[derive(Serialize)]
struct NetCheckReport {
    n: usize,
    found: bool,
    members: usize,
    verified: bool,
    weights_vacuous: bool,
    strong_to_weak: Option<bool>,
    weak: Option<fpp_core::nets::WeakNetReport>,
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    harness::init_threads()?;
    match cli.cmd {
        Cmd::Gen { s, out } => {
            let cfg = load_config(&s.common, "gen", Some(s.seed))?;
            let g = sample_graph(&cfg.model, &Cube::origin(cfg.model.d, cfg.side)?, cfg.n, s.seed)?;
            save_graph(&g, &out).map_err(|e| HarnessError::Config(e.to_string()))?;
            eprintln!("fpp: wrote {} vertices, {} edges to {}", g.n(), g.edges.len(), out.display());
        }
        Cmd::Phase { common } => {
            // Nothing is sampled; the seed only satisfies validation.
            let cfg = load_config(&common, "gen", Some(0))?;
            let reports: Vec<_> = cfg
                .mus
                .iter()
                .map(|&mu| phase_report(&PhaseParams::from(&cfg.model_at(mu))))
                .collect::<Result<_, _>>()?;
            print_json(&reports)?;
        }
        Cmd::Dist { s, more_seeds, out } => {
            let mut cfg = load_config(&s.common, "dist", Some(s.seed))?;
            cfg.seeds.extend(more_seeds);
            let table = harness::run_distance_scaling(&cfg)?;
            let path = out.unwrap_or_else(|| cfg.out_dir.join("dist.csv"));
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            harness::scaling::write_csv(&table.rows, std::fs::File::create(&path)?)?;
            eprintln!("fpp: {} rows, {} shortfalls -> {}", table.rows.len(), table.shortfalls.len(), path.display());
        }
        Cmd::Fit { input, seed } => {
            let rows = harness::scaling::read_csv(std::fs::File::open(&input)?)?;
            let mut mus: Vec<f64> = rows.iter().map(|r| r.mu).collect();
            mus.sort_by(f64::total_cmp);
            mus.dedup();
            #[derive(Serialize)]
            struct Entry {
                mu: f64,
                fit: harness::FitResult,
            }
            let fits: Vec<Entry> = mus
                .into_iter()
                .map(|mu| {
                    let sub: Vec<_> = rows.iter().filter(|r| r.mu == mu).cloned().collect();
                    fit_growth(&sub, seed).map(|fit| Entry { mu, fit })
                })
                .collect::<Result<_, _>>()?;
            print_json(&fits)?;
        }
        Cmd::Heatmap { s } => {
            let cfg = load_config(&s.common, "heatmap", Some(s.seed))?;
            for p in harness::run_heatmap(&cfg)? {
                println!("{}", p.display());
            }
        }
        Cmd::NetCheck { s, graph, delta, radii, ceiling_c, w0, structural, weak_eps } => {
            let cfg = load_config(&s.common, "net-check", Some(s.seed))?;
            let g = match graph {
                Some(p) => load_graph(&p).map_err(|e| HarnessError::Config(e.to_string()))?,
                None => sample_graph(&cfg.model, &Cube::origin(cfg.model.d, cfg.side)?, cfg.n, s.seed)?,
            };
            let mut np = NetParams::new(&g.params, delta)?;
            if let Some(w) = w0 {
                np = np.with_w0(w);
            }
            if let Some(c) = ceiling_c {
                np = np.with_ceiling(Ceiling::Scaled { c });
            }
            let rs = RadiusSet::new(radii)?;
            let spacing = if structural { Spacing::Structural } else { Spacing::Strict };
            let q = g.cube.clone();
            let cert = strong_net(&g, &q, &rs, &np, spacing)?;
            let mut rep = NetCheckReport {
                n: g.n(),
                found: cert.is_some(),
                members: cert.as_ref().map_or(0, |c| c.len()),
                verified: cert.as_ref().is_some_and(|c| c.verified),
                weights_vacuous: cert.as_ref().is_some_and(|c| c.weights_vacuous),
                strong_to_weak: None,
                weak: None,
            };
            if let Some(c) = &cert {
                let cover = build_cover(&q, &rs, &np, spacing)?;
                rep.strong_to_weak = Some(strong_to_weak_step(&g, c, &cover, &np).is_ok());
                if let Some(eps) = weak_eps {
                    let wp = WeakNetParams { eps, w1: np.w0, r_min: Some(rs.r(1)) };
                    rep.weak = Some(weak_net_check(&g, &c.members, &q, &np, &wp));
                }
            }
            print_json(&rep)?;
        }
        Cmd::Hierarchy { s } => {
            let cfg = load_config(&s.common, "hierarchy", Some(s.seed))?;
            if cfg.hierarchy.runs > 1 {
                print_json(&harness::run_hierarchy_campaign(&cfg)?)?;
            } else {
                let model = cfg.model_at(cfg.mus[0]);
                print_json(&harness::hierarchy_run(&model, cfg.side, cfg.n, &cfg.hierarchy, s.seed)?)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fpp: {e}");
            ExitCode::FAILURE
        }
    }
}
