//! Thin command-line front end; all behavior lives in the library.

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use cliffmap::commands::{self, ExportKind};
use cliffmap::config::RunConfig;
use cliffmap::eval::Method;
use cliffmap::predictor::PredictionMode;

#[derive(Parser)]
#[command(
    name = "cliffmap",
    version,
    about = "Build CLiFF-maps, predict trajectories and benchmark predictors"
)]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (also via CLIFFMAP_OUT_DIR).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads; 0 uses all cores. Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

/// Numeric overrides shared by the pipeline subcommands.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// Grid cell edge, dataset units.
    #[arg(long)]
    resolution: Option<f64>,
    /// Sampling radius; defaults to the grid resolution.
    #[arg(long)]
    sampling_radius: Option<f64>,
    /// Kernel parameter.
    #[arg(long)]
    beta: Option<f64>,
    /// Observed steps per instance.
    #[arg(long)]
    observed: Option<usize>,
    /// Predicted steps per instance.
    #[arg(long)]
    horizon: Option<usize>,
    /// Samples per instance (K).
    #[arg(long, short = 'k')]
    samples: Option<usize>,
    /// stochastic | most-likely
    #[arg(long)]
    mode: Option<String>,
    /// Train fraction in (0, 1).
    #[arg(long)]
    train_ratio: Option<f64>,
    /// Comma-separated sweep ratios.
    #[arg(long, value_delimiter = ',')]
    ratios: Option<Vec<f64>>,
    /// Validation iterations.
    #[arg(long)]
    iterations: Option<usize>,
    /// Base RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Minimum observations per populated cell.
    #[arg(long)]
    n_min: Option<usize>,
    /// Largest mixture size tried per cell.
    #[arg(long)]
    j_max: Option<usize>,
    /// Window stride.
    #[arg(long)]
    stride: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a dataset and emit it in the normalized CSV schema.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Generate a synthetic dataset (built-in or TOML scenario).
    Synth {
        /// Built-in scenario: crossing | speed-contrast.
        #[arg(long)]
        scenario: Option<String>,
        /// TOML scenario file (overrides --scenario).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Build general and class-conditioned maps and save them.
    BuildMap {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Benchmark predictors with repeated random sub-sampling.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated subset of cvm,mod,cmod,external.
        #[arg(long, value_delimiter = ',', required = true)]
        methods: Vec<String>,
        /// Interchange CSV for method 'external'.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Data-efficiency sweep over train ratios.
    Sweep {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        methods: Vec<String>,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Export plot-ready CSVs from a saved map file.
    Export {
        /// Map file written by build-map.
        #[arg(long)]
        map: PathBuf,
        /// field | kl | intensity
        #[arg(long)]
        what: String,
        /// Class label; defaults to the general map (field/intensity) or
        /// all classes (kl).
        #[arg(long)]
        class: Option<String>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Score an external prediction file over every dataset window.
    ScoreExternal {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn apply_overrides(cfg: &mut RunConfig, o: &Overrides) -> anyhow::Result<()> {
    if let Some(v) = o.resolution {
        cfg.resolution = v;
    }
    if let Some(v) = o.sampling_radius {
        cfg.sampling_radius = Some(v);
    }
    if let Some(v) = o.beta {
        cfg.beta = v;
    }
    if let Some(v) = o.observed {
        cfg.observed_steps = v;
    }
    if let Some(v) = o.horizon {
        cfg.horizon_steps = v;
    }
    if let Some(v) = o.samples {
        cfg.samples = v;
    }
    if let Some(mode) = &o.mode {
        cfg.mode = match mode.as_str() {
            "stochastic" => PredictionMode::Stochastic,
            "most-likely" => PredictionMode::MostLikely,
            other => anyhow::bail!("unknown mode '{other}' (stochastic, most-likely)"),
        };
    }
    if let Some(v) = o.train_ratio {
        cfg.train_ratio = v;
    }
    if let Some(v) = &o.ratios {
        cfg.sweep_ratios = v.clone();
    }
    if let Some(v) = o.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = o.seed {
        cfg.base_seed = v;
    }
    if let Some(v) = o.n_min {
        cfg.n_min = v;
    }
    if let Some(v) = o.j_max {
        cfg.j_max = v;
    }
    if let Some(v) = o.stride {
        cfg.stride = v;
    }
    Ok(())
}

fn parse_methods(raw: &[String]) -> anyhow::Result<Vec<Method>> {
    raw.iter()
        .map(|s| s.parse::<Method>().map_err(Into::into))
        .collect()
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();

    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).context("loading config")?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }

    let overrides = match &cli.command {
        Command::Ingest { overrides, .. }
        | Command::Synth { overrides, .. }
        | Command::BuildMap { overrides, .. }
        | Command::Evaluate { overrides, .. }
        | Command::Sweep { overrides, .. }
        | Command::Export { overrides, .. }
        | Command::ScoreExternal { overrides, .. } => overrides,
    };
    apply_overrides(&mut cfg, overrides)?;
    cfg.validate()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .context("building thread pool")?;

    pool.install(|| -> anyhow::Result<()> {
        match &cli.command {
            Command::Ingest { manifest, .. } => commands::cmd_ingest(&cfg, manifest)?,
            Command::Synth { scenario, spec, .. } => {
                let scenario = commands::resolve_scenario(
                    scenario.as_deref(),
                    spec.as_deref(),
                    cfg.base_seed,
                )?;
                commands::cmd_synth(&cfg, &scenario)?;
            }
            Command::BuildMap { manifest, .. } => {
                commands::cmd_build_map(&cfg, manifest)?;
            }
            Command::Evaluate {
                manifest,
                methods,
                predictions,
                ..
            } => {
                let methods = parse_methods(methods)?;
                commands::cmd_evaluate(&cfg, manifest, &methods, predictions.as_deref())?;
            }
            Command::Sweep {
                manifest,
                methods,
                predictions,
                ..
            } => {
                let methods = parse_methods(methods)?;
                commands::cmd_sweep(&cfg, manifest, &methods, predictions.as_deref())?;
            }
            Command::Export {
                map, what, class, ..
            } => {
                let what: ExportKind = what.parse()?;
                commands::cmd_export(&cfg, map, what, class.as_deref())?;
            }
            Command::ScoreExternal {
                manifest,
                predictions,
                ..
            } => commands::cmd_score_external(&cfg, manifest, predictions)?,
        }
        Ok(())
    })
}

fn main() {
    env_logger::init();
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
