//! Implementations behind the `cliffmap` binary's subcommands. The binary
//! only parses flags; everything here is library code so commands stay
//! testable and scriptable.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{
    self, data_efficiency_sweep, run_benchmark, score_external, EvalConfig, ExternalPredictions,
    Method,
};
use crate::ingest::{
    self, class_proportions, load_dataset, make_windows, Dataset, DatasetManifest,
};
use crate::map::{self, build_conditioned, kl_heatmap, load_map, save_map, ConditionedMapSet};
use crate::synth::{self, ScenarioSpec};

fn ensure_out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    Ok(cfg.output_dir.clone())
}

fn eval_config(cfg: &RunConfig, dt: f64) -> Result<EvalConfig> {
    Ok(EvalConfig {
        window: cfg.window(),
        grid: cfg.grid()?,
        fit: cfg.fit(),
        predictor: cfg.predictor(dt)?,
    })
}

fn print_dataset_summary(ds: &Dataset, cfg: &RunConfig) -> Result<()> {
    println!(
        "dataset: {} ({} trajectories, unit {}, dt {}s)",
        ds.name,
        ds.trajectories.len(),
        ds.unit,
        ds.dt
    );
    let instances = make_windows(ds, cfg.observed_steps, cfg.horizon_steps, cfg.stride);
    println!(
        "windows: {} instances (O_p {}, T_p {}, stride {})",
        instances.len(),
        cfg.observed_steps,
        cfg.horizon_steps,
        cfg.stride
    );
    for (class, fraction) in class_proportions(ds)? {
        println!("  class {:<16} {:5.1}%", class.label, fraction * 100.0);
    }
    Ok(())
}

/// `ingest`: validate a dataset and write it back in the normalized schema.
pub fn cmd_ingest(cfg: &RunConfig, manifest: &Path) -> Result<()> {
    let ds = load_dataset(manifest)?;
    print_dataset_summary(&ds, cfg)?;
    let out = ensure_out_dir(cfg)?;
    let csv_path = out.join("trajectories.csv");
    ingest::write_trajectory_csv(&ds.trajectories, &csv_path)?;
    let manifest_path = out.join("manifest.toml");
    write_manifest(&ds, &manifest_path)?;
    cfg.save_resolved(&out)?;
    println!("wrote {}", csv_path.display());
    println!("wrote {}", manifest_path.display());
    Ok(())
}

fn write_manifest(ds: &Dataset, path: &Path) -> Result<()> {
    let manifest = DatasetManifest {
        name: ds.name.clone(),
        unit: ds.unit,
        dt: ds.dt,
        files: vec![PathBuf::from("trajectories.csv")],
    };
    let text = toml::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(format!("cannot serialize manifest: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Built-in scenario by name, or a TOML scenario file.
pub fn resolve_scenario(
    name: Option<&str>,
    spec_path: Option<&Path>,
    seed: u64,
) -> Result<ScenarioSpec> {
    match (name, spec_path) {
        (_, Some(path)) => {
            let mut spec = synth::load_scenario(path)?;
            spec.seed = seed;
            Ok(spec)
        }
        (Some("crossing"), None) | (None, None) => Ok(ScenarioSpec::two_class_crossing(seed)),
        (Some("speed-contrast"), None) => Ok(ScenarioSpec::speed_contrast(seed)),
        (Some(other), None) => Err(Error::Config(format!(
            "unknown scenario '{other}' (built-ins: crossing, speed-contrast)"
        ))),
    }
}

/// `synth`: generate a synthetic dataset and its manifest.
pub fn cmd_synth(cfg: &RunConfig, scenario: &ScenarioSpec) -> Result<()> {
    let ds = synth::generate(scenario)?;
    print_dataset_summary(&ds, cfg)?;
    let out = ensure_out_dir(cfg)?;
    let csv_path = out.join("trajectories.csv");
    ingest::write_trajectory_csv(&ds.trajectories, &csv_path)?;
    let manifest_path = out.join("manifest.toml");
    write_manifest(&ds, &manifest_path)?;
    cfg.save_resolved(&out)?;
    println!("wrote {}", csv_path.display());
    println!("wrote {}", manifest_path.display());
    Ok(())
}

fn print_map_summary(set: &ConditionedMapSet) {
    let describe = |name: &str, map: &map::CliffMap| {
        let support: usize = map.intensity().values().sum();
        let max_support = map.intensity().values().copied().max().unwrap_or(0);
        println!(
            "  {:<16} {:>5} cells, {:>7} observations, busiest cell {}",
            name,
            map.len(),
            support,
            max_support
        );
    };
    describe("general", &set.general);
    for (class, map) in &set.per_class {
        describe(&class.label, map);
    }
}

/// `build-map`: build the conditioned map set from a dataset and save it.
pub fn cmd_build_map(cfg: &RunConfig, manifest: &Path) -> Result<PathBuf> {
    let ds = load_dataset(manifest)?;
    if ds.trajectories.is_empty() {
        return Err(Error::EmptyInput(format!(
            "dataset {} has no trajectories",
            ds.name
        )));
    }
    let set = build_conditioned(&ds.trajectories, &cfg.grid()?, ds.unit, &cfg.fit())?;
    println!("built maps:");
    print_map_summary(&set);
    let out = ensure_out_dir(cfg)?;
    let path = out.join("maps.json");
    save_map(&set, &path)?;
    cfg.save_resolved(&out)?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn load_external(path: Option<&Path>) -> Result<Option<ExternalPredictions>> {
    match path {
        Some(p) => Ok(Some(ExternalPredictions::load(p)?)),
        None => Ok(None),
    }
}

/// `evaluate`: run the benchmark for the requested methods and write the
/// long-form and aggregated CSVs.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    manifest: &Path,
    methods: &[Method],
    predictions: Option<&Path>,
) -> Result<()> {
    if methods.is_empty() {
        return Err(Error::Config("no methods requested".into()));
    }
    if methods.contains(&Method::External) && predictions.is_none() {
        return Err(Error::Config(
            "method 'external' requires --predictions <file>".into(),
        ));
    }
    let ds = load_dataset(manifest)?;
    let ecfg = eval_config(cfg, ds.dt)?;
    let split = cfg.split()?;
    let external = load_external(predictions)?;

    let mut results = Vec::new();
    for &method in methods {
        let result = run_benchmark(&ds, method, &split, &ecfg, external.as_ref())?;
        for rec in result.records() {
            println!(
                "{:<9} {:<16} K={} p={:.2}  ADE {:.4} +- {:.4}  FDE {:.4} +- {:.4}",
                rec.method,
                rec.class_label(),
                rec.k,
                rec.train_ratio,
                rec.ade_mean,
                rec.ade_std,
                rec.fde_mean,
                rec.fde_std
            );
        }
        results.push(result);
    }

    let out = ensure_out_dir(cfg)?;
    let long = out.join("results_long.csv");
    let agg = out.join("results_agg.csv");
    eval::write_long_csv(&results, &long)?;
    eval::write_aggregated_csv(&results, &agg)?;
    cfg.save_resolved(&out)?;
    println!("wrote {}", long.display());
    println!("wrote {}", agg.display());
    Ok(())
}

/// `sweep`: data-efficiency sweep over the configured train ratios.
pub fn cmd_sweep(
    cfg: &RunConfig,
    manifest: &Path,
    methods: &[Method],
    predictions: Option<&Path>,
) -> Result<()> {
    if methods.is_empty() {
        return Err(Error::Config("no methods requested".into()));
    }
    let ds = load_dataset(manifest)?;
    let ecfg = eval_config(cfg, ds.dt)?;
    let external = load_external(predictions)?;

    let mut results = Vec::new();
    for &method in methods {
        let sweep = data_efficiency_sweep(
            &ds,
            method,
            &cfg.sweep_ratios,
            cfg.iterations,
            cfg.base_seed,
            &ecfg,
            external.as_ref(),
        )?;
        for r in &sweep {
            println!(
                "{:<9} p={:.2}  global ADE {:.4}",
                r.method.to_string(),
                r.train_ratio,
                r.global_ade()
            );
        }
        results.extend(sweep);
    }

    let out = ensure_out_dir(cfg)?;
    let long = out.join("sweep_long.csv");
    let agg = out.join("sweep_agg.csv");
    eval::write_long_csv(&results, &long)?;
    eval::write_aggregated_csv(&results, &agg)?;
    cfg.save_resolved(&out)?;
    println!("wrote {}", long.display());
    println!("wrote {}", agg.display());
    Ok(())
}

/// What `export` should emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportKind {
    Field,
    Kl,
    Intensity,
}

impl std::str::FromStr for ExportKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "field" => Ok(ExportKind::Field),
            "kl" => Ok(ExportKind::Kl),
            "intensity" => Ok(ExportKind::Intensity),
            other => Err(Error::Config(format!(
                "unknown export kind '{other}' (field, kl, intensity)"
            ))),
        }
    }
}

fn select_map<'a>(set: &'a ConditionedMapSet, class: Option<&str>) -> Result<&'a map::CliffMap> {
    match class {
        None => Ok(&set.general),
        Some(label) => set
            .per_class
            .iter()
            .find(|(c, _)| c.label == label)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::InvalidInput(format!("map file has no class '{label}'"))),
    }
}

/// `export`: plot-ready CSVs from a saved map file.
pub fn cmd_export(
    cfg: &RunConfig,
    map_file: &Path,
    what: ExportKind,
    class: Option<&str>,
) -> Result<PathBuf> {
    let set = load_map(map_file)?;
    let out = ensure_out_dir(cfg)?;
    let path = match what {
        ExportKind::Field => {
            let map = select_map(&set, class)?;
            let path = out.join(match class {
                None => "field_general.csv".to_string(),
                Some(label) => format!("field_{label}.csv"),
            });
            map::export_field_to_path(map, &path)?;
            path
        }
        ExportKind::Intensity => {
            let map = select_map(&set, class)?;
            let path = out.join(match class {
                None => "intensity_general.csv".to_string(),
                Some(label) => format!("intensity_{label}.csv"),
            });
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["i", "j", "cx", "cy", "count"])?;
            for (cell, count) in map.intensity() {
                let center = map.grid().cell_center(cell);
                w.write_record([
                    cell.0.to_string(),
                    cell.1.to_string(),
                    center.x.to_string(),
                    center.y.to_string(),
                    count.to_string(),
                ])?;
            }
            w.flush()?;
            path
        }
        ExportKind::Kl => {
            let path = out.join("kl.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["class", "i", "j", "cx", "cy", "kl"])?;
            let classes: Vec<_> = match class {
                Some(label) => {
                    let found = set
                        .per_class
                        .keys()
                        .find(|c| c.label == label)
                        .cloned()
                        .ok_or_else(|| {
                            Error::InvalidInput(format!("map file has no class '{label}'"))
                        })?;
                    vec![found]
                }
                None => set.per_class.keys().cloned().collect(),
            };
            for c in classes {
                let heat = kl_heatmap(
                    &set.per_class[&c],
                    &set.general,
                    cfg.kl_samples,
                    cfg.base_seed,
                )?;
                for (cell, kl) in heat {
                    let center = set.general.grid().cell_center(cell);
                    w.write_record([
                        c.label.clone(),
                        cell.0.to_string(),
                        cell.1.to_string(),
                        center.x.to_string(),
                        center.y.to_string(),
                        kl.to_string(),
                    ])?;
                }
            }
            w.flush()?;
            path
        }
    };
    println!("wrote {}", path.display());
    Ok(path)
}

/// `score-external`: Top-K metrics for an interchange prediction file over
/// every window of a dataset.
pub fn cmd_score_external(cfg: &RunConfig, manifest: &Path, predictions: &Path) -> Result<()> {
    let ds = load_dataset(manifest)?;
    let instances = make_windows(&ds, cfg.observed_steps, cfg.horizon_steps, cfg.stride);
    let preds = ExternalPredictions::load(predictions)?;
    let result = score_external(&preds, &instances, cfg.samples)?;
    for rec in result.records() {
        println!(
            "{:<9} {:<16} K={}  ADE {:.4}  FDE {:.4}",
            rec.method,
            rec.class_label(),
            rec.k,
            rec.ade_mean,
            rec.fde_mean
        );
    }
    let out = ensure_out_dir(cfg)?;
    let long = out.join("external_long.csv");
    let agg = out.join("external_agg.csv");
    let results = vec![result];
    eval::write_long_csv(&results, &long)?;
    eval::write_aggregated_csv(&results, &agg)?;
    cfg.save_resolved(&out)?;
    println!("wrote {}", long.display());
    println!("wrote {}", agg.display());
    Ok(())
}

/// Collects per-class mean KL against the general map; used by examples and
/// the acceptance suite.
pub fn mean_kl_by_class(
    set: &ConditionedMapSet,
    n: usize,
    seed: u64,
) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (class, map) in &set.per_class {
        let heat = kl_heatmap(map, &set.general, n, seed)?;
        if heat.is_empty() {
            continue;
        }
        let mean = heat.values().sum::<f64>() / heat.len() as f64;
        out.insert(class.label.clone(), mean);
    }
    Ok(out)
}
