//! Top-K ADE/FDE metrics and the repeated random sub-sampling benchmark.
//!
//! Splits are drawn by source trajectory id (never by window) so train and
//! test never share windows of one trajectory. Per iteration, maps are built
//! from the train trajectories only, every test instance is predicted and
//! scored, and per-class plus global means are recorded; the reported value
//! is mean +- std across iteration means. The global row averages over all
//! test instances, not over class means.
//!
//! Externally produced predictions are scored through the same aggregation
//! via the interchange CSV `instance_id,sample_idx,t,x,y`.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::{make_windows, Dataset, PredictionInstance};
use crate::map::{build_conditioned, build_map, ConditionedMapSet, FitConfig, GridSpec};
use crate::predictor::{cvm_predict, predict, PredictionSet, PredictorParams};
use crate::seed;
use crate::traj::{AgentClass, PlanarVector};

/// Class column value used for the dataset-wide row.
pub const GLOBAL_CLASS: &str = "GLOBAL";

/// Average displacement error: mean pointwise Euclidean distance.
pub fn ade(gt: &[PlanarVector], pred: &[PlanarVector]) -> Result<f64> {
    if gt.is_empty() || gt.len() != pred.len() {
        return Err(Error::InvalidInput(format!(
            "ade: ground truth has {} points, prediction {}",
            gt.len(),
            pred.len()
        )));
    }
    let sum: f64 = gt.iter().zip(pred).map(|(a, b)| a.distance(*b)).sum();
    Ok(sum / gt.len() as f64)
}

/// Final displacement error: Euclidean distance at the last step.
pub fn fde(gt: &[PlanarVector], pred: &[PlanarVector]) -> Result<f64> {
    if gt.is_empty() || gt.len() != pred.len() {
        return Err(Error::InvalidInput(format!(
            "fde: ground truth has {} points, prediction {}",
            gt.len(),
            pred.len()
        )));
    }
    Ok(gt.last().unwrap().distance(*pred.last().unwrap()))
}

/// Top-K metrics: minimum ADE and minimum FDE over the samples, each taken
/// independently (a different sample may win each).
pub fn top_k(gt: &[PlanarVector], samples: &[Vec<PlanarVector>]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("top_k: no samples".into()));
    }
    let mut best_ade = f64::INFINITY;
    let mut best_fde = f64::INFINITY;
    for s in samples {
        best_ade = best_ade.min(ade(gt, s)?);
        best_fde = best_fde.min(fde(gt, s)?);
    }
    Ok((best_ade, best_fde))
}

/// Repeated random sub-sampling parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Train fraction p in (0, 1).
    pub train_ratio: f64,
    pub iterations: usize,
    pub base_seed: u64,
}

impl SplitSpec {
    pub fn new(train_ratio: f64, iterations: usize, base_seed: u64) -> Result<Self> {
        if !(train_ratio > 0.0 && train_ratio < 1.0) {
            return Err(Error::InvalidInput(format!(
                "train ratio must lie in (0, 1), got {train_ratio}"
            )));
        }
        if iterations == 0 {
            return Err(Error::InvalidInput("iterations must be >= 1".into()));
        }
        Ok(Self {
            train_ratio,
            iterations,
            base_seed,
        })
    }
}

/// One train/test partition, by instance index into the instance list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    /// Source trajectory ids assigned to training.
    pub train_traj_ids: BTreeSet<String>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Draws `iterations` seeded train/test partitions by trajectory id
/// (iteration `i` shuffles with seed `base_seed + i`), then expands them to
/// instance indices. `ceil(p * n)` trajectories go to training.
pub fn make_splits(instances: &[PredictionInstance], spec: &SplitSpec) -> Result<Vec<Split>> {
    if instances.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 instances to split, got {}",
            instances.len()
        )));
    }
    let ids: Vec<String> = instances
        .iter()
        .map(|i| i.source_traj.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let n = ids.len();
    // Tolerance guards ceil against p*n landing one ulp above an integer.
    let n_train = ((spec.train_ratio * n as f64) - 1e-9).ceil().max(0.0) as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::DegenerateSplit(format!(
            "train ratio {} over {n} trajectories leaves {n_train} train / {} test",
            spec.train_ratio,
            n - n_train
        )));
    }

    let mut splits = Vec::with_capacity(spec.iterations);
    for iter in 0..spec.iterations {
        let mut shuffled = ids.clone();
        let mut rng = seed::rng_for(spec.base_seed.wrapping_add(iter as u64));
        shuffled.shuffle(&mut rng);
        let train_traj_ids: BTreeSet<String> = shuffled[..n_train].iter().cloned().collect();
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (idx, inst) in instances.iter().enumerate() {
            if train_traj_ids.contains(&inst.source_traj) {
                train.push(idx);
            } else {
                test.push(idx);
            }
        }
        splits.push(Split {
            train_traj_ids,
            train,
            test,
        });
    }
    Ok(splits)
}

/// Prediction method under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Constant velocity baseline.
    Cvm,
    /// General CLiFF-map rollout.
    Mod,
    /// Class-conditioned CLiFF-map rollout.
    Cmod,
    /// Externally produced predictions from an interchange file.
    External,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Cvm => "cvm",
            Method::Mod => "mod",
            Method::Cmod => "cmod",
            Method::External => "external",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cvm" => Ok(Method::Cvm),
            "mod" => Ok(Method::Mod),
            "cmod" => Ok(Method::Cmod),
            "external" => Ok(Method::External),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

/// Window geometry for cutting instances.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WindowSpec {
    pub o_p: usize,
    pub t_p: usize,
    pub stride: usize,
}

/// Everything a benchmark run needs besides the dataset and the splits.
#[derive(Debug, Clone, Copy)]
pub struct EvalConfig {
    pub window: WindowSpec,
    pub grid: GridSpec,
    pub fit: FitConfig,
    pub predictor: PredictorParams,
}

impl EvalConfig {
    fn validate(&self) -> Result<()> {
        if self.window.t_p != self.predictor.horizon {
            return Err(Error::Config(format!(
                "window t_p {} must equal predictor horizon {}",
                self.window.t_p, self.predictor.horizon
            )));
        }
        Ok(())
    }
}

/// Mean metrics over one group of instances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScore {
    pub count: usize,
    pub ade: f64,
    pub fde: f64,
}

/// Per-class and global means for one validation iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationScore {
    pub iteration: usize,
    pub per_class: BTreeMap<AgentClass, ClassScore>,
    pub global: ClassScore,
}

/// All iterations of one (method, K, train ratio) run.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResult {
    pub method: Method,
    pub k: usize,
    pub train_ratio: f64,
    pub iterations: Vec<IterationScore>,
}

/// Aggregated mean +- std across iterations for one class (or GLOBAL).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub method: String,
    /// `None` is the global row.
    pub class: Option<AgentClass>,
    pub k: usize,
    pub train_ratio: f64,
    pub ade_mean: f64,
    pub ade_std: f64,
    pub fde_mean: f64,
    pub fde_std: f64,
}

impl MetricRecord {
    pub fn class_label(&self) -> &str {
        self.class
            .as_ref()
            .map_or(GLOBAL_CLASS, |c| c.label.as_str())
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl BenchmarkResult {
    /// Aggregates iteration means into per-class and global records. The
    /// standard deviation is the sample deviation across iteration means; a
    /// class absent from some iteration's test set aggregates over the
    /// iterations where it appears.
    pub fn records(&self) -> Vec<MetricRecord> {
        let mut classes: BTreeSet<AgentClass> = BTreeSet::new();
        for it in &self.iterations {
            classes.extend(it.per_class.keys().cloned());
        }
        let mut out = Vec::new();
        for class in classes {
            let ades: Vec<f64> = self
                .iterations
                .iter()
                .filter_map(|it| it.per_class.get(&class).map(|s| s.ade))
                .collect();
            let fdes: Vec<f64> = self
                .iterations
                .iter()
                .filter_map(|it| it.per_class.get(&class).map(|s| s.fde))
                .collect();
            let (ade_mean, ade_std) = mean_std(&ades);
            let (fde_mean, fde_std) = mean_std(&fdes);
            out.push(MetricRecord {
                method: self.method.to_string(),
                class: Some(class),
                k: self.k,
                train_ratio: self.train_ratio,
                ade_mean,
                ade_std,
                fde_mean,
                fde_std,
            });
        }
        let ades: Vec<f64> = self.iterations.iter().map(|it| it.global.ade).collect();
        let fdes: Vec<f64> = self.iterations.iter().map(|it| it.global.fde).collect();
        let (ade_mean, ade_std) = mean_std(&ades);
        let (fde_mean, fde_std) = mean_std(&fdes);
        out.push(MetricRecord {
            method: self.method.to_string(),
            class: None,
            k: self.k,
            train_ratio: self.train_ratio,
            ade_mean,
            ade_std,
            fde_mean,
            fde_std,
        });
        out
    }

    /// Global mean ADE across iterations.
    pub fn global_ade(&self) -> f64 {
        let ades: Vec<f64> = self.iterations.iter().map(|it| it.global.ade).collect();
        mean_std(&ades).0
    }
}

/// Externally produced predictions keyed by instance id.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalPredictions {
    by_instance: BTreeMap<String, Vec<Vec<PlanarVector>>>,
}

impl ExternalPredictions {
    /// Reads an interchange CSV `instance_id,sample_idx,t,x,y` with
    /// `t` in `1..=T_p` and `sample_idx` in `0..K-1`.
    pub fn load(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            instance_id: String,
            sample_idx: usize,
            t: usize,
            x: f64,
            y: f64,
        }
        let mut rdr = csv::Reader::from_path(path)?;
        let mut raw: BTreeMap<String, BTreeMap<usize, BTreeMap<usize, PlanarVector>>> =
            BTreeMap::new();
        for row in rdr.deserialize() {
            let row: Row = row?;
            if !(row.x.is_finite() && row.y.is_finite()) {
                return Err(Error::Validation(format!(
                    "instance {}: non-finite position at sample {} step {}",
                    row.instance_id, row.sample_idx, row.t
                )));
            }
            let prev = raw
                .entry(row.instance_id.clone())
                .or_default()
                .entry(row.sample_idx)
                .or_default()
                .insert(row.t, PlanarVector::new(row.x, row.y));
            if prev.is_some() {
                return Err(Error::Validation(format!(
                    "instance {}: duplicate (sample {}, t {})",
                    row.instance_id, row.sample_idx, row.t
                )));
            }
        }
        let mut by_instance = BTreeMap::new();
        for (id, samples) in raw {
            let k = samples.len();
            let mut seqs = Vec::with_capacity(k);
            for want in 0..k {
                let steps = samples.get(&want).ok_or_else(|| {
                    Error::Validation(format!("instance {id}: missing sample_idx {want}"))
                })?;
                let t_p = steps.len();
                let mut seq = Vec::with_capacity(t_p);
                for t in 1..=t_p {
                    seq.push(*steps.get(&t).ok_or_else(|| {
                        Error::Validation(format!(
                            "instance {id}: sample {want} missing step t={t}"
                        ))
                    })?);
                }
                seqs.push(seq);
            }
            by_instance.insert(id, seqs);
        }
        Ok(Self { by_instance })
    }

    pub fn from_sets(sets: &[PredictionSet]) -> Self {
        Self {
            by_instance: sets
                .iter()
                .map(|s| (s.instance_id.clone(), s.samples.clone()))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.by_instance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_instance.is_empty()
    }

    /// Predictions for one instance, checked against the expected sample
    /// count and horizon.
    fn lookup(&self, id: &str, k: usize, t_p: usize) -> Result<&Vec<Vec<PlanarVector>>> {
        let seqs = self.by_instance.get(id).ok_or_else(|| {
            Error::Validation(format!("prediction file does not cover instance '{id}'"))
        })?;
        if seqs.len() != k {
            return Err(Error::Validation(format!(
                "instance '{id}': expected {k} samples, file has {}",
                seqs.len()
            )));
        }
        if let Some(seq) = seqs.iter().find(|s| s.len() != t_p) {
            return Err(Error::Validation(format!(
                "instance '{id}': sample length {} does not match horizon {t_p}",
                seq.len()
            )));
        }
        Ok(seqs)
    }
}

/// Writes prediction sets in the interchange CSV schema.
pub fn write_predictions_csv(sets: &[PredictionSet], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["instance_id", "sample_idx", "t", "x", "y"])?;
    for set in sets {
        for (sample_idx, sample) in set.samples.iter().enumerate() {
            for (t0, p) in sample.iter().enumerate() {
                w.write_record([
                    set.instance_id.as_str(),
                    &sample_idx.to_string(),
                    &(t0 + 1).to_string(),
                    &p.x.to_string(),
                    &p.y.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn score_instances(iteration: usize, scored: Vec<(AgentClass, f64, f64)>) -> IterationScore {
    let mut per_class_acc: BTreeMap<AgentClass, (usize, f64, f64)> = BTreeMap::new();
    let mut global = (0usize, 0.0f64, 0.0f64);
    for (class, a, f) in scored {
        let e = per_class_acc.entry(class).or_insert((0, 0.0, 0.0));
        e.0 += 1;
        e.1 += a;
        e.2 += f;
        global.0 += 1;
        global.1 += a;
        global.2 += f;
    }
    let per_class = per_class_acc
        .into_iter()
        .map(|(c, (n, a, f))| {
            (
                c,
                ClassScore {
                    count: n,
                    ade: a / n as f64,
                    fde: f / n as f64,
                },
            )
        })
        .collect();
    IterationScore {
        iteration,
        per_class,
        global: ClassScore {
            count: global.0,
            ade: global.1 / global.0 as f64,
            fde: global.2 / global.0 as f64,
        },
    }
}

/// Runs the repeated random sub-sampling benchmark for one method.
///
/// Per iteration: split by trajectory id, build maps from the train
/// trajectories (general for `Mod`, conditioned for `Cmod`, none for `Cvm`
/// and `External`), predict every test instance and aggregate Top-K
/// metrics. `external` must be provided for [`Method::External`] and cover
/// every instance that can land in a test set.
pub fn run_benchmark(
    dataset: &Dataset,
    method: Method,
    split: &SplitSpec,
    cfg: &EvalConfig,
    external: Option<&ExternalPredictions>,
) -> Result<BenchmarkResult> {
    cfg.validate()?;
    if method == Method::External && external.is_none() {
        return Err(Error::InvalidInput(
            "external scoring requires a predictions file".into(),
        ));
    }
    let instances = make_windows(dataset, cfg.window.o_p, cfg.window.t_p, cfg.window.stride);
    if instances.is_empty() {
        return Err(Error::EmptyInput(format!(
            "dataset {} yields no prediction instances",
            dataset.name
        )));
    }
    let splits = make_splits(&instances, split)?;
    let k = cfg.predictor.samples;

    let mut iterations = Vec::with_capacity(splits.len());
    for (iter_idx, part) in splits.iter().enumerate() {
        let maps: Option<ConditionedMapSet> = match method {
            Method::Cvm | Method::External => None,
            Method::Mod | Method::Cmod => {
                let train: Vec<_> = dataset
                    .trajectories
                    .iter()
                    .filter(|t| part.train_traj_ids.contains(&t.id))
                    .cloned()
                    .collect();
                let fit = FitConfig {
                    seed: seed::derive(cfg.fit.seed, iter_idx as u64),
                    ..cfg.fit
                };
                Some(match method {
                    Method::Mod => ConditionedMapSet {
                        general: build_map(&train, &cfg.grid, dataset.unit, &fit)?,
                        per_class: BTreeMap::new(),
                    },
                    Method::Cmod => build_conditioned(&train, &cfg.grid, dataset.unit, &fit)?,
                    _ => unreachable!(),
                })
            }
        };

        // Fixed scoring order: test instances sorted by id.
        let mut test_refs: Vec<&PredictionInstance> =
            part.test.iter().map(|&i| &instances[i]).collect();
        test_refs.sort_by_key(|inst| inst.id());

        let scored: Vec<(AgentClass, f64, f64)> = test_refs
            .par_iter()
            .enumerate()
            .map(|(ordinal, inst)| -> Result<(AgentClass, f64, f64)> {
                let gt: Vec<PlanarVector> = inst.future.iter().map(|s| s.position).collect();
                let samples: Vec<Vec<PlanarVector>> = match method {
                    Method::Cvm => {
                        vec![cvm_predict(inst, cfg.predictor.horizon, cfg.predictor.dt)]
                    }
                    Method::External => external
                        .unwrap()
                        .lookup(&inst.id(), k, cfg.predictor.horizon)?
                        .clone(),
                    Method::Mod | Method::Cmod => {
                        let pred_seed =
                            seed::derive2(split.base_seed, iter_idx as u64, ordinal as u64);
                        predict(
                            inst,
                            maps.as_ref().unwrap(),
                            &cfg.predictor,
                            method == Method::Cmod,
                            pred_seed,
                        )?
                        .samples
                    }
                };
                let (a, f) = top_k(&gt, &samples)?;
                Ok((inst.class.clone(), a, f))
            })
            .collect::<Result<_>>()?;

        iterations.push(score_instances(iter_idx, scored));
    }

    Ok(BenchmarkResult {
        method,
        k: match method {
            Method::Cvm => 1,
            _ => k,
        },
        train_ratio: split.train_ratio,
        iterations,
    })
}

/// One benchmark per train ratio, sharing the base seed; mirrors decreasing
/// the training fraction from 0.9 to 0.1.
pub fn data_efficiency_sweep(
    dataset: &Dataset,
    method: Method,
    p_values: &[f64],
    iterations: usize,
    base_seed: u64,
    cfg: &EvalConfig,
    external: Option<&ExternalPredictions>,
) -> Result<Vec<BenchmarkResult>> {
    if p_values.is_empty() {
        return Err(Error::InvalidInput(
            "sweep needs at least one train ratio".into(),
        ));
    }
    let mut out = Vec::with_capacity(p_values.len());
    for &p in p_values {
        let split = SplitSpec::new(p, iterations, base_seed)?;
        out.push(run_benchmark(dataset, method, &split, cfg, external)?);
    }
    Ok(out)
}

/// Scores an external prediction file over a fixed instance list (one pass,
/// no splits); aggregation matches [`run_benchmark`] with one iteration.
pub fn score_external(
    predictions: &ExternalPredictions,
    instances: &[PredictionInstance],
    k: usize,
) -> Result<BenchmarkResult> {
    if instances.is_empty() {
        return Err(Error::EmptyInput("no instances to score".into()));
    }
    let mut refs: Vec<&PredictionInstance> = instances.iter().collect();
    refs.sort_by_key(|inst| inst.id());

    let mut scored = Vec::with_capacity(refs.len());
    for inst in refs {
        let gt: Vec<PlanarVector> = inst.future.iter().map(|s| s.position).collect();
        let samples = predictions.lookup(&inst.id(), k, gt.len())?;
        let (a, f) = top_k(&gt, samples)?;
        scored.push((inst.class.clone(), a, f));
    }
    Ok(BenchmarkResult {
        method: Method::External,
        k,
        train_ratio: 0.0,
        iterations: vec![score_instances(0, scored)],
    })
}

/// Writes the long-form benchmark CSV:
/// `method,class,K,p,iteration,ade,fde` with one row per class (plus a
/// GLOBAL row) per iteration.
pub fn write_long_csv(results: &[BenchmarkResult], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "class", "K", "p", "iteration", "ade", "fde"])?;
    for r in results {
        for it in &r.iterations {
            for (class, score) in &it.per_class {
                w.write_record([
                    r.method.to_string(),
                    class.label.clone(),
                    r.k.to_string(),
                    r.train_ratio.to_string(),
                    it.iteration.to_string(),
                    score.ade.to_string(),
                    score.fde.to_string(),
                ])?;
            }
            w.write_record([
                r.method.to_string(),
                GLOBAL_CLASS.to_string(),
                r.k.to_string(),
                r.train_ratio.to_string(),
                it.iteration.to_string(),
                it.global.ade.to_string(),
                it.global.fde.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the aggregated benchmark CSV:
/// `method,class,K,p,ade_mean,ade_std,fde_mean,fde_std`.
pub fn write_aggregated_csv(results: &[BenchmarkResult], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "method", "class", "K", "p", "ade_mean", "ade_std", "fde_mean", "fde_std",
    ])?;
    for r in results {
        for rec in r.records() {
            w.write_record([
                rec.method.clone(),
                rec.class_label().to_string(),
                rec.k.to_string(),
                rec.train_ratio.to_string(),
                rec.ade_mean.to_string(),
                rec.ade_std.to_string(),
                rec.fde_mean.to_string(),
                rec.fde_std.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
