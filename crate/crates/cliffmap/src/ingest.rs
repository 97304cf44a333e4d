//! Trajectory ingestion: CSV parsing, resampling onto a uniform time
//! lattice, velocity derivation and observation/prediction window cutting.
//!
//! The on-disk schema is a headered CSV `traj_id,time,x,y,class` with time
//! in seconds and positions in dataset units. A small TOML manifest records
//! the dataset name, unit, target time step and the CSV files it spans.
//! Parsing always resamples onto the manifest `dt` (a no-op for data already
//! on that lattice) and fills velocities by central differences.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::traj::{AgentClass, PlanarVector, State, Trajectory};

/// Length unit of a dataset; carried as metadata, never converted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Meter,
    Pixel,
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Unit::Meter => f.write_str("meter"),
            Unit::Pixel => f.write_str("pixel"),
        }
    }
}

impl FromStr for Unit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "meter" | "m" => Ok(Unit::Meter),
            "pixel" | "px" => Ok(Unit::Pixel),
            other => Err(Error::Config(format!("unknown unit '{other}'"))),
        }
    }
}

/// A set of uniformly sampled trajectories sharing one unit and time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub unit: Unit,
    pub dt: f64,
    pub trajectories: Vec<Trajectory>,
    pub classes: Vec<AgentClass>,
}

impl Dataset {
    /// Validates the dataset invariants: unique class labels, every
    /// trajectory class interned in `classes`, every trajectory on the
    /// dataset time step.
    pub fn new(
        name: impl Into<String>,
        unit: Unit,
        dt: f64,
        trajectories: Vec<Trajectory>,
        classes: Vec<AgentClass>,
    ) -> Result<Self> {
        let name = name.into();
        let mut labels = BTreeSet::new();
        for c in &classes {
            if !labels.insert(c.label.clone()) {
                return Err(Error::Data(format!(
                    "dataset {name}: duplicate class label '{}'",
                    c.label
                )));
            }
        }
        for t in &trajectories {
            if !classes.contains(&t.class) {
                return Err(Error::Data(format!(
                    "dataset {name}: trajectory {} has uninterned class '{}'",
                    t.id, t.class.label
                )));
            }
            if (t.dt - dt).abs() > 1e-9 * dt.max(1.0) {
                return Err(Error::Data(format!(
                    "dataset {name}: trajectory {} has dt {} but dataset dt is {dt}",
                    t.id, t.dt
                )));
            }
        }
        Ok(Self {
            name,
            unit,
            dt,
            trajectories,
            classes,
        })
    }

    pub fn class_by_label(&self, label: &str) -> Option<&AgentClass> {
        self.classes.iter().find(|c| c.label == label)
    }
}

/// One benchmark window: `observed` states seen by the predictor and
/// `future` ground-truth states, contiguous in the source trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionInstance {
    pub observed: Vec<State>,
    pub future: Vec<State>,
    pub class: AgentClass,
    pub source_traj: String,
    /// Index of the first observed state in the source trajectory.
    pub offset: usize,
}

impl PredictionInstance {
    /// Stable identifier used by the prediction interchange format.
    pub fn id(&self) -> String {
        format!("{}#{}", self.source_traj, self.offset)
    }
}

/// What to expect of a trajectory file: dataset name, units, target dt.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FormatSpec {
    pub name: String,
    pub unit: Unit,
    /// Target time step, seconds; parsed data is resampled onto it.
    pub dt: f64,
}

const CSV_COLUMNS: [&str; 5] = ["traj_id", "time", "x", "y", "class"];

struct RawRow {
    time: f64,
    position: PlanarVector,
    class: String,
    line: u64,
}

/// Parses a trajectory CSV, groups rows by id, sorts by time, resamples
/// onto the `spec.dt` lattice and derives velocities.
///
/// Agents with fewer than two usable samples are skipped with a warning.
pub fn parse_trajectories(path: &Path, spec: &FormatSpec) -> Result<Dataset> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::InvalidInput(format!("cannot open {}: {e}", path.display())))?;
    parse_trajectories_reader(file, path, spec)
}

/// As [`parse_trajectories`] over any reader; `path` is used in messages.
pub fn parse_trajectories_reader<R: std::io::Read>(
    reader: R,
    path: &Path,
    spec: &FormatSpec,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);

    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, format!("cannot read header: {e}")))?
        .clone();
    let mut col = [0usize; 5];
    for (slot, name) in CSV_COLUMNS.iter().enumerate() {
        col[slot] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| parse_err(path, 1, format!("missing column '{name}'")))?;
    }

    let mut groups: BTreeMap<String, Vec<RawRow>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, format!("malformed row: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |idx: usize| -> Result<&str> {
            record.get(col[idx]).ok_or_else(|| {
                parse_err(path, line, format!("missing field '{}'", CSV_COLUMNS[idx]))
            })
        };
        let num = |idx: usize| -> Result<f64> {
            let raw = field(idx)?;
            let v: f64 = raw.parse().map_err(|_| {
                parse_err(
                    path,
                    line,
                    format!("invalid number '{raw}' in '{}'", CSV_COLUMNS[idx]),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_err(
                    path,
                    line,
                    format!("non-finite value in '{}'", CSV_COLUMNS[idx]),
                ));
            }
            Ok(v)
        };

        let id = field(0)?.to_string();
        let row = RawRow {
            time: num(1)?,
            position: PlanarVector::new(num(2)?, num(3)?),
            class: field(4)?.to_string(),
            line,
        };
        groups.entry(id).or_default().push(row);
    }

    // Intern classes: sorted distinct labels get dense ids.
    let labels: BTreeSet<String> = groups
        .values()
        .flat_map(|rows| rows.iter().map(|r| r.class.clone()))
        .collect();
    let classes: Vec<AgentClass> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| AgentClass::new(l.clone(), i as u32))
        .collect();

    let mut trajectories = Vec::new();
    for (id, mut rows) in groups {
        let class_label = rows[0].class.clone();
        if let Some(bad) = rows.iter().find(|r| r.class != class_label) {
            return Err(Error::Data(format!(
                "{}: trajectory {id} switches class from '{class_label}' to '{}' at line {}",
                path.display(),
                bad.class,
                bad.line
            )));
        }
        rows.sort_by(|a, b| a.time.total_cmp(&b.time));
        if let Some(w) = rows.windows(2).find(|w| w[0].time == w[1].time) {
            return Err(Error::Data(format!(
                "{}: trajectory {id} has duplicate timestamp {} (line {})",
                path.display(),
                w[0].time,
                w[1].line
            )));
        }
        if rows.len() < 2 {
            log::warn!("skipping trajectory {id}: only {} sample(s)", rows.len());
            continue;
        }

        let times: Vec<f64> = rows.iter().map(|r| r.time).collect();
        let positions: Vec<PlanarVector> = rows.iter().map(|r| r.position).collect();
        let states = resample_series(&times, &positions, None, spec.dt);
        if states.len() < 2 {
            log::warn!(
                "skipping trajectory {id}: spans {:.3}s, less than one {}s step",
                times.last().unwrap() - times[0],
                spec.dt
            );
            continue;
        }
        let class = classes
            .iter()
            .find(|c| c.label == class_label)
            .expect("label interned above")
            .clone();
        let traj = Trajectory::new(id, class, spec.dt, times[0], states)?;
        trajectories.push(derive_velocities(&traj)?);
    }

    Dataset::new(spec.name.clone(), spec.unit, spec.dt, trajectories, classes)
}

fn parse_err(path: &Path, line: u64, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    }
}

/// Linearly interpolates positions (and velocities, when present) onto the
/// uniform lattice `t0 + k*dt` covering the input time span.
fn resample_series(
    times: &[f64],
    positions: &[PlanarVector],
    velocities: Option<&[PlanarVector]>,
    dt: f64,
) -> Vec<State> {
    let t0 = times[0];
    let t_end = *times.last().unwrap();
    let steps = ((t_end - t0) / dt * (1.0 + 1e-12)).floor() as usize;

    let mut out = Vec::with_capacity(steps + 1);
    let mut cursor = 0usize;
    for k in 0..=steps {
        let t = t0 + k as f64 * dt;
        while cursor + 1 < times.len() - 1 && times[cursor + 1] <= t {
            cursor += 1;
        }
        let (ta, tb) = (times[cursor], times[cursor + 1]);
        let frac = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
        let lerp = |a: PlanarVector, b: PlanarVector| a + (b - a) * frac;
        let position = lerp(positions[cursor], positions[cursor + 1]);
        let velocity = velocities
            .map(|v| lerp(v[cursor], v[cursor + 1]))
            .unwrap_or_default();
        out.push(State::new(position, velocity));
    }
    out
}

/// Resamples a trajectory onto a `dt_target` lattice anchored at its first
/// timestamp. Positions and velocities are interpolated linearly; rerun
/// [`derive_velocities`] if velocities should instead be recomputed from the
/// new positions.
pub fn resample(traj: &Trajectory, dt_target: f64) -> Result<Trajectory> {
    if !(dt_target.is_finite() && dt_target > 0.0) {
        return Err(Error::InvalidInput(format!(
            "resample: dt_target must be positive, got {dt_target}"
        )));
    }
    let times: Vec<f64> = (0..traj.len()).map(|k| traj.time_at(k)).collect();
    let positions: Vec<PlanarVector> = traj.states.iter().map(|s| s.position).collect();
    let velocities: Vec<PlanarVector> = traj.states.iter().map(|s| s.velocity).collect();
    let states = resample_series(&times, &positions, Some(&velocities), dt_target);
    if states.len() < 2 {
        return Err(Error::EmptyInput(format!(
            "resample: trajectory {} spans less than one {dt_target}s step",
            traj.id
        )));
    }
    Trajectory::new(
        traj.id.clone(),
        traj.class.clone(),
        dt_target,
        traj.start_time,
        states,
    )
}

/// Fills velocities by central differences at interior states and one-sided
/// differences at the two ends.
pub fn derive_velocities(traj: &Trajectory) -> Result<Trajectory> {
    let n = traj.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "derive_velocities: trajectory {} has fewer than 2 states",
            traj.id
        )));
    }
    let p = |k: usize| traj.states[k].position;
    let dt = traj.dt;
    let mut states = Vec::with_capacity(n);
    for k in 0..n {
        let velocity = if k == 0 {
            (p(1) - p(0)) * (1.0 / dt)
        } else if k == n - 1 {
            (p(n - 1) - p(n - 2)) * (1.0 / dt)
        } else {
            (p(k + 1) - p(k - 1)) * (1.0 / (2.0 * dt))
        };
        states.push(State::new(p(k), velocity));
    }
    Trajectory::new(
        traj.id.clone(),
        traj.class.clone(),
        dt,
        traj.start_time,
        states,
    )
}

/// Cuts fixed-size observation/prediction windows at offsets `0, stride,
/// 2*stride, ...` while they fit. Trajectories shorter than `o_p + t_p`
/// yield no instances.
pub fn make_windows(
    dataset: &Dataset,
    o_p: usize,
    t_p: usize,
    stride: usize,
) -> Vec<PredictionInstance> {
    assert!(
        o_p >= 1 && t_p >= 1 && stride >= 1,
        "window contract violated"
    );
    let mut out = Vec::new();
    for traj in &dataset.trajectories {
        let need = o_p + t_p;
        let mut offset = 0;
        while offset + need <= traj.len() {
            out.push(PredictionInstance {
                observed: traj.states[offset..offset + o_p].to_vec(),
                future: traj.states[offset + o_p..offset + need].to_vec(),
                class: traj.class.clone(),
                source_traj: traj.id.clone(),
                offset,
            });
            offset += stride;
        }
    }
    out
}

/// Fraction of trajectories per class; fractions sum to 1.
pub fn class_proportions(dataset: &Dataset) -> Result<BTreeMap<AgentClass, f64>> {
    if dataset.trajectories.is_empty() {
        return Err(Error::EmptyInput(format!(
            "dataset {} has no trajectories",
            dataset.name
        )));
    }
    let mut counts: BTreeMap<AgentClass, usize> = BTreeMap::new();
    for t in &dataset.trajectories {
        *counts.entry(t.class.clone()).or_default() += 1;
    }
    let total = dataset.trajectories.len() as f64;
    Ok(counts
        .into_iter()
        .map(|(c, n)| (c, n as f64 / total))
        .collect())
}

/// Dataset manifest: unit, target dt and the trajectory files it spans.
/// Stored as TOML; file paths are relative to the manifest location.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub unit: Unit,
    pub dt: f64,
    pub files: Vec<PathBuf>,
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read manifest {}: {e}", path.display())))?;
    let manifest: DatasetManifest = toml::from_str(&text)
        .map_err(|e| Error::Config(format!("manifest {}: {e}", path.display())))?;
    if !(manifest.dt.is_finite() && manifest.dt > 0.0) {
        return Err(Error::Config(format!(
            "manifest {}: dt must be positive, got {}",
            path.display(),
            manifest.dt
        )));
    }
    if manifest.files.is_empty() {
        return Err(Error::Config(format!(
            "manifest {}: no trajectory files listed",
            path.display()
        )));
    }
    Ok(manifest)
}

/// Loads and merges every file named by a manifest into one dataset.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = load_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let mut all: Vec<Trajectory> = Vec::new();
    let mut seen_ids: BTreeSet<String> = BTreeSet::new();
    for file in &manifest.files {
        let path = base.join(file);
        let spec = FormatSpec {
            name: manifest.name.clone(),
            unit: manifest.unit,
            dt: manifest.dt,
        };
        let ds = parse_trajectories(&path, &spec)?;
        for t in ds.trajectories {
            if !seen_ids.insert(t.id.clone()) {
                return Err(Error::Data(format!(
                    "trajectory id '{}' appears in more than one file of {}",
                    t.id,
                    manifest_path.display()
                )));
            }
            all.push(t);
        }
    }

    // Re-intern classes across files.
    let labels: BTreeSet<String> = all.iter().map(|t| t.class.label.clone()).collect();
    let classes: Vec<AgentClass> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| AgentClass::new(l.clone(), i as u32))
        .collect();
    for t in &mut all {
        t.class = classes
            .iter()
            .find(|c| c.label == t.class.label)
            .expect("label interned above")
            .clone();
    }
    Dataset::new(manifest.name, manifest.unit, manifest.dt, all, classes)
}

/// Writes trajectories in the standard CSV schema.
pub fn write_trajectory_csv(trajectories: &[Trajectory], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_COLUMNS)?;
    for t in trajectories {
        for (k, s) in t.states.iter().enumerate() {
            w.write_record([
                t.id.as_str(),
                &format!("{}", t.time_at(k)),
                &format!("{}", s.position.x),
                &format!("{}", s.position.y),
                t.class.label.as_str(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec(dt: f64) -> FormatSpec {
        FormatSpec {
            name: "test".into(),
            unit: Unit::Meter,
            dt,
        }
    }

    fn parse_str(csv: &str, dt: f64) -> Result<Dataset> {
        parse_trajectories_reader(csv.as_bytes(), Path::new("test.csv"), &spec(dt))
    }

    fn class(label: &str) -> AgentClass {
        AgentClass::new(label, 0)
    }

    fn traj_from_positions(positions: &[(f64, f64)], dt: f64) -> Trajectory {
        let states = positions
            .iter()
            .map(|&(x, y)| State::new(PlanarVector::new(x, y), PlanarVector::default()))
            .collect();
        Trajectory::new("t0", class("Pedestrian"), dt, 0.0, states).unwrap()
    }

    #[test]
    fn parse_two_row_file() {
        let ds = parse_str(
            "traj_id,time,x,y,class\na,0.0,0.0,0.0,Pedestrian\na,0.4,0.4,0.0,Pedestrian\n",
            0.4,
        )
        .unwrap();
        assert_eq!(ds.trajectories.len(), 1);
        assert_eq!(ds.trajectories[0].len(), 2);
        assert_eq!(ds.classes.len(), 1);
        assert_eq!(ds.trajectories[0].class.label, "Pedestrian");
    }

    #[test]
    fn parse_partitions_interleaved_ids() {
        let ds = parse_str(
            "traj_id,time,x,y,class\n\
             a,0.0,0.0,0.0,Pedestrian\n\
             b,0.0,5.0,5.0,Bicyclist\n\
             a,0.4,0.4,0.0,Pedestrian\n\
             b,0.4,5.4,5.0,Bicyclist\n",
            0.4,
        )
        .unwrap();
        assert_eq!(ds.trajectories.len(), 2);
        let a = ds.trajectories.iter().find(|t| t.id == "a").unwrap();
        let b = ds.trajectories.iter().find(|t| t.id == "b").unwrap();
        assert_eq!(a.states[0].position, PlanarVector::new(0.0, 0.0));
        assert_eq!(b.states[0].position, PlanarVector::new(5.0, 5.0));
    }

    #[test]
    fn parse_rejects_duplicate_timestamp() {
        let err = parse_str(
            "traj_id,time,x,y,class\na,0.0,0.0,0.0,P\na,0.0,0.4,0.0,P\na,0.4,0.8,0.0,P\n",
            0.4,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Data(_)), "{err}");
    }

    #[test]
    fn parse_reports_line_of_malformed_row() {
        let err = parse_str(
            "traj_id,time,x,y,class\na,0.0,0.0,0.0,P\na,0.4,oops,0.0,P\n",
            0.4,
        )
        .unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn parse_requires_schema_columns() {
        let err = parse_str("traj_id,time,x,y\na,0,0,0\n", 0.4).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn parse_rejects_class_switch_within_id() {
        let err = parse_str(
            "traj_id,time,x,y,class\na,0.0,0.0,0.0,P\na,0.4,0.4,0.0,Q\n",
            0.4,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn resample_identity_on_matching_lattice() {
        let t = traj_from_positions(&[(0.0, 0.0), (0.4, 0.1), (0.8, 0.3)], 0.4);
        let r = resample(&t, 0.4).unwrap();
        assert_eq!(r.len(), 3);
        for (a, b) in t.states.iter().zip(&r.states) {
            assert_abs_diff_eq!(a.position.x, b.position.x, epsilon = 1e-12);
            assert_abs_diff_eq!(a.position.y, b.position.y, epsilon = 1e-12);
        }
    }

    #[test]
    fn resample_interpolates_midpoint() {
        let t = traj_from_positions(&[(0.0, 0.0), (1.0, 0.0)], 1.0);
        let r = resample(&t, 0.5).unwrap();
        assert_eq!(r.len(), 3);
        assert_abs_diff_eq!(r.states[1].position.x, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.states[1].position.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn default_dt_is_horizon_over_steps() {
        // 4.8 s over 12 steps forces 0.4 s.
        assert_abs_diff_eq!(4.8 / 12.0, 0.4, epsilon = 1e-15);
    }

    #[test]
    fn resample_errors_when_span_too_short() {
        let t = traj_from_positions(&[(0.0, 0.0), (0.1, 0.0)], 0.1);
        assert!(matches!(resample(&t, 0.5), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn resample_is_idempotent() {
        let t = traj_from_positions(&[(0.0, 0.0), (0.3, 0.4), (0.9, 0.1), (1.0, 0.8)], 0.25);
        let once = resample(&t, 0.4).unwrap();
        let twice = resample(&once, 0.4).unwrap();
        assert_eq!(once.len(), twice.len());
        for (a, b) in once.states.iter().zip(&twice.states) {
            assert_abs_diff_eq!(a.position.x, b.position.x, epsilon = 1e-12);
            assert_abs_diff_eq!(a.position.y, b.position.y, epsilon = 1e-12);
        }
    }

    #[test]
    fn derive_velocities_constant_motion() {
        let t = traj_from_positions(&[(0.0, 0.0), (0.4, 0.0), (0.8, 0.0)], 0.4);
        let d = derive_velocities(&t).unwrap();
        for s in &d.states {
            assert_abs_diff_eq!(s.velocity.x, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(s.velocity.y, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn derive_velocities_stationary() {
        let t = traj_from_positions(&[(1.0, 2.0), (1.0, 2.0), (1.0, 2.0)], 0.4);
        let d = derive_velocities(&t).unwrap();
        for s in &d.states {
            assert_eq!(s.velocity, PlanarVector::new(0.0, 0.0));
        }
    }

    #[test]
    fn derive_velocities_corner_central_difference() {
        let t = traj_from_positions(&[(0.0, 0.0), (0.4, 0.0), (0.4, 0.4)], 0.4);
        let d = derive_velocities(&t).unwrap();
        // ((0.4,0.4) - (0,0)) / 0.8
        assert_abs_diff_eq!(d.states[1].velocity.x, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(d.states[1].velocity.y, 0.5, epsilon = 1e-12);
    }

    fn dataset_of_lengths(lengths: &[usize]) -> Dataset {
        let c = class("P");
        let trajectories: Vec<Trajectory> = lengths
            .iter()
            .enumerate()
            .map(|(i, &len)| {
                let states: Vec<State> = (0..len)
                    .map(|k| {
                        State::new(
                            PlanarVector::new(k as f64 * 0.4, 0.0),
                            PlanarVector::new(1.0, 0.0),
                        )
                    })
                    .collect();
                Trajectory::new(format!("t{i}"), c.clone(), 0.4, 0.0, states).unwrap()
            })
            .collect();
        Dataset::new("test", Unit::Meter, 0.4, trajectories, vec![c]).unwrap()
    }

    #[test]
    fn make_windows_counts() {
        assert_eq!(make_windows(&dataset_of_lengths(&[20]), 8, 12, 1).len(), 1);
        assert_eq!(make_windows(&dataset_of_lengths(&[21]), 8, 12, 1).len(), 2);
        assert_eq!(make_windows(&dataset_of_lengths(&[19]), 8, 12, 1).len(), 0);
    }

    #[test]
    fn make_windows_slices_are_contiguous() {
        let ds = dataset_of_lengths(&[25]);
        for inst in make_windows(&ds, 8, 12, 2) {
            let t = &ds.trajectories[0];
            let all: Vec<State> = inst.observed.iter().chain(&inst.future).cloned().collect();
            assert_eq!(&t.states[inst.offset..inst.offset + 20], all.as_slice());
        }
    }

    #[test]
    fn class_proportions_basics() {
        let ds = dataset_of_lengths(&[20, 20, 20]);
        let prop = class_proportions(&ds).unwrap();
        assert_eq!(prop.len(), 1);
        assert_abs_diff_eq!(prop.values().next().unwrap(), &1.0, epsilon = 1e-12);
    }

    #[test]
    fn class_proportions_three_to_one() {
        let p = class("P");
        let q = AgentClass::new("Q", 1);
        let mk = |id: &str, c: &AgentClass| {
            let states = vec![State::default(); 2];
            Trajectory::new(id, c.clone(), 0.4, 0.0, states).unwrap()
        };
        let ds = Dataset::new(
            "test",
            Unit::Meter,
            0.4,
            vec![mk("a", &p), mk("b", &p), mk("c", &p), mk("d", &q)],
            vec![p.clone(), q.clone()],
        )
        .unwrap();
        let prop = class_proportions(&ds).unwrap();
        assert_abs_diff_eq!(prop[&p], 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(prop[&q], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(prop.values().sum::<f64>(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn class_proportions_reproduce_imbalanced_fixture() {
        // Counts shaped 64.6 / 34.3 / 1.1 percent.
        let mut csv = String::from("traj_id,time,x,y,class\n");
        let mut next = 0usize;
        for (label, count) in [("Pedestrian", 646), ("Bicyclist", 343), ("Car", 11)] {
            for _ in 0..count {
                let id = format!("t{next}");
                for k in 0..2 {
                    csv.push_str(&format!("{id},{},{next}.0,0.0,{label}\n", k as f64 * 0.4));
                }
                next += 1;
            }
        }
        let ds = parse_str(&csv, 0.4).unwrap();
        let prop = class_proportions(&ds).unwrap();
        let by_label = |l: &str| prop[ds.class_by_label(l).unwrap()];
        assert_abs_diff_eq!(by_label("Pedestrian"), 0.646, epsilon = 1e-9);
        assert_abs_diff_eq!(by_label("Bicyclist"), 0.343, epsilon = 1e-9);
        assert_abs_diff_eq!(by_label("Car"), 0.011, epsilon = 1e-9);
        assert_abs_diff_eq!(prop.values().sum::<f64>(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn class_proportions_empty_dataset_errors() {
        let ds = Dataset::new("empty", Unit::Meter, 0.4, vec![], vec![]).unwrap();
        assert!(matches!(class_proportions(&ds), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let t = traj_from_positions(&[(0.0, 0.0), (0.4, 0.1), (0.8, 0.3)], 0.4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_trajectory_csv(std::slice::from_ref(&t), &path).unwrap();
        let ds = parse_trajectories(&path, &spec(0.4)).unwrap();
        assert_eq!(ds.trajectories.len(), 1);
        for (a, b) in t.states.iter().zip(&ds.trajectories[0].states) {
            assert_abs_diff_eq!(a.position.x, b.position.x, epsilon = 1e-12);
            assert_abs_diff_eq!(a.position.y, b.position.y, epsilon = 1e-12);
        }
    }
}
