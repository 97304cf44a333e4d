//! Sparse spatial grids of velocity mixtures: building general and
//! class-conditioned CLiFF-maps, spatial queries, intensity and KL heatmaps,
//! and the on-disk map container.
//!
//! Observations are assigned to cells by containment. Per-cell sample lists
//! are sorted canonically before fitting and per-cell RNG streams are
//! derived from the cell index, so builds are independent of both trajectory
//! order and thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::Unit;
use crate::seed;
use crate::swgmm::{self, EmParams, SemiWrappedComponent, Swgmm, SymMat2};
use crate::traj::{to_polar, AgentClass, PlanarVector, PolarVelocity, Trajectory};

/// Grid geometry: cell edge length and grid origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub resolution: f64,
    pub origin: PlanarVector,
}

impl GridSpec {
    pub fn new(resolution: f64, origin: PlanarVector) -> Result<Self> {
        if !(resolution.is_finite() && resolution > 0.0) || !origin.is_finite() {
            return Err(Error::InvalidInput(format!(
                "grid resolution must be positive and finite, got {resolution} at {origin:?}"
            )));
        }
        Ok(Self { resolution, origin })
    }

    /// Cell containing a point; cells are half-open `[i*res, (i+1)*res)`.
    pub fn cell_of(&self, p: PlanarVector) -> (i64, i64) {
        let i = ((p.x - self.origin.x) / self.resolution).floor() as i64;
        let j = ((p.y - self.origin.y) / self.resolution).floor() as i64;
        (i, j)
    }

    pub fn cell_center(&self, cell: (i64, i64)) -> PlanarVector {
        PlanarVector::new(
            self.origin.x + (cell.0 as f64 + 0.5) * self.resolution,
            self.origin.y + (cell.1 as f64 + 0.5) * self.resolution,
        )
    }
}

/// Per-cell fitting configuration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitConfig {
    /// Minimum observations a cell needs to receive a mixture.
    pub n_min: usize,
    /// Largest component count tried by model selection.
    pub j_max: usize,
    pub seed: u64,
    pub em: EmParams,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_min: 10,
            j_max: 5,
            seed: 0,
            em: EmParams::default(),
        }
    }
}

/// Sparse grid of velocity mixtures.
#[derive(Debug, Clone, PartialEq)]
pub struct CliffMap {
    grid: GridSpec,
    unit: Unit,
    cells: BTreeMap<(i64, i64), Swgmm>,
}

impl CliffMap {
    pub fn new(grid: GridSpec, unit: Unit, cells: BTreeMap<(i64, i64), Swgmm>) -> Self {
        Self { grid, unit, cells }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn cells(&self) -> &BTreeMap<(i64, i64), Swgmm> {
        &self.cells
    }

    pub fn get(&self, cell: (i64, i64)) -> Option<&Swgmm> {
        self.cells.get(&cell)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Returns the mixture of the populated cell whose center is nearest to
    /// `p` among those within Euclidean distance `r_s`; ties pick the
    /// lexicographically smallest cell index.
    pub fn query(&self, p: PlanarVector, r_s: f64) -> Option<&Swgmm> {
        self.query_cell(p, r_s).map(|(_, m)| m)
    }

    /// As [`query`](Self::query), also returning the winning cell index.
    pub fn query_cell(&self, p: PlanarVector, r_s: f64) -> Option<((i64, i64), &Swgmm)> {
        if self.cells.is_empty() || r_s < 0.0 || r_s.is_nan() {
            return None;
        }
        let (i0, j0) = self.grid.cell_of(p);
        let reach = (r_s / self.grid.resolution).ceil() as i64;
        let mut best: Option<((i64, i64), f64)> = None;
        for i in i0 - reach..=i0 + reach {
            for j in j0 - reach..=j0 + reach {
                if !self.cells.contains_key(&(i, j)) {
                    continue;
                }
                let d = self.grid.cell_center((i, j)).distance(p);
                if d <= r_s && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some(((i, j), d));
                }
            }
        }
        best.map(|(cell, _)| (cell, &self.cells[&cell]))
    }

    /// Observation count per populated cell.
    pub fn intensity(&self) -> BTreeMap<(i64, i64), usize> {
        self.cells
            .iter()
            .map(|(&cell, m)| (cell, m.support_count()))
            .collect()
    }
}

/// A general map plus one map per agent class, all sharing grid and unit.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedMapSet {
    pub general: CliffMap,
    pub per_class: BTreeMap<AgentClass, CliffMap>,
}

impl ConditionedMapSet {
    /// Map used for an agent of `class`: the class map when conditioning is
    /// requested and available, otherwise the general map. The flag reports
    /// whether a requested class map was missing.
    pub fn map_for(&self, class: &AgentClass, conditioned: bool) -> (&CliffMap, bool) {
        if conditioned {
            match self.per_class.get(class) {
                Some(map) => (map, false),
                None => (&self.general, true),
            }
        } else {
            (&self.general, false)
        }
    }
}

/// Bins every state's polar velocity into its containing cell and fits a
/// mixture in each cell with at least `n_min` observations.
pub fn build_map(
    trajectories: &[Trajectory],
    grid: &GridSpec,
    unit: Unit,
    cfg: &FitConfig,
) -> Result<CliffMap> {
    let mut bins: BTreeMap<(i64, i64), Vec<PolarVelocity>> = BTreeMap::new();
    for t in trajectories {
        for s in &t.states {
            let v = to_polar(s.velocity)?;
            bins.entry(grid.cell_of(s.position)).or_default().push(v);
        }
    }
    bins.retain(|_, samples| samples.len() >= cfg.n_min.max(3));

    let work: Vec<((i64, i64), Vec<PolarVelocity>)> = bins.into_iter().collect();
    let fitted: Vec<((i64, i64), Swgmm)> = work
        .into_par_iter()
        .map(|((i, j), mut samples)| {
            // Canonical order makes the fit independent of trajectory order.
            samples.sort_by(|a, b| {
                a.heading
                    .total_cmp(&b.heading)
                    .then(a.speed.total_cmp(&b.speed))
            });
            let cell_seed = seed::derive2(cfg.seed, i as u64, j as u64);
            swgmm::select_components(&samples, cfg.j_max, cell_seed, &cfg.em).map(|m| ((i, j), m))
        })
        .collect::<Result<_>>()?;

    Ok(CliffMap::new(*grid, unit, fitted.into_iter().collect()))
}

/// Builds the general map from all trajectories and one map per class from
/// that class's trajectories. Only classes that actually appear among the
/// trajectories get a map, so a class with zero trajectories is omitted
/// from `per_class` by construction; a class whose trajectories populate no
/// cell is present with an empty map.
pub fn build_conditioned(
    trajectories: &[Trajectory],
    grid: &GridSpec,
    unit: Unit,
    cfg: &FitConfig,
) -> Result<ConditionedMapSet> {
    let general = build_map(trajectories, grid, unit, cfg)?;
    let mut classes: Vec<AgentClass> = trajectories.iter().map(|t| t.class.clone()).collect();
    classes.sort();
    classes.dedup();

    let mut per_class = BTreeMap::new();
    for class in classes {
        let subset: Vec<Trajectory> = trajectories
            .iter()
            .filter(|t| t.class == class)
            .cloned()
            .collect();
        per_class.insert(class, build_map(&subset, grid, unit, cfg)?);
    }
    Ok(ConditionedMapSet { general, per_class })
}

/// Monte-Carlo KL divergence per cell between a conditioned map and the
/// general map, over cells populated in both. Cells populated in only one
/// map are omitted.
pub fn kl_heatmap(
    conditioned: &CliffMap,
    general: &CliffMap,
    n: usize,
    seed: u64,
) -> Result<BTreeMap<(i64, i64), f64>> {
    if conditioned.grid() != general.grid() {
        return Err(Error::InvalidInput(
            "kl_heatmap: maps must share the same grid".into(),
        ));
    }
    let shared: Vec<(i64, i64)> = conditioned
        .cells()
        .keys()
        .filter(|cell| general.cells().contains_key(*cell))
        .copied()
        .collect();
    let values: Vec<((i64, i64), f64)> = shared
        .into_par_iter()
        .map(|cell| {
            let mut rng = seed::rng_for(seed::derive2(seed, cell.0 as u64, cell.1 as u64));
            let kl = swgmm::kl_mc(
                &conditioned.cells()[&cell],
                &general.cells()[&cell],
                n,
                &mut rng,
            );
            (cell, kl)
        })
        .collect();
    Ok(values.into_iter().collect())
}

// --- on-disk container ----------------------------------------------------
//
// Single self-describing JSON document. All floating-point fields are stored
// as decimal text with 17 significant digits, which round-trips f64 exactly.
// The checksum is a SHA-256 over the canonical serialization of the payload,
// so any value-level corruption is detected while formatting-only edits are
// tolerated.

const MAP_FORMAT: &str = "cliffmap-set";
const MAP_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct MapSetFile {
    format: String,
    version: u32,
    checksum: String,
    payload: PayloadFile,
}

#[derive(Serialize, Deserialize)]
struct PayloadFile {
    unit: Unit,
    grid: GridFile,
    classes: Vec<ClassFile>,
    general: TableFile,
    per_class: Vec<PerClassFile>,
}

#[derive(Serialize, Deserialize)]
struct GridFile {
    resolution: String,
    origin_x: String,
    origin_y: String,
}

#[derive(Serialize, Deserialize)]
struct ClassFile {
    label: String,
    id: u32,
}

#[derive(Serialize, Deserialize)]
struct PerClassFile {
    label: String,
    id: u32,
    table: TableFile,
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    cells: Vec<CellFile>,
}

#[derive(Serialize, Deserialize)]
struct CellFile {
    i: i64,
    j: i64,
    support: u64,
    components: Vec<ComponentFile>,
}

#[derive(Serialize, Deserialize)]
struct ComponentFile {
    weight: String,
    mean_heading: String,
    mean_speed: String,
    cov_hh: String,
    cov_hs: String,
    cov_ss: String,
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str, field: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::MapFile(format!("invalid number '{s}' in field '{field}'")))
}

fn table_of(map: &CliffMap) -> TableFile {
    TableFile {
        cells: map
            .cells()
            .iter()
            .map(|(&(i, j), m)| CellFile {
                i,
                j,
                support: m.support_count() as u64,
                components: m
                    .components()
                    .iter()
                    .map(|c| ComponentFile {
                        weight: fmt_f64(c.weight),
                        mean_heading: fmt_f64(c.mean_heading),
                        mean_speed: fmt_f64(c.mean_speed),
                        cov_hh: fmt_f64(c.covariance.xx),
                        cov_hs: fmt_f64(c.covariance.xy),
                        cov_ss: fmt_f64(c.covariance.yy),
                    })
                    .collect(),
            })
            .collect(),
    }
}

fn table_to_cells(table: &TableFile) -> Result<BTreeMap<(i64, i64), Swgmm>> {
    let mut cells = BTreeMap::new();
    for cell in &table.cells {
        let mut comps = Vec::with_capacity(cell.components.len());
        for c in &cell.components {
            comps.push(SemiWrappedComponent::new(
                parse_f64(&c.weight, "weight")?,
                parse_f64(&c.mean_heading, "mean_heading")?,
                parse_f64(&c.mean_speed, "mean_speed")?,
                SymMat2::new(
                    parse_f64(&c.cov_hh, "cov_hh")?,
                    parse_f64(&c.cov_hs, "cov_hs")?,
                    parse_f64(&c.cov_ss, "cov_ss")?,
                ),
            )?);
        }
        let mixture = Swgmm::new(comps, cell.support as usize)?;
        if cells.insert((cell.i, cell.j), mixture).is_some() {
            return Err(Error::MapFile(format!(
                "duplicate cell ({}, {})",
                cell.i, cell.j
            )));
        }
    }
    Ok(cells)
}

fn sha256_hex(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Saves a conditioned map set as a checksummed JSON container.
pub fn save_map(set: &ConditionedMapSet, path: &Path) -> Result<()> {
    let grid = set.general.grid();
    let payload = PayloadFile {
        unit: set.general.unit(),
        grid: GridFile {
            resolution: fmt_f64(grid.resolution),
            origin_x: fmt_f64(grid.origin.x),
            origin_y: fmt_f64(grid.origin.y),
        },
        classes: set
            .per_class
            .keys()
            .map(|c| ClassFile {
                label: c.label.clone(),
                id: c.id,
            })
            .collect(),
        general: table_of(&set.general),
        per_class: set
            .per_class
            .iter()
            .map(|(c, m)| PerClassFile {
                label: c.label.clone(),
                id: c.id,
                table: table_of(m),
            })
            .collect(),
    };
    let canonical = serde_json::to_string(&payload)
        .map_err(|e| Error::MapFile(format!("serialization failed: {e}")))?;
    let doc = MapSetFile {
        format: MAP_FORMAT.to_string(),
        version: MAP_VERSION,
        checksum: sha256_hex(&canonical),
        payload,
    };
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::MapFile(format!("serialization failed: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Loads a map set, verifying version and checksum.
pub fn load_map(path: &Path) -> Result<ConditionedMapSet> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::MapFile(format!("cannot read {}: {e}", path.display())))?;
    let doc: MapSetFile = serde_json::from_str(&text)
        .map_err(|e| Error::MapFile(format!("{} is malformed: {e}", path.display())))?;
    if doc.format != MAP_FORMAT {
        return Err(Error::MapFile(format!(
            "{}: unknown format '{}'",
            path.display(),
            doc.format
        )));
    }
    if doc.version != MAP_VERSION {
        return Err(Error::MapFile(format!(
            "{}: unsupported version {} (expected {MAP_VERSION})",
            path.display(),
            doc.version
        )));
    }
    let canonical = serde_json::to_string(&doc.payload)
        .map_err(|e| Error::MapFile(format!("re-serialization failed: {e}")))?;
    let checksum = sha256_hex(&canonical);
    if checksum != doc.checksum {
        return Err(Error::MapFile(format!(
            "{}: checksum mismatch (file {}, computed {checksum})",
            path.display(),
            doc.checksum
        )));
    }

    let payload = doc.payload;
    let grid = GridSpec::new(
        parse_f64(&payload.grid.resolution, "grid.resolution")?,
        PlanarVector::new(
            parse_f64(&payload.grid.origin_x, "grid.origin_x")?,
            parse_f64(&payload.grid.origin_y, "grid.origin_y")?,
        ),
    )?;
    let general = CliffMap::new(grid, payload.unit, table_to_cells(&payload.general)?);
    let mut per_class = BTreeMap::new();
    for entry in &payload.per_class {
        let class = AgentClass::new(entry.label.clone(), entry.id);
        let map = CliffMap::new(grid, payload.unit, table_to_cells(&entry.table)?);
        if per_class.insert(class, map).is_some() {
            return Err(Error::MapFile(format!(
                "{}: duplicate class '{}'",
                path.display(),
                entry.label
            )));
        }
    }
    Ok(ConditionedMapSet { general, per_class })
}

/// Writes one CSV row per mixture component of every populated cell:
/// `i,j,cx,cy,comp_idx,weight,mu_theta,mu_rho,support`.
pub fn export_field<W: std::io::Write>(map: &CliffMap, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "i", "j", "cx", "cy", "comp_idx", "weight", "mu_theta", "mu_rho", "support",
    ])?;
    for (&(i, j), m) in map.cells() {
        let center = map.grid().cell_center((i, j));
        for (idx, c) in m.components().iter().enumerate() {
            w.write_record([
                i.to_string(),
                j.to_string(),
                center.x.to_string(),
                center.y.to_string(),
                idx.to_string(),
                c.weight.to_string(),
                c.mean_heading.to_string(),
                c.mean_speed.to_string(),
                m.support_count().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// [`export_field`] to a file path.
pub fn export_field_to_path(map: &CliffMap, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    export_field(map, file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traj::{from_polar, State};
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use std::f64::consts::PI;

    fn grid(res: f64) -> GridSpec {
        GridSpec::new(res, PlanarVector::new(0.0, 0.0)).unwrap()
    }

    /// Trajectory whose states sit at fixed positions with velocities near a
    /// nominal polar velocity, jittered deterministically.
    fn traj_at(
        id: &str,
        class: &AgentClass,
        positions: &[(f64, f64)],
        speed: f64,
        heading: f64,
        jitter: f64,
        seed: u64,
    ) -> Trajectory {
        let mut rng = seed::rng_for(seed);
        let states: Vec<State> = positions
            .iter()
            .map(|&(x, y)| {
                let s = speed + jitter * (rng.random::<f64>() - 0.5);
                let h = heading + jitter * (rng.random::<f64>() - 0.5);
                State::new(
                    PlanarVector::new(x, y),
                    from_polar(PolarVelocity::new(s, h)),
                )
            })
            .collect();
        Trajectory::new(id, class.clone(), 0.4, 0.0, states).unwrap()
    }

    fn in_cell_positions(n: usize) -> Vec<(f64, f64)> {
        (0..n).map(|k| (0.1 + 0.0001 * k as f64, 0.1)).collect()
    }

    #[test]
    fn cell_of_examples() {
        let g = GridSpec::new(0.2, PlanarVector::new(0.0, 0.0)).unwrap();
        assert_eq!(g.cell_of(PlanarVector::new(0.35, 0.55)), (1, 2));
        assert_eq!(g.cell_of(PlanarVector::new(0.2, 0.0)), (1, 0));
        assert_eq!(g.cell_of(PlanarVector::new(-0.01, 0.0)), (-1, 0));
    }

    #[test]
    fn build_map_single_cell_single_mode() {
        let class = AgentClass::new("A", 0);
        let trajs = vec![traj_at(
            "a",
            &class,
            &in_cell_positions(60),
            1.0,
            0.3,
            0.02,
            1,
        )];
        let map = build_map(&trajs, &grid(10.0), Unit::Meter, &FitConfig::default()).unwrap();
        assert_eq!(map.len(), 1);
        let m = map.get((0, 0)).unwrap();
        assert_eq!(m.num_components(), 1);
        let ml = m.ml_velocity();
        assert_abs_diff_eq!(ml.speed, 1.0, epsilon = 0.05);
        assert_abs_diff_eq!(ml.heading, 0.3, epsilon = 0.05);
    }

    #[test]
    fn build_map_below_threshold_cell_absent() {
        let class = AgentClass::new("A", 0);
        let cfg = FitConfig::default();
        let trajs = vec![traj_at(
            "a",
            &class,
            &in_cell_positions(cfg.n_min - 1),
            1.0,
            0.0,
            0.0,
            1,
        )];
        let map = build_map(&trajs, &grid(10.0), Unit::Meter, &cfg).unwrap();
        assert!(map.is_empty());
    }

    #[test]
    fn build_map_mixes_two_classes_at_crossing_cell() {
        let a = AgentClass::new("A", 0);
        let b = AgentClass::new("B", 1);
        let trajs = vec![
            traj_at("a", &a, &in_cell_positions(80), 1.2, 0.0, 0.02, 1),
            traj_at("b", &b, &in_cell_positions(80), 0.6, PI / 4.0, 0.02, 2),
        ];
        let map = build_map(&trajs, &grid(10.0), Unit::Meter, &FitConfig::default()).unwrap();
        let m = map.get((0, 0)).unwrap();
        let at_a = m.pdf(PolarVelocity::new(1.2, 0.0));
        let at_b = m.pdf(PolarVelocity::new(0.6, PI / 4.0));
        let midpoint = m.pdf(PolarVelocity::new(0.9, PI / 8.0));
        assert!(at_a > midpoint, "pdf {at_a} at A vs midpoint {midpoint}");
        assert!(at_b > midpoint, "pdf {at_b} at B vs midpoint {midpoint}");
    }

    #[test]
    fn build_map_is_permutation_invariant() {
        let a = AgentClass::new("A", 0);
        let b = AgentClass::new("B", 1);
        let mut trajs = vec![
            traj_at("a", &a, &in_cell_positions(30), 1.2, 0.0, 0.05, 1),
            traj_at("b", &b, &in_cell_positions(30), 0.6, 0.8, 0.05, 2),
            traj_at("c", &a, &in_cell_positions(30), 1.1, 0.1, 0.05, 3),
        ];
        let cfg = FitConfig::default();
        let forward = build_map(&trajs, &grid(10.0), Unit::Meter, &cfg).unwrap();
        trajs.reverse();
        let backward = build_map(&trajs, &grid(10.0), Unit::Meter, &cfg).unwrap();
        assert_eq!(forward, backward);
    }

    #[test]
    fn build_map_every_cell_meets_support_floor() {
        let a = AgentClass::new("A", 0);
        let positions: Vec<(f64, f64)> = (0..200).map(|k| (k as f64 * 0.11, 0.3)).collect();
        let trajs = vec![traj_at("a", &a, &positions, 1.0, 0.0, 0.05, 5)];
        let cfg = FitConfig::default();
        let map = build_map(&trajs, &grid(1.0), Unit::Meter, &cfg).unwrap();
        assert!(!map.is_empty());
        for m in map.cells().values() {
            assert!(m.support_count() >= cfg.n_min);
        }
    }

    #[test]
    fn build_conditioned_single_class_matches_general_structure() {
        let a = AgentClass::new("A", 0);
        let trajs = vec![traj_at("a", &a, &in_cell_positions(60), 1.0, 0.0, 0.02, 1)];
        let set =
            build_conditioned(&trajs, &grid(10.0), Unit::Meter, &FitConfig::default()).unwrap();
        assert_eq!(set.per_class.len(), 1);
        let class_map = &set.per_class[&a];
        assert_eq!(class_map.len(), set.general.len());
        assert_eq!(
            class_map.cells().keys().collect::<Vec<_>>(),
            set.general.cells().keys().collect::<Vec<_>>()
        );
    }

    #[test]
    fn build_conditioned_disjoint_cells_partition() {
        let a = AgentClass::new("A", 0);
        let b = AgentClass::new("B", 1);
        let far: Vec<(f64, f64)> = (0..60)
            .map(|k| (100.0 + 0.0001 * k as f64, 100.0))
            .collect();
        let trajs = vec![
            traj_at("a", &a, &in_cell_positions(60), 1.0, 0.0, 0.02, 1),
            traj_at("b", &b, &far, 0.5, 1.0, 0.02, 2),
        ];
        let set =
            build_conditioned(&trajs, &grid(10.0), Unit::Meter, &FitConfig::default()).unwrap();
        assert_eq!(set.per_class[&a].len(), 1);
        assert_eq!(set.per_class[&b].len(), 1);
        assert!(set.per_class[&a].get((0, 0)).is_some());
        assert!(set.per_class[&b].get((10, 10)).is_some());
        assert_eq!(set.general.len(), 2);
    }

    #[test]
    fn build_conditioned_separates_speeds_in_shared_cell() {
        let a = AgentClass::new("A", 0);
        let b = AgentClass::new("B", 1);
        let trajs = vec![
            traj_at("a", &a, &in_cell_positions(80), 1.2, 0.0, 0.05, 1),
            traj_at("b", &b, &in_cell_positions(80), 0.6, 0.0, 0.05, 2),
        ];
        let set =
            build_conditioned(&trajs, &grid(10.0), Unit::Meter, &FitConfig::default()).unwrap();
        let ml_a = set.per_class[&a].get((0, 0)).unwrap().ml_velocity();
        let ml_b = set.per_class[&b].get((0, 0)).unwrap().ml_velocity();
        assert_abs_diff_eq!(ml_a.speed, 1.2, epsilon = 0.1);
        assert_abs_diff_eq!(ml_b.speed, 0.6, epsilon = 0.1);
    }

    fn one_cell_map(cell: (i64, i64), res: f64) -> CliffMap {
        let comp = SemiWrappedComponent::new(1.0, 0.0, 1.0, SymMat2::diagonal(0.01, 0.01)).unwrap();
        let m = Swgmm::new(vec![comp], 42).unwrap();
        CliffMap::new(grid(res), Unit::Meter, [(cell, m)].into_iter().collect())
    }

    #[test]
    fn query_hits_cell_at_center() {
        let map = one_cell_map((0, 0), 1.0);
        assert!(map.query(PlanarVector::new(0.5, 0.5), 1.0).is_some());
    }

    #[test]
    fn query_empty_region_returns_none() {
        let map = one_cell_map((0, 0), 1.0);
        assert!(map.query(PlanarVector::new(50.0, 50.0), 1.0).is_none());
    }

    #[test]
    fn query_tie_prefers_lexicographically_smaller_cell() {
        let comp = SemiWrappedComponent::new(1.0, 0.0, 1.0, SymMat2::diagonal(0.01, 0.01)).unwrap();
        let m0 = Swgmm::new(vec![comp], 1).unwrap();
        let comp2 =
            SemiWrappedComponent::new(1.0, 1.0, 2.0, SymMat2::diagonal(0.01, 0.01)).unwrap();
        let m1 = Swgmm::new(vec![comp2], 2).unwrap();
        let map = CliffMap::new(
            grid(1.0),
            Unit::Meter,
            [((0, 0), m0), ((1, 0), m1)].into_iter().collect(),
        );
        // Point equidistant from both centers (0.5,0.5) and (1.5,0.5).
        let got = map.query(PlanarVector::new(1.0, 0.5), 2.0).unwrap();
        assert_eq!(got.support_count(), 1);
    }

    #[test]
    fn query_result_always_within_radius() {
        let a = AgentClass::new("A", 0);
        let positions: Vec<(f64, f64)> = (0..300).map(|k| (k as f64 * 0.07, 0.3)).collect();
        let trajs = vec![traj_at("a", &a, &positions, 1.0, 0.0, 0.05, 4)];
        let cfg = FitConfig {
            n_min: 5,
            ..FitConfig::default()
        };
        let map = build_map(&trajs, &grid(1.0), Unit::Meter, &cfg).unwrap();
        assert!(!map.is_empty());
        let mut rng = seed::rng_for(21);
        for _ in 0..500 {
            let p = PlanarVector::new(rng.random_range(-3.0..25.0), rng.random_range(-3.0..3.0));
            let r_s = rng.random_range(0.0..4.0);
            if let Some((cell, _)) = map.query_cell(p, r_s) {
                let d = map.grid().cell_center(cell).distance(p);
                assert!(d <= r_s, "query returned cell at {d} > {r_s}");
            }
        }
    }

    #[test]
    fn query_respects_radius_and_zero_radius() {
        let map = one_cell_map((0, 0), 1.0);
        // Center is at (0.5, 0.5); a point 0.7 away with r_s 0.5 misses.
        assert!(map.query(PlanarVector::new(1.2, 0.5), 0.5).is_none());
        // r_s = 0 only matches the exact center.
        assert!(map.query(PlanarVector::new(0.5, 0.5), 0.0).is_some());
        assert!(map.query(PlanarVector::new(0.51, 0.5), 0.0).is_none());
    }

    #[test]
    fn intensity_counts() {
        let empty = CliffMap::new(grid(1.0), Unit::Meter, BTreeMap::new());
        assert!(empty.intensity().is_empty());

        let map = one_cell_map((2, 3), 1.0);
        let intensity = map.intensity();
        assert_eq!(intensity.len(), 1);
        assert_eq!(intensity[&(2, 3)], 42);
    }

    #[test]
    fn intensity_conserves_binned_states() {
        let a = AgentClass::new("A", 0);
        let positions: Vec<(f64, f64)> = (0..120).map(|k| (k as f64 * 0.2, 0.5)).collect();
        let trajs = vec![traj_at("a", &a, &positions, 1.0, 0.0, 0.02, 9)];
        let cfg = FitConfig {
            n_min: 3,
            ..FitConfig::default()
        };
        let map = build_map(&trajs, &grid(2.0), Unit::Meter, &cfg).unwrap();
        let total: usize = map.intensity().values().sum();
        // Every state landed in a populated cell (each 2.0-cell holds 10).
        assert_eq!(total, 120);
    }

    #[test]
    fn kl_heatmap_identical_maps_near_zero() {
        let a = AgentClass::new("A", 0);
        let trajs = vec![traj_at("a", &a, &in_cell_positions(60), 1.0, 0.3, 0.05, 1)];
        let map = build_map(&trajs, &grid(10.0), Unit::Meter, &FitConfig::default()).unwrap();
        let n = 4000;
        let heat = kl_heatmap(&map, &map, n, 7).unwrap();
        assert_eq!(heat.len(), 1);
        for v in heat.values() {
            assert!(v.abs() <= 3.0 / (n as f64).sqrt(), "kl {v}");
        }
    }

    #[test]
    fn kl_heatmap_single_class_matches_general() {
        // With one class the conditioned map is fit from the same samples
        // and seeds as the general map, so the heatmap is Monte-Carlo noise
        // around zero.
        let a = AgentClass::new("A", 0);
        let trajs = vec![traj_at("a", &a, &in_cell_positions(60), 1.0, 0.3, 0.05, 6)];
        let set =
            build_conditioned(&trajs, &grid(10.0), Unit::Meter, &FitConfig::default()).unwrap();
        let n = 4000;
        let heat = kl_heatmap(&set.per_class[&a], &set.general, n, 9).unwrap();
        for v in heat.values() {
            assert!(v.abs() <= 3.0 / (n as f64).sqrt(), "kl {v}");
        }
    }

    #[test]
    fn kl_heatmap_requires_shared_grid() {
        let m1 = one_cell_map((0, 0), 1.0);
        let m2 = one_cell_map((0, 0), 2.0);
        assert!(kl_heatmap(&m1, &m2, 10, 0).is_err());
    }

    #[test]
    fn kl_heatmap_distinct_class_diverges_more() {
        // Shared corridor: classes A and B move like the majority, class C
        // at a distinct speed. C should diverge from the general map more
        // than A does.
        let a = AgentClass::new("A", 0);
        let b = AgentClass::new("B", 1);
        let c = AgentClass::new("C", 2);
        let trajs = vec![
            traj_at("a", &a, &in_cell_positions(80), 1.0, 0.0, 0.05, 1),
            traj_at("b", &b, &in_cell_positions(80), 1.0, 0.0, 0.05, 2),
            traj_at("c", &c, &in_cell_positions(40), 0.3, 0.0, 0.05, 3),
        ];
        let set =
            build_conditioned(&trajs, &grid(10.0), Unit::Meter, &FitConfig::default()).unwrap();
        let n = 4000;
        let heat_a = kl_heatmap(&set.per_class[&a], &set.general, n, 5).unwrap();
        let heat_c = kl_heatmap(&set.per_class[&c], &set.general, n, 5).unwrap();
        let mean = |h: &BTreeMap<(i64, i64), f64>| h.values().sum::<f64>() / h.len() as f64;
        assert!(
            mean(&heat_c) > mean(&heat_a),
            "distinct {} vs matching {}",
            mean(&heat_c),
            mean(&heat_a)
        );
    }

    #[test]
    fn save_load_round_trip_preserves_pdf() {
        let a = AgentClass::new("A", 0);
        let b = AgentClass::new("B", 1);
        let trajs = vec![
            traj_at("a", &a, &in_cell_positions(60), 1.2, 0.0, 0.05, 1),
            traj_at("b", &b, &in_cell_positions(60), 0.6, 0.9, 0.05, 2),
        ];
        let set =
            build_conditioned(&trajs, &grid(10.0), Unit::Meter, &FitConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("maps.json");
        save_map(&set, &path).unwrap();
        let loaded = load_map(&path).unwrap();

        assert_eq!(set, loaded);
        let mut rng = seed::rng_for(3);
        let original = set.general.get((0, 0)).unwrap();
        let restored = loaded.general.get((0, 0)).unwrap();
        for _ in 0..100 {
            let v = PolarVelocity::new(rng.random_range(0.0..3.0), rng.random_range(-PI..PI));
            assert_abs_diff_eq!(original.pdf(v), restored.pdf(v), epsilon = 1e-12);
        }
    }

    #[test]
    fn load_rejects_truncated_file() {
        let a = AgentClass::new("A", 0);
        let trajs = vec![traj_at("a", &a, &in_cell_positions(60), 1.0, 0.0, 0.05, 1)];
        let set =
            build_conditioned(&trajs, &grid(10.0), Unit::Meter, &FitConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("maps.json");
        save_map(&set, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_map(&path), Err(Error::MapFile(_))));
    }

    #[test]
    fn load_rejects_tampered_values() {
        let a = AgentClass::new("A", 0);
        let trajs = vec![traj_at("a", &a, &in_cell_positions(60), 1.0, 0.0, 0.05, 1)];
        let set =
            build_conditioned(&trajs, &grid(10.0), Unit::Meter, &FitConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("maps.json");
        save_map(&set, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let tampered = text.replacen("\"support\": 60", "\"support\": 61", 1);
        assert_ne!(text, tampered);
        std::fs::write(&path, tampered).unwrap();
        match load_map(&path) {
            Err(Error::MapFile(msg)) => assert!(msg.contains("checksum"), "{msg}"),
            other => panic!("expected checksum failure, got {other:?}"),
        }
    }

    #[test]
    fn empty_map_set_round_trips() {
        let empty = CliffMap::new(grid(1.0), Unit::Pixel, BTreeMap::new());
        let set = ConditionedMapSet {
            general: empty,
            per_class: BTreeMap::new(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.json");
        save_map(&set, &path).unwrap();
        let loaded = load_map(&path).unwrap();
        assert_eq!(set, loaded);
    }

    #[test]
    fn export_field_row_counts() {
        let comp1 =
            SemiWrappedComponent::new(0.6, 0.0, 1.0, SymMat2::diagonal(0.01, 0.01)).unwrap();
        let comp2 =
            SemiWrappedComponent::new(0.4, 1.0, 2.0, SymMat2::diagonal(0.01, 0.01)).unwrap();
        let m = Swgmm::new(vec![comp1, comp2], 7).unwrap();
        let map = CliffMap::new(grid(1.0), Unit::Meter, [((0, 0), m)].into_iter().collect());
        let mut buf = Vec::new();
        export_field(&map, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.trim().lines().collect();
        assert_eq!(lines.len(), 3); // header + J=2 rows
        assert!(lines[0].starts_with("i,j,cx,cy"));

        let empty = CliffMap::new(grid(1.0), Unit::Meter, BTreeMap::new());
        let mut buf = Vec::new();
        export_field(&empty, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.trim().lines().count(), 1); // header only
    }

    #[test]
    fn export_field_total_rows_equal_component_sum() {
        let a = AgentClass::new("A", 0);
        let b = AgentClass::new("B", 1);
        let trajs = vec![
            traj_at("a", &a, &in_cell_positions(80), 1.2, 0.0, 0.05, 1),
            traj_at("b", &b, &in_cell_positions(80), 0.6, 2.0, 0.05, 2),
        ];
        let map = build_map(&trajs, &grid(10.0), Unit::Meter, &FitConfig::default()).unwrap();
        let expected: usize = map.cells().values().map(|m| m.num_components()).sum();
        let mut buf = Vec::new();
        export_field(&map, &mut buf).unwrap();
        let rows = String::from_utf8(buf).unwrap().trim().lines().count() - 1;
        assert_eq!(rows, expected);
    }
}
