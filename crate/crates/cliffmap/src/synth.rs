//! Deterministic synthetic heterogeneous-trajectory generator.
//!
//! Each class follows a nominal path (line, arc or right-angle crossing)
//! at a nominal speed with seeded Gaussian perturbations. Velocities are the
//! generative model's own step velocities, not finite differences of the
//! noisy positions, so the ground-truth dynamics are exact: with zero noise
//! a line trajectory is a perfect constant-velocity track.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::ingest::{Dataset, Unit};
use crate::seed;
use crate::traj::{from_polar, AgentClass, PlanarVector, PolarVelocity, State, Trajectory};

/// Nominal path family of one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathShape {
    /// Straight line along the nominal heading.
    Line,
    /// Constant-curvature arc sweeping a quarter turn over the trajectory.
    Arc,
    /// Right-angle turn at the midpoint of the trajectory.
    Crossing,
}

/// One class of agents in a scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassSpec {
    pub label: String,
    pub shape: PathShape,
    /// Nominal speed, units/s; > 0.
    pub speed: f64,
    /// Nominal heading, radians.
    pub heading: f64,
    /// Number of trajectories; >= 1.
    pub count: usize,
    /// Center of the start region.
    pub start: PlanarVector,
    /// Width of the start region perpendicular to the heading.
    pub spread: f64,
}

/// Full scenario description. Deterministic given `seed`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub classes: Vec<ClassSpec>,
    /// Std of iid position measurement noise, units.
    pub noise_sigma_pos: f64,
    /// Std of per-step speed perturbation, units/s.
    pub noise_sigma_speed: f64,
    pub dt: f64,
    pub steps_per_traj: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    /// The two-class crossing scenario: class A lines along +x at 1.2, class
    /// B lines along pi/4 at 0.6, with B cutting through A's corridor midway
    /// along A's path (around x = 9.4).
    pub fn two_class_crossing(seed: u64) -> Self {
        Self {
            name: "crossing".into(),
            classes: vec![
                ClassSpec {
                    label: "A".into(),
                    shape: PathShape::Line,
                    speed: 1.2,
                    heading: 0.0,
                    count: 60,
                    start: PlanarVector::new(0.0, 0.75),
                    spread: 1.2,
                },
                ClassSpec {
                    label: "B".into(),
                    shape: PathShape::Line,
                    speed: 0.6,
                    heading: PI / 4.0,
                    count: 60,
                    start: PlanarVector::new(6.0, -2.65),
                    spread: 1.2,
                },
            ],
            noise_sigma_pos: 0.02,
            noise_sigma_speed: 0.05,
            dt: 0.4,
            steps_per_traj: 40,
            seed,
        }
    }

    /// Shared-corridor speed-contrast scenario: two classes move like the
    /// majority flow, a third at a distinct slower speed. The distinct class
    /// diverges from the general map; the majority-like classes barely do.
    pub fn speed_contrast(seed: u64) -> Self {
        let lane = |label: &str, speed: f64, count: usize| ClassSpec {
            label: label.into(),
            shape: PathShape::Line,
            speed,
            heading: 0.0,
            count,
            start: PlanarVector::new(0.0, 0.0),
            spread: 1.0,
        };
        Self {
            name: "speed-contrast".into(),
            classes: vec![
                lane("Majority", 1.0, 40),
                lane("Matching", 1.0, 40),
                lane("Distinct", 0.3, 20),
            ],
            noise_sigma_pos: 0.02,
            noise_sigma_speed: 0.05,
            dt: 0.4,
            steps_per_traj: 40,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::InvalidInput(
                "scenario needs at least one class".into(),
            ));
        }
        for c in &self.classes {
            if c.count == 0 {
                return Err(Error::InvalidInput(format!(
                    "class '{}': count must be >= 1",
                    c.label
                )));
            }
            if !(c.speed.is_finite() && c.speed > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "class '{}': speed must be positive",
                    c.label
                )));
            }
            if !(c.spread.is_finite() && c.spread >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "class '{}': spread must be >= 0",
                    c.label
                )));
            }
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidInput("dt must be positive".into()));
        }
        if self.steps_per_traj < 2 {
            return Err(Error::InvalidInput("steps_per_traj must be >= 2".into()));
        }
        if self.noise_sigma_pos < 0.0 || self.noise_sigma_speed < 0.0 {
            return Err(Error::InvalidInput("noise sigmas must be >= 0".into()));
        }
        Ok(())
    }
}

/// Loads a scenario from a TOML file.
pub fn load_scenario(path: &std::path::Path) -> Result<ScenarioSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read scenario {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("scenario {}: {e}", path.display())))
}

fn heading_at(class: &ClassSpec, step: usize, steps: usize, dt: f64) -> f64 {
    match class.shape {
        PathShape::Line => class.heading,
        PathShape::Arc => {
            // Quarter turn swept uniformly over the whole trajectory.
            let rate = (PI / 2.0) / ((steps - 1) as f64 * dt);
            class.heading + rate * step as f64 * dt
        }
        PathShape::Crossing => {
            if step < steps / 2 {
                class.heading
            } else {
                class.heading + PI / 2.0
            }
        }
    }
}

/// Generates the scenario's dataset. Per-trajectory RNG streams are derived
/// from `(seed, class index, trajectory index)`, so generation is
/// order-independent and reproducible.
pub fn generate(spec: &ScenarioSpec) -> Result<Dataset> {
    spec.validate()?;

    let mut labels: Vec<&str> = spec.classes.iter().map(|c| c.label.as_str()).collect();
    labels.sort_unstable();
    labels.dedup();
    if labels.len() != spec.classes.len() {
        return Err(Error::InvalidInput("class labels must be unique".into()));
    }
    let classes: Vec<AgentClass> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| AgentClass::new(*l, i as u32))
        .collect();

    let mut trajectories = Vec::new();
    for (class_idx, class) in spec.classes.iter().enumerate() {
        let agent_class = classes
            .iter()
            .find(|c| c.label == class.label)
            .expect("label interned above")
            .clone();
        for m in 0..class.count {
            let mut rng = seed::rng_for(seed::derive2(spec.seed, class_idx as u64, m as u64));
            let speed_noise = Normal::new(0.0, spec.noise_sigma_speed.max(1e-300)).unwrap();
            let pos_noise = Normal::new(0.0, spec.noise_sigma_pos.max(1e-300)).unwrap();
            let draw = |rng: &mut rand_chacha::ChaCha8Rng, n: &Normal<f64>, sigma: f64| -> f64 {
                if sigma > 0.0 {
                    n.sample(rng)
                } else {
                    0.0
                }
            };

            // Start spread is perpendicular to the nominal heading.
            let lateral = (rng.random::<f64>() - 0.5) * class.spread;
            let perp = class.heading + PI / 2.0;
            let mut clean = class.start + PlanarVector::new(perp.cos(), perp.sin()) * lateral;

            let mut states = Vec::with_capacity(spec.steps_per_traj);
            for step in 0..spec.steps_per_traj {
                let h =
                    crate::traj::wrap_angle(heading_at(class, step, spec.steps_per_traj, spec.dt));
                let s = (class.speed + draw(&mut rng, &speed_noise, spec.noise_sigma_speed))
                    .max(0.05 * class.speed);
                let velocity = from_polar(PolarVelocity::new(s, h));
                let jitter = PlanarVector::new(
                    draw(&mut rng, &pos_noise, spec.noise_sigma_pos),
                    draw(&mut rng, &pos_noise, spec.noise_sigma_pos),
                );
                states.push(State::new(clean + jitter, velocity));
                clean += velocity * spec.dt;
            }
            trajectories.push(Trajectory::new(
                format!("{}_{m:03}", class.label),
                agent_class.clone(),
                spec.dt,
                0.0,
                states,
            )?);
        }
    }
    Dataset::new(
        spec.name.clone(),
        Unit::Meter,
        spec.dt,
        trajectories,
        classes,
    )
}
