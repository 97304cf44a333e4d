//! Trajectory prediction: the kernel-biased constant-velocity rollout over a
//! CLiFF-map, and the plain constant velocity baseline.
//!
//! Each rollout step samples a velocity from the map near the current
//! position and pulls the carried velocity toward it, scaled by
//! `Kn(x) = exp(-beta * x^2)` of the deviation. Large deviations are
//! distrusted, so an incompatible map barely perturbs the rollout; with no
//! map within reach the step degenerates to constant velocity. Speed and
//! heading are updated independently, with the heading difference and result
//! wrapped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::PredictionInstance;
use crate::map::ConditionedMapSet;
use crate::seed;
use crate::traj::{angular_diff, from_polar, to_polar, wrap_angle, PlanarVector, PolarVelocity};

/// How a cell mixture is turned into a velocity during rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictionMode {
    /// Draw from the mixture; used for Top-K with K > 1.
    Stochastic,
    /// Deterministic rollout through each cell's most likely velocity;
    /// the Top-1 setting.
    MostLikely,
}

impl std::fmt::Display for PredictionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PredictionMode::Stochastic => f.write_str("stochastic"),
            PredictionMode::MostLikely => f.write_str("most-likely"),
        }
    }
}

/// How the rollout's initial velocity is taken from the observed window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartVelocity {
    /// The last observed velocity.
    #[default]
    LastObserved,
    /// Mean observed speed with the last observed heading; smooths a noisy
    /// final speed estimate.
    WindowMeanSpeed,
}

/// Rollout parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorParams {
    /// Kernel parameter; higher trusts the map less.
    pub beta: f64,
    /// Sampling radius around the rolled-out position.
    pub sampling_radius: f64,
    /// Time step, seconds.
    pub dt: f64,
    /// Prediction horizon in steps.
    pub horizon: usize,
    /// Samples per instance (K). Forced to 1 in most-likely mode.
    pub samples: usize,
    pub mode: PredictionMode,
    #[serde(default)]
    pub start: StartVelocity,
}

impl PredictorParams {
    pub fn new(
        beta: f64,
        sampling_radius: f64,
        dt: f64,
        horizon: usize,
        samples: usize,
        mode: PredictionMode,
    ) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidInput(format!(
                "beta must be positive, got {beta}"
            )));
        }
        if !(sampling_radius.is_finite() && sampling_radius > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sampling radius must be positive, got {sampling_radius}"
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidInput(format!(
                "dt must be positive, got {dt}"
            )));
        }
        if horizon == 0 || samples == 0 {
            return Err(Error::InvalidInput(
                "horizon and sample count must be >= 1".into(),
            ));
        }
        let samples = match mode {
            PredictionMode::MostLikely => 1,
            PredictionMode::Stochastic => samples,
        };
        Ok(Self {
            beta,
            sampling_radius,
            dt,
            horizon,
            samples,
            mode,
            start: StartVelocity::LastObserved,
        })
    }
}

/// K predicted position sequences for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub instance_id: String,
    /// K sequences of `horizon` positions each.
    pub samples: Vec<Vec<PlanarVector>>,
    /// Set when class conditioning was requested but the class map was
    /// missing and the general map was used instead.
    pub used_fallback: bool,
}

/// The kernel `Kn(x) = exp(-beta * x^2)`, in (0, 1].
pub fn kernel(x: f64, beta: f64) -> f64 {
    (-beta * x * x).exp()
}

/// One biased-CVM velocity update:
/// `rho_t = rho_{t-1} + (rho_s - rho_{t-1}) * Kn(rho_s - rho_{t-1})` and the
/// heading analogue on wrapped differences.
pub fn rollout_step(current: PolarVelocity, sampled: PolarVelocity, beta: f64) -> PolarVelocity {
    let d_speed = sampled.speed - current.speed;
    let speed = current.speed + d_speed * kernel(d_speed, beta);
    let d_heading = angular_diff(sampled.heading, current.heading);
    let heading = wrap_angle(current.heading + d_heading * kernel(d_heading, beta));
    PolarVelocity::new(speed, heading)
}

/// Rolls out K predicted futures for one instance.
///
/// Each sample starts from the last observed position and velocity. Per
/// step, the map for the agent's class (general map when `conditioned` is
/// false or the class map is missing) is queried at the current position
/// within the sampling radius; if a mixture is found its velocity biases the
/// rollout, otherwise the step is pure constant velocity.
///
/// Sample `k` uses an RNG stream derived from `(seed, k)`, so rollouts are
/// reproducible and parallelism-safe.
pub fn predict(
    instance: &PredictionInstance,
    maps: &ConditionedMapSet,
    params: &PredictorParams,
    conditioned: bool,
    seed: u64,
) -> Result<PredictionSet> {
    let last = instance.observed.last().ok_or_else(|| {
        Error::InvalidInput(format!("instance {} has no observed states", instance.id()))
    })?;
    let (start_cartesian, start_polar) = match params.start {
        StartVelocity::LastObserved => (last.velocity, to_polar(last.velocity)?),
        StartVelocity::WindowMeanSpeed => {
            let mean_speed = instance
                .observed
                .iter()
                .map(|s| s.velocity.norm())
                .sum::<f64>()
                / instance.observed.len() as f64;
            let polar = PolarVelocity::new(mean_speed, to_polar(last.velocity)?.heading);
            (from_polar(polar), polar)
        }
    };
    let (map, used_fallback) = maps.map_for(&instance.class, conditioned);
    if used_fallback {
        log::warn!(
            "instance {}: class '{}' missing from map set, using general map",
            instance.id(),
            instance.class.label
        );
    }

    let k = match params.mode {
        PredictionMode::MostLikely => 1,
        PredictionMode::Stochastic => params.samples,
    };
    let mut samples = Vec::with_capacity(k);
    for sample_idx in 0..k {
        let mut rng = seed::rng_for(seed::derive(seed, sample_idx as u64));
        let mut position = last.position;
        // Velocity is carried in Cartesian form and only round-trips
        // through polar when the map actually biases a step, so the no-map
        // path is bit-identical to the constant velocity baseline.
        let mut velocity = start_cartesian;
        let mut polar = start_polar;
        let mut path = Vec::with_capacity(params.horizon);
        for _ in 0..params.horizon {
            if let Some(mixture) = map.query(position, params.sampling_radius) {
                let sampled = match params.mode {
                    PredictionMode::Stochastic => mixture.sample(&mut rng),
                    PredictionMode::MostLikely => mixture.ml_velocity(),
                };
                polar = rollout_step(polar, sampled, params.beta);
                velocity = from_polar(polar);
            }
            position += velocity * params.dt;
            path.push(position);
        }
        samples.push(path);
    }
    Ok(PredictionSet {
        instance_id: instance.id(),
        samples,
        used_fallback,
    })
}

/// Constant velocity baseline: extrapolates the last observed velocity.
/// Positions accumulate step by step, matching the rollout's integration.
pub fn cvm_predict(instance: &PredictionInstance, t_p: usize, dt: f64) -> Vec<PlanarVector> {
    let last = instance
        .observed
        .last()
        .expect("instance has observed states");
    let mut position = last.position;
    (0..t_p)
        .map(|_| {
            position += last.velocity * dt;
            position
        })
        .collect()
}
