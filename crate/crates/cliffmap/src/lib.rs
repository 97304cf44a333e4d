//! Circular-Linear Flow Field maps (CLiFF-maps) over agent velocities, and a
//! kernel-biased rollout predictor built on top of them.
//!
//! A CLiFF-map is a sparse spatial grid in which every populated cell holds a
//! Semi-Wrapped Gaussian Mixture Model (SWGMM) over polar velocities
//! (heading, speed). Maps can be built for all agents combined ("general")
//! or per agent class ("class-conditioned"). Prediction rolls a constant
//! velocity model forward while biasing it toward velocities drawn from the
//! map; the bias strength is controlled by the kernel parameter `beta`.
//!
//! The crate covers the full experiment pipeline:
//!
//! - [`ingest`]: trajectory CSV parsing, resampling, velocity derivation and
//!   observation/prediction window cutting,
//! - [`swgmm`]: semi-wrapped mixture densities, EM fitting with BIC model
//!   selection, sampling and Monte-Carlo KL divergence,
//! - [`map`]: grid construction, spatial queries, intensity and KL heatmaps,
//!   serialization,
//! - [`predictor`]: the biased-CVM rollout and the plain CVM baseline,
//! - [`eval`]: Top-K ADE/FDE metrics, repeated random sub-sampling
//!   validation, data-efficiency sweeps and scoring of externally produced
//!   predictions,
//! - [`synth`]: a deterministic generator for small heterogeneous scenarios.
//!
//! See the `examples/` directory for one runnable program per capability;
//! the `cliffmap` binary exposes the same pipeline as subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod map;
pub mod predictor;
pub mod seed;
pub mod swgmm;
pub mod synth;
pub mod traj;

pub use error::{Error, Result};
pub use ingest::{Dataset, PredictionInstance, Unit};
pub use map::{CliffMap, ConditionedMapSet, FitConfig, GridSpec};
pub use predictor::{PredictionMode, PredictionSet, PredictorParams};
pub use swgmm::{SemiWrappedComponent, Swgmm};
pub use traj::{AgentClass, PlanarVector, PolarVelocity, State, Trajectory};
