//! Foundational geometric and kinematic types: planar vectors, states,
//! polar velocities, agent classes and uniformly sampled trajectories.
//!
//! All angles are radians wrapped to the half-open interval `(-pi, pi]`;
//! [`wrap_angle`] is the single place that convention is enforced.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Sub};

use crate::error::{Error, Result};

/// 2D Cartesian vector in dataset units (meters or pixels).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarVector {
    pub x: f64,
    pub y: f64,
}

impl PlanarVector {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(self, other: Self) -> f64 {
        (self - other).norm()
    }
}

impl Add for PlanarVector {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for PlanarVector {
    fn add_assign(&mut self, rhs: Self) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for PlanarVector {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for PlanarVector {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Self::new(self.x * rhs, self.y * rhs)
    }
}

/// Position plus instantaneous velocity, both in dataset units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub position: PlanarVector,
    pub velocity: PlanarVector,
}

impl State {
    pub fn new(position: PlanarVector, velocity: PlanarVector) -> Self {
        Self { position, velocity }
    }
}

/// Velocity in polar form: speed `rho >= 0` and heading `theta` in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarVelocity {
    pub speed: f64,
    pub heading: f64,
}

impl PolarVelocity {
    pub fn new(speed: f64, heading: f64) -> Self {
        Self { speed, heading }
    }

    pub fn is_valid(self) -> bool {
        self.speed.is_finite()
            && self.speed >= 0.0
            && self.heading.is_finite()
            && self.heading > -PI
            && self.heading <= PI
    }
}

/// Agent class with a stable dense index within its dataset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentClass {
    pub label: String,
    pub id: u32,
}

impl AgentClass {
    pub fn new(label: impl Into<String>, id: u32) -> Self {
        Self {
            label: label.into(),
            id,
        }
    }
}

impl std::fmt::Display for AgentClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label)
    }
}

/// Uniformly sampled state sequence for one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub class: AgentClass,
    /// Time step between consecutive states, seconds. Strictly positive.
    pub dt: f64,
    pub start_time: f64,
    pub states: Vec<State>,
}

impl Trajectory {
    /// Builds a trajectory, checking the type invariants: at least two
    /// states, positive `dt`, finite positions and velocities.
    pub fn new(
        id: impl Into<String>,
        class: AgentClass,
        dt: f64,
        start_time: f64,
        states: Vec<State>,
    ) -> Result<Self> {
        let id = id.into();
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidInput(format!(
                "trajectory {id}: dt must be finite and positive, got {dt}"
            )));
        }
        if states.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "trajectory {id}: needs at least 2 states, got {}",
                states.len()
            )));
        }
        if let Some(s) = states
            .iter()
            .find(|s| !(s.position.is_finite() && s.velocity.is_finite()))
        {
            return Err(Error::InvalidInput(format!(
                "trajectory {id}: non-finite state {s:?}"
            )));
        }
        Ok(Self {
            id,
            class,
            dt,
            start_time,
            states,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Timestamp of state `k`.
    pub fn time_at(&self, k: usize) -> f64 {
        self.start_time + k as f64 * self.dt
    }
}

/// Wraps an angle into `(-pi, pi]`. Exact identity on in-range input.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Shortest signed angular difference `a - b`, in `(-pi, pi]`.
pub fn angular_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}

/// Converts a Cartesian velocity to polar form.
///
/// A zero velocity maps to heading 0 so the conversion is total.
pub fn to_polar(v: PlanarVector) -> Result<PolarVelocity> {
    if !v.is_finite() {
        return Err(Error::InvalidInput(format!(
            "to_polar: non-finite velocity ({}, {})",
            v.x, v.y
        )));
    }
    let speed = v.norm();
    let heading = if speed == 0.0 {
        0.0
    } else {
        wrap_angle(v.y.atan2(v.x))
    };
    Ok(PolarVelocity::new(speed, heading))
}

/// Converts a polar velocity back to Cartesian form.
pub fn from_polar(p: PolarVelocity) -> PlanarVector {
    PlanarVector::new(p.speed * p.heading.cos(), p.speed * p.heading.sin())
}
