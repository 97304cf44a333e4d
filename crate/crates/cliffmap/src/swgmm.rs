//! Semi-wrapped bivariate normal mixtures over polar velocities.
//!
//! A semi-wrapped normal is a bivariate normal over (heading, speed) whose
//! heading dimension is wrapped onto the circle. The wrap sum is truncated to
//! `k in {-1, 0, 1}`, which is exact to machine precision whenever the
//! heading standard deviation is below `pi/2`; the covariance floor and the
//! velocity scales seen in practice keep fits far inside that regime.
//!
//! Fitting uses EM over joint component-and-wrap responsibilities, with
//! k-means++ initialization on the embedding `(rho*cos(theta),
//! rho*sin(theta), rho)` and a `COVARIANCE_FLOOR * I` regularizer added at
//! every M-step. Model selection is by BIC.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::seed;
use crate::traj::{angular_diff, wrap_angle, PolarVelocity};

/// Truncated wrap offsets, in turns.
pub const WRAP_TURNS: [i32; 3] = [-1, 0, 1];

/// Regularization added to covariance diagonals every M-step.
pub const COVARIANCE_FLOOR: f64 = 1e-6;

const LN_2PI: f64 = 1.8378770664093453;

/// Symmetric 2x2 matrix over (heading, speed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymMat2 {
    /// Heading-heading entry.
    pub xx: f64,
    /// Heading-speed entry.
    pub xy: f64,
    /// Speed-speed entry.
    pub yy: f64,
}

impl SymMat2 {
    pub fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub fn diagonal(xx: f64, yy: f64) -> Self {
        Self::new(xx, 0.0, yy)
    }

    pub fn det(self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn min_eigenvalue(self) -> f64 {
        let tr = self.xx + self.yy;
        let disc = ((self.xx - self.yy) * 0.5).hypot(self.xy);
        tr * 0.5 - disc
    }

    pub fn is_positive_definite(self) -> bool {
        self.xx.is_finite()
            && self.xy.is_finite()
            && self.yy.is_finite()
            && self.xx > 0.0
            && self.det() > 0.0
    }

    fn inverse(self) -> Self {
        let det = self.det();
        Self::new(self.yy / det, -self.xy / det, self.xx / det)
    }

    /// Lower Cholesky factor (l11, l21, l22). Requires positive definiteness.
    fn cholesky(self) -> (f64, f64, f64) {
        let l11 = self.xx.sqrt();
        let l21 = self.xy / l11;
        let l22 = (self.yy - l21 * l21).max(0.0).sqrt();
        (l11, l21, l22)
    }

    fn add_diagonal(self, eps: f64) -> Self {
        Self::new(self.xx + eps, self.xy, self.yy + eps)
    }
}

/// One weighted semi-wrapped normal component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemiWrappedComponent {
    /// Mixture weight in (0, 1].
    pub weight: f64,
    /// Mean heading, wrapped to (-pi, pi].
    pub mean_heading: f64,
    /// Mean speed, >= 0.
    pub mean_speed: f64,
    /// Covariance over (heading, speed); positive definite.
    pub covariance: SymMat2,
}

impl SemiWrappedComponent {
    /// Validates the component invariants. Covariance must be positive
    /// definite; singular or non-finite covariances are rejected here so the
    /// density below is total.
    pub fn new(
        weight: f64,
        mean_heading: f64,
        mean_speed: f64,
        covariance: SymMat2,
    ) -> Result<Self> {
        if !(weight.is_finite() && weight > 0.0 && weight <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "component weight must lie in (0, 1], got {weight}"
            )));
        }
        if !(mean_heading.is_finite() && mean_heading > -PI && mean_heading <= PI) {
            return Err(Error::InvalidInput(format!(
                "component mean heading must lie in (-pi, pi], got {mean_heading}"
            )));
        }
        if !(mean_speed.is_finite() && mean_speed >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "component mean speed must be >= 0, got {mean_speed}"
            )));
        }
        if !covariance.is_positive_definite() {
            return Err(Error::Numeric(format!(
                "component covariance is singular or invalid: {covariance:?}"
            )));
        }
        Ok(Self {
            weight,
            mean_heading,
            mean_speed,
            covariance,
        })
    }

    /// Log density of the plain bivariate normal at the wrapped point
    /// `(theta + 2*pi*k, rho)`.
    fn log_normal_at_wrap(&self, v: PolarVelocity, k: i32) -> f64 {
        let inv = self.covariance.inverse();
        let dt = v.heading + 2.0 * PI * f64::from(k) - self.mean_heading;
        let dr = v.speed - self.mean_speed;
        let quad = dt * dt * inv.xx + 2.0 * dt * dr * inv.xy + dr * dr * inv.yy;
        -LN_2PI - 0.5 * self.covariance.det().ln() - 0.5 * quad
    }

    /// Semi-wrapped normal density: sum of the bivariate normal over the
    /// truncated wrap set.
    pub fn pdf(&self, v: PolarVelocity) -> f64 {
        WRAP_TURNS
            .iter()
            .map(|&k| self.log_normal_at_wrap(v, k).exp())
            .sum()
    }

    /// Density value at the component mean (the mode height).
    fn peak_density(&self) -> f64 {
        1.0 / (2.0 * PI * self.covariance.det().sqrt())
    }
}

/// Weighted mixture of semi-wrapped normals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Swgmm {
    components: Vec<SemiWrappedComponent>,
    support_count: usize,
}

impl Swgmm {
    /// Validates mixture invariants: at least one component, weights summing
    /// to 1 within 1e-9.
    pub fn new(components: Vec<SemiWrappedComponent>, support_count: usize) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidInput(
                "mixture needs at least one component".into(),
            ));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "mixture weights must sum to 1, got {total}"
            )));
        }
        Ok(Self {
            components,
            support_count,
        })
    }

    pub fn components(&self) -> &[SemiWrappedComponent] {
        &self.components
    }

    pub fn support_count(&self) -> usize {
        self.support_count
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    /// Mixture density at a polar velocity.
    pub fn pdf(&self, v: PolarVelocity) -> f64 {
        self.components.iter().map(|c| c.weight * c.pdf(v)).sum()
    }

    /// Log mixture density, computed stably in log space.
    pub fn log_pdf(&self, v: PolarVelocity) -> f64 {
        let mut terms = Vec::with_capacity(self.components.len() * WRAP_TURNS.len());
        for c in &self.components {
            for &k in &WRAP_TURNS {
                terms.push(c.weight.ln() + c.log_normal_at_wrap(v, k));
            }
        }
        log_sum_exp(&terms)
    }

    /// Draws one polar velocity. Negative speeds are redrawn up to 16 times,
    /// then clamped to zero; headings are wrapped.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PolarVelocity {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.components.len() - 1;
        for (idx, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                chosen = idx;
                break;
            }
        }
        let c = &self.components[chosen];
        let (l11, l21, l22) = c.covariance.cholesky();
        let mut heading = 0.0;
        let mut speed = -1.0;
        for _ in 0..16 {
            let z0: f64 = rng.sample(StandardNormal);
            let z1: f64 = rng.sample(StandardNormal);
            heading = c.mean_heading + l11 * z0;
            speed = c.mean_speed + l21 * z0 + l22 * z1;
            if speed >= 0.0 {
                break;
            }
        }
        PolarVelocity::new(speed.max(0.0), wrap_angle(heading))
    }

    /// Mean of the component with the highest peak density
    /// `weight / (2*pi*sqrt(det))`; ties keep the lowest component index.
    pub fn ml_velocity(&self) -> PolarVelocity {
        let mut best = 0;
        let mut best_peak = self.components[0].weight * self.components[0].peak_density();
        for (idx, c) in self.components.iter().enumerate().skip(1) {
            let peak = c.weight * c.peak_density();
            if peak > best_peak {
                best = idx;
                best_peak = peak;
            }
        }
        let c = &self.components[best];
        PolarVelocity::new(c.mean_speed, c.mean_heading)
    }
}

/// EM stopping and regularization parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EmParams {
    /// Relative log-likelihood improvement below which EM stops.
    pub tol: f64,
    pub max_iter: usize,
    pub covariance_floor: f64,
}

impl Default for EmParams {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 200,
            covariance_floor: COVARIANCE_FLOOR,
        }
    }
}

/// Per-iteration diagnostics from one EM run.
#[derive(Debug, Clone)]
pub struct EmTrace {
    /// Log-likelihood after each E-step.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
}

/// Fits a `j`-component semi-wrapped mixture by EM.
pub fn fit_em(samples: &[PolarVelocity], j: usize, seed: u64, params: &EmParams) -> Result<Swgmm> {
    fit_em_traced(samples, j, seed, params).map(|(m, _)| m)
}

/// As [`fit_em`], also returning the log-likelihood trace.
pub fn fit_em_traced(
    samples: &[PolarVelocity],
    j: usize,
    seed: u64,
    params: &EmParams,
) -> Result<(Swgmm, EmTrace)> {
    if j == 0 {
        return Err(Error::InvalidInput("component count must be >= 1".into()));
    }
    if samples.len() < 3 * j {
        return Err(Error::InsufficientData(format!(
            "need at least {} samples to fit {} components, got {}",
            3 * j,
            j,
            samples.len()
        )));
    }
    if let Some(bad) = samples.iter().find(|v| !v.is_valid()) {
        return Err(Error::InvalidInput(format!(
            "invalid polar velocity {bad:?}"
        )));
    }

    let n = samples.len();
    let mut comps = init_components(samples, j, seed, params.covariance_floor);

    let mut trace = Vec::new();
    let mut prev_ll = f64::NEG_INFINITY;
    let mut converged = false;

    // Joint responsibilities over (component, wrap), flat layout.
    let mut resp = vec![0.0f64; n * j * WRAP_TURNS.len()];

    for _ in 0..params.max_iter {
        // E-step.
        let mut ll = 0.0;
        let mut terms = vec![0.0f64; j * WRAP_TURNS.len()];
        for (i, v) in samples.iter().enumerate() {
            for (cj, c) in comps.iter().enumerate() {
                for (ck, &k) in WRAP_TURNS.iter().enumerate() {
                    terms[cj * WRAP_TURNS.len() + ck] = c.weight.ln() + c.log_normal_at_wrap(*v, k);
                }
            }
            let lse = log_sum_exp(&terms);
            if !lse.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite log-likelihood term at sample {i}"
                )));
            }
            ll += lse;
            let base = i * j * WRAP_TURNS.len();
            for (t, &term) in terms.iter().enumerate() {
                resp[base + t] = (term - lse).exp();
            }
        }
        trace.push(ll);

        if ll - prev_ll < params.tol * prev_ll.abs().max(1.0) {
            converged = true;
            break;
        }
        prev_ll = ll;

        // M-step.
        for (cj, comp) in comps.iter_mut().enumerate() {
            let mut w_sum = 0.0;
            let mut mean_t = 0.0;
            let mut mean_r = 0.0;
            for (i, v) in samples.iter().enumerate() {
                let base = i * j * WRAP_TURNS.len() + cj * WRAP_TURNS.len();
                for (ck, &k) in WRAP_TURNS.iter().enumerate() {
                    let r = resp[base + ck];
                    w_sum += r;
                    mean_t += r * (v.heading + 2.0 * PI * f64::from(k));
                    mean_r += r * v.speed;
                }
            }
            if w_sum < 1e-10 {
                return Err(Error::Numeric(format!(
                    "component {cj} starved during EM (responsibility mass {w_sum:.3e})"
                )));
            }
            mean_t /= w_sum;
            mean_r /= w_sum;

            let mut cxx = 0.0;
            let mut cxy = 0.0;
            let mut cyy = 0.0;
            for (i, v) in samples.iter().enumerate() {
                let base = i * j * WRAP_TURNS.len() + cj * WRAP_TURNS.len();
                for (ck, &k) in WRAP_TURNS.iter().enumerate() {
                    let r = resp[base + ck];
                    let dt = v.heading + 2.0 * PI * f64::from(k) - mean_t;
                    let dr = v.speed - mean_r;
                    cxx += r * dt * dt;
                    cxy += r * dt * dr;
                    cyy += r * dr * dr;
                }
            }
            comp.weight = w_sum / n as f64;
            comp.mean_heading = wrap_angle(mean_t);
            comp.mean_speed = mean_r;
            comp.covariance = SymMat2::new(cxx / w_sum, cxy / w_sum, cyy / w_sum)
                .add_diagonal(params.covariance_floor);
        }

        // Renormalize against accumulated rounding.
        let total: f64 = comps.iter().map(|c| c.weight).sum();
        for c in &mut comps {
            c.weight /= total;
        }
    }

    let mixture = Swgmm::new(comps, n)?;
    Ok((
        mixture,
        EmTrace {
            log_likelihood: trace,
            converged,
        },
    ))
}

/// Fits mixtures for `j = 1 ..= min(j_max, n/3)` and returns the one with
/// the lowest BIC.
pub fn select_components(
    samples: &[PolarVelocity],
    j_max: usize,
    seed: u64,
    params: &EmParams,
) -> Result<Swgmm> {
    if samples.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 samples for model selection, got {}",
            samples.len()
        )));
    }
    let j_cap = j_max.min(samples.len() / 3).max(1);
    let n = samples.len() as f64;

    let mut best: Option<(f64, Swgmm)> = None;
    for j in 1..=j_cap {
        match fit_em_traced(samples, j, seed::derive(seed, j as u64), params) {
            Ok((mixture, trace)) => {
                let ll = *trace.log_likelihood.last().expect("trace never empty");
                // Free parameters: j-1 weights, 2j means, 3j covariances.
                let p = (6 * j - 1) as f64;
                let bic = -2.0 * ll + p * n.ln();
                if best.as_ref().is_none_or(|(b, _)| bic < *b) {
                    best = Some((bic, mixture));
                }
            }
            Err(e) => log::debug!("EM with {j} components failed: {e}"),
        }
    }
    best.map(|(_, m)| m)
        .ok_or_else(|| Error::Numeric("every EM fit failed during model selection".into()))
}

/// Monte-Carlo estimate of KL(p || q) from `n` draws of `p`. The `q` density
/// is floored at 1e-300 before taking the log.
pub fn kl_mc<R: Rng + ?Sized>(p: &Swgmm, q: &Swgmm, n: usize, rng: &mut R) -> f64 {
    assert!(n >= 1, "kl_mc needs at least one sample");
    let mut acc = 0.0;
    for _ in 0..n {
        let v = p.sample(rng);
        acc += p.pdf(v).ln() - q.pdf(v).max(1e-300).ln();
    }
    acc / n as f64
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// k-means++ initialization on the circular embedding, followed by a few
/// Lloyd iterations; cluster statistics become the initial components.
fn init_components(
    samples: &[PolarVelocity],
    j: usize,
    seed: u64,
    floor: f64,
) -> Vec<SemiWrappedComponent> {
    let n = samples.len();
    let embedded: Vec<[f64; 3]> = samples
        .iter()
        .map(|v| {
            [
                v.speed * v.heading.cos(),
                v.speed * v.heading.sin(),
                v.speed,
            ]
        })
        .collect();

    let dist2 = |a: &[f64; 3], b: &[f64; 3]| -> f64 {
        let dx = a[0] - b[0];
        let dy = a[1] - b[1];
        let dz = a[2] - b[2];
        dx * dx + dy * dy + dz * dz
    };

    let mut rng = seed::rng_for(seed);
    let mut centers: Vec<[f64; 3]> = Vec::with_capacity(j);
    centers.push(embedded[rng.random_range(0..n)]);
    let mut min_d2: Vec<f64> = embedded.iter().map(|e| dist2(e, &centers[0])).collect();
    while centers.len() < j {
        let total: f64 = min_d2.iter().sum();
        let idx = if total > 0.0 {
            let mut u: f64 = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in min_d2.iter().enumerate() {
                u -= d;
                if u <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // All points coincide with a center; any index works.
            rng.random_range(0..n)
        };
        centers.push(embedded[idx]);
        for (i, e) in embedded.iter().enumerate() {
            let d = dist2(e, centers.last().unwrap());
            if d < min_d2[i] {
                min_d2[i] = d;
            }
        }
    }

    let mut assign = vec![0usize; n];
    for _ in 0..25 {
        let mut changed = false;
        for (i, e) in embedded.iter().enumerate() {
            let mut best = 0;
            let mut best_d = dist2(e, &centers[0]);
            for (c, center) in centers.iter().enumerate().skip(1) {
                let d = dist2(e, center);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![[0.0f64; 3]; j];
        let mut counts = vec![0usize; j];
        for (i, e) in embedded.iter().enumerate() {
            let c = assign[i];
            for d in 0..3 {
                sums[c][d] += e[d];
            }
            counts[c] += 1;
        }
        for c in 0..j {
            if counts[c] == 0 {
                // Revive an empty cluster on the point farthest from its center.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        dist2(&embedded[a], &centers[assign[a]])
                            .total_cmp(&dist2(&embedded[b], &centers[assign[b]]))
                    })
                    .unwrap();
                centers[c] = embedded[far];
                assign[far] = c;
            } else {
                for d in 0..3 {
                    centers[c][d] = sums[c][d] / counts[c] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }

    // Cluster statistics in polar space: circular mean heading, arithmetic
    // mean speed, covariance of wrapped residuals.
    let mut comps = Vec::with_capacity(j);
    for c in 0..j {
        let members: Vec<usize> = (0..n).filter(|&i| assign[i] == c).collect();
        let count = members.len().max(1) as f64;
        let (mut sin_sum, mut cos_sum, mut rho_sum) = (0.0, 0.0, 0.0);
        for &i in &members {
            sin_sum += samples[i].heading.sin();
            cos_sum += samples[i].heading.cos();
            rho_sum += samples[i].speed;
        }
        let mean_heading = if sin_sum == 0.0 && cos_sum == 0.0 {
            0.0
        } else {
            wrap_angle(sin_sum.atan2(cos_sum))
        };
        let mean_speed = rho_sum / count;
        let (mut cxx, mut cxy, mut cyy) = (0.0, 0.0, 0.0);
        for &i in &members {
            let dt = angular_diff(samples[i].heading, mean_heading);
            let dr = samples[i].speed - mean_speed;
            cxx += dt * dt;
            cxy += dt * dr;
            cyy += dr * dr;
        }
        let covariance = SymMat2::new(cxx / count, cxy / count, cyy / count).add_diagonal(floor);
        comps.push(SemiWrappedComponent {
            weight: members.len().max(1) as f64 / n as f64,
            mean_heading,
            mean_speed: mean_speed.max(0.0),
            covariance,
        });
    }
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    for c in &mut comps {
        c.weight /= total;
    }
    comps
}
