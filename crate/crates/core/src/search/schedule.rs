//! Logarithmic cooling and initial-temperature selection.

use serde::{Deserialize, Serialize};

use super::cost::{CostParams, MemoizedCost};
use super::space::{generate_neighbor, random_state, SearchSpaceBounds};
use crate::error::{Error, Result};
use crate::prng::Rng;

pub const DEFAULT_TARGET_ACCEPTANCE: f64 = 0.75;
pub const DEFAULT_T0_SAMPLES: usize = 50;
pub const ACCEPTANCE_TOLERANCE: f64 = 1e-4;

/// `T_m = T_0 / ln(2 + m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSchedule {
    pub t0: f64,
}

impl TemperatureSchedule {
    pub fn new(t0: f64) -> Result<Self> {
        if t0.is_nan() || t0 <= 0.0 {
            return Err(Error::Config(format!("initial temperature must be positive, got {t0}")));
        }
        Ok(TemperatureSchedule { t0 })
    }

    pub fn temperature(&self, m: u64) -> f64 {
        update_temperature(self, m)
    }
}

pub fn update_temperature(schedule: &TemperatureSchedule, m: u64) -> f64 {
    schedule.t0 / ((2 + m) as f64).ln()
}

/// How the SA initial temperature is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum T0Mode {
    /// Solve for the temperature at which sampled uphill moves are accepted
    /// with the target mean probability.
    #[default]
    BenAmeur,
    /// `(1 + p * EOD_base) * (n_u - n_l)`.
    CostRangeBound,
    Explicit(f64),
}

pub fn cost_range_t0_bound(params: &CostParams, bounds: &SearchSpaceBounds) -> Result<f64> {
    if bounds.n_u <= bounds.n_l {
        return Err(Error::Search(format!(
            "temperature bound needs n_u > n_l, got n_l={} n_u={}",
            bounds.n_l, bounds.n_u
        )));
    }
    Ok((1.0 + params.p * params.eod_baseline) * (bounds.n_u - bounds.n_l) as f64)
}

/// `(1/K) sum_k exp(-delta_k / T)`.
pub fn mean_acceptance(deltas: &[f64], temperature: f64) -> f64 {
    deltas.iter().map(|d| (-d / temperature).exp()).sum::<f64>() / deltas.len() as f64
}

/// Temperature whose mean acceptance of the uphill moves `deltas` equals
/// `target`.
///
/// Runs the fixed-point update `T <- T * ln(chi(T)) / ln(target)` from
/// `T = -mean(delta) / ln(target)`; a single transition converges in one
/// step. If the iteration stalls, the monotone acceptance curve is bisected
/// instead.
pub fn solve_temperature(deltas: &[f64], target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Config(format!(
            "target acceptance must lie in (0, 1), got {target}"
        )));
    }
    if deltas.is_empty() || deltas.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
        return Err(Error::Search(
            "temperature estimation needs finite positive transitions".into(),
        ));
    }
    let ln_target = target.ln();
    let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
    let mut t = -mean / ln_target;
    for _ in 0..200 {
        let chi = mean_acceptance(deltas, t);
        if (chi - target).abs() <= 1e-12 {
            return Ok(t);
        }
        let next = t * chi.ln() / ln_target;
        if !(next.is_finite() && next > 0.0) {
            break;
        }
        if ((next - t) / t).abs() < 1e-15 {
            t = next;
            break;
        }
        t = next;
    }
    if (mean_acceptance(deltas, t) - target).abs() <= ACCEPTANCE_TOLERANCE * 1e-3 {
        return Ok(t);
    }
    Ok(bisect_temperature(deltas, target))
}

fn bisect_temperature(deltas: &[f64], target: f64) -> f64 {
    let mut lo = f64::MIN_POSITIVE;
    let mut hi = 1.0;
    while mean_acceptance(deltas, hi) < target {
        hi *= 2.0;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mean_acceptance(deltas, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureEstimate {
    pub t0: f64,
    /// Uphill cost differences the estimate was fitted to.
    pub transitions: Vec<f64>,
    /// No uphill move was found and the bound was used instead.
    pub fell_back: bool,
}

/// Samples up to `sample_size` uphill transitions `(s, s')` with `s` random
/// and `s'` a random neighbor, then solves for the temperature at which they
/// are accepted with mean probability `target`. Gives up after
/// `50 * sample_size` draws and falls back to [`cost_range_t0_bound`].
pub fn estimate_initial_temperature(
    cost: &mut MemoizedCost<'_, '_>,
    bounds: &SearchSpaceBounds,
    rng: &mut Rng,
    target: f64,
    sample_size: usize,
) -> Result<TemperatureEstimate> {
    let sample_size = sample_size.max(1);
    let mut deltas = Vec::with_capacity(sample_size);
    let max_draws = 50 * sample_size;
    for _ in 0..max_draws {
        if deltas.len() == sample_size {
            break;
        }
        let s = random_state(bounds, rng)?;
        if bounds.valid_flips(&s).is_empty() {
            continue;
        }
        let n = generate_neighbor(&s, bounds, rng)?;
        let delta = cost.cost(&n)? - cost.cost(&s)?;
        if delta > 0.0 && delta.is_finite() {
            deltas.push(delta);
        }
    }
    if deltas.is_empty() {
        log::warn!(
            "no uphill transition found in {max_draws} draws; using the n_u - n_l temperature bound"
        );
        let t0 = cost_range_t0_bound(cost.evaluator().params(), bounds)?;
        return Ok(TemperatureEstimate {
            t0,
            transitions: deltas,
            fell_back: true,
        });
    }
    let t0 = solve_temperature(&deltas, target)?;
    Ok(TemperatureEstimate {
        t0,
        transitions: deltas,
        fell_back: false,
    })
}
