//! Online quantile tracking of absolute residuals.
//!
//! Each tracker holds an interval radius for one nominal coverage level.
//! After the realized value for a forecast arrives, the radius grows by
//! `η·level` on a miss (score > radius) and shrinks by `η·(1 - level)` on a
//! cover, which steers the long-run miss rate toward `1 - level`.

use serde::{Deserialize, Serialize};

use crate::epiweek::Epiweek;
use crate::error::{Error, Result};

/// Nominal coverage levels of the three intervals.
pub const LEVELS: [f64; 3] = [0.50, 0.80, 0.95];

/// Share of the training-residual 90th percentile used as step size.
pub const DEFAULT_STEP_FRACTION: f64 = 0.1;

/// Empirical `level`-quantile with averaging at discontinuities: the
/// midpoint of the set of minimisers of the empirical pinball loss.
pub fn empirical_quantile(values: &[f64], level: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Domain("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::Domain(format!("quantile level {level} outside [0, 1]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let np = n as f64 * level;
    let k = np.floor() as usize;
    if np == k as f64 {
        if k == 0 {
            Ok(v[0])
        } else if k == n {
            Ok(v[n - 1])
        } else {
            Ok(0.5 * (v[k - 1] + v[k]))
        }
    } else {
        Ok(v[k.min(n - 1)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerState {
    pub level: f64,
    pub radius: f64,
    pub learning_rate: f64,
    pub history: u64,
}

impl TrackerState {
    /// Warm start at the empirical `level`-quantile of `|residuals|`.
    pub fn init(residuals: &[f64], level: f64, learning_rate: f64) -> Result<Self> {
        if residuals.is_empty() {
            return Err(Error::Domain("tracker needs at least one residual".into()));
        }
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Domain(format!("coverage level {level} outside (0, 1)")));
        }
        if !(learning_rate.is_finite() && learning_rate >= 0.0) {
            return Err(Error::Domain(format!("learning rate {learning_rate} must be >= 0")));
        }
        let abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
        Ok(Self {
            level,
            radius: empirical_quantile(&abs, level)?,
            learning_rate,
            history: 0,
        })
    }

    pub fn update(&self, score: f64) -> Self {
        let miss = if score > self.radius { 1.0 } else { 0.0 };
        Self {
            radius: (self.radius + self.learning_rate * (miss - (1.0 - self.level))).max(0.0),
            history: self.history + 1,
            ..*self
        }
    }

    /// Symmetric interval around `point`. Both ends are floored at 0, so a point below `-radius` gives `(0, 0)`.
    pub fn interval(&self, point: f64) -> (f64, f64) {
        ((point - self.radius).max(0.0), (point + self.radius).max(0.0))
    }
}

/// `fraction` × 90th percentile of `|residuals|`.
pub fn scaled_learning_rate(residuals: &[f64], fraction: f64) -> Result<f64> {
    let abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
    Ok(fraction * empirical_quantile(&abs, 0.9)?)
}

/// `DEFAULT_STEP_FRACTION` × 90th percentile of `|residuals|`.
pub fn default_learning_rate(residuals: &[f64]) -> Result<f64> {
    scaled_learning_rate(residuals, DEFAULT_STEP_FRACTION)
}

/// Trackers for all three levels of one (state, model) stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalTrackers {
    pub trackers: Vec<TrackerState>,
}

impl IntervalTrackers {
    pub fn warm_start(residuals: &[f64], learning_rate: f64) -> Result<Self> {
        let trackers = LEVELS
            .iter()
            .map(|&l| TrackerState::init(residuals, l, learning_rate))
            .collect::<Result<_>>()?;
        Ok(Self { trackers })
    }

    /// Intervals for each level, in [`LEVELS`] order.
    pub fn intervals(&self, point: f64) -> Vec<(f64, f64)> {
        self.trackers.iter().map(|t| t.interval(point)).collect()
    }

    /// Applies a realized score to every level and returns the trace.
    pub fn observe(&mut self, week: Epiweek, score: f64) -> Vec<TraceStep> {
        self.trackers
            .iter_mut()
            .map(|t| {
                let before = t.radius;
                *t = t.update(score);
                TraceStep {
                    week,
                    level: t.level,
                    score,
                    radius_before: before,
                    radius_after: t.radius,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    pub week: Epiweek,
    pub level: f64,
    pub score: f64,
    pub radius_before: f64,
    pub radius_after: f64,
}
