//! Evaluation grids for derivative and component curves.

use serde::{Deserialize, Serialize};

use crate::error::{AddfitError, Result};

/// Strictly increasing, finite evaluation points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid(Vec<f64>);

impl EvalGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(AddfitError::InvalidConfig("empty evaluation grid".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(AddfitError::InvalidConfig("non-finite grid point".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(AddfitError::InvalidConfig("grid must be strictly increasing".into()));
        }
        Ok(Self(points))
    }

    pub fn equispaced(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 || hi.is_nan() || lo.is_nan() || hi <= lo {
            return Err(AddfitError::InvalidConfig(format!(
                "cannot build {n} equispaced points on [{lo}, {hi}]"
            )));
        }
        let step = (hi - lo) / (n - 1) as f64;
        let mut pts: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
        pts[n - 1] = hi;
        Self::new(pts)
    }

    pub fn points(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// How to place the evaluation grid for a data set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GridPolicy {
    /// Equispaced between two quantiles of the pooled covariates.
    Percentile { lower: f64, upper: f64, points: usize },
    /// Equispaced on a fixed interval.
    Fixed { lo: f64, hi: f64, points: usize },
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy::Percentile {
            lower: 0.02,
            upper: 0.98,
            points: 100,
        }
    }
}

impl GridPolicy {
    pub fn build(&self, pooled_x: &[f64]) -> Result<EvalGrid> {
        match *self {
            GridPolicy::Fixed { lo, hi, points } => EvalGrid::equispaced(lo, hi, points),
            GridPolicy::Percentile { lower, upper, points } => {
                if !(0.0..1.0).contains(&lower) || !(lower < upper && upper <= 1.0) {
                    return Err(AddfitError::InvalidConfig(format!(
                        "bad percentile range [{lower}, {upper}]"
                    )));
                }
                let mut sorted = pooled_x.to_vec();
                sorted.sort_by(f64::total_cmp);
                EvalGrid::equispaced(quantile(&sorted, lower), quantile(&sorted, upper), points)
            }
        }
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 >= sorted.len() {
        sorted[sorted.len() - 1]
    } else {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    }
}

/// Linear interpolation of `(xs, ys)` at `x`, clamped to the end values.
/// Returns the value and whether clamping happened.
pub fn interpolate_clamped(xs: &[f64], ys: &[f64], x: f64) -> (f64, bool) {
    debug_assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if x <= xs[0] {
        return (ys[0], x < xs[0]);
    }
    if x >= xs[n - 1] {
        return (ys[n - 1], x > xs[n - 1]);
    }
    let i = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[i - 1], xs[i]);
    let t = (x - x0) / (x1 - x0);
    (ys[i - 1] + t * (ys[i] - ys[i - 1]), false)
}
