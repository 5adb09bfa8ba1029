//! Component recovery by integrating a derivative curve and centering it
//! against the empirical distribution of the component's covariate.
//!
//! With `P(x) = ∫_{x0}^x m̂'(t) dt` the estimate is
//! `m̂(x) = P(x) - G⁻¹ Σ_g P(X_g)`, so the fitted component has exactly zero
//! mean over the observed covariates whatever the anchor `x0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AddfitError, Result};
use crate::grid::{interpolate_clamped, EvalGrid, GridPolicy};
use crate::kernels::KernelSpec;
use crate::panel::PanelData;
use crate::varcoef::{component_derivative, DerivativeCurve, MissingPolicy};

/// Minimum share of observations that must fall inside the valid grid range.
pub const MIN_COVERAGE: f64 = 0.9;

/// Observations that fell outside the curve's grid and were clamped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub observed: usize,
    pub below: usize,
    pub above: usize,
}

impl Coverage {
    pub fn clamped(&self) -> usize {
        self.below + self.above
    }

    pub fn fraction_inside(&self) -> f64 {
        if self.observed == 0 {
            return 1.0;
        }
        1.0 - self.clamped() as f64 / self.observed as f64
    }
}

/// One fitted additive component on a sorted grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentEstimate {
    pub component: usize,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub derivative: Vec<f64>,
    /// The constant subtracted to center the estimate.
    pub centering_constant: f64,
    pub coverage: Coverage,
}

impl ComponentEstimate {
    /// Linear interpolation of the component, flat outside the grid.
    pub fn evaluate(&self, x: f64) -> f64 {
        interpolate_clamped(&self.grid, &self.values, x).0
    }

    /// Like [`evaluate`](Self::evaluate) but also reports whether `x` fell
    /// outside the grid.
    pub fn evaluate_flagged(&self, x: f64) -> (f64, bool) {
        interpolate_clamped(&self.grid, &self.values, x)
    }

    pub fn evaluate_many(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.evaluate(x)).collect()
    }

    pub fn derivative_at(&self, x: f64) -> f64 {
        interpolate_clamped(&self.grid, &self.derivative, x).0
    }

    /// Builds an estimate from fitted values at (possibly tied, unsorted)
    /// design points. Tied abscissae are merged by averaging.
    pub fn from_design_fit(
        component: usize,
        x: &[f64],
        values: &[f64],
        derivative: &[f64],
        centering_constant: f64,
    ) -> Result<Self> {
        if values.len() != x.len() || derivative.len() != x.len() {
            return Err(AddfitError::LengthMismatch {
                expected: x.len(),
                found: values.len().min(derivative.len()),
            });
        }
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
        let mut grid: Vec<f64> = Vec::with_capacity(x.len());
        let mut vals: Vec<f64> = Vec::with_capacity(x.len());
        let mut ders: Vec<f64> = Vec::with_capacity(x.len());
        let mut counts: Vec<f64> = Vec::with_capacity(x.len());
        for i in order {
            if grid.last() == Some(&x[i]) {
                let last = grid.len() - 1;
                vals[last] += values[i];
                ders[last] += derivative[i];
                counts[last] += 1.0;
            } else {
                grid.push(x[i]);
                vals.push(values[i]);
                ders.push(derivative[i]);
                counts.push(1.0);
            }
        }
        for ((v, d), c) in vals.iter_mut().zip(ders.iter_mut()).zip(&counts) {
            *v /= c;
            *d /= c;
        }
        Ok(Self {
            component,
            grid,
            values: vals,
            derivative: ders,
            centering_constant,
            coverage: Coverage {
                observed: x.len(),
                below: 0,
                above: 0,
            },
        })
    }
}

/// Cumulative trapezoid integral of `d` over `grid`, zero at `anchor`.
pub(crate) fn cumulative_trapezoid(grid: &[f64], d: &[f64], anchor: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(grid.len());
    p.push(0.0);
    for i in 1..grid.len() {
        let step = grid[i] - grid[i - 1];
        p.push(p[i - 1] + 0.5 * step * (d[i] + d[i - 1]));
    }
    let offset = p[anchor];
    p.iter_mut().for_each(|v| *v -= offset);
    p
}

/// Restricts a curve to its first..last valid points, filling interior gaps
/// linearly. Returns the sub-grid and filled values.
fn valid_span(curve: &DerivativeCurve) -> Option<(Vec<f64>, Vec<f64>)> {
    let first = curve.values.iter().position(Option::is_some)?;
    let last = curve.values.iter().rposition(Option::is_some)?;
    if last == first {
        return None;
    }
    let grid = curve.grid[first..=last].to_vec();
    let known: Vec<(f64, f64)> = (first..=last)
        .filter_map(|i| curve.values[i].map(|v| (curve.grid[i], v)))
        .collect();
    let (kx, ky): (Vec<f64>, Vec<f64>) = known.into_iter().unzip();
    let values = (first..=last)
        .map(|i| curve.values[i].unwrap_or_else(|| interpolate_clamped(&kx, &ky, curve.grid[i]).0))
        .collect();
    Some((grid, values))
}

fn integrate_with_anchor(
    curve: &DerivativeCurve,
    observed_x: &[f64],
    component: usize,
    anchor: usize,
) -> Result<ComponentEstimate> {
    let (grid, derivative) = valid_span(curve).ok_or(AddfitError::InsufficientCoverage {
        covered: 0.0,
        required: MIN_COVERAGE,
    })?;
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    let coverage = Coverage {
        observed: observed_x.len(),
        below: observed_x.iter().filter(|&&x| x < lo).count(),
        above: observed_x.iter().filter(|&&x| x > hi).count(),
    };
    if coverage.fraction_inside() < MIN_COVERAGE {
        return Err(AddfitError::InsufficientCoverage {
            covered: coverage.fraction_inside(),
            required: MIN_COVERAGE,
        });
    }
    let primitive = cumulative_trapezoid(&grid, &derivative, anchor.min(grid.len() - 1));
    let centering_constant = observed_x
        .iter()
        .map(|&x| interpolate_clamped(&grid, &primitive, x).0)
        .sum::<f64>()
        / observed_x.len().max(1) as f64;
    Ok(ComponentEstimate {
        component,
        values: primitive.iter().map(|p| p - centering_constant).collect(),
        grid,
        derivative,
        centering_constant,
        coverage,
    })
}

/// Integrates a derivative curve from its left valid endpoint and centers
/// the result over `observed_x`.
pub fn integrate_component(curve: &DerivativeCurve, observed_x: &[f64], component: usize) -> Result<ComponentEstimate> {
    integrate_with_anchor(curve, observed_x, component, 0)
}

/// Integration estimates of every component on a shared grid.
pub fn estimate_all_components_on(
    panel: &PanelData,
    kernel: &KernelSpec,
    grid: &EvalGrid,
    missing: MissingPolicy,
) -> Result<Vec<ComponentEstimate>> {
    if panel.replicates() < 2 {
        return Err(AddfitError::InvalidPanel("at least two replicates are needed".into()));
    }
    (0..panel.replicates())
        .into_par_iter()
        .map(|j| {
            component_derivative(panel, j, kernel, grid, missing)
                .and_then(|curve| integrate_component(&curve, panel.x(j), j))
                .map_err(|e| e.in_component(j))
        })
        .collect()
}

/// Integration estimates of every component, with the grid placed by
/// `policy` over the pooled covariates.
pub fn estimate_all_components(
    panel: &PanelData,
    kernel: &KernelSpec,
    policy: &GridPolicy,
) -> Result<Vec<ComponentEstimate>> {
    let grid = policy.build(&panel.pooled_x())?;
    estimate_all_components_on(panel, kernel, &grid, MissingPolicy::default())
}

/// Recovered unit effects `α̂_g = J⁻¹ Σ_j (Y_gj - m̂_j(X_gj))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentEffects {
    pub alpha: Vec<f64>,
    /// Covariate values evaluated by flat extrapolation outside a grid.
    pub extrapolated: usize,
}

pub fn estimate_treatment_effects(panel: &PanelData, components: &[ComponentEstimate]) -> Result<TreatmentEffects> {
    let j = panel.replicates();
    if components.len() != j {
        return Err(AddfitError::LengthMismatch {
            expected: j,
            found: components.len(),
        });
    }
    if let Some((i, c)) = components.iter().enumerate().find(|(i, c)| c.component != *i) {
        return Err(AddfitError::InvalidConfig(format!(
            "component at position {i} is labelled {}",
            c.component
        )));
    }
    let mut alpha = vec![0.0; panel.units()];
    let mut extrapolated = 0;
    for (jj, comp) in components.iter().enumerate() {
        for ((a, &x), &y) in alpha.iter_mut().zip(panel.x(jj)).zip(panel.y(jj)) {
            let (m, clamped) = comp.evaluate_flagged(x);
            extrapolated += clamped as usize;
            *a += y - m;
        }
    }
    alpha.iter_mut().for_each(|a| *a /= j as f64);
    Ok(TreatmentEffects { alpha, extrapolated })
}
