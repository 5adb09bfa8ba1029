//! Derivative estimation through the local varying-coefficient model.
//!
//! Differencing replicates `j` and `k` removes the unit effects:
//! `Y_j - Y_k = m_j(X_j) - m_k(X_k) + e`. Expanding `m_j(X_j)` around the
//! partner covariate gives `m_jk(X_k) + m_j'(X_k) Δ + remainder` with
//! `Δ = X_j - X_k`, a varying-coefficient model in `X_k`. A local-linear fit
//! of both coefficient functions around `x` returns
//! `θ̂(x) = (α̂0, α̂1, β̂0, β̂1)`, and `β̂0` estimates `m_j'(x)`.

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AddfitError, Result};
use crate::grid::EvalGrid;
use crate::kernels::KernelSpec;
use crate::panel::PanelData;

/// Largest accepted condition number of the column-scaled local Gram matrix.
pub const MAX_LOCAL_CONDITION: f64 = 1e12;

/// Differences between a base replicate and a partner replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffPair {
    pub base: usize,
    pub partner: usize,
    /// `Y_{g,base} - Y_{g,partner}`
    pub y_diff: Vec<f64>,
    pub x_base: Vec<f64>,
    pub x_partner: Vec<f64>,
    /// `X_{g,base} - X_{g,partner}`
    pub delta: Vec<f64>,
}

impl DiffPair {
    pub fn len(&self) -> usize {
        self.y_diff.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_diff.is_empty()
    }
}

pub fn make_diff_pair(panel: &PanelData, base: usize, partner: usize) -> Result<DiffPair> {
    let replicates = panel.replicates();
    if base == partner || base >= replicates || partner >= replicates {
        return Err(AddfitError::BadReplicateIndex {
            base,
            partner,
            replicates,
        });
    }
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p - q).collect::<Vec<_>>();
    Ok(DiffPair {
        base,
        partner,
        y_diff: diff(panel.y(base), panel.y(partner)),
        x_base: panel.x(base).to_vec(),
        x_partner: panel.x(partner).to_vec(),
        delta: diff(panel.x(base), panel.x(partner)),
    })
}

/// `θ̂(x)` on a grid. Rows are `None` where the local design was singular.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaGrid {
    pub grid: Vec<f64>,
    pub theta: Vec<Option<[f64; 4]>>,
    /// Number of observations with positive kernel weight at each point.
    pub window_counts: Vec<usize>,
}

/// Pre-sorted view of one [`DiffPair`] for repeated local fits.
pub struct VarCoefFitter<'a> {
    pair: &'a DiffPair,
    kernel: KernelSpec,
    order: Vec<usize>,
    sorted_x: Vec<f64>,
}

impl<'a> VarCoefFitter<'a> {
    pub fn new(pair: &'a DiffPair, kernel: KernelSpec) -> Self {
        let mut order: Vec<usize> = (0..pair.len()).collect();
        order.sort_by(|&a, &b| pair.x_partner[a].total_cmp(&pair.x_partner[b]));
        let sorted_x = order.iter().map(|&i| pair.x_partner[i]).collect();
        Self {
            pair,
            kernel,
            order,
            sorted_x,
        }
    }

    /// In-window observation indices and their standardized offsets/weights.
    fn window(&self, x: f64) -> Vec<(usize, f64, f64)> {
        let h = self.kernel.bandwidth();
        let lo = self.sorted_x.partition_point(|&v| v <= x - h);
        let hi = self.sorted_x.partition_point(|&v| v < x + h).max(lo);
        (lo..hi)
            .filter_map(|pos| {
                let g = self.order[pos];
                let u = (self.sorted_x[pos] - x) / h;
                let w = self.kernel.evaluate(u);
                (w > 0.0).then_some((g, u, w))
            })
            .collect()
    }

    /// Solves the local weighted least squares problem at `x`. Returns
    /// `θ̂(x)` and the in-window count.
    pub fn fit_at(&self, x: f64) -> (Result<[f64; 4]>, usize) {
        let win = self.window(x);
        let n = win.len();
        (self.solve(x, &win), n)
    }

    fn solve(&self, x: f64, win: &[(usize, f64, f64)]) -> Result<[f64; 4]> {
        let singular = || AddfitError::SingularLocalDesign { x, index: None };
        if win.len() < 4 {
            return Err(singular());
        }
        let delta = &self.pair.delta;
        let y = &self.pair.y_diff;
        let n = win.len() as f64;
        let d_mean = win.iter().map(|&(g, ..)| delta[g]).sum::<f64>() / n;
        let d_var = win.iter().map(|&(g, ..)| (delta[g] - d_mean).powi(2)).sum::<f64>() / (n - 1.0);
        let mut scale = d_var.sqrt();
        if scale.is_nan() || scale <= 0.0 {
            // constant Δ in the window: scale by its magnitude and let the
            // condition check reject the collinear columns
            scale = d_mean.abs();
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(singular());
        }

        let mut gram = Matrix4::zeros();
        let mut rhs = Vector4::zeros();
        for &(g, u, w) in win {
            let d = delta[g] / scale;
            let z = Vector4::new(1.0, u, d, d * u);
            gram += w * z * z.transpose();
            rhs += (w * y[g]) * z;
        }
        let eig = SymmetricEigen::new(gram);
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if !(min > 0.0 && max / min <= MAX_LOCAL_CONDITION) {
            return Err(singular());
        }
        let sol = gram.cholesky().ok_or_else(singular)?.solve(&rhs);
        let h = self.kernel.bandwidth();
        Ok([sol[0], sol[1] / h, sol[2] / scale, sol[3] / (h * scale)])
    }
}

/// Fits `θ̂(x)` at every grid point. Singular points are recorded as `None`.
pub fn fit_theta(pair: &DiffPair, kernel: &KernelSpec, grid: &EvalGrid) -> ThetaGrid {
    let fitter = VarCoefFitter::new(pair, *kernel);
    let (theta, window_counts) = grid
        .points()
        .par_iter()
        .map(|&x| {
            let (res, n) = fitter.fit_at(x);
            (res.ok(), n)
        })
        .unzip();
    ThetaGrid {
        grid: grid.points().to_vec(),
        theta,
        window_counts,
    }
}

/// A derivative estimate on a grid; `None` marks a missing value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCurve {
    pub grid: Vec<f64>,
    pub values: Vec<Option<f64>>,
}

impl DerivativeCurve {
    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// Extracts `β̂0 = e3ᵀ θ̂(x)`.
pub fn derivative_estimate(theta: &ThetaGrid) -> DerivativeCurve {
    DerivativeCurve {
        grid: theta.grid.clone(),
        values: theta.theta.iter().map(|t| t.map(|t| t[2])).collect(),
    }
}

/// Treatment of grid points where some per-partner curves are missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingPolicy {
    /// Average the curves that are available at the point.
    #[default]
    Skip,
    /// Missing whenever any curve is missing.
    Strict,
}

/// Pointwise average of derivative curves over partners.
pub fn average_derivative(curves: &[DerivativeCurve], policy: MissingPolicy) -> Result<DerivativeCurve> {
    let first = curves
        .first()
        .ok_or_else(|| AddfitError::InvalidConfig("no derivative curves to average".into()))?;
    if curves
        .iter()
        .any(|c| c.grid != first.grid || c.values.len() != first.grid.len())
    {
        return Err(AddfitError::GridMismatch);
    }
    let values = (0..first.grid.len())
        .map(|i| {
            let avail: Vec<f64> = curves.iter().filter_map(|c| c.values[i]).collect();
            match policy {
                MissingPolicy::Strict if avail.len() < curves.len() => None,
                _ if avail.is_empty() => None,
                _ => Some(avail.iter().sum::<f64>() / avail.len() as f64),
            }
        })
        .collect();
    Ok(DerivativeCurve {
        grid: first.grid.clone(),
        values,
    })
}

/// Averaged derivative of component `base` using every other replicate as
/// partner.
pub fn component_derivative(
    panel: &PanelData,
    base: usize,
    kernel: &KernelSpec,
    grid: &EvalGrid,
    policy: MissingPolicy,
) -> Result<DerivativeCurve> {
    let curves = (0..panel.replicates())
        .filter(|&k| k != base)
        .map(|k| {
            let pair = make_diff_pair(panel, base, k)?;
            Ok(derivative_estimate(&fit_theta(&pair, kernel, grid)))
        })
        .collect::<Result<Vec<_>>>()?;
    average_derivative(&curves, policy)
}
