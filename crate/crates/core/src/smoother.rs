//! Local-linear smoothing: equivalent-kernel rows, smoother application and
//! the centered smoother `S* = (I - 11ᵀ/G) S` used by backfitting.
//!
//! Rows are computed on demand from a sorted copy of the design, so a full
//! `G x G` smoother is never formed for fitting. [`SmootherOperator`] caches
//! the nonzero band of every row for repeated application.

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{AddfitError, Result};
use crate::kernels::KernelSpec;

/// Relative threshold on `det / (s0 * s2)` below which the 2x2 local design
/// is declared singular.
const SINGULAR_RTOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SmootherPlan {
    x: Vec<f64>,
    kernel: KernelSpec,
    order: Vec<usize>,
    sorted: Vec<f64>,
    local_constant_fallback: bool,
}

/// Nonzero band of one local-linear row, expressed in sorted design order.
#[derive(Debug, Clone)]
struct LocalRow {
    window: Range<usize>,
    level: Vec<f64>,
    slope: Vec<f64>,
    fallback: bool,
}

impl SmootherPlan {
    pub fn new(x: Vec<f64>, kernel: KernelSpec) -> Result<Self> {
        if x.len() < 2 {
            return Err(AddfitError::InvalidConfig(format!(
                "smoother needs at least 2 design points, got {}",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(AddfitError::InvalidConfig("non-finite design point".into()));
        }
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
        let sorted = order.iter().map(|&i| x[i]).collect();
        Ok(Self {
            x,
            kernel,
            order,
            sorted,
            local_constant_fallback: false,
        })
    }

    /// Rows whose local-linear design is singular fall back to the
    /// local-constant (kernel-weighted mean) fit with zero slope instead of
    /// failing. Only rows with at least one in-window point qualify.
    pub fn with_local_constant_fallback(mut self, enabled: bool) -> Self {
        self.local_constant_fallback = enabled;
        self
    }

    pub fn design_points(&self) -> &[f64] {
        &self.x
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Sorted positions whose kernel weight at `x0` can be nonzero.
    fn window(&self, x0: f64) -> Range<usize> {
        let h = self.kernel.bandwidth();
        let lo = self.sorted.partition_point(|&v| v <= x0 - h);
        let hi = self.sorted.partition_point(|&v| v < x0 + h);
        lo..hi.max(lo)
    }

    fn local_row(&self, x0: f64, index: Option<usize>) -> Result<LocalRow> {
        let h = self.kernel.bandwidth();
        let window = self.window(x0);
        let pts = &self.sorted[window.clone()];
        let mut k = Vec::with_capacity(pts.len());
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for &v in pts {
            let d = (v - x0) / h;
            let w = self.kernel.evaluate(d);
            s0 += w;
            s1 += w * d;
            s2 += w * d * d;
            k.push((d, w));
        }
        let det = s0 * s2 - s1 * s1;
        if !(s0 > 0.0 && s2 > 0.0 && det > SINGULAR_RTOL * s0 * s2) {
            if self.local_constant_fallback && s0 > 0.0 {
                return Ok(LocalRow {
                    window,
                    level: k.iter().map(|&(_, w)| w / s0).collect(),
                    slope: vec![0.0; k.len()],
                    fallback: true,
                });
            }
            return Err(AddfitError::SingularLocalDesign { x: x0, index });
        }
        let level = k.iter().map(|&(d, w)| w * (s2 - s1 * d) / det).collect();
        let slope = k.iter().map(|&(d, w)| w * (s0 * d - s1) / (det * h)).collect();
        Ok(LocalRow {
            window,
            level,
            slope,
            fallback: false,
        })
    }

    fn scatter(&self, row: &LocalRow, band: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (pos, &w) in row.window.clone().zip(band) {
            out[self.order[pos]] = w;
        }
        out
    }

    fn dot(&self, row: &LocalRow, band: &[f64], y: &[f64]) -> f64 {
        row.window
            .clone()
            .zip(band)
            .map(|(pos, &w)| w * y[self.order[pos]])
            .sum()
    }

    /// Equivalent-kernel weights `e1ᵀ (XᵀKX)⁻¹ XᵀK` at `x0`, indexed like the
    /// design points.
    pub fn equivalent_kernel_row(&self, x0: f64) -> Result<Vec<f64>> {
        let row = self.local_row(x0, None)?;
        Ok(self.scatter(&row, &row.level))
    }

    /// Weights of the local-linear slope estimate `e2ᵀ (XᵀKX)⁻¹ XᵀK` at `x0`.
    pub fn local_slope_row(&self, x0: f64) -> Result<Vec<f64>> {
        let row = self.local_row(x0, None)?;
        Ok(self.scatter(&row, &row.slope))
    }

    fn check_len(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.len() {
            return Err(AddfitError::LengthMismatch {
                expected: self.len(),
                found: y.len(),
            });
        }
        Ok(())
    }

    /// `S y`: the local-linear fit at every design point.
    pub fn smooth(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_len(y)?;
        self.x
            .iter()
            .enumerate()
            .map(|(g, &x0)| {
                let row = self.local_row(x0, Some(g))?;
                Ok(self.dot(&row, &row.level, y))
            })
            .collect()
    }

    /// Local-linear fit and slope of `y` at arbitrary points.
    pub fn smooth_at(&self, y: &[f64], points: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_len(y)?;
        let mut level = Vec::with_capacity(points.len());
        let mut slope = Vec::with_capacity(points.len());
        for &x0 in points {
            let row = self.local_row(x0, None)?;
            level.push(self.dot(&row, &row.level, y));
            slope.push(self.dot(&row, &row.slope, y));
        }
        Ok((level, slope))
    }

    /// Local-linear slope estimate at every design point.
    pub fn slope_at_design(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_len(y)?;
        self.x
            .iter()
            .enumerate()
            .map(|(g, &x0)| {
                let row = self.local_row(x0, Some(g))?;
                Ok(self.dot(&row, &row.slope, y))
            })
            .collect()
    }

    /// `S* y`: the smooth minus its sample mean.
    pub fn centered_smooth(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut s = self.smooth(y)?;
        center_in_place(&mut s);
        Ok(s)
    }

    /// Caches the band of every design-point row for repeated application.
    pub fn operator(&self) -> Result<SmootherOperator> {
        let mut row_ptr = Vec::with_capacity(self.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut fallback_rows = 0;
        row_ptr.push(0);
        for (g, &x0) in self.x.iter().enumerate() {
            let row = self.local_row(x0, Some(g))?;
            fallback_rows += row.fallback as usize;
            for (pos, &w) in row.window.clone().zip(&row.level) {
                if w != 0.0 {
                    cols.push(self.order[pos]);
                    vals.push(w);
                }
            }
            row_ptr.push(cols.len());
        }
        Ok(SmootherOperator {
            row_ptr,
            cols,
            vals,
            fallback_rows,
        })
    }

    /// Dense `G x G` smoother matrix `S`. Only intended for small designs.
    pub fn dense_matrix(&self) -> Result<DMatrix<f64>> {
        let g = self.len();
        let mut s = DMatrix::zeros(g, g);
        for (i, &x0) in self.x.iter().enumerate() {
            let row = self.local_row(x0, Some(i))?;
            for (pos, &w) in row.window.clone().zip(&row.level) {
                s[(i, self.order[pos])] = w;
            }
        }
        Ok(s)
    }

    /// Dense centered smoother `(I - 11ᵀ/G) S`.
    pub fn dense_centered_matrix(&self) -> Result<DMatrix<f64>> {
        let mut s = self.dense_matrix()?;
        let g = s.nrows() as f64;
        for mut col in s.column_iter_mut() {
            let m = col.sum() / g;
            col.add_scalar_mut(-m);
        }
        Ok(s)
    }

    fn subsampled(&self, idx: &[usize]) -> Result<Self> {
        Ok(Self::new(idx.iter().map(|&i| self.x[i]).collect(), self.kernel)?
            .with_local_constant_fallback(self.local_constant_fallback))
    }
}

/// Sparse rows of a design-point smoother matrix.
#[derive(Debug, Clone)]
pub struct SmootherOperator {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    fallback_rows: usize,
}

impl SmootherOperator {
    /// Rows built by the local-constant fallback.
    pub fn fallback_rows(&self) -> usize {
        self.fallback_rows
    }

    pub fn len(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nonzeros(&self) -> usize {
        self.vals.len()
    }

    /// `out = S y`
    pub fn apply_into(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.len());
        for (g, o) in out.iter_mut().enumerate() {
            let span = self.row_ptr[g]..self.row_ptr[g + 1];
            *o = self.cols[span.clone()]
                .iter()
                .zip(&self.vals[span])
                .map(|(&c, &w)| w * y[c])
                .sum();
        }
    }

    /// `out = S* y`
    pub fn apply_centered_into(&self, y: &[f64], out: &mut [f64]) {
        self.apply_into(y, out);
        center_in_place(out);
    }

    pub fn apply_centered(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.apply_centered_into(y, &mut out);
        out
    }
}

pub(crate) fn center_in_place(v: &mut [f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= m;
    }
    m
}

/// Maximum-row-sum norm of `S_a* S_b*` on a subsample of the design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormDiagnostic {
    /// `+inf` when a local design on the subsample is singular.
    pub norm: f64,
    pub subsample: usize,
    pub singular: bool,
}

impl NormDiagnostic {
    /// Whether the sufficient condition for a unique backfitting solution holds.
    pub fn holds(&self) -> bool {
        !self.singular && self.norm < 1.0
    }
}

pub const DEFAULT_DIAGNOSTIC_SUBSAMPLE: usize = 500;

/// Indices `floor(i * g / n)` for `i < n`, or all indices when `n >= g`.
pub fn even_subsample(g: usize, n: usize) -> Vec<usize> {
    if n >= g {
        return (0..g).collect();
    }
    (0..n).map(|i| i * g / n).collect()
}

/// Computes `‖S_a* S_b*‖∞` on an evenly spaced subsample of `subsample`
/// units shared by both plans.
pub fn backfit_norm_diagnostic(
    plan_a: &SmootherPlan,
    plan_b: &SmootherPlan,
    subsample: usize,
) -> Result<NormDiagnostic> {
    if plan_a.len() != plan_b.len() {
        return Err(AddfitError::LengthMismatch {
            expected: plan_a.len(),
            found: plan_b.len(),
        });
    }
    if subsample < 2 {
        return Err(AddfitError::InvalidConfig(format!(
            "diagnostic subsample must be at least 2, got {subsample}"
        )));
    }
    let idx = even_subsample(plan_a.len(), subsample);
    let n = idx.len();
    let dense = |p: &SmootherPlan| p.subsampled(&idx).and_then(|s| s.dense_centered_matrix());
    let (sa, sb) = match (dense(plan_a), dense(plan_b)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(AddfitError::SingularLocalDesign { .. }), _) | (_, Err(AddfitError::SingularLocalDesign { .. })) => {
            return Ok(NormDiagnostic {
                norm: f64::INFINITY,
                subsample: n,
                singular: true,
            })
        }
        (Err(e), _) | (_, Err(e)) => return Err(e),
    };
    Ok(NormDiagnostic {
        norm: max_row_sum_norm(&(sa * sb)),
        subsample: n,
        singular: false,
    })
}

pub fn max_row_sum_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
