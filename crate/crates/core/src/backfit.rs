//! Backfitting estimators for the differenced and the star-transformed
//! additive models.
//!
//! Both are solved by Gauss–Seidel sweeps with centered local-linear
//! smoothers, starting from zero. The dense closed forms
//! `(I - S₁*Sₖ*)⁻¹` and `M⁻¹C` describe the fixed point only; they are never
//! formed here.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AddfitError, Result};
use crate::integrator::ComponentEstimate;
use crate::kernels::KernelSpec;
use crate::panel::{std_dev, PanelData};
use crate::smoother::{backfit_norm_diagnostic, NormDiagnostic, SmootherOperator, SmootherPlan};
use crate::varcoef::{make_diff_pair, DiffPair};

/// Smallest number of units accepted by the backfitting routines.
pub const MIN_UNITS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackfitOptions {
    /// Absolute sup-norm tolerance; `None` means `1e-6 * sd(response)`.
    pub tol: Option<f64>,
    pub max_iter: usize,
    /// When set, the pairwise norm diagnostic is computed on this many units.
    pub diagnostic_subsample: Option<usize>,
    /// Smooth design points with a singular local-linear design (isolated
    /// tail points) by the local-constant fit instead of failing.
    pub local_constant_fallback: bool,
}

impl Default for BackfitOptions {
    fn default() -> Self {
        Self {
            tol: None,
            max_iter: 200,
            diagnostic_subsample: None,
            local_constant_fallback: true,
        }
    }
}

impl BackfitOptions {
    fn tolerance(&self, y: &[f64]) -> f64 {
        self.tol.unwrap_or_else(|| 1e-6 * std_dev(y))
    }

    fn plan(&self, x: &[f64], kernel: KernelSpec) -> Result<SmootherPlan> {
        Ok(SmootherPlan::new(x.to_vec(), kernel)?.with_local_constant_fallback(self.local_constant_fallback))
    }
}

/// Outcome of one backfitting run. Non-convergence is reported, not raised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackfitState {
    /// Fitted additive functions at the design points, one per smoother.
    pub component_fits: Vec<Vec<f64>>,
    pub iteration: usize,
    pub sup_change: f64,
    pub converged: bool,
    pub tolerance: f64,
    /// Sup-norm update of every sweep.
    pub history: Vec<f64>,
    pub norm_diag: Option<NormDiagnostic>,
}

/// Gauss–Seidel backfitting of `y = Σ_k f_k + e` with centered smoothers.
fn gauss_seidel(y: &[f64], ops: &[&SmootherOperator], tol: f64, max_iter: usize) -> BackfitState {
    let g = y.len();
    let mut fits = vec![vec![0.0; g]; ops.len()];
    let mut total = vec![0.0; g];
    let mut partial = vec![0.0; g];
    let mut fresh = vec![0.0; g];
    let mut history = Vec::new();
    let mut converged = false;
    let mut sup_change = f64::INFINITY;
    for _ in 0..max_iter {
        sup_change = 0.0;
        for (k, op) in ops.iter().enumerate() {
            for i in 0..g {
                partial[i] = y[i] - total[i] + fits[k][i];
            }
            op.apply_centered_into(&partial, &mut fresh);
            for i in 0..g {
                let change = fresh[i] - fits[k][i];
                sup_change = f64::max(sup_change, change.abs());
                total[i] += change;
                fits[k][i] = fresh[i];
            }
        }
        history.push(sup_change);
        if sup_change <= tol {
            converged = true;
            break;
        }
    }
    BackfitState {
        component_fits: fits,
        iteration: history.len(),
        sup_change,
        converged,
        tolerance: tol,
        history,
        norm_diag: None,
    }
}

/// `y - Σ_{l≠k} f_l`
fn partial_residual(y: &[f64], fits: &[Vec<f64>], k: usize) -> Vec<f64> {
    let mut r = y.to_vec();
    for (l, f) in fits.iter().enumerate() {
        if l != k {
            r.iter_mut().zip(f).for_each(|(a, b)| *a -= b);
        }
    }
    r
}

fn check_units(g: usize) -> Result<()> {
    if g < MIN_UNITS {
        return Err(AddfitError::InvalidConfig(format!(
            "backfitting needs at least {MIN_UNITS} units, got {g}"
        )));
    }
    Ok(())
}

/// Result of backfitting one differenced pair `Y_j - Y_k = m_j(X_j) - m_k(X_k)`.
///
/// `state.component_fits` holds `[m̂_j, -m̂_k]` in the sign convention of the
/// normal equations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairBackfit {
    pub base: usize,
    pub partner: usize,
    pub state: BackfitState,
}

impl PairBackfit {
    pub fn base_fit(&self) -> &[f64] {
        &self.state.component_fits[0]
    }

    pub fn partner_fit(&self) -> Vec<f64> {
        self.state.component_fits[1].iter().map(|v| -v).collect()
    }
}

/// Backfits one differenced pair with kernels `[base, partner]`.
pub fn backfit_pair(pair: &DiffPair, kernels: [&KernelSpec; 2], opts: &BackfitOptions) -> Result<PairBackfit> {
    check_units(pair.len())?;
    let base = opts.plan(&pair.x_base, *kernels[0])?;
    let partner = opts.plan(&pair.x_partner, *kernels[1])?;
    let ops = [base.operator()?, partner.operator()?];
    let mut state = gauss_seidel(
        &pair.y_diff,
        &[&ops[0], &ops[1]],
        opts.tolerance(&pair.y_diff),
        opts.max_iter,
    );
    if let Some(n) = opts.diagnostic_subsample {
        state.norm_diag = Some(backfit_norm_diagnostic(&base, &partner, n)?);
    }
    Ok(PairBackfit {
        base: pair.base,
        partner: pair.partner,
        state,
    })
}

/// Pooled estimate of one component averaged over all partners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledBackfit {
    pub estimate: ComponentEstimate,
    pub pairs: Vec<PairBackfit>,
}

impl PooledBackfit {
    pub fn converged(&self) -> bool {
        self.pairs.iter().all(|p| p.state.converged)
    }

    /// Design-point values `(J-1)⁻¹ Σ_k m̂_j^{(k)}`.
    pub fn design_values(&self) -> Vec<f64> {
        let n = self.pairs.len() as f64;
        let mut out = vec![0.0; self.pairs[0].base_fit().len()];
        for p in &self.pairs {
            out.iter_mut().zip(p.base_fit()).for_each(|(o, v)| *o += v / n);
        }
        out
    }
}

/// Caches one smoother per replicate so pairs can share them.
pub struct PooledBackfitter<'a> {
    panel: &'a PanelData,
    plans: Vec<SmootherPlan>,
    ops: Vec<SmootherOperator>,
    opts: BackfitOptions,
}

impl<'a> PooledBackfitter<'a> {
    pub fn new(panel: &'a PanelData, kernels: &[KernelSpec], opts: BackfitOptions) -> Result<Self> {
        check_units(panel.units())?;
        if kernels.len() != panel.replicates() {
            return Err(AddfitError::LengthMismatch {
                expected: panel.replicates(),
                found: kernels.len(),
            });
        }
        let plans = (0..panel.replicates())
            .map(|j| opts.plan(panel.x(j), kernels[j]).map_err(|e| e.in_component(j)))
            .collect::<Result<Vec<_>>>()?;
        let ops = plans
            .iter()
            .enumerate()
            .map(|(j, p)| p.operator().map_err(|e| e.in_component(j)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            panel,
            plans,
            ops,
            opts,
        })
    }

    /// Design points of replicate `j` smoothed by the local-constant fallback.
    pub fn fallback_rows(&self, j: usize) -> usize {
        self.ops[j].fallback_rows()
    }

    pub fn pair(&self, base: usize, partner: usize) -> Result<PairBackfit> {
        let pair = make_diff_pair(self.panel, base, partner)?;
        let tol = self.opts.tolerance(&pair.y_diff);
        let mut state = gauss_seidel(
            &pair.y_diff,
            &[&self.ops[base], &self.ops[partner]],
            tol,
            self.opts.max_iter,
        );
        if let Some(n) = self.opts.diagnostic_subsample {
            state.norm_diag = Some(backfit_norm_diagnostic(&self.plans[base], &self.plans[partner], n)?);
        }
        Ok(PairBackfit { base, partner, state })
    }

    pub fn pooled(&self, base: usize) -> Result<PooledBackfit> {
        let replicates = self.panel.replicates();
        if replicates < 2 {
            return Err(AddfitError::InvalidPanel("at least two replicates are needed".into()));
        }
        if base >= replicates {
            return Err(AddfitError::BadReplicateIndex {
                base,
                partner: base,
                replicates,
            });
        }
        let pairs = (0..replicates)
            .filter(|&k| k != base)
            .map(|k| self.pair(base, k))
            .collect::<Result<Vec<_>>>()?;
        let plan = &self.plans[base];
        let n = pairs.len() as f64;
        let g = self.panel.units();
        let mut slope = vec![0.0; g];
        let mut centering = 0.0;
        for p in &pairs {
            let y: Vec<f64> = self
                .panel
                .y(base)
                .iter()
                .zip(self.panel.y(p.partner))
                .map(|(a, b)| a - b)
                .collect();
            let r = partial_residual(&y, &p.state.component_fits, 0);
            let mut level = vec![0.0; g];
            self.ops[base].apply_into(&r, &mut level);
            centering += level.iter().sum::<f64>() / g as f64 / n;
            for (s, v) in slope.iter_mut().zip(plan.slope_at_design(&r)?) {
                *s += v / n;
            }
        }
        let mut values = vec![0.0; g];
        for p in &pairs {
            values.iter_mut().zip(p.base_fit()).for_each(|(o, v)| *o += v / n);
        }
        let estimate = ComponentEstimate::from_design_fit(base, plan.design_points(), &values, &slope, centering)?;
        Ok(PooledBackfit { estimate, pairs })
    }

    /// Pooled estimates of every component.
    pub fn all(&self) -> Result<Vec<PooledBackfit>> {
        (0..self.panel.replicates())
            .into_par_iter()
            .map(|j| self.pooled(j).map_err(|e| e.in_component(j)))
            .collect()
    }
}

/// Pooled backfitting estimate of component `base`.
pub fn pooled_backfit(
    panel: &PanelData,
    base: usize,
    kernels: &[KernelSpec],
    opts: &BackfitOptions,
) -> Result<PooledBackfit> {
    PooledBackfitter::new(panel, kernels, *opts)?.pooled(base)
}

/// Responses centered within each unit: `Y*_gj = Y_gj - Ȳ_g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarPanel {
    pub y_star: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
}

impl StarPanel {
    pub fn units(&self) -> usize {
        self.x[0].len()
    }

    pub fn replicates(&self) -> usize {
        self.x.len()
    }
}

/// Builds the star panel. `Y*_gj` is computed as `J⁻¹ Σ_{k≠j} (Y_gj - Y_gk)`
/// so that unit effects cancel inside each difference.
pub fn make_star_panel(panel: &PanelData) -> Result<StarPanel> {
    let jn = panel.replicates();
    if jn < 2 {
        return Err(AddfitError::InvalidPanel("at least two replicates are needed".into()));
    }
    let y = panel.y_columns();
    let y_star = (0..jn)
        .map(|j| {
            (0..panel.units())
                .map(|g| (0..jn).filter(|&k| k != j).map(|k| y[j][g] - y[k][g]).sum::<f64>() / jn as f64)
                .collect()
        })
        .collect();
    Ok(StarPanel {
        y_star,
        x: panel.x_columns().to_vec(),
    })
}

/// Result of the J-variate fits, one backfitting system per replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointBackfit {
    /// `m̂_j = J (J-1)⁻¹ m̂*_{j,j}` for every `j`.
    pub components: Vec<ComponentEstimate>,
    /// State of system `j` (response `Y*_j`); its fits are the unscaled `m̂*_{k,j}`.
    pub states: Vec<BackfitState>,
}

impl JointBackfit {
    pub fn converged(&self) -> bool {
        self.states.iter().all(|s| s.converged)
    }
}

/// Backfits the J-variate model `Y*_j = Σ_k m*_{k,j}(X_k) + e*` for every `j`
/// and rescales the diagonal term into an estimate of `m_j`.
pub fn backfit_jvariate(star: &StarPanel, kernels: &[KernelSpec], opts: &BackfitOptions) -> Result<JointBackfit> {
    let jn = star.replicates();
    check_units(star.units())?;
    if kernels.len() != jn {
        return Err(AddfitError::LengthMismatch {
            expected: jn,
            found: kernels.len(),
        });
    }
    let plans = (0..jn)
        .map(|j| opts.plan(&star.x[j], kernels[j]).map_err(|e| e.in_component(j)))
        .collect::<Result<Vec<_>>>()?;
    let ops = plans
        .iter()
        .enumerate()
        .map(|(j, p)| p.operator().map_err(|e| e.in_component(j)))
        .collect::<Result<Vec<_>>>()?;
    let op_refs: Vec<&SmootherOperator> = ops.iter().collect();
    let scale = jn as f64 / (jn - 1) as f64;
    let fitted = (0..jn)
        .into_par_iter()
        .map(|j| {
            let y = &star.y_star[j];
            let state = gauss_seidel(y, &op_refs, opts.tolerance(y), opts.max_iter);
            let r = partial_residual(y, &state.component_fits, j);
            let mut level = vec![0.0; y.len()];
            ops[j].apply_into(&r, &mut level);
            let centering = scale * level.iter().sum::<f64>() / y.len() as f64;
            let slope: Vec<f64> = plans[j]
                .slope_at_design(&r)
                .map_err(|e| e.in_component(j))?
                .iter()
                .map(|s| scale * s)
                .collect();
            let values: Vec<f64> = state.component_fits[j].iter().map(|v| scale * v).collect();
            let estimate = ComponentEstimate::from_design_fit(j, &star.x[j], &values, &slope, centering)?;
            Ok((estimate, state))
        })
        .collect::<Result<Vec<_>>>()?;
    let (components, states) = fitted.into_iter().unzip();
    Ok(JointBackfit { components, states })
}
