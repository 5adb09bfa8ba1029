//! End-to-end fitting of a panel with one of the three estimators.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::backfit::{BackfitOptions, PooledBackfitter};
use crate::error::{AddfitError, Result};
use crate::grid::GridPolicy;
use crate::integrator::{estimate_all_components_on, estimate_treatment_effects, ComponentEstimate, TreatmentEffects};
use crate::kernels::{
    scaled_bandwidth, KernelFamily, KernelSpec, BACKFIT_BANDWIDTH_FACTOR, INTEGRATION_BANDWIDTH_FACTOR,
};
use crate::panel::{std_dev, PanelData};
use crate::robust::{robust_all_components, RobustOptions};
use crate::varcoef::MissingPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Varying-coefficient derivative fits, integrated and centered.
    Integration,
    /// Pooled pairwise backfitting of the differenced model.
    Backfit,
    /// Pooled L1 derivative fits, integrated and centered.
    Robust,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Integration, Method::Backfit, Method::Robust];

    pub fn name(self) -> &'static str {
        match self {
            Method::Integration => "integration",
            Method::Backfit => "backfit",
            Method::Robust => "robust",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = AddfitError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "integration" => Ok(Method::Integration),
            "backfit" | "backfitting" => Ok(Method::Backfit),
            "robust" => Ok(Method::Robust),
            other => Err(AddfitError::InvalidConfig(format!(
                "unknown method '{other}' (expected integration, backfit or robust)"
            ))),
        }
    }
}

/// Tuning shared by all methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub kernel: KernelFamily,
    /// Fixed bandwidth for every method and component, overriding the rules below.
    pub bandwidth: Option<f64>,
    /// `h = factor * sd(pooled X) * G^(-1/5)` for the derivative-based methods.
    pub integration_factor: f64,
    /// `h_j = factor * sd(X_j) * G^(-1/5)` for backfitting.
    pub backfit_factor: f64,
    pub grid: GridPolicy,
    pub missing: MissingPolicy,
    pub backfit: BackfitOptions,
    pub robust: RobustOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            kernel: KernelFamily::default(),
            bandwidth: None,
            integration_factor: INTEGRATION_BANDWIDTH_FACTOR,
            backfit_factor: BACKFIT_BANDWIDTH_FACTOR,
            grid: GridPolicy::default(),
            missing: MissingPolicy::default(),
            backfit: BackfitOptions::default(),
            robust: RobustOptions::default(),
        }
    }
}

impl FitConfig {
    /// Bandwidth for the integration and robust methods.
    pub fn derivative_kernel(&self, panel: &PanelData) -> Result<KernelSpec> {
        let h = match self.bandwidth {
            Some(h) => h,
            None => scaled_bandwidth(std_dev(&panel.pooled_x()), panel.units(), self.integration_factor)?,
        };
        KernelSpec::new(self.kernel, h)
    }

    /// One bandwidth per replicate for backfitting.
    pub fn backfit_kernels(&self, panel: &PanelData) -> Result<Vec<KernelSpec>> {
        (0..panel.replicates())
            .map(|j| {
                let h = match self.bandwidth {
                    Some(h) => h,
                    None => scaled_bandwidth(std_dev(panel.x(j)), panel.units(), self.backfit_factor)?,
                };
                KernelSpec::new(self.kernel, h)
            })
            .collect()
    }
}

/// Fitted components, unit effects and residuals of one panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelFit {
    pub method: Method,
    pub components: Vec<ComponentEstimate>,
    pub effects: TreatmentEffects,
    /// `Y_gj - α̂_g - m̂_j(X_gj)`, one column per replicate.
    pub residuals: Vec<Vec<f64>>,
    pub bandwidths: Vec<f64>,
    /// Backfitting pairs whose iteration hit its limit.
    pub nonconverged: usize,
    /// Robust grid points whose IRLS iteration hit its limit.
    pub irls_capped: usize,
}

impl PanelFit {
    pub fn converged(&self) -> bool {
        self.nonconverged == 0
    }

    /// `sqrt(RSS / (G (J - 1)))`; the unit effects use up one degree of
    /// freedom per unit.
    pub fn sigma_hat(&self) -> f64 {
        let j = self.residuals.len();
        let g = self.residuals[0].len();
        let rss: f64 = self.residuals.iter().flatten().map(|r| r * r).sum();
        (rss / (g * (j - 1)) as f64).sqrt()
    }

    /// Standard deviation of the differenced residuals for every pair `j < k`.
    pub fn pair_residual_sd(&self) -> Vec<(usize, usize, f64)> {
        let j = self.residuals.len();
        let mut out = Vec::new();
        for a in 0..j {
            for b in a + 1..j {
                let d: Vec<f64> = self.residuals[a]
                    .iter()
                    .zip(&self.residuals[b])
                    .map(|(p, q)| p - q)
                    .collect();
                out.push((a, b, std_dev(&d)));
            }
        }
        out
    }
}

pub fn fit_panel(panel: &PanelData, method: Method, cfg: &FitConfig) -> Result<PanelFit> {
    if panel.replicates() < 2 {
        return Err(AddfitError::InvalidPanel("at least two replicates are needed".into()));
    }
    let mut irls_capped = 0;
    let (components, bandwidths, nonconverged) = match method {
        Method::Integration => {
            let kernel = cfg.derivative_kernel(panel)?;
            let grid = cfg.grid.build(&panel.pooled_x())?;
            let comps = estimate_all_components_on(panel, &kernel, &grid, cfg.missing)?;
            (comps, vec![kernel.bandwidth(); panel.replicates()], 0)
        }
        Method::Robust => {
            let kernel = cfg.derivative_kernel(panel)?;
            let grid = cfg.grid.build(&panel.pooled_x())?;
            let fits = robust_all_components(panel, &kernel, &grid, &cfg.robust)?;
            irls_capped = fits.iter().map(|f| f.capped_points).sum();
            let comps = fits.into_iter().map(|f| f.estimate).collect();
            (comps, vec![kernel.bandwidth(); panel.replicates()], 0)
        }
        Method::Backfit => {
            let kernels = cfg.backfit_kernels(panel)?;
            let fits = PooledBackfitter::new(panel, &kernels, cfg.backfit)?.all()?;
            let nonconverged = fits
                .iter()
                .flat_map(|f| &f.pairs)
                .filter(|p| !p.state.converged)
                .count();
            let comps = fits.into_iter().map(|f| f.estimate).collect();
            (comps, kernels.iter().map(|k| k.bandwidth()).collect(), nonconverged)
        }
    };
    let effects = estimate_treatment_effects(panel, &components)?;
    let residuals = (0..panel.replicates())
        .map(|j| {
            panel
                .x(j)
                .iter()
                .zip(panel.y(j))
                .zip(&effects.alpha)
                .map(|((&x, &y), a)| y - a - components[j].evaluate(x))
                .collect()
        })
        .collect();
    Ok(PanelFit {
        method,
        components,
        effects,
        residuals,
        bandwidths,
        nonconverged,
        irls_capped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("spline".parse::<Method>().is_err());
    }

    #[test]
    fn residual_summaries() {
        let fit = PanelFit {
            method: Method::Integration,
            components: Vec::new(),
            effects: TreatmentEffects {
                alpha: vec![0.0; 2],
                extrapolated: 0,
            },
            residuals: vec![vec![1.0, -1.0], vec![-1.0, 1.0]],
            bandwidths: vec![1.0; 2],
            nonconverged: 0,
            irls_capped: 0,
        };
        assert_eq!(fit.sigma_hat(), 2f64.sqrt());
        let sd = fit.pair_residual_sd();
        assert_eq!(sd.len(), 1);
        assert!((sd[0].2 - 8f64.sqrt()).abs() < 1e-12);
    }
}
