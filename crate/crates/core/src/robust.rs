//! Outlier-resistant derivative estimation.
//!
//! At each grid point `x` the pooled local-constant L1 criterion
//! `Σ_k Σ_g K_h(X_gk - x) |Y_gj - Y_gk - a_k - b Δ_g|`
//! is minimised over per-partner intercepts `a_k` and a shared slope `b`,
//! and `b` estimates `m_j'(x)`. The minimiser is found by iteratively
//! reweighted least squares on a Huber-smoothed version of the absolute
//! value, so every step is a majorize-minimize step and the smoothed
//! objective never increases. The iterate with the smallest true L1
//! objective is returned.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AddfitError, Result};
use crate::grid::EvalGrid;
use crate::integrator::{integrate_component, ComponentEstimate};
use crate::kernels::KernelSpec;
use crate::panel::{std_dev, PanelData};
use crate::varcoef::{make_diff_pair, DerivativeCurve, DiffPair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustOptions {
    pub max_iter: usize,
    /// Relative parameter change that ends the iteration.
    pub param_tol: f64,
    /// Smoothing threshold as a multiple of the in-window response sd.
    pub delta_factor: f64,
}

impl Default for RobustOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            param_tol: 1e-8,
            delta_factor: 1e-6,
        }
    }
}

/// Fit at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustFitPoint {
    pub x: f64,
    /// Intercept per pair, `None` for pairs with no in-window data.
    pub alpha: Vec<Option<f64>>,
    pub beta0: f64,
    /// Kernel-weighted L1 objective at the returned parameters.
    pub objective: f64,
    pub irls_iterations: usize,
    pub converged: bool,
    /// Smoothed objective before the first and after every IRLS step.
    pub objective_trace: Vec<f64>,
}

struct Obs {
    pair: usize,
    y: f64,
    d: f64,
    w: f64,
}

/// Pre-sorted pairs for repeated fits at many points.
pub struct RobustFitter<'a> {
    pairs: &'a [DiffPair],
    kernel: KernelSpec,
    sorted: Vec<(Vec<usize>, Vec<f64>)>,
    opts: RobustOptions,
}

impl<'a> RobustFitter<'a> {
    pub fn new(pairs: &'a [DiffPair], kernel: KernelSpec, opts: RobustOptions) -> Self {
        let sorted = pairs
            .iter()
            .map(|p| {
                let mut order: Vec<usize> = (0..p.len()).collect();
                order.sort_by(|&a, &b| p.x_partner[a].total_cmp(&p.x_partner[b]));
                let xs = order.iter().map(|&i| p.x_partner[i]).collect();
                (order, xs)
            })
            .collect();
        Self {
            pairs,
            kernel,
            sorted,
            opts,
        }
    }

    fn window(&self, x: f64) -> Vec<Obs> {
        let h = self.kernel.bandwidth();
        let mut out = Vec::new();
        for (k, (order, xs)) in self.sorted.iter().enumerate() {
            let lo = xs.partition_point(|&v| v <= x - h);
            let hi = xs.partition_point(|&v| v < x + h).max(lo);
            for pos in lo..hi {
                let w = self.kernel.evaluate((xs[pos] - x) / h);
                if w > 0.0 {
                    let g = order[pos];
                    out.push(Obs {
                        pair: k,
                        y: self.pairs[k].y_diff[g],
                        d: self.pairs[k].delta[g],
                        w,
                    });
                }
            }
        }
        out
    }

    /// Least-squares fit of the same local model; the IRLS starting point.
    pub fn l2_fit_point(&self, x: f64) -> Result<(Vec<Option<f64>>, f64)> {
        let obs = self.window(x);
        let weights: Vec<f64> = obs.iter().map(|o| o.w).collect();
        self.weighted_fit(x, &obs, &weights)
    }

    /// Weighted least squares with intercepts profiled out per pair.
    fn weighted_fit(&self, x: f64, obs: &[Obs], weights: &[f64]) -> Result<(Vec<Option<f64>>, f64)> {
        let np = self.pairs.len();
        let (mut sw, mut swd, mut swy) = (vec![0.0; np], vec![0.0; np], vec![0.0; np]);
        let (mut swdd, mut swdy) = (vec![0.0; np], vec![0.0; np]);
        for (o, &w) in obs.iter().zip(weights) {
            sw[o.pair] += w;
            swd[o.pair] += w * o.d;
            swy[o.pair] += w * o.y;
            swdd[o.pair] += w * o.d * o.d;
            swdy[o.pair] += w * o.d * o.y;
        }
        let (mut num, mut den, mut raw) = (0.0, 0.0, 0.0);
        for k in 0..np {
            if sw[k] > 0.0 {
                num += swdy[k] - swd[k] * swy[k] / sw[k];
                den += swdd[k] - swd[k] * swd[k] / sw[k];
                raw += swdd[k];
            }
        }
        if raw == 0.0 {
            return Err(AddfitError::NonIdentifiable { x });
        }
        if den <= 1e-12 * raw {
            return Err(AddfitError::SingularLocalDesign { x, index: None });
        }
        let beta = num / den;
        let alpha = (0..np)
            .map(|k| (sw[k] > 0.0).then(|| (swy[k] - beta * swd[k]) / sw[k]))
            .collect();
        Ok((alpha, beta))
    }

    pub fn fit_point(&self, x: f64) -> Result<RobustFitPoint> {
        let obs = self.window(x);
        let ys: Vec<f64> = obs.iter().map(|o| o.y).collect();
        let scale = std_dev(&ys);
        let delta = (self.opts.delta_factor * scale).max(f64::MIN_POSITIVE.sqrt());
        let residuals = |alpha: &[Option<f64>], beta: f64| -> Vec<f64> {
            obs.iter()
                .map(|o| o.y - alpha[o.pair].unwrap_or(0.0) - beta * o.d)
                .collect()
        };
        let l1 = |r: &[f64]| obs.iter().zip(r).map(|(o, r)| o.w * r.abs()).sum::<f64>();
        let smoothed = |r: &[f64]| {
            obs.iter()
                .zip(r)
                .map(|(o, r)| {
                    let a = r.abs();
                    o.w * if a >= delta {
                        a
                    } else {
                        r * r / (2.0 * delta) + delta / 2.0
                    }
                })
                .sum::<f64>()
        };

        let start: Vec<f64> = obs.iter().map(|o| o.w).collect();
        let (mut alpha, mut beta) = self.weighted_fit(x, &obs, &start)?;
        let mut r = residuals(&alpha, beta);
        let mut best = (l1(&r), alpha.clone(), beta);
        let mut trace = vec![smoothed(&r)];
        let mut converged = false;
        let mut iterations = 0;
        for _ in 0..self.opts.max_iter {
            iterations += 1;
            let weights: Vec<f64> = obs.iter().zip(&r).map(|(o, r)| o.w / r.abs().max(delta)).collect();
            let (next_alpha, next_beta) = self.weighted_fit(x, &obs, &weights)?;
            let mut change = (next_beta - beta).abs();
            let mut size = next_beta.abs();
            for (a, b) in next_alpha.iter().zip(&alpha) {
                if let (Some(a), Some(b)) = (a, b) {
                    change = change.max((a - b).abs());
                    size = size.max(a.abs());
                }
            }
            alpha = next_alpha;
            beta = next_beta;
            r = residuals(&alpha, beta);
            trace.push(smoothed(&r));
            let obj = l1(&r);
            if obj < best.0 {
                best = (obj, alpha.clone(), beta);
            }
            if change <= self.opts.param_tol * (1.0 + size) {
                converged = true;
                break;
            }
        }
        Ok(RobustFitPoint {
            x,
            alpha: best.1,
            beta0: best.2,
            objective: best.0,
            irls_iterations: iterations,
            converged,
            objective_trace: trace,
        })
    }
}

/// Robust fit at `x` pooling all `pairs` (which should share a base replicate).
pub fn robust_fit_point(
    pairs: &[DiffPair],
    kernel: &KernelSpec,
    x: f64,
    opts: &RobustOptions,
) -> Result<RobustFitPoint> {
    RobustFitter::new(pairs, *kernel, *opts).fit_point(x)
}

/// Robust derivative and integrated estimate of one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustComponent {
    pub estimate: ComponentEstimate,
    pub derivative: DerivativeCurve,
    /// Grid points where the IRLS iteration hit its limit. The best L1
    /// iterate is still used there.
    pub capped_points: usize,
}

pub fn robust_component(
    panel: &PanelData,
    base: usize,
    kernel: &KernelSpec,
    grid: &EvalGrid,
    opts: &RobustOptions,
) -> Result<RobustComponent> {
    let pairs = (0..panel.replicates())
        .filter(|&k| k != base)
        .map(|k| make_diff_pair(panel, base, k))
        .collect::<Result<Vec<_>>>()?;
    if pairs.is_empty() {
        return Err(AddfitError::InvalidPanel("at least two replicates are needed".into()));
    }
    let fitter = RobustFitter::new(&pairs, *kernel, *opts);
    let fits: Vec<Option<RobustFitPoint>> = grid.points().par_iter().map(|&x| fitter.fit_point(x).ok()).collect();
    let capped_points = fits.iter().flatten().filter(|f| !f.converged).count();
    let derivative = DerivativeCurve {
        grid: grid.points().to_vec(),
        values: fits.iter().map(|f| f.as_ref().map(|f| f.beta0)).collect(),
    };
    let estimate = integrate_component(&derivative, panel.x(base), base)?;
    Ok(RobustComponent {
        estimate,
        derivative,
        capped_points,
    })
}

/// Robust estimates of every component.
pub fn robust_all_components(
    panel: &PanelData,
    kernel: &KernelSpec,
    grid: &EvalGrid,
    opts: &RobustOptions,
) -> Result<Vec<RobustComponent>> {
    (0..panel.replicates())
        .into_par_iter()
        .map(|j| robust_component(panel, j, kernel, grid, opts).map_err(|e| e.in_component(j)))
        .collect()
}
