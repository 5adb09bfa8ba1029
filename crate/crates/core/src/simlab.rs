//! Monte Carlo laboratory for the replicated additive model.
//!
//! Units draw `X_g1` from a mixture of the density `0.0004 (x-6)^3` on
//! `[6, 16]` (weight 0.6) and the uniform law on the same interval (weight
//! 0.4). Other replicates follow `X_gk = X_g1 - b u_gk` with `b = G^-γ` and
//! standard normal `u`. Unit effects are Laplace(0, 1) and errors are
//! `N(0, σ²)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::{AddfitError, Result};
use crate::grid::GridPolicy;
use crate::integrator::ComponentEstimate;
use crate::panel::PanelData;
use crate::pipeline::{fit_panel, FitConfig, Method};

/// Covariate support of the design.
pub const SUPPORT: (f64, f64) = (6.0, 16.0);

const CUBIC_WEIGHT: f64 = 0.6;

/// Named streams of the per-replication random number generators.
#[derive(Debug, Clone, Copy)]
enum Role {
    X = 0,
    U = 1,
    Alpha = 2,
    Eps = 3,
    Contamination = 4,
}

const ROLES: u64 = 8;

fn stream(seed: u64, rep: usize, role: Role) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64 * ROLES + role as u64);
    rng
}

/// The three component shapes; replicate `j` uses shape `j mod 3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// `√5 (sin x - c)`
    Sine,
    /// `0.01 (x - 11)^3 - c`
    Cubic,
    /// `0.2 exp(x / 5) - c`
    Exponential,
}

impl Shape {
    pub fn for_replicate(j: usize) -> Shape {
        [Shape::Sine, Shape::Cubic, Shape::Exponential][j % 3]
    }

    /// Published centering constants.
    pub fn reference_constant(self) -> f64 {
        match self {
            Shape::Sine => 0.2854,
            Shape::Cubic => 0.2913,
            Shape::Exponential => 3.0648,
        }
    }

    fn raw(self, x: f64) -> f64 {
        match self {
            Shape::Sine => x.sin(),
            Shape::Cubic => 0.01 * (x - 11.0).powi(3),
            Shape::Exponential => 0.2 * (x / 5.0).exp(),
        }
    }

    /// `E raw(X1 - b u)` under the design, from moments of `X1`.
    fn exact_constant(self, b: f64) -> f64 {
        let m = base_moments();
        match self {
            Shape::Sine => m.sin * (-b * b / 2.0).exp(),
            Shape::Cubic => 0.01 * (m.cubic + 3.0 * b * b * m.linear),
            Shape::Exponential => 0.2 * m.exp * (b * b / 50.0).exp(),
        }
    }
}

/// How component functions are centered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Centering {
    /// The published constants.
    #[default]
    Reference,
    /// Exact means of each component under its own covariate law.
    Exact,
}

/// One true component function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueComponent {
    pub shape: Shape,
    pub constant: f64,
}

impl TrueComponent {
    pub fn eval(&self, x: f64) -> f64 {
        match self.shape {
            Shape::Sine => 5f64.sqrt() * (x.sin() - self.constant),
            _ => self.shape.raw(x) - self.constant,
        }
    }
}

struct BaseMoments {
    sin: f64,
    linear: f64,
    cubic: f64,
    exp: f64,
}

fn design_density(x: f64) -> f64 {
    if !(SUPPORT.0..=SUPPORT.1).contains(&x) {
        return 0.0;
    }
    CUBIC_WEIGHT * 0.0004 * (x - 6.0).powi(3) + (1.0 - CUBIC_WEIGHT) / 10.0
}

/// Simpson's rule over the support.
fn design_expectation(f: impl Fn(f64) -> f64) -> f64 {
    let n = 20_000;
    let (a, b) = SUPPORT;
    let step = (b - a) / n as f64;
    let mut s = 0.0;
    for i in 0..=n {
        let x = a + i as f64 * step;
        let c = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        s += c * f(x) * design_density(x);
    }
    s * step / 3.0
}

fn base_moments() -> &'static BaseMoments {
    static MOMENTS: std::sync::OnceLock<BaseMoments> = std::sync::OnceLock::new();
    MOMENTS.get_or_init(|| BaseMoments {
        sin: design_expectation(f64::sin),
        linear: design_expectation(|x| x - 11.0),
        cubic: design_expectation(|x| (x - 11.0).powi(3)),
        exp: design_expectation(|x| (x / 5.0).exp()),
    })
}

/// Additive outliers applied to a random share of responses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contamination {
    pub fraction: f64,
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub units: usize,
    pub replicates: usize,
    pub gamma: f64,
    /// Replaces `G^-γ` as the scale of the replicate perturbation.
    pub perturbation_scale: Option<f64>,
    pub sigma_eps: f64,
    pub seed: u64,
    pub reps: usize,
    pub centering: Centering,
    pub contamination: Option<Contamination>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            units: 3000,
            replicates: 3,
            gamma: 0.2,
            perturbation_scale: None,
            sigma_eps: 1.0,
            seed: 20100101,
            reps: 50,
            centering: Centering::Reference,
            contamination: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AddfitError::InvalidConfig(m));
        if self.units < 10 {
            return bad(format!("G must be at least 10, got {}", self.units));
        }
        if self.replicates < 2 {
            return bad(format!("J must be at least 2, got {}", self.replicates));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be finite and non-negative, got {}", self.gamma));
        }
        if self.reps < 1 {
            return bad("reps must be at least 1".into());
        }
        if !(self.sigma_eps >= 0.0 && self.sigma_eps.is_finite()) {
            return bad(format!(
                "sigma_eps must be finite and non-negative, got {}",
                self.sigma_eps
            ));
        }
        if let Some(b) = self.perturbation_scale {
            if !(b >= 0.0 && b.is_finite()) {
                return bad(format!("perturbation scale must be finite and non-negative, got {b}"));
            }
        }
        if let Some(c) = self.contamination {
            if !(0.0..=1.0).contains(&c.fraction) || !c.shift.is_finite() {
                return bad(format!("bad contamination {c:?}"));
            }
        }
        Ok(())
    }

    /// `b = G^-γ` unless overridden.
    pub fn perturbation(&self) -> f64 {
        self.perturbation_scale
            .unwrap_or_else(|| (self.units as f64).powf(-self.gamma))
    }

    pub fn components(&self) -> Vec<TrueComponent> {
        let b = self.perturbation();
        (0..self.replicates)
            .map(|j| {
                let shape = Shape::for_replicate(j);
                let constant = match self.centering {
                    Centering::Reference => shape.reference_constant(),
                    Centering::Exact => shape.exact_constant(if j == 0 { 0.0 } else { b }),
                };
                TrueComponent { shape, constant }
            })
            .collect()
    }
}

/// Hidden quantities behind a simulated panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub alpha: Vec<f64>,
    /// `u_gk` for `k ≥ 2` (index 0 is replicate 2).
    pub u: Vec<Vec<f64>>,
    pub components: Vec<TrueComponent>,
    /// `m_j(X_gj)`, one column per replicate.
    pub m_values: Vec<Vec<f64>>,
    /// Number of contaminated responses.
    pub contaminated: usize,
}

/// Draws `X_g1` from the design mixture.
pub fn draw_base_covariate(rng: &mut impl Rng) -> f64 {
    let pick: f64 = rng.random();
    let u: f64 = rng.random();
    if pick < CUBIC_WEIGHT {
        6.0 + (u / 0.0001).powf(0.25)
    } else {
        6.0 + 10.0 * u
    }
}

fn laplace(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Simulated panel of replication 0.
pub fn generate_panel(cfg: &SimConfig) -> Result<(PanelData, SimTruth)> {
    generate_replication(cfg, 0)
}

/// Simulated panel of replication `rep`; every role has its own stream.
pub fn generate_replication(cfg: &SimConfig, rep: usize) -> Result<(PanelData, SimTruth)> {
    cfg.validate()?;
    let (g, jn) = (cfg.units, cfg.replicates);
    let b = cfg.perturbation();
    let mut rx = stream(cfg.seed, rep, Role::X);
    let mut ru = stream(cfg.seed, rep, Role::U);
    let mut ra = stream(cfg.seed, rep, Role::Alpha);
    let mut re = stream(cfg.seed, rep, Role::Eps);
    let x1: Vec<f64> = (0..g).map(|_| draw_base_covariate(&mut rx)).collect();
    let u: Vec<Vec<f64>> = (1..jn)
        .map(|_| (0..g).map(|_| ru.sample(StandardNormal)).collect())
        .collect();
    let alpha: Vec<f64> = (0..g).map(|_| laplace(&mut ra)).collect();
    let mut x = vec![x1.clone()];
    x.extend(u.iter().map(|uk| x1.iter().zip(uk).map(|(a, v)| a - b * v).collect()));
    let components = cfg.components();
    let m_values: Vec<Vec<f64>> = x
        .iter()
        .zip(&components)
        .map(|(xc, c)| xc.iter().map(|&v| c.eval(v)).collect())
        .collect();
    let mut y: Vec<Vec<f64>> = m_values
        .iter()
        .map(|mc| {
            mc.iter()
                .zip(&alpha)
                .map(|(m, a)| a + m + cfg.sigma_eps * re.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let mut contaminated = 0;
    if let Some(c) = cfg.contamination {
        let mut rc = stream(cfg.seed, rep, Role::Contamination);
        for v in y.iter_mut().flatten() {
            if rc.random::<f64>() < c.fraction {
                *v += c.shift;
                contaminated += 1;
            }
        }
    }
    let panel = PanelData::new(x, y)?;
    Ok((
        panel,
        SimTruth {
            alpha,
            u,
            components,
            m_values,
            contaminated,
        },
    ))
}

/// `G⁻¹ Σ_g (m̂(X_g) - m(X_g))²` with `m̂` interpolated on its grid.
pub fn mse_component(estimate: &ComponentEstimate, truth: impl Fn(f64) -> f64, observed_x: &[f64]) -> f64 {
    observed_x
        .iter()
        .map(|&x| (estimate.evaluate(x) - truth(x)).powi(2))
        .sum::<f64>()
        / observed_x.len() as f64
}

pub fn mse_alpha(alpha_hat: &[f64], alpha_true: &[f64]) -> Result<f64> {
    if alpha_hat.len() != alpha_true.len() {
        return Err(AddfitError::LengthMismatch {
            expected: alpha_true.len(),
            found: alpha_hat.len(),
        });
    }
    Ok(alpha_hat
        .iter()
        .zip(alpha_true)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / alpha_true.len() as f64)
}

/// Fit configuration used for simulations: the grid is 100 equispaced points
/// over the covariate support.
pub fn simulation_fit_config() -> FitConfig {
    FitConfig {
        grid: GridPolicy::Fixed {
            lo: SUPPORT.0,
            hi: SUPPORT.1,
            points: 100,
        },
        ..FitConfig::default()
    }
}

/// Errors of one method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepMse {
    pub components: Vec<f64>,
    pub alpha: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    /// Median MSE of each component over successful replications.
    pub median_components: Vec<Option<f64>>,
    pub median_alpha: Option<f64>,
    pub succeeded: usize,
    pub failures: usize,
    /// Successful replications whose iterations hit their limit.
    pub nonconverged: usize,
    /// Per replication, `None` when the estimator failed.
    pub reps: Vec<Option<RepMse>>,
    /// First error message, if any replication failed.
    pub first_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub config: SimConfig,
    pub fit: FitConfig,
    pub methods: Vec<MethodSummary>,
}

impl MseReport {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }

    pub fn failure_share(&self) -> f64 {
        let worst = self.methods.iter().map(|m| m.failures).max().unwrap_or(0);
        worst as f64 / self.config.reps as f64
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Fits one simulated panel with `method` and scores it.
pub fn score_replication(panel: &PanelData, truth: &SimTruth, method: Method, fit: &FitConfig) -> Result<RepMse> {
    let result = fit_panel(panel, method, fit)?;
    let components = result
        .components
        .iter()
        .zip(&truth.components)
        .enumerate()
        .map(|(j, (est, t))| mse_component(est, |x| t.eval(x), panel.x(j)))
        .collect();
    Ok(RepMse {
        components,
        alpha: mse_alpha(&result.effects.alpha, &truth.alpha)?,
        converged: result.converged(),
    })
}

/// Runs `cfg.reps` replications, fitting every method on each. Replications
/// run in parallel and are collected in order, so the report only depends
/// on the configuration.
pub fn run_comparison(cfg: &SimConfig, methods: &[Method], fit: &FitConfig) -> Result<MseReport> {
    cfg.validate()?;
    if methods.is_empty() {
        return Err(AddfitError::InvalidConfig("no methods requested".into()));
    }
    let per_rep: Vec<Vec<std::result::Result<RepMse, String>>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let (panel, truth) = generate_replication(cfg, rep).expect("configuration was validated");
            methods
                .iter()
                .map(|&m| score_replication(&panel, &truth, m, fit).map_err(|e| e.to_string()))
                .collect()
        })
        .collect();
    let summaries = methods
        .iter()
        .enumerate()
        .map(|(i, &method)| {
            let reps: Vec<Option<RepMse>> = per_rep.iter().map(|r| r[i].as_ref().ok().cloned()).collect();
            let ok: Vec<&RepMse> = reps.iter().flatten().collect();
            let median_components = (0..cfg.replicates)
                .map(|j| median(&ok.iter().map(|r| r.components[j]).collect::<Vec<_>>()))
                .collect();
            MethodSummary {
                method,
                median_components,
                median_alpha: median(&ok.iter().map(|r| r.alpha).collect::<Vec<_>>()),
                succeeded: ok.len(),
                failures: cfg.reps - ok.len(),
                nonconverged: ok.iter().filter(|r| !r.converged).count(),
                first_error: per_rep.iter().find_map(|r| r[i].as_ref().err().cloned()),
                reps,
            }
        })
        .collect();
    Ok(MseReport {
        config: cfg.clone(),
        fit: *fit,
        methods: summaries,
    })
}

/// Empirical correlation of two samples.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Aligned text table of median MSEs: one row per target, one column per
/// (method, γ) report.
pub fn render_table(reports: &[MseReport]) -> String {
    let mut cols: Vec<(String, &MethodSummary)> = Vec::new();
    for method in Method::ALL {
        for r in reports {
            if let Some(s) = r.method(method) {
                cols.push((format!("{} g={}", method, r.config.gamma), s));
            }
        }
    }
    let width = cols.iter().map(|c| c.0.len()).max().unwrap_or(0).max(10);
    let jn = reports.iter().map(|r| r.config.replicates).max().unwrap_or(0);
    let mut out = String::new();
    let _ = write!(out, "{:<8}", "target");
    for (name, _) in &cols {
        let _ = write!(out, " {name:>width$}");
    }
    out.push('\n');
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    for j in 0..jn {
        let _ = write!(out, "{:<8}", format!("m{}", j + 1));
        for (_, s) in &cols {
            let _ = write!(out, " {:>width$}", cell(s.median_components.get(j).copied().flatten()));
        }
        out.push('\n');
    }
    let _ = write!(out, "{:<8}", "alpha");
    for (_, s) in &cols {
        let _ = write!(out, " {:>width$}", cell(s.median_alpha));
    }
    out.push('\n');
    let _ = write!(out, "{:<8}", "failed");
    for (_, s) in &cols {
        let _ = write!(out, " {:>width$}", s.failures);
    }
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(gamma: f64) -> SimConfig {
        SimConfig {
            units: 400,
            gamma,
            reps: 2,
            ..SimConfig::default()
        }
    }

    #[test]
    fn validation() {
        assert!(SimConfig { units: 5, ..small(0.1) }.validate().is_err());
        assert!(SimConfig {
            replicates: 1,
            ..small(0.1)
        }
        .validate()
        .is_err());
        assert!(SimConfig {
            gamma: -0.1,
            ..small(0.1)
        }
        .validate()
        .is_err());
        assert!(SimConfig { reps: 0, ..small(0.1) }.validate().is_err());
        assert!(small(0.1).validate().is_ok());
    }

    #[test]
    fn design_density_integrates_to_one() {
        assert!((design_expectation(|_| 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn base_covariate_matches_design_cdf() {
        // F(x) = 0.6 * 0.0001 (x-6)^4 + 0.4 (x-6)/10
        let cdf = |x: f64| CUBIC_WEIGHT * 0.0001 * (x - 6.0).powi(4) + (1.0 - CUBIC_WEIGHT) * (x - 6.0) / 10.0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| draw_base_covariate(&mut rng)).collect();
        assert!(draws.iter().all(|x| (6.0..=16.0).contains(x)));
        for q in [8.0, 10.0, 12.0, 14.0] {
            let emp = draws.iter().filter(|&&x| x <= q).count() as f64 / n as f64;
            assert!((emp - cdf(q)).abs() < 0.005, "{q}: {emp} vs {}", cdf(q));
        }
    }

    #[test]
    fn laplace_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 200_000;
        let d: Vec<f64> = (0..n).map(|_| laplace(&mut rng)).collect();
        let mean = d.iter().sum::<f64>() / n as f64;
        let var = d.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let abs = d.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02 && (var - 2.0).abs() < 0.05 && (abs - 1.0).abs() < 0.02);
    }

    #[test]
    fn replications_are_deterministic_and_distinct() {
        let cfg = small(0.1);
        let a = generate_replication(&cfg, 1).unwrap();
        assert_eq!(a, generate_replication(&cfg, 1).unwrap());
        assert_ne!(a.0, generate_replication(&cfg, 2).unwrap().0);
    }

    #[test]
    fn changing_noise_leaves_covariates_alone() {
        let a = generate_panel(&small(0.1)).unwrap();
        let b = generate_panel(&SimConfig {
            sigma_eps: 3.0,
            ..small(0.1)
        })
        .unwrap();
        assert_eq!(a.0.x_columns(), b.0.x_columns());
        assert_eq!(a.1.alpha, b.1.alpha);
    }

    #[test]
    fn zero_perturbation_duplicates_covariates() {
        let cfg = SimConfig {
            perturbation_scale: Some(0.0),
            ..small(0.1)
        };
        let (p, _) = generate_panel(&cfg).unwrap();
        assert_eq!(p.x(0), p.x(1));
        assert_eq!(p.x(0), p.x(2));
    }

    #[test]
    fn perturbation_sd_matches_scale() {
        let cfg = SimConfig {
            units: 3000,
            ..small(0.1)
        };
        let (p, _) = generate_panel(&cfg).unwrap();
        let d: Vec<f64> = p.x(0).iter().zip(p.x(1)).map(|(a, b)| a - b).collect();
        let sd = crate::panel::std_dev(&d);
        assert!((sd / cfg.perturbation() - 1.0).abs() < 0.05);
    }

    #[test]
    fn correlation_increases_with_gamma() {
        let c: Vec<f64> = [0.05, 0.1, 0.2]
            .iter()
            .map(|&g| {
                let (p, _) = generate_panel(&SimConfig {
                    units: 3000,
                    ..small(g)
                })
                .unwrap();
                correlation(p.x(0), p.x(1))
            })
            .collect();
        assert!(c[0] < c[1] && c[1] < c[2], "{c:?}");
    }

    #[test]
    fn exact_centering_gives_zero_mean_components() {
        let cfg = SimConfig {
            units: 3000,
            centering: Centering::Exact,
            ..small(0.05)
        };
        for seed in 0..20 {
            let (p, truth) = generate_panel(&SimConfig { seed, ..cfg.clone() }).unwrap();
            for (j, m) in truth.m_values.iter().enumerate() {
                let mean = m.iter().sum::<f64>() / m.len() as f64;
                let sd = crate::panel::std_dev(m);
                assert!(
                    mean.abs() < 4.0 * sd / (p.units() as f64).sqrt(),
                    "seed {seed} m{}: {mean}",
                    j + 1
                );
            }
        }
    }

    #[test]
    fn reference_sine_component_is_nearly_centered() {
        let cfg = SimConfig { units: 3000, ..small(0.05) };
        let mut means = Vec::new();
        let mut bound = 0.0;
        for seed in 0..20 {
            let (_, truth) = generate_panel(&SimConfig { seed, ..cfg.clone() }).unwrap();
            let m1 = &truth.m_values[0];
            means.push(m1.iter().sum::<f64>() / m1.len() as f64);
            bound = 3.0 * crate::panel::std_dev(m1) / (m1.len() as f64).sqrt();
        }
        let avg = means.iter().sum::<f64>() / 20.0;
        assert!(avg.abs() < bound, "{avg} vs {bound}");
    }

    #[test]
    fn exact_constants_are_close_to_reference() {
        let cfg = SimConfig {
            centering: Centering::Exact,
            ..small(0.2)
        };
        for c in cfg.components() {
            assert!((c.constant - c.shape.reference_constant()).abs() < 0.15, "{c:?}");
        }
    }

    #[test]
    fn contamination_shifts_responses() {
        let clean = generate_panel(&small(0.1)).unwrap();
        let cfg = SimConfig {
            contamination: Some(Contamination {
                fraction: 0.05,
                shift: 50.0,
            }),
            ..small(0.1)
        };
        let (dirty, truth) = generate_panel(&cfg).unwrap();
        let shifted = clean
            .0
            .y_columns()
            .iter()
            .flatten()
            .zip(dirty.y_columns().iter().flatten())
            .filter(|(a, b)| (*b - *a - 50.0).abs() < 1e-9)
            .count();
        assert_eq!(shifted, truth.contaminated);
        let share = shifted as f64 / 1200.0;
        assert!((share - 0.05).abs() < 0.02);
    }

    #[test]
    fn mse_definitions() {
        let est = ComponentEstimate::from_design_fit(0, &[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0], &[1.0; 3], 0.0).unwrap();
        let xs = [0.0, 0.5, 2.0];
        assert_eq!(mse_component(&est, |x| x + 1.0, &xs), 0.0);
        assert_eq!(mse_component(&est, |x| x, &xs), 1.0);
        let oracle = |t: &dyn Fn(f64) -> f64| {
            let mut s = 0.0;
            for &x in &xs {
                let e = est.evaluate(x) - t(x);
                s += e * e;
            }
            s / 3.0
        };
        assert_eq!(mse_component(&est, |x| x * x, &xs), oracle(&|x| x * x));
        assert_eq!(mse_alpha(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_alpha(&[3.0, 4.0], &[1.0, 2.0]).unwrap(), 4.0);
        assert!(matches!(
            mse_alpha(&[1.0], &[1.0, 2.0]),
            Err(AddfitError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn single_rep_median_is_the_rep() {
        let cfg = SimConfig {
            units: 300,
            reps: 1,
            ..small(0.2)
        };
        let fit = simulation_fit_config();
        let r = run_comparison(&cfg, &[Method::Integration], &fit).unwrap();
        let s = &r.methods[0];
        let rep = s.reps[0].as_ref().unwrap();
        assert_eq!(s.median_alpha, Some(rep.alpha));
        assert_eq!(s.median_components[1], Some(rep.components[1]));
        assert_eq!(r, run_comparison(&cfg, &[Method::Integration], &fit).unwrap());
        assert!(render_table(&[r]).contains("integration g=0.2"));
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }
}
