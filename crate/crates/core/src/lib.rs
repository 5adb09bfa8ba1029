//! Estimation of additive components in replicated panels
//! `Y_gj = α_g + m_j(X_gj) + ε_gj` with unknown unit effects `α_g`.
//!
//! Three estimators are provided: integration of varying-coefficient
//! derivative fits on differenced responses ([`integrator`]), backfitting of
//! the differenced additive model ([`backfit`]) and a pooled L1 derivative
//! fit ([`robust`]). [`pipeline::fit_panel`] runs any of them end to end and
//! [`simlab`] drives Monte Carlo comparisons.

pub mod backfit;
pub mod error;
pub mod grid;
pub mod integrator;
pub mod kernels;
pub mod panel;
pub mod pipeline;
pub mod robust;
pub mod simlab;
pub mod smoother;
pub mod varcoef;

pub use backfit::{
    backfit_jvariate, backfit_pair, make_star_panel, pooled_backfit, BackfitOptions, BackfitState, JointBackfit,
    PairBackfit, PooledBackfit, PooledBackfitter, StarPanel,
};
pub use error::{AddfitError, Result};
pub use grid::{EvalGrid, GridPolicy};
pub use integrator::{
    estimate_all_components, estimate_all_components_on, estimate_treatment_effects, integrate_component,
    ComponentEstimate, Coverage, TreatmentEffects,
};
pub use kernels::{KernelFamily, KernelMoments, KernelSpec};
pub use panel::PanelData;
pub use pipeline::{fit_panel, FitConfig, Method, PanelFit};
pub use robust::{robust_component, robust_fit_point, RobustComponent, RobustFitPoint, RobustOptions};
pub use simlab::{generate_panel, run_comparison, Centering, Contamination, MseReport, SimConfig, SimTruth};
pub use smoother::{backfit_norm_diagnostic, NormDiagnostic, SmootherOperator, SmootherPlan};
pub use varcoef::{
    average_derivative, component_derivative, derivative_estimate, fit_theta, make_diff_pair, DerivativeCurve,
    DiffPair, MissingPolicy, ThetaGrid,
};
