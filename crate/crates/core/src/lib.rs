//! Debiased estimation for examiner (judge leniency) instrumental-variable
//! designs.
//!
//! The estimand is the IV ratio `theta = E[Y gamma] / E[T gamma]` where
//! `gamma = E[T|X,Z] - E[T|X]` is an examiner's conditionally ignorable
//! propensity to treat. The crate estimates the two propensity regressions
//! with cross-fitted learners, learns the Riesz representers of the score's
//! nuisance directions automatically by penalized regression, and solves the
//! debiased (Neyman-orthogonal) sample moment for `theta` with plug-in
//! asymptotic inference. Baseline estimators (plug-in, oracle, leave-one-out
//! examiner means, jackknife-residualized UJIVE) and a simulation harness
//! with closed-form oracles support head-to-head comparisons and numerical
//! verification of the orthogonality, robustness, and rate properties the
//! debiased construction is supposed to deliver.
//!
//! Modules:
//! - [`data`], [`folds`], [`dictionary`]: data model, fold plans, feature maps
//! - [`learners`]: OLS / ridge / coordinate-descent LASSO with CV penalties
//! - [`nuisance`]: cross-fitted propensity regressions
//! - [`riesz`]: automatic Riesz representer estimation
//! - [`estimator`]: the debiased solve, inference, and baselines
//! - [`diagnostics`]: orthogonality / robustness / affinity / rate checks
//! - [`sim`]: data-generating process with oracles and the Monte Carlo loop
//! - [`pipeline`]: end-to-end configuration shared by the CLI and harness

mod crossfit;
pub mod data;
pub mod diagnostics;
pub mod dictionary;
pub mod error;
pub mod estimator;
pub mod folds;
pub mod learners;
mod linalg;
pub mod nuisance;
pub mod pipeline;
pub mod riesz;
pub mod sim;
mod solver;

pub use data::{validate_dataset, Dataset, ValidationReport, Violation};
pub use diagnostics::{
    affinity_check, affinity_check_quadratic_fixture, neyman_derivative_check, rate_product_scan,
    robustness_suite, DeltaFunction, DiagnosticResult, PerturbTarget, RateScan, RateScanRow,
};
pub use dictionary::{build_dictionary, DesignMatrix, DictionarySpec, Interactions};
pub use error::{Error, Result};
pub use estimator::{
    debiased_psi_bar, estimate_loo_jive, estimate_oracle, estimate_plugin, estimate_ujive_linear,
    estimate_variance, solve_theta_debiased, EstimateReport, EstimatorMethod,
};
pub use folds::{make_folds, FoldPlan};
pub use learners::{
    fit_lasso, fit_ols, fit_ridge, lasso_penalty_grid, lasso_penalty_max, predict_linear,
    select_penalty_cv, FitMethod, LinearFit, PenaltyRule,
};
pub use nuisance::{clip_propensities, crossfit_gamma, gamma_hat, LearnerConfig, NuisanceFit};
pub use pipeline::{
    run_debiased_pipeline, PipelineConfig, PipelineDictionary, PipelineOutput,
};
pub use riesz::{fit_riesz, initial_theta_pairs, RieszConfig, RieszFit};
pub use sim::{
    draw_dgp, oracle_alpha, oracle_gamma, run_monte_carlo, run_monte_carlo_with, DgpConfig,
    DgpDraw, McEstimatorSummary, McSummary,
};
