//! End-to-end debiased estimation: fold plan, cross-fitted propensities,
//! initial estimates, Riesz representers, and the moment solve, under one
//! configuration. Used by the CLI, the Monte Carlo harness, and the
//! diagnostics.

use serde::{Deserialize, Serialize};

use crate::crossfit::FoldedDesign;
use crate::data::{validate_dataset, Dataset};
use crate::dictionary::{DictionarySpec, Interactions};
use crate::error::{Error, Result};
use crate::estimator::{solve_theta_debiased, EstimateReport};
use crate::folds::{make_folds, FoldPlan};
use crate::nuisance::{clip_propensities, crossfit_gamma_prepared, LearnerConfig, NuisanceFit};
use crate::riesz::{fit_riesz_prepared, initial_theta_pairs, RieszConfig, RieszFit};

/// Covariate-side dictionary shape shared by both conditioning sets. The
/// pipeline derives the `(X, Z)` dictionary by adding examiner dummies and
/// the `X`-only dictionary by removing every examiner-dependent column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineDictionary {
    pub polynomial_degree: usize,
    pub interactions: Interactions,
    pub include_stratum_dummies: bool,
}

impl Default for PipelineDictionary {
    fn default() -> Self {
        PipelineDictionary {
            polynomial_degree: 1,
            interactions: Interactions::None,
            include_stratum_dummies: false,
        }
    }
}

impl PipelineDictionary {
    /// Dictionary for `E[T|X,Z]` and `alpha_1`: intercept, examiner dummies,
    /// covariates, interactions.
    pub fn spec_xz(&self, has_covariates: bool) -> DictionarySpec {
        DictionarySpec {
            include_intercept: true,
            include_examiner_dummies: true,
            include_stratum_dummies: self.include_stratum_dummies,
            include_covariates: has_covariates,
            polynomial_degree: self.polynomial_degree,
            interactions: self.interactions,
        }
    }

    /// Dictionary for `E[T|X]` and `alpha_2`: the same with every
    /// examiner-dependent column removed.
    pub fn spec_x(&self, has_covariates: bool) -> DictionarySpec {
        let interactions = match self.interactions {
            Interactions::None | Interactions::ExaminerByStratum => Interactions::None,
            Interactions::CovariatePairs | Interactions::Full => Interactions::CovariatePairs,
        };
        DictionarySpec {
            include_intercept: true,
            include_examiner_dummies: false,
            include_stratum_dummies: self.include_stratum_dummies,
            include_covariates: has_covariates,
            polynomial_degree: self.polynomial_degree,
            interactions,
        }
    }
}

/// Full pipeline configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Number of folds (needs at least 3 for the nested initial estimates).
    pub folds: usize,
    pub fold_seed: u64,
    /// Learner for the propensity regressions.
    pub learner: LearnerConfig,
    /// Penalty policy for the representer fits.
    pub riesz: RieszConfig,
    /// Propensity clipping bound (0 disables).
    pub clip_eps: f64,
    /// Confidence level for intervals.
    pub level: f64,
    pub dictionary: PipelineDictionary,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            folds: 5,
            fold_seed: 0,
            learner: LearnerConfig::lasso_cv(),
            riesz: RieszConfig::default(),
            clip_eps: 1e-3,
            level: 0.95,
            dictionary: PipelineDictionary::default(),
        }
    }
}

/// Everything a pipeline run produces, kept for reporting and diagnostics.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: EstimateReport,
    pub nuisance: NuisanceFit,
    pub riesz: RieszFit,
    pub plan: FoldPlan,
    pub clip_count: usize,
}

/// Runs the debiased pipeline end to end on a validated dataset.
pub fn run_debiased_pipeline(d: &Dataset, config: &PipelineConfig) -> Result<PipelineOutput> {
    let plan = make_folds(d.n(), config.folds, config.fold_seed)?;
    run_debiased_pipeline_planned(d, &plan, config)
}

/// As [`run_debiased_pipeline`] with a caller-provided fold plan.
pub fn run_debiased_pipeline_planned(
    d: &Dataset,
    plan: &FoldPlan,
    config: &PipelineConfig,
) -> Result<PipelineOutput> {
    let report = validate_dataset(d);
    if !report.ok() {
        let mut msg = String::from("invalid dataset:");
        for v in report.violations.iter().take(5) {
            msg.push_str(&format!(" {};", v.message));
        }
        return Err(Error::Parameter(msg));
    }
    if plan.n_folds() < 3 {
        return Err(Error::parameter(
            "the debiased pipeline needs at least 3 folds for its initial estimates",
        ));
    }
    let has_covariates = d.n_covariates() > 0;
    let spec1 = config.dictionary.spec_xz(has_covariates);
    let spec2 = config.dictionary.spec_x(has_covariates);

    let folded1 = FoldedDesign::new(d, plan, &spec1)?;
    let folded2 = FoldedDesign::new(d, plan, &spec2)?;

    let raw_nf = crossfit_gamma_prepared(d, plan, &folded1, &folded2, &config.learner)?;
    let (nuisance, clip_count) = clip_propensities(&raw_nf, config.clip_eps)?;
    let pairs = initial_theta_pairs(d, plan, &nuisance)?;
    let riesz = fit_riesz_prepared(d, plan, &folded1, &folded2, &pairs, &config.riesz)?;
    let report = solve_theta_debiased(d, &nuisance, &riesz, config.level)?;
    Ok(PipelineOutput {
        report,
        nuisance,
        riesz,
        plan: plan.clone(),
        clip_count,
    })
}
