//! Cross-fitted estimation of the treatment propensity regressions
//! `gamma_1 = E[T|X,Z]` and `gamma_2 = E[T|X]`, and their difference
//! `gamma = gamma_1 - gamma_2` (the estimated instrument).

use serde::{Deserialize, Serialize};

use crate::crossfit::{fit_excluding_fold, predict_rows, FoldedDesign};
use crate::data::Dataset;
use crate::dictionary::DictionarySpec;
use crate::error::{Error, Result};
use crate::folds::FoldPlan;
use crate::learners::PenaltyRule;

/// Which first-step learner runs inside the cross-fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LearnerConfig {
    /// Least squares; linearly dependent columns (e.g. an examiner dummy
    /// that is all-zero on a training complement) get coefficient zero.
    Ols,
    Ridge {
        lambda: f64,
    },
    Lasso {
        penalty: PenaltyRule,
        /// Multiplies the chosen penalty; 1.0 leaves it alone. Used to study
        /// amplified regularization bias.
        inflation: f64,
    },
}

impl LearnerConfig {
    pub fn lasso_cv() -> Self {
        LearnerConfig::Lasso {
            penalty: PenaltyRule::default(),
            inflation: 1.0,
        }
    }
}

/// Cross-fitted propensity predictions: `gamma1_hat[i]` and `gamma2_hat[i]`
/// come from models trained on the complement of observation `i`'s fold.
#[derive(Debug, Clone)]
pub struct NuisanceFit {
    pub gamma1_hat: Vec<f64>,
    pub gamma2_hat: Vec<f64>,
    pub fold_of: Vec<usize>,
    pub learner: LearnerConfig,
    /// Clipping bound applied so far (0 = unclipped).
    pub clip_eps: f64,
    /// Penalty used per fold for the `gamma_1` fit (empty for OLS).
    pub penalties1: Vec<f64>,
    /// Penalty used per fold for the `gamma_2` fit (empty for OLS).
    pub penalties2: Vec<f64>,
}

impl NuisanceFit {
    pub fn n(&self) -> usize {
        self.gamma1_hat.len()
    }
}

/// Cross-fits both propensity regressions: for each fold, `gamma_1` is fit
/// on the complement with the examiner-aware dictionary `spec1` and
/// `gamma_2` with the covariate-only dictionary `spec2`, then both predict
/// into the held-out fold. Predictions are not clipped here; see
/// [`clip_propensities`].
pub fn crossfit_gamma(
    d: &Dataset,
    plan: &FoldPlan,
    spec1: &DictionarySpec,
    spec2: &DictionarySpec,
    learner: &LearnerConfig,
) -> Result<NuisanceFit> {
    if !spec1.uses_examiner() {
        return Err(Error::parameter(
            "spec1 must include examiner information (dummies or interactions)",
        ));
    }
    if spec2.uses_examiner() {
        return Err(Error::parameter(
            "spec2 must exclude examiner information",
        ));
    }
    let folded1 = FoldedDesign::new(d, plan, spec1)?;
    let folded2 = FoldedDesign::new(d, plan, spec2)?;
    crossfit_gamma_prepared(d, plan, &folded1, &folded2, learner)
}

/// The combination of `(y, t)` that targets the treatment.
const T_COMBO: [f64; 2] = [0.0, 1.0];

pub(crate) fn crossfit_gamma_prepared(
    d: &Dataset,
    plan: &FoldPlan,
    folded1: &FoldedDesign,
    folded2: &FoldedDesign,
    learner: &LearnerConfig,
) -> Result<NuisanceFit> {
    let n = d.n();
    let mut gamma1_hat = vec![0.0; n];
    let mut gamma2_hat = vec![0.0; n];
    let mut penalties1 = Vec::new();
    let mut penalties2 = Vec::new();
    for l in 0..plan.n_folds() {
        let fit1 = fit_excluding_fold(folded1, plan, l, &T_COMBO, &d.t, learner)?;
        let fit2 = fit_excluding_fold(folded2, plan, l, &T_COMBO, &d.t, learner)?;
        let rows = plan.fold(l);
        for (&i, v) in rows.iter().zip(predict_rows(folded1, &fit1.fit, rows)) {
            gamma1_hat[i] = v;
        }
        for (&i, v) in rows.iter().zip(predict_rows(folded2, &fit2.fit, rows)) {
            gamma2_hat[i] = v;
        }
        if matches!(learner, LearnerConfig::Lasso { .. }) {
            penalties1.push(fit1.penalty);
            penalties2.push(fit2.penalty);
        }
    }
    Ok(NuisanceFit {
        gamma1_hat,
        gamma2_hat,
        fold_of: plan.fold_of(),
        learner: learner.clone(),
        clip_eps: 0.0,
        penalties1,
        penalties2,
    })
}

/// Clamps both prediction vectors to `[eps, 1 - eps]` and reports how many
/// entries moved. `eps = 0` is a pass-through.
pub fn clip_propensities(fit: &NuisanceFit, eps: f64) -> Result<(NuisanceFit, usize)> {
    if !(0.0..0.5).contains(&eps) {
        return Err(Error::parameter(format!(
            "clip eps must be in [0, 0.5), got {eps}"
        )));
    }
    let mut out = fit.clone();
    if eps == 0.0 {
        return Ok((out, 0));
    }
    let mut clipped = 0usize;
    for v in out.gamma1_hat.iter_mut().chain(out.gamma2_hat.iter_mut()) {
        let c = v.clamp(eps, 1.0 - eps);
        if c != *v {
            *v = c;
            clipped += 1;
        }
    }
    out.clip_eps = eps;
    Ok((out, clipped))
}

/// The estimated instrument `gamma_hat = gamma1_hat - gamma2_hat`.
pub fn gamma_hat(fit: &NuisanceFit) -> Vec<f64> {
    fit.gamma1_hat
        .iter()
        .zip(fit.gamma2_hat.iter())
        .map(|(&a, &b)| a - b)
        .collect()
}
