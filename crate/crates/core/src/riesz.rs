//! Automatic estimation of the Riesz representers of the score's nuisance
//! directions.
//!
//! The representer for the `gamma_1` direction is the regression of the
//! residualized outcome on functions of `(X, Z)`; the one for the `gamma_2`
//! direction equals minus the analogous regression on functions of `X`, and
//! the minus sign is folded into `alpha_2` so the orthogonal score is a plain
//! sum of its three terms. Both are learned by L1-penalized regression of a
//! pseudo-outcome `y - theta_tilde * t` on a dictionary, where the initial
//! estimate `theta_tilde` comes from the identifying moment alone on nested
//! fold complements.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::crossfit::{fit_excluding_fold, predict_rows, FoldedDesign};
use crate::data::Dataset;
use crate::dictionary::DictionarySpec;
use crate::error::{Error, Result};
use crate::folds::FoldPlan;
use crate::learners::{FitMethod, LinearFit, PenaltyRule};
use crate::nuisance::{gamma_hat, LearnerConfig, NuisanceFit};

/// Penalty policy for the two representer fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RieszConfig {
    pub penalty: PenaltyRule,
    /// Multiplies the chosen penalty (1.0 = no inflation).
    pub inflation: f64,
}

impl Default for RieszConfig {
    fn default() -> Self {
        RieszConfig {
            penalty: PenaltyRule::default(),
            inflation: 1.0,
        }
    }
}

/// Cross-fitted Riesz representer estimates. `alpha1_hat[i]` and
/// `alpha2_hat[i]` are out-of-fold predictions; `fold_fits1[l]` /
/// `fold_fits2[l]` carry each fold's dictionary coefficients and penalty.
#[derive(Debug, Clone)]
pub struct RieszFit {
    pub alpha1_hat: Vec<f64>,
    pub alpha2_hat: Vec<f64>,
    pub fold_of: Vec<usize>,
    pub fold_fits1: Vec<LinearFit>,
    pub fold_fits2: Vec<LinearFit>,
    /// Initial estimates by hold-out fold pair `(l, l2)` with `l < l2`.
    pub theta_tilde: BTreeMap<(usize, usize), f64>,
    /// The pseudo-outcome coefficient actually used for each fold's fit:
    /// the average of `theta_tilde` over pairs involving that fold.
    pub theta_fold: Vec<f64>,
}

impl RieszFit {
    pub fn n(&self) -> usize {
        self.alpha1_hat.len()
    }

    /// Penalty used for the fold-`l` representer fit on the `(X, Z)`
    /// dictionary.
    pub fn penalty1(&self, l: usize) -> f64 {
        self.fold_fits1[l].penalty
    }

    pub fn penalty2(&self, l: usize) -> f64 {
        self.fold_fits2[l].penalty
    }
}

/// Initial estimates of the target parameter from the identifying moment
/// alone: for each fold pair, `theta_tilde = mean(y * gamma_hat) /
/// mean(t * gamma_hat)` over observations outside both folds. Requires at
/// least three folds so the complements are nonempty.
pub fn initial_theta_pairs(
    d: &Dataset,
    plan: &FoldPlan,
    nf: &NuisanceFit,
) -> Result<BTreeMap<(usize, usize), f64>> {
    let l_count = plan.n_folds();
    if l_count < 3 {
        return Err(Error::parameter(format!(
            "initial estimates need at least 3 folds, got {l_count}"
        )));
    }
    if nf.n() != d.n() {
        return Err(Error::parameter("nuisance fit does not match dataset"));
    }
    let gam = gamma_hat(nf);
    let mut out = BTreeMap::new();
    for l in 0..l_count {
        for l2 in (l + 1)..l_count {
            let rows = plan.complement_pair(l, l2);
            let m = rows.len() as f64;
            let mut num = 0.0;
            let mut den = 0.0;
            for &i in &rows {
                num += d.y[i] * gam[i];
                den += d.t[i] * gam[i];
            }
            num /= m;
            den /= m;
            if den.abs() < 1e-10 {
                return Err(Error::weak_identification(format!(
                    "initial estimate for fold pair ({l}, {l2}): |mean(t * gamma_hat)| = {:.3e} < 1e-10",
                    den.abs()
                )));
            }
            out.insert((l, l2), num / den);
        }
    }
    Ok(out)
}

/// Fits both representers fold by fold. For fold `l` the pseudo-outcome
/// coefficient is the average of `theta_tilde[(l, l2)]` over `l2 != l`;
/// `alpha_1` regresses `y - theta * t` on the `(X, Z)` dictionary over the
/// complement of `l`, `alpha_2` regresses `-(y - theta * t)` on the `X`-only
/// dictionary, and both predict into fold `l`.
pub fn fit_riesz(
    d: &Dataset,
    plan: &FoldPlan,
    spec1: &DictionarySpec,
    spec2: &DictionarySpec,
    theta_tilde: &BTreeMap<(usize, usize), f64>,
    config: &RieszConfig,
) -> Result<RieszFit> {
    if !spec1.uses_examiner() {
        return Err(Error::parameter(
            "spec1 must include examiner information (dummies or interactions)",
        ));
    }
    if spec2.uses_examiner() {
        return Err(Error::parameter("spec2 must exclude examiner information"));
    }
    let folded1 = FoldedDesign::new(d, plan, spec1)?;
    let folded2 = FoldedDesign::new(d, plan, spec2)?;
    fit_riesz_prepared(d, plan, &folded1, &folded2, theta_tilde, config)
}

pub(crate) fn fit_riesz_prepared(
    d: &Dataset,
    plan: &FoldPlan,
    folded1: &FoldedDesign,
    folded2: &FoldedDesign,
    theta_tilde: &BTreeMap<(usize, usize), f64>,
    config: &RieszConfig,
) -> Result<RieszFit> {
    let l_count = plan.n_folds();
    for l in 0..l_count {
        for l2 in (l + 1)..l_count {
            if !theta_tilde.contains_key(&(l, l2)) {
                return Err(Error::parameter(format!(
                    "theta_tilde is missing fold pair ({l}, {l2})"
                )));
            }
        }
    }
    let n = d.n();
    let learner = LearnerConfig::Lasso {
        penalty: config.penalty,
        inflation: config.inflation,
    };
    let mut alpha1_hat = vec![0.0; n];
    let mut alpha2_hat = vec![0.0; n];
    let mut fold_fits1 = Vec::with_capacity(l_count);
    let mut fold_fits2 = Vec::with_capacity(l_count);
    let mut theta_fold = Vec::with_capacity(l_count);
    for l in 0..l_count {
        let theta: f64 = (0..l_count)
            .filter(|&l2| l2 != l)
            .map(|l2| theta_tilde[&(l.min(l2), l.max(l2))])
            .sum::<f64>()
            / (l_count - 1) as f64;
        theta_fold.push(theta);

        // alpha_1 target: y - theta * t; alpha_2 target: -(y - theta * t).
        let pseudo1: Vec<f64> = d.y.iter().zip(d.t.iter()).map(|(&y, &t)| y - theta * t).collect();
        let pseudo2: Vec<f64> = pseudo1.iter().map(|&u| -u).collect();

        let fit1 = fit_excluding_fold(folded1, plan, l, &[1.0, -theta], &pseudo1, &learner)?;
        let fit2 = fit_excluding_fold(folded2, plan, l, &[-1.0, theta], &pseudo2, &learner)?;
        let rows = plan.fold(l);
        for (&i, v) in rows.iter().zip(predict_rows(folded1, &fit1.fit, rows)) {
            alpha1_hat[i] = v;
        }
        for (&i, v) in rows.iter().zip(predict_rows(folded2, &fit2.fit, rows)) {
            alpha2_hat[i] = v;
        }
        fold_fits1.push(LinearFit {
            coefficients: fit1.fit.coefficients,
            intercept: fit1.fit.intercept,
            penalty: fit1.penalty,
            method: FitMethod::Lasso,
        });
        fold_fits2.push(LinearFit {
            coefficients: fit2.fit.coefficients,
            intercept: fit2.fit.intercept,
            penalty: fit2.penalty,
            method: FitMethod::Lasso,
        });
    }
    Ok(RieszFit {
        alpha1_hat,
        alpha2_hat,
        fold_of: plan.fold_of(),
        fold_fits1,
        fold_fits2,
        theta_tilde: theta_tilde.clone(),
        theta_fold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::Interactions;
    use crate::folds::make_folds;
    use ndarray::Array2;

    fn nf_with_gamma(gamma1: Vec<f64>, n: usize) -> NuisanceFit {
        NuisanceFit {
            gamma1_hat: gamma1,
            gamma2_hat: vec![0.0; n],
            fold_of: vec![0; n],
            learner: LearnerConfig::Ols,
            clip_eps: 0.0,
            penalties1: vec![],
            penalties2: vec![],
        }
    }

    fn spec1() -> DictionarySpec {
        DictionarySpec {
            include_intercept: true,
            include_examiner_dummies: true,
            include_stratum_dummies: false,
            include_covariates: false,
            polynomial_degree: 1,
            interactions: Interactions::None,
        }
    }

    fn spec2() -> DictionarySpec {
        DictionarySpec {
            include_intercept: true,
            include_examiner_dummies: false,
            include_stratum_dummies: false,
            include_covariates: false,
            polynomial_degree: 1,
            interactions: Interactions::None,
        }
    }

    #[test]
    fn pair_estimate_uses_only_the_remaining_fold() {
        // With L = 3 the complement of folds (0, 1) is exactly fold 2. Build
        // the data fold by fold so each fold holds one (y=1, t=1, gamma=0.5)
        // and one (y=0, t=0, gamma=-0.5) case: the hand value is
        // (0.5 + 0) / (0.5 + 0) = 1 regardless of the fold plan.
        let n = 6;
        let plan = make_folds(n, 3, 1).unwrap();
        let mut y = vec![0.0; n];
        let mut t = vec![0.0; n];
        let mut gamma1 = vec![0.0; n];
        for l in 0..3 {
            let rows = plan.fold(l);
            y[rows[0]] = 1.0;
            t[rows[0]] = 1.0;
            gamma1[rows[0]] = 0.5;
            gamma1[rows[1]] = -0.5;
        }
        let z: Vec<u64> = (0..n).map(|i| (i % 2 + 1) as u64).collect();
        let d = Dataset::new(y, t, Array2::zeros((n, 0)), z, None).unwrap();
        let nf = nf_with_gamma(gamma1, n);
        let pairs = initial_theta_pairs(&d, &plan, &nf).unwrap();
        for l in 0..3 {
            for l2 in (l + 1)..3 {
                assert!((pairs[&(l, l2)] - 1.0).abs() <= 1e-12);
            }
        }
        // Altering rows inside folds 0 and 1 must not change theta_tilde(0,1).
        let mut d2 = d.clone();
        for &i in plan.fold(0).iter().chain(plan.fold(1)) {
            d2.y[i] += 10.0;
        }
        let pairs2 = initial_theta_pairs(&d2, &plan, &nf).unwrap();
        assert_eq!(pairs[&(0, 1)], pairs2[&(0, 1)]);
        assert_ne!(pairs[&(0, 2)], pairs2[&(0, 2)]);
    }

    #[test]
    fn proportional_outcome_gives_constant_theta_tilde() {
        let n = 9;
        let c = 3.0;
        let t: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let y: Vec<f64> = t.iter().map(|&ti| c * ti).collect();
        let d = Dataset::new(
            y,
            t.clone(),
            Array2::zeros((n, 0)),
            (0..n).map(|i| (i % 3 + 1) as u64).collect(),
            None,
        )
        .unwrap();
        let plan = make_folds(n, 3, 2).unwrap();
        let gamma1: Vec<f64> = t.iter().map(|&ti| 0.3 + 0.4 * ti).collect();
        let nf = nf_with_gamma(gamma1, n);
        let pairs = initial_theta_pairs(&d, &plan, &nf).unwrap();
        for (_, theta) in pairs {
            assert!((theta - c).abs() <= 1e-12);
        }
    }

    #[test]
    fn two_folds_are_rejected() {
        let d = Dataset::new(
            vec![1.0, 0.0, 1.0, 0.0],
            vec![1.0, 0.0, 1.0, 0.0],
            Array2::zeros((4, 0)),
            vec![1, 2, 1, 2],
            None,
        )
        .unwrap();
        let plan = make_folds(4, 2, 1).unwrap();
        let nf = nf_with_gamma(vec![0.5; 4], 4);
        assert!(matches!(
            initial_theta_pairs(&d, &plan, &nf),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn zero_instrument_is_weak_identification() {
        let n = 6;
        let d = Dataset::new(
            vec![1.0; n],
            vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
            Array2::zeros((n, 0)),
            vec![1, 2, 1, 2, 1, 2],
            None,
        )
        .unwrap();
        let plan = make_folds(n, 3, 1).unwrap();
        let nf = nf_with_gamma(vec![0.0; n], n);
        assert!(matches!(
            initial_theta_pairs(&d, &plan, &nf),
            Err(Error::WeakIdentification(_))
        ));
    }

    #[test]
    fn zero_pseudo_outcome_gives_zero_representers() {
        // y = c * t exactly, so theta_tilde = c for every pair and the
        // pseudo-outcome vanishes identically.
        let n = 12;
        let c = 2.0;
        let t: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let y: Vec<f64> = t.iter().map(|&ti| c * ti).collect();
        let d = Dataset::new(
            y,
            t.clone(),
            Array2::zeros((n, 0)),
            (0..n).map(|i| (i % 3 + 1) as u64).collect(),
            None,
        )
        .unwrap();
        let plan = make_folds(n, 3, 4).unwrap();
        let gamma1: Vec<f64> = t.iter().map(|&ti| 0.3 + 0.4 * ti).collect();
        let nf = nf_with_gamma(gamma1, n);
        let pairs = initial_theta_pairs(&d, &plan, &nf).unwrap();
        let rf = fit_riesz(&d, &plan, &spec1(), &spec2(), &pairs, &RieszConfig::default()).unwrap();
        for i in 0..n {
            assert!(rf.alpha1_hat[i].abs() <= 1e-10, "alpha1[{i}] = {}", rf.alpha1_hat[i]);
            assert!(rf.alpha2_hat[i].abs() <= 1e-10, "alpha2[{i}] = {}", rf.alpha2_hat[i]);
        }
        for l in 0..3 {
            assert!((rf.theta_fold[l] - c).abs() <= 1e-12);
        }
    }

    #[test]
    fn missing_pair_is_rejected() {
        let n = 9;
        let t: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let d = Dataset::new(
            t.clone(),
            t.clone(),
            Array2::zeros((n, 0)),
            (0..n).map(|i| (i % 3 + 1) as u64).collect(),
            None,
        )
        .unwrap();
        let plan = make_folds(n, 3, 2).unwrap();
        let mut pairs = BTreeMap::new();
        pairs.insert((0, 1), 1.0);
        assert!(matches!(
            fit_riesz(&d, &plan, &spec1(), &spec2(), &pairs, &RieszConfig::default()),
            Err(Error::Parameter(_))
        ));
    }
}
