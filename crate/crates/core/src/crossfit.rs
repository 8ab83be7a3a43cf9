//! Shared cross-fitting plumbing: per-fold design moments and per-fold
//! penalized fits with fold-reusing penalty cross-validation.

use ndarray::ArrayView2;

use crate::data::Dataset;
use crate::dictionary::{build_dictionary, DesignMatrix, DictionarySpec};
use crate::error::{Error, Result};
use crate::folds::FoldPlan;
use crate::learners::PenaltyRule;
use crate::nuisance::LearnerConfig;
use crate::solver::{
    cv_choose_penalty, penalty_grid, solve_ols, solve_ridge, CdProblem, CvFold, LinearProblem,
    RawFit, SubsetMoments,
};

/// A raw (unstandardized) dictionary over a dataset together with per-fold
/// cross moments against the targets `[y, t]`. Training-complement moments
/// are set differences, so every fold's fit costs `O(p^2)` beyond the single
/// up-front pass.
pub(crate) struct FoldedDesign {
    pub design: DesignMatrix,
    pub fold_moments: Vec<SubsetMoments>,
    pub total: SubsetMoments,
}

impl FoldedDesign {
    pub fn new(d: &Dataset, plan: &FoldPlan, spec: &DictionarySpec) -> Result<Self> {
        if plan.n() != d.n() {
            return Err(Error::parameter(format!(
                "fold plan covers {} observations but dataset has {}",
                plan.n(),
                d.n()
            )));
        }
        if plan.folds().iter().any(|f| f.is_empty()) {
            return Err(Error::parameter("fold plan contains an empty fold"));
        }
        let design = build_dictionary(d, spec, false)?;
        let targets: [&[f64]; 2] = [&d.y, &d.t];
        let fold_moments: Vec<SubsetMoments> = plan
            .folds()
            .iter()
            .map(|rows| SubsetMoments::compute(&design.values.view(), &targets, rows))
            .collect();
        let mut total = fold_moments[0].clone();
        for fm in &fold_moments[1..] {
            total = total.add(fm);
        }
        Ok(FoldedDesign {
            design,
            fold_moments,
            total,
        })
    }

    /// Moments over all observations outside the listed folds.
    pub fn training(&self, exclude: &[usize]) -> SubsetMoments {
        let mut m = self.total.clone();
        for &l in exclude {
            m = m.sub(&self.fold_moments[l]);
        }
        m
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.design.values.view()
    }
}

/// A fold-level fitted regression: raw-scale coefficients plus the penalty
/// that produced them.
pub(crate) struct FoldFit {
    pub fit: RawFit,
    pub penalty: f64,
}

/// Fits the learner on the complement of `fold`, with the target given as a
/// linear combination `combo = (a, b)` of `(y, t)`. For cross-validated
/// penalties the inner folds are the remaining folds of the plan, so the
/// held-out fold never influences its own model. `target_values` must
/// materialize the same combination for validation scoring.
pub(crate) fn fit_excluding_fold(
    folded: &FoldedDesign,
    plan: &FoldPlan,
    fold: usize,
    combo: &[f64],
    target_values: &[f64],
    learner: &LearnerConfig,
) -> Result<FoldFit> {
    let train = folded.training(&[fold]);
    let problem = LinearProblem::from_moments(&train, combo);
    let constant = &folded.design.constant;
    match learner {
        LearnerConfig::Ols => {
            let fit = solve_ols(&problem, constant, &folded.design.names, false)?;
            Ok(FoldFit { fit, penalty: 0.0 })
        }
        LearnerConfig::Ridge { lambda } => {
            let fit = solve_ridge(&problem, constant, *lambda)?;
            Ok(FoldFit {
                fit,
                penalty: *lambda,
            })
        }
        LearnerConfig::Lasso { penalty, inflation } => {
            let chosen = match penalty {
                PenaltyRule::Fixed(r) => *r,
                PenaltyRule::CrossValidated {
                    grid_size,
                    grid_min_ratio,
                } => {
                    let pmax = CdProblem::new(&problem, constant).penalty_max();
                    let grid = penalty_grid(pmax, *grid_size, *grid_min_ratio);
                    let inner: Vec<CvFold<'_>> = (0..plan.n_folds())
                        .filter(|&l2| l2 != fold)
                        .map(|l2| CvFold {
                            train: LinearProblem::from_moments(
                                &folded.training(&[fold, l2]),
                                combo,
                            ),
                            validation_rows: plan.fold(l2),
                        })
                        .collect();
                    cv_choose_penalty(
                        &folded.values(),
                        target_values,
                        constant,
                        &inner,
                        &grid,
                    )?
                }
            };
            let r = chosen * inflation;
            let sol = CdProblem::new(&problem, constant).solve(r)?;
            Ok(FoldFit {
                fit: sol.fit,
                penalty: r,
            })
        }
    }
}

/// Evaluates `intercept + row * coefficients` for the listed rows.
pub(crate) fn predict_rows(folded: &FoldedDesign, fit: &RawFit, rows: &[usize]) -> Vec<f64> {
    rows.iter()
        .map(|&i| {
            let mut v = fit.intercept;
            for (j, &c) in fit.coefficients.iter().enumerate() {
                if c != 0.0 {
                    v += c * folded.design.values[[i, j]];
                }
            }
            v
        })
        .collect()
}
