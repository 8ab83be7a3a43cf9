//! Regularized linear regression learners: OLS, ridge, and coordinate-descent
//! LASSO, plus K-fold penalty selection.
//!
//! All losses are `(1/(2m))`-normalized sums of squares so penalties are
//! comparable across sample sizes. Fits center internally (an unpenalized
//! intercept) exactly when the design contains a constant column; otherwise
//! the fit runs through the origin. Coefficients are always reported on the
//! raw scale of the design's columns, with constant columns folded into the
//! separate `intercept` field.

use serde::{Deserialize, Serialize};

use crate::dictionary::DesignMatrix;
use crate::error::{Error, Result};
use crate::folds::make_folds;
use crate::solver::{
    cv_choose_penalty, penalty_grid, solve_ols, solve_ridge, CdProblem, CvFold, LassoSolution,
    LinearProblem, SubsetMoments,
};

/// Which estimator produced a [`LinearFit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Ols,
    Ridge,
    Lasso,
}

/// A fitted linear model on the raw scale of its design columns.
#[derive(Debug, Clone)]
pub struct LinearFit {
    /// One coefficient per design column; constant and dropped columns are 0.
    pub coefficients: Vec<f64>,
    /// Constant term (0 for through-origin fits).
    pub intercept: f64,
    /// Penalty used (`0` for OLS).
    pub penalty: f64,
    pub method: FitMethod,
}

/// How a LASSO penalty is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyRule {
    /// Use this penalty as-is.
    Fixed(f64),
    /// K-fold cross-validation over a log-spaced grid from the largest
    /// relevant penalty down to `grid_min_ratio` times it.
    CrossValidated {
        grid_size: usize,
        grid_min_ratio: f64,
    },
}

impl Default for PenaltyRule {
    fn default() -> Self {
        PenaltyRule::CrossValidated {
            grid_size: DEFAULT_GRID_SIZE,
            grid_min_ratio: DEFAULT_GRID_MIN_RATIO,
        }
    }
}

pub const DEFAULT_GRID_SIZE: usize = 50;
pub const DEFAULT_GRID_MIN_RATIO: f64 = 1e-3;

fn full_problem(b: &DesignMatrix, target: &[f64]) -> Result<LinearProblem> {
    if target.len() != b.n_rows() {
        return Err(Error::parameter(format!(
            "target length {} != design rows {}",
            target.len(),
            b.n_rows()
        )));
    }
    if target.iter().any(|v| !v.is_finite()) {
        return Err(Error::parameter("target contains non-finite values"));
    }
    let rows: Vec<usize> = (0..b.n_rows()).collect();
    let m = SubsetMoments::compute(&b.values.view(), &[target], &rows);
    Ok(LinearProblem::from_moments(&m, &[1.0]))
}

/// Least-squares fit. Rank-deficient designs are an error naming the
/// dependent columns.
pub fn fit_ols(b: &DesignMatrix, target: &[f64]) -> Result<LinearFit> {
    let problem = full_problem(b, target)?;
    let raw = solve_ols(&problem, &b.constant, &b.names, true)?;
    Ok(LinearFit {
        coefficients: raw.coefficients,
        intercept: raw.intercept,
        penalty: 0.0,
        method: FitMethod::Ols,
    })
}

/// Ridge fit minimizing `(1/(2m))||y - B rho||^2 + (lambda/2)||rho||^2` over
/// non-constant columns.
pub fn fit_ridge(b: &DesignMatrix, target: &[f64], lambda: f64) -> Result<LinearFit> {
    if !lambda.is_finite() {
        return Err(Error::parameter("ridge lambda must be finite"));
    }
    let problem = full_problem(b, target)?;
    let raw = solve_ridge(&problem, &b.constant, lambda)?;
    Ok(LinearFit {
        coefficients: raw.coefficients,
        intercept: raw.intercept,
        penalty: lambda,
        method: FitMethod::Ridge,
    })
}

/// LASSO fit minimizing `(1/(2m))||y - B rho||^2 + r sum |rho_j|` over
/// non-constant columns by cyclic coordinate descent. Requires a
/// standardized design so the penalty is scale-free.
pub fn fit_lasso(b: &DesignMatrix, target: &[f64], r: f64) -> Result<LinearFit> {
    Ok(fit_lasso_solution(b, target, r)?.into_linear_fit(r))
}

impl LassoSolution {
    fn into_linear_fit(self, r: f64) -> LinearFit {
        LinearFit {
            coefficients: self.fit.coefficients,
            intercept: self.fit.intercept,
            penalty: r,
            method: FitMethod::Lasso,
        }
    }
}

pub(crate) fn fit_lasso_solution(
    b: &DesignMatrix,
    target: &[f64],
    r: f64,
) -> Result<LassoSolution> {
    if !(r >= 0.0) {
        return Err(Error::parameter(format!("lasso penalty must be >= 0, got {r}")));
    }
    if !b.standardized {
        return Err(Error::parameter(
            "fit_lasso requires a standardized design (build_dictionary with standardize=true)",
        ));
    }
    let problem = full_problem(b, target)?;
    CdProblem::new(&problem, &b.constant).solve(r)
}

/// Smallest penalty at which every penalized coefficient is exactly zero.
pub fn lasso_penalty_max(b: &DesignMatrix, target: &[f64]) -> Result<f64> {
    let problem = full_problem(b, target)?;
    Ok(CdProblem::new(&problem, &b.constant).penalty_max())
}

/// Default log-spaced penalty grid: `size` points from the penalty ceiling
/// down to [`DEFAULT_GRID_MIN_RATIO`] times it, descending.
pub fn lasso_penalty_grid(b: &DesignMatrix, target: &[f64], size: usize) -> Result<Vec<f64>> {
    let pmax = lasso_penalty_max(b, target)?;
    Ok(penalty_grid(pmax, size, DEFAULT_GRID_MIN_RATIO))
}

/// Chooses the grid value minimizing K-fold out-of-fold mean squared error
/// for the LASSO, ties broken toward the larger penalty. Deterministic given
/// the seed.
pub fn select_penalty_cv(
    b: &DesignMatrix,
    target: &[f64],
    grid: &[f64],
    k: usize,
    seed: u64,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::parameter("empty penalty grid"));
    }
    if k < 2 {
        return Err(Error::parameter(format!("cv fold count must be >= 2, got {k}")));
    }
    let n = b.n_rows();
    if target.len() != n {
        return Err(Error::parameter("target length does not match design"));
    }
    let plan = make_folds(n, k, seed)?;
    let rows_all: Vec<usize> = (0..n).collect();
    let total = SubsetMoments::compute(&b.values.view(), &[target], &rows_all);
    let fold_moments: Vec<SubsetMoments> = (0..k)
        .map(|l| SubsetMoments::compute(&b.values.view(), &[target], plan.fold(l)))
        .collect();
    let folds: Vec<CvFold<'_>> = (0..k)
        .map(|l| CvFold {
            train: LinearProblem::from_moments(&total.sub(&fold_moments[l]), &[1.0]),
            validation_rows: plan.fold(l),
        })
        .collect();
    cv_choose_penalty(&b.values.view(), target, &b.constant, &folds, grid)
}

/// Evaluates `intercept + B * coefficients` on the raw scale of `b`.
pub fn predict_linear(fit: &LinearFit, b: &DesignMatrix) -> Result<Vec<f64>> {
    if fit.coefficients.len() != b.n_cols() {
        return Err(Error::parameter(format!(
            "fit has {} coefficients but design has {} columns",
            fit.coefficients.len(),
            b.n_cols()
        )));
    }
    Ok(b
        .values
        .rows()
        .into_iter()
        .map(|row| {
            fit.intercept
                + row
                    .iter()
                    .zip(fit.coefficients.iter())
                    .map(|(&v, &c)| v * c)
                    .sum::<f64>()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::DesignMatrix;
    use ndarray::{Array1, Array2};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn design(values: Array2<f64>, standardize: bool) -> DesignMatrix {
        let names = (0..values.ncols()).map(|j| format!("c{j}")).collect();
        let d = DesignMatrix::from_raw(values, names);
        if standardize {
            d.into_standardized()
        } else {
            d
        }
    }

    #[test]
    fn ols_on_ones_column_is_the_mean() {
        let b = design(Array2::ones((3, 1)), false);
        let fit = fit_ols(&b, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(fit.coefficients, vec![0.0]);
        assert!((fit.intercept - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ols_interpolates_exact_linear_targets() {
        let values =
            Array2::from_shape_vec((4, 2), vec![1.0, 0.5, 2.0, -1.0, 3.0, 0.0, 4.0, 2.0]).unwrap();
        let target: Vec<f64> = values
            .rows()
            .into_iter()
            .map(|r| 2.0 * r[0] - 3.0 * r[1])
            .collect();
        let b = design(values, false);
        let fit = fit_ols(&b, &target).unwrap();
        let pred = predict_linear(&fit, &b).unwrap();
        for (p, t) in pred.iter().zip(target.iter()) {
            assert!((p - t).abs() <= 1e-10);
        }
    }

    #[test]
    fn ols_duplicated_column_is_singular() {
        let mut values = Array2::zeros((5, 2));
        for i in 0..5 {
            values[[i, 0]] = i as f64;
            values[[i, 1]] = i as f64;
        }
        let b = design(values, false);
        let err = fit_ols(&b, &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap_err();
        match err {
            Error::Singular { columns } => assert_eq!(columns, vec!["c1".to_string()]),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn ols_residuals_orthogonal_to_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let values = Array2::from_shape_fn((50, 3), |_| rng.gen_range(-1.0..1.0));
        let target: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = design(values, false);
        let fit = fit_ols(&b, &target).unwrap();
        let pred = predict_linear(&fit, &b).unwrap();
        let resid: Vec<f64> = target.iter().zip(pred.iter()).map(|(t, p)| t - p).collect();
        let scale: f64 = target.iter().map(|v| v * v).sum::<f64>().sqrt();
        for j in 0..3 {
            let dot: f64 = b
                .values
                .column(j)
                .iter()
                .zip(resid.iter())
                .map(|(&v, &r)| v * r)
                .sum();
            assert!(dot.abs() <= 1e-8 * scale.max(1.0));
        }
    }

    #[test]
    fn ridge_shrinks_monotonically() {
        let col = Array1::from_vec(vec![1.0, -1.0, 1.0, -1.0]);
        let values = col.clone().into_shape_with_order((4, 1)).unwrap();
        let target: Vec<f64> = col.iter().map(|&v| 2.0 * v).collect();
        let b = design(values, false);
        let mut last = f64::INFINITY;
        for lambda in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let fit = fit_ridge(&b, &target, lambda).unwrap();
            let coef = fit.coefficients[0];
            assert!(coef >= 0.0 && coef < last);
            last = coef;
        }
        assert!(last < 0.05);
    }

    #[test]
    fn ridge_matches_ols_in_the_small_lambda_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let values = Array2::from_shape_fn((60, 3), |_| rng.gen_range(-1.0..1.0));
        let target: Vec<f64> = (0..60).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = design(values, false);
        let ols = fit_ols(&b, &target).unwrap();
        let ridge = fit_ridge(&b, &target, 1e-10).unwrap();
        for (a, r) in ols.coefficients.iter().zip(ridge.coefficients.iter()) {
            assert!((a - r).abs() <= 1e-6);
        }
    }

    #[test]
    fn lasso_zero_target_gives_zero_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let values = Array2::from_shape_fn((30, 4), |_| rng.gen_range(-1.0..1.0));
        let b = design(values, true);
        let fit = fit_lasso(&b, &vec![0.0; 30], 0.1).unwrap();
        assert!(fit.coefficients.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn lasso_penalty_max_zeroes_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let values = Array2::from_shape_fn((40, 5), |_| rng.gen_range(-1.0..1.0));
        let target: Vec<f64> = (0..40).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b = design(values, true);
        let pmax = lasso_penalty_max(&b, &target).unwrap();
        let fit = fit_lasso(&b, &target, pmax).unwrap();
        assert!(fit.coefficients.iter().all(|&c| c == 0.0));
        // Just below the ceiling, something moves.
        let fit = fit_lasso(&b, &target, pmax * 0.99).unwrap();
        assert!(fit.coefficients.iter().any(|&c| c != 0.0));
    }

    #[test]
    fn lasso_with_zero_penalty_matches_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let values = Array2::from_shape_fn((80, 4), |_| rng.gen_range(-1.0..1.0));
        let target: Vec<f64> = (0..80).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b = design(values, true);
        let ols = fit_ols(&b, &target).unwrap();
        let lasso = fit_lasso(&b, &target, 0.0).unwrap();
        for (a, l) in ols.coefficients.iter().zip(lasso.coefficients.iter()) {
            assert!((a - l).abs() <= 1e-6, "{a} vs {l}");
        }
    }

    #[test]
    fn lasso_kkt_conditions_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let values = Array2::from_shape_fn((60, 6), |_| rng.gen_range(-1.0..1.0));
        let target: Vec<f64> = (0..60).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b = design(values, true);
        let r = 0.05;
        let fit = fit_lasso(&b, &target, r).unwrap();
        let pred = predict_linear(&fit, &b).unwrap();
        let m = 60.0;
        for j in 0..6 {
            let grad: f64 = b
                .values
                .column(j)
                .iter()
                .zip(target.iter().zip(pred.iter()))
                .map(|(&v, (&t, &p))| v * (t - p))
                .sum::<f64>()
                / m;
            assert!(grad.abs() <= r + 1e-6, "kkt bound violated at {j}: {grad}");
            let coef = fit.coefficients[j];
            if coef != 0.0 {
                assert!(
                    (grad - r * coef.signum()).abs() <= 1e-6,
                    "kkt equality violated at {j}: grad {grad}, coef {coef}"
                );
            }
        }
    }

    #[test]
    fn lasso_objective_decreases_across_sweeps() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let values = Array2::from_shape_fn((50, 8), |_| rng.gen_range(-1.0..1.0));
        let target: Vec<f64> = (0..50).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b = design(values, true);
        let sol = fit_lasso_solution(&b, &target, 0.02).unwrap();
        for w in sol.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "objective increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn cv_with_single_grid_value_returns_it() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let values = Array2::from_shape_fn((40, 3), |_| rng.gen_range(-1.0..1.0));
        let target: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = design(values, true);
        let chosen = select_penalty_cv(&b, &target, &[0.3], 4, 1).unwrap();
        assert_eq!(chosen, 0.3);
    }

    #[test]
    fn cv_prefers_the_all_zero_model_on_pure_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let n = 500;
        let values = Array2::from_shape_fn((n, 10), |_| rng.gen_range(-1.0..1.0f64));
        let target: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let b = design(values, true);
        let pmax = lasso_penalty_max(&b, &target).unwrap();
        let chosen = select_penalty_cv(&b, &target, &[0.001, pmax], 5, 7).unwrap();
        assert_eq!(chosen, pmax);
    }

    #[test]
    fn cv_is_deterministic_given_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let values = Array2::from_shape_fn((100, 5), |_| rng.gen_range(-1.0..1.0));
        let target: Vec<f64> = (0..100).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b = design(values, true);
        let grid = lasso_penalty_grid(&b, &target, 20).unwrap();
        let a = select_penalty_cv(&b, &target, &grid, 5, 99).unwrap();
        let c = select_penalty_cv(&b, &target, &grid, 5, 99).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn cv_rejects_empty_grid() {
        let b = design(Array2::ones((10, 1)), false);
        let target = vec![0.0; 10];
        assert!(select_penalty_cv(&b, &target, &[], 3, 0).is_err());
    }

    #[test]
    fn predict_constant_fit() {
        let b = design(Array2::ones((4, 1)), false);
        let fit = LinearFit {
            coefficients: vec![0.0],
            intercept: 3.5,
            penalty: 0.0,
            method: FitMethod::Ols,
        };
        assert_eq!(predict_linear(&fit, &b).unwrap(), vec![3.5; 4]);
    }

    #[test]
    fn predict_identity_column() {
        let values = Array2::from_shape_vec((3, 1), vec![1.0, 2.0, 3.0]).unwrap();
        let b = design(values, false);
        let fit = LinearFit {
            coefficients: vec![1.0],
            intercept: 0.0,
            penalty: 0.0,
            method: FitMethod::Ols,
        };
        assert_eq!(predict_linear(&fit, &b).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn predict_dimension_mismatch_is_an_error() {
        let b = design(Array2::ones((4, 2)), false);
        let fit = LinearFit {
            coefficients: vec![1.0],
            intercept: 0.0,
            penalty: 0.0,
            method: FitMethod::Ols,
        };
        assert!(predict_linear(&fit, &b).is_err());
    }

    #[test]
    fn lasso_requires_standardized_design() {
        let values = Array2::from_shape_vec((3, 1), vec![1.0, 2.0, 3.0]).unwrap();
        let b = design(values, false);
        assert!(fit_lasso(&b, &[1.0, 2.0, 3.0], 0.1).is_err());
    }

    #[test]
    fn row_order_does_not_change_penalized_fits() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let n = 30;
        let values = Array2::from_shape_fn((n, 4), |_| rng.gen_range(-1.0..1.0));
        let target: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut rng);
        let values_perm = Array2::from_shape_fn((n, 4), |(i, j)| values[[perm[i], j]]);
        let target_perm: Vec<f64> = perm.iter().map(|&i| target[i]).collect();

        let b = design(values, true);
        let bp = design(values_perm, true);
        let ridge_a = fit_ridge(&b, &target, 0.3).unwrap();
        let ridge_b = fit_ridge(&bp, &target_perm, 0.3).unwrap();
        for (a, c) in ridge_a.coefficients.iter().zip(ridge_b.coefficients.iter()) {
            assert!((a - c).abs() <= 1e-8);
        }
        let lasso_a = fit_lasso(&b, &target, 0.05).unwrap();
        let lasso_b = fit_lasso(&bp, &target_perm, 0.05).unwrap();
        for (a, c) in lasso_a.coefficients.iter().zip(lasso_b.coefficients.iter()) {
            assert!((a - c).abs() <= 1e-8);
        }
    }
}
