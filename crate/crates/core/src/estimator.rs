//! The debiased method-of-moments solve, asymptotic inference, and baseline
//! estimators (plug-in, oracle, leave-one-out examiner means, and the
//! jackknife-residualized linear UJIVE).
//!
//! All moment sums are n-normalized sample averages; the normalization
//! cancels in the ratio estimates and in the variance.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::DroppingCholesky;
use crate::nuisance::{gamma_hat, NuisanceFit};
use crate::riesz::RieszFit;

const WEAK_ID_TOL: f64 = 1e-10;

/// Which estimator produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMethod {
    Debiased,
    Plugin,
    Oracle,
    LooJive,
    UjiveLinear,
}

/// Point estimate with inference. Serializes to a flat JSON object with keys
/// `{method, theta_hat, se, ci_low, ci_high, q_hat, n, level}`; the
/// per-observation moment values stay in memory only.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub method: EstimatorMethod,
    pub theta_hat: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub q_hat: f64,
    pub n: usize,
    pub level: f64,
    /// Per-observation moment values at `theta_hat` (the orthogonal score for
    /// the debiased method, the identifying moment for the baselines).
    #[serde(skip)]
    pub psi: Vec<f64>,
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for x in v {
        sum += x;
        count += 1;
    }
    sum / count as f64
}

fn check_level(level: f64) -> Result<f64> {
    if !(0.0 < level && level < 1.0) {
        return Err(Error::parameter(format!(
            "confidence level must be in (0, 1), got {level}"
        )));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(1.0 - (1.0 - level) / 2.0))
}

fn check_alignment(d: &Dataset, nf: &NuisanceFit, rf: Option<&RieszFit>) -> Result<()> {
    if nf.n() != d.n() {
        return Err(Error::parameter(format!(
            "nuisance fit has {} observations, dataset has {}",
            nf.n(),
            d.n()
        )));
    }
    if let Some(rf) = rf {
        if rf.n() != d.n() {
            return Err(Error::parameter(format!(
                "riesz fit has {} observations, dataset has {}",
                rf.n(),
                d.n()
            )));
        }
        if rf.fold_of != nf.fold_of {
            return Err(Error::parameter(
                "nuisance and riesz fits come from different fold plans",
            ));
        }
    }
    Ok(())
}

/// The orthogonal score at `theta` for observation `i`.
#[inline]
fn psi_i(
    theta: f64,
    y: f64,
    t: f64,
    g1: f64,
    g2: f64,
    a1: f64,
    a2: f64,
) -> f64 {
    (y - theta * t) * (g1 - g2) + a1 * (t - g1) + a2 * (t - g2)
}

/// Average orthogonal score `(1/n) sum_i psi_i(theta)`. Affine in `theta`
/// with slope `-(1/n) sum t_i gamma_hat_i`.
pub fn debiased_psi_bar(
    theta: f64,
    d: &Dataset,
    nf: &NuisanceFit,
    rf: &RieszFit,
) -> Result<f64> {
    check_alignment(d, nf, Some(rf))?;
    let n = d.n();
    Ok(mean((0..n).map(|i| {
        psi_i(
            theta,
            d.y[i],
            d.t[i],
            nf.gamma1_hat[i],
            nf.gamma2_hat[i],
            rf.alpha1_hat[i],
            rf.alpha2_hat[i],
        )
    })))
}

/// Standard error and confidence interval from per-observation moment values:
/// `V = q_hat^{-2} * mean(psi^2)`, `se = sqrt(V / n)`, normal critical value.
pub fn estimate_variance(
    psi: &[f64],
    q_hat: f64,
    theta_hat: f64,
    level: f64,
) -> Result<(f64, (f64, f64))> {
    let z = check_level(level)?;
    if q_hat.abs() < WEAK_ID_TOL {
        return Err(Error::weak_identification(format!(
            "|q_hat| = {:.3e} < {WEAK_ID_TOL:.0e}",
            q_hat.abs()
        )));
    }
    let n = psi.len() as f64;
    let v = psi.iter().map(|p| p * p).sum::<f64>() / n / (q_hat * q_hat);
    let se = (v / n).sqrt();
    Ok((se, (theta_hat - z * se, theta_hat + z * se)))
}

/// Solves the debiased sample moment for `theta`. Because the score is
/// affine, the root is the closed-form ratio of the corrected numerator to
/// `q_hat = mean(t * gamma_hat)`.
pub fn solve_theta_debiased(
    d: &Dataset,
    nf: &NuisanceFit,
    rf: &RieszFit,
    level: f64,
) -> Result<EstimateReport> {
    check_alignment(d, nf, Some(rf))?;
    let n = d.n();
    let gam = gamma_hat(nf);
    let mut num = 0.0;
    let mut q = 0.0;
    for i in 0..n {
        num += d.y[i] * gam[i]
            + rf.alpha1_hat[i] * (d.t[i] - nf.gamma1_hat[i])
            + rf.alpha2_hat[i] * (d.t[i] - nf.gamma2_hat[i]);
        q += d.t[i] * gam[i];
    }
    num /= n as f64;
    q /= n as f64;
    if q.abs() < WEAK_ID_TOL {
        return Err(Error::weak_identification(format!(
            "|mean(t * gamma_hat)| = {:.3e} < {WEAK_ID_TOL:.0e}",
            q.abs()
        )));
    }
    let theta_hat = num / q;
    let psi: Vec<f64> = (0..n)
        .map(|i| {
            psi_i(
                theta_hat,
                d.y[i],
                d.t[i],
                nf.gamma1_hat[i],
                nf.gamma2_hat[i],
                rf.alpha1_hat[i],
                rf.alpha2_hat[i],
            )
        })
        .collect();
    let (se, (ci_low, ci_high)) = estimate_variance(&psi, q, theta_hat, level)?;
    Ok(EstimateReport {
        method: EstimatorMethod::Debiased,
        theta_hat,
        se,
        ci_low,
        ci_high,
        q_hat: q,
        n,
        level,
        psi,
    })
}

/// Ratio estimate `mean(y * instrument) / mean(t * instrument)` with a
/// sandwich standard error based on `g_i = (y_i - theta_hat t_i) *
/// instrument_i`.
fn iv_ratio_report(
    method: EstimatorMethod,
    d: &Dataset,
    instrument: &[f64],
    level: f64,
) -> Result<EstimateReport> {
    let n = d.n();
    let num = mean((0..n).map(|i| d.y[i] * instrument[i]));
    let q = mean((0..n).map(|i| d.t[i] * instrument[i]));
    if q.abs() < WEAK_ID_TOL {
        return Err(Error::weak_identification(format!(
            "|mean(t * instrument)| = {:.3e} < {WEAK_ID_TOL:.0e}",
            q.abs()
        )));
    }
    let theta_hat = num / q;
    let psi: Vec<f64> = (0..n)
        .map(|i| (d.y[i] - theta_hat * d.t[i]) * instrument[i])
        .collect();
    let (se, (ci_low, ci_high)) = estimate_variance(&psi, q, theta_hat, level)?;
    Ok(EstimateReport {
        method,
        theta_hat,
        se,
        ci_low,
        ci_high,
        q_hat: q,
        n,
        level,
        psi,
    })
}

/// Plug-in two-step estimator: the cross-fitted instrument without any
/// influence-function correction. Coincides with the debiased estimator when
/// both representers are identically zero.
pub fn estimate_plugin(d: &Dataset, nf: &NuisanceFit, level: f64) -> Result<EstimateReport> {
    check_alignment(d, nf, None)?;
    let gam = gamma_hat(nf);
    iv_ratio_report(EstimatorMethod::Plugin, d, &gam, level)
}

/// Infeasible benchmark: the ratio estimator evaluated at the true
/// `gamma`. Available only when an oracle (the simulator) supplies it.
pub fn estimate_oracle(d: &Dataset, true_gamma: &[f64], level: f64) -> Result<EstimateReport> {
    if true_gamma.len() != d.n() {
        return Err(Error::parameter("oracle gamma length does not match dataset"));
    }
    iv_ratio_report(EstimatorMethod::Oracle, d, true_gamma, level)
}

/// Leave-one-out examiner means, centered, as the instrument (no
/// covariates). Every examiner needs at least two cases.
pub fn estimate_loo_jive(d: &Dataset, level: f64) -> Result<EstimateReport> {
    let instrument = loo_examiner_means(d)?;
    let center = mean(instrument.iter().copied());
    let centered: Vec<f64> = instrument.iter().map(|v| v - center).collect();
    iv_ratio_report(EstimatorMethod::LooJive, d, &centered, level)
}

/// Leave-one-out examiner means of the treatment, uncentered.
pub fn loo_examiner_means(d: &Dataset) -> Result<Vec<f64>> {
    let j_count = d.n_examiners();
    let mut count = vec![0usize; j_count];
    let mut sum = vec![0.0; j_count];
    for i in 0..d.n() {
        let z = d.z[i] as usize - 1;
        count[z] += 1;
        sum[z] += d.t[i];
    }
    let singles: Vec<u64> = (0..j_count)
        .filter(|&z| count[z] < 2)
        .map(|z| d.examiner_labels[z])
        .collect();
    if !singles.is_empty() {
        return Err(Error::SingleCaseExaminers { ids: singles });
    }
    Ok((0..d.n())
        .map(|i| {
            let z = d.z[i] as usize - 1;
            (sum[z] - d.t[i]) / (count[z] - 1) as f64
        })
        .collect())
}

/// Jackknife-residualized linear instrument: leave-one-out OLS of `t` on
/// (examiner dummies, X) minus leave-one-out OLS of `t` on (intercept, X),
/// both through hat-matrix leverage identities.
pub fn estimate_ujive_linear(d: &Dataset, level: f64) -> Result<EstimateReport> {
    let instrument = ujive_linear_instrument(d)?;
    iv_ratio_report(EstimatorMethod::UjiveLinear, d, &instrument, level)
}

/// The UJIVE instrument itself (exposed for diagnostics and tests).
pub fn ujive_linear_instrument(d: &Dataset) -> Result<Vec<f64>> {
    let n = d.n();
    let p = d.n_covariates();
    let j_count = d.n_examiners();

    // Full design: examiner dummies then covariates.
    let mut w = Array2::zeros((n, j_count + p));
    for i in 0..n {
        w[[i, d.z[i] as usize - 1]] = 1.0;
        for k in 0..p {
            w[[i, j_count + k]] = d.x[[i, k]];
        }
    }
    // Controls-only design: intercept then covariates.
    let mut xt = Array2::zeros((n, 1 + p));
    for i in 0..n {
        xt[[i, 0]] = 1.0;
        for k in 0..p {
            xt[[i, 1 + k]] = d.x[[i, k]];
        }
    }

    let loo_w = loo_fitted(&w, &d.t)?;
    let loo_x = loo_fitted(&xt, &d.t)?;
    Ok(loo_w
        .iter()
        .zip(loo_x.iter())
        .map(|(&a, &b)| a - b)
        .collect())
}

/// Leave-one-out OLS fitted values via `(fitted_i - h_i t_i) / (1 - h_i)`.
/// Linearly dependent columns are projected out (the fitted values only
/// depend on the column span); leverage 1 rows are an error.
fn loo_fitted(design: &Array2<f64>, target: &[f64]) -> Result<Vec<f64>> {
    let n = design.nrows();
    let g = design.t().dot(design);
    let chol = DroppingCholesky::factor(&g, 1e-10);
    let rhs: Vec<f64> = (0..design.ncols())
        .map(|j| {
            design
                .column(j)
                .iter()
                .zip(target.iter())
                .map(|(&v, &t)| v * t)
                .sum()
        })
        .collect();
    let beta = chol.solve(&rhs);
    let mut loo = vec![0.0; n];
    let mut bad_rows = Vec::new();
    for i in 0..n {
        let row = design.row(i);
        let row_slice = row.as_slice().expect("contiguous row");
        let fitted: f64 = row_slice
            .iter()
            .zip(beta.iter())
            .map(|(&v, &b)| v * b)
            .sum();
        let h = chol.leverage(row_slice);
        if h >= 1.0 - 1e-10 {
            bad_rows.push(i);
            continue;
        }
        loo[i] = (fitted - h * target[i]) / (1.0 - h);
    }
    if !bad_rows.is_empty() {
        return Err(Error::JackknifeSingular { rows: bad_rows });
    }
    Ok(loo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nuisance::LearnerConfig;
    use ndarray::Array2;

    fn report_free_dataset(y: Vec<f64>, t: Vec<f64>, z: Vec<u64>) -> Dataset {
        let n = y.len();
        Dataset::new(y, t, Array2::zeros((n, 0)), z, None).unwrap()
    }

    fn nf_from(gamma1: Vec<f64>, gamma2: Vec<f64>) -> NuisanceFit {
        let n = gamma1.len();
        NuisanceFit {
            gamma1_hat: gamma1,
            gamma2_hat: gamma2,
            fold_of: vec![0; n],
            learner: LearnerConfig::Ols,
            clip_eps: 0.0,
            penalties1: vec![],
            penalties2: vec![],
        }
    }

    fn rf_from(alpha1: Vec<f64>, alpha2: Vec<f64>) -> RieszFit {
        let n = alpha1.len();
        RieszFit {
            alpha1_hat: alpha1,
            alpha2_hat: alpha2,
            fold_of: vec![0; n],
            fold_fits1: vec![],
            fold_fits2: vec![],
            theta_tilde: Default::default(),
            theta_fold: vec![],
        }
    }

    #[test]
    fn psi_bar_hand_arithmetic() {
        // y=(1,0), t=(1,0), gamma_hat=(0.5,-0.5) via gamma1=t, gamma2=t-gamma,
        // all alphas zero, theta=1: psi_bar = mean((y-t)*gamma) = 0.
        let d = report_free_dataset(vec![1.0, 0.0], vec![1.0, 0.0], vec![1, 2]);
        let nf = nf_from(vec![1.0, 0.0], vec![0.5, 0.5]);
        let rf = rf_from(vec![0.0, 0.0], vec![0.0, 0.0]);
        let v = debiased_psi_bar(1.0, &d, &nf, &rf).unwrap();
        assert!(v.abs() <= 1e-15);
    }

    #[test]
    fn psi_bar_is_affine_in_theta() {
        let d = report_free_dataset(vec![1.0, 0.3, -0.5, 2.0], vec![1.0, 0.0, 1.0, 0.0], vec![1, 1, 2, 2]);
        let nf = nf_from(vec![0.7, 0.2, 0.9, 0.1], vec![0.5, 0.4, 0.3, 0.2]);
        let rf = rf_from(vec![0.1, -0.2, 0.3, 0.0], vec![-0.1, 0.2, 0.0, 0.4]);
        let a = debiased_psi_bar(-2.0, &d, &nf, &rf).unwrap();
        let b = debiased_psi_bar(4.0, &d, &nf, &rf).unwrap();
        let mid = debiased_psi_bar(1.0, &d, &nf, &rf).unwrap();
        assert!((mid - 0.5 * (a + b)).abs() <= 1e-12);
    }

    #[test]
    fn closed_form_theta_is_the_root() {
        let d = report_free_dataset(
            vec![1.2, 0.3, -0.5, 2.0, 0.9, 0.0],
            vec![1.0, 0.0, 1.0, 0.0, 1.0, 1.0],
            vec![1, 1, 2, 2, 3, 3],
        );
        let nf = nf_from(
            vec![0.7, 0.2, 0.9, 0.1, 0.6, 0.5],
            vec![0.5, 0.4, 0.3, 0.2, 0.5, 0.6],
        );
        let rf = rf_from(
            vec![0.1, -0.2, 0.3, 0.0, 0.2, -0.1],
            vec![-0.1, 0.2, 0.0, 0.4, -0.3, 0.1],
        );
        let report = solve_theta_debiased(&d, &nf, &rf, 0.95).unwrap();
        let at_root = debiased_psi_bar(report.theta_hat, &d, &nf, &rf).unwrap();
        let scale = 1.0 + report.psi.iter().map(|p| p.abs()).sum::<f64>() / report.psi.len() as f64;
        assert!(at_root.abs() <= 1e-10 * scale);
        assert!(report.ci_low <= report.theta_hat && report.theta_hat <= report.ci_high);

        // Bisection cross-check: the affine function's root found numerically.
        let (mut lo, mut hi) = (-100.0, 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let v = debiased_psi_bar(mid, &d, &nf, &rf).unwrap();
            let vlo = debiased_psi_bar(lo, &d, &nf, &rf).unwrap();
            if (v > 0.0) == (vlo > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let bisect = 0.5 * (lo + hi);
        assert!(
            (bisect - report.theta_hat).abs() <= 1e-10 * (1.0 + report.theta_hat.abs()),
            "bisection {bisect} vs closed form {}",
            report.theta_hat
        );
    }

    #[test]
    fn hand_computed_debiased_theta() {
        // gamma_hat=(0.5,-0.5), y=(1,0), t=(1,0): mean(y gamma)=0.25,
        // q=0.25; corrections sum to 0.05 per observation average:
        // theta = (0.25+0.05)/0.25 = 1.2.
        let d = report_free_dataset(vec![1.0, 0.0], vec![1.0, 0.0], vec![1, 2]);
        let nf = nf_from(vec![1.0, 0.0], vec![0.5, 0.5]);
        // alpha1*(t-gamma1) = 0 (gamma1 = t); choose alpha2 so that
        // mean(alpha2*(t-gamma2)) = 0.05: t-gamma2 = (0.5,-0.5).
        let rf = rf_from(vec![0.0, 0.0], vec![0.1, -0.1]);
        let report = solve_theta_debiased(&d, &nf, &rf, 0.95).unwrap();
        assert!((report.theta_hat - 1.2).abs() <= 1e-12);
    }

    #[test]
    fn plugin_reduces_to_ratio_and_matches_debiased_with_zero_alphas() {
        let d = report_free_dataset(
            vec![1.0, 0.2, 0.8, 0.1],
            vec![1.0, 0.0, 1.0, 0.0],
            vec![1, 1, 2, 2],
        );
        let nf = nf_from(vec![0.8, 0.3, 0.7, 0.2], vec![0.5, 0.5, 0.4, 0.4]);
        let rf = rf_from(vec![0.0; 4], vec![0.0; 4]);
        let plugin = estimate_plugin(&d, &nf, 0.95).unwrap();
        let debiased = solve_theta_debiased(&d, &nf, &rf, 0.95).unwrap();
        assert!((plugin.theta_hat - debiased.theta_hat).abs() <= 1e-14);
        assert!((plugin.se - debiased.se).abs() <= 1e-14);

        // y = c t gives theta = c.
        let c = 2.5;
        let d2 = report_free_dataset(
            vec![c, 0.0, c, 0.0],
            vec![1.0, 0.0, 1.0, 0.0],
            vec![1, 1, 2, 2],
        );
        let plugin2 = estimate_plugin(&d2, &nf, 0.95).unwrap();
        assert!((plugin2.theta_hat - c).abs() <= 1e-12);
    }

    #[test]
    fn variance_hand_arithmetic() {
        // psi = (1,-1), q = 0.5, n = 2: V = 4, se = sqrt(2).
        let (se, (lo, hi)) = estimate_variance(&[1.0, -1.0], 0.5, 0.0, 0.95).unwrap();
        assert!((se - 2.0_f64.sqrt()).abs() <= 1e-12);
        assert!(lo < 0.0 && hi > 0.0);

        // Zero psi: degenerate point interval.
        let (se0, (l0, h0)) = estimate_variance(&[0.0, 0.0], 0.5, 1.0, 0.95).unwrap();
        assert_eq!(se0, 0.0);
        assert_eq!((l0, h0), (1.0, 1.0));
    }

    #[test]
    fn doubling_gamma_leaves_theta_and_variance_unchanged() {
        let d = report_free_dataset(
            vec![1.0, 0.2, 0.8, 0.1],
            vec![1.0, 0.0, 1.0, 0.0],
            vec![1, 1, 2, 2],
        );
        let gamma = vec![0.3, -0.2, 0.25, -0.35];
        let doubled: Vec<f64> = gamma.iter().map(|g| 2.0 * g).collect();
        let a = estimate_oracle(&d, &gamma, 0.95).unwrap();
        let b = estimate_oracle(&d, &doubled, 0.95).unwrap();
        assert!((a.theta_hat - b.theta_hat).abs() <= 1e-12);
        assert!((b.q_hat - 2.0 * a.q_hat).abs() <= 1e-12);
        assert!((a.se - b.se).abs() <= 1e-12);
    }

    #[test]
    fn oracle_zero_gamma_is_weak() {
        let d = report_free_dataset(vec![1.0, 0.0], vec![1.0, 0.0], vec![1, 2]);
        assert!(matches!(
            estimate_oracle(&d, &[0.0, 0.0], 0.95),
            Err(Error::WeakIdentification(_))
        ));
    }

    #[test]
    fn loo_jive_examiner_means() {
        // Examiner 1 has t = (1, 0, 1): leave-one-out values (0.5, 1.0, 0.5).
        let d = report_free_dataset(
            vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
            vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
            vec![1, 1, 1, 2, 2, 2],
        );
        let loo = loo_examiner_means(&d).unwrap();
        assert_eq!(&loo[..3], &[0.5, 1.0, 0.5]);
    }

    #[test]
    fn loo_jive_single_case_examiner_is_an_error() {
        let d = report_free_dataset(vec![1.0, 0.0, 1.0], vec![1.0, 0.0, 1.0], vec![7, 7, 9]);
        match estimate_loo_jive(&d, 0.95) {
            Err(Error::SingleCaseExaminers { ids }) => assert_eq!(ids, vec![9]),
            other => panic!("expected single-case error, got {other:?}"),
        }
    }

    #[test]
    fn loo_jive_degenerate_instrument_is_weak() {
        // Constant treatment: every leave-one-out mean is 1, so the centered
        // instrument is identically zero.
        let d = report_free_dataset(
            vec![1.0, 2.0, 3.0, 4.0],
            vec![1.0, 1.0, 1.0, 1.0],
            vec![1, 1, 2, 2],
        );
        assert!(matches!(
            estimate_loo_jive(&d, 0.95),
            Err(Error::WeakIdentification(_))
        ));
    }

    #[test]
    fn ujive_with_no_covariates_is_centered_loo_means() {
        let d = report_free_dataset(
            vec![1.0, 0.5, 1.5, 0.0, 1.0, 2.0],
            vec![1.0, 0.0, 1.0, 0.0, 1.0, 1.0],
            vec![1, 1, 1, 2, 2, 2],
        );
        let inst = ujive_linear_instrument(&d).unwrap();
        let loo = loo_examiner_means(&d).unwrap();
        let n = d.n();
        let total: f64 = d.t.iter().sum();
        for i in 0..n {
            let loo_grand = (total - d.t[i]) / (n as f64 - 1.0);
            assert!(
                (inst[i] - (loo[i] - loo_grand)).abs() <= 1e-10,
                "row {i}: {} vs {}",
                inst[i],
                loo[i] - loo_grand
            );
        }
    }

    #[test]
    fn ujive_saturated_strata_give_weak_identification() {
        // One examiner per stratum, stratum dummies as covariates: the two
        // projections share a span, so the instrument vanishes.
        let n = 8;
        let z: Vec<u64> = vec![1, 1, 1, 1, 2, 2, 2, 2];
        let mut x = Array2::zeros((n, 2));
        for i in 0..n {
            x[[i, 0]] = if z[i] == 1 { 1.0 } else { 0.0 };
            x[[i, 1]] = if z[i] == 2 { 1.0 } else { 0.0 };
        }
        let d = Dataset::new(
            vec![1.0, 0.0, 0.5, 0.2, 0.9, 0.1, 0.3, 0.7],
            vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0],
            x,
            z,
            None,
        )
        .unwrap();
        match estimate_ujive_linear(&d, 0.95) {
            Err(Error::WeakIdentification(_)) => {}
            other => panic!("expected weak identification, got {other:?}"),
        }
    }

    #[test]
    fn ujive_single_case_cell_is_jackknife_singular() {
        // Examiner 3 has one case: its dummy gives that row leverage 1.
        let d = report_free_dataset(
            vec![1.0, 0.0, 1.0, 0.0, 1.0],
            vec![1.0, 0.0, 1.0, 0.0, 1.0],
            vec![1, 1, 2, 2, 3],
        );
        match estimate_ujive_linear(&d, 0.95) {
            Err(Error::JackknifeSingular { rows }) => assert_eq!(rows, vec![4]),
            other => panic!("expected jackknife singularity, got {other:?}"),
        }
    }

    #[test]
    fn report_serializes_flat() {
        let report = EstimateReport {
            method: EstimatorMethod::Debiased,
            theta_hat: 0.5,
            se: 0.1,
            ci_low: 0.3,
            ci_high: 0.7,
            q_hat: 0.2,
            n: 100,
            level: 0.95,
            psi: vec![1.0; 100],
        };
        let json = serde_json::to_value(&report).unwrap();
        let obj = json.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(|k| k.as_str()).collect();
        keys.sort_unstable();
        assert_eq!(
            keys,
            vec!["ci_high", "ci_low", "level", "method", "n", "q_hat", "se", "theta_hat"]
        );
        assert_eq!(obj["method"], "debiased");
        assert!(obj["theta_hat"].is_f64());
    }
}
