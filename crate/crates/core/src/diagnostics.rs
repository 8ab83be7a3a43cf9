//! Numerical verification of the orthogonal score's theoretical properties:
//! vanishing nuisance derivatives, multiple robustness, affinity in each
//! nuisance argument, and the nuisance-error product rate.
//!
//! "Population" expectations are approximated by a single large draw with
//! oracle nuisances, so every statistic carries a threshold in units of the
//! score's Monte Carlo noise.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::folds::make_folds;
use crate::nuisance::NuisanceFit;
use crate::pipeline::{run_debiased_pipeline_planned, PipelineConfig};
use crate::riesz::RieszFit;
use crate::sim::{draw_dgp, DgpConfig, DgpDraw};

/// One named check: `passed` holds exactly when `|statistic| <= threshold`.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticResult {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub passed: bool,
    pub details: BTreeMap<String, f64>,
}

impl DiagnosticResult {
    pub fn new(
        name: impl Into<String>,
        statistic: f64,
        threshold: f64,
        details: BTreeMap<String, f64>,
    ) -> Self {
        DiagnosticResult {
            name: name.into(),
            statistic,
            threshold,
            passed: statistic.abs() <= threshold,
            details,
        }
    }
}

/// Which first-step function a derivative check perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbTarget {
    Gamma1,
    Gamma2,
}

/// A dictionary column used as the perturbation direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaFunction {
    /// The k-th covariate (0-based).
    Covariate(usize),
    /// Dummy of the (1-based) dense examiner id; only valid for `Gamma1`.
    ExaminerDummy(usize),
    /// Product of two covariates.
    CovariateProduct(usize, usize),
}

impl DeltaFunction {
    fn values(&self, d: &Dataset) -> Result<Vec<f64>> {
        match *self {
            DeltaFunction::Covariate(k) => {
                if k >= d.n_covariates() {
                    return Err(Error::parameter(format!("no covariate {k}")));
                }
                Ok(d.x.column(k).to_vec())
            }
            DeltaFunction::ExaminerDummy(j) => {
                if j == 0 || j > d.n_examiners() {
                    return Err(Error::parameter(format!("no examiner {j}")));
                }
                Ok(d.z.iter().map(|&z| f64::from(z as usize == j)).collect())
            }
            DeltaFunction::CovariateProduct(a, b) => {
                if a >= d.n_covariates() || b >= d.n_covariates() {
                    return Err(Error::parameter("covariate product out of range"));
                }
                Ok(d
                    .x
                    .column(a)
                    .iter()
                    .zip(d.x.column(b).iter())
                    .map(|(&u, &v)| u * v)
                    .collect())
            }
        }
    }

    fn label(&self) -> String {
        match *self {
            DeltaFunction::Covariate(k) => format!("x{}", k + 1),
            DeltaFunction::ExaminerDummy(j) => format!("z_{j}"),
            DeltaFunction::CovariateProduct(a, b) => format!("x{}*x{}", a + 1, b + 1),
        }
    }
}

fn orthogonal_score(theta: f64, y: f64, t: f64, g1: f64, g2: f64, a1: f64, a2: f64) -> f64 {
    (y - theta * t) * (g1 - g2) + a1 * (t - g1) + a2 * (t - g2)
}

fn mean_sd(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let v: Vec<f64> = values.collect();
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt(), n)
}

/// Oracle orthogonal score values at the true effect.
pub fn oracle_psi(draw: &DgpDraw) -> Vec<f64> {
    let d = &draw.dataset;
    (0..d.n())
        .map(|i| {
            orthogonal_score(
                draw.theta0,
                d.y[i],
                d.t[i],
                draw.gamma1_true[i],
                draw.gamma2_true[i],
                draw.alpha1_true[i],
                draw.alpha2_true[i],
            )
        })
        .collect()
}

/// Slope of the average orthogonal score in the size of a nuisance
/// perturbation `gamma + t * delta`, against the slope of the uncorrected
/// identifying moment as a contrast. With true representers the orthogonal
/// slope is zero in expectation; the threshold is `0.02 * sd(psi)`.
pub fn neyman_derivative_check(
    draw: &DgpDraw,
    target: PerturbTarget,
    delta: &DeltaFunction,
    t_grid: &[f64],
) -> Result<DiagnosticResult> {
    if t_grid.len() < 2 {
        return Err(Error::parameter("t_grid needs at least two points"));
    }
    if matches!(
        (target, delta),
        (PerturbTarget::Gamma2, DeltaFunction::ExaminerDummy(_))
    ) {
        return Err(Error::parameter(
            "an examiner dummy is not a function of X alone and cannot perturb gamma_2",
        ));
    }
    let d = &draw.dataset;
    let n = d.n();
    let delta_vals = delta.values(d)?;

    let psi_bar_at = |tsize: f64| -> f64 {
        (0..n)
            .map(|i| {
                let (mut g1, mut g2) = (draw.gamma1_true[i], draw.gamma2_true[i]);
                match target {
                    PerturbTarget::Gamma1 => g1 += tsize * delta_vals[i],
                    PerturbTarget::Gamma2 => g2 += tsize * delta_vals[i],
                }
                orthogonal_score(
                    draw.theta0,
                    d.y[i],
                    d.t[i],
                    g1,
                    g2,
                    draw.alpha1_true[i],
                    draw.alpha2_true[i],
                )
            })
            .sum::<f64>()
            / n as f64
    };

    // Least-squares slope of psi_bar over the grid (the map is affine, so
    // this is exact up to roundoff).
    let tbar = t_grid.iter().sum::<f64>() / t_grid.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for &tsize in t_grid {
        num += (tsize - tbar) * psi_bar_at(tsize);
        den += (tsize - tbar) * (tsize - tbar);
    }
    if den == 0.0 {
        return Err(Error::parameter("t_grid points must not be all equal"));
    }
    let slope = num / den;

    // Plug-in contrast: d/dt mean[(y - theta0 t)(gamma + t delta)] with the
    // sign of the perturbed component.
    let sign = match target {
        PerturbTarget::Gamma1 => 1.0,
        PerturbTarget::Gamma2 => -1.0,
    };
    let plugin_slope = sign
        * (0..n)
            .map(|i| (d.y[i] - draw.theta0 * d.t[i]) * delta_vals[i])
            .sum::<f64>()
        / n as f64;

    let (_, sd_psi, _) = mean_sd(oracle_psi(draw).into_iter());
    let mut details = BTreeMap::new();
    details.insert("plugin_slope".into(), plugin_slope);
    details.insert("sd_psi".into(), sd_psi);
    details.insert("n".into(), n as f64);
    let name = format!(
        "neyman_{}_{}",
        match target {
            PerturbTarget::Gamma1 => "gamma1",
            PerturbTarget::Gamma2 => "gamma2",
        },
        delta.label()
    );
    Ok(DiagnosticResult::new(name, slope, 0.02 * sd_psi, details))
}

/// The default derivative-check directions: confounded and unconfounded
/// covariates, an examiner dummy, a covariate product, and a `gamma_2`
/// perturbation.
pub fn standard_neyman_directions(config: &DgpConfig) -> Vec<(PerturbTarget, DeltaFunction)> {
    let mut out = vec![(PerturbTarget::Gamma1, DeltaFunction::Covariate(0))];
    if config.p > config.s_sparse {
        out.push((PerturbTarget::Gamma1, DeltaFunction::Covariate(config.s_sparse)));
    }
    out.push((PerturbTarget::Gamma2, DeltaFunction::Covariate(0)));
    out.push((PerturbTarget::Gamma1, DeltaFunction::ExaminerDummy(1)));
    if config.p >= 2 {
        out.push((PerturbTarget::Gamma1, DeltaFunction::CovariateProduct(0, 1)));
    }
    out
}

/// Evaluates the average score at the true effect under misspecified first
/// steps. Cases (a)-(c) replace one component (wrong propensity = constant
/// 0.5, wrong representer = zero) and must stay within `3 sd / sqrt(n)`;
/// the doubly-wrong control must exceed `10 sd / sqrt(n)`, confirming the
/// test has power.
pub fn robustness_suite(draw: &DgpDraw) -> Vec<DiagnosticResult> {
    let d = &draw.dataset;
    let n = d.n();
    let sqrt_n = (n as f64).sqrt();

    let eval = |g1w: bool, g2w: bool, a1w: bool, a2w: bool| -> (f64, f64) {
        let (mean, sd, _) = mean_sd((0..n).map(|i| {
            let g1 = if g1w { 0.5 } else { draw.gamma1_true[i] };
            let g2 = if g2w { 0.5 } else { draw.gamma2_true[i] };
            let a1 = if a1w { 0.0 } else { draw.alpha1_true[i] };
            let a2 = if a2w { 0.0 } else { draw.alpha2_true[i] };
            orthogonal_score(draw.theta0, d.y[i], d.t[i], g1, g2, a1, a2)
        }));
        (mean, sd)
    };

    let mut out = Vec::new();
    for (name, flags) in [
        ("robustness_gamma1_wrong", (true, false, false, false)),
        ("robustness_gamma2_wrong", (false, true, false, false)),
        ("robustness_alphas_wrong", (false, false, true, true)),
    ] {
        let (mean, sd) = eval(flags.0, flags.1, flags.2, flags.3);
        let mut details = BTreeMap::new();
        details.insert("sd_psi".into(), sd);
        details.insert("n".into(), n as f64);
        out.push(DiagnosticResult::new(name, mean, 3.0 * sd / sqrt_n, details));
    }

    // Power control: gamma_1 and alpha_1 both wrong must move the moment.
    let (mean, sd) = eval(true, false, true, false);
    let required = 10.0 * sd / sqrt_n;
    let mut details = BTreeMap::new();
    details.insert("mean_psi".into(), mean);
    details.insert("sd_psi".into(), sd);
    details.insert("required_shift".into(), required);
    // Encoded as a ratio so that `passed` keeps the |statistic| <= threshold
    // reading: the control passes when the shift is at least `required`.
    out.push(DiagnosticResult::new(
        "robustness_power_control",
        required / mean.abs().max(f64::MIN_POSITIVE),
        1.0,
        details,
    ));
    out
}

#[derive(Debug, Clone, Copy)]
enum ScoreKind {
    Orthogonal,
    /// Test fixture: adds a pure `gamma_1^2` term, deliberately breaking
    /// affinity in that direction.
    QuadraticGamma1,
}

fn score_value(
    kind: ScoreKind,
    theta: f64,
    y: f64,
    t: f64,
    g1: f64,
    g2: f64,
    a1: f64,
    a2: f64,
) -> f64 {
    match kind {
        ScoreKind::Orthogonal => orthogonal_score(theta, y, t, g1, g2, a1, a2),
        ScoreKind::QuadraticGamma1 => orthogonal_score(theta, y, t, g1, g2, a1, a2) + g1 * g1,
    }
}

fn affinity_max_deviation(
    d: &Dataset,
    nf: &NuisanceFit,
    rf: &RieszFit,
    theta: f64,
    seed: u64,
    kind: ScoreKind,
) -> (f64, BTreeMap<String, f64>) {
    let n = d.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bump_a: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let bump_b: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();

    let psi_bar = |g1: &[f64], g2: &[f64], a1: &[f64], a2: &[f64], th: f64| -> f64 {
        (0..n)
            .map(|i| score_value(kind, th, d.y[i], d.t[i], g1[i], g2[i], a1[i], a2[i]))
            .sum::<f64>()
            / n as f64
    };

    let perturb = |base: &[f64], bump: &[f64], sign: f64| -> Vec<f64> {
        base.iter().zip(bump.iter()).map(|(&v, &w)| v + sign * w).collect()
    };
    let midpoint = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter().zip(b.iter()).map(|(&u, &v)| 0.5 * (u + v)).collect()
    };

    let mut details = BTreeMap::new();
    let mut max_dev = 0.0_f64;
    // One direction at a time, others held at the fitted values.
    let directions: [(&str, &[f64]); 4] = [
        ("gamma1", &nf.gamma1_hat),
        ("gamma2", &nf.gamma2_hat),
        ("alpha1", &rf.alpha1_hat),
        ("alpha2", &rf.alpha2_hat),
    ];
    for (name, base) in directions {
        let a = perturb(base, &bump_a, 1.0);
        let b = perturb(base, &bump_b, -1.0);
        let mid = midpoint(&a, &b);
        let eval = |v: &[f64]| -> f64 {
            match name {
                "gamma1" => psi_bar(v, &nf.gamma2_hat, &rf.alpha1_hat, &rf.alpha2_hat, theta),
                "gamma2" => psi_bar(&nf.gamma1_hat, v, &rf.alpha1_hat, &rf.alpha2_hat, theta),
                "alpha1" => psi_bar(&nf.gamma1_hat, &nf.gamma2_hat, v, &rf.alpha2_hat, theta),
                _ => psi_bar(&nf.gamma1_hat, &nf.gamma2_hat, &rf.alpha1_hat, v, theta),
            }
        };
        let dev = (eval(&mid) - 0.5 * (eval(&a) + eval(&b))).abs();
        details.insert(format!("deviation_{name}"), dev);
        max_dev = max_dev.max(dev);
    }
    // Theta direction.
    let th_a = theta + 0.8;
    let th_b = theta - 1.3;
    let full = |th: f64| psi_bar(&nf.gamma1_hat, &nf.gamma2_hat, &rf.alpha1_hat, &rf.alpha2_hat, th);
    let dev = (full(0.5 * (th_a + th_b)) - 0.5 * (full(th_a) + full(th_b))).abs();
    details.insert("deviation_theta".into(), dev);
    max_dev = max_dev.max(dev);
    (max_dev, details)
}

/// Checks that the average score is exactly affine in each nuisance argument
/// and in `theta`: for perturbed versions `a`, `b` and their midpoint the
/// midpoint value must match the average of the endpoints to 1e-12.
pub fn affinity_check(
    d: &Dataset,
    nf: &NuisanceFit,
    rf: &RieszFit,
    theta: f64,
    seed: u64,
) -> DiagnosticResult {
    let (max_dev, details) =
        affinity_max_deviation(d, nf, rf, theta, seed, ScoreKind::Orthogonal);
    DiagnosticResult::new("affinity", max_dev, 1e-12, details)
}

/// The same check against a deliberately quadratic score; it must fail,
/// demonstrating the check can detect non-affine scores.
pub fn affinity_check_quadratic_fixture(
    d: &Dataset,
    nf: &NuisanceFit,
    rf: &RieszFit,
    theta: f64,
    seed: u64,
) -> DiagnosticResult {
    let (max_dev, details) =
        affinity_max_deviation(d, nf, rf, theta, seed, ScoreKind::QuadraticGamma1);
    DiagnosticResult::new("affinity_quadratic_fixture", max_dev, 1e-12, details)
}

/// Stacked empirical L2 distances of the cross-fitted nuisances from their
/// oracles: `(gamma error, alpha error)` with components stacked so the
/// Cauchy-Schwarz bound on the interaction term is exact.
pub fn nuisance_errors(draw: &DgpDraw, nf: &NuisanceFit, rf: &RieszFit) -> (f64, f64) {
    let n = draw.dataset.n();
    let mut g2 = 0.0;
    let mut a2 = 0.0;
    for i in 0..n {
        let dg1 = nf.gamma1_hat[i] - draw.gamma1_true[i];
        let dg2 = nf.gamma2_hat[i] - draw.gamma2_true[i];
        let da1 = rf.alpha1_hat[i] - draw.alpha1_true[i];
        let da2 = rf.alpha2_hat[i] - draw.alpha2_true[i];
        g2 += dg1 * dg1 + dg2 * dg2;
        a2 += da1 * da1 + da2 * da2;
    }
    ((g2 / n as f64).sqrt(), (a2 / n as f64).sqrt())
}

/// The empirical interaction term and its Cauchy-Schwarz bound:
/// `(|mean[(alpha_hat - alpha_0)(gamma_0 - gamma_hat)]|, gamma_err * alpha_err)`.
pub fn interaction_term(draw: &DgpDraw, nf: &NuisanceFit, rf: &RieszFit) -> (f64, f64) {
    let n = draw.dataset.n();
    let mut acc = 0.0;
    for i in 0..n {
        acc += (rf.alpha1_hat[i] - draw.alpha1_true[i]) * (draw.gamma1_true[i] - nf.gamma1_hat[i])
            + (rf.alpha2_hat[i] - draw.alpha2_true[i])
                * (draw.gamma2_true[i] - nf.gamma2_hat[i]);
    }
    let (gerr, aerr) = nuisance_errors(draw, nf, rf);
    ((acc / n as f64).abs(), gerr * aerr)
}

/// One sample size of the rate scan.
#[derive(Debug, Clone, Serialize)]
pub struct RateScanRow {
    pub n: usize,
    pub mean_gamma_err: f64,
    pub mean_alpha_err: f64,
    pub mean_product: f64,
    pub mean_scaled_product: f64,
    pub replications: usize,
    pub failures: usize,
}

/// Output of [`rate_product_scan`]: per-n averages plus the non-increase
/// check on the root-n-scaled error product.
#[derive(Debug, Clone, Serialize)]
pub struct RateScan {
    pub rows: Vec<RateScanRow>,
    pub result: DiagnosticResult,
}

/// For each n in the grid, fits the full LASSO nuisance-plus-representer
/// stack on `r` independent draws and averages the error product
/// `||alpha_hat - alpha_0|| * ||gamma_hat - gamma_0||`; the root-n-scaled
/// product must be non-increasing along the grid.
pub fn rate_product_scan(
    config: &DgpConfig,
    n_grid: &[usize],
    r: usize,
    seed: u64,
    pipeline: &PipelineConfig,
) -> Result<RateScan> {
    if n_grid.len() < 2 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::parameter("n_grid must be strictly increasing with >= 2 sizes"));
    }
    if r < 50 {
        return Err(Error::parameter(format!(
            "rate scan needs at least 50 replications, got {r}"
        )));
    }
    let mut rows = Vec::with_capacity(n_grid.len());
    for (gi, &n) in n_grid.iter().enumerate() {
        let per_rep: Vec<Option<(f64, f64)>> = (0..r)
            .into_par_iter()
            .map(|rep| -> Option<(f64, f64)> {
                let mut cfg = config.clone();
                cfg.n = n;
                cfg.seed = crate::sim::mix_seed(seed, 100 + gi as u64, rep as u64);
                let draw = draw_dgp(&cfg).ok()?;
                let mut pc = pipeline.clone();
                pc.fold_seed = crate::sim::mix_seed(seed, 200 + gi as u64, rep as u64);
                let plan = make_folds(n, pc.folds, pc.fold_seed).ok()?;
                let out = run_debiased_pipeline_planned(&draw.dataset, &plan, &pc).ok()?;
                let (gerr, aerr) = nuisance_errors(&draw, &out.nuisance, &out.riesz);
                Some((gerr, aerr))
            })
            .collect();
        let ok: Vec<&(f64, f64)> = per_rep.iter().flatten().collect();
        let k = ok.len().max(1) as f64;
        let mean_gamma_err = ok.iter().map(|(g, _)| g).sum::<f64>() / k;
        let mean_alpha_err = ok.iter().map(|(_, a)| a).sum::<f64>() / k;
        let mean_product = ok.iter().map(|(g, a)| g * a).sum::<f64>() / k;
        rows.push(RateScanRow {
            n,
            mean_gamma_err,
            mean_alpha_err,
            mean_product,
            mean_scaled_product: (n as f64).sqrt() * mean_product,
            replications: ok.len(),
            failures: r - ok.len(),
        });
    }
    let mut max_increase = 0.0_f64;
    for w in rows.windows(2) {
        max_increase = max_increase.max(w[1].mean_scaled_product - w[0].mean_scaled_product);
    }
    let mut details = BTreeMap::new();
    for row in &rows {
        details.insert(format!("scaled_product_n{}", row.n), row.mean_scaled_product);
        details.insert(format!("product_n{}", row.n), row.mean_product);
    }
    let guard = 1e-9 * rows[0].mean_scaled_product.abs();
    let result = DiagnosticResult::new("rate_product_scan", max_increase, guard, details);
    Ok(RateScan { rows, result })
}
