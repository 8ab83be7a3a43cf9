//! Synthetic data-generating process with closed-form oracles, and the Monte
//! Carlo harness that runs estimators over replicated draws.
//!
//! Generation scheme (fixed): covariates are i.i.d. standard normal; strata
//! are uniform; examiners are uniform within the case's stratum (conditional
//! random assignment); a binary confounder `u` is uniform on {-1, +1}; judge
//! effects are equally spaced in `[-judge_effect_spread, +judge_effect_spread]`
//! within each stratum; treatment is Bernoulli with logistic index
//! `a_z + x' beta_t + kappa * u` where `beta_t` has `s_sparse` leading entries
//! equal to 0.5; the outcome is `theta0 * t + x' beta_y + lambda_conf * u +
//! noise_sd * eps` with `beta_y`'s `s_sparse` leading entries equal to 1.
//! The constant effect makes the IV estimand equal `theta0` exactly, and the
//! two-point confounder gives the propensity oracles a two-term closed form.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ndarray::Array2;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{
    estimate_loo_jive, estimate_oracle, estimate_plugin, estimate_ujive_linear, EstimateReport,
    EstimatorMethod,
};
use crate::folds::make_folds;
use crate::pipeline::{run_debiased_pipeline_planned, PipelineConfig};

/// Configuration of the data-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n: usize,
    /// Number of examiners; must be divisible by `s`.
    pub j: usize,
    /// Number of strata.
    pub s: usize,
    /// Number of covariates.
    pub p: usize,
    /// Leading covariates with nonzero coefficients in both equations.
    pub s_sparse: usize,
    /// Constant treatment effect.
    pub theta0: f64,
    /// Confounding strength into treatment.
    pub kappa: f64,
    /// Confounding strength into the outcome.
    pub lambda_conf: f64,
    /// Judge effects span `[-judge_effect_spread, +judge_effect_spread]`.
    pub judge_effect_spread: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            n: 2000,
            j: 40,
            s: 4,
            p: 60,
            s_sparse: 5,
            theta0: 0.5,
            kappa: 1.0,
            lambda_conf: 1.0,
            judge_effect_spread: 1.0,
            noise_sd: 1.0,
            seed: 1,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::parameter("n must be positive"));
        }
        if self.j < 2 {
            return Err(Error::parameter("need at least 2 examiners"));
        }
        if self.s == 0 {
            return Err(Error::parameter("need at least 1 stratum"));
        }
        if self.j % self.s != 0 {
            return Err(Error::parameter(format!(
                "examiner count {} must be divisible by stratum count {}",
                self.j, self.s
            )));
        }
        if self.s_sparse > self.p {
            return Err(Error::parameter(format!(
                "s_sparse {} exceeds covariate count {}",
                self.s_sparse, self.p
            )));
        }
        if !(self.noise_sd > 0.0) {
            return Err(Error::parameter("noise_sd must be positive"));
        }
        Ok(())
    }

    /// Examiners per stratum.
    pub fn per_stratum(&self) -> usize {
        self.j / self.s
    }

    /// Judge effect of the (1-based) global examiner id: equally spaced in
    /// `[-spread, +spread]` within its stratum, midpoint when a stratum has a
    /// single examiner.
    pub fn judge_effect(&self, z: usize) -> f64 {
        let per = self.per_stratum();
        let pos = (z - 1) % per;
        if per == 1 {
            0.0
        } else {
            -self.judge_effect_spread
                + 2.0 * self.judge_effect_spread * pos as f64 / (per - 1) as f64
        }
    }

    /// Stratum (1-based) of a global examiner id.
    pub fn stratum_of(&self, z: usize) -> usize {
        (z - 1) / self.per_stratum() + 1
    }

    fn beta_t(&self, x_row: &[f64]) -> f64 {
        x_row[..self.s_sparse].iter().sum::<f64>() * 0.5
    }

    fn beta_y(&self, x_row: &[f64]) -> f64 {
        x_row[..self.s_sparse].iter().sum::<f64>()
    }
}

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// A drawn dataset together with the oracle nuisance values and the true
/// effect.
#[derive(Debug, Clone)]
pub struct DgpDraw {
    pub dataset: Dataset,
    pub gamma1_true: Vec<f64>,
    pub gamma2_true: Vec<f64>,
    pub gamma_true: Vec<f64>,
    pub alpha1_true: Vec<f64>,
    pub alpha2_true: Vec<f64>,
    pub theta0: f64,
}

/// Oracle propensities for one case: `gamma_1` marginalizes the confounder,
/// `gamma_2` additionally averages over the stratum's examiners (assignment
/// is uniform within the stratum). `z` is the 1-based global examiner id.
pub fn oracle_gamma(config: &DgpConfig, x_row: &[f64], z: usize, stratum: usize) -> (f64, f64) {
    let xb = config.beta_t(x_row);
    let g1 = |a: f64| 0.5 * (logistic(a + xb + config.kappa) + logistic(a + xb - config.kappa));
    let gamma1 = g1(config.judge_effect(z));
    let per = config.per_stratum();
    let first = (stratum - 1) * per + 1;
    let gamma2 = (first..first + per).map(|j| g1(config.judge_effect(j))).sum::<f64>() / per as f64;
    (gamma1, gamma2)
}

/// Oracle Riesz representers at the true effect: `alpha_1 = x' beta_y` and
/// `alpha_2 = -x' beta_y` (the residualized outcome's conditional mean given
/// `(X, Z)` depends on `X` alone in this design).
pub fn oracle_alpha(config: &DgpConfig, x_row: &[f64], _theta0: f64) -> (f64, f64) {
    let v = config.beta_y(x_row);
    (v, -v)
}

/// Draws one dataset. Deterministic given the config (including its seed).
pub fn draw_dgp(config: &DgpConfig) -> Result<DgpDraw> {
    config.validate()?;
    let n = config.n;
    let p = config.p;
    let per = config.per_stratum();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut x = Array2::zeros((n, p));
    for i in 0..n {
        for k in 0..p {
            x[[i, k]] = rng.sample::<f64, _>(StandardNormal);
        }
    }

    let mut y = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut z = vec![0u64; n];
    let mut stratum = vec![0u64; n];
    let mut gamma1_true = vec![0.0; n];
    let mut gamma2_true = vec![0.0; n];
    let mut alpha1_true = vec![0.0; n];

    for i in 0..n {
        let s_i = rng.gen_range(1..=config.s);
        let local = rng.gen_range(0..per);
        let z_i = (s_i - 1) * per + local + 1;
        let u: f64 = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let row = x.row(i);
        let row_slice = row.as_slice().expect("contiguous row");
        let xb_t = config.beta_t(row_slice);
        let eta = config.judge_effect(z_i) + xb_t + config.kappa * u;
        let treated = rng.gen_bool(logistic(eta));
        let eps: f64 = rng.sample(StandardNormal);

        t[i] = f64::from(treated);
        let xb_y = config.beta_y(row_slice);
        y[i] = config.theta0 * t[i] + xb_y + config.lambda_conf * u + config.noise_sd * eps;
        z[i] = z_i as u64;
        stratum[i] = s_i as u64;
        let (g1, g2) = oracle_gamma(config, row_slice, z_i, s_i);
        gamma1_true[i] = g1;
        gamma2_true[i] = g2;
        alpha1_true[i] = xb_y;
    }

    let gamma_true: Vec<f64> = gamma1_true
        .iter()
        .zip(gamma2_true.iter())
        .map(|(&a, &b)| a - b)
        .collect();
    let alpha2_true: Vec<f64> = alpha1_true.iter().map(|&v| -v).collect();
    let dataset = Dataset::new(y, t, x, z, Some(stratum))?;
    Ok(DgpDraw {
        dataset,
        gamma1_true,
        gamma2_true,
        gamma_true,
        alpha1_true,
        alpha2_true,
        theta0: config.theta0,
    })
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic seed stream: `(base, stream, index)` produce independent
/// generator seeds.
pub(crate) fn mix_seed(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ (stream << 48)) ^ index)
}

/// Per-estimator Monte Carlo aggregates. Failures (weak identification,
/// non-convergence, degenerate jackknives) are counted and excluded from the
/// moments.
#[derive(Debug, Clone, Serialize)]
pub struct McEstimatorSummary {
    pub method: EstimatorMethod,
    pub mean_bias: f64,
    pub median_bias: f64,
    pub rmse: f64,
    pub sd: f64,
    pub mean_se: f64,
    pub coverage: f64,
    pub replications: usize,
    pub failures: usize,
}

/// Monte Carlo study summary.
#[derive(Debug, Clone, Serialize)]
pub struct McSummary {
    pub config: DgpConfig,
    pub r: usize,
    pub folds: usize,
    pub level: f64,
    pub estimators: Vec<McEstimatorSummary>,
}

impl McSummary {
    /// One row per estimator: `method,n,J,p,R,bias,rmse,sd,mean_se,coverage,failures`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("method,n,J,p,R,bias,rmse,sd,mean_se,coverage,failures\n");
        for e in &self.estimators {
            let method = serde_json::to_value(e.method).unwrap();
            out.push_str(&format!(
                "{},{},{},{},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.4},{}\n",
                method.as_str().unwrap(),
                self.config.n,
                self.config.j,
                self.config.p,
                self.r,
                e.mean_bias,
                e.rmse,
                e.sd,
                e.mean_se,
                e.coverage,
                e.failures
            ));
        }
        out
    }

    pub fn estimator(&self, method: EstimatorMethod) -> Option<&McEstimatorSummary> {
        self.estimators.iter().find(|e| e.method == method)
    }
}

/// Runs the requested estimators over `r` independent draws with the default
/// pipeline settings.
pub fn run_monte_carlo(
    config: &DgpConfig,
    estimators: &[EstimatorMethod],
    r: usize,
    folds: usize,
    seed: u64,
) -> Result<McSummary> {
    run_monte_carlo_with(config, estimators, r, folds, seed, &PipelineConfig::default())
}

fn failure_class(e: &Error) -> bool {
    matches!(
        e,
        Error::WeakIdentification(_)
            | Error::NonConvergence { .. }
            | Error::SingleCaseExaminers { .. }
            | Error::JackknifeSingular { .. }
    )
}

/// As [`run_monte_carlo`], with explicit pipeline settings (learner, penalty
/// rules, clipping, dictionary shape). The template's fold count is
/// overridden by `folds` and its fold seed is drawn from the replication
/// seed stream.
pub fn run_monte_carlo_with(
    config: &DgpConfig,
    estimators: &[EstimatorMethod],
    r: usize,
    folds: usize,
    seed: u64,
    pipeline: &PipelineConfig,
) -> Result<McSummary> {
    if r < 2 {
        return Err(Error::parameter("need at least 2 replications"));
    }
    if estimators.is_empty() {
        return Err(Error::parameter("empty estimator list"));
    }
    config.validate()?;
    let level = pipeline.level;

    // One entry per replication per estimator; collected in replication
    // order so the reduction is deterministic regardless of scheduling.
    type RepResult = Vec<(EstimatorMethod, std::result::Result<(f64, f64, f64, f64), ()>)>;
    let reps: Vec<Result<RepResult>> = (0..r)
        .into_par_iter()
        .map(|rep| -> Result<RepResult> {
            let mut rep_config = config.clone();
            rep_config.seed = mix_seed(seed, 0, rep as u64);
            let draw = draw_dgp(&rep_config)?;
            let d = &draw.dataset;
            let mut out: RepResult = Vec::with_capacity(estimators.len());

            let wants = |m: EstimatorMethod| estimators.contains(&m);
            let pack = |rep: &EstimateReport| (rep.theta_hat, rep.se, rep.ci_low, rep.ci_high);
            let mut push = |m: EstimatorMethod,
                            res: Result<(f64, f64, f64, f64)>,
                            out: &mut RepResult|
             -> Result<()> {
                match res {
                    Ok(v) => out.push((m, Ok(v))),
                    Err(e) if failure_class(&e) => out.push((m, Err(()))),
                    Err(e) => return Err(e),
                }
                Ok(())
            };

            if wants(EstimatorMethod::Debiased) || wants(EstimatorMethod::Plugin) {
                let mut pc = pipeline.clone();
                pc.folds = folds;
                pc.fold_seed = mix_seed(seed, 1, rep as u64);
                let plan = make_folds(d.n(), pc.folds, pc.fold_seed)?;
                match run_debiased_pipeline_planned(d, &plan, &pc) {
                    Ok(run) => {
                        if wants(EstimatorMethod::Plugin) {
                            push(
                                EstimatorMethod::Plugin,
                                estimate_plugin(d, &run.nuisance, level).map(|r| pack(&r)),
                                &mut out,
                            )?;
                        }
                        if wants(EstimatorMethod::Debiased) {
                            out.push((EstimatorMethod::Debiased, Ok(pack(&run.report))));
                        }
                    }
                    Err(e) if failure_class(&e) => {
                        if wants(EstimatorMethod::Plugin) {
                            out.push((EstimatorMethod::Plugin, Err(())));
                        }
                        if wants(EstimatorMethod::Debiased) {
                            out.push((EstimatorMethod::Debiased, Err(())));
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
            if wants(EstimatorMethod::Oracle) {
                push(
                    EstimatorMethod::Oracle,
                    estimate_oracle(d, &draw.gamma_true, level).map(|r| pack(&r)),
                    &mut out,
                )?;
            }
            if wants(EstimatorMethod::LooJive) {
                push(
                    EstimatorMethod::LooJive,
                    estimate_loo_jive(d, level).map(|r| pack(&r)),
                    &mut out,
                )?;
            }
            if wants(EstimatorMethod::UjiveLinear) {
                push(
                    EstimatorMethod::UjiveLinear,
                    estimate_ujive_linear(d, level).map(|r| pack(&r)),
                    &mut out,
                )?;
            }
            Ok(out)
        })
        .collect();

    let theta0 = config.theta0;
    let mut summaries = Vec::new();
    for &method in estimators {
        let mut thetas = Vec::new();
        let mut ses = Vec::new();
        let mut covered = 0usize;
        let mut failures = 0usize;
        for rep in &reps {
            let rep = rep.as_ref().map_err(|e| Error::parameter(e.to_string()))?;
            for (m, res) in rep {
                if *m != method {
                    continue;
                }
                match res {
                    Ok((theta, se, lo, hi)) => {
                        thetas.push(*theta);
                        ses.push(*se);
                        if *lo <= theta0 && theta0 <= *hi {
                            covered += 1;
                        }
                    }
                    Err(()) => failures += 1,
                }
            }
        }
        let k = thetas.len();
        let kf = k as f64;
        let mean_theta = thetas.iter().sum::<f64>() / kf.max(1.0);
        let mean_bias = mean_theta - theta0;
        let mut biases: Vec<f64> = thetas.iter().map(|t| t - theta0).collect();
        biases.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median_bias = if k == 0 {
            f64::NAN
        } else if k % 2 == 1 {
            biases[k / 2]
        } else {
            0.5 * (biases[k / 2 - 1] + biases[k / 2])
        };
        let rmse = (biases.iter().map(|b| b * b).sum::<f64>() / kf.max(1.0)).sqrt();
        let sd = if k > 1 {
            (thetas.iter().map(|t| (t - mean_theta) * (t - mean_theta)).sum::<f64>() / (kf - 1.0))
                .sqrt()
        } else {
            0.0
        };
        let mean_se = ses.iter().sum::<f64>() / kf.max(1.0);
        summaries.push(McEstimatorSummary {
            method,
            mean_bias,
            median_bias,
            rmse,
            sd,
            mean_se,
            coverage: if k == 0 { f64::NAN } else { covered as f64 / kf },
            replications: k,
            failures,
        });
    }
    Ok(McSummary {
        config: config.clone(),
        r,
        folds,
        level,
        estimators: summaries,
    })
}
