//! Gram-form penalized least-squares machinery shared by the learners and
//! the cross-fitting pipeline.
//!
//! Everything here works from subset moments (`B'B`, `B'y`, column sums)
//! rather than raw rows, so fold complements are cheap set differences of
//! per-fold moments and coordinate-descent sweeps cost `O(p^2)` regardless of
//! the sample size. Fits optionally center internally: a design with a
//! constant column gets an unpenalized intercept, otherwise the fit runs
//! through the origin.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::DroppingCholesky;

/// Hard cap on coordinate-descent sweeps.
pub(crate) const MAX_SWEEPS: usize = 10_000;
/// Convergence tolerance on the largest standardized-coefficient update.
pub(crate) const CD_TOL: f64 = 1e-8;
const RANK_TOL: f64 = 1e-10;

/// Unnormalized cross moments of a design and a set of targets over a row
/// subset. Moments over disjoint subsets add, so fold complements are
/// differences.
#[derive(Debug, Clone)]
pub(crate) struct SubsetMoments {
    pub m: usize,
    /// `B'B` over the subset.
    pub g: Array2<f64>,
    /// Column sums of `B`.
    pub col_sum: Vec<f64>,
    /// Per target: `B'target`.
    pub bty: Vec<Vec<f64>>,
    /// Per target: sum of the target.
    pub t_sum: Vec<f64>,
    /// Cross products `target_a' target_b`.
    pub t_cross: Array2<f64>,
}

impl SubsetMoments {
    pub fn compute(values: &ArrayView2<f64>, targets: &[&[f64]], rows: &[usize]) -> Self {
        let p = values.ncols();
        let k = targets.len();
        let m = rows.len();
        let mut sub = Array2::zeros((m, p));
        for (r, &i) in rows.iter().enumerate() {
            sub.row_mut(r).assign(&values.row(i));
        }
        let g = sub.t().dot(&sub);
        let col_sum = (0..p).map(|j| sub.column(j).sum()).collect();
        let mut bty = Vec::with_capacity(k);
        let mut t_sum = Vec::with_capacity(k);
        let mut t_cross = Array2::zeros((k, k));
        let gathered: Vec<Vec<f64>> = targets
            .iter()
            .map(|t| rows.iter().map(|&i| t[i]).collect())
            .collect();
        for (a, ta) in gathered.iter().enumerate() {
            let mut v = vec![0.0; p];
            for (r, &ti) in ta.iter().enumerate() {
                if ti != 0.0 {
                    for j in 0..p {
                        v[j] += sub[[r, j]] * ti;
                    }
                }
            }
            bty.push(v);
            t_sum.push(ta.iter().sum());
            for (b, tb) in gathered.iter().enumerate() {
                t_cross[[a, b]] = ta.iter().zip(tb.iter()).map(|(&u, &w)| u * w).sum();
            }
        }
        SubsetMoments {
            m,
            g,
            col_sum,
            bty,
            t_sum,
            t_cross,
        }
    }

    pub fn add(&self, other: &SubsetMoments) -> SubsetMoments {
        let mut out = self.clone();
        out.m += other.m;
        out.g += &other.g;
        for (a, b) in out.col_sum.iter_mut().zip(other.col_sum.iter()) {
            *a += b;
        }
        for (va, vb) in out.bty.iter_mut().zip(other.bty.iter()) {
            for (a, b) in va.iter_mut().zip(vb.iter()) {
                *a += b;
            }
        }
        for (a, b) in out.t_sum.iter_mut().zip(other.t_sum.iter()) {
            *a += b;
        }
        out.t_cross += &other.t_cross;
        out
    }

    pub fn sub(&self, other: &SubsetMoments) -> SubsetMoments {
        let mut out = self.clone();
        out.m -= other.m;
        out.g -= &other.g;
        for (a, b) in out.col_sum.iter_mut().zip(other.col_sum.iter()) {
            *a -= b;
        }
        for (va, vb) in out.bty.iter_mut().zip(other.bty.iter()) {
            for (a, b) in va.iter_mut().zip(vb.iter()) {
                *a -= b;
            }
        }
        for (a, b) in out.t_sum.iter_mut().zip(other.t_sum.iter()) {
            *a -= b;
        }
        out.t_cross -= &other.t_cross;
        out
    }
}

/// Moments of one regression problem: design gram plus a single (possibly
/// combined) target.
#[derive(Debug, Clone)]
pub(crate) struct LinearProblem {
    pub m: usize,
    pub g: Array2<f64>,
    pub col_sum: Vec<f64>,
    pub bty: Vec<f64>,
    pub y_sum: f64,
    pub yty: f64,
}

impl LinearProblem {
    /// Reduces multi-target moments to a single target `sum_a combo[a] * target_a`.
    pub fn from_moments(m: &SubsetMoments, combo: &[f64]) -> Self {
        let p = m.col_sum.len();
        let k = combo.len();
        assert_eq!(k, m.bty.len());
        let mut bty = vec![0.0; p];
        let mut y_sum = 0.0;
        let mut yty = 0.0;
        for a in 0..k {
            if combo[a] == 0.0 {
                continue;
            }
            for j in 0..p {
                bty[j] += combo[a] * m.bty[a][j];
            }
            y_sum += combo[a] * m.t_sum[a];
        }
        for a in 0..k {
            for b in 0..k {
                yty += combo[a] * combo[b] * m.t_cross[[a, b]];
            }
        }
        LinearProblem {
            m: m.m,
            g: m.g.clone(),
            col_sum: m.col_sum.clone(),
            bty,
            y_sum,
            yty,
        }
    }
}

/// Raw-scale fit produced by the solvers: coefficients aligned with the
/// design columns (zeros at constant/dropped columns) plus a separate
/// intercept.
#[derive(Debug, Clone)]
pub(crate) struct RawFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub dropped: Vec<usize>,
}

fn centered_system(
    p: &LinearProblem,
    cols: &[usize],
    center: bool,
) -> (Array2<f64>, Vec<f64>) {
    let k = cols.len();
    let m = p.m as f64;
    let mut g = Array2::zeros((k, k));
    let mut rhs = vec![0.0; k];
    for (a, &ja) in cols.iter().enumerate() {
        for (b, &jb) in cols.iter().enumerate() {
            let mut v = p.g[[ja, jb]];
            if center {
                v -= p.col_sum[ja] * p.col_sum[jb] / m;
            }
            g[[a, b]] = v;
        }
        let mut v = p.bty[ja];
        if center {
            v -= p.col_sum[ja] * p.y_sum / m;
        }
        rhs[a] = v;
    }
    (g, rhs)
}

/// Ordinary least squares from moments. Centers iff the design has a
/// constant column (`constant` flags). In strict mode a rank-deficient
/// design is an error naming the dependent columns; in lenient mode those
/// columns get coefficient zero.
pub(crate) fn solve_ols(
    p: &LinearProblem,
    constant: &[bool],
    names: &[String],
    strict: bool,
) -> Result<RawFit> {
    let n_cols = constant.len();
    let center = constant.iter().any(|&c| c);
    let const_cols: Vec<usize> = (0..n_cols).filter(|&j| constant[j]).collect();
    if strict && const_cols.len() > 1 {
        return Err(Error::Singular {
            columns: const_cols[1..].iter().map(|&j| names[j].clone()).collect(),
        });
    }
    let cols: Vec<usize> = (0..n_cols).filter(|&j| !constant[j]).collect();
    let (g, rhs) = centered_system(p, &cols, center);
    let chol = DroppingCholesky::factor(&g, RANK_TOL);
    if strict && !chol.dropped.is_empty() {
        return Err(Error::Singular {
            columns: chol.dropped.iter().map(|&q| names[cols[q]].clone()).collect(),
        });
    }
    let sol = chol.solve(&rhs);
    let mut coefficients = vec![0.0; n_cols];
    for (q, &j) in cols.iter().enumerate() {
        coefficients[j] = sol[q];
    }
    let m = p.m as f64;
    let intercept = if center {
        (p.y_sum - cols.iter().map(|&j| coefficients[j] * p.col_sum[j]).sum::<f64>()) / m
    } else {
        0.0
    };
    Ok(RawFit {
        coefficients,
        intercept,
        dropped: chol.dropped.iter().map(|&q| cols[q]).collect(),
    })
}

/// Ridge regression from moments: minimizes
/// `(1/(2m)) ||y - B rho||^2 + (lambda/2) ||rho||^2` over non-constant
/// columns, with an unpenalized intercept when a constant column is present.
pub(crate) fn solve_ridge(p: &LinearProblem, constant: &[bool], lambda: f64) -> Result<RawFit> {
    if !(lambda > 0.0) {
        return Err(Error::parameter(format!("ridge lambda must be > 0, got {lambda}")));
    }
    let n_cols = constant.len();
    let center = constant.iter().any(|&c| c);
    let cols: Vec<usize> = (0..n_cols).filter(|&j| !constant[j]).collect();
    let (mut g, mut rhs) = centered_system(p, &cols, center);
    let m = p.m as f64;
    g.mapv_inplace(|v| v / m);
    for q in 0..cols.len() {
        g[[q, q]] += lambda;
    }
    for v in rhs.iter_mut() {
        *v /= m;
    }
    let chol = DroppingCholesky::factor(&g, 0.0);
    let sol = chol.solve(&rhs);
    let mut coefficients = vec![0.0; n_cols];
    for (q, &j) in cols.iter().enumerate() {
        coefficients[j] = sol[q];
    }
    let intercept = if center {
        (p.y_sum - cols.iter().map(|&j| coefficients[j] * p.col_sum[j]).sum::<f64>()) / m
    } else {
        0.0
    };
    Ok(RawFit {
        coefficients,
        intercept,
        dropped: Vec::new(),
    })
}

/// Standardized coordinate-descent workspace for one LASSO problem.
///
/// Coefficients inside the solver live on standardized columns (subset mean
/// zero when centering, unit second moment); the penalty applies on that
/// scale and solutions map back to raw coefficients.
pub(crate) struct CdProblem {
    /// Active (penalizable, non-degenerate) column indices into the design.
    active: Vec<usize>,
    /// Standardized gram over active columns, `(1/m) Btilde' Btilde`.
    gs: Array2<f64>,
    /// `(1/m) Btilde' ytilde`.
    c: Vec<f64>,
    /// Per active column: raw scale divisor.
    scale: Vec<f64>,
    /// Per active column: raw mean (zero when not centering).
    mean: Vec<f64>,
    /// `(1/m) ytilde'ytilde` for objective values.
    y2: f64,
    y_mean: f64,
    center: bool,
    n_cols: usize,
    m: usize,
}

/// A LASSO solution plus the per-sweep objective trace.
#[derive(Debug, Clone)]
pub(crate) struct LassoSolution {
    pub fit: RawFit,
    pub sweeps: usize,
    /// Objective value after each completed sweep.
    pub objective_trace: Vec<f64>,
}

impl CdProblem {
    pub fn new(p: &LinearProblem, constant: &[bool]) -> Self {
        let n_cols = constant.len();
        let m = p.m as f64;
        let center = constant.iter().any(|&c| c);
        let mut active = Vec::new();
        let mut scale = Vec::new();
        let mut mean = Vec::new();
        for j in 0..n_cols {
            if constant[j] {
                continue;
            }
            let mu = if center { p.col_sum[j] / m } else { 0.0 };
            let second = p.g[[j, j]] / m - mu * mu;
            if second <= 1e-24 {
                // Degenerate on this subset (e.g. an examiner dummy whose
                // examiner is absent): forced to coefficient zero.
                continue;
            }
            active.push(j);
            scale.push(second.sqrt());
            mean.push(mu);
        }
        let k = active.len();
        let y_mean = if center { p.y_sum / m } else { 0.0 };
        let mut gs = Array2::zeros((k, k));
        let mut c = vec![0.0; k];
        for a in 0..k {
            let ja = active[a];
            for b in 0..k {
                let jb = active[b];
                gs[[a, b]] =
                    (p.g[[ja, jb]] / m - mean[a] * mean[b]) / (scale[a] * scale[b]);
            }
            c[a] = (p.bty[ja] / m - mean[a] * y_mean) / scale[a];
        }
        let y2 = p.yty / m - y_mean * y_mean;
        CdProblem {
            active,
            gs,
            c,
            scale,
            mean,
            y2,
            y_mean,
            center,
            n_cols,
            m: p.m,
        }
    }

    /// Smallest penalty that zeroes every active coefficient.
    pub fn penalty_max(&self) -> f64 {
        self.c.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    fn objective(&self, beta: &[f64], q: &[f64], r: f64) -> f64 {
        let quad: f64 = beta.iter().zip(q.iter()).map(|(&b, &qv)| b * qv).sum();
        let lin: f64 = beta.iter().zip(self.c.iter()).map(|(&b, &cv)| b * cv).sum();
        let l1: f64 = beta.iter().map(|b| b.abs()).sum();
        0.5 * (self.y2 - 2.0 * lin + quad) + r * l1
    }

    /// Cyclic coordinate descent with active-set sweeps after the first full
    /// pass. `beta` and `q = gs * beta` carry warm-start state across calls.
    pub fn solve_warm(
        &self,
        r: f64,
        beta: &mut Vec<f64>,
        q: &mut Vec<f64>,
    ) -> Result<LassoSolution> {
        let k = self.active.len();
        if beta.len() != k {
            *beta = vec![0.0; k];
            *q = vec![0.0; k];
        }
        let mut sweeps = 0usize;
        let mut trace = Vec::new();
        let mut converged = false;
        while sweeps < MAX_SWEEPS {
            // Full sweep.
            let delta = self.sweep(r, beta, q, None);
            sweeps += 1;
            trace.push(self.objective(beta, q, r));
            if delta < CD_TOL {
                converged = true;
                break;
            }
            // Active-set sweeps until stable, then re-verify with a full pass.
            let active_set: Vec<usize> = (0..k).filter(|&a| beta[a] != 0.0).collect();
            while sweeps < MAX_SWEEPS {
                let delta = self.sweep(r, beta, q, Some(&active_set));
                sweeps += 1;
                trace.push(self.objective(beta, q, r));
                if delta < CD_TOL {
                    break;
                }
            }
        }
        if !converged {
            // One more full sweep to measure the remaining gap honestly.
            let gap = self.sweep(r, beta, q, None);
            if gap >= CD_TOL {
                let fit = self.raw_fit(beta);
                return Err(Error::NonConvergence {
                    sweeps,
                    gap,
                    last_coefficients: fit.coefficients,
                });
            }
        }
        Ok(LassoSolution {
            fit: self.raw_fit(beta),
            sweeps,
            objective_trace: trace,
        })
    }

    pub fn solve(&self, r: f64) -> Result<LassoSolution> {
        let mut beta = Vec::new();
        let mut q = Vec::new();
        self.solve_warm(r, &mut beta, &mut q)
    }

    fn sweep(&self, r: f64, beta: &mut [f64], q: &mut [f64], subset: Option<&[usize]>) -> f64 {
        let k = self.active.len();
        let mut max_delta = 0.0_f64;
        let indices: Box<dyn Iterator<Item = usize>> = match subset {
            Some(s) => Box::new(s.iter().copied()),
            None => Box::new(0..k),
        };
        for a in indices {
            let gaa = self.gs[[a, a]];
            if gaa <= 0.0 {
                continue;
            }
            let old = beta[a];
            let grad = self.c[a] - q[a] + gaa * old;
            let new = soft_threshold(grad, r) / gaa;
            if new != old {
                let d = new - old;
                // Maintain q = gs * beta.
                let col = self.gs.column(a);
                for (qv, &gv) in q.iter_mut().zip(col.iter()) {
                    *qv += d * gv;
                }
                beta[a] = new;
                max_delta = max_delta.max(d.abs());
            }
        }
        max_delta
    }

    fn raw_fit(&self, beta: &[f64]) -> RawFit {
        let mut coefficients = vec![0.0; self.n_cols];
        for (a, &j) in self.active.iter().enumerate() {
            coefficients[j] = beta[a] / self.scale[a];
        }
        let intercept = if self.center {
            self.y_mean
                - self
                    .active
                    .iter()
                    .enumerate()
                    .map(|(a, &j)| coefficients[j] * self.mean[a])
                    .sum::<f64>()
        } else {
            0.0
        };
        RawFit {
            coefficients,
            intercept,
            dropped: Vec::new(),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }
}

pub(crate) fn soft_threshold(v: f64, r: f64) -> f64 {
    if v > r {
        v - r
    } else if v < -r {
        v + r
    } else {
        0.0
    }
}

/// Log-spaced descending penalty grid from `penalty_max` down to
/// `min_ratio * penalty_max`.
pub(crate) fn penalty_grid(penalty_max: f64, size: usize, min_ratio: f64) -> Vec<f64> {
    if !(penalty_max > 0.0) {
        return vec![0.0];
    }
    if size <= 1 {
        return vec![penalty_max];
    }
    let log_max = penalty_max.ln();
    let log_min = (penalty_max * min_ratio).ln();
    (0..size)
        .map(|i| (log_max + (log_min - log_max) * i as f64 / (size - 1) as f64).exp())
        .collect()
}

/// One inner cross-validation fold: training moments plus the held-out rows.
pub(crate) struct CvFold<'a> {
    pub train: LinearProblem,
    pub validation_rows: &'a [usize],
}

/// Chooses the grid penalty minimizing out-of-fold mean squared error, with
/// ties broken toward the larger penalty. The grid is evaluated descending
/// with warm starts.
pub(crate) fn cv_choose_penalty(
    values: &ArrayView2<f64>,
    target: &[f64],
    constant: &[bool],
    folds: &[CvFold<'_>],
    grid: &[f64],
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::parameter("empty penalty grid"));
    }
    let mut grid = grid.to_vec();
    grid.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut sse = vec![0.0; grid.len()];
    for fold in folds {
        let cd = CdProblem::new(&fold.train, constant);
        let mut beta = Vec::new();
        let mut q = Vec::new();
        for (gi, &r) in grid.iter().enumerate() {
            let sol = cd.solve_warm(r, &mut beta, &mut q)?;
            for &row in fold.validation_rows {
                let mut pred = sol.fit.intercept;
                for (j, &coef) in sol.fit.coefficients.iter().enumerate() {
                    if coef != 0.0 {
                        pred += coef * values[[row, j]];
                    }
                }
                let err = target[row] - pred;
                sse[gi] += err * err;
            }
        }
    }
    // Descending grid: strictly-smaller keeps the earliest (largest) penalty.
    let mut best = 0usize;
    for gi in 1..grid.len() {
        if sse[gi] < sse[best] {
            best = gi;
        }
    }
    Ok(grid[best])
}
