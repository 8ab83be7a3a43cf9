//! Dictionary (feature map) construction: intercept, examiner and stratum
//! dummies, covariate polynomials, and interactions.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Which interaction columns to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Interactions {
    #[default]
    None,
    /// One dummy per observed (examiner, stratum) pair.
    ExaminerByStratum,
    /// Products of distinct degree-1 covariates.
    CovariatePairs,
    /// Examiner-by-stratum dummies, covariate pairs, and examiner-by-covariate
    /// products.
    Full,
}

/// Declarative description of a dictionary `b(X, Z)` or `b(X)`.
///
/// Columns are generated in a fixed order: intercept, examiner dummies
/// `z_1..z_J`, stratum dummies `s_1..s_S`, covariate powers grouped by degree
/// (`x1..xp`, then `x1^2..xp^2`, ...), then interactions (examiner-by-stratum
/// dummies ordered by (stratum, examiner), covariate pairs `xi*xj` with
/// `i < j`, examiner-by-covariate products ordered by (examiner, covariate)).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionarySpec {
    pub include_intercept: bool,
    pub include_examiner_dummies: bool,
    pub include_stratum_dummies: bool,
    pub include_covariates: bool,
    /// Highest power of each continuous covariate; must be >= 1.
    pub polynomial_degree: usize,
    pub interactions: Interactions,
}

impl Default for DictionarySpec {
    fn default() -> Self {
        DictionarySpec {
            include_intercept: true,
            include_examiner_dummies: false,
            include_stratum_dummies: false,
            include_covariates: true,
            polynomial_degree: 1,
            interactions: Interactions::None,
        }
    }
}

impl DictionarySpec {
    /// True if the generated columns depend on the examiner identity.
    pub fn uses_examiner(&self) -> bool {
        self.include_examiner_dummies
            || matches!(
                self.interactions,
                Interactions::ExaminerByStratum | Interactions::Full
            )
    }
}

/// A realized dictionary: the n x p_dict value matrix plus the bookkeeping
/// needed to undo standardization and to exempt constant columns from
/// penalties.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub values: Array2<f64>,
    pub names: Vec<String>,
    pub column_means: Array1<f64>,
    pub column_scales: Array1<f64>,
    pub standardized: bool,
    /// Constant columns (intercept included) are never scaled or penalized.
    pub constant: Vec<bool>,
}

impl DesignMatrix {
    /// Wraps an arbitrary raw matrix as a design, computing per-column means,
    /// scales, and constant flags without standardizing.
    pub fn from_raw(values: Array2<f64>, names: Vec<String>) -> DesignMatrix {
        assert_eq!(values.ncols(), names.len(), "one name per column");
        let n = values.nrows();
        let p = values.ncols();
        let mut column_means = Array1::zeros(p);
        let mut column_scales = Array1::ones(p);
        let mut constant = vec![false; p];
        for j in 0..p {
            let col = values.column(j);
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            if sd < 1e-12 * (1.0 + mean.abs()) {
                constant[j] = true;
            } else {
                column_means[j] = mean;
                column_scales[j] = sd;
            }
        }
        DesignMatrix {
            values,
            names,
            column_means,
            column_scales,
            standardized: false,
            constant,
        }
    }

    /// Standardizes non-constant columns in place to mean 0, sd 1.
    pub fn into_standardized(mut self) -> DesignMatrix {
        if self.standardized {
            return self;
        }
        for j in 0..self.n_cols() {
            if self.constant[j] {
                continue;
            }
            let mean = self.column_means[j];
            let scale = self.column_scales[j];
            self.values.column_mut(j).mapv_inplace(|v| (v - mean) / scale);
        }
        self.standardized = true;
        self
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    /// True for columns that an L1/L2 penalty applies to.
    pub fn penalized(&self) -> Vec<bool> {
        self.constant.iter().map(|&c| !c).collect()
    }

    /// Whether any column plays the intercept role.
    pub fn has_constant_column(&self) -> bool {
        self.constant.iter().any(|&c| c)
    }

    /// Recovers the raw-scale matrix from a standardized one.
    pub fn destandardized_values(&self) -> Array2<f64> {
        if !self.standardized {
            return self.values.clone();
        }
        let mut raw = self.values.clone();
        for j in 0..self.n_cols() {
            if self.constant[j] {
                continue;
            }
            let mean = self.column_means[j];
            let scale = self.column_scales[j];
            raw.column_mut(j).mapv_inplace(|v| v * scale + mean);
        }
        raw
    }
}

/// Builds the dictionary described by `spec` over `d`, optionally
/// standardizing non-constant columns to mean 0 and standard deviation 1
/// (1/n convention). Standardization statistics are recorded either way so
/// coefficients can be mapped back to the raw scale.
pub fn build_dictionary(d: &Dataset, spec: &DictionarySpec, standardize: bool) -> Result<DesignMatrix> {
    if spec.polynomial_degree < 1 {
        return Err(Error::parameter("polynomial_degree must be >= 1"));
    }
    let n = d.n();
    let p = d.n_covariates();
    let j_count = d.n_examiners();
    let s_count = d.n_strata();

    let needs_stratum = spec.include_stratum_dummies
        || matches!(
            spec.interactions,
            Interactions::ExaminerByStratum | Interactions::Full
        );
    if needs_stratum && d.stratum.is_none() {
        return Err(Error::parameter(
            "dictionary requests stratum information but the dataset has no stratum column",
        ));
    }

    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();

    if spec.include_intercept {
        columns.push(("intercept".to_string(), vec![1.0; n]));
    }
    if spec.include_examiner_dummies {
        for j in 1..=j_count {
            let col = d.z.iter().map(|&z| (z as usize == j) as u8 as f64).collect();
            columns.push((format!("z_{j}"), col));
        }
    }
    if spec.include_stratum_dummies {
        let stratum = d.stratum.as_ref().unwrap();
        for s in 1..=s_count {
            let col = stratum.iter().map(|&v| (v as usize == s) as u8 as f64).collect();
            columns.push((format!("s_{s}"), col));
        }
    }
    if spec.include_covariates {
        for degree in 1..=spec.polynomial_degree {
            for k in 0..p {
                let col = d.x.column(k).iter().map(|&v| v.powi(degree as i32)).collect();
                let name = if degree == 1 {
                    format!("x{}", k + 1)
                } else {
                    format!("x{}^{degree}", k + 1)
                };
                columns.push((name, col));
            }
        }
    }
    if matches!(
        spec.interactions,
        Interactions::ExaminerByStratum | Interactions::Full
    ) {
        let stratum = d.stratum.as_ref().unwrap();
        // Observed pairs only, ordered by (stratum, examiner).
        let mut pairs: Vec<(u32, u32)> = d
            .z
            .iter()
            .zip(stratum.iter())
            .map(|(&z, &s)| (s, z))
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        for (s, z) in pairs {
            let col = d
                .z
                .iter()
                .zip(stratum.iter())
                .map(|(&zi, &si)| (zi == z && si == s) as u8 as f64)
                .collect();
            columns.push((format!("z_{z}*s_{s}"), col));
        }
    }
    if matches!(
        spec.interactions,
        Interactions::CovariatePairs | Interactions::Full
    ) && spec.include_covariates
    {
        for a in 0..p {
            for b in (a + 1)..p {
                let col = d
                    .x
                    .column(a)
                    .iter()
                    .zip(d.x.column(b).iter())
                    .map(|(&u, &v)| u * v)
                    .collect();
                columns.push((format!("x{}*x{}", a + 1, b + 1), col));
            }
        }
    }
    if matches!(spec.interactions, Interactions::Full) && spec.include_covariates {
        for j in 1..=j_count {
            for k in 0..p {
                let col = d
                    .z
                    .iter()
                    .zip(d.x.column(k).iter())
                    .map(|(&z, &v)| if z as usize == j { v } else { 0.0 })
                    .collect();
                columns.push((format!("z_{j}*x{}", k + 1), col));
            }
        }
    }

    if columns.is_empty() {
        return Err(Error::parameter("dictionary spec generates zero columns"));
    }

    let p_dict = columns.len();
    let mut values = Array2::zeros((n, p_dict));
    let mut names = Vec::with_capacity(p_dict);
    for (j, (name, col)) in columns.into_iter().enumerate() {
        for (i, v) in col.into_iter().enumerate() {
            values[[i, j]] = v;
        }
        names.push(name);
    }

    let mut column_means = Array1::zeros(p_dict);
    let mut column_scales = Array1::ones(p_dict);
    let mut constant = vec![false; p_dict];
    for j in 0..p_dict {
        let col = values.column(j);
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        if sd < 1e-12 * (1.0 + mean.abs()) {
            constant[j] = true;
        } else {
            column_means[j] = mean;
            column_scales[j] = sd;
        }
    }

    if standardize {
        for j in 0..p_dict {
            if constant[j] {
                continue;
            }
            let mean = column_means[j];
            let scale = column_scales[j];
            values.column_mut(j).mapv_inplace(|v| (v - mean) / scale);
        }
    }

    Ok(DesignMatrix {
        values,
        names,
        column_means,
        column_scales,
        standardized: standardize,
        constant,
    })
}
