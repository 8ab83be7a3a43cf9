//! Per-case data model, validation, and CSV loading.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// One observation per case: outcome, binary treatment, covariates, the
/// identifier of the examiner the case was assigned to, and an optional
/// stratum label (e.g. court-by-time cell) within which assignment is random.
///
/// Examiner identifiers are remapped to dense `1..=J` at construction so
/// dummy encoding is stable; `examiner_labels` maps dense ids back to the
/// original values.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub t: Vec<f64>,
    /// Covariate matrix, one row per case.
    pub x: Array2<f64>,
    /// Dense examiner ids in `1..=J`.
    pub z: Vec<u32>,
    /// Optional dense stratum labels in `1..=S`.
    pub stratum: Option<Vec<u32>>,
    /// Original examiner identifiers, indexed by dense id minus one.
    pub examiner_labels: Vec<u64>,
}

impl Dataset {
    /// Builds a dataset from raw columns, remapping examiner identifiers to
    /// dense `1..=J` (in order of first appearance is *not* used; labels are
    /// sorted so the mapping is independent of row order).
    pub fn new(
        y: Vec<f64>,
        t: Vec<f64>,
        x: Array2<f64>,
        z_raw: Vec<u64>,
        stratum_raw: Option<Vec<u64>>,
    ) -> Result<Self> {
        let n = y.len();
        if t.len() != n || z_raw.len() != n || x.nrows() != n {
            return Err(Error::parameter(format!(
                "column lengths disagree: y={}, t={}, z={}, x rows={}",
                n,
                t.len(),
                z_raw.len(),
                x.nrows()
            )));
        }
        if let Some(s) = &stratum_raw {
            if s.len() != n {
                return Err(Error::parameter(format!(
                    "stratum length {} != n {}",
                    s.len(),
                    n
                )));
            }
        }
        let (z, examiner_labels) = dense_remap(&z_raw);
        let stratum = stratum_raw.map(|s| dense_remap(&s).0);
        Ok(Dataset {
            y,
            t,
            x,
            z,
            stratum,
            examiner_labels,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of distinct examiners.
    pub fn n_examiners(&self) -> usize {
        self.examiner_labels.len()
    }

    /// Number of distinct strata (0 when no stratum column is present).
    pub fn n_strata(&self) -> usize {
        self.stratum
            .as_ref()
            .map(|s| s.iter().copied().max().unwrap_or(0) as usize)
            .unwrap_or(0)
    }

    pub fn n_covariates(&self) -> usize {
        self.x.ncols()
    }

    /// Loads a dataset from a CSV file with a header row. Required columns:
    /// `y`, `t`, `z`; covariates are the columns named `x1..xp`; an optional
    /// `stratum` column carries integer stratum labels.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path.as_ref())?;
        let headers = reader.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);

        let y_col = col("y").ok_or_else(|| Error::parameter("missing column `y`"))?;
        let t_col = col("t").ok_or_else(|| Error::parameter("missing column `t`"))?;
        let z_col = col("z").ok_or_else(|| Error::parameter("missing column `z`"))?;
        let stratum_col = col("stratum");

        // Covariates are x1..xp in numeric order; gaps are an error.
        let mut x_cols = Vec::new();
        for p in 1.. {
            match col(&format!("x{p}")) {
                Some(idx) => x_cols.push(idx),
                None => break,
            }
        }

        let mut y = Vec::new();
        let mut t = Vec::new();
        let mut z = Vec::new();
        let mut stratum = Vec::new();
        let mut x_data: Vec<f64> = Vec::new();
        for (row_idx, record) in reader.records().enumerate() {
            let record = record?;
            let field = |idx: usize| -> Result<&str> {
                record.get(idx).ok_or_else(|| {
                    Error::parameter(format!("row {row_idx}: missing field {idx}"))
                })
            };
            let parse_f64 = |idx: usize| -> Result<f64> {
                let s = field(idx)?;
                s.trim().parse::<f64>().map_err(|_| {
                    Error::parameter(format!("row {row_idx}: cannot parse `{s}` as a number"))
                })
            };
            let parse_u64 = |idx: usize| -> Result<u64> {
                let s = field(idx)?;
                s.trim().parse::<u64>().map_err(|_| {
                    Error::parameter(format!("row {row_idx}: cannot parse `{s}` as an integer id"))
                })
            };
            y.push(parse_f64(y_col)?);
            t.push(parse_f64(t_col)?);
            z.push(parse_u64(z_col)?);
            if let Some(sc) = stratum_col {
                stratum.push(parse_u64(sc)?);
            }
            for &xc in &x_cols {
                x_data.push(parse_f64(xc)?);
            }
        }
        let n = y.len();
        let x = Array2::from_shape_vec((n, x_cols.len()), x_data)
            .map_err(|e| Error::parameter(format!("bad covariate shape: {e}")))?;
        Dataset::new(y, t, x, z, if stratum_col.is_some() { Some(stratum) } else { None })
    }
}

fn dense_remap(raw: &[u64]) -> (Vec<u32>, Vec<u64>) {
    let mut labels: Vec<u64> = raw.to_vec();
    labels.sort_unstable();
    labels.dedup();
    let index: BTreeMap<u64, u32> = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| (l, (i + 1) as u32))
        .collect();
    let dense = raw.iter().map(|r| index[r]).collect();
    (dense, labels)
}

/// A single invariant violation found by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Row index of the offending observation, when one exists.
    pub index: Option<usize>,
    pub message: String,
}

/// Outcome of dataset validation. Violations are data, not failures: the
/// report lists every breach with the offending index.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every dataset invariant: shared length n >= 2, binary treatment,
/// at least two examiners each appearing at least once, and no non-finite
/// values anywhere.
pub fn validate_dataset(d: &Dataset) -> ValidationReport {
    let mut violations = Vec::new();
    let n = d.n();
    let mut fail = |index: Option<usize>, message: String| {
        violations.push(Violation { index, message });
    };

    if n < 2 {
        fail(None, format!("n = {n} < 2"));
    }
    for (i, &ti) in d.t.iter().enumerate() {
        if ti != 0.0 && ti != 1.0 {
            fail(Some(i), format!("treatment not binary at {i} (value {ti})"));
        }
    }
    if d.n_examiners() < 2 {
        fail(None, format!("J < 2 (found {} examiner(s))", d.n_examiners()));
    }
    for (i, &yi) in d.y.iter().enumerate() {
        if !yi.is_finite() {
            fail(Some(i), format!("non-finite outcome at {i}"));
        }
    }
    for (i, row) in d.x.rows().into_iter().enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            fail(Some(i), format!("non-finite covariate at {i}"));
        }
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy() -> Dataset {
        Dataset::new(
            vec![1.0, 0.0, 2.0, 1.5],
            vec![1.0, 0.0, 1.0, 0.0],
            array![[0.1], [0.2], [-0.3], [0.4]],
            vec![10, 20, 10, 20],
            None,
        )
        .unwrap()
    }

    #[test]
    fn well_formed_toy_is_ok() {
        let report = validate_dataset(&toy());
        assert!(report.ok(), "unexpected violations: {:?}", report.violations);
    }

    #[test]
    fn non_binary_treatment_is_flagged_with_index() {
        let mut d = toy();
        d.t[3] = 2.0;
        let report = validate_dataset(&d);
        assert!(!report.ok());
        assert!(report
            .violations
            .iter()
            .any(|v| v.index == Some(3) && v.message.contains("treatment not binary at 3")));
    }

    #[test]
    fn single_examiner_is_flagged() {
        let d = Dataset::new(
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            Array2::zeros((2, 0)),
            vec![7, 7],
            None,
        )
        .unwrap();
        let report = validate_dataset(&d);
        assert!(report.violations.iter().any(|v| v.message.contains("J < 2")));
    }

    #[test]
    fn non_finite_values_are_flagged() {
        let mut d = toy();
        d.y[1] = f64::NAN;
        d.x[[2, 0]] = f64::INFINITY;
        let report = validate_dataset(&d);
        assert_eq!(report.violations.len(), 2);
    }

    #[test]
    fn examiner_ids_are_remapped_dense() {
        let d = toy();
        assert_eq!(d.z, vec![1, 2, 1, 2]);
        assert_eq!(d.examiner_labels, vec![10, 20]);
    }

    #[test]
    fn csv_round_trip() {
        use std::io::Write;
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "y,t,z,x1,x2,stratum").unwrap();
        writeln!(file, "1.5,1,3,0.1,-0.2,1").unwrap();
        writeln!(file, "0.5,0,5,0.3,0.4,2").unwrap();
        writeln!(file, "2.5,1,3,-0.1,0.0,1").unwrap();
        let d = Dataset::from_csv(file.path()).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.n_covariates(), 2);
        assert_eq!(d.z, vec![1, 2, 1]);
        assert_eq!(d.stratum, Some(vec![1, 2, 1]));
        assert_eq!(d.y, vec![1.5, 0.5, 2.5]);
    }
}
