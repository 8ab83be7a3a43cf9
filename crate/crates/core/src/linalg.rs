//! Small dense linear-algebra helpers: a Cholesky factorization that skips
//! linearly dependent columns instead of failing, plus solves and leverages
//! built on it.

use ndarray::Array2;

/// Cholesky factor of a Gram matrix `G = B'B` restricted to a maximal set of
/// independent columns. Columns whose pivot falls below `rel_tol * G[j,j]`
/// are recorded in `dropped` and excluded; earlier columns win, so the result
/// is deterministic in column order.
#[derive(Debug, Clone)]
pub(crate) struct DroppingCholesky {
    /// Lower-triangular factor over the kept columns, row-major by kept rank.
    factor: Vec<Vec<f64>>,
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
    dim: usize,
}

impl DroppingCholesky {
    pub fn factor(g: &Array2<f64>, rel_tol: f64) -> Self {
        let dim = g.nrows();
        let mut factor: Vec<Vec<f64>> = Vec::new();
        let mut kept: Vec<usize> = Vec::new();
        let mut dropped: Vec<usize> = Vec::new();
        for j in 0..dim {
            let gjj = g[[j, j]];
            if !(gjj > 0.0) {
                dropped.push(j);
                continue;
            }
            // Row of the factor for column j against previously kept columns.
            let k = kept.len();
            let mut row = vec![0.0; k + 1];
            for q in 0..k {
                let mut v = g[[j, kept[q]]];
                for r in 0..q {
                    v -= row[r] * factor[q][r];
                }
                row[q] = v / factor[q][q];
            }
            let pivot2 = gjj - row[..k].iter().map(|v| v * v).sum::<f64>();
            if pivot2 <= rel_tol * gjj {
                dropped.push(j);
            } else {
                row[k] = pivot2.sqrt();
                factor.push(row);
                kept.push(j);
            }
        }
        DroppingCholesky {
            factor,
            kept,
            dropped,
            dim,
        }
    }

    /// Solves `G x = rhs` over the kept columns; dropped coordinates are 0.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let k = self.kept.len();
        // Forward substitution L y = rhs_kept.
        let mut y = vec![0.0; k];
        for q in 0..k {
            let mut v = rhs[self.kept[q]];
            for r in 0..q {
                v -= self.factor[q][r] * y[r];
            }
            y[q] = v / self.factor[q][q];
        }
        // Back substitution L' x = y.
        let mut x = vec![0.0; k];
        for q in (0..k).rev() {
            let mut v = y[q];
            for r in (q + 1)..k {
                v -= self.factor[r][q] * x[r];
            }
            x[q] = v / self.factor[q][q];
        }
        let mut full = vec![0.0; self.dim];
        for (q, &j) in self.kept.iter().enumerate() {
            full[j] = x[q];
        }
        full
    }

    /// Leverage of a row `w`: `w'(B'B)^+ w = ||L^{-1} w_kept||^2`, the
    /// diagonal entry of the projection matrix onto the column span.
    pub fn leverage(&self, w: &[f64]) -> f64 {
        let k = self.kept.len();
        let mut y = vec![0.0; k];
        let mut h = 0.0;
        for q in 0..k {
            let mut v = w[self.kept[q]];
            for r in 0..q {
                v -= self.factor[q][r] * y[r];
            }
            y[q] = v / self.factor[q][q];
            h += y[q] * y[q];
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_a_full_rank_system() {
        // G = B'B for B = [[1,0],[1,1],[1,2]]
        let g = array![[3.0, 3.0], [3.0, 5.0]];
        let chol = DroppingCholesky::factor(&g, 1e-10);
        assert!(chol.dropped.is_empty());
        // Solve G x = [6, 8] -> x = [1, 1]
        let x = chol.solve(&[6.0, 8.0]);
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn drops_duplicated_column() {
        let g = array![[2.0, 2.0, 3.0], [2.0, 2.0, 3.0], [3.0, 3.0, 6.0]];
        let chol = DroppingCholesky::factor(&g, 1e-10);
        assert_eq!(chol.dropped, vec![1]);
        assert_eq!(chol.kept, vec![0, 2]);
    }

    #[test]
    fn drops_zero_column() {
        let g = array![[0.0, 0.0], [0.0, 4.0]];
        let chol = DroppingCholesky::factor(&g, 1e-10);
        assert_eq!(chol.dropped, vec![0]);
        let x = chol.solve(&[0.0, 8.0]);
        assert_eq!(x[0], 0.0);
        assert!((x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn leverages_sum_to_rank() {
        // B = identity-ish design: 4 rows, 2 cols.
        let b = array![[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 3.0]];
        let g = b.t().dot(&b);
        let chol = DroppingCholesky::factor(&g, 1e-10);
        let total: f64 = b
            .rows()
            .into_iter()
            .map(|row| chol.leverage(row.as_slice().unwrap()))
            .sum();
        assert!((total - 2.0).abs() < 1e-10);
    }
}
