//! Reproducible random partitions of the sample into folds.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A random partition of `{0..n}` into `L` disjoint folds whose sizes differ
/// by at most one. Indices are shuffled with a seeded generator and dealt
/// round-robin, so the plan is a deterministic function of `(n, L, seed)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    folds: Vec<Vec<usize>>,
    seed: u64,
}

impl FoldPlan {
    pub fn n_folds(&self) -> usize {
        self.folds.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Observation indices in fold `l` (ascending).
    pub fn fold(&self, l: usize) -> &[usize] {
        &self.folds[l]
    }

    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }

    /// Total number of observations.
    pub fn n(&self) -> usize {
        self.folds.iter().map(|f| f.len()).sum()
    }

    /// Fold id of each observation.
    pub fn fold_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.n()];
        for (l, fold) in self.folds.iter().enumerate() {
            for &i in fold {
                out[i] = l;
            }
        }
        out
    }

    /// Indices outside fold `l` (ascending).
    pub fn complement(&self, l: usize) -> Vec<usize> {
        let fold_of = self.fold_of();
        (0..self.n()).filter(|&i| fold_of[i] != l).collect()
    }

    /// Indices outside both folds `l` and `l2` (ascending).
    pub fn complement_pair(&self, l: usize, l2: usize) -> Vec<usize> {
        let fold_of = self.fold_of();
        (0..self.n())
            .filter(|&i| fold_of[i] != l && fold_of[i] != l2)
            .collect()
    }
}

/// Randomly partitions `{0..n}` into `L` folds. Requires `2 <= L <= n`.
pub fn make_folds(n: usize, l: usize, seed: u64) -> Result<FoldPlan> {
    if l < 2 || l > n {
        return Err(Error::parameter(format!(
            "fold count L={l} outside [2, n={n}]"
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let mut folds = vec![Vec::with_capacity(n / l + 1); l];
    for (pos, idx) in indices.into_iter().enumerate() {
        folds[pos % l].push(idx);
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(FoldPlan { folds, seed })
}
