use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_FOLDS: usize = 5;

/// A held-out test set plus five cross-validation folds over the rest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub n_rows: usize,
    pub seed: u64,
    /// Sorted row indices.
    pub test: Vec<usize>,
    /// Sorted row indices per fold.
    pub folds: Vec<Vec<usize>>,
}

impl SplitPlan {
    /// Rows of every fold except `k`, sorted.
    pub fn train_rows(&self, k: usize) -> Vec<usize> {
        let mut rows: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != k)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        rows.sort_unstable();
        rows
    }

    pub fn train_val_rows(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = self.folds.iter().flatten().copied().collect();
        rows.sort_unstable();
        rows
    }
}

/// Test size is `round(N/4)` with halves rounded up (`(N + 2) / 4`); the
/// remaining rows are dealt into five folds whose sizes differ by at most
/// one, larger folds first.
pub fn make_split(n_rows: usize, seed: u64) -> Result<SplitPlan> {
    if n_rows < 8 {
        return Err(Error::Split(format!(
            "{n_rows} rows cannot form a test set and {N_FOLDS} non-empty folds (need at least 8)"
        )));
    }
    let mut order: Vec<usize> = (0..n_rows).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let n_test = (n_rows + 2) / 4;
    let (test, rest) = order.split_at(n_test);
    let mut test = test.to_vec();
    test.sort_unstable();

    let base = rest.len() / N_FOLDS;
    let extra = rest.len() % N_FOLDS;
    let mut folds = Vec::with_capacity(N_FOLDS);
    let mut start = 0;
    for k in 0..N_FOLDS {
        let size = base + usize::from(k < extra);
        let mut fold = rest[start..start + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += size;
    }
    Ok(SplitPlan {
        n_rows,
        seed,
        test,
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hundred_rows() {
        let p = make_split(100, 1).unwrap();
        assert_eq!(p.test.len(), 25);
        assert!(p.folds.iter().all(|f| f.len() == 15));
    }

    #[test]
    fn full_scale_rounding() {
        let p = make_split(23_982, 1).unwrap();
        assert_eq!(p.test.len(), 5_996);
        let sizes: Vec<_> = p.folds.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![3_598, 3_597, 3_597, 3_597, 3_597]);
    }

    #[test]
    fn too_small_is_error() {
        assert!(matches!(make_split(7, 0), Err(Error::Split(_))));
        assert!(make_split(8, 0).unwrap().folds.iter().all(|f| !f.is_empty()));
    }

    proptest! {
        #[test]
        fn partition_invariants(n in 8usize..2_000, seed in any::<u64>()) {
            let p = make_split(n, seed).unwrap();
            prop_assert_eq!(&p, &make_split(n, seed).unwrap());
            let mut seen = vec![0u8; n];
            for &r in p.test.iter().chain(p.folds.iter().flatten()) {
                seen[r] += 1;
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let sizes: Vec<_> = p.folds.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            prop_assert!((p.test.len() as f64 - n as f64 / 4.0).abs() <= 1.0);
            prop_assert_eq!(p.train_rows(0).len() + p.folds[0].len(), n - p.test.len());
        }
    }
}
