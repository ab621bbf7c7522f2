use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// Random `(train/validation, test)` split with `round(n * frac)` test rows
/// (at least one of each). Both index lists are returned sorted.
pub fn holdout_split(n: usize, frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::invalid("holdout split needs at least 2 rows"));
    }
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::invalid(format!("holdout fraction {frac} not in (0, 1)")));
    }
    let n_test = ((n as f64 * frac).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, "holdout"));
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Fold label in `0..folds` for each of `n` rows; fold sizes differ by at
/// most one.
pub fn kfold_assign(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::invalid("need at least 2 folds"));
    }
    if n < folds {
        return Err(Error::invalid(format!("{n} rows cannot fill {folds} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, "folds"));
    let mut labels = vec![0; n];
    for (pos, &i) in idx.iter().enumerate() {
        labels[i] = pos % folds;
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn holdout_sizes_and_partition() {
        let (tr, te) = holdout_split(10, 0.2, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        let mut all: Vec<_> = tr.iter().chain(&te).cloned().collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(holdout_split(1, 0.2, 1).is_err());
        assert!(holdout_split(10, 1.0, 1).is_err());
        assert_eq!(holdout_split(50, 0.2, 9).unwrap(), holdout_split(50, 0.2, 9).unwrap());
    }

    #[test]
    fn holdout_membership_is_uniform() {
        let (n, frac, seeds) = (20, 0.2, 10_000u64);
        let mut hits = vec![0u32; n];
        for s in 0..seeds {
            for i in holdout_split(n, frac, s).unwrap().1 {
                hits[i] += 1;
            }
        }
        let sd = (seeds as f64 * frac * (1.0 - frac)).sqrt();
        let mean = seeds as f64 * frac;
        assert!((hits[0] as f64 - mean).abs() < 3.0 * sd);
        assert!(hits.iter().all(|&h| (h as f64 - mean).abs() < 4.5 * sd), "{hits:?}");
    }

    #[test]
    fn folds_are_balanced_and_reproducible() {
        let f = kfold_assign(10, 5, 3).unwrap();
        for k in 0..5 {
            assert_eq!(f.iter().filter(|&&v| v == k).count(), 2);
        }
        assert_eq!(f, kfold_assign(10, 5, 3).unwrap());
        let g = kfold_assign(23, 5, 3).unwrap();
        let sizes: Vec<_> = (0..5).map(|k| g.iter().filter(|&&v| v == k).count()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert!(kfold_assign(3, 5, 1).is_err());
        assert!(kfold_assign(3, 1, 1).is_err());
    }
}
