//! K-fold selection of the ridge penalty.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::metrics::r_squared;
use super::solver::{RidgeFit, RidgePath, Standardization};
use super::split::kfold_assign;
use crate::error::{Error, Result};

/// `points` values log-spaced from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..points)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (points - 1) as f64))
        .collect()
}

/// Twelve penalties log-spaced over `1e-4 ..= 1e4`.
pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(1e-4, 1e4, 12)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvOptions {
    pub folds: usize,
    pub standardize: bool,
    /// Clip validation predictions to the training-fold label range.
    pub clip: bool,
    pub seed: u64,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            folds: 5,
            standardize: true,
            clip: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub lambdas: Vec<f64>,
    /// `r2[l][f]`: validation R^2 at penalty `l` on fold `f`; `None` when the
    /// validation fold has constant labels.
    pub r2: Vec<Vec<Option<f64>>>,
    pub mean_r2: Vec<f64>,
    pub chosen: usize,
    pub fold_of: Vec<usize>,
    /// The chosen penalty is the first or last grid value.
    pub boundary: bool,
    pub degenerate_folds: Vec<usize>,
}

impl CvReport {
    pub fn chosen_lambda(&self) -> f64 {
        self.lambdas[self.chosen]
    }

    pub fn best_mean_r2(&self) -> f64 {
        self.mean_r2[self.chosen]
    }

    /// Validation R^2 of each usable fold at the chosen penalty.
    pub fn chosen_fold_r2(&self) -> Vec<f64> {
        self.r2[self.chosen].iter().flatten().cloned().collect()
    }
}

/// Fit one fold: standardization and weights come from `train` rows only.
pub fn fit_cv_fold(
    x: &DMatrix<f64>,
    y: &[f64],
    train: &[usize],
    lambdas: &[f64],
    standardize: bool,
) -> Result<(Standardization, Vec<RidgeFit>)> {
    let std = Standardization::fit(x, train, standardize);
    let xs = std.apply(x, train);
    let ytr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let ybar = ytr.iter().sum::<f64>() / ytr.len() as f64;
    let yc: Vec<f64> = ytr.iter().map(|v| v - ybar).collect();
    let path = RidgePath::new(&xs, &yc)?;
    let fits = lambdas
        .iter()
        .map(|&l| {
            Ok(RidgeFit {
                beta: path.coef(l)?,
                intercept: ybar,
            })
        })
        .collect::<Result<_>>()?;
    Ok((std, fits))
}

/// Select the penalty maximising mean validation R^2 across folds. Ties go
/// to the smallest penalty. `y` is in the space the model is fit in.
pub fn tune_lambda(x: &DMatrix<f64>, y: &[f64], lambdas: &[f64], opts: &CvOptions) -> Result<CvReport> {
    let fold_of = kfold_assign(x.nrows(), opts.folds, opts.seed)?;
    tune_lambda_with_folds(x, y, lambdas, &fold_of, opts)
}

pub(crate) fn tune_lambda_with_folds(
    x: &DMatrix<f64>,
    y: &[f64],
    lambdas: &[f64],
    fold_of: &[usize],
    opts: &CvOptions,
) -> Result<CvReport> {
    let n = x.nrows();
    if y.len() != n || fold_of.len() != n {
        return Err(Error::shape("rows, labels and fold labels disagree"));
    }
    if lambdas.is_empty() {
        return Err(Error::invalid("empty penalty grid"));
    }
    if lambdas.windows(2).any(|w| w[1] < w[0]) || lambdas.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::invalid("penalty grid must be nonnegative and ascending"));
    }
    let folds = fold_of.iter().max().map_or(0, |m| m + 1);
    if folds < 2 {
        return Err(Error::invalid("need at least 2 folds"));
    }

    let per_fold: Vec<Vec<Option<f64>>> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
            let valid: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
            let (std, fits) = fit_cv_fold(x, y, &train, lambdas, opts.standardize)?;
            let (lo, hi) = train
                .iter()
                .map(|&i| y[i])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            let xv = std.apply(x, &valid);
            let yv: Vec<f64> = valid.iter().map(|&i| y[i]).collect();
            Ok(fits
                .iter()
                .map(|fit| {
                    let pred: Vec<f64> = (0..valid.len())
                        .map(|r| {
                            let p = fit.intercept
                                + xv.row(r).iter().zip(&fit.beta).map(|(a, b)| a * b).sum::<f64>();
                            if opts.clip {
                                p.clamp(lo, hi)
                            } else {
                                p
                            }
                        })
                        .collect();
                    r_squared(&yv, &pred).ok()
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let degenerate_folds: Vec<usize> = (0..folds)
        .filter(|&f| per_fold[f].iter().all(|v| v.is_none()))
        .collect();
    if degenerate_folds.len() == folds {
        return Err(Error::ZeroVariance("every validation fold has constant labels".into()));
    }
    let r2: Vec<Vec<Option<f64>>> = (0..lambdas.len())
        .map(|l| (0..folds).map(|f| per_fold[f][l]).collect())
        .collect();
    let mean_r2: Vec<f64> = r2
        .iter()
        .map(|row| {
            let vals: Vec<f64> = row.iter().flatten().cloned().collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        })
        .collect();
    let mut chosen = 0;
    for l in 1..lambdas.len() {
        if mean_r2[l] > mean_r2[chosen] + 1e-12 {
            chosen = l;
        }
    }
    Ok(CvReport {
        lambdas: lambdas.to_vec(),
        r2,
        mean_r2,
        chosen,
        fold_of: fold_of.to_vec(),
        boundary: chosen == 0 || chosen == lambdas.len() - 1,
        degenerate_folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn design(n: usize, k: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, k, |_, _| rng.random::<f64>())
    }

    #[test]
    fn grid_shape() {
        let g = default_lambda_grid();
        assert_eq!(g.len(), 12);
        assert!((g[0] - 1e-4).abs() < 1e-18 && (g[11] - 1e4).abs() < 1e-8);
    }

    #[test]
    fn noiseless_linear_picks_smallest() {
        let x = design(100, 5, 1);
        let y: Vec<f64> = (0..100).map(|i| (0..5).map(|j| (j as f64 + 1.0) * x[(i, j)]).sum()).collect();
        let rep = tune_lambda(&x, &y, &default_lambda_grid(), &CvOptions::default()).unwrap();
        assert_eq!(rep.chosen, 0);
        assert!(rep.boundary);
        assert!(rep.best_mean_r2() > 0.999);
    }

    #[test]
    fn pure_noise_prefers_heavy_penalty() {
        let x = design(120, 30, 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let y: Vec<f64> = (0..120).map(|_| rng.random::<f64>()).collect();
        let rep = tune_lambda(&x, &y, &default_lambda_grid(), &CvOptions::default()).unwrap();
        assert!(rep.chosen_lambda() >= 10.0, "{}", rep.chosen_lambda());
        assert!(rep.best_mean_r2() <= 0.05);
    }

    #[test]
    fn ties_go_to_smallest() {
        // a constant design column gives identical predictions at every penalty
        let x = DMatrix::from_element(20, 1, 1.0);
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let rep = tune_lambda(&x, &y, &[0.1, 1.0, 10.0], &CvOptions::default()).unwrap();
        assert_eq!(rep.chosen, 0);
    }

    #[test]
    fn validation_rows_are_never_read() {
        let mut x = design(50, 4, 5);
        let y: Vec<f64> = (0..50).map(|i| x[(i, 0)] + 0.1 * i as f64).collect();
        let folds = kfold_assign(50, 5, 1).unwrap();
        let train: Vec<usize> = (0..50).filter(|&i| folds[i] != 2).collect();
        let grid = [0.1, 1.0];
        let (s1, f1) = fit_cv_fold(&x, &y, &train, &grid, true).unwrap();
        let mut y2 = y.clone();
        for i in 0..50 {
            if folds[i] == 2 {
                y2[i] = f64::NAN;
                for j in 0..4 {
                    x[(i, j)] = f64::NAN;
                }
            }
        }
        let (s2, f2) = fit_cv_fold(&x, &y2, &train, &grid, true).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(f1, f2);
    }

    #[test]
    fn degenerate_fold_is_excluded() {
        let x = design(10, 2, 1);
        let folds = vec![0, 0, 1, 1, 2, 2, 0, 1, 2, 0];
        let mut y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        for i in 0..10 {
            if folds[i] == 1 {
                y[i] = 3.0;
            }
        }
        let rep = tune_lambda_with_folds(&x, &y, &[1.0], &folds, &CvOptions::default()).unwrap();
        assert_eq!(rep.degenerate_folds, vec![1]);
        assert!(rep.mean_r2[0].is_finite());
    }

    #[test]
    fn too_few_rows() {
        let x = design(3, 2, 1);
        assert!(tune_lambda(&x, &[1.0, 2.0, 3.0], &[1.0], &CvOptions::default()).is_err());
    }
}
