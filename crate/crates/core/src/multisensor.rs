//! A second sensor: binned nightlights statistics and ridge with one
//! penalty per feature block.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ridge::{kfold_assign, r_squared, RidgePath, Standardization};

pub const NL_BINS: usize = 19;
pub const NL_FEATURES: usize = NL_BINS + 3;
pub const NL_MIN: f64 = 0.1;
pub const NL_MAX: f64 = 500.0;

/// The 20 log-uniform bin edges from 0.1 to 500.
pub fn nightlights_edges() -> [f64; NL_BINS + 1] {
    let (a, b) = (NL_MIN.log10(), NL_MAX.log10());
    let mut e = [0.0; NL_BINS + 1];
    for (i, v) in e.iter_mut().enumerate() {
        *v = 10f64.powf(a + (b - a) * i as f64 / NL_BINS as f64);
    }
    e[0] = NL_MIN;
    e[NL_BINS] = NL_MAX;
    e
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutOfRange {
    /// Values below 0.1 count in the first bin, above 500 in the last.
    #[default]
    Clamp,
    /// Values outside the edges are not counted (they still enter the
    /// min/mean/max).
    Drop,
}

/// 19 bin counts followed by min, mean and max.
pub fn nightlights_features(values: &[f64], mode: OutOfRange) -> Result<[f64; NL_FEATURES]> {
    if values.is_empty() {
        return Err(Error::invalid("no luminosity values"));
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::invalid(format!("luminosity must be finite and nonnegative, got {v}")));
    }
    let edges = nightlights_edges();
    let mut out = [0.0; NL_FEATURES];
    for &v in values {
        let bin = if v < NL_MIN {
            (mode == OutOfRange::Clamp).then_some(0)
        } else if v > NL_MAX {
            (mode == OutOfRange::Clamp).then_some(NL_BINS - 1)
        } else {
            // last edge whose value is <= v, with 500 itself in the top bin
            Some(edges[1..NL_BINS].partition_point(|&e| e <= v))
        };
        if let Some(b) = bin {
            out[b] += 1.0;
        }
    }
    out[NL_BINS] = values.iter().cloned().fold(f64::INFINITY, f64::min);
    out[NL_BINS + 1] = values.iter().sum::<f64>() / values.len() as f64;
    out[NL_BINS + 2] = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(out)
}

/// Ridge weights for two feature blocks with separate penalties, in the
/// units of each block's standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockRidgeModel {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub intercept: f64,
    pub std_x: Standardization,
    pub std_z: Standardization,
}

impl BlockRidgeModel {
    pub fn predict(&self, x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.beta.len() || z.ncols() != self.gamma.len() || x.nrows() != z.nrows() {
            return Err(Error::shape("block shapes do not match the model"));
        }
        let rows: Vec<usize> = (0..x.nrows()).collect();
        let xs = self.std_x.apply(x, &rows) * nalgebra::DVector::from_column_slice(&self.beta);
        let zs = self.std_z.apply(z, &rows) * nalgebra::DVector::from_column_slice(&self.gamma);
        Ok((0..rows.len()).map(|i| self.intercept + xs[i] + zs[i]).collect())
    }
}

fn check_blocks(x: &DMatrix<f64>, z: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if x.nrows() != z.nrows() || x.nrows() != y.len() {
        return Err(Error::shape(format!(
            "row counts disagree: X {}, Z {}, y {}",
            x.nrows(),
            z.nrows(),
            y.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::invalid("no rows"));
    }
    Ok(())
}

fn check_penalty(l: f64) -> Result<()> {
    if !(l.is_finite() && l > 0.0) {
        return Err(Error::invalid(format!("penalty must be positive, got {l}")));
    }
    Ok(())
}

/// `[a * xs | b * zs]` for the given rows.
fn scaled_concat(xs: &DMatrix<f64>, zs: &DMatrix<f64>, a: f64, b: f64) -> DMatrix<f64> {
    let (k1, k2) = (xs.ncols(), zs.ncols());
    DMatrix::from_fn(xs.nrows(), k1 + k2, |i, j| {
        if j < k1 {
            a * xs[(i, j)]
        } else {
            b * zs[(i, j - k1)]
        }
    })
}

/// Minimise `|y - X beta - Z gamma - c|^2 + l1 |beta|^2 + l2 |gamma|^2`
/// with each block standardized (when asked) and the intercept free.
///
/// Scaling block `i` by `1/sqrt(l_i)` turns the problem into a unit-penalty
/// ridge on the concatenation; the solution is then scaled back.
pub fn fit_block_ridge(
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    y: &[f64],
    lambda1: f64,
    lambda2: f64,
    standardize: bool,
) -> Result<BlockRidgeModel> {
    check_blocks(x, z, y)?;
    check_penalty(lambda1)?;
    check_penalty(lambda2)?;
    let rows: Vec<usize> = (0..y.len()).collect();
    let std_x = Standardization::fit(x, &rows, standardize);
    let std_z = Standardization::fit(z, &rows, standardize);
    let (s1, s2) = (lambda1.sqrt(), lambda2.sqrt());
    let a = scaled_concat(&std_x.apply(x, &rows), &std_z.apply(z, &rows), 1.0 / s1, 1.0 / s2);
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    let theta = RidgePath::new(&a, &yc)?.coef(1.0)?;
    let k1 = x.ncols();
    Ok(BlockRidgeModel {
        beta: theta[..k1].iter().map(|t| t / s1).collect(),
        gamma: theta[k1..].iter().map(|t| t / s2).collect(),
        lambda1,
        lambda2,
        intercept: ybar,
        std_x,
        std_z,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockCvReport {
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    /// `mean_r2[a][b]` at `(lambda1[a], lambda2[b])`.
    pub mean_r2: Vec<Vec<f64>>,
    pub chosen: (usize, usize),
    pub fold_of: Vec<usize>,
}

impl BlockCvReport {
    pub fn chosen_lambdas(&self) -> (f64, f64) {
        (self.lambda1[self.chosen.0], self.lambda2[self.chosen.1])
    }

    pub fn best_mean_r2(&self) -> f64 {
        self.mean_r2[self.chosen.0][self.chosen.1]
    }
}

fn check_grid(g: &[f64]) -> Result<()> {
    if g.is_empty() {
        return Err(Error::invalid("empty penalty grid"));
    }
    if g.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("penalty grid must be ascending"));
    }
    g.iter().try_for_each(|&l| check_penalty(l))
}

/// Exhaustive k-fold search over `(lambda1, lambda2)`; ties go to the
/// lexicographically smallest pair. Validation predictions are clipped to
/// the training-fold label range.
pub fn tune_block(
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    y: &[f64],
    grid1: &[f64],
    grid2: &[f64],
    folds: usize,
    seed: u64,
) -> Result<BlockCvReport> {
    check_blocks(x, z, y)?;
    check_grid(grid1)?;
    check_grid(grid2)?;
    let n = y.len();
    let fold_of = kfold_assign(n, folds, seed)?;

    // With gamma' = gamma * sqrt(l2 / l1) the problem is ordinary ridge at
    // penalty l1 on [X | sqrt(l1 / l2) Z], so pairs sharing a ratio share
    // one factorisation.
    let mut ratios: Vec<f64> = grid1.iter().flat_map(|a| grid2.iter().map(move |b| a / b)).collect();
    ratios.sort_by(f64::total_cmp);
    ratios.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    let group_of = |a: usize, b: usize| {
        let r = grid1[a] / grid2[b];
        ratios
            .iter()
            .position(|g| (g - r).abs() <= 1e-12 * g.abs())
            .expect("ratio present")
    };

    let jobs: Vec<(usize, usize)> = (0..folds)
        .flat_map(|f| (0..ratios.len()).map(move |g| (f, g)))
        .collect();
    let per_job: Vec<Vec<((usize, usize), Option<f64>)>> = jobs
        .par_iter()
        .map(|&(f, g)| {
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
            let valid: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
            let sx = Standardization::fit(x, &train, true);
            let sz = Standardization::fit(z, &train, true);
            let ytr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let ybar = ytr.iter().sum::<f64>() / ytr.len() as f64;
            let (lo, hi) = ytr
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            let yc: Vec<f64> = ytr.iter().map(|v| v - ybar).collect();
            let yv: Vec<f64> = valid.iter().map(|&i| y[i]).collect();
            let root = ratios[g].sqrt();
            let path = RidgePath::new(&scaled_concat(&sx.apply(x, &train), &sz.apply(z, &train), 1.0, root), &yc)?;
            let av = scaled_concat(&sx.apply(x, &valid), &sz.apply(z, &valid), 1.0, root);
            let mut out = Vec::new();
            for a in 0..grid1.len() {
                for b in 0..grid2.len() {
                    if group_of(a, b) != g {
                        continue;
                    }
                    let theta = nalgebra::DVector::from_vec(path.coef(grid1[a])?);
                    let pred: Vec<f64> = (&av * theta).iter().map(|p| (p + ybar).clamp(lo, hi)).collect();
                    out.push(((a, b), r_squared(&yv, &pred).ok()));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut scores = vec![vec![Vec::new(); grid2.len()]; grid1.len()];
    for ((a, b), r) in per_job.into_iter().flatten() {
        if let Some(r) = r {
            scores[a][b].push(r);
        }
    }

    let mut mean_r2 = vec![vec![f64::NAN; grid2.len()]; grid1.len()];
    let mut chosen: Option<(usize, usize)> = None;
    for a in 0..grid1.len() {
        for b in 0..grid2.len() {
            let vals = &scores[a][b];
            if vals.is_empty() {
                continue;
            }
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            mean_r2[a][b] = m;
            if chosen.is_none_or(|(ca, cb)| m > mean_r2[ca][cb] + 1e-12) {
                chosen = Some((a, b));
            }
        }
    }
    let chosen =
        chosen.ok_or_else(|| Error::ZeroVariance("every validation fold has constant labels".into()))?;
    Ok(BlockCvReport {
        lambda1: grid1.to_vec(),
        lambda2: grid2.to_vec(),
        mean_r2,
        chosen,
        fold_of,
    })
}
