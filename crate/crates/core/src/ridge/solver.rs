//! Spectral ridge solver.
//!
//! With `X` column-centred and `y` centred, the unpenalised intercept
//! decouples and `beta(lambda) = (X^T X + lambda I)^-1 X^T y`. One symmetric
//! eigendecomposition serves every `lambda`: of `X^T X` when `N >= K`
//! (primal), or of `X X^T` when `N < K` (dual, `beta = X^T (X X^T + lambda
//! I)^-1 y`). Directions whose shifted eigenvalue is numerically zero are
//! dropped, which gives the minimum-norm solution at `lambda = 0`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Column centring and scaling learned on a training split.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    /// Column means and population standard deviations of the given rows.
    /// Without `scale`, scales are 1; constant columns also keep scale 1.
    pub fn fit(x: &DMatrix<f64>, rows: &[usize], scale: bool) -> Self {
        let k = x.ncols();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; k];
        let mut sd = vec![1.0; k];
        for j in 0..k {
            let col = x.column(j);
            let m = rows.iter().map(|&i| col[i]).sum::<f64>() / n;
            mean[j] = m;
            if scale {
                let v = rows.iter().map(|&i| (col[i] - m).powi(2)).sum::<f64>() / n;
                if v > 0.0 {
                    sd[j] = v.sqrt();
                }
            }
        }
        Standardization { mean, scale: sd }
    }

    pub fn identity(k: usize) -> Self {
        Standardization {
            mean: vec![0.0; k],
            scale: vec![1.0; k],
        }
    }

    /// Standardized copy of the given rows.
    pub fn apply(&self, x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), x.ncols(), |r, j| {
            (x[(rows[r], j)] - self.mean[j]) / self.scale[j]
        })
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

enum Form {
    Primal {
        vecs: DMatrix<f64>,
        vals: Vec<f64>,
        /// `V^T X^T y`
        proj: DVector<f64>,
    },
    Dual {
        x: DMatrix<f64>,
        vecs: DMatrix<f64>,
        vals: Vec<f64>,
        /// `U^T y`
        proj: DVector<f64>,
    },
}

/// A factorised ridge problem on centred data, solvable for any penalty.
pub struct RidgePath {
    form: Form,
    k: usize,
    tol: f64,
}

impl RidgePath {
    /// `x` and `y` must already be centred (columns of `x`, and `y`).
    pub fn new(x: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        let (n, k) = x.shape();
        if y.len() != n {
            return Err(Error::shape(format!("{n} rows but {} labels", y.len())));
        }
        if n == 0 || k == 0 {
            return Err(Error::invalid("empty design matrix"));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design matrix or labels".into()));
        }
        let yv = DVector::from_column_slice(y);
        let form = if n >= k {
            // explicit transpose: the gemm path is far faster than tr_mul
            let xt = x.transpose();
            let eig = SymmetricEigen::new(&xt * x);
            let xty = &xt * &yv;
            let proj = eig.eigenvectors.tr_mul(&xty);
            Form::Primal {
                vals: eig.eigenvalues.iter().cloned().collect(),
                vecs: eig.eigenvectors,
                proj,
            }
        } else {
            let gram = x * x.transpose();
            let eig = SymmetricEigen::new(gram);
            let proj = eig.eigenvectors.tr_mul(&yv);
            Form::Dual {
                x: x.clone(),
                vals: eig.eigenvalues.iter().cloned().collect(),
                vecs: eig.eigenvectors,
                proj,
            }
        };
        let vals = match &form {
            Form::Primal { vals, .. } | Form::Dual { vals, .. } => vals,
        };
        let top = vals.iter().cloned().fold(0.0, f64::max);
        let tol = top * 1e-12 * n.max(k) as f64;
        Ok(RidgePath { form, k, tol })
    }

    pub fn n_features(&self) -> usize {
        self.k
    }

    /// Eigenvalues of the Gram matrix in use.
    pub fn spectrum(&self) -> &[f64] {
        match &self.form {
            Form::Primal { vals, .. } | Form::Dual { vals, .. } => vals,
        }
    }

    pub fn coef(&self, lambda: f64) -> Result<Vec<f64>> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("penalty must be >= 0, got {lambda}")));
        }
        let shrink = |vals: &[f64], proj: &DVector<f64>| -> DVector<f64> {
            DVector::from_iterator(
                vals.len(),
                vals.iter().zip(proj.iter()).map(|(&l, &p)| {
                    let d = l.max(0.0) + lambda;
                    if d <= self.tol {
                        0.0
                    } else {
                        p / d
                    }
                }),
            )
        };
        let beta = match &self.form {
            Form::Primal { vecs, vals, proj } => vecs * shrink(vals, proj),
            Form::Dual { x, vecs, vals, proj } => x.tr_mul(&(vecs * shrink(vals, proj))),
        };
        Ok(beta.iter().cloned().collect())
    }
}

/// Weights and intercept of a single ridge fit.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub beta: Vec<f64>,
    pub intercept: f64,
}

impl RidgeFit {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.beta).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Minimise `1/2 |y - X beta - c|^2 + lambda/2 |beta|^2` with the intercept
/// `c` unpenalised. `x` is used as given (standardize beforehand if wanted).
pub fn fit_ridge(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<RidgeFit> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::shape(format!("{n} rows but {} labels", y.len())));
    }
    if n == 0 {
        return Err(Error::invalid("no rows"));
    }
    let rows: Vec<usize> = (0..n).collect();
    let centre = Standardization::fit(x, &rows, false);
    let xc = centre.apply(x, &rows);
    let ybar = y.iter().sum::<f64>() / n as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    let beta = RidgePath::new(&xc, &yc)?.coef(lambda)?;
    let intercept = ybar - centre.mean.iter().zip(&beta).map(|(m, b)| m * b).sum::<f64>();
    Ok(RidgeFit { beta, intercept })
}
