//! A fitted task model and its file format.
//!
//! Layout (`MSKM`, little-endian):
//!
//! ```text
//! magic "MSKM" | version u16 | bank fingerprint [u8; 32] | K u32 | lambda f64
//! | transform u8 | clip lo f64 | clip hi f64 | mean K f64 | scale K f64
//! | beta K f64 | intercept f64
//! ```

use std::path::Path;

use nalgebra::DMatrix;

use super::cv::{tune_lambda, CvOptions, CvReport};
use super::solver::{RidgePath, Standardization};
use super::transform::LabelTransform;
use crate::error::{Error, Result};
use crate::io::{read_file, write_file, ByteReader, ByteWriter};

const MAGIC: &[u8; 4] = b"MSKM";
const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeOptions {
    pub standardize: bool,
    pub transform: LabelTransform,
}

impl Default for RidgeOptions {
    fn default() -> Self {
        RidgeOptions {
            standardize: true,
            transform: LabelTransform::Identity,
        }
    }
}

/// Ridge weights for one task, in standardized-feature units, with the
/// label transform and clip bounds needed to produce final predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub standardization: Standardization,
    pub transform: LabelTransform,
    /// Training-label extrema in transformed space.
    pub clip: (f64, f64),
    pub fingerprint: [u8; 32],
}

impl RidgeModel {
    /// Fit on every row of `x` with raw (untransformed) labels.
    pub fn fit(
        x: &DMatrix<f64>,
        y_raw: &[f64],
        lambda: f64,
        opts: &RidgeOptions,
        fingerprint: [u8; 32],
    ) -> Result<Self> {
        let y = opts.transform.forward(y_raw)?;
        Self::fit_transformed(x, &y, lambda, opts, fingerprint)
    }

    /// Fit with labels already in transformed space.
    pub fn fit_transformed(
        x: &DMatrix<f64>,
        y: &[f64],
        lambda: f64,
        opts: &RidgeOptions,
        fingerprint: [u8; 32],
    ) -> Result<Self> {
        let n = x.nrows();
        if y.len() != n {
            return Err(Error::shape(format!("{n} rows but {} labels", y.len())));
        }
        if n == 0 {
            return Err(Error::invalid("no training rows"));
        }
        let rows: Vec<usize> = (0..n).collect();
        let standardization = Standardization::fit(x, &rows, opts.standardize);
        let xs = standardization.apply(x, &rows);
        let ybar = y.iter().sum::<f64>() / n as f64;
        let yc: Vec<f64> = y.iter().map(|v| v - ybar).collect();
        let beta = RidgePath::new(&xs, &yc)?.coef(lambda)?;
        let clip = y
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        Ok(RidgeModel {
            beta,
            intercept: ybar,
            lambda,
            standardization,
            transform: opts.transform,
            clip,
            fingerprint,
        })
    }

    /// Cross-validate the penalty on all rows, then refit at the winner.
    pub fn fit_cv(
        x: &DMatrix<f64>,
        y_raw: &[f64],
        lambdas: &[f64],
        opts: &RidgeOptions,
        cv: &CvOptions,
        fingerprint: [u8; 32],
    ) -> Result<(Self, CvReport)> {
        let y = opts.transform.forward(y_raw)?;
        let cv = CvOptions {
            standardize: opts.standardize,
            ..*cv
        };
        let report = tune_lambda(x, &y, lambdas, &cv)?;
        let model = Self::fit_transformed(x, &y, report.chosen_lambda(), opts, fingerprint)?;
        Ok((model, report))
    }

    pub fn k(&self) -> usize {
        self.beta.len()
    }

    /// Linear score of one feature row in transformed label space, before
    /// clipping.
    pub fn score_row(&self, row: &[f64]) -> f64 {
        let s = &self.standardization;
        self.intercept
            + row
                .iter()
                .zip(&self.beta)
                .zip(s.mean.iter().zip(&s.scale))
                .map(|((v, b), (m, sd))| (v - m) / sd * b)
                .sum::<f64>()
    }

    fn check_cols(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.k() {
            return Err(Error::shape(format!(
                "model has {} features, input has {}",
                self.k(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Pre-clip scores in transformed space.
    pub fn predict_scores(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.check_cols(x)?;
        Ok((0..x.nrows())
            .map(|i| {
                let row: Vec<f64> = x.row(i).iter().cloned().collect();
                self.score_row(&row)
            })
            .collect())
    }

    /// Clipped predictions in transformed space.
    pub fn predict_transformed(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        Ok(self
            .predict_scores(x)?
            .into_iter()
            .map(|s| s.clamp(self.clip.0, self.clip.1))
            .collect())
    }

    /// Final predictions in the original label space.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        Ok(self.transform.inverse(&self.predict_transformed(x)?))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        w.bytes(MAGIC);
        w.u16(VERSION);
        w.bytes(&self.fingerprint);
        w.u32(self.k() as u32);
        w.f64(self.lambda);
        w.u8(self.transform.code());
        w.f64(self.clip.0);
        w.f64(self.clip.1);
        w.f64s(&self.standardization.mean);
        w.f64s(&self.standardization.scale);
        w.f64s(&self.beta);
        w.f64(self.intercept);
        w.buf
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let mut r = ByteReader::new(&bytes, path);
        r.magic(MAGIC)?;
        let version = r.u16()?;
        if version != VERSION {
            return Err(r.format_err(format!("unsupported model version {version}")));
        }
        let fingerprint: [u8; 32] = r.take(32)?.try_into().unwrap();
        let k = r.u32()? as usize;
        let lambda = r.f64()?;
        let code = r.u8()?;
        let transform = LabelTransform::from_code(code)
            .ok_or_else(|| r.format_err(format!("unknown label transform {code}")))?;
        let clip = (r.f64()?, r.f64()?);
        let mean = r.f64s(k)?;
        let scale = r.f64s(k)?;
        let beta = r.f64s(k)?;
        let intercept = r.f64()?;
        r.finish()?;
        Ok(RidgeModel {
            beta,
            intercept,
            lambda,
            standardization: Standardization { mean, scale },
            transform,
            clip,
            fingerprint,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn data(n: usize, k: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, k, |_, _| rng.random::<f64>());
        let y = (0..n).map(|i| 1.0 + x.row(i).sum() + 0.1 * rng.random::<f64>()).collect();
        (x, y)
    }

    #[test]
    fn interpolating_model_reproduces_training_labels() {
        let (x, y) = data(6, 10, 1);
        let opts = RidgeOptions { standardize: false, transform: LabelTransform::Identity };
        let m = RidgeModel::fit(&x, &y, 0.0, &opts, [0; 32]).unwrap();
        let p = m.predict(&x).unwrap();
        for (a, b) in p.iter().zip(&y) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn clipping_engages() {
        let (x, y) = data(30, 3, 2);
        let m = RidgeModel::fit(&x, &y, 0.01, &RidgeOptions::default(), [0; 32]).unwrap();
        let extreme = DMatrix::from_element(1, 3, 1e6);
        let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(m.predict(&extreme).unwrap()[0], hi);
        assert!(m.predict(&DMatrix::zeros(1, 4)).is_err());
    }

    #[test]
    fn pipeline_matches_hand_rolled_oracle() {
        let (x, y) = data(20, 4, 3);
        let opts = RidgeOptions { standardize: true, transform: LabelTransform::Log };
        let lambda = 0.3;
        let m = RidgeModel::fit(&x, &y, lambda, &opts, [0; 32]).unwrap();

        // oracle: log labels, z-score columns, dense normal equations, clip, exp
        let t: Vec<f64> = y.iter().map(|v| v.ln()).collect();
        let tbar = t.iter().sum::<f64>() / 20.0;
        let mut z = DMatrix::zeros(20, 4);
        for j in 0..4 {
            let mu = x.column(j).sum() / 20.0;
            let sd = (x.column(j).iter().map(|v| (v - mu).powi(2)).sum::<f64>() / 20.0).sqrt();
            for i in 0..20 {
                z[(i, j)] = (x[(i, j)] - mu) / sd;
            }
        }
        let tc = nalgebra::DVector::from_iterator(20, t.iter().map(|v| v - tbar));
        let beta = (z.transpose() * &z + DMatrix::identity(4, 4) * lambda)
            .cholesky()
            .unwrap()
            .solve(&(z.transpose() * tc));
        let (lo, hi) = t.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let got = m.predict(&x).unwrap();
        for i in 0..20 {
            let s = tbar + (0..4).map(|j| z[(i, j)] * beta[j]).sum::<f64>();
            let expect = s.clamp(lo, hi).exp();
            assert!((got[i] - expect).abs() < 1e-8 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn model_file_round_trip() {
        let (x, y) = data(15, 3, 4);
        let opts = RidgeOptions { standardize: true, transform: LabelTransform::Log1p };
        let m = RidgeModel::fit(&x, &y, 2.0, &opts, [9; 32]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.mskm");
        m.write(&p).unwrap();
        assert_eq!(RidgeModel::read(&p).unwrap(), m);
    }
}
