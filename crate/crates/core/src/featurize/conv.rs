//! Convolution, ReLU and average pooling against a [`PatchBank`].
//!
//! The pre-activation of stored patch `p` at window `s` is
//! `<W (s - mu), W (p - mu)>`. The bank folds the whitening into the patch
//! matrix, so per window this is a single dot product `s . q_p - c_p`.
//! Windows are gathered into blocks (im2col) and multiplied against the
//! folded `d x K/2` matrix. Negated features reuse the same products.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::bank::{PatchBank, BIAS};
use super::table::{FeatureTable, Precision};
use crate::error::{Error, Result};
use crate::image::Image;

/// Windows per im2col block.
const BLOCK: usize = 512;

/// Per-position ReLU output of one feature, `(H-M+1) x (W-M+1)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMap {
    pub k: usize,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl ActivationMap {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    v.max(0.0)
}

pub(crate) fn check_image(image: &Image, bank: &PatchBank) -> Result<()> {
    if image.bands() != bank.bands() {
        return Err(Error::shape(format!(
            "image {} has {} bands, bank expects {}",
            image.source,
            image.bands(),
            bank.bands()
        )));
    }
    if image.height() < bank.m() || image.width() < bank.m() {
        return Err(Error::invalid(format!(
            "image {} ({}x{}) is smaller than the {m}x{m} patch",
            image.source,
            image.height(),
            image.width(),
            m = bank.m()
        )));
    }
    Ok(())
}

/// Extent of the valid (stride 1, unpadded) convolution.
pub fn map_extent(image: &Image, m: usize) -> (usize, usize) {
    (image.height() + 1 - m, image.width() + 1 - m)
}

/// Calls `f(first_position, z)` for consecutive blocks of window positions,
/// where `z[(r, p)]` is the pre-activation (without bias) of stored patch
/// `p` at position `first_position + r` in row-major map order.
pub(crate) fn preactivation_blocks<F>(image: &Image, bank: &PatchBank, mut f: F)
where
    F: FnMut(usize, &DMatrix<f64>),
{
    let m = bank.m();
    let bands = bank.bands();
    let d = bank.dim();
    let half = bank.n_stored();
    let (rows, cols) = map_extent(image, m);
    let positions = rows * cols;
    let folded = bank.folded();
    let offsets = bank.offsets();
    let data = image.data();
    let width = image.width();

    let mut windows = DMatrix::<f64>::zeros(BLOCK.min(positions), d);
    let mut z = DMatrix::<f64>::zeros(BLOCK.min(positions), half);
    let mut start = 0;
    while start < positions {
        let len = BLOCK.min(positions - start);
        if len != windows.nrows() {
            windows = DMatrix::zeros(len, d);
            z = DMatrix::zeros(len, half);
        }
        for r in 0..len {
            let pos = start + r;
            let (i, j) = (pos / cols, pos % cols);
            let mut t = 0;
            for di in 0..m {
                let base = ((i + di) * width + j) * bands;
                for v in &data[base..base + m * bands] {
                    windows[(r, t)] = *v;
                    t += 1;
                }
            }
        }
        z.gemm(1.0, &windows, folded, 0.0);
        for (p, mut col) in z.column_iter_mut().enumerate() {
            let c = offsets[p];
            col.iter_mut().for_each(|v| *v -= c);
        }
        f(start, &z);
        start += len;
    }
}

/// Activation map of feature `k` (negated features use `-z`).
pub fn activation_map(image: &Image, bank: &PatchBank, k: usize) -> Result<ActivationMap> {
    if k >= bank.k() {
        return Err(Error::invalid(format!(
            "feature index {k} out of range for K = {}",
            bank.k()
        )));
    }
    check_image(image, bank)?;
    let (sign, p) = bank.feature_source(k);
    let m = bank.m();
    let (rows, cols) = map_extent(image, m);
    let q = bank.folded().column(p);
    let offset = bank.offsets()[p];
    let mut values = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let w = image.window(i, j, m);
            let z: f64 = w.iter().zip(q.iter()).map(|(a, b)| a * b).sum::<f64>() - offset;
            values.push(relu(sign * z + BIAS));
        }
    }
    Ok(ActivationMap { k, rows, cols, values })
}

/// The `K` pooled features of one image.
pub fn featurize_image(image: &Image, bank: &PatchBank) -> Result<Vec<f64>> {
    check_image(image, bank)?;
    let half = bank.n_stored();
    let (rows, cols) = map_extent(image, bank.m());
    let mut pos = vec![0.0; half];
    let mut neg = vec![0.0; half];
    preactivation_blocks(image, bank, |_, z| {
        for (p, col) in z.column_iter().enumerate() {
            let (mut a, mut b) = (0.0, 0.0);
            for &v in col.iter() {
                a += relu(v + BIAS);
                b += relu(BIAS - v);
            }
            pos[p] += a;
            neg[p] += b;
        }
    });
    let n = (rows * cols) as f64;
    Ok(pos.iter().chain(neg.iter()).map(|s| s / n).collect())
}

/// Featurize a corpus in parallel; row `i` belongs to `images[i]`.
pub fn featurize_corpus(images: &[Image], bank: &PatchBank, precision: Precision) -> Result<FeatureTable> {
    if images.is_empty() {
        return Err(Error::invalid("empty corpus"));
    }
    featurize_indexed(images.len(), bank, precision, |i| Ok(images[i].clone()))
}

/// Featurize `n` images produced on demand by `image_at`, so large corpora
/// need not be held in memory.
pub fn featurize_indexed<F>(n: usize, bank: &PatchBank, precision: Precision, image_at: F) -> Result<FeatureTable>
where
    F: Fn(usize) -> Result<Image> + Sync,
{
    if n == 0 {
        return Err(Error::invalid("empty corpus"));
    }
    let rows: Vec<(Vec<f64>, (f64, f64))> = (0..n)
        .into_par_iter()
        .map(|i| {
            let img = image_at(i)?;
            let x = featurize_image(&img, bank)?;
            Ok((x, (img.location.lat, img.location.lon)))
        })
        .collect::<Result<_>>()?;
    let k = bank.k();
    let mut values = Vec::with_capacity(n * k);
    let mut locations = Vec::with_capacity(n);
    for (x, loc) in rows {
        match precision {
            Precision::F64 => values.extend(x),
            Precision::F32 => values.extend(x.into_iter().map(|v| v as f32 as f64)),
        }
        locations.push(loc);
    }
    FeatureTable::new(k, values, locations, bank.fingerprint(), precision)
}
