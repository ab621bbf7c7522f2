//! Predictions below the label resolution.
//!
//! A trained model is linear in pooled features, and pooled features are
//! position means of activation maps, so the model's score distributes over
//! positions: scoring each position's activations gives a map whose mean is
//! the image-level score. Block means of that map are the sub-image
//! predictions. Clipping is an image-level operation and is never applied
//! here.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::featurize::{check_image, map_extent, preactivation_blocks, PatchBank, BIAS};
use crate::image::Image;
use crate::io::write_file;
use crate::ridge::RidgeModel;

/// Per-position scores in transformed label space, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl ScoreMap {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} values for a {rows}x{cols} map",
                values.len()
            )));
        }
        Ok(ScoreMap { rows, cols, values })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Score every convolution position of `image` with `model`.
pub fn superres_map(image: &Image, bank: &PatchBank, model: &RidgeModel) -> Result<ScoreMap> {
    if model.fingerprint != bank.fingerprint() {
        return Err(Error::FingerprintMismatch);
    }
    if model.k() != bank.k() {
        return Err(Error::shape(format!(
            "model has {} weights, bank has {} features",
            model.k(),
            bank.k()
        )));
    }
    check_image(image, bank)?;
    let half = bank.n_stored();
    let s = &model.standardization;
    let w: Vec<f64> = model.beta.iter().zip(&s.scale).map(|(b, sd)| b / sd).collect();
    let constant = model.intercept - w.iter().zip(&s.mean).map(|(a, m)| a * m).sum::<f64>();

    let (rows, cols) = map_extent(image, bank.m());
    let mut values = vec![0.0; rows * cols];
    preactivation_blocks(image, bank, |start, z| {
        let out = &mut values[start..start + z.nrows()];
        for (p, col) in z.column_iter().enumerate() {
            let (wp, wn) = (w[p], w[p + half]);
            for (o, &v) in out.iter_mut().zip(col.iter()) {
                *o += wp * (v + BIAS).max(0.0) + wn * (BIAS - v).max(0.0);
            }
        }
    });
    values.iter_mut().for_each(|v| *v += constant);
    ScoreMap::new(rows, cols, values)
}

fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let r = i.rem_euclid(period) as usize;
    if r < n {
        r
    } else {
        2 * n - 1 - r
    }
}

/// Normalised discrete Gaussian on `-radius..=radius`.
pub fn gaussian_kernel(bandwidth: f64) -> Vec<f64> {
    let radius = (4.0 * bandwidth).ceil().max(1.0) as isize;
    let w: Vec<f64> = (-radius..=radius)
        .map(|t| (-(t * t) as f64 / (2.0 * bandwidth * bandwidth)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Separable Gaussian blur with symmetric reflection at the edges.
/// Reflection makes each 1-D pass preserve the sum exactly, so the map mean
/// is unchanged.
pub fn gaussian_smooth(map: &ScoreMap, bandwidth: f64) -> Result<ScoreMap> {
    if !(bandwidth >= 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid(format!("bandwidth must be nonnegative, got {bandwidth}")));
    }
    if bandwidth == 0.0 {
        return Ok(map.clone());
    }
    let kernel = gaussian_kernel(bandwidth);
    let r = (kernel.len() / 2) as isize;
    let (rows, cols) = (map.rows, map.cols);
    let mut tmp = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            tmp[i * cols + j] = kernel
                .iter()
                .enumerate()
                .map(|(t, w)| w * map.values[i * cols + reflect(j as isize + t as isize - r, cols)])
                .sum();
        }
    }
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[i * cols + j] = kernel
                .iter()
                .enumerate()
                .map(|(t, w)| w * tmp[reflect(i as isize + t as isize - r, rows) * cols + j])
                .sum();
        }
    }
    ScoreMap::new(rows, cols, out)
}

/// `factor + 1` boundaries splitting `0..n` into near-equal parts.
pub fn block_bounds(n: usize, factor: usize) -> Vec<usize> {
    (0..=factor).map(|b| b * n / factor).collect()
}

/// Default smoothing bandwidth in map pixels: side / (4F).
pub fn default_bandwidth(map: &ScoreMap, factor: usize) -> f64 {
    map.rows.min(map.cols) as f64 / (4.0 * factor as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgridPrediction {
    pub factor: usize,
    /// `factor x factor`, row-major, transformed label space.
    pub values: Vec<f64>,
    pub row_sizes: Vec<usize>,
    pub col_sizes: Vec<usize>,
    /// Image-level pre-clip prediction (mean of the unsmoothed map).
    pub parent: f64,
}

impl SubgridPrediction {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.factor + c]
    }

    /// Block values weighted by block area.
    pub fn area_weighted_mean(&self) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (r, &h) in self.row_sizes.iter().enumerate() {
            for (c, &w) in self.col_sizes.iter().enumerate() {
                let a = (h * w) as f64;
                num += a * self.get(r, c);
                den += a;
            }
        }
        num / den
    }
}

/// Block means of the (optionally smoothed) map on an F x F partition.
pub fn pool_to_subgrid(map: &ScoreMap, factor: usize, bandwidth: f64) -> Result<SubgridPrediction> {
    if factor == 0 {
        return Err(Error::invalid("sub-grid factor must be at least 1"));
    }
    if factor > map.rows || factor > map.cols {
        return Err(Error::invalid(format!(
            "factor {factor} exceeds the {}x{} map",
            map.rows, map.cols
        )));
    }
    let smoothed = gaussian_smooth(map, bandwidth)?;
    let rb = block_bounds(map.rows, factor);
    let cb = block_bounds(map.cols, factor);
    let mut values = Vec::with_capacity(factor * factor);
    for r in 0..factor {
        for c in 0..factor {
            let mut s = 0.0;
            for i in rb[r]..rb[r + 1] {
                for j in cb[c]..cb[c + 1] {
                    s += smoothed.get(i, j);
                }
            }
            values.push(s / ((rb[r + 1] - rb[r]) * (cb[c + 1] - cb[c])) as f64);
        }
    }
    Ok(SubgridPrediction {
        factor,
        values,
        row_sizes: rb.windows(2).map(|w| w[1] - w[0]).collect(),
        col_sizes: cb.windows(2).map(|w| w[1] - w[0]).collect(),
        parent: map.mean(),
    })
}

/// A per-block statistic of the image itself on an F x F partition of its
/// pixels, e.g. sub-image labels for evaluation.
pub fn image_subgrid<F>(image: &Image, factor: usize, stat: F) -> Vec<f64>
where
    F: Fn(&Image, std::ops::Range<usize>, std::ops::Range<usize>) -> f64,
{
    let rb = block_bounds(image.height(), factor);
    let cb = block_bounds(image.width(), factor);
    let mut out = Vec::with_capacity(factor * factor);
    for r in 0..factor {
        for c in 0..factor {
            out.push(stat(image, rb[r]..rb[r + 1], cb[c]..cb[c + 1]));
        }
    }
    out
}

/// R^2 of sub-grid predictions against sub-labels after removing each
/// side's mean, so only variation inside the image counts.
pub fn within_image_r2(pred: &SubgridPrediction, truth: &[f64]) -> Result<f64> {
    if truth.len() != pred.values.len() {
        return Err(Error::shape(format!(
            "{} predictions but {} sub-labels",
            pred.values.len(),
            truth.len()
        )));
    }
    let n = truth.len() as f64;
    let tm = truth.iter().sum::<f64>() / n;
    let pm = pred.values.iter().sum::<f64>() / n;
    let ss_tot: f64 = truth.iter().map(|t| (t - tm).powi(2)).sum();
    if !(ss_tot > 0.0) {
        return Err(Error::ZeroVariance("sub-labels are constant within the image".into()));
    }
    let ss_res: f64 = truth
        .iter()
        .zip(&pred.values)
        .map(|(t, p)| ((t - tm) - (p - pm)).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// `lat,lon,F,block_row,block_col,value` rows for a set of images.
pub fn subgrid_csv(items: &[((f64, f64), &SubgridPrediction)]) -> String {
    let mut s = String::from("lat,lon,F,block_row,block_col,value\n");
    for ((lat, lon), p) in items {
        for r in 0..p.factor {
            for c in 0..p.factor {
                writeln!(s, "{lat},{lon},{},{r},{c},{}", p.factor, p.get(r, c)).unwrap();
            }
        }
    }
    s
}

/// Binary PGM of the map, linearly stretched to 0..255.
pub fn write_pgm(map: &ScoreMap, path: &Path) -> Result<()> {
    let lo = map.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = map.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut bytes = format!("P5\n{} {}\n255\n", map.cols, map.rows).into_bytes();
    bytes.extend(map.values.iter().map(|v| ((v - lo) / span * 255.0).round() as u8));
    write_file(path, &bytes)
}
