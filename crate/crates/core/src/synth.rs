//! Synthetic image/label corpora.
//!
//! Images are procedurally generated landscapes made of three cover
//! classes (vegetation, bare ground, water) laid out by smooth random
//! fields. Two label kinds are supported:
//!
//! * [`LabelKind::SubImageLinear`]: the exact fraction of pixels whose
//!   band 1 strictly exceeds bands 0 and 2. Images do not depend on their
//!   location.
//! * [`LabelKind::SpatiallyAutocorrelated`]: a smooth function of the cell
//!   centroid plus Gaussian noise. Vegetation cover and colour tint drift
//!   with location, so imagery carries information about the label that
//!   degrades when extrapolating to unseen regions.
//!
//! Every image is generated from its own indexed RNG stream so corpora can
//! be regenerated in parallel or streamed one image at a time.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::{build_grid, sample_cells, Bounds, CellId, Grid};
use crate::image::Image;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    SubImageLinear,
    SpatiallyAutocorrelated,
}

impl LabelKind {
    pub fn name(&self) -> &'static str {
        match self {
            LabelKind::SubImageLinear => "sub-image-linear",
            LabelKind::SpatiallyAutocorrelated => "spatially-autocorrelated",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sub-image-linear" | "linear" => Some(LabelKind::SubImageLinear),
            "spatially-autocorrelated" | "spatial" => Some(LabelKind::SpatiallyAutocorrelated),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub seed: u64,
    pub kind: LabelKind,
    /// Standard deviation of additive label noise. Only used by the
    /// spatially-autocorrelated kind; the sub-image statistic is exact.
    pub noise_sd: f64,
    pub domain: Bounds,
    pub cell_km: f64,
}

impl SyntheticTask {
    pub fn new(seed: u64, kind: LabelKind) -> Self {
        SyntheticTask {
            seed,
            kind,
            noise_sd: 0.05,
            domain: Bounds::conus(),
            cell_km: 1.39,
        }
    }
}

/// A lazily generated corpus: the sampled cells are fixed up front and each
/// image is produced on demand from its index.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    task: SyntheticTask,
    hw: usize,
    bands: usize,
    cells: Vec<CellId>,
}

impl SyntheticCorpus {
    pub fn new(task: &SyntheticTask, n: usize, hw: usize, bands: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("corpus size must be at least 1"));
        }
        if hw < 4 {
            return Err(Error::invalid("synthetic images must be at least 4x4"));
        }
        if bands < 3 {
            return Err(Error::invalid(
                "synthetic imagery needs at least 3 bands (red, green, blue)",
            ));
        }
        let grid = build_grid(task.domain, task.cell_km)?;
        let cells = sample_cells(&grid, n, None, task.seed)?;
        Ok(SyntheticCorpus {
            task: task.clone(),
            hw,
            bands,
            cells,
        })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[CellId] {
        &self.cells
    }

    pub fn grid(&self) -> Grid {
        build_grid(self.task.domain, self.task.cell_km).expect("validated at construction")
    }

    /// Image `i` and its label.
    pub fn generate(&self, i: usize) -> (Image, f64) {
        let cell = self.cells[i];
        let mut rng = rng::indexed_stream(self.task.seed, "synth-image", i as u64);
        let b = self.task.domain;
        let u = ((cell.lon - b.lon_min) / (b.lon_max - b.lon_min)).clamp(0.0, 1.0);
        let v = ((cell.lat - b.lat_min) / (b.lat_max - b.lat_min)).clamp(0.0, 1.0);

        let look = match self.task.kind {
            LabelKind::SubImageLinear => Look {
                vegetation: rng.random::<f64>(),
                water_share: rng.random::<f64>() * 0.6,
                tint: [0.0; 3],
            },
            LabelKind::SpatiallyAutocorrelated => {
                let jitter = Normal::new(0.0, 0.04).unwrap().sample(&mut rng);
                Look {
                    vegetation: (visible_cover(u, v) + jitter).clamp(0.0, 1.0),
                    water_share: 0.15 + 0.3 * v,
                    tint: location_tint(u, v),
                }
            }
        };
        let img = render(&mut rng, self.hw, self.bands, &look, cell);
        let label = match self.task.kind {
            LabelKind::SubImageLinear => green_dominant_fraction(&img, 0..self.hw, 0..self.hw),
            LabelKind::SpatiallyAutocorrelated => {
                let noise = if self.task.noise_sd > 0.0 {
                    Normal::new(0.0, self.task.noise_sd).unwrap().sample(&mut rng)
                } else {
                    0.0
                };
                spatial_field(u, v) + noise
            }
        };
        (img, label)
    }
}

/// Generate `n` images of `hw x hw x bands` with their labels.
pub fn synth_corpus(
    task: &SyntheticTask,
    n: usize,
    hw: usize,
    bands: usize,
) -> Result<(Vec<Image>, Vec<f64>)> {
    use rayon::prelude::*;
    let corpus = SyntheticCorpus::new(task, n, hw, bands)?;
    Ok((0..n).into_par_iter().map(|i| corpus.generate(i)).unzip())
}

/// Fraction of pixels in the window whose band 1 strictly exceeds both
/// band 0 and band 2.
pub fn green_dominant_fraction(
    img: &Image,
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for i in rows {
        for j in cols.clone() {
            let g = img.get(i, j, 1);
            if g > img.get(i, j, 0) && g > img.get(i, j, 2) {
                hits += 1;
            }
            total += 1;
        }
    }
    hits as f64 / total as f64
}

/// The smooth label surface over normalised domain coordinates.
fn spatial_field(u: f64, v: f64) -> f64 {
    0.5 + 0.22 * (2.0 * PI * 1.3 * u + 0.4).sin() * (2.0 * PI * 0.9 * v).cos()
        + 0.15 * (2.0 * PI * (2.1 * u + 1.7 * v)).sin()
}

/// Vegetation cover seen from orbit: the label surface distorted by a
/// location-dependent bias that imagery only exposes through its tint.
fn visible_cover(u: f64, v: f64) -> f64 {
    spatial_field(u, v) + 0.12 * (2.0 * PI * (3.1 * u - 2.3 * v)).sin()
}

fn location_tint(u: f64, v: f64) -> [f64; 3] {
    [0.10 * (2.0 * u - 1.0), 0.0, 0.10 * (2.0 * v - 1.0)]
}

struct Look {
    vegetation: f64,
    water_share: f64,
    tint: [f64; 3],
}

const VEGETATION: [f64; 3] = [0.20, 0.52, 0.24];
const BARE: [f64; 3] = [0.64, 0.46, 0.34];
const WATER: [f64; 3] = [0.12, 0.24, 0.52];
const PIXEL_NOISE: f64 = 0.04;

/// Sum of a few random plane waves; smooth at the scale of the image.
struct WaveField {
    waves: Vec<(f64, f64, f64, f64)>,
}

impl WaveField {
    fn new<R: Rng>(rng: &mut R) -> Self {
        let waves = (0..4)
            .map(|_| {
                let theta = rng.random::<f64>() * 2.0 * PI;
                let cycles = 0.7 + rng.random::<f64>() * 2.5;
                let phase = rng.random::<f64>() * 2.0 * PI;
                let amp = 0.5 + rng.random::<f64>();
                (cycles * theta.cos(), cycles * theta.sin(), phase, amp)
            })
            .collect();
        WaveField { waves }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        self.waves
            .iter()
            .map(|&(kx, ky, ph, a)| a * (2.0 * PI * (kx * x + ky * y) + ph).sin())
            .sum()
    }
}

/// Threshold such that roughly `frac` of `values` lie strictly above it.
fn upper_quantile(values: &[f64], frac: f64) -> f64 {
    if frac <= 0.0 {
        return f64::INFINITY;
    }
    if frac >= 1.0 {
        return f64::NEG_INFINITY;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let k = ((1.0 - frac) * sorted.len() as f64).round() as usize;
    if k == 0 {
        f64::NEG_INFINITY
    } else {
        sorted[k.min(sorted.len()) - 1]
    }
}

fn render<R: Rng>(rng: &mut R, hw: usize, bands: usize, look: &Look, cell: CellId) -> Image {
    let cover = WaveField::new(rng);
    let water = WaveField::new(rng);
    let n = hw * hw;
    let coord = |k: usize| ((k / hw) as f64 / hw as f64, (k % hw) as f64 / hw as f64);
    let cover_vals: Vec<f64> = (0..n).map(|k| { let (y, x) = coord(k); cover.at(x, y) }).collect();
    let water_vals: Vec<f64> = (0..n).map(|k| { let (y, x) = coord(k); water.at(x, y) }).collect();
    let veg_cut = upper_quantile(&cover_vals, look.vegetation);
    let rest: Vec<f64> = (0..n)
        .filter(|&k| cover_vals[k] <= veg_cut)
        .map(|k| water_vals[k])
        .collect();
    let water_cut = upper_quantile(&rest, look.water_share);

    let brightness = 0.85 + 0.3 * rng.random::<f64>();
    let noise = Normal::new(0.0, PIXEL_NOISE).unwrap();
    let mut bytes = Vec::with_capacity(n * bands);
    for k in 0..n {
        let base = if cover_vals[k] > veg_cut {
            VEGETATION
        } else if water_vals[k] > water_cut {
            WATER
        } else {
            BARE
        };
        let mut rgb = [0.0; 3];
        for c in 0..3 {
            rgb[c] = brightness * (base[c] + look.tint[c]) + noise.sample(rng);
        }
        for b in 0..bands {
            let v = if b < 3 {
                rgb[b]
            } else {
                (rgb[0] + rgb[1] + rgb[2]) / 3.0 + noise.sample(rng)
            };
            bytes.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    Image::from_u8(hw, hw, bands, &bytes, cell, "synthetic").expect("valid synthetic image")
}
