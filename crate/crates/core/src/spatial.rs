//! Checkerboard cross-validation and the RBF interpolation baseline.
//!
//! Locations are `(lat, lon)` pairs in degrees and distances are plain
//! Euclidean distances on those coordinates. Checkerboard squares are
//! anchored at `(0, 0)`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::write_file;
use crate::ridge::{r_squared, RidgePath, Standardization};

/// Square sides used when none are given.
pub fn default_deltas() -> Vec<f64> {
    vec![0.5, 1.5, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Offset {
    Base,
    Right,
    Up,
    Both,
}

impl Offset {
    pub const ALL: [Offset; 4] = [Offset::Base, Offset::Right, Offset::Up, Offset::Both];

    /// `(shift_lon, shift_lat)` for squares of side `delta`.
    pub fn shift(self, delta: f64) -> (f64, f64) {
        let h = delta / 2.0;
        match self {
            Offset::Base => (0.0, 0.0),
            Offset::Right => (h, 0.0),
            Offset::Up => (0.0, h),
            Offset::Both => (h, h),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Offset::Base => "base",
            Offset::Right => "right",
            Offset::Up => "up",
            Offset::Both => "both",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Color {
    Black,
    White,
}

/// Colour of a location; black squares have even parity. Points on a grid
/// line belong to the square below / to the left.
pub fn checkerboard_assign(loc: (f64, f64), delta: f64, offset: Offset) -> Color {
    let (sx, sy) = offset.shift(delta);
    let a = ((loc.1 - sx) / delta).floor() as i64;
    let b = ((loc.0 - sy) / delta).floor() as i64;
    if (a + b).rem_euclid(2) == 0 {
        Color::Black
    } else {
        Color::White
    }
}

/// Row indices of the black (training) and white (validation) squares.
pub fn checkerboard_split(locs: &[(f64, f64)], delta: f64, offset: Offset) -> (Vec<usize>, Vec<usize>) {
    let mut black = Vec::new();
    let mut white = Vec::new();
    for (i, &loc) in locs.iter().enumerate() {
        match checkerboard_assign(loc, delta, offset) {
            Color::Black => black.push(i),
            Color::White => white.push(i),
        }
    }
    (black, white)
}

/// One train-on-black, validate-on-white run.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetRun {
    pub offset: Offset,
    pub n_train: usize,
    pub n_valid: usize,
    /// Validation R^2 at the selected parameter. `None` when the run was
    /// skipped or the validation labels are constant.
    pub r2: Option<f64>,
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaResult {
    pub delta: f64,
    /// Selected penalty (ridge) or bandwidth (RBF); `None` if every run
    /// was skipped.
    pub param: Option<f64>,
    pub runs: Vec<OffsetRun>,
}

impl DeltaResult {
    fn scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.runs.iter().filter_map(|r| r.r2)
    }

    pub fn mean(&self) -> Option<f64> {
        let n = self.scores().count();
        (n > 0).then(|| self.scores().sum::<f64>() / n as f64)
    }

    pub fn min(&self) -> Option<f64> {
        self.scores().reduce(f64::min)
    }

    pub fn max(&self) -> Option<f64> {
        self.scores().reduce(f64::max)
    }

    pub fn any_skipped(&self) -> bool {
        self.runs.iter().any(|r| r.skipped)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckerboardReport {
    /// `"lambda"` for ridge, `"sigma"` for RBF.
    pub param_name: &'static str,
    pub deltas: Vec<DeltaResult>,
}

impl CheckerboardReport {
    /// `delta,offset,<param>,r2` rows, then one `summary` row per delta
    /// carrying the mean with min and max across offsets.
    pub fn to_csv(&self) -> String {
        let mut s = format!("delta,offset,{},r2,r2_min,r2_max\n", self.param_name);
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for d in &self.deltas {
            for r in &d.runs {
                let r2 = if r.skipped { "skipped".to_string() } else { opt(r.r2) };
                writeln!(s, "{},{},{},{},,", d.delta, r.offset.name(), opt(d.param), r2).unwrap();
            }
            writeln!(
                s,
                "{},summary,{},{},{},{}",
                d.delta,
                opt(d.param),
                opt(d.mean()),
                opt(d.min()),
                opt(d.max())
            )
            .unwrap();
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_csv().as_bytes())
    }
}

/// Index of the parameter with the best mean score over runs; ties go to
/// the earliest. `scores[run][param]`.
fn select(scores: &[Vec<Option<f64>>], n_params: usize) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for p in 0..n_params {
        let vals: Vec<f64> = scores.iter().filter_map(|s| s[p]).collect();
        if vals.is_empty() {
            continue;
        }
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        if best.is_none_or(|(_, b)| m > b + 1e-12) {
            best = Some((p, m));
        }
    }
    best.map(|(p, _)| p)
}

fn validate_params(params: &[f64], what: &str) -> Result<()> {
    if params.is_empty() {
        return Err(Error::invalid(format!("empty {what} grid")));
    }
    if params.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid(format!("{what} grid must be ascending")));
    }
    Ok(())
}

/// Shared driver: `score(train, valid)` returns one R^2 per parameter.
fn run_checkerboard<F>(
    locs: &[(f64, f64)],
    deltas: &[f64],
    params: &[f64],
    param_name: &'static str,
    score: F,
) -> Result<CheckerboardReport>
where
    F: Fn(&[usize], &[usize]) -> Result<Vec<Option<f64>>> + Sync,
{
    if let Some(d) = deltas.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
        return Err(Error::invalid(format!("square side must be positive, got {d}")));
    }
    let jobs: Vec<(usize, Offset)> = (0..deltas.len())
        .flat_map(|d| Offset::ALL.into_iter().map(move |o| (d, o)))
        .collect();
    let results: Vec<(Vec<usize>, Vec<usize>, Option<Vec<Option<f64>>>)> = jobs
        .par_iter()
        .map(|&(d, o)| {
            let (train, valid) = checkerboard_split(locs, deltas[d], o);
            if train.len() < 2 || valid.is_empty() {
                return Ok((train, valid, None));
            }
            let s = score(&train, &valid)?;
            Ok((train, valid, Some(s)))
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(deltas.len());
    for (d, &delta) in deltas.iter().enumerate() {
        let block = &results[4 * d..4 * d + 4];
        let scores: Vec<Vec<Option<f64>>> = block.iter().filter_map(|r| r.2.clone()).collect();
        let chosen = select(&scores, params.len());
        let runs = Offset::ALL
            .iter()
            .zip(block)
            .map(|(&offset, (train, valid, s))| OffsetRun {
                offset,
                n_train: train.len(),
                n_valid: valid.len(),
                r2: match (s, chosen) {
                    (Some(s), Some(c)) => s[c],
                    _ => None,
                },
                skipped: s.is_none(),
            })
            .collect();
        out.push(DeltaResult {
            delta,
            param: chosen.map(|c| params[c]),
            runs,
        });
    }
    Ok(CheckerboardReport { param_name, deltas: out })
}

/// Ridge on features for every square side and offset. The penalty is
/// chosen per side to maximise mean validation R^2 over the four offsets.
/// Validation predictions are clipped to the training label range.
pub fn checkerboard_experiment(
    x: &DMatrix<f64>,
    y: &[f64],
    locs: &[(f64, f64)],
    deltas: &[f64],
    lambdas: &[f64],
) -> Result<CheckerboardReport> {
    if x.nrows() != y.len() || y.len() != locs.len() {
        return Err(Error::shape("features, labels and locations must align"));
    }
    validate_params(lambdas, "penalty")?;
    run_checkerboard(locs, deltas, lambdas, "lambda", |train, valid| {
        let std = Standardization::fit(x, train, true);
        let xs = std.apply(x, train);
        let ytr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let ybar = ytr.iter().sum::<f64>() / ytr.len() as f64;
        let (lo, hi) = label_range(&ytr);
        let yc: Vec<f64> = ytr.iter().map(|v| v - ybar).collect();
        let path = RidgePath::new(&xs, &yc)?;
        let xv = std.apply(x, valid);
        let yv: Vec<f64> = valid.iter().map(|&i| y[i]).collect();
        lambdas
            .iter()
            .map(|&l| {
                let beta = nalgebra::DVector::from_vec(path.coef(l)?);
                let pred: Vec<f64> = (&xv * beta).iter().map(|p| (p + ybar).clamp(lo, hi)).collect();
                Ok(r_squared(&yv, &pred).ok())
            })
            .collect()
    })
}

/// The RBF baseline on the same checkerboard partitions, with the bandwidth
/// chosen per side over the four offsets.
pub fn rbf_checkerboard(
    y: &[f64],
    locs: &[(f64, f64)],
    deltas: &[f64],
    sigmas: &[f64],
) -> Result<CheckerboardReport> {
    if y.len() != locs.len() {
        return Err(Error::shape("labels and locations must align"));
    }
    validate_params(sigmas, "bandwidth")?;
    run_checkerboard(locs, deltas, sigmas, "sigma", |train, valid| {
        rbf_scores(y, locs, train, valid, sigmas)
    })
}

fn label_range(y: &[f64]) -> (f64, f64) {
    y.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
}

fn rbf_scores(
    y: &[f64],
    locs: &[(f64, f64)],
    train: &[usize],
    valid: &[usize],
    sigmas: &[f64],
) -> Result<Vec<Option<f64>>> {
    let tl: Vec<(f64, f64)> = train.iter().map(|&i| locs[i]).collect();
    let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let q: Vec<(f64, f64)> = valid.iter().map(|&i| locs[i]).collect();
    let yv: Vec<f64> = valid.iter().map(|&i| y[i]).collect();
    sigmas
        .iter()
        .map(|&s| {
            let pred = RbfInterpolator::new(tl.clone(), ty.clone(), s)?.predict(&q);
            Ok(r_squared(&yv, &pred).ok())
        })
        .collect()
}

const TILE: usize = 256;

/// Gaussian-kernel weighted average of training labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfInterpolator {
    locs: Vec<(f64, f64)>,
    labels: Vec<f64>,
    sigma: f64,
    cutoff: Option<f64>,
}

impl RbfInterpolator {
    pub fn new(locs: Vec<(f64, f64)>, labels: Vec<f64>, sigma: f64) -> Result<Self> {
        if locs.is_empty() {
            return Err(Error::invalid("RBF interpolation needs at least one training point"));
        }
        if locs.len() != labels.len() {
            return Err(Error::shape(format!(
                "{} locations but {} labels",
                locs.len(),
                labels.len()
            )));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid(format!("bandwidth must be positive, got {sigma}")));
        }
        if labels.iter().any(|v| !v.is_finite())
            || locs.iter().any(|l| !(l.0.is_finite() && l.1.is_finite()))
        {
            return Err(Error::NonFinite("RBF training data".into()));
        }
        Ok(RbfInterpolator {
            locs,
            labels,
            sigma,
            cutoff: None,
        })
    }

    /// Ignore training points farther than `multiple * sigma` from a query
    /// (the nearest point is always kept). Changes results; off by default.
    pub fn with_cutoff(mut self, multiple: f64) -> Self {
        self.cutoff = Some(multiple);
        self
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn predict_one(&self, q: (f64, f64), d2: &mut Vec<f64>) -> f64 {
        d2.clear();
        d2.extend(self.locs.iter().map(|l| (l.0 - q.0).powi(2) + (l.1 - q.1).powi(2)));
        let nearest = d2.iter().cloned().fold(f64::INFINITY, f64::min);
        let inv = 1.0 / (2.0 * self.sigma * self.sigma);
        let limit = self.cutoff.map(|c| (c * self.sigma).powi(2));
        let (mut num, mut den) = (0.0, 0.0);
        for (&d, &y) in d2.iter().zip(&self.labels) {
            if let Some(lim) = limit {
                if d > lim && d > nearest {
                    continue;
                }
            }
            let w = (-(d - nearest) * inv).exp();
            num += w * y;
            den += w;
        }
        // the nearest point contributes exactly 1
        assert!(den >= 1.0, "RBF weights underflowed");
        num / den
    }

    pub fn predict(&self, queries: &[(f64, f64)]) -> Vec<f64> {
        queries
            .par_chunks(TILE)
            .flat_map_iter(|tile| {
                let mut buf = Vec::with_capacity(self.locs.len());
                tile.iter().map(|&q| self.predict_one(q, &mut buf)).collect::<Vec<_>>()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaReport {
    pub sigmas: Vec<f64>,
    pub mean_r2: Vec<Option<f64>>,
    pub chosen: usize,
}

impl SigmaReport {
    pub fn chosen_sigma(&self) -> f64 {
        self.sigmas[self.chosen]
    }
}

/// Bandwidth maximising mean validation R^2 over the given
/// `(train, valid)` splits; ties go to the smallest bandwidth.
pub fn tune_sigma(
    y: &[f64],
    locs: &[(f64, f64)],
    splits: &[(Vec<usize>, Vec<usize>)],
    sigmas: &[f64],
) -> Result<SigmaReport> {
    validate_params(sigmas, "bandwidth")?;
    if splits.is_empty() {
        return Err(Error::invalid("no splits"));
    }
    let scores: Vec<Vec<Option<f64>>> = splits
        .par_iter()
        .map(|(train, valid)| {
            if valid.is_empty() {
                return Err(Error::invalid("empty validation set"));
            }
            rbf_scores(y, locs, train, valid, sigmas)
        })
        .collect::<Result<_>>()?;
    let chosen = select(&scores, sigmas.len())
        .ok_or_else(|| Error::ZeroVariance("validation labels are constant in every split".into()))?;
    let mean_r2 = (0..sigmas.len())
        .map(|p| {
            let v: Vec<f64> = scores.iter().filter_map(|s| s[p]).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect();
    Ok(SigmaReport {
        sigmas: sigmas.to_vec(),
        mean_r2,
        chosen,
    })
}

/// The four offset splits at one square side.
pub fn offset_splits(locs: &[(f64, f64)], delta: f64) -> Vec<(Vec<usize>, Vec<usize>)> {
    Offset::ALL.iter().map(|&o| checkerboard_split(locs, delta, o)).collect()
}
