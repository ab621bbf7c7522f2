//! The frozen random-patch featurizer.
//!
//! File layout (`MSKB`, all little-endian):
//!
//! ```text
//! magic "MSKB" | version u16 | M u32 | S u32 | K u32 | eps f64 | seed u64
//! | mean: d f64 | whitening: d*d f64 (row-major) | raw patches: (K/2)*d f32
//! ```
//!
//! `d = M*M*S`, and vectors are flattened in row, column, band order.
//! A bank fit without centering stores an all-zero mean.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::io::{read_file, write_file, ByteReader, ByteWriter};
use crate::rng;

const MAGIC: &[u8; 4] = b"MSKB";
const VERSION: u16 = 1;

/// `K/2` sampled patches, flattened, each of length `m*m*bands`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPatches {
    pub m: usize,
    pub bands: usize,
    pub data: Vec<f64>,
}

impl RawPatches {
    pub fn dim(&self) -> usize {
        self.m * self.m * self.bands
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.data[i * d..(i + 1) * d]
    }
}

/// Draw `k_half` windows of `m x m` from uniformly chosen images at
/// uniformly chosen positions. Values are rounded to single precision, the
/// precision at which banks are persisted.
pub fn sample_patches(images: &[Image], k_half: usize, m: usize, seed: u64) -> Result<RawPatches> {
    if images.is_empty() {
        return Err(Error::invalid("no images to sample patches from"));
    }
    if k_half == 0 || m == 0 {
        return Err(Error::invalid("need at least one patch of positive width"));
    }
    let bands = images[0].bands();
    for img in images {
        if img.bands() != bands {
            return Err(Error::shape(format!(
                "mixed band counts: {} and {} ({})",
                bands,
                img.bands(),
                img.source
            )));
        }
        if img.height() < m || img.width() < m {
            return Err(Error::invalid(format!(
                "image {}x{} ({}) is smaller than the {m}x{m} patch",
                img.height(),
                img.width(),
                img.source
            )));
        }
    }
    let mut rng = rng::stream(seed, "patches");
    let mut data = Vec::with_capacity(k_half * m * m * bands);
    for _ in 0..k_half {
        let img = &images[rng.random_range(0..images.len())];
        let i = rng.random_range(0..=img.height() - m);
        let j = rng.random_range(0..=img.width() - m);
        data.extend(img.window(i, j, m).into_iter().map(|v| v as f32 as f64));
    }
    Ok(RawPatches { m, bands, data })
}

/// How the eigenvalue floor of the whitening map is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    Absolute(f64),
    /// Multiple of the largest covariance eigenvalue.
    Relative(f64),
}

#[derive(Debug, Clone)]
pub struct Whitening {
    pub mean: Vec<f64>,
    /// Symmetric `d x d` map.
    pub matrix: DMatrix<f64>,
    /// Absolute regulariser that was applied.
    pub eps: f64,
    /// Eigenvalues of the centred covariance, ascending.
    pub eigenvalues: Vec<f64>,
}

/// Fit a ZCA map `U (L + eps I)^(-1/2) U^T` to the patch sample, optionally
/// centring on the sample mean first.
pub fn fit_whitening(patches: &RawPatches, reg: Regularizer, center: bool) -> Result<Whitening> {
    let d = patches.dim();
    let n = patches.len();
    if n == 0 {
        return Err(Error::invalid("no patches"));
    }
    if patches.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("patches".into()));
    }
    let rel = match reg {
        Regularizer::Absolute(e) | Regularizer::Relative(e) => e,
    };
    if !rel.is_finite() || rel < 0.0 {
        return Err(Error::invalid("whitening regulariser must be nonnegative"));
    }

    let mut mean = vec![0.0; d];
    if center {
        for p in patches.data.chunks_exact(d) {
            for (m, v) in mean.iter_mut().zip(p) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut c = vec![0.0; d];
    for p in patches.data.chunks_exact(d) {
        for t in 0..d {
            c[t] = p[t] - mean[t];
        }
        for a in 0..d {
            for b in a..d {
                cov[(a, b)] += c[a] * c[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / n as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
    let lmax = eigenvalues.iter().cloned().fold(0.0, f64::max);
    let eps = match reg {
        Regularizer::Absolute(e) => e,
        // a constant patch sample has no scale; fall back to unit scale
        Regularizer::Relative(r) => r * if lmax > 0.0 { lmax } else { 1.0 },
    };
    let mut scaled = eig.eigenvectors.clone();
    for (j, &l) in eigenvalues.iter().enumerate() {
        let denom = l + eps;
        if denom <= 0.0 {
            return Err(Error::Numerical(
                "patch covariance is singular; use a positive regulariser".into(),
            ));
        }
        let s = denom.powf(-0.5);
        scaled.column_mut(j).scale_mut(s);
    }
    let mut matrix = &scaled * eig.eigenvectors.transpose();
    // symmetrise away round-off
    for a in 0..d {
        for b in a + 1..d {
            let v = 0.5 * (matrix[(a, b)] + matrix[(b, a)]);
            matrix[(a, b)] = v;
            matrix[(b, a)] = v;
        }
    }
    eigenvalues.sort_by(|a, b| a.total_cmp(b));
    Ok(Whitening {
        mean,
        matrix,
        eps,
        eigenvalues,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BankConfig {
    /// Total feature count; must be even.
    pub k: usize,
    /// Patch width in pixels.
    pub m: usize,
    /// Whitening regulariser relative to the largest covariance eigenvalue.
    pub eps_rel: f64,
    pub center: bool,
    pub seed: u64,
}

impl Default for BankConfig {
    fn default() -> Self {
        BankConfig {
            k: 8192,
            m: 3,
            eps_rel: 1e-6,
            center: true,
            seed: 0,
        }
    }
}

/// Bias added to every pre-activation.
pub const BIAS: f64 = 1.0;

/// A frozen featurizer: `K/2` whitened patches, their implied negatives,
/// the whitening map, and bias 1.
#[derive(Debug, Clone)]
pub struct PatchBank {
    m: usize,
    bands: usize,
    k: usize,
    eps: f64,
    seed: u64,
    mean: Vec<f64>,
    whitening: DMatrix<f64>,
    raw: Vec<f32>,
    whitened: Vec<f64>,
    folded: DMatrix<f64>,
    offsets: Vec<f64>,
    fingerprint: [u8; 32],
}

/// Sample patches from `images` (which must exclude any holdout) and build
/// the bank.
pub fn build_bank(images: &[Image], cfg: &BankConfig) -> Result<PatchBank> {
    if cfg.k < 2 || !cfg.k.is_multiple_of(2) {
        return Err(Error::invalid(format!("K must be even and >= 2, got {}", cfg.k)));
    }
    let patches = sample_patches(images, cfg.k / 2, cfg.m, cfg.seed)?;
    let w = fit_whitening(&patches, Regularizer::Relative(cfg.eps_rel), cfg.center)?;
    let raw = patches.data.iter().map(|&v| v as f32).collect();
    PatchBank::from_parts(cfg.m, patches.bands, cfg.k, w.eps, cfg.seed, w.mean, w.matrix, raw)
}

impl PatchBank {
    #[allow(clippy::too_many_arguments)]
    fn from_parts(
        m: usize,
        bands: usize,
        k: usize,
        eps: f64,
        seed: u64,
        mean: Vec<f64>,
        whitening: DMatrix<f64>,
        raw: Vec<f32>,
    ) -> Result<Self> {
        let d = m * m * bands;
        let half = k / 2;
        if mean.len() != d || whitening.shape() != (d, d) || raw.len() != half * d {
            return Err(Error::shape("bank component sizes disagree"));
        }
        // whitened patches W (p - mu), then folded Q = W * whitened so that
        // <W (s - mu), W (p - mu)> = s . q - mu . q
        let mut whitened = vec![0.0; half * d];
        let mut folded = DMatrix::<f64>::zeros(d, half);
        let mut offsets = vec![0.0; half];
        let mut centred = vec![0.0; d];
        for p in 0..half {
            for t in 0..d {
                centred[t] = raw[p * d + t] as f64 - mean[t];
            }
            let wp = &mut whitened[p * d..(p + 1) * d];
            for a in 0..d {
                wp[a] = (0..d).map(|b| whitening[(a, b)] * centred[b]).sum();
            }
            for a in 0..d {
                folded[(a, p)] = (0..d).map(|b| whitening[(a, b)] * wp[b]).sum();
            }
            offsets[p] = (0..d).map(|a| mean[a] * folded[(a, p)]).sum();
        }
        let mut bank = PatchBank {
            m,
            bands,
            k,
            eps,
            seed,
            mean,
            whitening,
            raw,
            whitened,
            folded,
            offsets,
            fingerprint: [0; 32],
        };
        bank.fingerprint = Sha256::digest(bank.to_bytes()).into();
        Ok(bank)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    /// Total number of features, including negatives.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_stored(&self) -> usize {
        self.k / 2
    }

    pub fn dim(&self) -> usize {
        self.m * self.m * self.bands
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bias(&self) -> f64 {
        BIAS
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn whitening(&self) -> &DMatrix<f64> {
        &self.whitening
    }

    pub fn raw_patch(&self, p: usize) -> Vec<f64> {
        let d = self.dim();
        self.raw[p * d..(p + 1) * d].iter().map(|&v| v as f64).collect()
    }

    /// Whitened form of stored patch `p`.
    pub fn whitened_patch(&self, p: usize) -> &[f64] {
        let d = self.dim();
        &self.whitened[p * d..(p + 1) * d]
    }

    /// `d x K/2` matrix whose column `p` is `W W (p - mu)`.
    pub(crate) fn folded(&self) -> &DMatrix<f64> {
        &self.folded
    }

    /// Per-patch constant `mu . W W (p - mu)`.
    pub(crate) fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn fingerprint(&self) -> [u8; 32] {
        self.fingerprint
    }

    pub fn fingerprint_hex(&self) -> String {
        self.fingerprint.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Sign and stored-patch index of feature `k`.
    pub fn feature_source(&self, k: usize) -> (f64, usize) {
        let half = self.k / 2;
        if k < half {
            (1.0, k)
        } else {
            (-1.0, k - half)
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.dim();
        let mut w = ByteWriter::default();
        w.bytes(MAGIC);
        w.u16(VERSION);
        w.u32(self.m as u32);
        w.u32(self.bands as u32);
        w.u32(self.k as u32);
        w.f64(self.eps);
        w.u64(self.seed);
        w.f64s(&self.mean);
        for a in 0..d {
            for b in 0..d {
                w.f64(self.whitening[(a, b)]);
            }
        }
        for &v in &self.raw {
            w.f32(v);
        }
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
            return Err(r.format_err(format!("unsupported bank version {version}")));
        }
        let m = r.u32()? as usize;
        let bands = r.u32()? as usize;
        let k = r.u32()? as usize;
        if m == 0 || bands == 0 || k < 2 || !k.is_multiple_of(2) {
            return Err(r.format_err("invalid bank header"));
        }
        let eps = r.f64()?;
        let seed = r.u64()?;
        let d = m * m * bands;
        let mean = r.f64s(d)?;
        let wdata = r.f64s(d * d)?;
        let whitening = DMatrix::from_row_slice(d, d, &wdata);
        let raw = (0..k / 2 * d).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        r.finish()?;
        PatchBank::from_parts(m, bands, k, eps, seed, mean, whitening, raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CellId;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn loc() -> CellId {
        CellId { row: 0, col: 0, lat: 0.0, lon: 0.0 }
    }

    fn random_images(n: usize, hw: usize, seed: u64) -> Vec<Image> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let data = (0..hw * hw * 3).map(|_| rng.random::<f64>()).collect();
                Image::new(hw, hw, 3, data, loc(), "r").unwrap()
            })
            .collect()
    }

    fn covariance_after(p: &RawPatches, w: &Whitening) -> DMatrix<f64> {
        let d = p.dim();
        let n = p.len();
        let mut cov = DMatrix::zeros(d, d);
        for i in 0..n {
            let c: Vec<f64> = p.patch(i).iter().zip(&w.mean).map(|(a, b)| a - b).collect();
            let z: Vec<f64> = (0..d).map(|a| (0..d).map(|b| w.matrix[(a, b)] * c[b]).sum()).collect();
            for a in 0..d {
                for b in 0..d {
                    cov[(a, b)] += z[a] * z[b] / n as f64;
                }
            }
        }
        cov
    }

    #[test]
    fn constant_image_gives_constant_patches() {
        let img = Image::new(6, 6, 3, vec![0.3; 108], loc(), "c").unwrap();
        let p = sample_patches(&[img], 5, 3, 1).unwrap();
        assert!(p.data.iter().all(|&v| v == 0.3f32 as f64));
    }

    #[test]
    fn full_size_patch_is_whole_image() {
        let imgs = random_images(2, 4, 3);
        let p = sample_patches(&imgs, 6, 4, 9).unwrap();
        for i in 0..6 {
            let whole: Vec<f64> = imgs.iter().map(|im| im.data().iter().map(|&v| v as f32 as f64).collect::<Vec<_>>()).find(|d| d == p.patch(i)).unwrap();
            assert_eq!(whole.len(), 48);
        }
    }

    #[test]
    fn sampling_is_reproducible_and_checks_size() {
        let imgs = random_images(3, 8, 1);
        assert_eq!(sample_patches(&imgs, 10, 3, 5).unwrap(), sample_patches(&imgs, 10, 3, 5).unwrap());
        assert!(sample_patches(&imgs, 10, 9, 5).is_err());
    }

    #[test]
    fn white_patches_give_identity_map() {
        // +-sqrt(d) e_i has zero mean and exactly identity covariance
        let d = 4;
        let mut data = Vec::new();
        for i in 0..d {
            for s in [1.0, -1.0] {
                let mut v = vec![0.0; d];
                v[i] = s * (d as f64).sqrt();
                data.extend(v);
            }
        }
        let p = RawPatches { m: 2, bands: 1, data };
        let w = fit_whitening(&p, Regularizer::Absolute(1e-12), true).unwrap();
        let id = DMatrix::<f64>::identity(d, d);
        assert!((&w.matrix - id).abs().max() < 1e-6);
    }

    #[test]
    fn diagonal_covariance_closed_form() {
        // +-2 on axis 0 and +-1 elsewhere gives covariance diag(4, 1, 1, 1)
        let d = 4;
        let mut data = Vec::new();
        for i in 0..d {
            for s in [1.0, -1.0] {
                let mut v = vec![0.0; d];
                v[i] = s * if i == 0 { 2.0 } else { 1.0 } * (d as f64).sqrt();
                data.extend(v);
            }
        }
        let p = RawPatches { m: 2, bands: 1, data };
        let w = fit_whitening(&p, Regularizer::Absolute(0.0), true).unwrap();
        let mut expect = DMatrix::<f64>::identity(d, d);
        expect[(0, 0)] = 0.5;
        assert!((&w.matrix - expect).abs().max() < 1e-12, "{}", w.matrix);
    }

    #[test]
    fn whitened_covariance_is_shrunk_identity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let d = 12;
        let n = 400;
        // correlated sample: x = A g
        let a = DMatrix::<f64>::from_fn(d, d, |_, _| normal.sample(&mut rng));
        let mut data = Vec::new();
        for _ in 0..n {
            let g = nalgebra::DVector::<f64>::from_fn(d, |_, _| normal.sample(&mut rng));
            data.extend((&a * g).iter().cloned());
        }
        let p = RawPatches { m: 2, bands: 3, data };
        let eps = 0.5;
        let w = fit_whitening(&p, Regularizer::Absolute(eps), true).unwrap();
        assert!(w.matrix.clone().cholesky().is_some(), "W must be SPD");

        // recompute the sample covariance independently and compare per eigen-direction
        let mut cov = DMatrix::zeros(d, d);
        for i in 0..n {
            let c: Vec<f64> = p.patch(i).iter().zip(&w.mean).map(|(a, b)| a - b).collect();
            for x in 0..d {
                for y in 0..d {
                    cov[(x, y)] += c[x] * c[y] / n as f64;
                }
            }
        }
        let eig = SymmetricEigen::new(cov);
        let after = covariance_after(&p, &w);
        for j in 0..d {
            let u = eig.eigenvectors.column(j);
            let got = (u.transpose() * &after * u)[(0, 0)];
            let l = eig.eigenvalues[j];
            assert!((got - l / (l + eps)).abs() < 1e-9, "{got} vs {}", l / (l + eps));
        }
    }

    #[test]
    fn bank_covariance_identity_within_regulariser() {
        let imgs = random_images(20, 16, 7);
        let patches = sample_patches(&imgs, 500, 3, 2).unwrap();
        let w = fit_whitening(&patches, Regularizer::Relative(1e-6), true).unwrap();
        let after = covariance_after(&patches, &w);
        let worst = w.eigenvalues.iter().map(|l| w.eps / (l + w.eps)).fold(0.0, f64::max);
        let dev = (after - DMatrix::<f64>::identity(27, 27)).abs().max();
        assert!(dev <= worst + 1e-6, "{dev} > {worst}");
    }

    #[test]
    fn whitening_errors() {
        let p = RawPatches { m: 1, bands: 2, data: vec![1.0, f64::NAN] };
        assert!(fit_whitening(&p, Regularizer::Absolute(1e-3), true).is_err());
        let p = RawPatches { m: 1, bands: 2, data: vec![1.0, 2.0, 1.0, 2.0] };
        assert!(fit_whitening(&p, Regularizer::Absolute(-1.0), true).is_err());
        // singular covariance with no regulariser
        assert!(fit_whitening(&p, Regularizer::Absolute(0.0), true).is_err());
    }

    #[test]
    fn bank_shapes_and_fingerprint() {
        let imgs = random_images(4, 10, 1);
        let cfg = BankConfig { k: 2, m: 3, seed: 4, ..Default::default() };
        let b = build_bank(&imgs, &cfg).unwrap();
        assert_eq!(b.n_stored(), 1);
        assert_eq!(b.feature_source(1), (-1.0, 0));
        assert_eq!(b.bias(), 1.0);

        let cfg = BankConfig { k: 64, m: 3, seed: 4, ..Default::default() };
        let a = build_bank(&imgs, &cfg).unwrap();
        let b = build_bank(&imgs, &cfg).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = build_bank(&imgs, &BankConfig { seed: 5, ..cfg }).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert!(build_bank(&imgs, &BankConfig { k: 7, ..cfg }).is_err());
    }

    #[test]
    fn bank_file_round_trip() {
        let imgs = random_images(4, 10, 1);
        let cfg = BankConfig { k: 16, m: 2, seed: 1, ..Default::default() };
        let b = build_bank(&imgs, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.mskb");
        b.write(&path).unwrap();
        let r = PatchBank::read(&path).unwrap();
        assert_eq!(r.fingerprint(), b.fingerprint());
        assert_eq!(r.folded(), b.folded());
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"MSKB");
        let d = 12;
        assert_eq!(bytes.len(), 4 + 2 + 12 + 16 + d * 8 + d * d * 8 + 8 * d * 4);
    }

    #[test]
    fn uncentred_bank_stores_zero_mean() {
        let imgs = random_images(4, 10, 1);
        let cfg = BankConfig { k: 8, m: 2, seed: 1, center: false, ..Default::default() };
        let b = build_bank(&imgs, &cfg).unwrap();
        assert!(b.mean().iter().all(|&v| v == 0.0));
        assert!(b.offsets().iter().all(|&v| v == 0.0));
    }
}
