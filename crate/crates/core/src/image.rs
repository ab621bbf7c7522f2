//! In-memory rasters, resampling, and the on-disk image formats.
//!
//! Images live on disk as `<root>/<row>_<col>.png` (8-bit, normalised by
//! 1/255) or `<root>/<row>_<col>.rfi`, a little-endian float container:
//!
//! ```text
//! magic "MSKR" | version u16 | H u32 | W u32 | S u32 | H*W*S f64 (row-major, band fastest)
//! ```

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{CellId, Grid};

const RAW_MAGIC: &[u8; 4] = b"MSKR";
const RAW_VERSION: u16 = 1;
pub const RAW_EXT: &str = "rfi";

/// An `H x W x S` raster with intensities in `[0, 1]`, stored row-major with
/// the band index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    bands: usize,
    data: Vec<f64>,
    pub location: CellId,
    pub source: String,
}

impl Image {
    pub fn new(
        height: usize,
        width: usize,
        bands: usize,
        data: Vec<f64>,
        location: CellId,
        source: impl Into<String>,
    ) -> Result<Self> {
        if height == 0 || width == 0 || bands == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if data.len() != height * width * bands {
            return Err(Error::shape(format!(
                "{} values for a {height}x{width}x{bands} image",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image pixels".into()));
        }
        Ok(Image {
            height,
            width,
            bands,
            data,
            location,
            source: source.into(),
        })
    }

    /// Build from 8-bit samples, normalising by 1/255.
    pub fn from_u8(
        height: usize,
        width: usize,
        bands: usize,
        bytes: &[u8],
        location: CellId,
        source: impl Into<String>,
    ) -> Result<Self> {
        let data = bytes.iter().map(|&b| b as f64 / 255.0).collect();
        Image::new(height, width, bands, data, location, source)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, s: usize) -> f64 {
        self.data[(i * self.width + j) * self.bands + s]
    }

    /// Copy of the `m x m x S` window with top-left corner `(i, j)`, in
    /// row, column, band order.
    pub fn window(&self, i: usize, j: usize, m: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(m * m * self.bands);
        for di in 0..m {
            let start = ((i + di) * self.width + j) * self.bands;
            out.extend_from_slice(&self.data[start..start + m * self.bands]);
        }
        out
    }

    pub fn band_mean(&self, s: usize) -> f64 {
        let n = (self.height * self.width) as f64;
        self.data.iter().skip(s).step_by(self.bands).sum::<f64>() / n
    }
}

/// Row weights of an area-weighted box resampler from `src` to `dst` cells:
/// `w[o][i]` is the fraction of output cell `o` covered by input cell `i`.
fn box_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = (o + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            (first..last)
                .filter_map(|i| {
                    let cover = (hi.min((i + 1) as f64) - lo.max(i as f64)).max(0.0);
                    (cover > 0.0).then_some((i, cover / scale))
                })
                .collect()
        })
        .collect()
}

/// Downsample to `target_h x target_w` by area-weighted box averaging.
pub fn coarsen(image: &Image, target_h: usize, target_w: usize) -> Result<Image> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::invalid("target size must be positive"));
    }
    if target_h > image.height || target_w > image.width {
        return Err(Error::invalid(format!(
            "cannot coarsen {}x{} to the larger {target_h}x{target_w}",
            image.height, image.width
        )));
    }
    let s = image.bands;
    let wy = box_weights(image.height, target_h);
    let wx = box_weights(image.width, target_w);

    // columns first, then rows
    let mut tmp = vec![0.0; image.height * target_w * s];
    for i in 0..image.height {
        for (oj, taps) in wx.iter().enumerate() {
            for b in 0..s {
                tmp[(i * target_w + oj) * s + b] =
                    taps.iter().map(|&(j, w)| w * image.get(i, j, b)).sum();
            }
        }
    }
    let mut out = vec![0.0; target_h * target_w * s];
    for (oi, taps) in wy.iter().enumerate() {
        for oj in 0..target_w {
            for b in 0..s {
                let v: f64 = taps
                    .iter()
                    .map(|&(i, w)| w * tmp[(i * target_w + oj) * s + b])
                    .sum();
                out[(oi * target_w + oj) * s + b] = v.clamp(0.0, 1.0);
            }
        }
    }
    Image::new(
        target_h,
        target_w,
        s,
        out,
        image.location,
        image.source.clone(),
    )
}

pub fn image_file_name(cell: &CellId, ext: &str) -> String {
    format!("{}_{}.{ext}", cell.row, cell.col)
}

/// Write an 8-bit PNG. Only 1-, 3- and 4-band images map onto PNG colour
/// types; everything else should use [`write_raw`].
pub fn write_png(image: &Image, path: &Path) -> Result<()> {
    let color = match image.bands {
        1 => png::ColorType::Grayscale,
        2 => png::ColorType::GrayscaleAlpha,
        3 => png::ColorType::Rgb,
        4 => png::ColorType::Rgba,
        b => return Err(Error::invalid(format!("PNG cannot hold {b} bands"))),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), image.width as u32, image.height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let bytes: Vec<u8> = image
        .data
        .iter()
        .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let mut w = enc
        .write_header()
        .map_err(|e| Error::format(path, e.to_string()))?;
    w.write_image_data(&bytes)
        .map_err(|e| Error::format(path, e.to_string()))?;
    w.finish().map_err(|e| Error::format(path, e.to_string()))
}

pub fn read_png(path: &Path, location: CellId) -> Result<Image> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = png::Decoder::new(BufReader::new(file));
    dec.set_transformations(png::Transformations::EXPAND);
    let mut reader = dec
        .read_info()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path, e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::format(path, "only 8-bit PNG is supported"));
    }
    let bands = info.color_type.samples();
    buf.truncate(info.buffer_size());
    Image::from_u8(
        info.height as usize,
        info.width as usize,
        bands,
        &buf,
        location,
        path.display().to_string(),
    )
    .map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_raw(image: &Image, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut buf = Vec::with_capacity(18 + image.data.len() * 8);
    buf.extend_from_slice(RAW_MAGIC);
    buf.extend_from_slice(&RAW_VERSION.to_le_bytes());
    for d in [image.height, image.width, image.bands] {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in &image.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_raw(path: &Path, location: CellId) -> Result<Image> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 18 || &bytes[..4] != RAW_MAGIC {
        return Err(Error::format(path, "not a raw float image (bad magic)"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != RAW_VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let dim = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (h, w, s) = (dim(6), dim(10), dim(14));
    let n = h * w * s;
    if bytes.len() != 18 + n * 8 {
        return Err(Error::format(path, "truncated raw image"));
    }
    let data = bytes[18..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Image::new(h, w, s, data, location, path.display().to_string())
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Write an image under `dir` with its cell-indexed name, choosing PNG when
/// the band count allows and the raw container otherwise.
pub fn write_image(image: &Image, dir: &Path) -> Result<PathBuf> {
    let (ext, png) = if matches!(image.bands, 1 | 3 | 4) {
        ("png", true)
    } else {
        (RAW_EXT, false)
    };
    let path = dir.join(image_file_name(&image.location, ext));
    if png {
        write_png(image, &path)?;
    } else {
        write_raw(image, &path)?;
    }
    Ok(path)
}

fn parse_cell_name(path: &Path) -> Option<(usize, usize)> {
    let stem = path.file_stem()?.to_str()?;
    let (r, c) = stem.split_once('_')?;
    Some((r.parse().ok()?, c.parse().ok()?))
}

/// Load every `<row>_<col>.png|rfi` under `dir`, sorted by `(row, col)`,
/// with locations looked up in `grid`. Decoding runs in parallel; the output
/// order does not depend on completion order.
pub fn load_image_dir(dir: &Path, grid: &Grid) -> Result<Vec<Image>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if ext != "png" && ext != RAW_EXT {
            continue;
        }
        let Some((row, col)) = parse_cell_name(&path) else {
            continue;
        };
        let cell = grid
            .cell(row, col)
            .ok_or_else(|| Error::format(&path, format!("cell ({row}, {col}) is not on the grid")))?;
        files.push((cell, path));
    }
    files.sort_by_key(|(c, _)| c.key());
    files
        .par_iter()
        .map(|(cell, path)| {
            if path.extension().and_then(|e| e.to_str()) == Some("png") {
                read_png(path, *cell)
            } else {
                read_raw(path, *cell)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn loc() -> CellId {
        CellId {
            row: 0,
            col: 0,
            lat: 0.0,
            lon: 0.0,
        }
    }

    fn random_image(h: usize, w: usize, s: usize, seed: u64) -> Image {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..h * w * s).map(|_| rng.random::<f64>()).collect();
        Image::new(h, w, s, data, loc(), "t").unwrap()
    }

    #[test]
    fn constant_stays_constant() {
        let img = Image::new(10, 10, 2, vec![0.3; 200], loc(), "c").unwrap();
        let out = coarsen(&img, 4, 4).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn checker_averages_to_half() {
        let data = (0..16).map(|k| ((k / 4 + k % 4) % 2) as f64).collect();
        let img = Image::new(4, 4, 1, data, loc(), "c").unwrap();
        let out = coarsen(&img, 2, 2).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn matches_block_mean_oracle() {
        let img = random_image(8, 8, 3, 5);
        let out = coarsen(&img, 4, 4).unwrap();
        for oi in 0..4 {
            for oj in 0..4 {
                for b in 0..3 {
                    let mut s = 0.0;
                    for di in 0..2 {
                        for dj in 0..2 {
                            s += img.get(2 * oi + di, 2 * oj + dj, b);
                        }
                    }
                    assert!((out.get(oi, oj, b) - s / 4.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn non_dividing_target_conserves_mean() {
        let img = random_image(20, 15, 3, 9);
        let out = coarsen(&img, 8, 6).unwrap();
        for b in 0..3 {
            assert!((img.band_mean(b) - out.band_mean(b)).abs() < 1e-12);
        }
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let div = coarsen(&img, 10, 5).unwrap();
        for b in 0..3 {
            assert!((img.band_mean(b) - div.band_mean(b)).abs() < 1e-12);
        }
    }

    #[test]
    fn larger_target_rejected() {
        let img = random_image(4, 4, 1, 1);
        assert!(coarsen(&img, 5, 4).is_err());
    }

    #[test]
    fn png_and_raw_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let bytes: Vec<u8> = (0..5 * 6 * 3).map(|i| (i * 7 % 256) as u8).collect();
        let img = Image::from_u8(5, 6, 3, &bytes, loc(), "x").unwrap();
        let p = write_image(&img, dir.path()).unwrap();
        assert_eq!(read_png(&p, loc()).unwrap().data(), img.data());

        let raw = random_image(4, 3, 5, 2);
        let p = write_image(&raw, dir.path()).unwrap();
        assert!(p.extension().unwrap() == RAW_EXT);
        assert_eq!(read_raw(&p, loc()).unwrap().data(), raw.data());
    }

    #[test]
    fn corrupt_png_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("0_0.png");
        std::fs::write(&p, b"not a png").unwrap();
        let err = read_png(&p, loc()).unwrap_err().to_string();
        assert!(err.contains("0_0.png"), "{err}");
    }
}
