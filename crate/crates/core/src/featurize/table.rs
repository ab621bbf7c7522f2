//! The feature table and its file formats.
//!
//! Binary layout (`MSKF`, little-endian):
//!
//! ```text
//! magic "MSKF" | version u16 | N u64 | K u32 | bank fingerprint [u8; 32]
//! | N x (lat f64 | lon f64 | K x f32)
//! ```

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::io::{read_file, write_file, ByteReader, ByteWriter};

const MAGIC: &[u8; 4] = b"MSKF";
const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "f32" => Some(Precision::F32),
            "f64" => Some(Precision::F64),
            _ => None,
        }
    }
}

/// `N x K` pooled features with a `(lat, lon)` per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    k: usize,
    values: Vec<f64>,
    locations: Vec<(f64, f64)>,
    fingerprint: [u8; 32],
    precision: Precision,
}

impl FeatureTable {
    pub fn new(
        k: usize,
        values: Vec<f64>,
        locations: Vec<(f64, f64)>,
        fingerprint: [u8; 32],
        precision: Precision,
    ) -> Result<Self> {
        if k == 0 || values.len() != locations.len() * k {
            return Err(Error::shape(format!(
                "{} values for {} rows of {k} features",
                values.len(),
                locations.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFinite("feature values must be finite and nonnegative".into()));
        }
        Ok(FeatureTable {
            k,
            values,
            locations,
            fingerprint,
            precision,
        })
    }

    pub fn n(&self) -> usize {
        self.locations.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn locations(&self) -> &[(f64, f64)] {
        &self.locations
    }

    pub fn fingerprint(&self) -> [u8; 32] {
        self.fingerprint
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    /// Rows as a dense matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n(), self.k, &self.values)
    }

    /// The first `k` feature columns of every row; used for `K` sweeps.
    pub fn leading_columns(&self, k: usize) -> DMatrix<f64> {
        let k = k.min(self.k);
        DMatrix::from_fn(self.n(), k, |i, j| self.values[i * self.k + j])
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureTable {
        let mut values = Vec::with_capacity(idx.len() * self.k);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        FeatureTable {
            k: self.k,
            values,
            locations: idx.iter().map(|&i| self.locations[i]).collect(),
            fingerprint: self.fingerprint,
            precision: self.precision,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        w.bytes(MAGIC);
        w.u16(VERSION);
        w.u64(self.n() as u64);
        w.u32(self.k as u32);
        w.bytes(&self.fingerprint);
        for i in 0..self.n() {
            let (lat, lon) = self.locations[i];
            w.f64(lat);
            w.f64(lon);
            for &v in self.row(i) {
                w.f32(v as f32);
            }
        }
        w.buf
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    /// Values come back at single precision, the precision of the file.
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let mut r = ByteReader::new(&bytes, path);
        r.magic(MAGIC)?;
        let version = r.u16()?;
        if version != VERSION {
            return Err(r.format_err(format!("unsupported table version {version}")));
        }
        let n = r.u64()? as usize;
        let k = r.u32()? as usize;
        let fingerprint: [u8; 32] = r.take(32)?.try_into().unwrap();
        let mut values = Vec::with_capacity(n * k);
        let mut locations = Vec::with_capacity(n);
        for _ in 0..n {
            let lat = r.f64()?;
            let lon = r.f64()?;
            locations.push((lat, lon));
            for _ in 0..k {
                values.push(r.f32()? as f64);
            }
        }
        r.finish()?;
        FeatureTable::new(k, values, locations, fingerprint, Precision::F32)
            .map_err(|e| Error::format(path, e.to_string()))
    }

    /// CSV with header `lat,lon,x_0,...,x_{K-1}`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let mut header = String::from("lat,lon");
        for j in 0..self.k {
            header.push_str(&format!(",x_{j}"));
        }
        let mut out = header;
        out.push('\n');
        for i in 0..self.n() {
            let (lat, lon) = self.locations[i];
            out.push_str(&format!("{lat},{lon}"));
            for v in self.row(i) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        w.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}
