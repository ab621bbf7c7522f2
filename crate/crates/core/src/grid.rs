//! A global grid of cells that are square in physical space.
//!
//! Rows are anchored at `lat_min` and have a constant angular height of
//! `cell_size_km / 111.32` degrees. Within a row the angular width is
//! `cell_size_km / (111.32 * cos(lat))`, evaluated at the row's centre
//! latitude, with columns anchored at `lon_min`.

use rand::seq::index;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;

/// Kilometres per degree of latitude on a spherical Earth.
pub const KM_PER_DEGREE: f64 = 111.32;

const POLAR_COS_LIMIT: f64 = 0.05;
const MAX_ABS_LAT: f64 = 85.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl Bounds {
    pub fn new(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64) -> Self {
        Bounds {
            lat_min,
            lat_max,
            lon_min,
            lon_max,
        }
    }

    /// Continental-US box used as the default sampling domain.
    pub fn conus() -> Self {
        Bounds::new(25.0, 50.0, -125.0, -66.0)
    }
}

/// A grid cell: row/column index plus its centroid in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellId {
    pub row: usize,
    pub col: usize,
    pub lat: f64,
    pub lon: f64,
}

impl CellId {
    pub fn key(&self) -> (usize, usize) {
        (self.row, self.col)
    }
}

#[derive(Debug, Clone)]
pub struct Grid {
    bounds: Bounds,
    cell_size_km: f64,
    cell_height_deg: f64,
    row_widths: Vec<f64>,
    row_cols: Vec<usize>,
    row_start: Vec<usize>,
    n_cells: usize,
}

fn cells_to_cover(span: f64, step: f64) -> usize {
    // tolerate round-off when the span is an exact multiple of the step
    ((span / step) - 1e-9).ceil().max(1.0) as usize
}

/// Build the grid covering `bounds` with cells of side `cell_size_km`.
pub fn build_grid(bounds: Bounds, cell_size_km: f64) -> Result<Grid> {
    let Bounds {
        lat_min,
        lat_max,
        lon_min,
        lon_max,
    } = bounds;
    if ![lat_min, lat_max, lon_min, lon_max, cell_size_km]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(Error::NonFinite("grid bounds".into()));
    }
    if cell_size_km <= 0.0 {
        return Err(Error::invalid("cell_size_km must be positive"));
    }
    if lat_max <= lat_min || lon_max <= lon_min {
        return Err(Error::invalid(format!(
            "degenerate bounds: lat [{lat_min}, {lat_max}], lon [{lon_min}, {lon_max}]"
        )));
    }
    if lat_min.abs() >= MAX_ABS_LAT || lat_max.abs() >= MAX_ABS_LAT {
        return Err(Error::invalid(format!(
            "latitudes must satisfy |lat| < {MAX_ABS_LAT}"
        )));
    }

    let cell_height_deg = cell_size_km / KM_PER_DEGREE;
    let n_rows = cells_to_cover(lat_max - lat_min, cell_height_deg);
    let mut row_widths = Vec::with_capacity(n_rows);
    let mut row_cols = Vec::with_capacity(n_rows);
    let mut row_start = Vec::with_capacity(n_rows);
    let mut n_cells = 0usize;
    for r in 0..n_rows {
        let lat_c = lat_min + (r as f64 + 0.5) * cell_height_deg;
        let c = lat_c.to_radians().cos();
        if c <= POLAR_COS_LIMIT {
            return Err(Error::invalid(format!(
                "row {r} centred at {lat_c} degrees is too close to a pole"
            )));
        }
        let w = cell_size_km / (KM_PER_DEGREE * c);
        let cols = cells_to_cover(lon_max - lon_min, w);
        row_widths.push(w);
        row_cols.push(cols);
        row_start.push(n_cells);
        n_cells += cols;
    }

    Ok(Grid {
        bounds,
        cell_size_km,
        cell_height_deg,
        row_widths,
        row_cols,
        row_start,
        n_cells,
    })
}

impl Grid {
    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn cell_size_km(&self) -> f64 {
        self.cell_size_km
    }

    pub fn cell_height_deg(&self) -> f64 {
        self.cell_height_deg
    }

    pub fn n_rows(&self) -> usize {
        self.row_cols.len()
    }

    pub fn n_cols(&self, row: usize) -> usize {
        self.row_cols[row]
    }

    pub fn len(&self) -> usize {
        self.n_cells
    }

    pub fn is_empty(&self) -> bool {
        self.n_cells == 0
    }

    /// Angular width (degrees of longitude) of every cell in `row`.
    pub fn row_width_deg(&self, row: usize) -> f64 {
        self.row_widths[row]
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<CellId> {
        if row >= self.n_rows() || col >= self.row_cols[row] {
            return None;
        }
        let lat = self.bounds.lat_min + (row as f64 + 0.5) * self.cell_height_deg;
        let lon = self.bounds.lon_min + (col as f64 + 0.5) * self.row_widths[row];
        Some(CellId { row, col, lat, lon })
    }

    /// Cell with row-major enumeration index `i`.
    pub fn cell_at(&self, i: usize) -> Option<CellId> {
        if i >= self.n_cells {
            return None;
        }
        let row = self.row_start.partition_point(|&s| s <= i) - 1;
        self.cell(row, i - self.row_start[row])
    }

    pub fn index_of(&self, row: usize, col: usize) -> Option<usize> {
        (row < self.n_rows() && col < self.row_cols[row]).then(|| self.row_start[row] + col)
    }

    /// Cell containing `(lat, lon)`; points on an interior boundary belong
    /// to the upper/right neighbour (floor rule).
    pub fn cell_of(&self, lat: f64, lon: f64) -> Option<CellId> {
        let dr = ((lat - self.bounds.lat_min) / self.cell_height_deg).floor();
        if !(dr >= 0.0 && dr < self.n_rows() as f64) {
            return None;
        }
        let row = dr as usize;
        let dc = ((lon - self.bounds.lon_min) / self.row_widths[row]).floor();
        if !(dc >= 0.0 && dc < self.row_cols[row] as f64) {
            return None;
        }
        self.cell(row, dc as usize)
    }

    /// Lower and upper corners `(lat0, lon0, lat1, lon1)` of a cell.
    pub fn cell_bounds(&self, row: usize, col: usize) -> (f64, f64, f64, f64) {
        let lat0 = self.bounds.lat_min + row as f64 * self.cell_height_deg;
        let lon0 = self.bounds.lon_min + col as f64 * self.row_widths[row];
        (
            lat0,
            lon0,
            lat0 + self.cell_height_deg,
            lon0 + self.row_widths[row],
        )
    }

    pub fn iter(&self) -> impl Iterator<Item = CellId> + '_ {
        (0..self.n_rows()).flat_map(move |r| (0..self.row_cols[r]).filter_map(move |c| self.cell(r, c)))
    }
}

/// Draw `n` distinct cells. Without weights this is uniform sampling without
/// replacement on an integer-only RNG path; with weights it is sequential
/// draw-and-remove with renormalisation.
pub fn sample_cells(grid: &Grid, n: usize, weights: Option<&[f64]>, seed: u64) -> Result<Vec<CellId>> {
    let total = grid.len();
    if n > total {
        return Err(Error::invalid(format!(
            "cannot sample {n} cells from a grid of {total}"
        )));
    }
    let mut rng = rng::stream(seed, "cells");
    let picks: Vec<usize> = match weights {
        None => index::sample(&mut rng, total, n).into_vec(),
        Some(w) => {
            if w.len() != total {
                return Err(Error::shape(format!(
                    "{} weights for {total} cells",
                    w.len()
                )));
            }
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::invalid("weights must be finite and nonnegative"));
            }
            let positive = w.iter().filter(|v| **v > 0.0).count();
            if positive == 0 {
                return Err(Error::invalid("weights sum to zero"));
            }
            if n > positive {
                return Err(Error::invalid(format!(
                    "cannot draw {n} distinct cells: only {positive} have positive weight"
                )));
            }
            let mut tree = Fenwick::new(w);
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let u = rng.random::<f64>() * tree.total();
                let i = tree.find(u);
                tree.remove(i);
                out.push(i);
            }
            out
        }
    };
    Ok(picks
        .into_iter()
        .map(|i| grid.cell_at(i).expect("index in range"))
        .collect())
}

/// Prefix-sum tree over nonnegative weights supporting draw-and-remove.
struct Fenwick {
    tree: Vec<f64>,
    weights: Vec<f64>,
}

impl Fenwick {
    fn new(w: &[f64]) -> Self {
        let n = w.len();
        let mut tree = vec![0.0; n + 1];
        for (i, &v) in w.iter().enumerate() {
            tree[i + 1] += v;
            let parent = (i + 1) + ((i + 1) & (!(i + 1) + 1));
            if parent <= n {
                tree[parent] += tree[i + 1];
            }
        }
        Fenwick {
            tree,
            weights: w.to_vec(),
        }
    }

    fn total(&self) -> f64 {
        let mut i = self.weights.len();
        let mut s = 0.0;
        while i > 0 {
            s += self.tree[i];
            i &= i - 1;
        }
        s
    }

    /// Smallest index whose inclusive prefix sum exceeds `u`, restricted to
    /// cells that still carry weight.
    fn find(&self, u: f64) -> usize {
        let n = self.weights.len();
        let mut pos = 0usize;
        let mut rem = u;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= rem {
                pos = next;
                rem -= self.tree[next];
            }
            step >>= 1;
        }
        // round-off can land on a removed or trailing zero-weight cell
        let mut i = pos.min(n - 1);
        if self.weights[i] > 0.0 {
            return i;
        }
        while i > 0 && self.weights[i] <= 0.0 {
            i -= 1;
        }
        if self.weights[i] > 0.0 {
            return i;
        }
        self.weights
            .iter()
            .position(|v| *v > 0.0)
            .expect("tree has remaining mass")
    }

    fn remove(&mut self, i: usize) {
        let w = self.weights[i];
        self.weights[i] = 0.0;
        let mut j = i + 1;
        while j < self.tree.len() {
            self.tree[j] -= w;
            j += j & (!j + 1);
        }
    }
}
