//! Tabular inputs and the feature/label join.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;
use rcf::{Bounds, FeatureTable, Grid};

use crate::config::Config;
use crate::failure::Failure;

pub fn grid_from(cfg: &Config) -> Result<Grid, Failure> {
    let b = cfg.f64_list("bounds", Vec::new)?;
    if b.len() != 4 {
        return Err(Failure::usage("`bounds`: expected lat_min,lat_max,lon_min,lon_max"));
    }
    Ok(rcf::build_grid(Bounds::new(b[0], b[1], b[2], b[3]), cfg.f64("cell_km")?)?)
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::data(format!("{}: {e}", path.display()))
}

/// Rows of a headed CSV as `(lat, lon, values of the requested columns)`.
/// With `rest = true`, every column after `lat,lon` is returned instead.
fn read_columns(path: &Path, wanted: &[&str], rest: bool) -> Result<Vec<(f64, f64, Vec<f64>)>, Failure> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(rest)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Failure::data(format!("{}: no `{name}` column", path.display())))
    };
    let (ilat, ilon) = (col("lat")?, col("lon")?);
    let idx: Vec<usize> = wanted.iter().map(|w| col(w)).collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let num = |i: usize| -> Result<f64, Failure> {
            let field = rec.get(i).unwrap_or("").trim();
            field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                Failure::data(format!(
                    "{}: line {}: `{field}` is not a finite number",
                    path.display(),
                    line + 2
                ))
            })
        };
        let vals = if rest {
            (0..rec.len())
                .filter(|&i| i != ilat && i != ilon && !rec.get(i).unwrap_or("").trim().is_empty())
                .map(num)
                .collect::<Result<_, _>>()?
        } else {
            idx.iter().map(|&i| num(i)).collect::<Result<_, _>>()?
        };
        out.push((num(ilat)?, num(ilon)?, vals));
    }
    Ok(out)
}

pub fn read_labels(path: &Path, column: &str) -> Result<Vec<(f64, f64, f64)>, Failure> {
    Ok(read_columns(path, &[column], false)?
        .into_iter()
        .map(|(a, b, v)| (a, b, v[0]))
        .collect())
}

/// `lat,lon,v_0,...` rows; rows may have different lengths.
pub fn read_value_rows(path: &Path) -> Result<Vec<(f64, f64, Vec<f64>)>, Failure> {
    read_columns(path, &[], true)
}

/// Feature rows matched to label rows through their grid cells.
pub struct Joined {
    /// Indices into the feature table, in table order.
    pub rows: Vec<usize>,
    pub y: Vec<f64>,
}

fn describe(cells: &[(f64, f64)]) -> String {
    let shown: Vec<String> = cells.iter().take(10).map(|(a, b)| format!("({a}, {b})")).collect();
    let more = if cells.len() > 10 { format!(" and {} more", cells.len() - 10) } else { String::new() };
    format!("{}{more}", shown.join(", "))
}

/// Match points to table rows by the grid cell containing them. Every
/// point must match a table row; table rows without a point are dropped
/// only when `allow_unmatched` is set.
pub fn join_points<T: Clone>(
    table_locs: &[(f64, f64)],
    points: &[(f64, f64, T)],
    grid: &Grid,
    allow_unmatched: bool,
    what: &str,
) -> Result<(Vec<usize>, Vec<T>), Failure> {
    let mut by_cell = HashMap::new();
    for (p, (lat, lon, _)) in points.iter().enumerate() {
        if let Some(c) = grid.cell_of(*lat, *lon) {
            if by_cell.insert(c.key(), p).is_some() {
                return Err(Failure::data(format!("{what}: two rows fall in the cell of ({lat}, {lon})")));
            }
        }
    }
    let mut used = vec![false; points.len()];
    let mut rows = Vec::new();
    let mut values = Vec::new();
    let mut unmatched_rows = Vec::new();
    for (i, &(lat, lon)) in table_locs.iter().enumerate() {
        match grid.cell_of(lat, lon).and_then(|c| by_cell.get(&c.key())) {
            Some(&p) => {
                used[p] = true;
                rows.push(i);
                values.push(points[p].2.clone());
            }
            None => unmatched_rows.push((lat, lon)),
        }
    }
    let unmatched_points: Vec<(f64, f64)> = points
        .iter()
        .zip(&used)
        .filter(|(_, u)| !**u)
        .map(|(p, _)| (p.0, p.1))
        .collect();
    if !unmatched_points.is_empty() {
        return Err(Failure::data(format!(
            "{what}: {} rows match no feature row: {}",
            unmatched_points.len(),
            describe(&unmatched_points)
        )));
    }
    if !unmatched_rows.is_empty() && !allow_unmatched {
        return Err(Failure::data(format!(
            "{} feature rows have no {what} (set allow_unmatched=true to drop them): {}",
            unmatched_rows.len(),
            describe(&unmatched_rows)
        )));
    }
    if rows.is_empty() {
        return Err(Failure::data(format!("no feature rows matched {what}")));
    }
    Ok((rows, values))
}

pub fn join_labels(table: &FeatureTable, labels: &[(f64, f64, f64)], grid: &Grid, allow_unmatched: bool) -> Result<Joined, Failure> {
    let (rows, y) = join_points(table.locations(), labels, grid, allow_unmatched, "labels")?;
    Ok(Joined { rows, y })
}

pub fn matrix_rows(table: &FeatureTable, rows: &[usize]) -> DMatrix<f64> {
    let k = table.k();
    DMatrix::from_fn(rows.len(), k, |i, j| table.row(rows[i])[j])
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

pub fn r2_or_nan(y: &[f64], p: &[f64]) -> f64 {
    rcf::ridge::r_squared(y, p).unwrap_or(f64::NAN)
}
