//! CSV ingestion: irregular, partly missing curve records are interpolated
//! onto the analysis grid, rescaled, lag-paired with the response and centered.
//!
//! Input layout: a header row naming time columns `t0 … tq` and a response
//! column `y`; other columns are ignored. Column `tj` is observed at
//! `s = j/q`. Empty cells are missing.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::design::FunctionalSample;
use crate::error::{FlrtError, Result};
use crate::funcgrid::Grid;

/// Rows with a larger fraction of missing time cells are dropped.
pub const MAX_MISSING_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct DroppedRow {
    /// 0-based index among the data rows of the file.
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub file: String,
    pub rows_read: usize,
    pub dropped: Vec<DroppedRow>,
    pub scale: f64,
    pub lag: usize,
    /// Data-row indices of the curves that made it into the sample.
    pub curve_rows: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct LoadedSample {
    pub sample: FunctionalSample,
    pub provenance: Provenance,
}

/// One parsed record before interpolation.
#[derive(Debug, Clone)]
struct Record {
    row: usize,
    obs: Vec<Option<f64>>,
    y: Option<f64>,
}

fn parse_cell(cell: &str, row: usize, col: &str) -> Result<Option<f64>> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    let v: f64 = cell
        .parse()
        .map_err(|_| FlrtError::Data(format!("row {row}, column {col}: cannot parse `{cell}`")))?;
    if !v.is_finite() {
        return Err(FlrtError::Data(format!("row {row}, column {col}: non-finite value")));
    }
    Ok(Some(v))
}

fn read_records<R: Read>(reader: R) -> Result<(Vec<Record>, usize)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut time_cols: Vec<(usize, usize)> = Vec::new();
    let mut y_col = None;
    for (c, name) in headers.iter().enumerate() {
        if name == "y" {
            y_col = Some(c);
        } else if let Some(j) = name.strip_prefix('t').and_then(|d| d.parse::<usize>().ok()) {
            time_cols.push((j, c));
        }
    }
    let y_col = y_col.ok_or_else(|| FlrtError::Data("no response column `y`".into()))?;
    time_cols.sort_unstable();
    let q = time_cols.len();
    if q < 2 || time_cols.iter().enumerate().any(|(i, (j, _))| *j != i) {
        return Err(FlrtError::Data(
            "time columns must be t0, t1, …, tq with q ≥ 1 and no gaps".into(),
        ));
    }
    let mut records = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cell = |c: usize| rec.get(c).unwrap_or("");
        let obs = time_cols
            .iter()
            .map(|(j, c)| parse_cell(cell(*c), row, &format!("t{j}")))
            .collect::<Result<Vec<_>>>()?;
        let y = parse_cell(cell(y_col), row, "y")?;
        records.push(Record { row, obs, y });
    }
    Ok((records, q))
}

/// Piecewise-linear interpolation of the observed `(s, x)` pairs at `t`,
/// constant beyond the first and last observation.
fn interpolate(s: &[f64], x: &[f64], t: f64) -> f64 {
    let k = s.partition_point(|&v| v <= t);
    if k == 0 {
        return x[0];
    }
    if k == s.len() {
        return x[s.len() - 1];
    }
    let (s0, s1) = (s[k - 1], s[k]);
    let w = (t - s0) / (s1 - s0);
    x[k - 1] + w * (x[k] - x[k - 1])
}

/// Reads, filters, interpolates, scales, lags and centers a curve table.
pub fn load_curves(path: &Path, grid_points: usize, scale: f64, lag: usize) -> Result<LoadedSample> {
    let file = File::open(path)?;
    let mut loaded = load_curves_from_reader(file, grid_points, scale, lag)?;
    loaded.provenance.file = path.display().to_string();
    Ok(loaded)
}

pub fn load_curves_from_reader<R: Read>(
    reader: R,
    grid_points: usize,
    scale: f64,
    lag: usize,
) -> Result<LoadedSample> {
    if !(scale.is_finite() && scale != 0.0) {
        return Err(FlrtError::InvalidInput(format!("scale must be finite and nonzero, got {scale}")));
    }
    let grid = Grid::uniform(grid_points)?;
    let (records, ncols) = read_records(reader)?;
    let rows_read = records.len();
    let q = (ncols - 1) as f64;

    let mut dropped = Vec::new();
    let mut kept = Vec::new();
    for rec in records {
        let observed = rec.obs.iter().filter(|v| v.is_some()).count();
        let missing = (ncols - observed) as f64 / ncols as f64;
        let reason = if rec.y.is_none() {
            Some("missing response".to_string())
        } else if missing > MAX_MISSING_FRACTION {
            Some(format!("{:.0}% of observations missing", 100.0 * missing))
        } else if observed < 2 {
            Some("fewer than two observations".to_string())
        } else {
            None
        };
        match reason {
            Some(reason) => {
                log::warn!("dropping row {}: {reason}", rec.row);
                dropped.push(DroppedRow { row: rec.row, reason });
            }
            None => kept.push(rec),
        }
    }
    if kept.is_empty() {
        return Err(FlrtError::Data("no usable rows after filtering".into()));
    }
    if lag >= kept.len() {
        return Err(FlrtError::Data(format!(
            "lag {lag} leaves no pairs from {} usable rows",
            kept.len()
        )));
    }

    let pairs = kept.len() - lag;
    let p = grid.len();
    let mut curves = DMatrix::zeros(pairs, p);
    let mut y = Vec::with_capacity(pairs);
    let mut curve_rows = Vec::with_capacity(pairs);
    for (i, rec) in kept.iter().take(pairs).enumerate() {
        let (s, x): (Vec<f64>, Vec<f64>) = rec
            .obs
            .iter()
            .enumerate()
            .filter_map(|(j, v)| v.map(|v| (j as f64 / q, v)))
            .unzip();
        for (j, &t) in grid.points().iter().enumerate() {
            curves[(i, j)] = scale * interpolate(&s, &x, t);
        }
        y.push(scale * kept[i + lag].y.unwrap_or(0.0));
        curve_rows.push(rec.row);
    }
    let sample = FunctionalSample::from_matrix(&grid, curves, y)?.centered();
    Ok(LoadedSample {
        sample,
        provenance: Provenance {
            file: String::new(),
            rows_read,
            dropped,
            scale,
            lag,
            curve_rows,
        },
    })
}

/// Writes a sample in the ingestion layout (one time column per grid point).
pub fn write_sample_csv<W: Write>(sample: &FunctionalSample, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let p = sample.grid().len();
    let mut header: Vec<String> = (0..p).map(|j| format!("t{j}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    for (i, row) in sample.curves().row_iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(sample.responses()[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
