//! CSV and JSON artifact formats.
//!
//! * grid: `x,y,z,weight`, one row per point in grid order;
//! * intensity map: grid columns plus `value`, with a JSON sidecar naming the method;
//! * complex matrices: one CSV row per matrix row, no header, entries written
//!   as interleaved `re,im` pairs;
//! * sample covariance: complex-matrix CSV plus a sidecar holding `n_snapshots`;
//! * sieved estimate: JSON summary plus complex-matrix CSV of R̂;
//! * BIC scan: `M,loglik,bic,selected`.
//!
//! Floats are written with 17 significant digits so they read back bit-exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimlError};
use crate::estimators::{BicScan, KappaEstimate};
use crate::field_sim::SampleCovariance;
use crate::linalg::CMatrix;
use crate::sphere_grid::SphereGrid;

pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "NaN".to_string()
    }
}

fn parse_f64(field: &str, what: &str) -> Result<f64> {
    field.trim().parse().map_err(|_| SimlError::InvalidArgument(format!("{what}: cannot parse {field:?} as a number")))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_grid_csv(path: impl AsRef<Path>, grid: &SphereGrid) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "z", "weight"])?;
    for (p, wt) in grid.points().iter().zip(grid.weights()) {
        w.write_record([fmt_f64(p.x()), fmt_f64(p.y()), fmt_f64(p.z()), fmt_f64(*wt)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSidecar {
    pub method: String,
    pub label: String,
    #[serde(rename = "M", skip_serializing_if = "Option::is_none", default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub clipped: bool,
}

/// Writes `<stem>.csv` (`x,y,z,weight,value`) and `<stem>.json`.
pub fn write_map(dir: &Path, stem: &str, grid: &SphereGrid, values: &[f64], sidecar: &MapSidecar) -> Result<()> {
    if values.len() != grid.len() {
        return Err(SimlError::InvalidArgument("map length does not match grid".into()));
    }
    let mut w = csv::Writer::from_path(dir.join(format!("{stem}.csv")))?;
    w.write_record(["x", "y", "z", "weight", "value"])?;
    for ((p, wt), v) in grid.points().iter().zip(grid.weights()).zip(values) {
        w.write_record([fmt_f64(p.x()), fmt_f64(p.y()), fmt_f64(p.z()), fmt_f64(*wt), fmt_f64(*v)])?;
    }
    w.flush()?;
    write_json(dir.join(format!("{stem}.json")), sidecar)
}

/// Reads the `value` column of a map CSV.
pub fn read_map_values(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let idx = r
        .headers()?
        .iter()
        .position(|h| h == "value")
        .ok_or_else(|| SimlError::InvalidArgument("map CSV has no value column".into()))?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            parse_f64(rec.get(idx).unwrap_or(""), "map value")
        })
        .collect()
}

pub fn write_complex_matrix(path: impl AsRef<Path>, m: &CMatrix) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).flat_map(|j| [fmt_f64(m[(i, j)].re), fmt_f64(m[(i, j)].im)]).collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_complex_matrix(path: impl AsRef<Path>) -> Result<CMatrix> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() % 2 != 0 {
            return Err(SimlError::InvalidArgument("complex matrix row has an odd field count".into()));
        }
        let vals: Vec<f64> = rec.iter().map(|f| parse_f64(f, "matrix entry")).collect::<Result<_>>()?;
        rows.push(vals.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect());
    }
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != m) {
        return Err(SimlError::InvalidArgument("complex matrix rows differ in length".into()));
    }
    Ok(CMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSidecar {
    pub n_snapshots: usize,
    #[serde(rename = "L")]
    pub l: usize,
}

/// Writes `<stem>.csv` and its `<stem>.json` sidecar.
pub fn write_sample_covariance(dir: &Path, stem: &str, sample: &SampleCovariance) -> Result<()> {
    write_complex_matrix(dir.join(format!("{stem}.csv")), sample.matrix())?;
    write_json(
        dir.join(format!("{stem}.json")),
        &CovarianceSidecar { n_snapshots: sample.n_snapshots(), l: sample.dim() },
    )
}

pub fn read_sample_covariance(dir: &Path, stem: &str) -> Result<SampleCovariance> {
    let matrix = read_complex_matrix(dir.join(format!("{stem}.csv")))?;
    let side: CovarianceSidecar = serde_json::from_reader(File::open(dir.join(format!("{stem}.json")))?)?;
    if side.l != matrix.nrows() {
        return Err(SimlError::InvalidArgument(format!(
            "sidecar says L = {} but the matrix has {} rows",
            side.l,
            matrix.nrows()
        )));
    }
    SampleCovariance::new(matrix, side.n_snapshots)
}

/// Writes `<stem>.json` (summary) and `<stem>_r.csv` (R̂).
pub fn write_estimate(dir: &Path, stem: &str, est: &KappaEstimate) -> Result<()> {
    write_json(dir.join(format!("{stem}.json")), &est.summary())?;
    write_complex_matrix(dir.join(format!("{stem}_r.csv")), &est.r_hat)
}

pub fn write_bic_csv(path: impl AsRef<Path>, scan: &BicScan) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["M", "loglik", "bic", "selected"])?;
    for e in &scan.entries {
        w.write_record([
            e.m.to_string(),
            fmt_f64(e.log_likelihood.unwrap_or(f64::NAN)),
            fmt_f64(e.bic.unwrap_or(f64::NAN)),
            u8::from(e.m == scan.selected_m).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
