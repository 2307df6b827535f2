use std::path::Path;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::run::{read_metrics_csv, Manifest, MetricRow, CONFIG_FILE, METRICS_FILE};
use crate::error::{Result, SimlError};
use crate::io::fmt_f64;

pub const SUMMARY_FILE: &str = "summary.csv";
const WARNING_PREFIX: &str = "summary: ";

/// Mean and sample standard deviation (n − 1; zero for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        if values.iter().all(|v| *v == values[0]) {
            return Some(Self { mean: values[0], std: 0.0 });
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub snr_db: f64,
    pub n: usize,
    #[serde(rename = "M")]
    pub m: Option<Stat>,
    pub rel_mse_fit: Option<Stat>,
    pub rel_mse_raw: Option<Stat>,
    pub rms_contrast: Option<Stat>,
    pub rms_contrast_fit: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
    pub warnings: Vec<String>,
}

impl SummaryTable {
    pub fn get(&self, method: &str, snr_db: f64) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.method == method && r.snr_db == snr_db)
    }
}

/// Aggregates `metrics.csv` per (method, SNR) into `summary.csv`.
///
/// Groups with fewer rows than the configured repeats are kept and reported
/// as warnings, which are also appended to the manifest (whose file list is
/// refreshed to include the summary).
pub fn compare_summary(report_dir: &Path) -> Result<SummaryTable> {
    let metrics_path = report_dir.join(METRICS_FILE);
    if !metrics_path.exists() {
        return Err(SimlError::InvalidArgument(format!("{} does not exist", metrics_path.display())));
    }
    let rows = read_metrics_csv(&metrics_path)?;
    let config = std::fs::read_to_string(report_dir.join(CONFIG_FILE))
        .ok()
        .and_then(|text| serde_json::from_str::<ExperimentConfig>(&text).ok());

    let mut methods: Vec<String> = Vec::new();
    let mut snrs: Vec<f64> = Vec::new();
    if let Some(c) = &config {
        methods.extend(c.methods.iter().map(|m| m.name().to_string()));
        snrs.extend(&c.snr_db_list);
    }
    for r in &rows {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
        if !snrs.contains(&r.snr_db) {
            snrs.push(r.snr_db);
        }
    }
    let expected = config.as_ref().map(|c| c.n_repeats);

    let mut warnings = Vec::new();
    let mut table = Vec::new();
    for method in &methods {
        for &snr in &snrs {
            let group: Vec<&MetricRow> = rows.iter().filter(|r| &r.method == method && r.snr_db == snr).collect();
            if let Some(n) = expected {
                if group.len() < n {
                    warnings.push(format!("{WARNING_PREFIX}{method} at {snr} dB has {} of {n} rows", group.len()));
                }
            }
            if group.is_empty() {
                continue;
            }
            let column = |name: &str, f: fn(&MetricRow) -> f64, warnings: &mut Vec<String>| {
                let values: Vec<f64> = group.iter().map(|r| f(r)).filter(|v| v.is_finite()).collect();
                if values.len() < group.len() {
                    warnings.push(format!(
                        "{WARNING_PREFIX}{method} at {snr} dB: {} non-finite {name} value(s) ignored",
                        group.len() - values.len()
                    ));
                }
                Stat::of(&values)
            };
            let dims: Vec<f64> = group.iter().filter_map(|r| r.m.map(|m| m as f64)).collect();
            table.push(SummaryRow {
                method: method.clone(),
                snr_db: snr,
                n: group.len(),
                m: Stat::of(&dims),
                rel_mse_fit: column("rel_mse_fit", |r| r.rel_mse_fit, &mut warnings),
                rel_mse_raw: column("rel_mse_raw", |r| r.rel_mse_raw, &mut warnings),
                rms_contrast: column("rms_contrast", |r| r.rms_contrast, &mut warnings),
                rms_contrast_fit: column("rms_contrast_fit", |r| r.rms_contrast_fit, &mut warnings),
            });
        }
    }

    write_summary_csv(&report_dir.join(SUMMARY_FILE), &table)?;
    if let Ok(mut manifest) = Manifest::read(report_dir) {
        manifest.warnings.retain(|w| !w.starts_with(WARNING_PREFIX));
        manifest.warnings.extend(warnings.iter().cloned());
        manifest.refresh_files(report_dir)?;
        manifest.write(report_dir)?;
    }
    Ok(SummaryTable { rows: table, warnings })
}

pub const SUMMARY_COLUMNS: [&str; 13] = [
    "method",
    "snr_db",
    "n",
    "M_mean",
    "M_std",
    "rel_mse_fit_mean",
    "rel_mse_fit_std",
    "rel_mse_raw_mean",
    "rel_mse_raw_std",
    "rms_contrast_mean",
    "rms_contrast_std",
    "rms_contrast_fit_mean",
    "rms_contrast_fit_std",
];

fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_COLUMNS)?;
    let pair = |s: Option<Stat>| match s {
        Some(s) => [fmt_f64(s.mean), fmt_f64(s.std)],
        None => [String::new(), String::new()],
    };
    for r in rows {
        let mut rec = vec![r.method.clone(), fmt_f64(r.snr_db), r.n.to_string()];
        for s in [r.m, r.rel_mse_fit, r.rel_mse_raw, r.rms_contrast, r.rms_contrast_fit] {
            rec.extend(pair(s));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
