//! Config-driven experiment runner.
//!
//! A report directory holds `config.json`, `grid.csv`, the array layout, the
//! ground-truth map, `metrics.csv`, `manifest.json` and one directory per
//! (SNR, repeat) cell with its maps, BIC scan and estimates.
//! [`compare_summary`] adds `summary.csv`.

mod config;
mod run;
mod summary;

pub use config::{
    ArrayConfig, BeamformerConfig, BicRange, DimensionChoice, ExperimentConfig, GridConfig, Method, SimlConfig,
};
pub use run::{
    fit_siml, read_metrics_csv, run_experiment, select_dimension, sha256_hex, write_metrics_csv, CellFailure, CellInfo,
    CellSeed, ExperimentReport, FileEntry, Manifest, MetricRow, Scenario, CONFIG_FILE, MANIFEST_FILE, METRICS_FILE,
    METRIC_COLUMNS, TOOL_NAME, TOOL_VERSION,
};
pub use summary::{compare_summary, Stat, SummaryRow, SummaryTable, SUMMARY_COLUMNS, SUMMARY_FILE};
