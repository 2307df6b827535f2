use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{DimensionChoice, ExperimentConfig, Method, SimlConfig};
use crate::array_model::SensorArray;
use crate::beamformers::{spectrum_from_steering, BeamformerSpec};
use crate::error::{Result, SimlError};
use crate::estimators::{
    bic_scan_with_sieve, estimate_joint, estimate_known_noise, intensity_from_steering, BicScan, EigenSieve,
    KappaEstimate,
};
use crate::field_sim::{noise_power_for_snr, sample_covariance, SampleCovariance};
use crate::io::{self, fmt_f64, MapSidecar};
use crate::linalg::{self, CMatrix};
use crate::metrics::{score, IntensityMap};
use crate::sphere_grid::SphereGrid;

pub const TOOL_NAME: &str = "siml";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything that depends on the layout but not on SNR or seed.
pub struct Scenario {
    pub array: SensorArray,
    pub grid: SphereGrid,
    pub truth: Vec<f64>,
    pub layout_seed: Option<u64>,
    signal: CMatrix,
    gram: DMatrix<f64>,
    steering: CMatrix,
}

impl Scenario {
    /// Layout for `repeat`: the layout file, or the random disk seeded with
    /// layout_seed (+ repeat when the layout varies).
    pub fn for_repeat(config: &ExperimentConfig, repeat: usize) -> Result<Self> {
        let (array, layout_seed) = match (&config.array.layout_file, config.array.layout_seed) {
            (Some(file), _) => (SensorArray::read_csv(file, config.wavelength)?, None),
            (None, Some(seed)) => {
                let seed = if config.vary_layout { seed + repeat as u64 } else { seed };
                let array = SensorArray::random_disk(
                    config.array.l,
                    config.array.aperture_in_wavelengths,
                    config.wavelength,
                    seed,
                )?;
                (array, Some(seed))
            }
            (None, None) => return Err(SimlError::Config("array: no layout given".into())),
        };
        if array.len() != config.array.l {
            return Err(SimlError::Config(format!(
                "array.layout_file: holds {} sensors but array.L is {}",
                array.len(),
                config.array.l
            )));
        }
        let grid = config.grid.build()?;
        let mut scenario = Self::new(array, grid, &config.source_model)?;
        scenario.layout_seed = layout_seed;
        Ok(scenario)
    }

    pub fn new(array: SensorArray, grid: SphereGrid, model: &crate::field_sim::SourceModel) -> Result<Self> {
        let signal = model.population_covariance(&array, 0.0, &grid)?;
        let truth = model.intensity_map(&grid);
        let gram = array.gram_matrix();
        let steering = array.steering_matrix(&grid);
        Ok(Self { array, grid, truth, layout_seed: None, signal, gram, steering })
    }

    pub fn sigma_for_snr(&self, snr_db: f64) -> Result<f64> {
        noise_power_for_snr(linalg::trace_re(&self.signal), self.array.len(), snr_db)
    }

    pub fn population_covariance(&self, sigma: f64) -> CMatrix {
        let mut pop = self.signal.clone();
        for i in 0..pop.nrows() {
            pop[(i, i)].re += sigma;
        }
        pop
    }

    pub fn simulate(&self, sigma: f64, n_snapshots: usize, seed: u64) -> Result<SampleCovariance> {
        sample_covariance(&self.population_covariance(sigma), n_snapshots, seed)
    }

    pub fn sieve(&self, sample: &SampleCovariance) -> Result<EigenSieve> {
        EigenSieve::with_gram(sample, &self.gram)
    }

    pub fn steering(&self) -> &CMatrix {
        &self.steering
    }

    pub fn truth_map(&self) -> Result<IntensityMap<'_>> {
        IntensityMap::new(&self.grid, self.truth.clone(), "truth")
    }
}

/// Sieve dimension for this sample: the fixed value, or the BIC minimizer.
pub fn select_dimension(
    siml: &SimlConfig,
    sample: &SampleCovariance,
    sieve: &EigenSieve,
) -> Result<(usize, Option<BicScan>)> {
    match siml.m {
        DimensionChoice::Fixed(m) => Ok((m, None)),
        DimensionChoice::Bic => {
            let candidates = siml.bic_range.candidates(sample.dim(), sample.n_snapshots());
            let scan = bic_scan_with_sieve(sample, sieve, &candidates)?;
            Ok((scan.selected_m, Some(scan)))
        }
    }
}

/// Fits a SiML method at dimension `m`; `sigma` is used by the known-noise variant.
pub fn fit_siml(
    method: Method,
    sample: &SampleCovariance,
    sieve: &EigenSieve,
    m: usize,
    sigma: f64,
) -> Result<KappaEstimate> {
    let basis = sieve.basis(m)?;
    match method {
        Method::SimlKnown => estimate_known_noise(sample, &basis, sigma),
        Method::SimlJoint => estimate_joint(sample, &basis),
        other => Err(SimlError::InvalidArgument(format!("{other} is not a SiML method"))),
    }
}

/// One row of metrics.csv.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: String,
    #[serde(rename = "M")]
    pub m: Option<usize>,
    pub snr_db: f64,
    pub seed: u64,
    pub rel_mse_fit: f64,
    pub rel_mse_raw: f64,
    pub rms_contrast: f64,
    pub rms_contrast_fit: f64,
}

pub const METRIC_COLUMNS: [&str; 8] =
    ["method", "M", "snr_db", "seed", "rel_mse_fit", "rel_mse_raw", "rms_contrast", "rms_contrast_fit"];

pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(METRIC_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.m.map(|m| m.to_string()).unwrap_or_default(),
            fmt_f64(r.snr_db),
            r.seed.to_string(),
            fmt_f64(r.rel_mse_fit),
            fmt_f64(r.rel_mse_raw),
            fmt_f64(r.rms_contrast),
            fmt_f64(r.rms_contrast_fit),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| SimlError::InvalidArgument(format!("metrics CSV is missing column {name}")))
    };
    let idx: Vec<usize> = METRIC_COLUMNS.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let num = |s: &str, what: &str| -> Result<f64> {
        s.parse().map_err(|_| SimlError::InvalidArgument(format!("metrics CSV: bad {what} {s:?}")))
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |k: usize| rec.get(idx[k]).unwrap_or("").trim().to_string();
        let m = f(1);
        rows.push(MetricRow {
            method: f(0),
            m: if m.is_empty() {
                None
            } else {
                Some(m.parse().map_err(|_| SimlError::InvalidArgument(format!("metrics CSV: bad M {m:?}")))?)
            },
            snr_db: num(&f(2), "snr_db")?,
            seed: f(3).parse().map_err(|_| SimlError::InvalidArgument("metrics CSV: bad seed".into()))?,
            rel_mse_fit: num(&f(4), "rel_mse_fit")?,
            rel_mse_raw: num(&f(5), "rel_mse_raw")?,
            rms_contrast: num(&f(6), "rms_contrast")?,
            rms_contrast_fit: num(&f(7), "rms_contrast_fit")?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub snr_db: f64,
    pub repeat: usize,
    pub seed: u64,
    /// `None` when the whole cell failed before any method ran.
    pub method: Option<String>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSeed {
    pub snr_db: f64,
    pub repeat: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout_seed: Option<u64>,
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seeds: Vec<CellSeed>,
    pub files: Vec<FileEntry>,
    pub failures: Vec<CellFailure>,
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn read(report_dir: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(std::fs::File::open(report_dir.join(MANIFEST_FILE))?)?)
    }

    /// Rehashes every file under `report_dir` except the manifest itself.
    pub fn refresh_files(&mut self, report_dir: &Path) -> Result<()> {
        self.files = hash_tree(report_dir)?;
        Ok(())
    }

    pub fn write(&self, report_dir: &Path) -> Result<()> {
        io::write_json(report_dir.join(MANIFEST_FILE), self)
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_tree(root: &Path) -> Result<Vec<FileEntry>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<FileEntry>) -> Result<()> {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
                continue;
            }
            let rel = path.strip_prefix(root).expect("walk stays under root");
            let rel: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
            let rel = rel.join("/");
            if rel == MANIFEST_FILE {
                continue;
            }
            out.push(FileEntry { path: rel, sha256: sha256_hex(&std::fs::read(&path)?) });
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, root, &mut out)?;
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

/// Result of [`run_experiment`]; the same information is on disk.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub output_dir: PathBuf,
    pub rows: Vec<MetricRow>,
    pub manifest: Manifest,
}

#[derive(Default)]
struct CellOutcome {
    rows: Vec<MetricRow>,
    failures: Vec<CellFailure>,
    warnings: Vec<String>,
}

struct Cell {
    snr_db: f64,
    repeat: usize,
    seed: u64,
    dir: String,
}

fn cell_dir_name(snr_index: usize, repeat: usize) -> String {
    format!("cells/snr{snr_index:02}_rep{repeat:03}")
}

/// `cell.json`: the parameters a cell was simulated with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellInfo {
    pub snr_db: f64,
    pub repeat: usize,
    pub seed: u64,
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout_seed: Option<u64>,
}

impl CellInfo {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_reader(std::fs::File::open(path)?)?)
    }
}

/// Runs every (SNR, repeat) cell and writes the report under `config.output_dir`.
///
/// Cells run in parallel and write only below their own directory. A failing
/// method or cell is recorded in the manifest and the others carry on.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let out = config.output_dir.clone();
    std::fs::create_dir_all(out.join("cells"))?;

    // The stored config is location-independent so that reports compare byte for byte.
    let mut stored = config.clone();
    stored.output_dir = PathBuf::from(".");
    let config_json = stored.to_json_string()? + "\n";
    std::fs::write(out.join(CONFIG_FILE), &config_json)?;

    let layouts: Vec<Scenario> = if config.vary_layout {
        (0..config.n_repeats).into_par_iter().map(|r| Scenario::for_repeat(config, r)).collect::<Result<_>>()?
    } else {
        vec![Scenario::for_repeat(config, 0)?]
    };
    let scenario_for = |repeat: usize| &layouts[if config.vary_layout { repeat } else { 0 }];

    io::write_grid_csv(out.join("grid.csv"), &layouts[0].grid)?;
    if config.vary_layout {
        for (r, s) in layouts.iter().enumerate() {
            s.array.write_csv(out.join(format!("array_rep{r:03}.csv")))?;
        }
    } else {
        layouts[0].array.write_csv(out.join("array.csv"))?;
    }
    io::write_map(
        &out,
        "truth",
        &layouts[0].grid,
        &layouts[0].truth,
        &MapSidecar { method: "truth".into(), label: "ground truth".into(), m: None, clipped: false },
    )?;

    let cells: Vec<Cell> = config
        .snr_db_list
        .iter()
        .enumerate()
        .flat_map(|(i, &snr)| {
            (0..config.n_repeats).map(move |r| Cell {
                snr_db: snr,
                repeat: r,
                seed: config.seed_base + r as u64,
                dir: cell_dir_name(i, r),
            })
        })
        .collect();

    let outcomes: Vec<CellOutcome> = cells
        .par_iter()
        .map(|cell| {
            let scenario = scenario_for(cell.repeat);
            run_cell(config, scenario, cell, &out).unwrap_or_else(|e| CellOutcome {
                failures: vec![CellFailure {
                    snr_db: cell.snr_db,
                    repeat: cell.repeat,
                    seed: cell.seed,
                    method: None,
                    error: e.to_string(),
                }],
                ..Default::default()
            })
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut warnings = Vec::new();
    for o in outcomes {
        rows.extend(o.rows);
        failures.extend(o.failures);
        warnings.extend(o.warnings);
    }
    write_metrics_csv(out.join(METRICS_FILE), &rows)?;

    let seeds = cells
        .iter()
        .map(|c| CellSeed {
            snr_db: c.snr_db,
            repeat: c.repeat,
            seed: c.seed,
            layout_seed: scenario_for(c.repeat).layout_seed,
            dir: c.dir.clone(),
        })
        .collect();
    let mut manifest = Manifest {
        tool: TOOL_NAME.into(),
        version: TOOL_VERSION.into(),
        config_sha256: sha256_hex(config_json.as_bytes()),
        seeds,
        files: Vec::new(),
        failures,
        warnings,
    };
    manifest.refresh_files(&out)?;
    manifest.write(&out)?;
    Ok(ExperimentReport { output_dir: out, rows, manifest })
}

fn run_cell(config: &ExperimentConfig, scenario: &Scenario, cell: &Cell, out: &Path) -> Result<CellOutcome> {
    let dir = out.join(&cell.dir);
    std::fs::create_dir_all(&dir)?;
    let sigma = scenario.sigma_for_snr(cell.snr_db)?;
    io::write_json(
        dir.join("cell.json"),
        &CellInfo {
            snr_db: cell.snr_db,
            repeat: cell.repeat,
            seed: cell.seed,
            sigma,
            layout_seed: scenario.layout_seed,
        },
    )?;
    let sample = scenario.simulate(sigma, config.n_snapshots, cell.seed)?;
    let truth = scenario.truth_map()?;
    let tag = format!("snr {} dB, repeat {}", cell.snr_db, cell.repeat);

    let mut outcome = CellOutcome::default();
    let fail = |method: Method, e: SimlError| CellFailure {
        snr_db: cell.snr_db,
        repeat: cell.repeat,
        seed: cell.seed,
        method: Some(method.name().into()),
        error: e.to_string(),
    };

    let record = |outcome: &mut CellOutcome, method: Method, m: Option<usize>, values: Vec<f64>, clipped: bool| {
        let scored = IntensityMap::new(&scenario.grid, values, method.name()).and_then(|map| {
            if config.write_maps {
                io::write_map(
                    &dir,
                    &format!("map_{}", method.name()),
                    &scenario.grid,
                    &map.values,
                    &MapSidecar { method: method.name().into(), label: tag.clone(), m, clipped },
                )?;
            }
            score(&map, &truth)
        });
        match scored {
            Ok(s) => outcome.rows.push(MetricRow {
                method: method.name().into(),
                m,
                snr_db: cell.snr_db,
                seed: cell.seed,
                rel_mse_fit: s.rel_mse_fit,
                rel_mse_raw: s.rel_mse_raw,
                rms_contrast: s.rms_contrast,
                rms_contrast_fit: s.rms_contrast_fit,
            }),
            Err(e) => outcome.failures.push(fail(method, e)),
        }
    };

    let siml_methods: Vec<Method> = config.methods.iter().copied().filter(|m| m.is_siml()).collect();
    if !siml_methods.is_empty() {
        let chosen = scenario.sieve(&sample).and_then(|sieve| {
            let (m, scan) = select_dimension(&config.siml, &sample, &sieve)?;
            Ok((sieve, m, scan))
        });
        match chosen {
            Err(e) => {
                for &method in &siml_methods {
                    outcome.failures.push(fail(method, SimlError::Domain(format!("dimension selection: {e}"))));
                }
            }
            Ok((sieve, m, scan)) => {
                if let Some(scan) = &scan {
                    io::write_bic_csv(dir.join("bic.csv"), scan)?;
                    let skipped = scan.entries.iter().filter(|e| e.bic.is_none()).count();
                    if skipped > 0 {
                        outcome.warnings.push(format!("{tag}: BIC scan skipped {skipped} candidate(s)"));
                    }
                }
                for &method in &siml_methods {
                    let fitted = fit_siml(method, &sample, &sieve, m, sigma).and_then(|est| {
                        io::write_estimate(&dir, &format!("estimate_{}", method.name()), &est)?;
                        let map = intensity_from_steering(&est, scenario.steering())?;
                        Ok((est, map))
                    });
                    match fitted {
                        Ok((est, mut map)) => {
                            if est.sigma_clamped {
                                outcome.warnings.push(format!("{tag}: {method} σ̂ clamped to 0 at M = {m}"));
                            }
                            if config.siml.clip_negative {
                                map.iter_mut().for_each(|v| *v = v.max(0.0));
                            }
                            record(&mut outcome, method, Some(m), map, config.siml.clip_negative);
                        }
                        Err(e) => outcome.failures.push(fail(method, e)),
                    }
                }
            }
        }
    }

    for &method in &config.methods {
        let Some(kind) = method.beamformer() else { continue };
        let spec = BeamformerSpec::with_loading(kind, config.beamformer.diagonal_loading);
        if kind != crate::beamformers::BeamformerKind::Mb && sample.n_snapshots() < sample.dim() {
            outcome.warnings.push(format!("{tag}: {method} uses automatic diagonal loading (N < L)"));
        }
        match spectrum_from_steering(&sample, scenario.steering(), &spec) {
            Ok(values) => record(&mut outcome, method, None, values, false),
            Err(e) => outcome.failures.push(fail(method, e)),
        }
    }
    Ok(outcome)
}
