//! `siml`: simulate, estimate, beamform, scan and run whole experiments.
//!
//! Exit codes: 0 success, 1 other failure, 2 config error, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use siml::array_model::SensorArray;
use siml::beamformers::{spectrum_from_steering, BeamformerSpec};
use siml::estimators::{bic_scan_with_sieve, intensity_from_steering};
use siml::experiment::{
    compare_summary, fit_siml, run_experiment, select_dimension, BicRange, CellInfo, DimensionChoice, ExperimentConfig,
    Method, Scenario,
};
use siml::field_sim::SampleCovariance;
use siml::io::{self, MapSidecar};
use siml::{Result, SimlError};

#[derive(Parser)]
#[command(name = "siml", version, about = "Sieved maximum-likelihood intensity imaging")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's seed_base.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CellArgs {
    #[command(flatten)]
    common: Common,
    /// SNR in dB; defaults to the first entry of snr_db_list.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<f64>,
    /// Directory written by `simulate`; its sample covariance and layout are
    /// used instead of simulating afresh.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one sample covariance and write it with the layout, grid and truth.
    Simulate(CellArgs),
    /// Fit the SiML estimators of the config (siml_joint if none) and write their maps.
    Estimate {
        #[command(flatten)]
        cell: CellArgs,
        /// Sieve dimension, an integer or "bic"; overrides siml.M.
        #[arg(long = "m")]
        m: Option<String>,
    },
    /// Evaluate the beamformers of the config (all three if none) on the grid.
    Beamform(CellArgs),
    /// Run the BIC scan over the configured range and write bic.csv.
    BicScan(CellArgs),
    /// Run the full experiment and write the report with its summary.
    Run(Common),
    /// Aggregate a report's metrics.csv into summary.csv.
    Summarize {
        /// Report directory written by `run`.
        report: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_file(&common.config)?;
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        config.seed_base = seed;
    }
    config.validate()?;
    Ok(config)
}

/// A single simulated (or loaded) cell.
struct Cell {
    config: ExperimentConfig,
    scenario: Scenario,
    sample: SampleCovariance,
    info: CellInfo,
}

fn prepare_cell(args: &CellArgs) -> Result<Cell> {
    let config = load_config(&args.common)?;
    std::fs::create_dir_all(&config.output_dir)?;
    if let Some(input) = &args.input {
        let array = SensorArray::read_csv(input.join("array.csv"), config.wavelength)?;
        let scenario = Scenario::new(array, config.grid.build()?, &config.source_model)?;
        let sample = io::read_sample_covariance(input, "sample_covariance")?;
        if sample.dim() != scenario.array.len() {
            return Err(SimlError::InvalidArgument(format!(
                "sample covariance is {0}x{0} but the layout has {1} sensors",
                sample.dim(),
                scenario.array.len()
            )));
        }
        let info = CellInfo::read(input.join("cell.json"))?;
        return Ok(Cell { config, scenario, sample, info });
    }
    let scenario = Scenario::for_repeat(&config, 0)?;
    let snr_db = args.snr.unwrap_or(config.snr_db_list[0]);
    let sigma = scenario.sigma_for_snr(snr_db)?;
    let seed = config.seed_base;
    let sample = scenario.simulate(sigma, config.n_snapshots, seed)?;
    let info = CellInfo { snr_db, repeat: 0, seed, sigma, layout_seed: scenario.layout_seed };
    Ok(Cell { config, scenario, sample, info })
}

fn write_map(cell: &Cell, method: Method, m: Option<usize>, values: &[f64], clipped: bool) -> Result<()> {
    io::write_map(
        &cell.config.output_dir,
        &format!("map_{}", method.name()),
        &cell.scenario.grid,
        values,
        &MapSidecar {
            method: method.name().into(),
            label: format!("snr {} dB, seed {}", cell.info.snr_db, cell.info.seed),
            m,
            clipped,
        },
    )
}

fn simulate(args: &CellArgs) -> Result<()> {
    let cell = prepare_cell(args)?;
    let out = &cell.config.output_dir;
    cell.scenario.array.write_csv(out.join("array.csv"))?;
    io::write_grid_csv(out.join("grid.csv"), &cell.scenario.grid)?;
    io::write_map(
        out,
        "truth",
        &cell.scenario.grid,
        &cell.scenario.truth,
        &MapSidecar { method: "truth".into(), label: "ground truth".into(), m: None, clipped: false },
    )?;
    io::write_sample_covariance(out, "sample_covariance", &cell.sample)?;
    io::write_json(out.join("cell.json"), &cell.info)?;
    println!("simulated L = {}, N = {}, sigma = {:.6e}", cell.sample.dim(), cell.sample.n_snapshots(), cell.info.sigma);
    Ok(())
}

fn parse_dimension(text: &str) -> Result<DimensionChoice> {
    if text == "bic" {
        return Ok(DimensionChoice::Bic);
    }
    text.parse()
        .map(DimensionChoice::Fixed)
        .map_err(|_| SimlError::Config(format!("--m: expected an integer or \"bic\", got {text:?}")))
}

fn estimate(args: &CellArgs, m: Option<&str>) -> Result<()> {
    let mut cell = prepare_cell(args)?;
    if let Some(m) = m {
        cell.config.siml.m = parse_dimension(m)?;
    }
    let mut methods: Vec<Method> = cell.config.methods.iter().copied().filter(|m| m.is_siml()).collect();
    if methods.is_empty() {
        methods.push(Method::SimlJoint);
    }
    let sieve = cell.scenario.sieve(&cell.sample)?;
    let (dim, scan) = select_dimension(&cell.config.siml, &cell.sample, &sieve)?;
    if let Some(scan) = &scan {
        io::write_bic_csv(cell.config.output_dir.join("bic.csv"), scan)?;
    }
    for method in methods {
        let est = fit_siml(method, &cell.sample, &sieve, dim, cell.info.sigma)?;
        io::write_estimate(&cell.config.output_dir, &format!("estimate_{}", method.name()), &est)?;
        let mut map = intensity_from_steering(&est, cell.scenario.steering())?;
        let clip = cell.config.siml.clip_negative;
        if clip {
            map.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        write_map(&cell, method, Some(dim), &map, clip)?;
        println!("{method}: M = {dim}, sigma_hat = {:.6e}", est.sigma_hat);
    }
    Ok(())
}

fn beamform(args: &CellArgs) -> Result<()> {
    let cell = prepare_cell(args)?;
    let mut methods: Vec<Method> = cell.config.methods.iter().copied().filter(|m| m.beamformer().is_some()).collect();
    if methods.is_empty() {
        methods = vec![Method::Mb, Method::Mvdr, Method::Aar];
    }
    for method in methods {
        let kind = method.beamformer().expect("filtered to beamformers");
        let spec = BeamformerSpec::with_loading(kind, cell.config.beamformer.diagonal_loading);
        let values = spectrum_from_steering(&cell.sample, cell.scenario.steering(), &spec)?;
        write_map(&cell, method, None, &values, false)?;
        println!("{method}: {} pixels", values.len());
    }
    Ok(())
}

fn bic_scan(args: &CellArgs) -> Result<()> {
    let cell = prepare_cell(args)?;
    let range: &BicRange = &cell.config.siml.bic_range;
    let candidates = range.candidates(cell.sample.dim(), cell.sample.n_snapshots());
    let sieve = cell.scenario.sieve(&cell.sample)?;
    let scan = bic_scan_with_sieve(&cell.sample, &sieve, &candidates)?;
    io::write_bic_csv(cell.config.output_dir.join("bic.csv"), &scan)?;
    println!("selected M = {} of {} candidates", scan.selected_m, candidates.len());
    Ok(())
}

fn run(common: &Common) -> Result<ExitCode> {
    let config = load_config(common)?;
    let report = run_experiment(&config)?;
    let summary = compare_summary(&report.output_dir)?;
    println!(
        "{} metric rows, {} failures, {} warnings -> {}",
        report.rows.len(),
        report.manifest.failures.len(),
        report.manifest.warnings.len() + summary.warnings.len(),
        report.output_dir.display()
    );
    for f in &report.manifest.failures {
        eprintln!(
            "failed: snr {} dB, repeat {}, {}: {}",
            f.snr_db,
            f.repeat,
            f.method.as_deref().unwrap_or("cell"),
            f.error
        );
    }
    Ok(if report.manifest.failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(3) })
}

fn summarize(report: &Path) -> Result<()> {
    let table = compare_summary(report)?;
    for w in &table.warnings {
        eprintln!("warning: {w}");
    }
    println!("{} summary rows -> {}", table.rows.len(), report.join("summary.csv").display());
    Ok(())
}

fn exit_code(e: &SimlError) -> ExitCode {
    match e {
        SimlError::Config(_) => ExitCode::from(2),
        e if e.is_numerical() => ExitCode::from(3),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a).map(|_| ExitCode::SUCCESS),
        Command::Estimate { cell, m } => estimate(cell, m.as_deref()).map(|_| ExitCode::SUCCESS),
        Command::Beamform(a) => beamform(a).map(|_| ExitCode::SUCCESS),
        Command::BicScan(a) => bic_scan(a).map(|_| ExitCode::SUCCESS),
        Command::Run(c) => run(c),
        Command::Summarize { report } => summarize(report).map(|_| ExitCode::SUCCESS),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        exit_code(&e)
    })
}
