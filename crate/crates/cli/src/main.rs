//! `qsd`: run decoherence scenarios from JSON configs or figure presets.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod output;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use qsd_core::config::{figure_preset_with_sweep, parse_scenario, scenario_to_document, ConfigError, PRESET_NAMES};
use qsd_core::influence::{CacheError, CacheOutcome, EtaCache, DEFAULT_ETA_TOL};
use qsd_core::observables::{decay_times, DecayTimes};
use qsd_core::response::sample_response;
use qsd_core::{engine, EngineOptions, Scenario};
use thiserror::Error;

use output::*;

#[derive(Parser, Debug)]
#[command(name = "qsd", version, about = "Qubit decoherence in spin-boson baths via QUAPI")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Report the raw propagated matrix without dividing by its trace.
        #[arg(long)]
        no_normalize: bool,
    },
    /// Run every scenario of a figure preset.
    Preset {
        /// fig1 .. fig5
        name: String,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated override of the fig4 / fig5 sweep values.
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<f64>>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print the bath response function of a config as CSV.
    Response {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        t_max: f64,
        /// Sample spacing; defaults to 1/(4 omega_c).
        #[arg(long)]
        step: Option<f64>,
    },
    /// Print the spectral density of a config as CSV.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 2001)]
        points: usize,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("numerical error: {0}")]
    Numerical(qsd_core::Error),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io { .. } => 3,
        }
    }
}

impl From<qsd_core::Error> for CliError {
    fn from(e: qsd_core::Error) -> Self {
        match e {
            qsd_core::Error::Config(c) => CliError::Config(c),
            qsd_core::Error::Cache(CacheError::Io(source)) => CliError::Io {
                path: PathBuf::from("<eta cache>"),
                source,
            },
            other => CliError::Numerical(other),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_config(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(parse_scenario(&text)?)
}

fn configure_pool(jobs: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

struct RunOutput {
    manifest: RunManifest,
    times: DecayTimes,
}

/// Propagates one scenario and writes its CSV, summary and manifest into `dir`.
fn run_scenario(scenario: &Scenario, dir: &Path, cache: &EtaCache) -> Result<RunOutput, CliError> {
    let started = Instant::now();
    let (eta, key, outcome) = cache
        .get_or_build(&scenario.spectral_density(), scenario.beta(), &scenario.grid, DEFAULT_ETA_TOL)
        .map_err(qsd_core::Error::from)?;
    if outcome != CacheOutcome::Hit {
        log::info!("{}: built eta table {key} ({outcome:?})", scenario.label);
    }
    let traj = engine::itm_propagate_with(scenario, &eta, EngineOptions::default()).map_err(qsd_core::Error::from)?;
    let times = decay_times(Some(&traj), Some(&traj));

    let label = &scenario.label;
    let csv = dir.join(format!("{label}.csv"));
    let summary = dir.join(format!("{label}.summary.json"));
    let manifest_path = dir.join(format!("{label}.manifest.json"));
    write_file(&csv, &trajectory_csv(scenario, &traj)).map_err(io_err(&csv))?;
    write_json(&summary, &RunSummary::new(label, &traj, &times)).map_err(io_err(&summary))?;
    let manifest = RunManifest {
        label: label.clone(),
        parameters: scenario_to_document(scenario),
        eta_cache_hash: Some(key),
        code_version: CODE_VERSION.to_string(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        outputs: vec![csv, summary],
    };
    write_json(&manifest_path, &manifest).map_err(io_err(&manifest_path))?;
    Ok(RunOutput { manifest, times })
}

fn default_cache(out: &Path) -> EtaCache {
    EtaCache::from_env_or(out.join("cache"))
}

fn cmd_run(config: &Path, out: &Path, no_normalize: bool) -> Result<(), CliError> {
    let mut scenario = read_config(config)?;
    if no_normalize {
        scenario.normalize_trace = false;
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    let r = run_scenario(&scenario, out, &default_cache(out))?;
    println!(
        "{}: tau2 = {}, tau1 = {}",
        scenario.label,
        fmt_opt(r.times.tau2),
        fmt_opt(r.times.tau1)
    );
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "none".into())
}

/// Series name shared by the coherence and population runs of one setting.
fn series_of(label: &str) -> (&str, bool) {
    if let Some(s) = label.strip_suffix("_rho12") {
        (s, true)
    } else if let Some(s) = label.strip_suffix("_rho11") {
        (s, false)
    } else {
        (label, true)
    }
}

fn cmd_preset(name: &str, out: &Path, sweep: Option<&[f64]>) -> Result<(), CliError> {
    let started = Instant::now();
    let scenarios = figure_preset_with_sweep(name, sweep)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let cache = default_cache(out);

    let mut runs = Vec::with_capacity(scenarios.len());
    let mut series: BTreeMap<String, DecayTimes> = BTreeMap::new();
    for scenario in &scenarios {
        log::info!("running {}", scenario.label);
        let r = run_scenario(scenario, out, &cache)?;
        let (key, coherence) = series_of(&scenario.label);
        let entry = series.entry(key.to_string()).or_default();
        if coherence {
            entry.tau2 = r.times.tau2;
            entry.tau2_crossing = r.times.tau2_crossing;
        } else {
            entry.tau1 = r.times.tau1;
            entry.tau1_crossing = r.times.tau1_crossing;
            entry.tau1_target = r.times.tau1_target;
        }
        runs.push(r.manifest);
    }

    let mut shared = Vec::new();
    let rows: Vec<(String, DecayTimes)> = series.into_iter().collect();
    let table = out.join(format!("{name}_decay_times.csv"));
    shared.push(write_file(&table, &decay_table(&rows)).map_err(io_err(&table))?);

    let files: Vec<String> = scenarios.iter().map(|s| format!("{}.csv", s.label)).collect();
    let plot = out.join(format!("plot_{name}.py"));
    shared.push(write_file(&plot, &trajectory_plot_script(name, &files)).map_err(io_err(&plot))?);

    if name == "fig1" {
        let mut response_files = Vec::new();
        for scenario in &scenarios {
            let spec = scenario.spectral_density();
            let upper = spec.window.upper.unwrap_or(scenario.bath.omega_c);
            let step = 1.0 / (4.0 * upper);
            let n = (scenario.grid.horizon() / step).round() as usize;
            let grid: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
            let samples = sample_response(&grid, &spec, scenario.beta(), 1e-10)
                .map_err(|e| CliError::from(qsd_core::Error::from(e)))?;
            let file = format!("{}_response.csv", scenario.label);
            let path = out.join(&file);
            let header = format!("label: {}\nbath: {}", scenario.label, scenario.bath.kind_name());
            shared.push(write_file(&path, &response_csv(&header, &samples)).map_err(io_err(&path))?);
            response_files.push(file);
        }
        let plot = out.join("plot_fig1_response.py");
        shared.push(write_file(&plot, &response_plot_script("fig1_response", &response_files)).map_err(io_err(&plot))?);
    }

    let manifest = PresetManifest {
        preset: name.to_string(),
        code_version: CODE_VERSION.to_string(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        runs,
        outputs: shared,
    };
    let path = out.join("manifest.json");
    write_json(&path, &manifest).map_err(io_err(&path))?;
    for (series, d) in &rows {
        println!("{series}: tau2 = {}, tau1 = {}", fmt_opt(d.tau2), fmt_opt(d.tau1));
    }
    Ok(())
}

fn cmd_response(config: &Path, t_max: f64, step: Option<f64>) -> Result<(), CliError> {
    let scenario = read_config(config)?;
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(CliError::Usage(format!("--t-max must be positive, got {t_max}")));
    }
    let spec = scenario.spectral_density();
    let upper = spec.window.upper.unwrap_or(scenario.bath.omega_c);
    let step = step.unwrap_or(1.0 / (4.0 * upper));
    if !(step > 0.0) {
        return Err(CliError::Usage(format!("--step must be positive, got {step}")));
    }
    let n = (t_max / step).floor() as usize;
    let grid: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
    let samples = sample_response(&grid, &spec, scenario.beta(), 1e-10).map_err(qsd_core::Error::from)?;
    let header = format!("label: {}\nbath: {}", scenario.label, scenario.bath.kind_name());
    print!("{}", response_csv(&header, &samples));
    Ok(())
}

fn cmd_spectrum(config: &Path, points: usize) -> Result<(), CliError> {
    let scenario = read_config(config)?;
    if points < 2 {
        return Err(CliError::Usage("--points must be at least 2".into()));
    }
    let spec = scenario.spectral_density();
    let (_, hi) = spec.integration_range();
    let top = spec.window.upper.map_or(hi, |u| 1.2 * u);
    println!("# label: {}", scenario.label);
    println!("omega,j_value");
    for i in 0..points {
        let w = top * i as f64 / (points - 1) as f64;
        println!("{},{}", num(w), num(spec.eval(w)));
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            out,
            jobs,
            no_normalize,
        } => {
            configure_pool(jobs)?;
            cmd_run(&config, &out, no_normalize)
        }
        Command::Preset { name, out, sweep, jobs } => {
            if !PRESET_NAMES.contains(&name.as_str()) {
                return Err(ConfigError::UnknownPreset(name).into());
            }
            configure_pool(jobs)?;
            cmd_preset(&name, &out, sweep.as_deref())
        }
        Command::Response { config, t_max, step } => cmd_response(&config, t_max, step),
        Command::Spectrum { config, points } => cmd_spectrum(&config, points),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qsd: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
