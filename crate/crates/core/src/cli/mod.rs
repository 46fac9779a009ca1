//! Config-driven batch front end behind the `emproc` binary.
//!
//! Every subcommand buffers its reports and writes them only after all
//! configs have run, so a failing run leaves no partial output behind.

mod checks;
mod config;
mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};

pub use checks::{ensemble_units, work_units, CheckResult, CheckRunner, Row};
pub use config::{Check, ExperimentConfig, Format, OutputBlock, RunBlock};
pub use output::{render_csv, render_json, render_oracle_csv, render_oracle_json, OracleSurface};

use crate::error::{Error, Result};
use crate::oracle::SurfaceKind;

pub const WORKERS_ENV: &str = "EMPROC_WORKERS";
pub const DEFAULT_CONFIG_DIR: &str = "configs";

#[derive(Debug, Parser)]
#[command(
    name = "emproc",
    version,
    about = "Empirical process experiments: oracle surfaces, simulation and verification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    /// Experiment config (TOML); with --all, a directory of configs.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, env = WORKERS_ENV, default_value_t = 0)]
    pub workers: usize,
    /// Report directory, overriding the config's output block.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report formats, overriding the config's output block.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
    Both,
}

impl FormatArg {
    fn formats(self) -> Vec<Format> {
        match self {
            FormatArg::Csv => vec![Format::Csv],
            FormatArg::Json => vec![Format::Json],
            FormatArg::Both => vec![Format::Csv, Format::Json],
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Limit covariance surfaces only; draws no random numbers.
    Oracle(RunArgs),
    /// Checks that use the shared Monte Carlo ensemble.
    Simulate(RunArgs),
    /// Every check in the config.
    Verify {
        #[command(flatten)]
        args: RunArgs,
        /// Verify every *.toml config in the directory given by --config (default `configs`).
        #[arg(long)]
        all: bool,
    },
    /// Bridge surface and Bahadur–Kiefer checks.
    Bridge(RunArgs),
    /// L-statistic checks: rank form and remainder decay.
    Lstat(RunArgs),
    /// Increment-variance scans.
    Tightness(RunArgs),
    /// Print the resolved plan without running it.
    Describe {
        #[arg(long)]
        config: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Oracle(_) => "oracle",
            Command::Simulate(_) => "simulate",
            Command::Verify { .. } => "verify",
            Command::Bridge(_) => "bridge",
            Command::Lstat(_) => "lstat",
            Command::Tightness(_) => "tightness",
            Command::Describe { .. } => "describe",
        }
    }

    fn selects(&self, check: &Check) -> bool {
        match self {
            Command::Verify { .. } => true,
            Command::Simulate(_) => check.uses_ensemble(),
            Command::Bridge(_) => matches!(check, Check::BridgeSurfaces { .. } | Check::BahadurKiefer { .. }),
            Command::Lstat(_) => matches!(check, Check::LstatRankForm { .. } | Check::RemainderDecay { .. }),
            Command::Tightness(_) => matches!(check, Check::TightnessScan { .. }),
            Command::Oracle(_) | Command::Describe { .. } => false,
        }
    }
}

/// What one config produced.
#[derive(Debug, Clone)]
pub struct ConfigOutcome {
    pub path: PathBuf,
    pub digest: String,
    pub checks: Vec<CheckResult>,
    /// Wall time per check, in check order; the shared ensemble is charged
    /// to the first check that uses it.
    pub check_times: Vec<Duration>,
    pub rng_draws: u64,
    pub elapsed: Duration,
}

impl ConfigOutcome {
    pub fn name(&self) -> String {
        stem(&self.path)
    }
}

impl ConfigOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub configs: Vec<ConfigOutcome>,
    pub files: Vec<PathBuf>,
    /// Text printed for `describe`.
    pub plan: Option<String>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.configs.iter().all(ConfigOutcome::passed)
    }
}

/// Exit status for a finished run: 0 pass, 1 check failure, 2 configuration,
/// domain or I/O error, 3 numerical error.
pub fn exit_status(result: &Result<RunOutcome>) -> u8 {
    match result {
        Ok(outcome) if outcome.passed() => 0,
        Ok(_) => 1,
        Err(e) if e.is_numerical() => 3,
        Err(_) => 2,
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "config".into(), |s| s.to_string_lossy().into_owned())
}

fn config_paths(args: &RunArgs, all: bool) -> Result<Vec<PathBuf>> {
    if !all {
        return args
            .config
            .clone()
            .map(|p| vec![p])
            .ok_or_else(|| Error::config("--config is required"));
    }
    let dir = args.config.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_CONFIG_DIR));
    let entries = std::fs::read_dir(&dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|source| Error::Io {
                path: dir.display().to_string(),
                source,
            })?
            .path();
        if path.extension().is_some_and(|e| e == "toml") {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::config(format!("no *.toml configs in {}", dir.display())));
    }
    Ok(paths)
}

fn compact<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("config blocks serialize")
}

/// Resolved plan of a config: the text `describe` prints.
pub fn describe(config: &ExperimentConfig, path: &Path) -> String {
    let mut out = String::new();
    let mut line = |s: String| {
        out.push_str(&s);
        out.push('\n');
    };
    line(format!("config: {}", path.display()));
    line(format!("digest: {}", config.digest()));
    line(format!("model: {}", compact(&config.model)));
    line(format!("weights: {}", compact(&config.weights)));
    if let Some(w2) = &config.weights2 {
        line(format!("weights2: {}", compact(w2)));
    }
    line(format!(
        "grid: {} points on [0, {}]: {:?}",
        config.grid.len(),
        config.grid.horizon(),
        config.grid.points()
    ));
    let run = &config.run;
    line(format!(
        "run: n = {}, replications = {}, seed = {}, n_ladder = {:?}",
        run.n, run.replications, run.seed, run.n_ladder
    ));
    let shared = config.checks.iter().any(Check::uses_ensemble);
    if shared {
        line(format!("shared ensemble: {} work units", ensemble_units(config)));
    }
    line(format!("checks: {}", config.checks.len()));
    let mut total = if shared { ensemble_units(config) } else { 0 };
    for (k, check) in config.checks.iter().enumerate() {
        let units = work_units(config, check);
        total += units;
        line(format!(
            "  {}. {} {} ({units} work units)",
            k + 1,
            check.name(),
            compact(check)
        ));
    }
    line(format!("total work units: {total}"));
    let formats: Vec<&str> = config
        .output
        .formats
        .iter()
        .map(|f| match f {
            Format::Csv => "csv",
            Format::Json => "json",
        })
        .collect();
    line(format!(
        "output: {} [{}]",
        config.output.directory.display(),
        formats.join(", ")
    ));
    out
}

fn oracle_surfaces(config: &ExperimentConfig) -> Result<Vec<OracleSurface>> {
    let runner = CheckRunner::new(config, 0)?;
    let oracle = runner.oracle();
    let mut kinds = vec![SurfaceKind::Gamma1];
    if config.weights.score.is_some() {
        kinds.extend([SurfaceKind::Gamma2, SurfaceKind::CrossGamma, SurfaceKind::GammaTotal]);
    }
    if config.weights2.is_some() {
        kinds.push(SurfaceKind::Gamma3);
    }
    kinds
        .into_iter()
        .map(|kind| {
            let surface = oracle.surface(kind, &config.grid, &config.weights, config.weights2.as_ref())?;
            Ok(OracleSurface::new(surface))
        })
        .collect()
}

/// Runs one parsed command line; nothing is written unless every config succeeds.
pub fn run(cli: &Cli) -> Result<RunOutcome> {
    let command = &cli.command;
    let (args, all) = match command {
        Command::Describe { config } => {
            let parsed = ExperimentConfig::load(config)?;
            return Ok(RunOutcome {
                plan: Some(describe(&parsed, config)),
                ..RunOutcome::default()
            });
        }
        Command::Verify { args, all } => (args, *all),
        Command::Oracle(a) | Command::Simulate(a) | Command::Bridge(a) | Command::Lstat(a) | Command::Tightness(a) => {
            (a, false)
        }
    };
    let paths = config_paths(args, all)?;
    let configs = paths
        .iter()
        .map(|p| ExperimentConfig::load(p))
        .collect::<Result<Vec<_>>>()?;
    let mut pending: Vec<(PathBuf, Vec<u8>)> = Vec::new();
    let mut outcome = RunOutcome::default();
    for (path, config) in paths.iter().zip(&configs) {
        let started = Instant::now();
        let directory = args.out.clone().unwrap_or_else(|| config.output.directory.clone());
        let formats = args
            .format
            .map_or_else(|| config.output.formats.clone(), FormatArg::formats);
        let base = format!("{}.{}", stem(path), command.name());
        let digest = config.digest();
        let mut results = Vec::new();
        let mut check_times = Vec::new();
        let mut rng_draws = 0;
        if let Command::Oracle(_) = command {
            let surfaces = oracle_surfaces(config)?;
            for format in &formats {
                let (ext, bytes) = match format {
                    Format::Csv => ("csv", render_oracle_csv(config, &surfaces)),
                    Format::Json => ("json", render_oracle_json(config, &surfaces)),
                };
                pending.push((directory.join(format!("{base}.{ext}")), bytes.into_bytes()));
            }
        } else {
            let selected: Vec<&Check> = config.checks.iter().filter(|c| command.selects(c)).collect();
            if selected.is_empty() {
                return Err(Error::config(format!(
                    "{}: no checks apply to the {} subcommand",
                    path.display(),
                    command.name()
                )));
            }
            let mut runner = CheckRunner::new(config, args.workers)?;
            for check in selected {
                let check_started = Instant::now();
                results.push(runner.run(check)?);
                check_times.push(check_started.elapsed());
            }
            rng_draws = runner.rng_draws();
            for format in &formats {
                let (ext, bytes) = match format {
                    Format::Csv => ("csv", render_csv(config, command.name(), &results)),
                    Format::Json => ("json", render_json(config, command.name(), &results, rng_draws)),
                };
                pending.push((directory.join(format!("{base}.{ext}")), bytes.into_bytes()));
            }
        }
        outcome.configs.push(ConfigOutcome {
            path: path.clone(),
            digest,
            checks: results,
            check_times,
            rng_draws,
            elapsed: started.elapsed(),
        });
    }
    for (path, bytes) in pending {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|source| Error::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
        std::fs::write(&path, bytes).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        outcome.files.push(path);
    }
    Ok(outcome)
}

/// Human-readable lines for a finished run.
pub fn summary(outcome: &RunOutcome) -> String {
    if let Some(plan) = &outcome.plan {
        return plan.clone();
    }
    let mut out = String::new();
    for config in &outcome.configs {
        let name = stem(&config.path);
        for check in &config.checks {
            let verdict = if check.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("{verdict} {name}/{}: {}\n", check.name, check.summary));
        }
        if config.checks.is_empty() {
            out.push_str(&format!("DONE {name}: oracle surfaces, 0 random draws\n"));
        }
    }
    for file in &outcome.files {
        out.push_str(&format!("wrote {}\n", file.display()));
    }
    out
}

/// Entry point shared by the binary and tests.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = run(&cli);
    match &result {
        Ok(outcome) => print!("{}", summary(outcome)),
        Err(e) => eprintln!("emproc: {e}"),
    }
    ExitCode::from(exit_status(&result))
}
