use std::fmt::Write;

use serde::Serialize;

use super::checks::CheckResult;
use super::config::ExperimentConfig;
use crate::oracle::CovarianceSurface;

const TOOL: &str = "emproc";
const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A limit surface with its diagnostics, as emitted by `oracle`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSurface {
    pub kind: &'static str,
    pub points: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub max_asymmetry: f64,
    pub min_eigenvalue: Option<f64>,
    #[serde(skip)]
    surface: CovarianceSurface,
}

impl OracleSurface {
    pub fn new(surface: CovarianceSurface) -> Self {
        Self {
            kind: surface.kind.name(),
            points: surface.grid.points().to_vec(),
            values: surface.values.clone(),
            max_asymmetry: surface.max_asymmetry(),
            min_eigenvalue: surface.kind.is_symmetric().then(|| surface.min_eigenvalue()),
            surface,
        }
    }
}

fn cell(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

fn header(config: &ExperimentConfig, subcommand: &str) -> String {
    format!("# {TOOL} {VERSION} {subcommand} digest={}\n", config.digest())
}

/// Long-format CSV: check,t,s,statistic,mc,se,oracle,z,n,R,seed.
pub fn render_csv(config: &ExperimentConfig, subcommand: &str, results: &[CheckResult]) -> String {
    let mut out = header(config, subcommand);
    out.push_str("check,t,s,statistic,mc,se,oracle,z,n,R,seed\n");
    for result in results {
        for row in &result.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                result.name,
                cell(row.t),
                cell(row.s),
                row.statistic,
                cell(row.mc),
                cell(row.se),
                cell(row.oracle),
                cell(row.z),
                result.n,
                result.replications,
                result.seed
            )
            .expect("writing to a String");
        }
    }
    out
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    config_digest: String,
    config: &'a ExperimentConfig,
    rng_draws: u64,
    passed: bool,
    #[serde(flatten)]
    body: T,
}

#[derive(Serialize)]
struct Checks<'a> {
    checks: &'a [CheckResult],
}

#[derive(Serialize)]
struct Surfaces<'a> {
    surfaces: &'a [OracleSurface],
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize to JSON");
    s.push('\n');
    s
}

pub fn render_json(config: &ExperimentConfig, subcommand: &str, results: &[CheckResult], rng_draws: u64) -> String {
    pretty(&Report {
        tool: TOOL,
        version: VERSION,
        subcommand,
        config_digest: config.digest(),
        config,
        rng_draws,
        passed: results.iter().all(|r| r.passed),
        body: Checks { checks: results },
    })
}

/// Long-format CSV: t,s,value,kind.
pub fn render_oracle_csv(config: &ExperimentConfig, surfaces: &[OracleSurface]) -> String {
    let mut out = header(config, "oracle");
    out.push_str("t,s,value,kind\n");
    for surface in surfaces {
        for (t, s, value) in surface.surface.rows() {
            writeln!(out, "{t},{s},{value},{}", surface.kind).expect("writing to a String");
        }
    }
    out
}

pub fn render_oracle_json(config: &ExperimentConfig, surfaces: &[OracleSurface]) -> String {
    pretty(&Report {
        tool: TOOL,
        version: VERSION,
        subcommand: "oracle",
        config_digest: config.digest(),
        config,
        rng_draws: 0,
        passed: true,
        body: Surfaces { surfaces },
    })
}
