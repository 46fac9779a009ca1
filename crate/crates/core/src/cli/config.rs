use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::{digest_of, RunSpec, Tolerance};
use crate::model::{Copula, ModelSpec, TimeGrid, WeightSpec};

/// One experiment: a model, weights, a grid, run sizes and named checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub weights: WeightSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights2: Option<WeightSpec>,
    pub grid: TimeGrid,
    pub run: RunBlock,
    #[serde(default)]
    pub checks: Vec<Check>,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub n: i64,
    pub replications: i64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n_ladder: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_directory() -> PathBuf {
    PathBuf::from("reports")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

fn default_identity_columns() -> usize {
    1000
}
fn default_identity_max_n() -> usize {
    200
}
fn default_exact_tolerance() -> f64 {
    1e-12
}
fn default_constant_tolerance() -> f64 {
    1e-8
}
fn default_mean_tolerance() -> f64 {
    1e-9
}
fn default_samples() -> usize {
    200
}
fn default_level() -> f64 {
    0.01
}
fn default_ratio_bound() -> f64 {
    0.7
}
fn default_sup_tolerance() -> f64 {
    0.02
}
fn default_exponent_tolerance() -> f64 {
    0.05
}
fn default_reference_points() -> usize {
    41
}
fn default_linearity_factor() -> f64 {
    2.0
}

/// Named checks; each maps to one library operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    /// β*_n with q ≡ 1 against (n+1)/2 − Σ G_t(Y_j) on random columns.
    RankSumIdentity {
        #[serde(default = "default_identity_columns")]
        columns: usize,
        #[serde(default = "default_identity_max_n")]
        max_n: usize,
        #[serde(default = "default_exact_tolerance")]
        tolerance: f64,
    },
    /// c₂ = 1/3, Γ₁(t, t) = 1/12 and mean limit 1/2 for q ≡ 1.
    PaperConstants {
        #[serde(default = "default_constant_tolerance")]
        tolerance: f64,
        #[serde(default = "default_mean_tolerance")]
        mean_tolerance: f64,
    },
    Mean {
        #[serde(default)]
        tolerance: Tolerance,
    },
    Variance {
        #[serde(default)]
        tolerance: Tolerance,
    },
    CovarianceSurface {
        #[serde(default)]
        tolerance: Tolerance,
    },
    AlphaCovariance {
        #[serde(default)]
        tolerance: Tolerance,
    },
    GammaCovariance {
        #[serde(default)]
        tolerance: Tolerance,
    },
    /// Cov(α_n(t), β_n(s)) against γ₁(t, s).
    CrossCovariance {
        #[serde(default)]
        tolerance: Tolerance,
    },
    /// Cov(β_{n,1}, β_{n,2}) against Γ₃.
    PairedCovariance {
        #[serde(default)]
        tolerance: Tolerance,
    },
    /// Cov(β_{n,1}, β_{n,2}) against factor × Cov(β_{n,1}, β_{n,1}).
    PairedLinearity {
        #[serde(default = "default_linearity_factor")]
        factor: f64,
        #[serde(default)]
        tolerance: Tolerance,
    },
    /// Order-statistic and rank forms of J_n agree.
    LstatRankForm {
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_exact_tolerance")]
        tolerance: f64,
    },
    FddNormality {
        times: Vec<f64>,
        coefficients: Vec<f64>,
        #[serde(default = "default_level")]
        level: f64,
    },
    RemainderDecay {
        #[serde(default = "default_ratio_bound")]
        ratio_bound: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        replications: Option<usize>,
    },
    BridgeSurfaces {
        copula: Copula,
        n: usize,
        replications: usize,
        lattice: Vec<f64>,
        #[serde(default = "default_sup_tolerance")]
        sup_tolerance: f64,
    },
    BahadurKiefer {
        copula: Copula,
        n_ladder: Vec<usize>,
        replications: usize,
        lattice: Vec<f64>,
    },
    /// Hölder scan on the config grid, compared with a finer reference grid.
    TightnessScan {
        delta: f64,
        r: f64,
        #[serde(default = "default_reference_points")]
        reference_points: usize,
        #[serde(default = "default_exponent_tolerance")]
        exponent_tolerance: f64,
    },
}

impl Check {
    pub fn name(&self) -> &'static str {
        match self {
            Check::RankSumIdentity { .. } => "rank_sum_identity",
            Check::PaperConstants { .. } => "paper_constants",
            Check::Mean { .. } => "mean",
            Check::Variance { .. } => "variance",
            Check::CovarianceSurface { .. } => "covariance_surface",
            Check::AlphaCovariance { .. } => "alpha_covariance",
            Check::GammaCovariance { .. } => "gamma_covariance",
            Check::CrossCovariance { .. } => "cross_covariance",
            Check::PairedCovariance { .. } => "paired_covariance",
            Check::PairedLinearity { .. } => "paired_linearity",
            Check::LstatRankForm { .. } => "lstat_rank_form",
            Check::FddNormality { .. } => "fdd_normality",
            Check::RemainderDecay { .. } => "remainder_decay",
            Check::BridgeSurfaces { .. } => "bridge_surfaces",
            Check::BahadurKiefer { .. } => "bahadur_kiefer",
            Check::TightnessScan { .. } => "tightness_scan",
        }
    }

    /// Whether the check draws on the shared ensemble of the run block.
    pub fn uses_ensemble(&self) -> bool {
        matches!(
            self,
            Check::Mean { .. }
                | Check::Variance { .. }
                | Check::CovarianceSurface { .. }
                | Check::AlphaCovariance { .. }
                | Check::GammaCovariance { .. }
                | Check::CrossCovariance { .. }
                | Check::PairedCovariance { .. }
                | Check::PairedLinearity { .. }
                | Check::FddNormality { .. }
        )
    }
}

/// Config digest: sha256 of the canonical JSON of everything but the output block.
#[derive(Serialize)]
struct DigestKey<'a> {
    model: &'a ModelSpec,
    weights: &'a WeightSpec,
    weights2: &'a Option<WeightSpec>,
    grid: &'a TimeGrid,
    run: &'a RunBlock,
    checks: &'a [Check],
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.run_spec()?.validate()?;
        for check in &self.checks {
            self.validate_check(check)?;
        }
        Ok(())
    }

    fn validate_check(&self, check: &Check) -> Result<()> {
        let name = check.name();
        let needs_score = matches!(
            check,
            Check::AlphaCovariance { .. }
                | Check::GammaCovariance { .. }
                | Check::CrossCovariance { .. }
                | Check::LstatRankForm { .. }
                | Check::RemainderDecay { .. }
        );
        if needs_score && self.weights.score.is_none() {
            return Err(Error::config(format!("check {name} needs a weights.score block")));
        }
        match check {
            Check::PairedCovariance { .. } | Check::PairedLinearity { .. } if self.weights2.is_none() => {
                Err(Error::config(format!("check {name} needs a weights2 block")))
            }
            Check::RemainderDecay { .. } if self.run.n_ladder.len() < 3 => Err(Error::config(
                "check remainder_decay needs run.n_ladder with at least 3 sizes",
            )),
            Check::FddNormality {
                times,
                coefficients,
                level,
            } => {
                if times.len() != coefficients.len() || times.is_empty() {
                    return Err(Error::config("fdd_normality needs one coefficient per time"));
                }
                if !(*level > 0.0 && *level < 1.0) {
                    return Err(Error::config("fdd_normality level must lie in (0, 1)"));
                }
                self.time_indices(times).map(|_| ())
            }
            Check::RankSumIdentity { max_n, columns, .. } if *max_n < 2 || *columns == 0 => {
                Err(Error::config("rank_sum_identity needs columns >= 1 and max_n >= 2"))
            }
            Check::TightnessScan { reference_points, .. } if *reference_points < 10 => {
                Err(Error::config("tightness_scan reference grid needs at least 10 points"))
            }
            Check::BahadurKiefer { n_ladder, .. } if n_ladder.len() < 2 => {
                Err(Error::config("bahadur_kiefer needs at least 2 sample sizes"))
            }
            _ => Ok(()),
        }
    }

    /// Grid indices of the given times (exact grid points only).
    pub fn time_indices(&self, times: &[f64]) -> Result<Vec<usize>> {
        times
            .iter()
            .map(|&t| {
                self.grid
                    .points()
                    .iter()
                    .position(|&p| (p - t).abs() <= 1e-12 * t.abs().max(1.0))
                    .ok_or_else(|| Error::config(format!("time {t} is not a grid point")))
            })
            .collect()
    }

    pub fn run_spec(&self) -> Result<RunSpec> {
        if self.run.n < 1 {
            return Err(Error::config(format!("run.n must be at least 1, got {}", self.run.n)));
        }
        if self.run.replications < 2 {
            return Err(Error::config(format!(
                "run.replications must be at least 2, got {}",
                self.run.replications
            )));
        }
        Ok(RunSpec {
            model: self.model.clone(),
            weights: self.weights.clone(),
            weights2: self.weights2.clone(),
            grid: self.grid.clone(),
            n: self.run.n as usize,
            replications: self.run.replications as usize,
            seed: self.run.seed,
        })
    }

    pub fn digest(&self) -> String {
        digest_of(&DigestKey {
            model: &self.model,
            weights: &self.weights,
            weights2: &self.weights2,
            grid: &self.grid,
            run: &self.run,
            checks: &self.checks,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[model]
kind = "comonotone"
marginal = { kind = "uniform", lower = 0.0, upper = 1.0 }

[weights]
q = { kind = "constant", value = 1.0 }

[grid]
horizon = 1.0
points = [0.5, 1.0]

[run]
n = 100
replications = 50
seed = 1

[[checks]]
name = "mean"

[[checks]]
name = "fdd_normality"
times = [0.5]
coefficients = [1.0]
"#;

    #[test]
    fn parse_serialize_parse_is_identity() {
        let c = ExperimentConfig::from_toml(SAMPLE).unwrap();
        let again = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.digest(), again.digest());
        assert_eq!(c.checks.len(), 2);
    }

    #[test]
    fn strict_parsing() {
        let unknown_key = SAMPLE.replace("seed = 1", "seed = 1\nsed = 2");
        assert!(matches!(
            ExperimentConfig::from_toml(&unknown_key),
            Err(Error::Config(_))
        ));
        let unknown_check = SAMPLE.replace("name = \"mean\"", "name = \"means\"");
        let err = ExperimentConfig::from_toml(&unknown_check).unwrap_err().to_string();
        assert!(err.contains("means"), "{err}");
        let negative = SAMPLE.replace("n = 100", "n = -5");
        assert!(matches!(ExperimentConfig::from_toml(&negative), Err(Error::Config(_))));
        let unit_variant_extra = SAMPLE.replace("kind = \"comonotone\"", "kind = \"brownian\"\nrho = 1.0");
        assert!(ExperimentConfig::from_toml(&unit_variant_extra).is_err());
        let off_grid = SAMPLE.replace("times = [0.5]", "times = [0.7]");
        assert!(ExperimentConfig::from_toml(&off_grid).is_err());
    }

    #[test]
    fn score_checks_need_a_score_block() {
        let text = SAMPLE.replace("name = \"mean\"", "name = \"gamma_covariance\"");
        let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("score"));
    }
}
