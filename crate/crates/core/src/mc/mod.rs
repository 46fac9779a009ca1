//! Replicated simulation and Monte Carlo checks against the oracle.

mod bridge;
mod decay;
mod moments;
mod normality;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::empirical::{PreparedSample, ProcessEvaluation};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, TimeGrid, WeightFn, WeightSpec};
use crate::oracle::Oracle;
use crate::rng::Substream;
use crate::special::compensated_sum;

pub use bridge::{bahadur_kiefer_ladder, bridge_check, BridgeReport, BridgeSurface, KieferRung};
pub use decay::{remainder_decay, DecayReport, DecayRung};
pub use moments::{estimate_moments, paired_covariance, MomentCell, MomentReport, Target, Tolerance};
pub use normality::{anderson_darling, fdd_normality, kolmogorov_smirnov, FddReport, GofStatistic};

/// Everything that determines an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSpec {
    pub model: ModelSpec,
    pub weights: WeightSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights2: Option<WeightSpec>,
    pub grid: TimeGrid,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.model.check_grid(&self.grid)?;
        self.weights.validate()?;
        if let Some(w) = &self.weights2 {
            w.validate()?;
        }
        if self.n == 0 {
            return Err(Error::config("sample size n must be at least 1"));
        }
        if self.replications < 2 {
            return Err(Error::config(format!(
                "at least 2 replications are required, got {}",
                self.replications
            )));
        }
        Ok(())
    }

    /// sha256 of the canonical JSON encoding, hex.
    pub fn digest(&self) -> String {
        digest_of(self)
    }
}

pub fn digest_of<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("run specs serialize");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ensemble {
    pub spec: RunSpec,
    pub config_digest: String,
    pub evaluations: Vec<ProcessEvaluation>,
    pub rng_draws: u64,
}

impl Ensemble {
    pub fn replications(&self) -> usize {
        self.evaluations.len()
    }
}

/// Runs `f` on a pool of `workers` threads, or on the global pool when `workers` is 0.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

const IDENTITY_TOLERANCE: f64 = 1e-12;

/// Simulates `spec.replications` independent samples, replication r on
/// substream (seed, r), and evaluates every process the weights support.
pub fn run_replications(spec: &RunSpec, oracle: &Oracle, workers: usize) -> Result<Ensemble> {
    spec.validate()?;
    if oracle.model() != &spec.model {
        return Err(Error::config("oracle and run use different models"));
    }
    let eta = match spec.weights.score {
        Some(_) => Some(
            spec.grid
                .points()
                .iter()
                .map(|&t| oracle.j_limit(&spec.weights, t))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let guard = spec.weights.q == WeightFn::Constant { value: 1.0 };
    let results: Vec<(ProcessEvaluation, u64)> = with_workers(workers, || {
        (0..spec.replications as u64)
            .into_par_iter()
            .map(|r| evaluate(spec, eta.as_deref(), guard, Substream::new(spec.seed, r)))
            .collect::<Result<Vec<_>>>()
    })??;
    let rng_draws = results.iter().map(|r| r.1).sum();
    Ok(Ensemble {
        spec: spec.clone(),
        config_digest: spec.digest(),
        evaluations: results.into_iter().map(|r| r.0).collect(),
        rng_draws,
    })
}

fn evaluate(spec: &RunSpec, eta: Option<&[f64]>, guard: bool, stream: Substream) -> Result<(ProcessEvaluation, u64)> {
    let sample = spec.model.sample_paths(spec.n, &spec.grid, stream)?;
    let prepared = PreparedSample::new(&sample)?;
    let beta_star = prepared.beta_star(&spec.weights)?;
    if guard {
        let half = (spec.n as f64 + 1.0) / 2.0;
        for (i, &b) in beta_star.iter().enumerate() {
            let identity = half - compensated_sum(prepared.probabilities(i).iter().copied());
            if (b - identity).abs() > IDENTITY_TOLERANCE {
                return Err(Error::Invariant {
                    t: spec.grid.points()[i],
                    y: f64::NAN,
                    what: format!(
                        "rank-sum identity broken in replication {}: β* = {b}, (n+1)/2 − ΣG = {identity}",
                        stream.stream
                    ),
                });
            }
        }
    }
    let root_n = (spec.n as f64).sqrt();
    let beta: Vec<f64> = beta_star.iter().map(|b| b / root_n).collect();
    let mut evaluation = ProcessEvaluation {
        beta_star,
        ..Default::default()
    };
    if let Some(eta) = eta {
        let alpha = prepared.alpha(&spec.weights, eta)?;
        evaluation.gamma = Some(alpha.iter().zip(&beta).map(|(a, b)| a + b).collect());
        evaluation.alpha = Some(alpha);
    }
    if let Some(w2) = &spec.weights2 {
        evaluation.beta_paired = Some(prepared.beta(w2)?);
    }
    evaluation.beta = beta;
    Ok((evaluation, sample.rng_draws()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(model: ModelSpec, r: usize) -> RunSpec {
        RunSpec {
            model,
            weights: WeightSpec::constant(1.0),
            weights2: None,
            grid: TimeGrid::linspace(0.1, 1.0, 10, 1.0).unwrap(),
            n: 50,
            replications: r,
            seed: 7,
        }
    }

    #[test]
    fn ensembles_are_reproducible_across_worker_counts() {
        let s = spec(ModelSpec::StationaryOu { rho: 1.0 }, 2);
        let oracle = Oracle::new(s.model.clone()).unwrap();
        let a = run_replications(&s, &oracle, 1).unwrap();
        let b = run_replications(&s, &oracle, 1).unwrap();
        assert_eq!(a, b);
        let big = spec(ModelSpec::Brownian {}, 100);
        let oracle = Oracle::new(big.model.clone()).unwrap();
        let one = run_replications(&big, &oracle, 1).unwrap();
        let eight = run_replications(&big, &oracle, 8).unwrap();
        assert_eq!(one, eight);
        assert_eq!(one.replications(), 100);
        assert_eq!(one.rng_draws, 100 * 50 * 10);
    }

    #[test]
    fn digest_tracks_the_spec() {
        let a = spec(ModelSpec::Brownian {}, 5);
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.seed += 1;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn too_few_replications_is_a_config_error() {
        let s = spec(ModelSpec::Brownian {}, 1);
        let oracle = Oracle::new(s.model.clone()).unwrap();
        assert!(matches!(run_replications(&s, &oracle, 1), Err(Error::Config(_))));
    }
}
