use rayon::prelude::*;
use serde::Serialize;

use super::{digest_of, with_workers};
use crate::empirical::PreparedSample;
use crate::error::{Error, Result};
use crate::model::{ModelSpec, TimeGrid, WeightSpec};
use crate::oracle::Oracle;
use crate::rng::{derive_seed, Substream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayRung {
    pub n: usize,
    /// Median over replications of max over the grid of |R_n(t)|.
    pub median_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub replications: usize,
    pub seed: u64,
    pub config_digest: String,
    pub rungs: Vec<DecayRung>,
    /// Slope of log median against log n.
    pub slope: Option<f64>,
    /// median(last rung) / median(first rung)
    pub ratio: Option<f64>,
    pub ratio_bound: f64,
    pub strictly_decreasing: bool,
    pub identically_zero: bool,
    pub passed: bool,
}

#[derive(Serialize)]
struct DecayKey<'a> {
    model: &'a ModelSpec,
    weights: &'a WeightSpec,
    grid: &'a TimeGrid,
    n_ladder: &'a [usize],
    replications: usize,
    seed: u64,
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// Tracks the size of the remainder in √n(J_n − J) = α_n + β_n + R_n along a
/// ladder of sample sizes. Passes when the remainder is identically zero, or
/// when the medians strictly decrease and the end-to-start ratio is at most
/// `ratio_bound`.
#[allow(clippy::too_many_arguments)]
pub fn remainder_decay(
    oracle: &Oracle,
    weights: &WeightSpec,
    grid: &TimeGrid,
    n_ladder: &[usize],
    replications: usize,
    seed: u64,
    ratio_bound: f64,
    workers: usize,
) -> Result<DecayReport> {
    let model = oracle.model();
    model.check_grid(grid)?;
    weights.score()?;
    if n_ladder.len() < 3 || n_ladder.windows(2).any(|w| w[0] >= w[1]) || n_ladder[0] == 0 {
        return Err(Error::config(
            "n_ladder must be strictly increasing positive sizes with at least 3 rungs",
        ));
    }
    if replications < 2 {
        return Err(Error::config("remainder decay needs at least 2 replications"));
    }
    let j_limit: Vec<f64> = grid
        .points()
        .iter()
        .map(|&t| oracle.j_limit(weights, t))
        .collect::<Result<_>>()?;
    let mut rungs = Vec::with_capacity(n_ladder.len());
    let mut identically_zero = true;
    for &n in n_ladder {
        let rung_seed = derive_seed(seed, &format!("remainder-n{n}"));
        let mut sups: Vec<f64> = with_workers(workers, || {
            (0..replications as u64)
                .into_par_iter()
                .map(|r| {
                    let sample = model.sample_paths(n, grid, Substream::new(rung_seed, r))?;
                    let terms = PreparedSample::new(&sample)?.expansion(weights, &j_limit)?;
                    Ok(terms.remainder.iter().fold(0.0_f64, |m, x| m.max(x.abs())))
                })
                .collect::<Result<Vec<_>>>()
        })??;
        identically_zero &= sups.iter().all(|&s| s == 0.0);
        rungs.push(DecayRung {
            n,
            median_sup: median(&mut sups),
        });
    }
    let strictly_decreasing = rungs.windows(2).all(|w| w[1].median_sup < w[0].median_sup);
    let first = rungs[0].median_sup;
    let last = rungs[rungs.len() - 1].median_sup;
    let (ratio, slope) = if first > 0.0 && rungs.iter().all(|r| r.median_sup > 0.0) {
        let xs: Vec<f64> = rungs.iter().map(|r| (r.n as f64).ln()).collect();
        let ys: Vec<f64> = rungs.iter().map(|r| r.median_sup.ln()).collect();
        let k = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        (Some(last / first), Some(sxy / sxx))
    } else {
        (None, None)
    };
    let passed = identically_zero || (strictly_decreasing && ratio.is_some_and(|r| r <= ratio_bound));
    Ok(DecayReport {
        replications,
        seed,
        config_digest: digest_of(&DecayKey {
            model,
            weights,
            grid,
            n_ladder,
            replications,
            seed,
        }),
        rungs,
        slope,
        ratio,
        ratio_bound,
        strictly_decreasing,
        identically_zero,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ScoreFn, Threshold, WeightFn};

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn constant_score_has_no_remainder() {
        let oracle = Oracle::new(ModelSpec::comonotone_uniform()).unwrap();
        let w = WeightSpec::from_score(
            ScoreFn::Constant { value: 1.0 },
            WeightFn::constant(1.0),
            Threshold::Infinite {},
        )
        .unwrap();
        let grid = TimeGrid::linspace(0.5, 1.0, 2, 1.0).unwrap();
        let report = remainder_decay(&oracle, &w, &grid, &[20, 40, 80], 10, 1, 0.7, 1).unwrap();
        assert!(report.identically_zero && report.passed);
        assert!(report.rungs.iter().all(|r| r.median_sup == 0.0));
        assert!(remainder_decay(&oracle, &w, &grid, &[20, 40], 10, 1, 0.7, 1).is_err());
        assert!(remainder_decay(&oracle, &w, &grid, &[20, 20, 40], 10, 1, 0.7, 1).is_err());
    }
}
