//! Exact per-replication evaluation of the empirical objects: ECDF, ranks,
//! β_n and its simple form, the functional empirical process α_n, γ_n, the
//! time-dependent L-statistic J_n and the remainder of its linear expansion.
//!
//! All sums use compensated accumulation in sample order so that the exact
//! identities (rank sums, rank form of J_n) hold to ~1e-15.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, TimeGrid, WeightSpec};
use crate::special::CompensatedSum;

/// One replication: n independent paths observed on a time grid, stored by column.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    columns: Vec<Vec<f64>>,
    grid: TimeGrid,
    model: ModelSpec,
    rng_draws: u64,
}

impl PathSample {
    pub(crate) fn new(columns: Vec<Vec<f64>>, grid: TimeGrid, model: ModelSpec, rng_draws: u64) -> Self {
        Self {
            columns,
            grid,
            model,
            rng_draws,
        }
    }

    /// Wraps externally produced data; `columns[i][j]` is Y_j(t_i).
    pub fn from_columns(columns: Vec<Vec<f64>>, grid: TimeGrid, model: ModelSpec) -> Result<Self> {
        if columns.len() != grid.len() {
            return Err(Error::config(format!(
                "{} columns for a grid of {} points",
                columns.len(),
                grid.len()
            )));
        }
        let n = columns.first().map_or(0, Vec::len);
        if n == 0 || columns.iter().any(|c| c.len() != n) {
            return Err(Error::config("columns must be non-empty and of equal length"));
        }
        model.check_grid(&grid)?;
        Ok(Self::new(columns, grid, model, 0))
    }

    pub fn n(&self) -> usize {
        self.columns[0].len()
    }

    pub fn m(&self) -> usize {
        self.columns.len()
    }

    /// Y_j(t_i).
    pub fn value(&self, j: usize, i: usize) -> f64 {
        self.columns[i][j]
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.columns[i]
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    /// Uniform variates consumed to generate this sample.
    pub fn rng_draws(&self) -> u64 {
        self.rng_draws
    }
}

/// Values of the processes on the grid for one replication.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ProcessEvaluation {
    pub beta: Vec<f64>,
    pub beta_star: Vec<f64>,
    pub alpha: Option<Vec<f64>>,
    pub gamma: Option<Vec<f64>>,
    pub lstat: Option<Vec<f64>>,
    pub q_count: Option<Vec<usize>>,
    pub remainder: Option<Vec<f64>>,
    /// β_n under the second weight family, sharing this sample.
    pub beta_paired: Option<Vec<f64>>,
}

/// G_{t,n}(x): fraction of the column that is ≤ x.
pub fn ecdf_eval(column: &[f64], x: f64) -> f64 {
    if column.is_empty() {
        return f64::NAN;
    }
    column.iter().filter(|&&y| y <= x).count() as f64 / column.len() as f64
}

/// Sorting permutation of a column, rejecting ties and NaNs.
fn sort_order(column: &[f64], index: usize, time: f64) -> Result<Vec<usize>> {
    if let Some(&bad) = column.iter().find(|y| y.is_nan()) {
        return Err(Error::Tie {
            column: index,
            time,
            value: bad,
        });
    }
    let mut order: Vec<usize> = (0..column.len()).collect();
    order.sort_unstable_by(|&a, &b| column[a].total_cmp(&column[b]));
    for w in order.windows(2) {
        if column[w[0]] == column[w[1]] {
            return Err(Error::Tie {
                column: index,
                time,
                value: column[w[0]],
            });
        }
    }
    Ok(order)
}

/// 1-based ranks R_{j,n}; ties are an error.
pub fn ranks(column: &[f64]) -> Result<Vec<usize>> {
    let order = sort_order(column, 0, f64::NAN)?;
    let mut r = vec![0; column.len()];
    for (k, &j) in order.iter().enumerate() {
        r[j] = k + 1;
    }
    Ok(r)
}

struct PreparedColumn {
    time: f64,
    /// sorting permutation: order[k] is the index of the (k+1)-th smallest value
    order: Vec<usize>,
    ranks: Vec<usize>,
    /// G_t(Y_j(t))
    probs: Vec<f64>,
}

/// A sample with ranks and probability-integral values precomputed per column.
pub struct PreparedSample<'a> {
    sample: &'a PathSample,
    columns: Vec<PreparedColumn>,
}

impl<'a> PreparedSample<'a> {
    pub fn new(sample: &'a PathSample) -> Result<Self> {
        let model = sample.model();
        let columns = sample
            .grid
            .points()
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let values = sample.column(i);
                let order = sort_order(values, i, t)?;
                let mut ranks = vec![0; values.len()];
                for (k, &j) in order.iter().enumerate() {
                    ranks[j] = k + 1;
                }
                let probs = values.iter().map(|&y| model.marginal_cdf(t, y)).collect();
                Ok(PreparedColumn {
                    time: t,
                    order,
                    ranks,
                    probs,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { sample, columns })
    }

    pub fn sample(&self) -> &PathSample {
        self.sample
    }

    fn n(&self) -> usize {
        self.sample.n()
    }

    /// G_t(Y_j(t_i)) for column i.
    pub fn probabilities(&self, i: usize) -> &[f64] {
        &self.columns[i].probs
    }

    /// β*_n(t_i) = Σ_j {G_{t,n}(Y_j) − G_t(Y_j)} q_t(Y_j) for every grid point.
    pub fn beta_star(&self, weights: &WeightSpec) -> Result<Vec<f64>> {
        let n = self.n() as f64;
        self.columns
            .iter()
            .enumerate()
            .map(|(i, col)| {
                let values = self.sample.column(i);
                let mut acc = CompensatedSum::new();
                for j in 0..values.len() {
                    let p = col.probs[j];
                    let q = weights.weight_eval(col.time, values[j], p)?;
                    acc.add((col.ranks[j] as f64 / n - p) * q);
                }
                Ok(acc.value())
            })
            .collect()
    }

    /// β_n = β*_n / √n.
    pub fn beta(&self, weights: &WeightSpec) -> Result<Vec<f64>> {
        let root_n = (self.n() as f64).sqrt();
        Ok(self.beta_star(weights)?.into_iter().map(|b| b / root_n).collect())
    }

    /// α_n(t) = n^{-1/2} Σ_j {g_t(Y_j) − η(t)}.
    pub fn alpha(&self, weights: &WeightSpec, eta: &[f64]) -> Result<Vec<f64>> {
        let score = weights.score()?;
        if eta.len() != self.columns.len() {
            return Err(Error::config(format!(
                "η has {} values for {} grid points",
                eta.len(),
                self.columns.len()
            )));
        }
        let root_n = (self.n() as f64).sqrt();
        Ok(self
            .columns
            .iter()
            .enumerate()
            .map(|(i, col)| {
                let values = self.sample.column(i);
                let mut acc = CompensatedSum::new();
                for j in 0..values.len() {
                    acc.add(score.g(col.time, values[j], col.probs[j]) - eta[i]);
                }
                acc.value() / root_n
            })
            .collect())
    }

    /// J_n(t) from order statistics, with the counts Q_n(t).
    pub fn l_statistic(&self, weights: &WeightSpec) -> Result<(Vec<f64>, Vec<usize>)> {
        let score = weights.score()?;
        let n = self.n();
        let mut values_out = Vec::with_capacity(self.columns.len());
        let mut counts = Vec::with_capacity(self.columns.len());
        for (i, col) in self.columns.iter().enumerate() {
            let values = self.sample.column(i);
            let z = score.z.at(col.time);
            // Q_n: number of order statistics ≤ Z(t)
            let q = col.order.partition_point(|&j| values[j] <= z);
            let mut acc = CompensatedSum::new();
            for (k, &j) in col.order[..q].iter().enumerate() {
                acc.add(score.c.eval((k + 1) as f64 / n as f64) * score.q0_eval(col.time, values[j]));
            }
            values_out.push(acc.value() / n as f64);
            counts.push(q);
        }
        Ok((values_out, counts))
    }

    /// J_n(t) = n^{-1} Σ_j c(R_{j,n}/n) q₀(Y_j) 1(Y_j ≤ Z(t)), in sample order.
    pub fn l_statistic_rank_form(&self, weights: &WeightSpec) -> Result<Vec<f64>> {
        let score = weights.score()?;
        let n = self.n() as f64;
        Ok(self
            .columns
            .iter()
            .enumerate()
            .map(|(i, col)| {
                let values = self.sample.column(i);
                let mut acc = CompensatedSum::new();
                for j in 0..values.len() {
                    let q1 = score.q1(col.time, values[j]);
                    if q1 != 0.0 {
                        acc.add(score.c.eval(col.ranks[j] as f64 / n) * q1);
                    }
                }
                acc.value() / n
            })
            .collect())
    }

    /// Terms of √n(J_n − J) = α_n + β_n(c′(G_t)q₁) + R_n.
    pub fn expansion(&self, weights: &WeightSpec, j_limit: &[f64]) -> Result<ExpansionTerms> {
        let score = weights.score()?;
        let (lstat, q_count) = self.l_statistic(weights)?;
        let alpha = self.alpha(weights, j_limit)?;
        let beta = self.beta(&score.derived_weights())?;
        let root_n = (self.n() as f64).sqrt();
        let scaled_error: Vec<f64> = lstat.iter().zip(j_limit).map(|(jn, j)| root_n * (jn - j)).collect();
        let remainder = scaled_error
            .iter()
            .zip(&alpha)
            .zip(&beta)
            .map(|((e, a), b)| e - a - b)
            .collect();
        Ok(ExpansionTerms {
            lstat,
            q_count,
            scaled_error,
            alpha,
            beta,
            remainder,
        })
    }
}

/// Pieces of the linear expansion of the L-statistic at each grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionTerms {
    pub lstat: Vec<f64>,
    pub q_count: Vec<usize>,
    /// √n(J_n(t) − J(t))
    pub scaled_error: Vec<f64>,
    pub alpha: Vec<f64>,
    /// β_n with the derived weight c′(G_t)·q₁
    pub beta: Vec<f64>,
    pub remainder: Vec<f64>,
}

/// β_n(t_i) and β*_n(t_i) on the grid.
pub fn beta_n(sample: &PathSample, weights: &WeightSpec) -> Result<ProcessEvaluation> {
    let prepared = PreparedSample::new(sample)?;
    let beta_star = prepared.beta_star(weights)?;
    let root_n = (sample.n() as f64).sqrt();
    Ok(ProcessEvaluation {
        beta: beta_star.iter().map(|b| b / root_n).collect(),
        beta_star,
        ..Default::default()
    })
}

/// The simple process B*_n: β_n with q ≡ 1.
pub fn simple_process(sample: &PathSample) -> Result<Vec<f64>> {
    Ok(beta_n(sample, &WeightSpec::constant(1.0))?.beta)
}

/// α_n on the grid. `eta` holds η(t_i) = J(t_i).
pub fn alpha_n(sample: &PathSample, weights: &WeightSpec, eta: Option<&[f64]>) -> Result<Vec<f64>> {
    let eta = eta.ok_or_else(|| Error::config("α_n needs η(t) = J(t) on the grid"))?;
    PreparedSample::new(sample)?.alpha(weights, eta)
}

/// γ_n = α_n + β_n, returned with both components.
pub fn gamma_n(sample: &PathSample, weights: &WeightSpec, eta: Option<&[f64]>) -> Result<ProcessEvaluation> {
    let eta = eta.ok_or_else(|| Error::config("γ_n needs η(t) = J(t) on the grid"))?;
    let prepared = PreparedSample::new(sample)?;
    let alpha = prepared.alpha(weights, eta)?;
    let beta_star = prepared.beta_star(weights)?;
    let root_n = (sample.n() as f64).sqrt();
    let beta: Vec<f64> = beta_star.iter().map(|b| b / root_n).collect();
    let gamma = alpha.iter().zip(&beta).map(|(a, b)| a + b).collect();
    Ok(ProcessEvaluation {
        beta,
        beta_star,
        alpha: Some(alpha),
        gamma: Some(gamma),
        ..Default::default()
    })
}

/// J_n(t_i) and Q_n(t_i).
pub fn l_statistic(sample: &PathSample, weights: &WeightSpec) -> Result<(Vec<f64>, Vec<usize>)> {
    PreparedSample::new(sample)?.l_statistic(weights)
}

pub fn l_statistic_rank_form(sample: &PathSample, weights: &WeightSpec) -> Result<Vec<f64>> {
    PreparedSample::new(sample)?.l_statistic_rank_form(weights)
}

/// R_n(t) = √n(J_n(t) − J(t)) − α_n(t) − β_n(c′(G_t)q₁, t); `j_limit` holds J(t_i).
pub fn expansion_remainder(sample: &PathSample, weights: &WeightSpec, j_limit: &[f64]) -> Result<Vec<f64>> {
    Ok(PreparedSample::new(sample)?.expansion(weights, j_limit)?.remainder)
}

/// β_{n,1} and β_{n,2} computed on one shared sample.
pub fn paired_beta(sample: &PathSample, weights1: &WeightSpec, weights2: &WeightSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let prepared = PreparedSample::new(sample)?;
    Ok((prepared.beta(weights1)?, prepared.beta(weights2)?))
}
