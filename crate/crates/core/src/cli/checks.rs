use serde::Serialize;
use serde_json::Value;

use super::config::{Check, ExperimentConfig};
use crate::empirical::PreparedSample;
use crate::error::Result;
use crate::mc::{
    bahadur_kiefer_ladder, bridge_check, estimate_moments, fdd_normality, paired_covariance, remainder_decay,
    run_replications, with_workers, Ensemble, MomentReport, Target,
};
use crate::model::{TimeGrid, WeightSpec};
use crate::oracle::Oracle;
use crate::rng::{derive_seed, Substream};
use crate::special::compensated_sum;

/// One CSV line: check, t, s, statistic, mc, se, oracle, z (n, R, seed are added by the writer).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub t: Option<f64>,
    pub s: Option<f64>,
    pub statistic: String,
    pub mc: Option<f64>,
    pub se: Option<f64>,
    pub oracle: Option<f64>,
    pub z: Option<f64>,
}

impl Row {
    fn value(statistic: impl Into<String>, mc: f64, oracle: Option<f64>) -> Self {
        Row {
            t: None,
            s: None,
            statistic: statistic.into(),
            mc: Some(mc),
            se: None,
            oracle,
            z: None,
        }
    }

    fn at(mut self, t: f64, s: f64) -> Self {
        self.t = Some(t);
        self.s = Some(s);
        self
    }
}

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub summary: String,
    /// Sample size, replications and seed the rows refer to.
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    #[serde(skip)]
    pub rows: Vec<Row>,
    pub report: Value,
}

fn to_value<T: Serialize>(report: &T) -> Value {
    serde_json::to_value(report).expect("reports serialize to JSON")
}

/// Runs checks in config order, sharing one oracle and at most one ensemble.
pub struct CheckRunner<'a> {
    config: &'a ExperimentConfig,
    oracle: Oracle,
    workers: usize,
    ensemble: Option<Ensemble>,
    rng_draws: u64,
}

impl<'a> CheckRunner<'a> {
    pub fn new(config: &'a ExperimentConfig, workers: usize) -> Result<Self> {
        Ok(Self {
            config,
            oracle: Oracle::new(config.model.clone())?,
            workers,
            ensemble: None,
            rng_draws: 0,
        })
    }

    pub fn oracle(&self) -> &Oracle {
        &self.oracle
    }

    /// Uniform draws consumed by the shared ensemble.
    pub fn rng_draws(&self) -> u64 {
        self.rng_draws
    }

    pub fn ensemble(&mut self) -> Result<&Ensemble> {
        if self.ensemble.is_none() {
            let spec = self.config.run_spec()?;
            let ensemble = run_replications(&spec, &self.oracle, self.workers)?;
            self.rng_draws += ensemble.rng_draws;
            self.ensemble = Some(ensemble);
        }
        Ok(self.ensemble.as_ref().expect("ensemble was just built"))
    }

    fn run_block(&self) -> (usize, usize, u64) {
        let run = &self.config.run;
        (run.n as usize, run.replications as usize, run.seed)
    }

    pub fn run(&mut self, check: &Check) -> Result<CheckResult> {
        let name = check.name().to_string();
        match check {
            Check::RankSumIdentity {
                columns,
                max_n,
                tolerance,
            } => self.rank_sum(*columns, *max_n, *tolerance),
            Check::PaperConstants {
                tolerance,
                mean_tolerance,
            } => self.constants(*tolerance, *mean_tolerance),
            Check::Mean { tolerance } => self.moments(name, Target::BetaStarMean, *tolerance),
            Check::Variance { tolerance } => self.moments(name, Target::BetaVariance, *tolerance),
            Check::CovarianceSurface { tolerance } => self.moments(name, Target::BetaCovariance, *tolerance),
            Check::AlphaCovariance { tolerance } => self.moments(name, Target::AlphaCovariance, *tolerance),
            Check::GammaCovariance { tolerance } => self.moments(name, Target::GammaCovariance, *tolerance),
            Check::CrossCovariance { tolerance } => self.moments(name, Target::AlphaBetaCross, *tolerance),
            Check::PairedCovariance { tolerance } => {
                self.ensemble()?;
                let ensemble = self.ensemble.as_ref().expect("ensemble present");
                let report = paired_covariance(ensemble, &self.oracle, None, *tolerance)?;
                Ok(moment_result(name, report))
            }
            Check::PairedLinearity { factor, tolerance } => {
                self.ensemble()?;
                let ensemble = self.ensemble.as_ref().expect("ensemble present");
                let report = paired_covariance(ensemble, &self.oracle, Some(*factor), *tolerance)?;
                Ok(moment_result(name, report))
            }
            Check::LstatRankForm { samples, tolerance } => self.lstat(*samples, *tolerance),
            Check::FddNormality {
                times,
                coefficients,
                level,
            } => {
                let indices = self.config.time_indices(times)?;
                self.ensemble()?;
                let ensemble = self.ensemble.as_ref().expect("ensemble present");
                let report = fdd_normality(ensemble, &self.oracle, &indices, coefficients, *level)?;
                let mut rows = Vec::new();
                if let (Some(ks), Some(ad)) = (&report.kolmogorov_smirnov, &report.anderson_darling) {
                    rows.push(Row::value("ks_statistic", ks.statistic, None));
                    rows.push(Row::value("ks_p_value", ks.p_value, None));
                    rows.push(Row::value("ad_statistic", ad.statistic, None));
                    rows.push(Row::value("ad_p_value", ad.p_value, None));
                }
                rows.push(Row::value("limit_variance", report.variance, None));
                let summary = match (&report.notice, &report.kolmogorov_smirnov) {
                    (Some(notice), _) => notice.clone(),
                    (None, Some(ks)) => format!(
                        "a = {:?} at t = {:?}: KS p = {:.4}, AD p = {:.4}, level {level}",
                        coefficients,
                        report.times,
                        ks.p_value,
                        report.anderson_darling.map_or(f64::NAN, |a| a.p_value)
                    ),
                    _ => String::new(),
                };
                Ok(CheckResult {
                    name,
                    passed: report.passed,
                    summary,
                    n: report.n,
                    replications: report.replications,
                    seed: report.seed,
                    rows,
                    report: to_value(&report),
                })
            }
            Check::RemainderDecay {
                ratio_bound,
                replications,
            } => {
                let (_, r_default, seed) = self.run_block();
                let r = replications.unwrap_or(r_default);
                let report = remainder_decay(
                    &self.oracle,
                    &self.config.weights,
                    &self.config.grid,
                    &self.config.run.n_ladder,
                    r,
                    seed,
                    *ratio_bound,
                    self.workers,
                )?;
                let mut rows: Vec<Row> = report
                    .rungs
                    .iter()
                    .map(|rung| Row::value(format!("median_sup_remainder_n{}", rung.n), rung.median_sup, None))
                    .collect();
                if let Some(ratio) = report.ratio {
                    rows.push(Row::value("ratio_last_first", ratio, Some(*ratio_bound)));
                }
                if let Some(slope) = report.slope {
                    rows.push(Row::value("log_log_slope", slope, None));
                }
                let summary = if report.identically_zero {
                    "remainder identically zero at every rung".to_string()
                } else {
                    format!(
                        "medians {:?}, strictly decreasing: {}, ratio {} (bound {ratio_bound})",
                        report.rungs.iter().map(|r| r.median_sup).collect::<Vec<_>>(),
                        report.strictly_decreasing,
                        report.ratio.map_or("n/a".to_string(), |x| format!("{x:.4}"))
                    )
                };
                Ok(CheckResult {
                    name,
                    passed: report.passed,
                    summary,
                    n: *self.config.run.n_ladder.last().unwrap_or(&0),
                    replications: r,
                    seed,
                    rows,
                    report: to_value(&report),
                })
            }
            Check::BridgeSurfaces {
                copula,
                n,
                replications,
                lattice,
                sup_tolerance,
            } => {
                let seed = derive_seed(self.config.run.seed, "bridge");
                let report = bridge_check(*copula, *n, *replications, seed, lattice, *sup_tolerance, self.workers)?;
                let mut rows = Vec::new();
                for surface in [&report.margin1, &report.margin2, &report.cross] {
                    for (i, &s) in lattice.iter().enumerate() {
                        for (j, &t) in lattice.iter().enumerate() {
                            let se = surface.standard_error[i][j];
                            let diff = surface.estimate[i][j] - surface.theory[i][j];
                            rows.push(Row {
                                t: Some(s),
                                s: Some(t),
                                statistic: surface.name.to_string(),
                                mc: Some(surface.estimate[i][j]),
                                se: Some(se),
                                oracle: Some(surface.theory[i][j]),
                                z: Some(if se > 0.0 { diff / se } else { 0.0 }),
                            });
                        }
                    }
                    rows.push(Row::value(
                        format!("{}_sup_deviation", surface.name),
                        surface.sup_deviation,
                        Some(*sup_tolerance),
                    ));
                }
                let summary = format!(
                    "sup deviations margin1 {:.4}, margin2 {:.4}, cross {:.4} (tolerance {sup_tolerance})",
                    report.margin1.sup_deviation, report.margin2.sup_deviation, report.cross.sup_deviation
                );
                Ok(CheckResult {
                    name,
                    passed: report.passed,
                    summary,
                    n: *n,
                    replications: *replications,
                    seed,
                    rows,
                    report: to_value(&report),
                })
            }
            Check::BahadurKiefer {
                copula,
                n_ladder,
                replications,
                lattice,
            } => {
                let seed = self.config.run.seed;
                let rungs = bahadur_kiefer_ladder(*copula, n_ladder, *replications, seed, lattice, self.workers)?;
                let decreasing = (0..2).all(|k| rungs.windows(2).all(|w| w[1].median_sup[k] < w[0].median_sup[k]));
                let rows = rungs
                    .iter()
                    .flat_map(|r| {
                        (0..2).map(move |k| {
                            Row::value(format!("median_sup_margin{}_n{}", k + 1, r.n), r.median_sup[k], None)
                        })
                    })
                    .collect();
                let summary = format!(
                    "medians margin1 {:?}, margin2 {:?}, strictly decreasing: {decreasing}",
                    rungs.iter().map(|r| r.median_sup[0]).collect::<Vec<_>>(),
                    rungs.iter().map(|r| r.median_sup[1]).collect::<Vec<_>>()
                );
                #[derive(Serialize)]
                struct KieferReport<'a> {
                    copula: &'a crate::model::Copula,
                    replications: usize,
                    seed: u64,
                    lattice: &'a [f64],
                    rungs: &'a [crate::mc::KieferRung],
                    strictly_decreasing: bool,
                }
                let report = to_value(&KieferReport {
                    copula,
                    replications: *replications,
                    seed,
                    lattice,
                    rungs: &rungs,
                    strictly_decreasing: decreasing,
                });
                Ok(CheckResult {
                    name,
                    passed: decreasing,
                    summary,
                    n: *n_ladder.last().unwrap_or(&0),
                    replications: *replications,
                    seed,
                    rows,
                    report,
                })
            }
            Check::TightnessScan {
                delta,
                r,
                reference_points,
                exponent_tolerance,
            } => self.tightness(*delta, *r, *reference_points, *exponent_tolerance),
        }
    }

    fn moments(&mut self, name: String, target: Target, tolerance: crate::mc::Tolerance) -> Result<CheckResult> {
        self.ensemble()?;
        let ensemble = self.ensemble.as_ref().expect("ensemble present");
        let report = estimate_moments(ensemble, target, &self.oracle, tolerance)?;
        Ok(moment_result(name, report))
    }

    fn rank_sum(&self, columns: usize, max_n: usize, tolerance: f64) -> Result<CheckResult> {
        let seed = derive_seed(self.config.run.seed, "rank-sum");
        let ones = WeightSpec::constant(1.0);
        let model = &self.config.model;
        let grid = &self.config.grid;
        let m = grid.len();
        let errors: Vec<f64> = with_workers(self.workers, || {
            use rayon::prelude::*;
            (0..columns)
                .into_par_iter()
                .map(|c| {
                    let n = 2 + c % (max_n - 1);
                    let sample = model.sample_paths(n, grid, Substream::new(seed, c as u64))?;
                    let prepared = PreparedSample::new(&sample)?;
                    let beta_star = prepared.beta_star(&ones)?;
                    let i = c % m;
                    let identity = (n as f64 + 1.0) / 2.0 - compensated_sum(prepared.probabilities(i).iter().copied());
                    Ok((beta_star[i] - identity).abs())
                })
                .collect::<Result<Vec<_>>>()
        })??;
        let worst = errors.iter().copied().fold(0.0, f64::max);
        Ok(CheckResult {
            name: "rank_sum_identity".into(),
            passed: worst <= tolerance,
            summary: format!("{columns} columns, n in 2..={max_n}: max |error| {worst:e} (tolerance {tolerance:e})"),
            n: max_n,
            replications: columns,
            seed,
            rows: vec![Row::value("max_abs_error", worst, Some(0.0))],
            report: serde_json::json!({
                "columns": columns,
                "max_n": max_n,
                "seed": seed,
                "max_abs_error": worst,
                "tolerance": tolerance,
            }),
        })
    }

    fn constants(&self, tolerance: f64, mean_tolerance: f64) -> Result<CheckResult> {
        let ones = WeightSpec::constant(1.0);
        let mut rows = Vec::new();
        let mut worst = [0.0_f64; 3];
        for &t in self.config.grid.points() {
            let values = [
                ("c2", self.oracle.c2(&ones, t)?, 1.0 / 3.0),
                ("gamma1_diagonal", self.oracle.gamma1_cov(&ones, t, t)?, 1.0 / 12.0),
                ("mean_limit", self.oracle.mean_limit(&ones, t)?, 0.5),
            ];
            for (k, (stat, value, exact)) in values.into_iter().enumerate() {
                worst[k] = worst[k].max((value - exact).abs());
                rows.push(Row::value(stat, value, Some(exact)).at(t, t));
            }
        }
        let passed = worst[0] <= tolerance && worst[1] <= tolerance && worst[2] <= mean_tolerance;
        let (n, r, seed) = self.run_block();
        Ok(CheckResult {
            name: "paper_constants".into(),
            passed,
            summary: format!(
                "max |c2 - 1/3| {:e}, max |Γ1(t,t) - 1/12| {:e}, max |mean - 1/2| {:e}",
                worst[0], worst[1], worst[2]
            ),
            n,
            replications: r,
            seed,
            report: serde_json::json!({
                "c2_max_error": worst[0],
                "gamma1_diagonal_max_error": worst[1],
                "mean_limit_max_error": worst[2],
                "tolerance": tolerance,
                "mean_tolerance": mean_tolerance,
            }),
            rows,
        })
    }

    fn lstat(&self, samples: usize, tolerance: f64) -> Result<CheckResult> {
        let (n, _, seed) = self.run_block();
        let seed = derive_seed(seed, "lstat");
        let config = self.config;
        let worst: Vec<f64> = with_workers(self.workers, || {
            use rayon::prelude::*;
            (0..samples as u64)
                .into_par_iter()
                .map(|r| {
                    let sample = config.model.sample_paths(n, &config.grid, Substream::new(seed, r))?;
                    let prepared = PreparedSample::new(&sample)?;
                    let (order_form, _) = prepared.l_statistic(&config.weights)?;
                    let rank_form = prepared.l_statistic_rank_form(&config.weights)?;
                    Ok(order_form
                        .iter()
                        .zip(&rank_form)
                        .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
                        .fold(0.0, f64::max))
                })
                .collect::<Result<Vec<_>>>()
        })??;
        let worst = worst.into_iter().fold(0.0, f64::max);
        Ok(CheckResult {
            name: "lstat_rank_form".into(),
            passed: worst <= tolerance,
            summary: format!("{samples} samples of size {n}: max relative gap {worst:e} (tolerance {tolerance:e})"),
            n,
            replications: samples,
            seed,
            rows: vec![Row::value("max_relative_gap", worst, Some(0.0))],
            report: serde_json::json!({
                "samples": samples,
                "n": n,
                "seed": seed,
                "max_relative_gap": worst,
                "tolerance": tolerance,
            }),
        })
    }

    fn tightness(&self, delta: f64, r: f64, reference_points: usize, exponent_tolerance: f64) -> Result<CheckResult> {
        let grid = &self.config.grid;
        let points = grid.points();
        let reference = TimeGrid::linspace(points[0], points[points.len() - 1], reference_points, grid.horizon())?;
        let w = &self.config.weights;
        let coarse = self.oracle.holder_scan(w, grid, delta, r)?;
        let repeat = self.oracle.holder_scan(w, grid, delta, r)?;
        let fine = self.oracle.holder_scan(w, &reference, delta, r)?;
        let reproducible = match (coarse.fitted_exponent, repeat.fitted_exponent) {
            (Some(a), Some(b)) => (a - b).abs() <= 1e-9,
            (None, None) => true,
            _ => false,
        };
        let gap = match (coarse.fitted_exponent, fine.fitted_exponent) {
            (Some(a), Some(b)) => Some((a - b).abs()),
            _ => None,
        };
        let passed = reproducible && gap.is_some_and(|g| g <= exponent_tolerance);
        let mut rows: Vec<Row> = coarse
            .pairs
            .iter()
            .map(|p| Row::value("increment_variance", p.increment_variance, None).at(p.t, p.s))
            .collect();
        if let (Some(a), Some(b)) = (coarse.fitted_exponent, fine.fitted_exponent) {
            rows.push(Row::value(format!("fitted_exponent_{}pt", points.len()), a, None));
            rows.push(Row::value(format!("fitted_exponent_{reference_points}pt"), b, None));
        }
        let summary = match gap {
            Some(g) => format!(
                "exponent {:.4} ({} points) vs {:.4} ({reference_points} points): gap {g:.4} (tolerance {exponent_tolerance}); reproducible: {reproducible}; condition with r = {r} satisfied: {}",
                coarse.fitted_exponent.unwrap_or(f64::NAN),
                points.len(),
                fine.fitted_exponent.unwrap_or(f64::NAN),
                coarse.satisfied
            ),
            None => coarse.notice.clone().unwrap_or_else(|| "no exponent fitted".into()),
        };
        let (n, reps, seed) = self.run_block();
        Ok(CheckResult {
            name: "tightness_scan".into(),
            passed,
            summary,
            n,
            replications: reps,
            seed,
            rows,
            report: serde_json::json!({
                "scan": to_value(&coarse),
                "reference_scan": to_value(&fine),
                "exponent_gap": gap,
                "exponent_tolerance": exponent_tolerance,
                "reproducible": reproducible,
            }),
        })
    }
}

fn moment_result(name: String, report: MomentReport) -> CheckResult {
    let rows = report
        .cells
        .iter()
        .map(|c| Row {
            t: Some(c.t),
            s: Some(c.s),
            statistic: c.statistic.to_string(),
            mc: Some(c.mc),
            se: Some(c.se),
            oracle: Some(c.oracle),
            z: Some(c.z),
        })
        .collect();
    let failing = report.cells.iter().filter(|c| !c.passed).count();
    let summary = format!(
        "{} cells, max |z| {:.2}, mean adjusted |z| {:.2}, {failing} outside 4·SE + slack {:e}",
        report.cells.len(),
        report.max_abs_z,
        report.mean_abs_z,
        report.slack
    );
    CheckResult {
        name,
        passed: report.passed,
        summary,
        n: report.n,
        replications: report.replications,
        seed: report.seed,
        rows,
        report: to_value(&report),
    }
}

/// Work units of a check: sampled values for simulation checks, oracle cells otherwise.
pub fn work_units(config: &ExperimentConfig, check: &Check) -> u64 {
    let m = config.grid.len() as u64;
    let run = &config.run;
    match check {
        Check::RankSumIdentity { columns, max_n, .. } => {
            (0..*columns as u64).map(|c| (2 + c % (*max_n as u64 - 1)) * m).sum()
        }
        Check::PaperConstants { .. } => 3 * m,
        Check::LstatRankForm { samples, .. } => *samples as u64 * run.n.max(0) as u64 * m,
        Check::RemainderDecay { replications, .. } => {
            let r = replications.map_or(run.replications.max(0) as u64, |r| r as u64);
            run.n_ladder.iter().map(|&n| n as u64 * r * m).sum()
        }
        Check::BridgeSurfaces { n, replications, .. } => 2 * (*n as u64) * (*replications as u64),
        Check::BahadurKiefer {
            n_ladder, replications, ..
        } => n_ladder.iter().map(|&n| 2 * n as u64 * *replications as u64).sum(),
        Check::TightnessScan { reference_points, .. } => {
            let k = *reference_points as u64;
            m * m + k * k
        }
        _ => m * (m + 1) / 2,
    }
}

/// Sampled values of the shared ensemble.
pub fn ensemble_units(config: &ExperimentConfig) -> u64 {
    config.run.n.max(0) as u64 * config.run.replications.max(0) as u64 * config.grid.len() as u64
}
