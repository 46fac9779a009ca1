use rayon::prelude::*;
use serde::Serialize;

use super::{Oracle, Slice};
use crate::error::{Error, Result};
use crate::model::{TimeGrid, WeightSpec};

/// Increments smaller than this are treated as exact zeros.
const NEGLIGIBLE: f64 = 1e-12;
const EXPONENT_SLACK: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IncrementPair {
    pub t: f64,
    pub s: f64,
    pub increment_variance: f64,
}

/// Grid check of var(β(t) − β(s)) ≤ (3/2)·K₀·|t − s|^{1+r}.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TightnessReport {
    pub delta: f64,
    pub condition_r: f64,
    pub pairs: Vec<IncrementPair>,
    /// Least-squares slope of log increment variance against log |t − s|.
    pub fitted_exponent: Option<f64>,
    /// (2/3)·exp(intercept) of the same fit.
    pub fitted_k0: Option<f64>,
    /// (2/3)·max over pairs of variance / |t − s|^{1+r}.
    pub implied_k0: Option<f64>,
    pub satisfied: bool,
    pub notice: Option<String>,
}

impl Oracle {
    pub fn holder_scan(&self, weights: &WeightSpec, grid: &TimeGrid, delta: f64, r: f64) -> Result<TightnessReport> {
        if !self.model().is_path_model() {
            return Err(Error::config(format!(
                "the {} model has no sample paths; tightness scans are refused",
                self.model().name()
            )));
        }
        self.model().check_grid(grid)?;
        if grid.len() < 10 {
            return Err(Error::config(format!(
                "tightness scan needs at least 10 grid points, got {}",
                grid.len()
            )));
        }
        if !(delta > grid.min_spacing()) {
            return Err(Error::config(format!(
                "scan radius {delta} must exceed the smallest grid spacing {}",
                grid.min_spacing()
            )));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::config(format!("exponent r must be positive, got {r}")));
        }
        let points = grid.points();
        let slices: Vec<Slice> = points
            .par_iter()
            .map(|&t| self.slice(weights, t))
            .collect::<Result<_>>()?;
        let diag: Vec<f64> = slices
            .par_iter()
            .map(|a| self.gamma1_slices(a, a))
            .collect::<Result<_>>()?;
        let reach = delta * (1.0 + 1e-12);
        let index: Vec<(usize, usize)> = (0..points.len())
            .flat_map(|i| ((i + 1)..points.len()).map(move |j| (i, j)))
            .filter(|&(i, j)| points[j] - points[i] <= reach)
            .collect();
        let pairs: Vec<IncrementPair> = index
            .par_iter()
            .map(|&(i, j)| {
                let off = self.gamma1_slices(&slices[i], &slices[j])?;
                Ok(IncrementPair {
                    t: points[i],
                    s: points[j],
                    increment_variance: diag[i] + diag[j] - 2.0 * off,
                })
            })
            .collect::<Result<_>>()?;
        if let Some(bad) = pairs.iter().find(|p| p.increment_variance < -1e-8) {
            return Err(Error::Invariant {
                t: bad.t,
                y: bad.s,
                what: format!("negative increment variance {}", bad.increment_variance),
            });
        }
        Ok(fit(delta, r, pairs))
    }
}

fn fit(delta: f64, r: f64, pairs: Vec<IncrementPair>) -> TightnessReport {
    let mut report = TightnessReport {
        delta,
        condition_r: r,
        pairs,
        fitted_exponent: None,
        fitted_k0: None,
        implied_k0: None,
        satisfied: false,
        notice: None,
    };
    let logs: Vec<(f64, f64)> = report
        .pairs
        .iter()
        .filter(|p| p.increment_variance > NEGLIGIBLE)
        .map(|p| ((p.s - p.t).ln(), p.increment_variance.ln()))
        .collect();
    if logs.is_empty() {
        report.notice = Some(format!(
            "degenerate scan: every increment variance is below {NEGLIGIBLE:e}"
        ));
        return report;
    }
    let k = logs.len() as f64;
    let mx = logs.iter().map(|l| l.0).sum::<f64>() / k;
    let my = logs.iter().map(|l| l.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|l| (l.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|l| (l.0 - mx) * (l.1 - my)).sum();
    report.implied_k0 = report
        .pairs
        .iter()
        .map(|p| p.increment_variance / (p.s - p.t).powf(1.0 + r))
        .reduce(f64::max)
        .map(|m| 2.0 / 3.0 * m);
    if sxx <= 1e-12 * k {
        report.notice = Some("all scanned pairs share one distance; no exponent can be fitted".into());
        return report;
    }
    let slope = sxy / sxx;
    report.fitted_exponent = Some(slope);
    report.fitted_k0 = Some(2.0 / 3.0 * (my - slope * mx).exp());
    report.satisfied = slope >= 1.0 + r - EXPONENT_SLACK;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Marginal, ModelSpec, WeightFn};

    #[test]
    fn comonotone_scan_is_degenerate() {
        let o = Oracle::new(ModelSpec::comonotone_uniform()).unwrap();
        let grid = TimeGrid::linspace(0.1, 1.0, 10, 1.0).unwrap();
        let report = o.holder_scan(&WeightSpec::constant(1.0), &grid, 0.3, 0.5).unwrap();
        assert!(report.notice.unwrap().contains("degenerate"));
        assert!(report.fitted_exponent.is_none());
        assert!(!report.satisfied);
    }

    #[test]
    fn preconditions_are_enforced() {
        let one = WeightSpec::constant(1.0);
        let field = Oracle::new(ModelSpec::IndependentField {
            marginal: Marginal::standard_uniform(),
        })
        .unwrap();
        let grid = TimeGrid::linspace(0.1, 1.0, 10, 1.0).unwrap();
        assert!(field.holder_scan(&one, &grid, 0.3, 0.5).is_err());
        let bm = Oracle::new(ModelSpec::Brownian {}).unwrap();
        assert!(bm.holder_scan(&one, &grid, 0.05, 0.5).is_err());
        let short = TimeGrid::linspace(0.1, 1.0, 9, 1.0).unwrap();
        assert!(bm.holder_scan(&one, &short, 0.3, 0.5).is_err());
    }

    #[test]
    fn fit_recovers_exact_power_law() {
        let pairs = (1..6)
            .map(|k| {
                let h = 0.1 * k as f64;
                IncrementPair {
                    t: 1.0,
                    s: 1.0 + h,
                    increment_variance: 0.3 * h.powf(1.7),
                }
            })
            .collect();
        let report = fit(0.5, 0.5, pairs);
        assert!((report.fitted_exponent.unwrap() - 1.7).abs() < 1e-12);
        assert!((report.fitted_k0.unwrap() - 0.2).abs() < 1e-12);
        assert!(report.satisfied);
    }

    #[test]
    fn ou_scan_is_reproducible() {
        let o = Oracle::new(ModelSpec::StationaryOu { rho: 1.0 }).unwrap();
        let w = WeightSpec::new(
            WeightFn::SineNormalCdf {
                base: 1.0,
                amplitude: 0.5,
            },
            None,
        )
        .unwrap();
        let grid = TimeGrid::linspace(0.5, 1.5, 12, 2.0).unwrap();
        let a = o.holder_scan(&w, &grid, 0.3, 0.5).unwrap();
        let b = o.holder_scan(&w, &grid, 0.3, 0.5).unwrap();
        assert_eq!(a, b);
        assert!(a.pairs.iter().all(|p| p.increment_variance > 0.0));
    }
}
