use serde::Serialize;

use super::Ensemble;
use crate::error::{Error, Result};
use crate::oracle::Oracle;
use crate::special::{compensated_sum, norm_cdf};

const DEGENERATE_VARIANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GofStatistic {
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FddReport {
    pub times: Vec<f64>,
    pub coefficients: Vec<f64>,
    /// a'Γ₁a from the oracle.
    pub variance: f64,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub config_digest: String,
    pub kolmogorov_smirnov: Option<GofStatistic>,
    pub anderson_darling: Option<GofStatistic>,
    pub min_p_value: f64,
    pub notice: Option<String>,
    pub passed: bool,
}

/// Tests Σ a_i β_n(t_i), centred by its exact mean and scaled by the oracle
/// limit variance, against N(0, 1). Passes when the KS p-value exceeds `level`.
pub fn fdd_normality(
    ensemble: &Ensemble,
    oracle: &Oracle,
    time_indices: &[usize],
    coefficients: &[f64],
    level: f64,
) -> Result<FddReport> {
    let spec = &ensemble.spec;
    let points = spec.grid.points();
    if time_indices.is_empty() || time_indices.len() != coefficients.len() {
        return Err(Error::config("FDD check needs one coefficient per selected time"));
    }
    if let Some(&bad) = time_indices.iter().find(|&&i| i >= points.len()) {
        return Err(Error::config(format!("time index {bad} is outside the grid")));
    }
    let times: Vec<f64> = time_indices.iter().map(|&i| points[i]).collect();
    let mut report = FddReport {
        times: times.clone(),
        coefficients: coefficients.to_vec(),
        variance: 0.0,
        n: spec.n,
        replications: ensemble.replications(),
        seed: spec.seed,
        config_digest: ensemble.config_digest.clone(),
        kolmogorov_smirnov: None,
        anderson_darling: None,
        min_p_value: f64::NAN,
        notice: None,
        passed: true,
    };
    let w = &spec.weights;
    let mut terms = Vec::new();
    for (k, &tk) in times.iter().enumerate() {
        for (l, &tl) in times.iter().enumerate() {
            if coefficients[k] != 0.0 && coefficients[l] != 0.0 {
                terms.push(coefficients[k] * coefficients[l] * oracle.gamma1_cov(w, tk, tl)?);
            }
        }
    }
    report.variance = compensated_sum(terms);
    if !(report.variance > DEGENERATE_VARIANCE) {
        report.notice = Some(format!(
            "degenerate linear combination: limit variance {:e} is not above {DEGENERATE_VARIANCE:e}; test skipped",
            report.variance
        ));
        return Ok(report);
    }
    let root_n = (spec.n as f64).sqrt();
    let mut mean = 0.0;
    for (&a, &t) in coefficients.iter().zip(&times) {
        if a != 0.0 {
            mean += a * oracle.mean_limit(w, t)? / root_n;
        }
    }
    let scale = report.variance.sqrt();
    let standardized: Vec<f64> = ensemble
        .evaluations
        .iter()
        .map(|e| {
            let x = compensated_sum(time_indices.iter().zip(coefficients).map(|(&i, &a)| a * e.beta[i]));
            (x - mean) / scale
        })
        .collect();
    let ks = kolmogorov_smirnov(&standardized);
    let ad = anderson_darling(&standardized);
    report.min_p_value = ks.p_value.min(ad.p_value);
    report.passed = ks.p_value > level;
    report.kolmogorov_smirnov = Some(ks);
    report.anderson_darling = Some(ad);
    Ok(report)
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// One-sample KS test against N(0, 1) with the Stephens small-sample correction.
pub fn kolmogorov_smirnov(x: &[f64]) -> GofStatistic {
    let v = sorted(x);
    let r = v.len() as f64;
    let mut d = 0.0_f64;
    for (i, &xi) in v.iter().enumerate() {
        let f = norm_cdf(xi);
        d = d.max((i as f64 + 1.0) / r - f).max(f - i as f64 / r);
    }
    let root = r.sqrt();
    GofStatistic {
        statistic: d,
        p_value: kolmogorov_tail((root + 0.12 + 0.11 / root) * d),
    }
}

/// P(K > λ) for the Kolmogorov distribution.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Anderson–Darling test against N(0, 1), p-value from the asymptotic law.
pub fn anderson_darling(x: &[f64]) -> GofStatistic {
    let v = sorted(x);
    let r = v.len();
    let s = compensated_sum((0..r).map(|i| {
        let w = (2 * i + 1) as f64;
        w * (norm_cdf(v[i]).ln() + norm_cdf(-v[r - 1 - i]).ln())
    }));
    let a2 = -(r as f64) - s / r as f64;
    GofStatistic {
        statistic: a2,
        p_value: (1.0 - anderson_darling_limit_cdf(a2)).clamp(0.0, 1.0),
    }
}

/// Limiting CDF of A² (Marsaglia & Marsaglia, 2004), absolute error < 2e-6.
fn anderson_darling_limit_cdf(z: f64) -> f64 {
    if !(z > 0.0) {
        return 0.0;
    }
    if !z.is_finite() {
        return 1.0;
    }
    if z < 2.0 {
        (-1.2337141 / z).exp() / z.sqrt()
            * (2.00012 + (0.247105 - (0.0649821 - (0.0347962 - (0.011672 - 0.00168691 * z) * z) * z) * z) * z)
    } else {
        (-(1.0776 - (2.30695 - (0.43424 - (0.082433 - (0.008056 - 0.0003146 * z) * z) * z) * z) * z).exp()).exp()
    }
}
