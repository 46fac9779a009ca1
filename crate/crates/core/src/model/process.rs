use serde::{Deserialize, Serialize};

use crate::empirical::PathSample;
use crate::error::{Error, Result};
use crate::model::TimeGrid;
use crate::rng::{Substream, UniformSource};
use crate::special::{bvn_cdf, norm_cdf, norm_quantile};

/// One-dimensional marginal law used by the comonotone and independent models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Marginal {
    Uniform {
        lower: f64,
        upper: f64,
    },
    /// N(mean, (scale · t^exponent)²)
    Normal {
        mean: f64,
        scale: f64,
        exponent: f64,
    },
}

impl Marginal {
    pub fn standard_uniform() -> Self {
        Marginal::Uniform { lower: 0.0, upper: 1.0 }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Marginal::Uniform { lower, upper } => {
                if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                    return Err(Error::config(format!(
                        "uniform marginal needs finite lower < upper, got [{lower}, {upper}]"
                    )));
                }
            }
            Marginal::Normal { mean, scale, exponent } => {
                if !(mean.is_finite() && scale.is_finite() && scale > 0.0 && exponent.is_finite()) {
                    return Err(Error::config("normal marginal needs finite mean, scale > 0"));
                }
            }
        }
        Ok(())
    }

    fn sd(&self, t: f64) -> f64 {
        match *self {
            Marginal::Normal { scale, exponent, .. } => scale * t.powf(exponent),
            Marginal::Uniform { .. } => f64::NAN,
        }
    }

    fn cdf(&self, t: f64, x: f64) -> f64 {
        match *self {
            Marginal::Uniform { lower, upper } => ((x - lower) / (upper - lower)).clamp(0.0, 1.0),
            Marginal::Normal { mean, .. } => norm_cdf((x - mean) / self.sd(t)),
        }
    }

    fn quantile(&self, t: f64, p: f64) -> f64 {
        match *self {
            Marginal::Uniform { lower, upper } => lower + p * (upper - lower),
            Marginal::Normal { mean, .. } => mean + self.sd(t) * norm_quantile(p),
        }
    }

    fn degenerates_at_zero(&self) -> bool {
        matches!(*self, Marginal::Normal { exponent, .. } if exponent > 0.0)
    }
}

/// Dependence between two coordinates after the probability-integral transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Copula {
    Comonotone {},
    Independent {},
    Gaussian { rho: f64 },
}

impl Copula {
    /// C(u, v) for u, v in [0, 1].
    pub fn cdf(&self, u: f64, v: f64) -> f64 {
        match *self {
            Copula::Comonotone {} => u.min(v),
            Copula::Independent {} => u * v,
            Copula::Gaussian { rho } => bvn_cdf(norm_quantile(u), norm_quantile(v), rho),
        }
    }

    /// One draw (U, V) with uniform margins.
    pub fn sample(&self, rng: &mut UniformSource) -> (f64, f64) {
        match *self {
            Copula::Comonotone {} => {
                let u = rng.uniform();
                (u, u)
            }
            Copula::Independent {} => (rng.uniform(), rng.uniform()),
            Copula::Gaussian { rho } => {
                let z1 = norm_quantile(rng.uniform());
                let z2 = norm_quantile(rng.uniform());
                let sigma = (1.0 - rho * rho).max(0.0).sqrt();
                (norm_cdf(z1), norm_cdf(rho * z1 + sigma * z2))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Copula::Gaussian { rho } = *self {
            if !(-1.0..=1.0).contains(&rho) {
                return Err(Error::config(format!(
                    "gaussian copula needs rho in [-1, 1], got {rho}"
                )));
            }
        }
        Ok(())
    }
}

/// Stochastic process family Y(t) with known marginals G_t and bivariate laws G_{t,s}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Y(t) = G_t⁻¹(U) for a single uniform driver U.
    Comonotone { marginal: Marginal },
    /// Standard Brownian motion started at 0.
    Brownian {},
    /// Stationary Gaussian Ornstein–Uhlenbeck process, unit variance,
    /// correlation exp(-|t - s| / rho).
    StationaryOu { rho: f64 },
    /// Independent coordinates at distinct times; finite-dimensional use only.
    IndependentField { marginal: Marginal },
}

impl ModelSpec {
    pub fn comonotone_uniform() -> Self {
        ModelSpec::Comonotone {
            marginal: Marginal::standard_uniform(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Comonotone { marginal } | ModelSpec::IndependentField { marginal } => marginal.validate(),
            ModelSpec::Brownian {} => Ok(()),
            ModelSpec::StationaryOu { rho } => {
                if rho.is_finite() && *rho > 0.0 {
                    Ok(())
                } else {
                    Err(Error::config(format!(
                        "OU correlation scale rho must be > 0, got {rho}"
                    )))
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Comonotone { .. } => "comonotone",
            ModelSpec::Brownian {} => "brownian",
            ModelSpec::StationaryOu { .. } => "stationary_ou",
            ModelSpec::IndependentField { .. } => "independent_field",
        }
    }

    /// Whether the model has genuine sample paths in ℓ∞([0, T]).
    pub fn is_path_model(&self) -> bool {
        !matches!(self, ModelSpec::IndependentField { .. })
    }

    fn marginal_degenerates_at_zero(&self) -> bool {
        match self {
            ModelSpec::Brownian {} => true,
            ModelSpec::Comonotone { marginal } | ModelSpec::IndependentField { marginal } => {
                marginal.degenerates_at_zero()
            }
            ModelSpec::StationaryOu { .. } => false,
        }
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::domain(format!("time {t} is not finite")));
        }
        if t < 0.0 || (t == 0.0 && self.marginal_degenerates_at_zero()) {
            return Err(Error::config(format!(
                "time {t} is outside the valid range of the {} model",
                self.name()
            )));
        }
        Ok(())
    }

    pub fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        grid.points().iter().try_for_each(|&t| self.check_time(t))
    }

    // standard deviation for the Gaussian-marginal models
    pub(crate) fn gaussian_sd(&self, t: f64) -> Option<(f64, f64)> {
        match self {
            ModelSpec::Brownian {} => Some((0.0, t.sqrt())),
            ModelSpec::StationaryOu { .. } => Some((0.0, 1.0)),
            ModelSpec::Comonotone { marginal } | ModelSpec::IndependentField { marginal } => match *marginal {
                Marginal::Normal { mean, .. } => Some((mean, marginal.sd(t))),
                Marginal::Uniform { .. } => None,
            },
        }
    }

    /// G_t(x).
    pub fn marginal_cdf(&self, t: f64, x: f64) -> f64 {
        match self {
            ModelSpec::Comonotone { marginal } | ModelSpec::IndependentField { marginal } => marginal.cdf(t, x),
            _ => {
                let (mean, sd) = self.gaussian_sd(t).expect("gaussian model");
                norm_cdf((x - mean) / sd)
            }
        }
    }

    /// G_t⁻¹(p) for p in (0, 1).
    pub fn marginal_quantile(&self, t: f64, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!("quantile level {p} is not in (0, 1)")));
        }
        Ok(self.quantile_unchecked(t, p))
    }

    #[inline]
    pub(crate) fn quantile_unchecked(&self, t: f64, p: f64) -> f64 {
        match self {
            ModelSpec::Comonotone { marginal } | ModelSpec::IndependentField { marginal } => marginal.quantile(t, p),
            _ => {
                let (mean, sd) = self.gaussian_sd(t).expect("gaussian model");
                mean + sd * norm_quantile(p)
            }
        }
    }

    /// Copula of (Y(t), Y(s)).
    pub fn copula(&self, t: f64, s: f64) -> Copula {
        if t == s {
            return Copula::Comonotone {};
        }
        match self {
            ModelSpec::Comonotone { .. } => Copula::Comonotone {},
            ModelSpec::IndependentField { .. } => Copula::Independent {},
            ModelSpec::Brownian {} => Copula::Gaussian {
                rho: (t.min(s) / t.max(s)).sqrt(),
            },
            ModelSpec::StationaryOu { rho } => Copula::Gaussian {
                rho: (-(t - s).abs() / rho).exp(),
            },
        }
    }

    /// G_{t,s}(u, v) = P(Y(t) ≤ u, Y(s) ≤ v).
    pub fn joint_cdf(&self, t: f64, s: f64, u: f64, v: f64) -> f64 {
        match self.copula(t, s) {
            Copula::Gaussian { rho } => {
                // Standardize directly instead of round-tripping through G_t.
                let (mt, st) = self.gaussian_sd(t).expect("gaussian copula implies gaussian marginals");
                let (ms, ss) = self.gaussian_sd(s).expect("gaussian copula implies gaussian marginals");
                bvn_cdf((u - mt) / st, (v - ms) / ss, rho)
            }
            copula => copula.cdf(self.marginal_cdf(t, u), self.marginal_cdf(s, v)),
        }
    }

    /// Draws `n` independent paths on `grid` from the given substream.
    pub fn sample_paths(&self, n: usize, grid: &TimeGrid, stream: Substream) -> Result<PathSample> {
        if n == 0 {
            return Err(Error::config("sample size n must be at least 1"));
        }
        self.validate()?;
        self.check_grid(grid)?;
        let times = grid.points();
        let m = times.len();
        let mut columns = vec![vec![0.0; n]; m];
        let mut rng = stream.rng();
        for j in 0..n {
            match self {
                ModelSpec::Comonotone { marginal } => {
                    let u = rng.uniform();
                    for (col, &t) in columns.iter_mut().zip(times) {
                        col[j] = marginal.quantile(t, u);
                    }
                }
                ModelSpec::IndependentField { marginal } => {
                    for (col, &t) in columns.iter_mut().zip(times) {
                        col[j] = marginal.quantile(t, rng.uniform());
                    }
                }
                ModelSpec::Brownian {} => {
                    let mut y = 0.0;
                    let mut prev = 0.0;
                    for (col, &t) in columns.iter_mut().zip(times) {
                        y += (t - prev).sqrt() * norm_quantile(rng.uniform());
                        prev = t;
                        col[j] = y;
                    }
                }
                ModelSpec::StationaryOu { rho } => {
                    let mut y = norm_quantile(rng.uniform());
                    columns[0][j] = y;
                    for i in 1..m {
                        let r = (-(times[i] - times[i - 1]) / rho).exp();
                        y = r * y + (1.0 - r * r).sqrt() * norm_quantile(rng.uniform());
                        columns[i][j] = y;
                    }
                }
            }
        }
        Ok(PathSample::new(columns, grid.clone(), self.clone(), rng.draws()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ou() -> ModelSpec {
        ModelSpec::StationaryOu { rho: 1.0 }
    }

    fn models() -> Vec<ModelSpec> {
        vec![
            ModelSpec::comonotone_uniform(),
            ModelSpec::Comonotone {
                marginal: Marginal::Normal {
                    mean: 1.0,
                    scale: 2.0,
                    exponent: 0.5,
                },
            },
            ModelSpec::Brownian {},
            ou(),
            ModelSpec::IndependentField {
                marginal: Marginal::standard_uniform(),
            },
        ]
    }

    #[test]
    fn marginal_cdf_examples() {
        let uni = ModelSpec::comonotone_uniform();
        assert_eq!(uni.marginal_cdf(0.5, 0.25), 0.25);
        assert_eq!(ModelSpec::Brownian {}.marginal_cdf(4.0, 0.0), 0.5);
        assert!((ModelSpec::Brownian {}.marginal_cdf(1.0, 1.959964) - 0.975).abs() < 1e-6);
    }

    #[test]
    fn quantile_examples_and_domain() {
        let uni = ModelSpec::comonotone_uniform();
        assert!((uni.marginal_quantile(0.3, 0.7).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(ou().marginal_quantile(1.0, 0.5).unwrap(), 0.0);
        assert!(matches!(uni.marginal_quantile(0.3, 0.0), Err(Error::Domain(_))));
        assert!(matches!(uni.marginal_quantile(0.3, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn quantile_round_trip_on_101_levels() {
        for model in models() {
            for t in [0.3, 1.0, 2.5] {
                for i in 0..101 {
                    let p = (i as f64 + 0.5) / 101.0;
                    let x = model.marginal_quantile(t, p).unwrap();
                    assert!((model.marginal_cdf(t, x) - p).abs() < 1e-10, "{model:?} t={t} p={p}");
                }
            }
        }
    }

    #[test]
    fn joint_cdf_examples() {
        let uni = ModelSpec::comonotone_uniform();
        assert!((uni.joint_cdf(0.2, 0.9, 0.3, 0.6) - 0.3).abs() < 1e-15);
        let ind = ModelSpec::IndependentField {
            marginal: Marginal::standard_uniform(),
        };
        assert!((ind.joint_cdf(0.2, 0.9, 0.3, 0.6) - 0.18).abs() < 1e-15);
        for u in [-1.0, 0.0, 0.7] {
            let bm = ModelSpec::Brownian {};
            assert!((bm.joint_cdf(0.8, 0.8, u, u) - bm.marginal_cdf(0.8, u)).abs() < 1e-15);
        }
    }

    #[test]
    fn joint_cdf_has_declared_margins() {
        for model in models() {
            for u in [-0.5, 0.1, 0.45, 0.9, 1.7] {
                let a = model.joint_cdf(0.4, 1.3, u, f64::INFINITY);
                assert!((a - model.marginal_cdf(0.4, u)).abs() < 1e-12, "{model:?}");
                let b = model.joint_cdf(0.4, 1.3, f64::INFINITY, u);
                assert!((b - model.marginal_cdf(1.3, u)).abs() < 1e-12, "{model:?}");
            }
        }
    }

    #[test]
    fn frechet_bounds_on_lattice() {
        for model in models() {
            let (t, s) = (0.7, 1.6);
            for i in 0..20 {
                for k in 0..20 {
                    let u = model.marginal_quantile(t, (i as f64 + 0.5) / 20.0).unwrap();
                    let v = model.marginal_quantile(s, (k as f64 + 0.5) / 20.0).unwrap();
                    let (gu, gv) = (model.marginal_cdf(t, u), model.marginal_cdf(s, v));
                    let c = model.joint_cdf(t, s, u, v);
                    assert!(c >= (gu + gv - 1.0).max(0.0) - 1e-12, "{model:?}");
                    assert!(c <= gu.min(gv) + 1e-12, "{model:?}");
                }
            }
        }
    }

    #[test]
    fn joint_cdf_is_two_increasing() {
        for model in models() {
            let xs = [-1.0, -0.2, 0.3, 0.8, 1.5];
            for a in xs.windows(2) {
                for b in xs.windows(2) {
                    let mass = model.joint_cdf(0.5, 1.1, a[1], b[1])
                        - model.joint_cdf(0.5, 1.1, a[0], b[1])
                        - model.joint_cdf(0.5, 1.1, a[1], b[0])
                        + model.joint_cdf(0.5, 1.1, a[0], b[0]);
                    assert!(mass >= -1e-12, "{model:?}");
                }
            }
        }
    }

    #[test]
    fn comonotone_rows_share_a_driver() {
        let grid = TimeGrid::new(vec![0.2, 0.8], 1.0).unwrap();
        let sample = ModelSpec::comonotone_uniform()
            .sample_paths(3, &grid, Substream::new(1, 0))
            .unwrap();
        for j in 0..3 {
            assert_eq!(sample.value(j, 0), sample.value(j, 1));
        }
        let normal = ModelSpec::Comonotone {
            marginal: Marginal::Normal {
                mean: 0.0,
                scale: 1.0,
                exponent: 1.0,
            },
        };
        let grid = TimeGrid::new(vec![0.3, 0.9, 1.7], 2.0).unwrap();
        let sample = normal.sample_paths(50, &grid, Substream::new(2, 0)).unwrap();
        for j in 0..50 {
            let p0 = normal.marginal_cdf(0.3, sample.value(j, 0));
            for (i, &t) in grid.points().iter().enumerate() {
                assert!((normal.marginal_cdf(t, sample.value(j, i)) - p0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let grid = TimeGrid::new(vec![0.5, 1.0, 1.5], 2.0).unwrap();
        for model in models() {
            let a = model.sample_paths(20, &grid, Substream::new(9, 4)).unwrap();
            let b = model.sample_paths(20, &grid, Substream::new(9, 4)).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.rng_draws(), b.rng_draws());
        }
    }

    #[test]
    fn brownian_mean_at_one() {
        let grid = TimeGrid::new(vec![0.5, 1.0], 1.0).unwrap();
        let s = ModelSpec::Brownian {}
            .sample_paths(10_000, &grid, Substream::new(3, 0))
            .unwrap();
        let mean = s.column(1).iter().sum::<f64>() / 10_000.0;
        assert!(mean.abs() < 4.0 / 100.0);
    }

    #[test]
    fn probability_transform_is_uniform() {
        // KS distance from uniform at the 1% level: 1.63 / sqrt(n).
        let grid = TimeGrid::new(vec![0.5, 1.0], 1.0).unwrap();
        let n = 10_000;
        for model in models() {
            let s = model.sample_paths(n, &grid, Substream::new(11, 0)).unwrap();
            let mut u: Vec<f64> = s.column(1).iter().map(|&y| model.marginal_cdf(1.0, y)).collect();
            u.sort_by(f64::total_cmp);
            let d = u
                .iter()
                .enumerate()
                .map(|(j, &x)| ((j + 1) as f64 / n as f64 - x).max(x - j as f64 / n as f64))
                .fold(0.0, f64::max);
            assert!(d <= 1.63 / (n as f64).sqrt(), "{model:?}: D = {d}");
        }
    }

    #[test]
    fn brownian_rejects_time_zero() {
        assert!(ModelSpec::Brownian {}.check_time(0.0).is_err());
        assert!(ou().check_time(0.0).is_ok());
    }
}
