use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::norm_cdf;

fn one() -> f64 {
    1.0
}

/// Bounded weight functions q(t, y) from the built-in catalogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightFn {
    Constant {
        value: f64,
    },
    /// Σ a_k · clamp(y, lower, upper)^k
    Polynomial {
        coefficients: Vec<f64>,
        lower: f64,
        upper: f64,
    },
    /// value · 1(y ≤ threshold)
    Indicator {
        threshold: f64,
        value: f64,
    },
    /// base + amplitude · sin(t) · Φ(y)
    SineNormalCdf {
        base: f64,
        amplitude: f64,
    },
    /// factor · c′(G_t(y)) · q₀(y) · 1(y ≤ Z(t)), built from the score block.
    ScoreDerivative {
        #[serde(default = "one")]
        factor: f64,
    },
}

/// Rank score c on [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScoreFn {
    Constant {
        value: f64,
    },
    /// scale · u^k
    Power {
        k: u32,
        #[serde(default = "one")]
        scale: f64,
    },
    /// Σ a_k u^k
    Polynomial {
        coefficients: Vec<f64>,
    },
}

/// Threshold Z(t) on the extended real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Threshold {
    /// Z ≡ +∞
    Infinite {},
    /// Z ≡ −∞
    NegativeInfinite {},
    Constant {
        value: f64,
    },
    /// intercept + slope · t
    Linear {
        intercept: f64,
        slope: f64,
    },
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::Infinite {}
    }
}

impl Threshold {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Threshold::Infinite {} => f64::INFINITY,
            Threshold::NegativeInfinite {} => f64::NEG_INFINITY,
            Threshold::Constant { value } => value,
            Threshold::Linear { intercept, slope } => intercept + slope * t,
        }
    }
}

/// Ingredients of the time-dependent L-statistic: c, q₀ and Z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreSpec {
    pub c: ScoreFn,
    pub q0: WeightFn,
    #[serde(default)]
    pub z: Threshold,
}

/// The weight family q_t together with the optional L-statistic ingredients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub q: WeightFn,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<ScoreSpec>,
    /// Declared M_q; when absent the bound implied by the parameters is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
}

fn polynomial(coefficients: &[f64], x: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

impl ScoreFn {
    /// Coefficients of c in increasing degree.
    fn coefficients(&self) -> Vec<f64> {
        match self {
            ScoreFn::Constant { value } => vec![*value],
            ScoreFn::Power { k, scale } => {
                let mut c = vec![0.0; *k as usize + 1];
                c[*k as usize] = *scale;
                c
            }
            ScoreFn::Polynomial { coefficients } => coefficients.clone(),
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self {
            ScoreFn::Constant { value } => *value,
            ScoreFn::Power { k, scale } => scale * u.powi(*k as i32),
            ScoreFn::Polynomial { coefficients } => polynomial(coefficients, u),
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        match self {
            ScoreFn::Constant { .. } => 0.0,
            ScoreFn::Power { k: 0, .. } => 0.0,
            ScoreFn::Power { k, scale } => scale * *k as f64 * u.powi(*k as i32 - 1),
            ScoreFn::Polynomial { coefficients } => {
                let d: Vec<f64> = coefficients
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(i, &a)| i as f64 * a)
                    .collect();
                polynomial(&d, u)
            }
        }
    }

    /// Upper bound of |c′| on [0, 1].
    fn derivative_bound(&self) -> f64 {
        self.coefficients()
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, a)| i as f64 * a.abs())
            .sum()
    }

    fn is_finite(&self) -> bool {
        self.coefficients().iter().all(|c| c.is_finite())
    }
}

impl WeightFn {
    pub fn constant(value: f64) -> Self {
        WeightFn::Constant { value }
    }

    /// The same family scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            WeightFn::Constant { value } => WeightFn::Constant { value: value * factor },
            WeightFn::Polynomial {
                coefficients,
                lower,
                upper,
            } => WeightFn::Polynomial {
                coefficients: coefficients.iter().map(|c| c * factor).collect(),
                lower: *lower,
                upper: *upper,
            },
            WeightFn::Indicator { threshold, value } => WeightFn::Indicator {
                threshold: *threshold,
                value: value * factor,
            },
            WeightFn::SineNormalCdf { base, amplitude } => WeightFn::SineNormalCdf {
                base: base * factor,
                amplitude: amplitude * factor,
            },
            WeightFn::ScoreDerivative { factor: f } => WeightFn::ScoreDerivative { factor: f * factor },
        }
    }

    /// Whether the function is identically equal to `c`.
    pub fn is_constant(&self, c: f64) -> bool {
        match self {
            WeightFn::Constant { value } => *value == c,
            WeightFn::Polynomial { coefficients, .. } => {
                coefficients.first().copied().unwrap_or(0.0) == c && coefficients.iter().skip(1).all(|&a| a == 0.0)
            }
            WeightFn::SineNormalCdf { base, amplitude } => *base == c && *amplitude == 0.0,
            _ => false,
        }
    }

    fn plain_bound(&self) -> f64 {
        match self {
            WeightFn::Constant { value } => value.abs(),
            WeightFn::Polynomial {
                coefficients,
                lower,
                upper,
            } => {
                let m = lower.abs().max(upper.abs());
                coefficients
                    .iter()
                    .enumerate()
                    .map(|(i, a)| a.abs() * m.powi(i as i32))
                    .sum()
            }
            WeightFn::Indicator { value, .. } => value.abs(),
            WeightFn::SineNormalCdf { base, amplitude } => base.abs() + amplitude.abs(),
            WeightFn::ScoreDerivative { .. } => f64::NAN,
        }
    }

    fn eval_plain(&self, t: f64, y: f64) -> f64 {
        match self {
            WeightFn::Constant { value } => *value,
            WeightFn::Polynomial {
                coefficients,
                lower,
                upper,
            } => polynomial(coefficients, y.clamp(*lower, *upper)),
            WeightFn::Indicator { threshold, value } => {
                if y <= *threshold {
                    *value
                } else {
                    0.0
                }
            }
            WeightFn::SineNormalCdf { base, amplitude } => base + amplitude * t.sin() * norm_cdf(y),
            WeightFn::ScoreDerivative { .. } => f64::NAN,
        }
    }

    fn plain_breakpoints(&self) -> Vec<f64> {
        match self {
            WeightFn::Polynomial { lower, upper, .. } => vec![*lower, *upper],
            WeightFn::Indicator { threshold, .. } => vec![*threshold],
            _ => Vec::new(),
        }
    }

    fn validate_plain(&self, role: &str) -> Result<()> {
        let finite = match self {
            WeightFn::Constant { value } => value.is_finite(),
            WeightFn::Polynomial {
                coefficients,
                lower,
                upper,
            } => {
                if !(lower < upper) {
                    return Err(Error::config(format!("{role}: polynomial clamp needs lower < upper")));
                }
                coefficients.iter().all(|c| c.is_finite()) && lower.is_finite() && upper.is_finite()
            }
            WeightFn::Indicator { threshold, value } => value.is_finite() && !threshold.is_nan(),
            WeightFn::SineNormalCdf { base, amplitude } => base.is_finite() && amplitude.is_finite(),
            WeightFn::ScoreDerivative { .. } => {
                return Err(Error::config(format!("{role}: score_derivative is only valid for q")))
            }
        };
        if finite {
            Ok(())
        } else {
            Err(Error::config(format!("{role}: non-finite weight parameters")))
        }
    }
}

impl WeightSpec {
    pub fn new(q: WeightFn, score: Option<ScoreSpec>) -> Result<Self> {
        let spec = Self { q, score, bound: None };
        spec.validate()?;
        Ok(spec)
    }

    /// q ≡ value, no L-statistic ingredients.
    pub fn constant(value: f64) -> Self {
        Self {
            q: WeightFn::constant(value),
            score: None,
            bound: None,
        }
    }

    pub fn with_bound(mut self, bound: f64) -> Result<Self> {
        self.bound = Some(bound);
        self.validate()?;
        Ok(self)
    }

    /// c, q₀ and Z, with q_t derived as c′(G_t)·q₁.
    pub fn from_score(c: ScoreFn, q0: WeightFn, z: Threshold) -> Result<Self> {
        Self::new(WeightFn::ScoreDerivative { factor: 1.0 }, Some(ScoreSpec { c, q0, z }))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(b) = self.bound {
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::config(format!(
                    "declared weight bound must be finite and >= 0, got {b}"
                )));
            }
        }
        match &self.q {
            WeightFn::ScoreDerivative { factor } => {
                if self.score.is_none() {
                    return Err(Error::config("q = score_derivative requires a score block"));
                }
                if !factor.is_finite() {
                    return Err(Error::config("score_derivative factor must be finite"));
                }
            }
            q => q.validate_plain("q")?,
        }
        if let Some(score) = &self.score {
            score.q0.validate_plain("q0")?;
            if !score.c.is_finite() {
                return Err(Error::config("score c has non-finite coefficients"));
            }
            if let Threshold::Constant { value } = score.z {
                if value.is_nan() {
                    return Err(Error::config("threshold Z is NaN"));
                }
            }
            self.check_score_derivative()?;
        }
        Ok(())
    }

    /// Central finite differences of c at 11 interior points must agree with c′.
    pub fn check_score_derivative(&self) -> Result<()> {
        let Some(score) = &self.score else {
            return Ok(());
        };
        let h = 1e-5;
        for i in 1..=11 {
            let u = i as f64 / 12.0;
            let fd = (score.c.eval(u + h) - score.c.eval(u - h)) / (2.0 * h);
            let exact = score.c.derivative(u);
            if (fd - exact).abs() > 1e-6 * exact.abs().max(1.0) {
                return Err(Error::Invariant {
                    t: f64::NAN,
                    y: u,
                    what: format!("c′({u}) = {exact} disagrees with finite difference {fd}"),
                });
            }
        }
        Ok(())
    }

    pub fn eta_defined(&self) -> bool {
        self.score.is_some()
    }

    pub fn score(&self) -> Result<&ScoreSpec> {
        self.score
            .as_ref()
            .ok_or_else(|| Error::config("weights have no score block (c, q0, Z); η and J_n are undefined"))
    }

    /// Declared bound M_q of |q|.
    pub fn bound(&self) -> f64 {
        if let Some(b) = self.bound {
            return b;
        }
        self.implied_bound()
    }

    pub fn implied_bound(&self) -> f64 {
        match (&self.q, &self.score) {
            (WeightFn::ScoreDerivative { factor }, Some(score)) => {
                factor.abs() * score.c.derivative_bound() * score.q0.plain_bound()
            }
            (q, _) => q.plain_bound(),
        }
    }

    /// q_t(y); `p` must be G_t(y).
    #[inline]
    pub fn q(&self, t: f64, y: f64, p: f64) -> f64 {
        match (&self.q, &self.score) {
            (WeightFn::ScoreDerivative { factor }, Some(score)) => factor * score.derived_weight(t, y, p),
            (q, _) => q.eval_plain(t, y),
        }
    }

    /// q_t(y) with the bound check; `p` must be G_t(y).
    pub fn weight_eval(&self, t: f64, y: f64, p: f64) -> Result<f64> {
        let value = self.q(t, y, p);
        let bound = self.bound();
        if !(value.abs() <= bound * (1.0 + 1e-12) + 1e-300) {
            return Err(Error::Invariant {
                t,
                y,
                what: format!("|q| = {} exceeds declared bound {bound}", value.abs()),
            });
        }
        Ok(value)
    }

    /// c(u).
    pub fn score_eval(&self, u: f64) -> Result<f64> {
        Ok(self.score()?.c.eval(u))
    }

    /// Points in y where q_t may jump or kink.
    pub fn q_breakpoints(&self, t: f64) -> Vec<f64> {
        match (&self.q, &self.score) {
            (WeightFn::ScoreDerivative { .. }, Some(score)) => score.breakpoints(t),
            (q, _) => q.plain_breakpoints(),
        }
    }
}

impl ScoreSpec {
    /// q₁(y) = q₀(y)·1(y ≤ Z(t)).
    #[inline]
    pub fn q1(&self, t: f64, y: f64) -> f64 {
        if y <= self.z.at(t) {
            self.q0.eval_plain(t, y)
        } else {
            0.0
        }
    }

    /// g_t(y) = c(G_t(y))·q₁(y) with p = G_t(y).
    #[inline]
    pub fn g(&self, t: f64, y: f64, p: f64) -> f64 {
        let q1 = self.q1(t, y);
        if q1 == 0.0 {
            0.0
        } else {
            self.c.eval(p) * q1
        }
    }

    /// c′(G_t(y))·q₁(y) with p = G_t(y).
    #[inline]
    pub fn derived_weight(&self, t: f64, y: f64, p: f64) -> f64 {
        let q1 = self.q1(t, y);
        if q1 == 0.0 {
            0.0
        } else {
            self.c.derivative(p) * q1
        }
    }

    pub fn q0_eval(&self, t: f64, y: f64) -> f64 {
        self.q0.eval_plain(t, y)
    }

    /// Breakpoints in y of q₁ (and hence of g_t and the derived weight).
    pub fn breakpoints(&self, t: f64) -> Vec<f64> {
        let mut b = self.q0.plain_breakpoints();
        let z = self.z.at(t);
        if z.is_finite() {
            b.push(z);
        }
        b
    }

    /// The weight spec whose q is c′(G_t)·q₁, as used in the expansion of J_n.
    pub fn derived_weights(&self) -> WeightSpec {
        WeightSpec {
            q: WeightFn::ScoreDerivative { factor: 1.0 },
            score: Some(self.clone()),
            bound: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalogue_examples() {
        let one = WeightSpec::constant(1.0);
        for (t, y) in [(0.1, -3.0), (1.0, 0.0), (2.0, 5.0)] {
            assert_eq!(one.weight_eval(t, y, 0.5).unwrap(), 1.0);
        }
        let empty = WeightSpec::from_score(
            ScoreFn::Constant { value: 1.0 },
            WeightFn::constant(1.0),
            Threshold::NegativeInfinite {},
        )
        .unwrap();
        let score = empty.score().unwrap();
        for y in [-1e6, 0.0, 1e6] {
            assert_eq!(score.q1(0.5, y), 0.0);
        }
        let square = WeightSpec::from_score(
            ScoreFn::Power { k: 2, scale: 1.0 },
            WeightFn::constant(1.0),
            Threshold::Infinite {},
        )
        .unwrap();
        assert_eq!(square.score_eval(0.5).unwrap(), 0.25);
    }

    #[test]
    fn derived_weight_uses_score_derivative() {
        let w = WeightSpec::from_score(
            ScoreFn::Power { k: 2, scale: 1.0 },
            WeightFn::constant(1.0),
            Threshold::Constant { value: 0.5 },
        )
        .unwrap();
        assert!((w.q(1.0, 0.3, 0.3) - 0.6).abs() < 1e-15);
        assert_eq!(w.q(1.0, 0.7, 0.7), 0.0);
        assert_eq!(w.bound(), 2.0);
        assert_eq!(w.q_breakpoints(1.0), vec![0.5]);
    }

    #[test]
    fn bound_violation_is_reported() {
        let w = WeightSpec::new(
            WeightFn::Polynomial {
                coefficients: vec![0.0, 1.0],
                lower: -2.0,
                upper: 2.0,
            },
            None,
        )
        .unwrap();
        assert_eq!(w.bound(), 2.0);
        assert!(w.weight_eval(0.0, 5.0, 0.5).is_ok());
        let declared = w.with_bound(1.0).unwrap();
        assert!(declared.weight_eval(0.0, 0.5, 0.5).is_ok());
        match declared.weight_eval(0.7, 1.5, 0.5) {
            Err(Error::Invariant { t, y, .. }) => {
                assert_eq!((t, y), (0.7, 1.5));
            }
            other => panic!("expected invariant violation, got {other:?}"),
        }
    }

    #[test]
    fn score_derivative_requires_score_block() {
        assert!(WeightSpec::new(WeightFn::ScoreDerivative { factor: 1.0 }, None).is_err());
        let bad_q0 = ScoreSpec {
            c: ScoreFn::Constant { value: 1.0 },
            q0: WeightFn::ScoreDerivative { factor: 1.0 },
            z: Threshold::Infinite {},
        };
        assert!(WeightSpec::new(WeightFn::constant(1.0), Some(bad_q0)).is_err());
    }

    #[test]
    fn finite_difference_check_passes_for_catalogue() {
        for c in [
            ScoreFn::Constant { value: 3.0 },
            ScoreFn::Power { k: 1, scale: 1.0 },
            ScoreFn::Power { k: 3, scale: -2.0 },
            ScoreFn::Polynomial {
                coefficients: vec![0.5, -1.0, 0.25, 2.0],
            },
        ] {
            let w = WeightSpec::from_score(c, WeightFn::constant(1.0), Threshold::Infinite {}).unwrap();
            w.check_score_derivative().unwrap();
        }
    }

    #[test]
    fn scaling_is_linear() {
        let q = WeightFn::SineNormalCdf {
            base: 1.0,
            amplitude: 0.5,
        };
        let w1 = WeightSpec::new(q.clone(), None).unwrap();
        let w2 = WeightSpec::new(q.scaled(2.0), None).unwrap();
        for (t, y) in [(0.3, -1.0), (1.2, 0.4)] {
            assert!((w2.q(t, y, 0.0) - 2.0 * w1.q(t, y, 0.0)).abs() < 1e-15);
        }
        assert_eq!(w2.bound(), 3.0);
    }

    #[test]
    fn serde_is_strict() {
        let ok: WeightSpec = toml::from_str("q = { kind = \"constant\", value = 1.0 }").unwrap();
        assert!(ok.q.is_constant(1.0));
        let unknown_field = toml::from_str::<WeightSpec>("q = { kind = \"constant\", value = 1.0, extra = 2 }");
        assert!(unknown_field.is_err());
        let unknown_kind = toml::from_str::<WeightSpec>("q = { kind = \"cubic\", value = 1.0 }");
        assert!(unknown_kind.is_err());
    }
}
