//! Deterministic limit quantities by adaptive quadrature.
//!
//! Integrals against dG_t are never taken in y. Uniform marginals are
//! integrated in probability scale p = G_t(y), where dG_t is Lebesgue measure on
//! (0, 1). Gaussian marginals are integrated in the normal score z with
//! y = μ + σz and weight φ(z) on [−9, 9]; the neglected mass is below 3e-19
//! and the integrands stay analytic, where in p they would carry power
//! singularities at both ends. Bivariate expectations are taken under the
//! copula of (Y(t), Y(s)).

mod surface;
mod tightness;

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::model::{Copula, ModelSpec, WeightSpec};
use crate::quadrature::Quadrature;
use crate::special::{compensated_sum, norm_cdf, norm_pdf};

pub use surface::{CovarianceSurface, SurfaceKind};
pub use tightness::{IncrementPair, TightnessReport};

/// Default absolute tolerance of one-dimensional integrals.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

const TAIL_PANELS: usize = 64;
const SCORE_LIMIT: f64 = 9.0;

/// Quadrature engine bound to one model.
#[derive(Debug, Clone)]
pub struct Oracle {
    model: ModelSpec,
    tol: f64,
}

/// Integration variable x of one time slice.
#[derive(Debug, Clone, Copy)]
enum Scale {
    /// x = p = G_t(y) on [0, 1].
    Probability,
    /// y = mean + sd·x, x on [−9, 9] with density φ.
    Normal { mean: f64, sd: f64 },
}

impl Scale {
    fn domain(self) -> (f64, f64) {
        match self {
            Scale::Probability => (0.0, 1.0),
            Scale::Normal { .. } => (-SCORE_LIMIT, SCORE_LIMIT),
        }
    }

    #[inline]
    fn density(self, x: f64) -> f64 {
        match self {
            Scale::Probability => 1.0,
            Scale::Normal { .. } => norm_pdf(x),
        }
    }

    /// Breakpoints in x, including the domain ends.
    fn breaks(self, model: &ModelSpec, t: f64, ys: &[f64]) -> Vec<f64> {
        let (lo, hi) = self.domain();
        let mut b = vec![lo, hi];
        b.extend(
            ys.iter()
                .map(|&y| match self {
                    Scale::Probability => model.marginal_cdf(t, y),
                    Scale::Normal { mean, sd } => (y - mean) / sd,
                })
                .filter(|&x| x > lo && x < hi),
        );
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }
}

type Integrand<'a> = &'a (dyn Fn(f64) -> f64 + Sync);

impl Oracle {
    pub fn new(model: ModelSpec) -> Result<Self> {
        Self::with_tolerance(model, DEFAULT_TOLERANCE)
    }

    pub fn with_tolerance(model: ModelSpec, tol: f64) -> Result<Self> {
        model.validate()?;
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::config(format!("oracle tolerance must be positive, got {tol}")));
        }
        Ok(Self { model, tol })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    fn quad(&self) -> Quadrature {
        Quadrature::new(self.tol)
    }

    /// Precomputes A_t, E_t G_t q_t and (with a score block) η(t) at one time.
    pub(crate) fn slice<'a>(&'a self, weights: &'a WeightSpec, t: f64) -> Result<Slice<'a>> {
        self.model.check_time(t)?;
        weights.validate()?;
        let scale = match self.model.gaussian_sd(t) {
            Some((mean, sd)) => Scale::Normal { mean, sd },
            None => Scale::Probability,
        };
        let mut slice = Slice {
            model: &self.model,
            weights,
            t,
            scale,
            q_breaks: scale.breaks(&self.model, t, &weights.q_breakpoints(t)),
            tail: TailTable::default(),
            theta: 0.0,
            g_breaks: Vec::new(),
            eta: None,
        };
        slice.tail = TailTable::build(&|x| slice.q(x) * scale.density(x), &slice.q_breaks, self.tol * 1e-2)?;
        let quad = self.quad();
        slice.theta = quad
            .integrate_pieces(|x| slice.p(x) * slice.q(x) * scale.density(x), &slice.q_breaks)?
            .value;
        if let Some(score) = &weights.score {
            slice.g_breaks = scale.breaks(&self.model, t, &score.breakpoints(t));
            slice.eta = Some(
                quad.integrate_pieces(|x| slice.g(x) * scale.density(x), &slice.g_breaks)?
                    .value,
            );
        }
        Ok(slice)
    }

    /// lim E β*_n(t) = ∫q_t dG_t − ∫q_t G_t dG_t.
    pub fn mean_limit(&self, weights: &WeightSpec, t: f64) -> Result<f64> {
        let s = self.slice(weights, t)?;
        Ok(s.tail.total() - s.theta)
    }

    /// E_t G_t q_t = ∫ G_t q_t dG_t.
    pub fn theta(&self, weights: &WeightSpec, t: f64) -> Result<f64> {
        Ok(self.slice(weights, t)?.theta)
    }

    /// c₂(t) = ∫ A_t(u)² dG_t(u) with A_t(u) = ∫_{x ≥ u} q_t dG_t.
    pub fn c2(&self, weights: &WeightSpec, t: f64) -> Result<f64> {
        let s = self.slice(weights, t)?;
        let tail = s.tail_fn();
        let value = self.comonotone(&s, &tail, &s.q_breaks, &tail, &s.q_breaks)?;
        Ok(value)
    }

    /// J(t) = ∫ c(G_t) q₁ dG_t.
    pub fn j_limit(&self, weights: &WeightSpec, t: f64) -> Result<f64> {
        weights.score()?;
        Ok(self.slice(weights, t)?.eta.expect("score block present"))
    }

    /// g(q, t, s) = E[A_t(U_t) A_s(U_s)].
    pub fn g_cross(&self, weights_t: &WeightSpec, weights_s: &WeightSpec, t: f64, s: f64) -> Result<f64> {
        let a = self.slice(weights_t, t)?;
        let b = self.slice(weights_s, s)?;
        self.tail_product(&a, &b)
    }

    /// Γ₁(t, s) = g(q, t, s) − (E_t G_t q_t)(E_s G_s q_s).
    pub fn gamma1_cov(&self, weights: &WeightSpec, t: f64, s: f64) -> Result<f64> {
        let a = self.slice(weights, t)?;
        let b = self.slice(weights, s)?;
        self.gamma1_slices(&a, &b)
    }

    /// Γ₂(t, s) = E[(g_t(Y(t)) − η(t))(g_s(Y(s)) − η(s))].
    pub fn gamma2_cov(&self, weights: &WeightSpec, t: f64, s: f64) -> Result<f64> {
        weights.score()?;
        let a = self.slice(weights, t)?;
        let b = self.slice(weights, s)?;
        self.gamma2_slices(&a, &b)
    }

    /// γ₁(t, s) = lim Cov(α_n(t), β_n(s)) = E[(g_t(Y(t)) − η(t)) A_s(Y(s))].
    pub fn gamma1_cross(&self, weights: &WeightSpec, t: f64, s: f64) -> Result<f64> {
        weights.score()?;
        let a = self.slice(weights, t)?;
        let b = self.slice(weights, s)?;
        self.cross_slices(&a, &b)
    }

    /// γ(t, s) = γ₁(t, s) + γ₁(s, t).
    pub fn cross_cov(&self, weights: &WeightSpec, t: f64, s: f64) -> Result<f64> {
        weights.score()?;
        let a = self.slice(weights, t)?;
        let b = self.slice(weights, s)?;
        Ok(self.cross_slices(&a, &b)? + self.cross_slices(&b, &a)?)
    }

    /// Γ = Γ₁ + Γ₂ + γ, the covariance of the limit of γ_n = α_n + β_n.
    pub fn gamma_total(&self, weights: &WeightSpec, t: f64, s: f64) -> Result<f64> {
        weights.score()?;
        let a = self.slice(weights, t)?;
        let b = self.slice(weights, s)?;
        self.total_slices(&a, &b)
    }

    /// Γ₃(t, s) = lim Cov(β_{n,1}(t), β_{n,2}(s)) = E[A¹_t A²_s] − θ¹_t θ²_s.
    pub fn gamma3_cov(&self, weights1: &WeightSpec, weights2: &WeightSpec, t: f64, s: f64) -> Result<f64> {
        let a = self.slice(weights1, t)?;
        let b = self.slice(weights2, s)?;
        self.gamma1_slices(&a, &b)
    }

    /// Γ₃(t, s) + Γ₃(s, t): the two-term split with one centering per term.
    pub fn gamma3_symmetrized(&self, weights1: &WeightSpec, weights2: &WeightSpec, t: f64, s: f64) -> Result<f64> {
        Ok(self.gamma3_cov(weights1, weights2, t, s)? + self.gamma3_cov(weights1, weights2, s, t)?)
    }

    /// Limit variance of β_n(t) − β_n(s).
    pub fn increment_variance(&self, weights: &WeightSpec, t: f64, s: f64) -> Result<f64> {
        let a = self.slice(weights, t)?;
        let b = self.slice(weights, s)?;
        self.increment_slices(&a, &b)
    }

    pub(crate) fn gamma1_slices(&self, a: &Slice, b: &Slice) -> Result<f64> {
        Ok(self.tail_product(a, b)? - a.theta * b.theta)
    }

    pub(crate) fn gamma2_slices(&self, a: &Slice, b: &Slice) -> Result<f64> {
        let (ea, eb) = (a.eta_required()?, b.eta_required()?);
        self.expectation(a, &|x| a.g(x) - ea, &a.g_breaks, b, &|x| b.g(x) - eb, &b.g_breaks)
    }

    pub(crate) fn cross_slices(&self, a: &Slice, b: &Slice) -> Result<f64> {
        let ea = a.eta_required()?;
        self.expectation(a, &|x| a.g(x) - ea, &a.g_breaks, b, &b.tail_fn(), &b.q_breaks)
    }

    pub(crate) fn total_slices(&self, a: &Slice, b: &Slice) -> Result<f64> {
        let parts = [
            self.gamma1_slices(a, b)?,
            self.gamma2_slices(a, b)?,
            self.cross_slices(a, b)?,
            self.cross_slices(b, a)?,
        ];
        Ok(compensated_sum(parts))
    }

    pub(crate) fn increment_slices(&self, a: &Slice, b: &Slice) -> Result<f64> {
        if a.t == b.t {
            return Ok(0.0);
        }
        let parts = [
            self.gamma1_slices(a, a)?,
            self.gamma1_slices(b, b)?,
            -2.0 * self.gamma1_slices(a, b)?,
        ];
        Ok(compensated_sum(parts))
    }

    fn tail_product(&self, a: &Slice, b: &Slice) -> Result<f64> {
        self.expectation(a, &a.tail_fn(), &a.q_breaks, b, &b.tail_fn(), &b.q_breaks)
    }

    /// E[f(X_t) h(X_s)] with X the integration variables of the two slices,
    /// jointly distributed through the copula of (Y(t), Y(s)).
    fn expectation(
        &self,
        a: &Slice,
        f: Integrand,
        f_breaks: &[f64],
        b: &Slice,
        h: Integrand,
        h_breaks: &[f64],
    ) -> Result<f64> {
        match self.model.copula(a.t, b.t) {
            Copula::Comonotone {} => self.comonotone(a, f, f_breaks, h, h_breaks),
            Copula::Independent {} => Ok(self.marginal(a, f, f_breaks)? * self.marginal(b, h, h_breaks)?),
            Copula::Gaussian { rho } => self.gaussian(rho, a, f, f_breaks, h, h_breaks),
        }
    }

    fn marginal(&self, a: &Slice, f: Integrand, breaks: &[f64]) -> Result<f64> {
        Ok(self
            .quad()
            .integrate_pieces(|x| f(x) * a.scale.density(x), breaks)?
            .value)
    }

    // Both slices share one marginal family, so equal probabilities mean equal x.
    fn comonotone(&self, a: &Slice, f: Integrand, f_breaks: &[f64], h: Integrand, h_breaks: &[f64]) -> Result<f64> {
        let breaks: Vec<f64> = f_breaks.iter().chain(h_breaks).copied().collect();
        Ok(self
            .quad()
            .integrate_pieces(|x| f(x) * h(x) * a.scale.density(x), &breaks)?
            .value)
    }

    /// Normal scores: given Z_t = z, Z_s = ρz + √(1−ρ²)·W with W standard normal.
    fn gaussian(
        &self,
        rho: f64,
        a: &Slice,
        f: Integrand,
        f_breaks: &[f64],
        h: Integrand,
        h_breaks: &[f64],
    ) -> Result<f64> {
        if rho >= 1.0 - 1e-15 {
            return self.comonotone(a, f, f_breaks, h, h_breaks);
        }
        if rho.abs() < 1e-15 {
            return Ok(self.marginal(a, f, f_breaks)? * self.marginal(a, h, h_breaks)?);
        }
        let sigma = (1.0 - rho * rho).sqrt();
        let inner_quad = Quadrature::new(self.tol * 0.1);
        let inner_breaks: Vec<f64> = h_breaks.iter().copied().filter(|b| b.abs() < SCORE_LIMIT).collect();
        let failure: RefCell<Option<Error>> = RefCell::new(None);
        let outer = |z: f64| {
            let fz = f(z);
            if fz == 0.0 {
                return 0.0;
            }
            let centre = rho * z;
            let mut breaks = vec![-SCORE_LIMIT, SCORE_LIMIT];
            breaks.extend(
                inner_breaks
                    .iter()
                    .map(|b| (b - centre) / sigma)
                    .filter(|w| w.abs() < SCORE_LIMIT),
            );
            let inner = inner_quad.integrate_pieces(|w| h(centre + sigma * w) * norm_pdf(w), &breaks);
            match inner {
                Ok(i) => fz * norm_pdf(z) * i.value,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            }
        };
        let result = self.quad().integrate_pieces(outer, f_breaks);
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        Ok(result?.value)
    }
}

/// Weight data at one time point, in that slice's integration scale.
pub(crate) struct Slice<'a> {
    model: &'a ModelSpec,
    weights: &'a WeightSpec,
    pub(crate) t: f64,
    scale: Scale,
    q_breaks: Vec<f64>,
    tail: TailTable,
    pub(crate) theta: f64,
    g_breaks: Vec<f64>,
    pub(crate) eta: Option<f64>,
}

impl Slice<'_> {
    #[inline]
    fn y(&self, x: f64) -> f64 {
        match self.scale {
            Scale::Probability => self.model.quantile_unchecked(self.t, x),
            Scale::Normal { mean, sd } => mean + sd * x,
        }
    }

    #[inline]
    fn p(&self, x: f64) -> f64 {
        match self.scale {
            Scale::Probability => x,
            Scale::Normal { .. } => norm_cdf(x),
        }
    }

    #[inline]
    fn q(&self, x: f64) -> f64 {
        self.weights.q(self.t, self.y(x), self.p(x))
    }

    #[inline]
    fn g(&self, x: f64) -> f64 {
        match &self.weights.score {
            Some(score) => score.g(self.t, self.y(x), self.p(x)),
            None => 0.0,
        }
    }

    fn eta_required(&self) -> Result<f64> {
        self.eta
            .ok_or_else(|| Error::config("weights have no score block (c, q0, Z); η is undefined"))
    }

    fn tail(&self, x: f64) -> f64 {
        self.tail.eval(x)
    }

    fn tail_fn(&self) -> impl Fn(f64) -> f64 + Sync + '_ {
        move |x| self.tail(x)
    }
}

const CHEB_DEGREE: usize = 16;
const MAX_PANEL_SPLITS: usize = 40;

/// Piecewise Chebyshev interpolant of x ↦ ∫_x^end f on panels whose edges
/// include every breakpoint of f, so the tail is smooth inside each panel.
#[derive(Debug, Clone, Default)]
struct TailTable {
    lo: f64,
    hi: f64,
    edges: Vec<f64>,
    // Chebyshev–Lobatto nodes of each panel (from right to left) and the tail there
    nodes: Vec<[f64; CHEB_DEGREE + 1]>,
    values: Vec<[f64; CHEB_DEGREE + 1]>,
}

impl TailTable {
    fn build(f: &dyn Fn(f64) -> f64, breaks: &[f64], tol: f64) -> Result<Self> {
        let lo = breaks[0];
        let hi = *breaks.last().expect("domain has two ends");
        let mut edges: Vec<f64> = (0..=TAIL_PANELS)
            .map(|k| lo + (hi - lo) * k as f64 / TAIL_PANELS as f64)
            .collect();
        edges.extend(breaks);
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        let quad = Quadrature::new(tol * 0.1);
        let check = |a: f64, b: f64, values: &[f64; CHEB_DEGREE + 1], right: f64| -> Result<bool> {
            for u in [0.37, -0.81] {
                let x = 0.5 * (a + b) + 0.5 * (b - a) * u;
                let direct = right + quad.integrate(f, x, b)?.value;
                if (barycentric(&cheb_nodes(a, b), values, x) - direct).abs() > tol {
                    return Ok(false);
                }
            }
            Ok(true)
        };
        // Panels are filled right to left so each knows the tail at its right edge.
        let mut panels: Vec<(f64, f64, [f64; CHEB_DEGREE + 1])> = Vec::new();
        let mut right = 0.0;
        let mut pending: Vec<(f64, f64, usize)> = edges.windows(2).map(|w| (w[0], w[1], 0)).collect();
        while let Some((a, b, depth)) = pending.pop() {
            let nodes = cheb_nodes(a, b);
            let mut values = [right; CHEB_DEGREE + 1];
            for j in 1..=CHEB_DEGREE {
                values[j] = right + quad.integrate(f, nodes[j], b)?.value;
            }
            if !check(a, b, &values, right)? {
                let mid = 0.5 * (a + b);
                if depth < MAX_PANEL_SPLITS && mid > a && mid < b {
                    pending.push((a, mid, depth + 1));
                    pending.push((mid, b, depth + 1));
                    continue;
                }
                return Err(Error::Quadrature {
                    what: format!("tail interpolant does not converge on [{a}, {b}]"),
                    achieved: f64::NAN,
                    requested: tol,
                });
            }
            right = values[CHEB_DEGREE];
            panels.push((a, b, values));
        }
        panels.reverse();
        let mut table = TailTable {
            lo,
            hi,
            edges: Vec::with_capacity(panels.len() + 1),
            nodes: Vec::with_capacity(panels.len()),
            values: Vec::with_capacity(panels.len()),
        };
        for (a, b, v) in &panels {
            table.edges.push(*a);
            table.nodes.push(cheb_nodes(*a, *b));
            table.values.push(*v);
        }
        table.edges.push(hi);
        Ok(table)
    }

    fn total(&self) -> f64 {
        self.values.first().map_or(0.0, |v| v[CHEB_DEGREE])
    }

    #[inline]
    fn eval(&self, x: f64) -> f64 {
        if x >= self.hi {
            return 0.0;
        }
        if x <= self.lo {
            return self.total();
        }
        let k = self.edges.partition_point(|&e| e <= x) - 1;
        barycentric(&self.nodes[k], &self.values[k], x)
    }
}

/// Chebyshev–Lobatto nodes on [a, b], ordered from b down to a.
fn cheb_nodes(a: f64, b: f64) -> [f64; CHEB_DEGREE + 1] {
    let mut x = [0.0; CHEB_DEGREE + 1];
    for (j, node) in x.iter_mut().enumerate() {
        let c = (std::f64::consts::PI * j as f64 / CHEB_DEGREE as f64).cos();
        *node = 0.5 * (a + b) + 0.5 * (b - a) * c;
    }
    x[0] = b;
    x[CHEB_DEGREE] = a;
    x
}

#[inline]
fn barycentric(nodes: &[f64; CHEB_DEGREE + 1], values: &[f64; CHEB_DEGREE + 1], x: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..=CHEB_DEGREE {
        let d = x - nodes[j];
        if d == 0.0 {
            return values[j];
        }
        let mut w = if j % 2 == 0 { 1.0 } else { -1.0 } / d;
        if j == 0 || j == CHEB_DEGREE {
            w *= 0.5;
        }
        num += w * values[j];
        den += w;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Marginal, ScoreFn, Threshold, WeightFn};
    use crate::special::{bvn_cdf, norm_quantile};
    use std::f64::consts::PI;

    fn uniform() -> Oracle {
        Oracle::new(ModelSpec::comonotone_uniform()).unwrap()
    }

    fn identity_weight() -> WeightSpec {
        WeightSpec::new(
            WeightFn::Polynomial {
                coefficients: vec![0.0, 1.0],
                lower: 0.0,
                upper: 1.0,
            },
            None,
        )
        .unwrap()
    }

    fn score(c: ScoreFn, z: Threshold) -> WeightSpec {
        WeightSpec::from_score(c, WeightFn::constant(1.0), z).unwrap()
    }

    #[test]
    fn mean_limit_examples() {
        let o = uniform();
        assert!((o.mean_limit(&WeightSpec::constant(1.0), 0.5).unwrap() - 0.5).abs() < 1e-9);
        assert_eq!(o.mean_limit(&WeightSpec::constant(0.0), 0.5).unwrap(), 0.0);
        assert!((o.mean_limit(&identity_weight(), 0.5).unwrap() - 1.0 / 6.0).abs() < 1e-9);
        let bm = Oracle::new(ModelSpec::Brownian {}).unwrap();
        assert!((bm.mean_limit(&WeightSpec::constant(1.0), 0.3).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn c2_examples() {
        let o = uniform();
        assert!((o.c2(&WeightSpec::constant(1.0), 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-9);
        assert_eq!(o.c2(&WeightSpec::constant(0.0), 1.0).unwrap(), 0.0);
        assert!((o.c2(&WeightSpec::constant(2.0), 1.0).unwrap() - 4.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn g_cross_examples() {
        let one = WeightSpec::constant(1.0);
        let o = uniform();
        assert!((o.g_cross(&one, &one, 0.2, 0.9).unwrap() - 1.0 / 3.0).abs() < 1e-8);
        let field = Oracle::new(ModelSpec::IndependentField {
            marginal: Marginal::standard_uniform(),
        })
        .unwrap();
        assert!((field.g_cross(&one, &one, 0.2, 0.9).unwrap() - 0.25).abs() < 1e-8);
        let bm = Oracle::new(ModelSpec::Brownian {}).unwrap();
        let w = WeightSpec::new(
            WeightFn::SineNormalCdf {
                base: 1.0,
                amplitude: 0.5,
            },
            None,
        )
        .unwrap();
        let diag = bm.g_cross(&w, &w, 0.7, 0.7).unwrap();
        assert!((diag - bm.c2(&w, 0.7).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn gamma1_examples() {
        let one = WeightSpec::constant(1.0);
        assert!((uniform().gamma1_cov(&one, 0.5, 0.5).unwrap() - 1.0 / 12.0).abs() < 1e-9);
        let field = Oracle::new(ModelSpec::IndependentField {
            marginal: Marginal::standard_uniform(),
        })
        .unwrap();
        assert!(field.gamma1_cov(&one, 0.3, 0.6).unwrap().abs() < 1e-9);
        assert!((field.increment_variance(&one, 0.3, 0.6).unwrap() - 1.0 / 6.0).abs() < 1e-9);
        assert_eq!(uniform().gamma1_cov(&WeightSpec::constant(0.0), 0.3, 0.6).unwrap(), 0.0);
        assert!(
            uniform()
                .increment_variance(&identity_weight(), 0.3, 0.6)
                .unwrap()
                .abs()
                < 1e-9
        );
    }

    #[test]
    fn ou_gamma1_matches_arcsine_law() {
        // q ≡ 1: Γ₁ = Cov(1 − U, 1 − V) = arcsin(ρ/2) / (2π) for a Gaussian copula.
        let o = Oracle::new(ModelSpec::StationaryOu { rho: 1.0 }).unwrap();
        let one = WeightSpec::constant(1.0);
        for (t, s) in [(0.5f64, 0.55), (0.5, 0.9), (0.2, 1.7), (1.0, 4.0)] {
            let r = (-(t - s).abs()).exp();
            let exact = (r / 2.0).asin() / (2.0 * PI);
            let got = o.gamma1_cov(&one, t, s).unwrap();
            assert!((got - exact).abs() < 1e-9, "({t},{s}): {got} vs {exact}");
        }
    }

    /// E[A_t(U) A_s(V)] = ∬ q_t(x) q_s(y) C(x, y) dx dy, integrated against the
    /// bivariate normal CDF rather than through conditional quantiles.
    fn g_by_copula_cdf(model: &ModelSpec, w: &WeightSpec, t: f64, s: f64) -> f64 {
        let Copula::Gaussian { rho } = model.copula(t, s) else {
            panic!("gaussian copula expected")
        };
        let q = |tt: f64, p: f64| {
            let y = model.quantile_unchecked(tt, p);
            w.q(tt, y, p)
        };
        let quad = Quadrature::new(1e-10);
        quad.integrate(
            |x| {
                let zx = norm_quantile(x);
                let inner = quad
                    .integrate(|y| q(s, y) * bvn_cdf(zx, norm_quantile(y), rho), 0.0, 1.0)
                    .unwrap()
                    .value;
                q(t, x) * inner
            },
            0.0,
            1.0,
        )
        .unwrap()
        .value
    }

    #[test]
    fn gaussian_route_agrees_with_copula_cdf_route() {
        let w = WeightSpec::new(
            WeightFn::SineNormalCdf {
                base: 0.5,
                amplitude: 1.0,
            },
            None,
        )
        .unwrap();
        for (model, t, s) in [
            (ModelSpec::Brownian {}, 0.3, 0.8),
            (ModelSpec::StationaryOu { rho: 0.5 }, 1.0, 1.2),
        ] {
            let o = Oracle::new(model.clone()).unwrap();
            let got = o.g_cross(&w, &w, t, s).unwrap();
            let reference = g_by_copula_cdf(&model, &w, t, s);
            assert!((got - reference).abs() < 1e-8, "{got} vs {reference}");
        }
    }

    #[test]
    fn j_limit_examples() {
        let o = uniform();
        let one = score(ScoreFn::Constant { value: 1.0 }, Threshold::Infinite {});
        assert!((o.j_limit(&one, 0.5).unwrap() - 1.0).abs() < 1e-9);
        let lin = score(ScoreFn::Power { k: 1, scale: 1.0 }, Threshold::Infinite {});
        assert!((o.j_limit(&lin, 0.5).unwrap() - 0.5).abs() < 1e-9);
        let cut = score(ScoreFn::Constant { value: 1.0 }, Threshold::Constant { value: 0.3 });
        assert!((o.j_limit(&cut, 0.5).unwrap() - 0.3).abs() < 1e-9);
        assert!(matches!(
            o.j_limit(&WeightSpec::constant(1.0), 0.5),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn gamma2_examples() {
        let o = uniform();
        let lin = score(ScoreFn::Power { k: 1, scale: 1.0 }, Threshold::Infinite {});
        // Var(U) for g(y) = y.
        assert!((o.gamma2_cov(&lin, 0.4, 0.4).unwrap() - 1.0 / 12.0).abs() < 1e-9);
        let flat = score(ScoreFn::Constant { value: 1.0 }, Threshold::Infinite {});
        assert!(o.gamma2_cov(&flat, 0.4, 0.8).unwrap().abs() < 1e-9);
        let field = Oracle::new(ModelSpec::IndependentField {
            marginal: Marginal::standard_uniform(),
        })
        .unwrap();
        assert!(field.gamma2_cov(&lin, 0.4, 0.8).unwrap().abs() < 1e-9);
    }

    #[test]
    fn cross_covariance_closed_forms() {
        let o = uniform();
        let flat = score(ScoreFn::Constant { value: 1.0 }, Threshold::Infinite {});
        assert!(o.gamma1_cross(&flat, 0.4, 0.8).unwrap().abs() < 1e-9);
        // g(y) = y with q ≡ c′ = 1: γ₁ = E[(U − 1/2)(1 − U)] = −1/12, so Γ = 1/12 + 1/12 − 1/6 = 0.
        let lin = score(ScoreFn::Power { k: 1, scale: 1.0 }, Threshold::Infinite {});
        assert!((o.gamma1_cross(&lin, 0.4, 0.4).unwrap() + 1.0 / 12.0).abs() < 1e-9);
        assert!((o.cross_cov(&lin, 0.4, 0.8).unwrap() + 1.0 / 6.0).abs() < 1e-9);
        assert!(o.gamma_total(&lin, 0.4, 0.8).unwrap().abs() < 1e-9);
        // Truncated at Z = 1/2: g = u·1(u ≤ ½), q = 1(u ≤ ½), A(u) = (½ − u)⁺, η = 1/8.
        let cut = score(ScoreFn::Power { k: 1, scale: 1.0 }, Threshold::Constant { value: 0.5 });
        let exact = {
            // ∫₀^½ (u − 1/8)(½ − u) du
            let f = |u: f64| -u * u * u / 3.0 + (0.5 + 0.125) * u * u / 2.0 - 0.0625 * u;
            f(0.5) - f(0.0)
        };
        assert!((o.gamma1_cross(&cut, 0.3, 0.3).unwrap() - exact).abs() < 1e-10);
    }

    #[test]
    fn gamma3_examples() {
        let o = uniform();
        let one = WeightSpec::constant(1.0);
        assert!((o.gamma3_cov(&one, &one, 0.5, 0.5).unwrap() - 1.0 / 12.0).abs() < 1e-9);
        assert_eq!(o.gamma3_cov(&one, &WeightSpec::constant(0.0), 0.2, 0.5).unwrap(), 0.0);
        let bm = Oracle::new(ModelSpec::Brownian {}).unwrap();
        let w1 = WeightSpec::new(
            WeightFn::SineNormalCdf {
                base: 1.0,
                amplitude: 1.0,
            },
            None,
        )
        .unwrap();
        let w2 = WeightSpec::new(
            WeightFn::SineNormalCdf {
                base: -2.5,
                amplitude: -2.5,
            },
            None,
        )
        .unwrap();
        let g1 = bm.gamma1_cov(&w1, 0.4, 0.9).unwrap();
        let g3 = bm.gamma3_cov(&w1, &w2, 0.4, 0.9).unwrap();
        assert!((g3 + 2.5 * g1).abs() < 1e-8);
        let sym = bm.gamma3_symmetrized(&w1, &w2, 0.4, 0.9).unwrap();
        assert!((sym - g3 - bm.gamma3_cov(&w1, &w2, 0.9, 0.4).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn halving_tolerance_is_consistent() {
        let w = WeightSpec::new(
            WeightFn::Polynomial {
                coefficients: vec![1.0, 0.5, -0.3],
                lower: -1.0,
                upper: 1.5,
            },
            None,
        )
        .unwrap();
        for model in [ModelSpec::Brownian {}, ModelSpec::StationaryOu { rho: 1.0 }] {
            let coarse = Oracle::with_tolerance(model.clone(), 1e-9).unwrap();
            let fine = Oracle::with_tolerance(model, 5e-10).unwrap();
            for (t, s) in [(0.5, 0.5), (0.5, 0.7), (0.9, 1.4)] {
                let a = coarse.gamma1_cov(&w, t, s).unwrap();
                let b = fine.gamma1_cov(&w, t, s).unwrap();
                assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn tail_table_matches_closed_forms() {
        // q(y) = y on a uniform marginal: A(p) = (1 − p²) / 2.
        let o = uniform();
        let w = identity_weight();
        let s = o.slice(&w, 0.5).unwrap();
        for k in 0..=200 {
            let p = k as f64 / 200.0 + 1e-3 * (k as f64).sin();
            let p = p.clamp(0.0, 1.0);
            assert!((s.tail(p) - (1.0 - p * p) / 2.0).abs() < 1e-12, "p = {p}");
        }
        // q ≡ 1 on a normal score scale: A(z) = 1 − Φ(z); q = 1(y ≤ 0.3) adds a kink.
        let bm = Oracle::new(ModelSpec::Brownian {}).unwrap();
        let one = WeightSpec::constant(1.0);
        let ind = WeightSpec::new(
            WeightFn::Indicator {
                threshold: 0.3,
                value: 1.0,
            },
            None,
        )
        .unwrap();
        let (a, b) = (bm.slice(&one, 0.25).unwrap(), bm.slice(&ind, 0.25).unwrap());
        let cut = 0.3 / 0.5;
        for k in 0..=300 {
            let z = -8.9 + 17.8 * k as f64 / 300.0;
            assert!((a.tail(z) - norm_cdf(-z)).abs() < 1e-12);
            let exact = (norm_cdf(cut) - norm_cdf(z)).max(0.0);
            assert!((b.tail(z) - exact).abs() < 1e-12, "z = {z}");
        }
    }

    #[test]
    fn oracle_rejects_bad_times() {
        let bm = Oracle::new(ModelSpec::Brownian {}).unwrap();
        assert!(bm.c2(&WeightSpec::constant(1.0), 0.0).is_err());
    }
}
