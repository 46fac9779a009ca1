//! Globally adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::special::CompensatedSum;

#[allow(clippy::excessive_precision)]
const KRONROD_NODES: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
// Gauss weights for the embedded 7-point rule (nodes are the odd Kronrod nodes).
#[allow(clippy::excessive_precision)]
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One application of the 15-point Kronrod rule and its embedded Gauss rule.
#[derive(Debug, Clone, Copy)]
pub struct RuleEstimate {
    pub kronrod: f64,
    pub gauss: f64,
    /// QUADPACK-style error estimate derived from |kronrod − gauss|.
    pub error: f64,
    pub finite: bool,
}

pub fn kronrod15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> RuleEstimate {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut values = [(0.0, 0.0); 7];
    let mut kronrod = fc * KRONROD_WEIGHTS[7];
    let mut gauss = fc * GAUSS_WEIGHTS[3];
    let mut abs_sum = fc.abs() * KRONROD_WEIGHTS[7];
    let mut finite = fc.is_finite();
    for i in 0..7 {
        let dx = half * KRONROD_NODES[i];
        let (lo, hi) = (f(centre - dx), f(centre + dx));
        values[i] = (lo, hi);
        finite &= lo.is_finite() && hi.is_finite();
        kronrod += KRONROD_WEIGHTS[i] * (lo + hi);
        abs_sum += KRONROD_WEIGHTS[i] * (lo.abs() + hi.abs());
        if i % 2 == 1 {
            gauss += GAUSS_WEIGHTS[i / 2] * (lo + hi);
        }
    }
    let mean = 0.5 * kronrod;
    let mut spread = KRONROD_WEIGHTS[7] * (fc - mean).abs();
    for (i, &(lo, hi)) in values.iter().enumerate() {
        spread += KRONROD_WEIGHTS[i] * ((lo - mean).abs() + (hi - mean).abs());
    }
    let (abs_sum, spread) = (abs_sum * half.abs(), spread * half.abs());
    let mut error = ((kronrod - gauss) * half).abs();
    if spread != 0.0 && error != 0.0 {
        error = spread * (200.0 * error / spread).powf(1.5).min(1.0);
    }
    if abs_sum > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * abs_sum);
    }
    RuleEstimate {
        kronrod: kronrod * half,
        gauss: gauss * half,
        error,
        finite,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self::new(1e-10)
    }
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

impl Quadrature {
    pub fn new(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol: 0.0,
            max_intervals: 4000,
        }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<Integral> {
        self.integrate_pieces(f, &[a, b])
    }

    /// Integrates over `[breaks[0], breaks[last]]`, starting from the given
    /// subintervals so that known discontinuities sit on interval edges.
    /// Out-of-order or repeated break points are tolerated.
    pub fn integrate_pieces<F: FnMut(f64) -> f64>(&self, mut f: F, breaks: &[f64]) -> Result<Integral> {
        let mut edges: Vec<f64> = breaks.iter().copied().filter(|x| x.is_finite()).collect();
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        if edges.len() < 2 {
            return Ok(Integral {
                value: 0.0,
                error: 0.0,
                evaluations: 0,
            });
        }
        let mut evaluations = 0;
        let mut heap = BinaryHeap::new();
        for w in edges.windows(2) {
            let piece = self.piece(&mut f, w[0], w[1])?;
            evaluations += 15;
            heap.push(piece);
        }
        loop {
            let error: f64 = heap.iter().map(|p| p.error).sum();
            let rough: f64 = heap.iter().map(|p| p.value).sum();
            let target = self.abs_tol.max(self.rel_tol * rough.abs());
            if error <= target {
                let value = ordered_total(&heap);
                return Ok(Integral {
                    value,
                    error,
                    evaluations,
                });
            }
            if heap.len() >= self.max_intervals {
                return Err(Error::Quadrature {
                    what: format!("{} subintervals exhausted", self.max_intervals),
                    achieved: error,
                    requested: target,
                });
            }
            let worst = heap.pop().expect("heap is non-empty");
            let mid = 0.5 * (worst.a + worst.b);
            if !(mid > worst.a && mid < worst.b) {
                return Err(Error::Quadrature {
                    what: format!("interval [{}, {}] cannot be bisected further", worst.a, worst.b),
                    achieved: error,
                    requested: target,
                });
            }
            heap.push(self.piece(&mut f, worst.a, mid)?);
            heap.push(self.piece(&mut f, mid, worst.b)?);
            evaluations += 30;
        }
    }

    fn piece<F: FnMut(f64) -> f64>(&self, f: &mut F, a: f64, b: f64) -> Result<Piece> {
        let est = kronrod15(f, a, b);
        if !est.finite {
            return Err(Error::Quadrature {
                what: format!("non-finite integrand on [{a}, {b}]"),
                achieved: f64::INFINITY,
                requested: self.abs_tol,
            });
        }
        Ok(Piece {
            a,
            b,
            value: est.kronrod,
            error: est.error,
        })
    }
}

// Left-to-right compensated total, independent of heap layout.
fn ordered_total(heap: &BinaryHeap<Piece>) -> f64 {
    let mut pieces: Vec<&Piece> = heap.iter().collect();
    pieces.sort_by(|x, y| x.a.total_cmp(&y.a));
    pieces.iter().map(|p| p.value).collect::<CompensatedSum>().value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_rule_is_exact_for_degree_22() {
        let sum_w: f64 = KRONROD_WEIGHTS[..7].iter().sum::<f64>() * 2.0 + KRONROD_WEIGHTS[7];
        assert!((sum_w - 2.0).abs() < 1e-15);
        for degree in 0..=22 {
            let est = kronrod15(&mut |x: f64| x.powi(degree), 0.0, 1.0);
            let exact = 1.0 / (degree as f64 + 1.0);
            assert!((est.kronrod - exact).abs() < 1e-14, "degree {degree}");
            if degree <= 13 {
                assert!((est.gauss - exact).abs() < 1e-14, "gauss degree {degree}");
            }
        }
    }

    #[test]
    fn adaptive_handles_kinks_and_jumps() {
        let q = Quadrature::new(1e-12);
        let kink = q.integrate(|x: f64| (x - 0.3).abs(), 0.0, 1.0).unwrap();
        assert!((kink.value - (0.045 + 0.245)).abs() < 1e-12);
        let jump = q
            .integrate(|x: f64| if x <= 0.37 { 1.0 } else { 0.0 }, 0.0, 1.0)
            .unwrap();
        assert!((jump.value - 0.37).abs() < 1e-12);
        let split = q
            .integrate_pieces(|x: f64| if x <= 0.37 { 1.0 } else { 0.0 }, &[0.0, 0.37, 1.0])
            .unwrap();
        assert!((split.value - 0.37).abs() < 1e-15);
        assert_eq!(split.evaluations, 30);
    }

    #[test]
    fn endpoint_singularity_converges() {
        let q = Quadrature::new(1e-10);
        let r = q.integrate(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0).unwrap();
        assert!((r.value - 2.0).abs() < 1e-9);
    }

    #[test]
    fn non_convergence_is_reported() {
        let q = Quadrature {
            abs_tol: 1e-14,
            rel_tol: 0.0,
            max_intervals: 3,
        };
        let err = q.integrate(|x: f64| (40.0 * x).sin(), 0.0, 10.0).unwrap_err();
        assert!(matches!(err, Error::Quadrature { .. }));
    }
}
