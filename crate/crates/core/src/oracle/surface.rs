use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Oracle, Slice};
use crate::error::{Error, Result};
use crate::model::{TimeGrid, WeightSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SurfaceKind {
    /// Covariance of the limit of β_n.
    Gamma1,
    /// Covariance of the limit of α_n.
    Gamma2,
    /// Cross-covariance of two weighted processes β_{n,1}(t), β_{n,2}(s).
    Gamma3,
    /// Covariance of the limit of γ_n = α_n + β_n.
    GammaTotal,
    /// γ(t, s) = γ₁(t, s) + γ₁(s, t).
    CrossGamma,
}

impl SurfaceKind {
    pub fn name(self) -> &'static str {
        match self {
            SurfaceKind::Gamma1 => "Gamma1",
            SurfaceKind::Gamma2 => "Gamma2",
            SurfaceKind::Gamma3 => "Gamma3",
            SurfaceKind::GammaTotal => "GammaTotal",
            SurfaceKind::CrossGamma => "CrossGamma",
        }
    }

    pub fn is_symmetric(self) -> bool {
        self != SurfaceKind::Gamma3
    }

    fn needs_score(self) -> bool {
        matches!(
            self,
            SurfaceKind::Gamma2 | SurfaceKind::GammaTotal | SurfaceKind::CrossGamma
        )
    }
}

/// A covariance function tabulated on a grid; `values[i][j]` is at (t_i, t_j).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceSurface {
    pub grid: TimeGrid,
    pub values: Vec<Vec<f64>>,
    pub kind: SurfaceKind,
}

impl CovarianceSurface {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn max_asymmetry(&self) -> f64 {
        let m = self.values.len();
        let mut worst = 0.0_f64;
        for i in 0..m {
            for j in 0..i {
                worst = worst.max((self.values[i][j] - self.values[j][i]).abs());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the symmetric part.
    pub fn min_eigenvalue(&self) -> f64 {
        let m = self.values.len();
        let matrix = nalgebra::DMatrix::from_fn(m, m, |i, j| 0.5 * (self.values[i][j] + self.values[j][i]));
        matrix
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Long-format rows (t, s, value).
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let points = self.grid.points();
        self.values
            .iter()
            .enumerate()
            .flat_map(move |(i, row)| row.iter().enumerate().map(move |(j, &v)| (points[i], points[j], v)))
    }
}

impl Oracle {
    /// Fills a surface on `grid`; `weights2` is the second family for Gamma3.
    /// Cells are computed in parallel and placed by index, so the result does
    /// not depend on scheduling.
    pub fn surface(
        &self,
        kind: SurfaceKind,
        grid: &TimeGrid,
        weights: &WeightSpec,
        weights2: Option<&WeightSpec>,
    ) -> Result<CovarianceSurface> {
        self.model().check_grid(grid)?;
        if kind.needs_score() {
            weights.score()?;
        }
        let second = match (kind, weights2) {
            (SurfaceKind::Gamma3, Some(w)) => w,
            (SurfaceKind::Gamma3, None) => return Err(Error::config("Gamma3 surface needs a second weight family")),
            _ => weights,
        };
        let points = grid.points();
        let m = points.len();
        let first: Vec<Slice> = points
            .par_iter()
            .map(|&t| self.slice(weights, t))
            .collect::<Result<_>>()?;
        let other: Vec<Slice> = if kind == SurfaceKind::Gamma3 {
            points
                .par_iter()
                .map(|&t| self.slice(second, t))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let cells: Vec<(usize, usize)> = (0..m)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .filter(|&(i, j)| !kind.is_symmetric() || kind == SurfaceKind::CrossGamma || i <= j)
            .collect();
        let computed: Vec<f64> = cells
            .par_iter()
            .map(|&(i, j)| {
                let (a, b) = (&first[i], &first[j]);
                match kind {
                    SurfaceKind::Gamma1 => self.gamma1_slices(a, b),
                    SurfaceKind::Gamma2 => self.gamma2_slices(a, b),
                    SurfaceKind::Gamma3 => self.gamma1_slices(a, &other[j]),
                    SurfaceKind::GammaTotal => self.total_slices(a, b),
                    SurfaceKind::CrossGamma => self.cross_slices(a, b),
                }
            })
            .collect::<Result<_>>()?;
        let mut values = vec![vec![0.0; m]; m];
        for (&(i, j), &v) in cells.iter().zip(&computed) {
            values[i][j] = v;
        }
        match kind {
            SurfaceKind::CrossGamma => {
                let half = values.clone();
                for i in 0..m {
                    for j in 0..m {
                        values[i][j] = half[i][j] + half[j][i];
                    }
                }
            }
            SurfaceKind::Gamma3 => {}
            _ => {
                for i in 0..m {
                    for j in 0..i {
                        values[i][j] = values[j][i];
                    }
                }
            }
        }
        Ok(CovarianceSurface {
            grid: grid.clone(),
            values,
            kind,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelSpec, ScoreFn, Threshold, WeightFn};

    fn score_weights() -> WeightSpec {
        WeightSpec::from_score(
            ScoreFn::Power { k: 2, scale: 1.0 },
            WeightFn::SineNormalCdf {
                base: 1.0,
                amplitude: 0.5,
            },
            Threshold::Constant { value: 0.4 },
        )
        .unwrap()
    }

    #[test]
    fn gamma1_surface_is_symmetric_psd_with_expected_diagonal() {
        let o = Oracle::new(ModelSpec::StationaryOu { rho: 1.0 }).unwrap();
        let w = WeightSpec::new(
            WeightFn::SineNormalCdf {
                base: 0.5,
                amplitude: 1.0,
            },
            None,
        )
        .unwrap();
        let grid = TimeGrid::linspace(0.5, 1.5, 5, 2.0).unwrap();
        let s = o.surface(SurfaceKind::Gamma1, &grid, &w, None).unwrap();
        assert!(s.max_asymmetry() < 1e-10);
        assert!(s.min_eigenvalue() >= -1e-8);
        for (i, &t) in grid.points().iter().enumerate() {
            let diag = o.c2(&w, t).unwrap() - o.theta(&w, t).unwrap().powi(2);
            assert!((s.value(i, i) - diag).abs() < 1e-9);
        }
    }

    #[test]
    fn total_surface_decomposes() {
        let o = Oracle::new(ModelSpec::Brownian {}).unwrap();
        let w = score_weights();
        let grid = TimeGrid::linspace(0.4, 1.0, 3, 1.0).unwrap();
        let total = o.surface(SurfaceKind::GammaTotal, &grid, &w, None).unwrap();
        let parts: Vec<_> = [SurfaceKind::Gamma1, SurfaceKind::Gamma2, SurfaceKind::CrossGamma]
            .into_iter()
            .map(|k| o.surface(k, &grid, &w, None).unwrap())
            .collect();
        for i in 0..3 {
            for j in 0..3 {
                let sum: f64 = parts.iter().map(|p| p.value(i, j)).sum();
                assert!((total.value(i, j) - sum).abs() < 1e-12);
            }
        }
        assert!(total.min_eigenvalue() >= -1e-8);
        let cross = &parts[2];
        assert!(cross.max_asymmetry() < 1e-12);
        assert!((cross.value(0, 2) - o.cross_cov(&w, 0.4, 1.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn gamma3_requires_second_family() {
        let o = Oracle::new(ModelSpec::Brownian {}).unwrap();
        let grid = TimeGrid::linspace(0.5, 1.0, 2, 1.0).unwrap();
        let one = WeightSpec::constant(1.0);
        assert!(o.surface(SurfaceKind::Gamma3, &grid, &one, None).is_err());
        let s = o
            .surface(SurfaceKind::Gamma3, &grid, &one, Some(&WeightSpec::constant(2.0)))
            .unwrap();
        let g1 = o.gamma1_cov(&one, 0.5, 1.0).unwrap();
        assert!((s.value(0, 1) - 2.0 * g1).abs() < 1e-9);
    }
}
