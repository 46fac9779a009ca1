use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered observation times `0 < t_1 < ... < t_m ≤ T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct TimeGrid {
    points: Vec<f64>,
    horizon: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    horizon: f64,
    points: Vec<f64>,
}

impl TryFrom<RawGrid> for TimeGrid {
    type Error = Error;
    fn try_from(raw: RawGrid) -> Result<Self> {
        TimeGrid::new(raw.points, raw.horizon)
    }
}

impl From<TimeGrid> for RawGrid {
    fn from(grid: TimeGrid) -> Self {
        RawGrid {
            horizon: grid.horizon,
            points: grid.points,
        }
    }
}

impl TimeGrid {
    pub fn new(points: Vec<f64>, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::config(format!("grid horizon must be positive, got {horizon}")));
        }
        if points.len() < 2 {
            return Err(Error::config("a time grid needs at least 2 points"));
        }
        for (i, &t) in points.iter().enumerate() {
            if !(t > 0.0 && t <= horizon) {
                return Err(Error::config(format!("grid point {t} outside (0, {horizon}]")));
            }
            if i > 0 && t <= points[i - 1] {
                return Err(Error::config(format!(
                    "grid points must be strictly increasing ({} then {t})",
                    points[i - 1]
                )));
            }
        }
        Ok(Self { points, horizon })
    }

    /// `count` equally spaced points from `start` to `end` inclusive.
    pub fn linspace(start: f64, end: f64, count: usize, horizon: f64) -> Result<Self> {
        if count < 2 {
            return Err(Error::config("linspace needs at least 2 points"));
        }
        let step = (end - start) / (count - 1) as f64;
        let mut points: Vec<f64> = (0..count).map(|i| start + step * i as f64).collect();
        points[count - 1] = end;
        Self::new(points, horizon)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn min_spacing(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(TimeGrid::new(vec![0.5], 1.0).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.5], 1.0).is_err());
        assert!(TimeGrid::new(vec![0.5, 0.5], 1.0).is_err());
        assert!(TimeGrid::new(vec![0.5, 1.5], 1.0).is_err());
        assert!(TimeGrid::new(vec![0.2, 0.8], 1.0).is_ok());
    }

    #[test]
    fn linspace_hits_endpoints() {
        let g = TimeGrid::linspace(0.5, 1.5, 20, 2.0).unwrap();
        assert_eq!(g.len(), 20);
        assert_eq!(g.points()[0], 0.5);
        assert_eq!(g.points()[19], 1.5);
        assert!((g.min_spacing() - 1.0 / 19.0).abs() < 1e-12);
    }

    #[test]
    fn deserialization_validates() {
        let bad: std::result::Result<TimeGrid, _> = serde_json::from_str(r#"{"horizon": 1.0, "points": [0.9, 0.1]}"#);
        assert!(bad.is_err());
    }
}
