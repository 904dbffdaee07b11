//! Regression input: points and datasets.
//!
//! A [`Dataset`] is a multiset. Every routine in this crate that consumes a
//! dataset gives the same result (or the same output distribution) for any
//! storage order of its points.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub x: f64,
    pub y: f64,
}

impl DataPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Lexicographic order on `(x, y)`.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.x
            .total_cmp(&other.x)
            .then_with(|| self.y.total_cmp(&other.y))
    }
}

impl From<(f64, f64)> for DataPoint {
    fn from((x, y): (f64, f64)) -> Self {
        Self { x, y }
    }
}

/// A multiset of at least two finite points.
///
/// Datasets whose x values all coincide are accepted: the private
/// estimators are total over every neighbour of a valid dataset, and a
/// neighbour can lose all x variation. Routines that need variation (OLS)
/// check it themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    points: Vec<DataPoint>,
}

impl Dataset {
    pub const MIN_POINTS: usize = 2;

    pub fn new(points: Vec<DataPoint>) -> Result<Self> {
        if points.len() < Self::MIN_POINTS {
            return Err(Error::TooFewPoints {
                required: Self::MIN_POINTS,
                actual: points.len(),
            });
        }
        if let Some((index, p)) = points
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.x.is_finite() && p.y.is_finite()))
        {
            return Err(Error::NonFinitePoint {
                index,
                x: p.x,
                y: p.y,
            });
        }
        Ok(Self { points })
    }

    pub fn from_xy(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::InvalidConfig(format!(
                "x and y lengths differ ({} vs {})",
                xs.len(),
                ys.len()
            )));
        }
        Self::new(
            xs.iter()
                .zip(ys)
                .map(|(&x, &y)| DataPoint::new(x, y))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn into_points(self) -> Vec<DataPoint> {
        self.points
    }

    /// Points sorted by `(x, y)`.
    ///
    /// Identical points are interchangeable, so this order is a function of
    /// the multiset alone.
    pub fn canonical_order(&self) -> Vec<DataPoint> {
        let mut sorted = self.points.clone();
        sorted.sort_by(DataPoint::canonical_cmp);
        sorted
    }

    pub fn has_x_variation(&self) -> bool {
        let first = self.points[0].x;
        self.points.iter().any(|p| p.x != first)
    }

    pub fn mean_x(&self) -> f64 {
        self.points.iter().map(|p| p.x).sum::<f64>() / self.len() as f64
    }

    pub fn mean_y(&self) -> f64 {
        self.points.iter().map(|p| p.y).sum::<f64>() / self.len() as f64
    }

    /// Population variance of the x values.
    pub fn x_variance(&self) -> f64 {
        population_variance(self.points.iter().map(|p| p.x))
    }

    /// Returns a copy with point `index` replaced, i.e. a neighbouring dataset.
    pub fn with_replaced(&self, index: usize, point: DataPoint) -> Result<Self> {
        let mut points = self.points.clone();
        points[index] = point;
        Self::new(points)
    }
}

pub(crate) fn population_variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (count, sum) = values.clone().fold((0usize, 0.0), |(c, s), v| (c + 1, s + v));
    if count == 0 {
        return 0.0;
    }
    let mean = sum / count as f64;
    values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_and_non_finite() {
        assert_eq!(
            Dataset::new(vec![DataPoint::new(0.0, 0.0)]),
            Err(Error::TooFewPoints {
                required: 2,
                actual: 1
            })
        );
        let err = Dataset::from_xy(&[0.0, f64::NAN], &[1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::NonFinitePoint { index: 1, .. }));
    }

    #[test]
    fn canonical_order_ignores_storage_order() {
        let a = Dataset::from_xy(&[2.0, 1.0, 1.0], &[0.0, 5.0, -1.0]).unwrap();
        let b = Dataset::from_xy(&[1.0, 2.0, 1.0], &[-1.0, 0.0, 5.0]).unwrap();
        assert_eq!(a.canonical_order(), b.canonical_order());
        assert_eq!(a.canonical_order()[0], DataPoint::new(1.0, -1.0));
    }

    #[test]
    fn x_variance_is_population_variance() {
        let d = Dataset::from_xy(&[0.0, 1.0, 2.0, 3.0], &[0.0; 4]).unwrap();
        assert!((d.x_variance() - 1.25).abs() < 1e-15);
        let flat = Dataset::from_xy(&[4.0, 4.0], &[0.0, 1.0]).unwrap();
        assert!(!flat.has_x_variation());
    }
}
