use std::ops::Index;

use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// An n×2 set of planar sample coordinates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointBatch {
    points: Vec<[f64; 2]>,
}

impl PointBatch {
    pub fn new(points: Vec<[f64; 2]>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn as_slice(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, [f64; 2]> {
        self.points.iter()
    }

    pub fn into_inner(self) -> Vec<[f64; 2]> {
        self.points
    }

    /// Rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> PointBatch {
        PointBatch::new(idx.iter().map(|&i| self.points[i]).collect())
    }

    pub fn to_tensor(&self) -> Tensor {
        let values = self.points.iter().flat_map(|p| p.iter().copied()).collect();
        Tensor::matrix(self.points.len(), 2, values).expect("n×2 layout")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.shape().len() != 2 || t.shape()[1] != 2 {
            return Err(Error::ShapeMismatch {
                op: "point_batch",
                left: t.shape().to_vec(),
                right: vec![t.rows(), 2],
            });
        }
        Ok(Self::new(
            t.values().chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
        ))
    }

    pub fn mean(&self) -> [f64; 2] {
        let n = self.points.len().max(1) as f64;
        let (sx, sy) = self
            .points
            .iter()
            .fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
        [sx / n, sy / n]
    }

    /// Trace of the (population) covariance matrix.
    pub fn total_variance(&self) -> f64 {
        let m = self.mean();
        let n = self.points.len().max(1) as f64;
        self.points.iter().map(|p| sq_dist(p, &m)).sum::<f64>() / n
    }

    pub fn is_finite(&self) -> bool {
        self.points
            .iter()
            .all(|p| p[0].is_finite() && p[1].is_finite())
    }
}

impl Index<usize> for PointBatch {
    type Output = [f64; 2];

    fn index(&self, i: usize) -> &[f64; 2] {
        &self.points[i]
    }
}

impl From<Vec<[f64; 2]>> for PointBatch {
    fn from(points: Vec<[f64; 2]>) -> Self {
        Self::new(points)
    }
}

impl<'a> IntoIterator for &'a PointBatch {
    type Item = &'a [f64; 2];
    type IntoIter = std::slice::Iter<'a, [f64; 2]>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

#[inline]
pub fn sq_dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}
