use super::kdtree::KdTree;
use crate::error::{Error, Result};
use crate::geom::Vec3;

const UNIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedPoint {
    pub position: Vec3,
    pub normal: Vec3,
}

/// Oriented samples of a surface with an exact nearest-neighbour index.
#[derive(Debug, Clone)]
pub struct OrientedPointCloud {
    points: Vec<OrientedPoint>,
    index: KdTree,
    density: f64,
    downsampled_spacing: Option<f64>,
}

impl OrientedPointCloud {
    /// Normals must be unit length within `1e-6`; positions finite.
    pub fn new(points: Vec<OrientedPoint>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !p.position.iter().all(|v| v.is_finite()) {
                return Err(Error::Format(format!("point {i} has a non-finite position")));
            }
            if (p.normal.norm() - 1.0).abs() > UNIT_TOL {
                return Err(Error::Precondition(format!("point {i}: normal is not unit length")));
            }
        }
        let positions: Vec<Vec3> = points.iter().map(|p| p.position).collect();
        let index = KdTree::new(&positions);
        let nn = nearest_neighbor_distances(&index);
        let density = median(&nn);
        Ok(Self {
            points,
            index,
            density,
            downsampled_spacing: None,
        })
    }

    pub fn from_parts(positions: &[Vec3], normals: &[Vec3]) -> Result<Self> {
        if positions.len() != normals.len() {
            return Err(Error::DimensionMismatch(format!("{} positions, {} normals", positions.len(), normals.len())));
        }
        Self::new(positions.iter().zip(normals).map(|(&position, &normal)| OrientedPoint { position, normal }).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[OrientedPoint] {
        &self.points
    }

    pub fn positions(&self) -> &[Vec3] {
        self.index.points()
    }

    pub fn normals(&self) -> Vec<Vec3> {
        self.points.iter().map(|p| p.normal).collect()
    }

    pub fn index(&self) -> &KdTree {
        &self.index
    }

    /// Median nearest-neighbour spacing, or the thinning spacing after
    /// [`downsample_uniform`](super::downsample_uniform). Zero for fewer than two points.
    pub fn density(&self) -> f64 {
        self.downsampled_spacing.unwrap_or(self.density)
    }

    pub fn downsampled_spacing(&self) -> Option<f64> {
        self.downsampled_spacing
    }

    pub(crate) fn with_spacing(mut self, spacing: f64) -> Self {
        self.downsampled_spacing = Some(spacing);
        self
    }
}

/// Distance from each point to its nearest other point.
pub fn nearest_neighbor_distances(index: &KdTree) -> Vec<f64> {
    if index.len() < 2 {
        return Vec::new();
    }
    index.points().iter().enumerate().map(|(i, p)| index.knn(p, 2).iter().find(|&&(j, _)| j != i).map_or(0.0, |&(_, d)| d)).collect()
}

pub(crate) fn median(values: &[f64]) -> f64 {
    percentile(values, 0.5)
}

/// Nearest-rank percentile (`q` in `[0, 1]`); 0 for empty input.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}
