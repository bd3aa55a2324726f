use nalgebra::SymmetricEigen;

use super::cloud::{percentile, OrientedPoint, OrientedPointCloud};
use super::kdtree::KdTree;
use crate::error::{Error, Result};
use crate::geom::{Aabb, Mat3, Vec3};

pub const DEFAULT_NORMAL_K: usize = 16;
pub const DEFAULT_BOUNDARY_K: usize = 4;
pub const DEFAULT_BOUNDARY_ANGLE: f64 = 60.0;

/// PCA normals: the smallest-eigenvalue eigenvector of each point's k-NN
/// covariance (the point itself included). Signs are arbitrary.
pub fn estimate_normals(positions: &[Vec3], k: usize) -> Result<Vec<Vec3>> {
    if k < 3 {
        return Err(Error::Precondition(format!("normal estimation needs k >= 3, got {k}")));
    }
    if positions.len() < k {
        return Err(Error::Precondition(format!("{} points but k = {k}", positions.len())));
    }
    let tree = KdTree::new(positions);
    positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let nn = tree.knn(p, k);
            let mean = nn.iter().map(|&(j, _)| positions[j]).sum::<Vec3>() / nn.len() as f64;
            let mut cov = Mat3::zeros();
            for &(j, _) in &nn {
                let d = positions[j] - mean;
                cov += d * d.transpose();
            }
            let eig = SymmetricEigen::new(cov);
            let mut order = [0usize, 1, 2];
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let largest = eig.eigenvalues[order[2]];
            // a unique normal needs at least a rank-2 spread
            if !(largest > 0.0) || eig.eigenvalues[order[1]] <= 1e-12 * largest {
                return Err(Error::DegenerateNeighborhood { index: i });
            }
            Ok(eig.eigenvectors.column(order[0]).normalize())
        })
        .collect()
}

/// Flip normals to face their assigned camera. Without an explicit
/// assignment each point uses its nearest camera centre. Returns the
/// oriented normals and the number of points whose normal is exactly
/// perpendicular to the view direction (left unchanged).
pub fn orient_normals(positions: &[Vec3], normals: &[Vec3], camera_centers: &[Vec3], visibility: Option<&[usize]>) -> Result<(Vec<Vec3>, usize)> {
    if positions.len() != normals.len() {
        return Err(Error::DimensionMismatch("positions and normals differ in length".into()));
    }
    if camera_centers.is_empty() {
        return Err(Error::Precondition("orientation needs at least one camera".into()));
    }
    if let Some(vis) = visibility {
        if vis.len() != positions.len() || vis.iter().any(|&c| c >= camera_centers.len()) {
            return Err(Error::Precondition("visibility must assign a valid camera to every point".into()));
        }
    }
    let mut flagged = 0;
    let out = positions
        .iter()
        .zip(normals)
        .enumerate()
        .map(|(i, (p, n))| {
            let cam = match visibility {
                Some(vis) => camera_centers[vis[i]],
                None => *camera_centers
                    .iter()
                    .min_by(|a, b| (*a - p).norm_squared().total_cmp(&(*b - p).norm_squared()))
                    .unwrap(),
            };
            let s = n.dot(&(cam - p));
            if s == 0.0 {
                flagged += 1;
                *n
            } else if s < 0.0 {
                -n
            } else {
                *n
            }
        })
        .collect();
    Ok((out, flagged))
}

/// Greedy pair-discard thinning. The spacing `t` is the 90th percentile of
/// nearest-neighbour distances between distinct positions, or the spacing
/// recorded by an earlier call. Points are visited in order and a point is
/// dropped when a kept point lies closer than `t`; exact duplicates are
/// always merged.
pub fn downsample_uniform(cloud: &OrientedPointCloud) -> Result<OrientedPointCloud> {
    if cloud.len() < 2 {
        return Err(Error::Precondition("downsampling needs at least two points".into()));
    }
    let t = match cloud.downsampled_spacing() {
        Some(t) => t,
        None => {
            let pos = cloud.positions();
            let nn: Vec<f64> = pos
                .iter()
                .filter_map(|p| {
                    // skip coincident copies, which would otherwise drive t to zero
                    let copies = cloud.index().within_closed(p, 0.0).len();
                    cloud.index().knn(p, copies + 1).last().map(|&(_, d)| d).filter(|&d| d > 0.0)
                })
                .collect();
            percentile(&nn, 0.9)
        }
    };
    let keep = thin_indices(cloud.index(), t);
    let points: Vec<OrientedPoint> = keep.iter().map(|&i| cloud.points()[i]).collect();
    Ok(OrientedPointCloud::new(points)?.with_spacing(t))
}

/// Indices surviving greedy thinning at spacing `t`, ascending.
pub(crate) fn thin_indices(index: &KdTree, t: f64) -> Vec<usize> {
    let pos = index.points();
    let mut kept = vec![false; pos.len()];
    for i in 0..pos.len() {
        let near = if t > 0.0 { index.within(&pos[i], t) } else { index.within_closed(&pos[i], 0.0) };
        let blocked = near.into_iter().any(|j| j < i && kept[j]);
        kept[i] = !blocked;
    }
    (0..pos.len()).filter(|&i| kept[i]).collect()
}

/// Free-space points: a camera centre inside the box, otherwise where its
/// principal view line first enters the box. Cameras whose view line misses
/// the box are skipped; the count is returned.
pub fn make_boundary_points(centers: &[Vec3], forwards: &[Vec3], domain: &Aabb) -> Result<(Vec<Vec3>, usize)> {
    if domain.is_degenerate() {
        return Err(Error::DegenerateScene("boundary box has zero extent".into()));
    }
    if centers.len() != forwards.len() {
        return Err(Error::DimensionMismatch("camera centres and view directions differ in length".into()));
    }
    let mut out = Vec::new();
    let mut skipped = 0;
    for (c, f) in centers.iter().zip(forwards) {
        if domain.contains(c) {
            out.push(*c);
            continue;
        }
        let dir = f.normalize();
        match domain.ray_interval(c, &dir) {
            Some((t0, t1)) if t0 >= 0.0 && t0 <= t1 => {
                let mut p = c + dir * t0;
                // snap rounding error back onto the box
                p = p.sup(&domain.min).inf(&domain.max);
                out.push(p);
            }
            _ => skipped += 1,
        }
    }
    Ok((out, skipped))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub position: Vec3,
    pub target_distance: f64,
}

/// Mean point-to-plane distance to the `k` nearest oriented points whose
/// normal is within `max_angle` degrees of the offset direction; falls back
/// to the nearest point when every neighbour is excluded.
pub fn boundary_target_distance(x_b: &Vec3, cloud: &OrientedPointCloud, k: usize, max_angle: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::Precondition("boundary distance needs k >= 1".into()));
    }
    if cloud.is_empty() {
        return Err(Error::Precondition("boundary distance needs a non-empty cloud".into()));
    }
    let cos_max = max_angle.to_radians().cos();
    let nn = cloud.index().knn(x_b, k);
    let plane = |j: usize| {
        let p = &cloud.points()[j];
        (x_b - p.position).dot(&p.normal)
    };
    let mut sum = 0.0;
    let mut kept = 0usize;
    for &(j, dist) in &nn {
        let along = plane(j);
        if dist == 0.0 || along >= cos_max * dist {
            sum += along.abs();
            kept += 1;
        }
    }
    Ok(if kept == 0 { plane(nn[0].0).abs() } else { sum / kept as f64 })
}

pub fn boundary_points(positions: &[Vec3], cloud: &OrientedPointCloud, k: usize, max_angle: f64) -> Result<Vec<BoundaryPoint>> {
    positions
        .iter()
        .map(|p| {
            Ok(BoundaryPoint {
                position: *p,
                target_distance: boundary_target_distance(p, cloud, k, max_angle)?,
            })
        })
        .collect()
}
