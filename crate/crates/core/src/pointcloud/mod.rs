//! Oriented point clouds: indexing, normals, thinning and boundary points.

mod cloud;
mod kdtree;
mod ops;
pub mod ply;

pub use cloud::{nearest_neighbor_distances, percentile, OrientedPoint, OrientedPointCloud};
pub use kdtree::KdTree;
pub use ops::{
    boundary_points, boundary_target_distance, downsample_uniform, estimate_normals, make_boundary_points, orient_normals, BoundaryPoint,
    DEFAULT_BOUNDARY_ANGLE, DEFAULT_BOUNDARY_K, DEFAULT_NORMAL_K,
};
pub(crate) use ops::thin_indices;
pub use ply::{read_ply_points, write_ply_points, PlyEncoding, PlyPoints};
