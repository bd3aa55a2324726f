//! Neural implicit surface reconstruction.
//!
//! A signed distance network and a surface light field are fitted to an
//! oriented point cloud and calibrated images with data, boundary, Eikonal,
//! Hessian, minimal-surface and render losses; the zero level set is then
//! extracted with Marching Cubes and scored with distance- and
//! normal-aware metrics. Analytic scenes in [`synth`] provide ground truth
//! for every stage.

pub mod config;
pub mod diffmlp;
pub mod error;
pub mod field;
pub mod geom;
pub mod image;
pub mod losses;
pub mod mesher;
pub mod metrics;
pub mod pointcloud;
pub mod synth;
pub mod tracer;
pub mod trainer;

pub use error::{Error, Result};
pub use geom::{Aabb, Mat3, Ray, Vec3};
