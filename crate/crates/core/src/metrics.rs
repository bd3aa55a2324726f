//! Mesh evaluation: uniform oriented resampling, distance-only and
//! normal-aware F-scores, Chamfer distance and PSNR.

use std::fmt::Write as _;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{angle_deg, Vec3};
use crate::image::Image;
use crate::mesher::TriangleMesh;
use crate::pointcloud::{thin_indices, KdTree, OrientedPoint, OrientedPointCloud};

pub const PSNR_CAP_DB: f64 = 99.0;
pub const DEFAULT_ANGLE_DEG: f64 = 30.0;
/// Distance threshold in units of the sample density.
pub const DEFAULT_DISTANCE_FACTOR: f64 = 3.0;
/// Raw samples drawn per target point before thinning.
const OVERSAMPLE: f64 = 4.0;
/// Pair-discard radius as a fraction of the density. Random sequential
/// packing at this radius leaves about `area / density^2` points.
const THIN_RADIUS: f64 = 0.7;

/// Area-weighted random samples on `mesh`, thinned by discarding one point
/// of every pair closer than `THIN_RADIUS * density`. Normals are the face
/// normals.
pub fn sample_mesh_uniform(mesh: &TriangleMesh, density: f64, seed: u64) -> Result<OrientedPointCloud> {
    if !(density > 0.0) || !density.is_finite() {
        return Err(Error::Precondition(format!("sample density must be positive, got {density}")));
    }
    mesh.validate()?;
    let areas: Vec<f64> = (0..mesh.triangles.len()).map(|t| mesh.triangle_area(t)).collect();
    let area = crate::losses::pairwise_sum(&areas);
    if !(area > 0.0) {
        return OrientedPointCloud::new(Vec::new());
    }
    let n = (OVERSAMPLE * area / (density * density)).ceil() as usize;
    let pick = WeightedIndex::new(&areas).map_err(|e| Error::numeric(format!("triangle weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = Vec::with_capacity(n);
    for _ in 0..n {
        let t = pick.sample(&mut rng);
        let [a, b, c] = mesh.triangles[t];
        let (va, vb, vc) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
        let r1: f64 = rng.gen::<f64>().sqrt();
        let r2: f64 = rng.gen();
        raw.push(OrientedPoint {
            position: va * (1.0 - r1) + vb * (r1 * (1.0 - r2)) + vc * (r1 * r2),
            normal: mesh.face_cross(t).normalize(),
        });
    }
    let positions: Vec<Vec3> = raw.iter().map(|p| p.position).collect();
    let keep = thin_indices(&KdTree::new(&positions), THIN_RADIUS * density);
    OrientedPointCloud::new(keep.into_iter().map(|i| raw[i]).collect())
}

/// Inlier percentages of one matching direction pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FScore {
    pub accuracy_pct: f64,
    pub completeness_pct: f64,
    pub fscore_pct: f64,
}

impl FScore {
    fn from_pr(accuracy_pct: f64, completeness_pct: f64) -> Self {
        let sum = accuracy_pct + completeness_pct;
        let fscore_pct = if sum > 0.0 { 2.0 * accuracy_pct * completeness_pct / sum } else { 0.0 };
        Self {
            accuracy_pct,
            completeness_pct,
            fscore_pct,
        }
    }
}

fn check_nonempty(cloud: &[Vec3], what: &str) -> Result<()> {
    if cloud.is_empty() {
        return Err(Error::UndefinedMetric(format!("{what} point set is empty")));
    }
    Ok(())
}

/// Percentage of `from` points whose nearest `to` point is within `dist`
/// (and, with normals, within `angle` degrees of orientation).
fn inlier_pct(from: &OrientedPointCloud, to: &OrientedPointCloud, dist: f64, angle: Option<f64>) -> f64 {
    let inliers: usize = from
        .points()
        .par_iter()
        .map(|p| {
            let (j, d) = to.index().nearest(&p.position).expect("non-empty");
            let ok = d <= dist && angle.map_or(true, |a| angle_deg(&p.normal, &to.points()[j].normal) <= a);
            ok as usize
        })
        .sum();
    100.0 * inliers as f64 / from.len() as f64
}

/// Accuracy (inliers of `pred` against `gt`), completeness (the reverse)
/// and their harmonic mean.
pub fn fscore(pred: &OrientedPointCloud, gt: &OrientedPointCloud, dist_thresh: f64, angle_thresh: f64, use_normals: bool) -> Result<FScore> {
    check_nonempty(pred.positions(), "predicted")?;
    check_nonempty(gt.positions(), "ground-truth")?;
    if !(dist_thresh > 0.0) || !(angle_thresh > 0.0) {
        return Err(Error::Precondition("metric thresholds must be positive".into()));
    }
    let angle = use_normals.then_some(angle_thresh);
    Ok(FScore::from_pr(inlier_pct(pred, gt, dist_thresh, angle), inlier_pct(gt, pred, dist_thresh, angle)))
}

fn mean_nearest(from: &[Vec3], to: &KdTree) -> f64 {
    let d: Vec<f64> = from.par_iter().map(|p| to.nearest(p).expect("non-empty").1).collect();
    d.iter().sum::<f64>() / d.len() as f64
}

/// Average of the two directional mean nearest-neighbour distances.
pub fn chamfer(pred: &[Vec3], gt: &[Vec3]) -> Result<f64> {
    check_nonempty(pred, "predicted")?;
    check_nonempty(gt, "ground-truth")?;
    let (tp, tg) = (KdTree::new(pred), KdTree::new(gt));
    Ok(0.5 * (mean_nearest(pred, &tg) + mean_nearest(gt, &tp)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub distance_only: FScore,
    pub normal_aware: FScore,
    pub chamfer: f64,
    pub distance_threshold: f64,
    pub angle_threshold_deg: f64,
    pub sample_density: f64,
    pub n_pred: usize,
    pub n_gt: usize,
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "points: predicted {}, ground truth {}", self.n_pred, self.n_gt).unwrap();
        writeln!(
            s,
            "thresholds: distance {:.6} ({}x density {:.6}), angle {} deg",
            self.distance_threshold,
            self.distance_threshold / self.sample_density,
            self.sample_density,
            self.angle_threshold_deg
        )
        .unwrap();
        for (name, f) in [("distance-only", &self.distance_only), ("normal-aware", &self.normal_aware)] {
            writeln!(s, "{name:>14}: accuracy {:6.2}%  completeness {:6.2}%  F {:6.2}%", f.accuracy_pct, f.completeness_pct, f.fscore_pct).unwrap();
        }
        writeln!(s, "chamfer: {:.6}", self.chamfer).unwrap();
        s
    }

    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let rows = [
            ("accuracy", self.distance_only.accuracy_pct),
            ("completeness", self.distance_only.completeness_pct),
            ("fscore", self.distance_only.fscore_pct),
            ("accuracy_normal", self.normal_aware.accuracy_pct),
            ("completeness_normal", self.normal_aware.completeness_pct),
            ("fscore_normal", self.normal_aware.fscore_pct),
            ("chamfer", self.chamfer),
            ("distance_threshold", self.distance_threshold),
            ("angle_threshold_deg", self.angle_threshold_deg),
            ("sample_density", self.sample_density),
        ];
        for (k, v) in rows {
            writeln!(s, "{k}={v:?}").unwrap();
        }
        writeln!(s, "n_pred={}\nn_gt={}", self.n_pred, self.n_gt).unwrap();
        s
    }
}

/// Both F-score variants plus Chamfer for resampled clouds.
pub fn evaluate_clouds(pred: &OrientedPointCloud, gt: &OrientedPointCloud, density: f64, dist_thresh: f64, angle_thresh: f64) -> Result<EvalReport> {
    Ok(EvalReport {
        distance_only: fscore(pred, gt, dist_thresh, angle_thresh, false)?,
        normal_aware: fscore(pred, gt, dist_thresh, angle_thresh, true)?,
        chamfer: chamfer(pred.positions(), gt.positions())?,
        distance_threshold: dist_thresh,
        angle_threshold_deg: angle_thresh,
        sample_density: density,
        n_pred: pred.len(),
        n_gt: gt.len(),
    })
}

/// Resample both meshes at `density` and score them with the default
/// thresholds (`3 * density`, 30 degrees).
pub fn evaluate_meshes(pred: &TriangleMesh, gt: &TriangleMesh, density: f64, seed: u64) -> Result<EvalReport> {
    let p = sample_mesh_uniform(pred, density, seed)?;
    let g = sample_mesh_uniform(gt, density, seed.wrapping_add(1))?;
    evaluate_clouds(&p, &g, density, DEFAULT_DISTANCE_FACTOR * density, DEFAULT_ANGLE_DEG)
}

/// `10 log10(1 / MSE)` over all channels, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch(format!("{}x{} vs {}x{} image", a.width, a.height, b.width, b.height)));
    }
    if a.data.is_empty() {
        return Err(Error::UndefinedMetric("empty image".into()));
    }
    let sq: Vec<f64> = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).collect();
    let mse = crate::losses::pairwise_sum(&sq) / sq.len() as f64;
    if !mse.is_finite() {
        return Err(Error::numeric("image difference is not finite"));
    }
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}
