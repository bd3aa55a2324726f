use serde::{Deserialize, Serialize};

use crate::diffmlp::{init_params, MlpArchitecture, NetKind, ParamStore};
use crate::error::{Error, Result};
use crate::geom::{Aabb, Vec3};
use crate::image::{Image, Mask};
use crate::pointcloud::{BoundaryPoint, OrientedPoint, OrientedPointCloud};
use crate::tracer::{Camera, TraceParams};

/// Relative margin added around the cloud's bounding box before it is
/// fitted into the training domain.
pub const DEFAULT_PADDING: f64 = 0.1;

/// Similarity `x -> (x - center) * scale` into the training domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneTransform {
    pub center: [f64; 3],
    pub scale: f64,
}

impl SceneTransform {
    pub fn identity() -> Self {
        Self {
            center: [0.0; 3],
            scale: 1.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    fn c(&self) -> Vec3 {
        Vec3::from(self.center)
    }

    pub fn to_normalized(&self, x: &Vec3) -> Vec3 {
        (x - self.c()) * self.scale
    }

    pub fn to_scene(&self, x: &Vec3) -> Vec3 {
        x / self.scale + self.c()
    }

    pub fn camera_to_normalized(&self, cam: &Camera) -> Camera {
        Camera {
            translation: self.to_normalized(&cam.translation),
            ..cam.clone()
        }
    }

    pub fn camera_to_scene(&self, cam: &Camera) -> Camera {
        Camera {
            translation: self.to_scene(&cam.translation),
            ..cam.clone()
        }
    }

    pub fn boundary_to_normalized(&self, b: &BoundaryPoint) -> BoundaryPoint {
        BoundaryPoint {
            position: self.to_normalized(&b.position),
            target_distance: b.target_distance * self.scale,
        }
    }

    pub fn cloud_to_normalized(&self, cloud: &OrientedPointCloud) -> Result<OrientedPointCloud> {
        let pts = cloud
            .points()
            .iter()
            .map(|p| OrientedPoint {
                position: self.to_normalized(&p.position),
                normal: p.normal,
            })
            .collect();
        let out = OrientedPointCloud::new(pts)?;
        Ok(match cloud.downsampled_spacing() {
            Some(t) => out.with_spacing(t * self.scale),
            None => out,
        })
    }
}

/// Fit the cloud's padded bounding box into `[-1, 1]^3`. Scenes whose padded
/// box already fits are left untouched.
pub fn normalize_scene(cloud: &OrientedPointCloud, cameras: &[Camera], padding: f64) -> Result<(SceneTransform, OrientedPointCloud, Vec<Camera>)> {
    if cloud.is_empty() {
        return Err(Error::Precondition("cannot normalize an empty cloud".into()));
    }
    if !(padding >= 0.0) {
        return Err(Error::Config("padding must be non-negative".into()));
    }
    let bb = Aabb::from_points(cloud.positions()).expect("non-empty");
    let half = bb.extent().max() * 0.5;
    if !(half > 0.0) {
        return Err(Error::DegenerateScene("point cloud has zero extent".into()));
    }
    let padded_min = bb.min - Vec3::repeat(half * padding);
    let padded_max = bb.max + Vec3::repeat(half * padding);
    let fits = padded_min.iter().all(|v| *v >= -1.0) && padded_max.iter().all(|v| *v <= 1.0);
    let t = if fits {
        SceneTransform::identity()
    } else {
        SceneTransform {
            center: bb.center().into(),
            scale: 1.0 / (half * (1.0 + padding)),
        }
    };
    let cams = cameras.iter().map(|c| t.camera_to_normalized(c)).collect();
    Ok((t, t.cloud_to_normalized(cloud)?, cams))
}

/// Normalized inputs of one reconstruction.
#[derive(Debug, Clone)]
pub struct TrainingScene {
    cloud: OrientedPointCloud,
    boundary: Vec<BoundaryPoint>,
    cameras: Vec<Camera>,
    views: Vec<(Image, Mask)>,
    valid_pixels: Vec<Vec<(u32, u32)>>,
    pub trace: TraceParams,
}

impl TrainingScene {
    /// `views` is either empty or holds one image and mask per camera.
    pub fn new(cloud: OrientedPointCloud, boundary: Vec<BoundaryPoint>, cameras: Vec<Camera>, views: Vec<(Image, Mask)>) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::Precondition("training needs at least one data point".into()));
        }
        if !views.is_empty() && views.len() != cameras.len() {
            return Err(Error::DimensionMismatch(format!("{} views for {} cameras", views.len(), cameras.len())));
        }
        for c in &cameras {
            c.validate()?;
        }
        let mut valid_pixels = Vec::with_capacity(views.len());
        for ((img, mask), cam) in views.iter().zip(&cameras) {
            if (img.width, img.height) != (cam.width as usize, cam.height as usize) || (mask.width, mask.height) != (img.width, img.height) {
                return Err(Error::DimensionMismatch(format!("view of camera {} does not match its resolution", cam.name)));
            }
            let mut v = Vec::new();
            for j in 0..img.height {
                for i in 0..img.width {
                    if mask.get(i, j) {
                        v.push((i as u32, j as u32));
                    }
                }
            }
            valid_pixels.push(v);
        }
        Ok(Self {
            cloud,
            boundary,
            cameras,
            views,
            valid_pixels,
            trace: TraceParams::for_box(&Aabb::unit()),
        })
    }

    pub fn cloud(&self) -> &OrientedPointCloud {
        &self.cloud
    }

    pub fn boundary(&self) -> &[BoundaryPoint] {
        &self.boundary
    }

    pub fn cameras(&self) -> &[Camera] {
        &self.cameras
    }

    pub fn views(&self) -> &[(Image, Mask)] {
        &self.views
    }

    pub fn valid_pixels(&self, view: usize) -> &[(u32, u32)] {
        &self.valid_pixels[view]
    }

    /// Images with at least one valid pixel exist.
    pub fn has_pixels(&self) -> bool {
        self.valid_pixels.iter().any(|v| !v.is_empty())
    }
}

/// Distance network and optional light field.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub sdf_arch: MlpArchitecture,
    pub sdf: ParamStore,
    pub light: Option<(MlpArchitecture, ParamStore)>,
}

impl Model {
    pub fn init(sdf_arch: MlpArchitecture, light_arch: Option<MlpArchitecture>, seed: u64) -> Result<Self> {
        let sdf = init_params(&sdf_arch, seed);
        let light = light_arch.map(|a| {
            let p = init_params(&a, seed.wrapping_add(1));
            (a, p)
        });
        let m = Self { sdf_arch, sdf, light };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.sdf_arch.validate()?;
        if self.sdf_arch.kind != NetKind::Sdf {
            return Err(Error::Config("distance network must be of the distance kind".into()));
        }
        if self.sdf.len() != self.sdf_arch.param_count() {
            return Err(Error::DimensionMismatch("distance parameters do not match the architecture".into()));
        }
        if let Some((a, p)) = &self.light {
            a.validate()?;
            if a.kind != NetKind::LightField {
                return Err(Error::Config("light network must be of the light-field kind".into()));
            }
            if a.descriptor_width != self.sdf_arch.descriptor_width {
                return Err(Error::Config(format!(
                    "light field expects {} descriptor channels, distance network yields {}",
                    a.descriptor_width, self.sdf_arch.descriptor_width
                )));
            }
            if p.len() != a.param_count() {
                return Err(Error::DimensionMismatch("light parameters do not match the architecture".into()));
            }
        }
        Ok(())
    }
}
