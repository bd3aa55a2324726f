//! Analytic scenes with exact distances, surface samples and reference
//! renderings, used as ground truth for every pipeline stage.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffmlp::{JetOrder, SurfaceQuery};
use crate::error::{Error, Result};
use crate::field::{FieldSample, LightField, SdfField};
use crate::geom::{Aabb, Mat3, Vec3};
use crate::image::{Image, Mask};
use crate::pointcloud::{OrientedPoint, OrientedPointCloud};
use crate::tracer::{trace_rays, Camera, TraceParams};

/// Largest allowed half-extent: scenes keep a 10% margin inside `[-1, 1]^3`.
pub const MAX_HALF_EXTENT: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Sphere { radius: f64 },
    /// Ring around the z axis.
    Torus { major: f64, minor: f64 },
    Box { half_extents: Vec3 },
    /// Disjoint spheres, combined by `min`.
    Spheres { centers: Vec<Vec3>, radii: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Albedo {
    Constant { rgb: Vec3 },
    /// 3D checkerboard of cubes with side `period`.
    Checker { period: f64, light: Vec3, dark: Vec3 },
}

impl Albedo {
    pub fn checker(period: f64) -> Self {
        Albedo::Checker {
            period,
            light: Vec3::new(0.85, 0.8, 0.7),
            dark: Vec3::new(0.25, 0.3, 0.4),
        }
    }

    pub fn at(&self, x: &Vec3) -> Vec3 {
        match self {
            Albedo::Constant { rgb } => *rgb,
            Albedo::Checker { period, light, dark } => {
                let parity: i64 = x.iter().map(|c| (c / period).floor() as i64).sum();
                if parity.rem_euclid(2) == 0 {
                    *light
                } else {
                    *dark
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticScene {
    pub shape: Shape,
    pub albedo: Albedo,
    pub light_dir: Vec3,
    pub ambient: f64,
}

impl AnalyticScene {
    pub fn new(shape: Shape, albedo: Albedo) -> Result<Self> {
        let scene = Self {
            shape,
            albedo,
            light_dir: Vec3::new(0.3, 0.4, 0.866).normalize(),
            ambient: 0.2,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn sphere(radius: f64) -> Result<Self> {
        Self::new(Shape::Sphere { radius }, Albedo::Constant { rgb: Vec3::new(0.8, 0.6, 0.4) })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Precondition(m));
        let bounds = match &self.shape {
            Shape::Sphere { radius } => {
                if !(*radius > 0.0) {
                    return bad("sphere radius must be positive".into());
                }
                Aabb::cube(*radius)
            }
            Shape::Torus { major, minor } => {
                if !(*minor > 0.0 && *major > *minor) {
                    return bad("torus needs major > minor > 0".into());
                }
                let h = major + minor;
                Aabb::new(Vec3::new(-h, -h, -minor), Vec3::new(h, h, *minor))
            }
            Shape::Box { half_extents } => {
                if !half_extents.iter().all(|&h| h > 0.0) {
                    return bad("box half extents must be positive".into());
                }
                Aabb::new(-half_extents, *half_extents)
            }
            Shape::Spheres { centers, radii } => {
                if centers.is_empty() || centers.len() != radii.len() || radii.iter().any(|&r| !(r > 0.0)) {
                    return bad("sphere union needs matching centres and positive radii".into());
                }
                for i in 0..centers.len() {
                    for j in 0..i {
                        if (centers[i] - centers[j]).norm() <= radii[i] + radii[j] {
                            return bad(format!("spheres {j} and {i} overlap"));
                        }
                    }
                }
                let mut b = Aabb::new(centers[0] - Vec3::repeat(radii[0]), centers[0] + Vec3::repeat(radii[0]));
                for (c, r) in centers.iter().zip(radii) {
                    b.min = b.min.inf(&(c - Vec3::repeat(*r)));
                    b.max = b.max.sup(&(c + Vec3::repeat(*r)));
                }
                b
            }
        };
        if bounds.min.min() < -MAX_HALF_EXTENT || bounds.max.max() > MAX_HALF_EXTENT {
            return bad("scene must fit inside [-0.9, 0.9]^3".into());
        }
        if (self.light_dir.norm() - 1.0).abs() > 1e-9 {
            return bad("light direction must be unit length".into());
        }
        if !(0.0..=1.0).contains(&self.ambient) {
            return bad("ambient must lie in [0, 1]".into());
        }
        if let Albedo::Checker { period, .. } = self.albedo {
            if !(period > 0.0) {
                return bad("checker period must be positive".into());
            }
        }
        Ok(())
    }

    pub fn distance(&self, x: &Vec3) -> f64 {
        analytic_sdf(self, x)
    }

    /// Lambertian shading with an ambient floor.
    pub fn shade(&self, x: &Vec3, normal: &Vec3) -> Vec3 {
        self.albedo.at(x) * (self.ambient + (1.0 - self.ambient) * normal.dot(&self.light_dir).max(0.0))
    }

    /// Exact surface area.
    pub fn area(&self) -> f64 {
        use std::f64::consts::PI;
        match &self.shape {
            Shape::Sphere { radius } => 4.0 * PI * radius * radius,
            Shape::Torus { major, minor } => 4.0 * PI * PI * major * minor,
            Shape::Box { half_extents: h } => 8.0 * (h.x * h.y + h.y * h.z + h.x * h.z),
            Shape::Spheres { radii, .. } => radii.iter().map(|r| 4.0 * PI * r * r).sum(),
        }
    }
}

/// Exact signed distance of the scene shape.
pub fn analytic_sdf(scene: &AnalyticScene, x: &Vec3) -> f64 {
    shape_jet(&scene.shape, x).value
}

fn sphere_jet(x: &Vec3, center: &Vec3, r: f64) -> FieldSample {
    let d = x - center;
    let len = d.norm();
    if len == 0.0 {
        return FieldSample::value_only(-r);
    }
    let u = d / len;
    FieldSample {
        value: len - r,
        gradient: u,
        hessian: (Mat3::identity() - u * u.transpose()) / len,
    }
}

fn torus_jet(x: &Vec3, major: f64, minor: f64) -> FieldSample {
    let rho = x.xy().norm();
    let q = nalgebra::Vector2::new(rho - major, x.z);
    let ql = q.norm();
    if rho == 0.0 || ql == 0.0 {
        return FieldSample::value_only(ql - minor);
    }
    let u = q / ql;
    let e_rho = Vec3::new(x.x / rho, x.y / rho, 0.0);
    let e_z = Vec3::z();
    let g2 = (nalgebra::Matrix2::identity() - u * u.transpose()) / ql;
    let h_rho = (Mat3::identity() - e_rho * e_rho.transpose() - e_z * e_z.transpose()) / rho;
    let hessian = g2[(0, 0)] * e_rho * e_rho.transpose()
        + g2[(0, 1)] * (e_rho * e_z.transpose() + e_z * e_rho.transpose())
        + g2[(1, 1)] * e_z * e_z.transpose()
        + u.x * h_rho;
    FieldSample {
        value: ql - minor,
        gradient: u.x * e_rho + u.y * e_z,
        hessian,
    }
}

fn box_jet(x: &Vec3, h: &Vec3) -> FieldSample {
    let q = x.abs() - h;
    let sign = x.map(|v| if v < 0.0 { -1.0 } else { 1.0 });
    let outside = q.map(|v| v.max(0.0));
    let len = outside.norm();
    if len > 0.0 {
        let w = outside.component_mul(&sign);
        let u = w / len;
        let active = q.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let proj = Mat3::from_diagonal(&active);
        FieldSample {
            value: len,
            gradient: u,
            hessian: (proj - u * u.transpose()) / len,
        }
    } else {
        let k = q.imax();
        let mut gradient = Vec3::zeros();
        gradient[k] = sign[k];
        FieldSample {
            value: q[k],
            gradient,
            hessian: Mat3::zeros(),
        }
    }
}

fn shape_jet(shape: &Shape, x: &Vec3) -> FieldSample {
    match shape {
        Shape::Sphere { radius } => sphere_jet(x, &Vec3::zeros(), *radius),
        Shape::Torus { major, minor } => torus_jet(x, *major, *minor),
        Shape::Box { half_extents } => box_jet(x, half_extents),
        Shape::Spheres { centers, radii } => centers
            .iter()
            .zip(radii)
            .map(|(c, r)| sphere_jet(x, c, *r))
            .min_by(|a, b| a.value.total_cmp(&b.value))
            .unwrap(),
    }
}

impl SdfField for Shape {
    fn sample(&self, xs: &[Vec3], order: JetOrder) -> Result<Vec<FieldSample>> {
        Ok(xs
            .iter()
            .map(|x| {
                let mut s = shape_jet(self, x);
                if order < JetOrder::Hessian {
                    s.hessian = Mat3::zeros();
                }
                if order < JetOrder::Gradient {
                    s.gradient = Vec3::zeros();
                }
                s
            })
            .collect())
    }
}

impl SdfField for AnalyticScene {
    fn sample(&self, xs: &[Vec3], order: JetOrder) -> Result<Vec<FieldSample>> {
        self.shape.sample(xs, order)
    }
}

/// Light field reproducing the scene's Lambertian shading.
impl LightField for AnalyticScene {
    fn shade(&self, queries: &[SurfaceQuery]) -> Result<Vec<Vec3>> {
        Ok(queries.iter().map(|q| AnalyticScene::shade(self, &q.x, &q.normal)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hole {
    pub axis: Vec3,
    pub half_angle: f64,
}

/// Controlled corruption of surface samples.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradationSpec {
    /// Per-axis Gaussian standard deviation of the position noise.
    pub jitter_sigma: f64,
    /// Removes samples whose exact normal lies within `half_angle` degrees of `axis`.
    pub hole: Option<Hole>,
    /// Scale (degrees) of the half-normal tilt applied to each normal.
    pub normal_noise: f64,
}

impl DegradationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.jitter_sigma >= 0.0 && self.normal_noise >= 0.0) {
            return Err(Error::Precondition("degradation parameters must be non-negative".into()));
        }
        if let Some(h) = &self.hole {
            if !(h.half_angle >= 0.0) || h.axis.norm() == 0.0 {
                return Err(Error::Precondition("hole needs a non-zero axis and non-negative angle".into()));
            }
        }
        Ok(())
    }
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// One exact surface sample (position, outward normal), uniform by area.
fn surface_point(shape: &Shape, rng: &mut ChaCha8Rng) -> (Vec3, Vec3) {
    use std::f64::consts::TAU;
    match shape {
        Shape::Sphere { radius } => {
            let n = unit_vector(rng);
            (n * *radius, n)
        }
        Shape::Torus { major, minor } => loop {
            let theta = rng.gen_range(0.0..TAU);
            let phi = rng.gen_range(0.0..TAU);
            if rng.gen::<f64>() * (major + minor) > major + minor * phi.cos() {
                continue;
            }
            let ring = Vec3::new(theta.cos(), theta.sin(), 0.0);
            let n = ring * phi.cos() + Vec3::z() * phi.sin();
            break (ring * *major + n * *minor, n);
        },
        Shape::Box { half_extents: h } => {
            let areas = [h.y * h.z, h.x * h.z, h.x * h.y];
            let total: f64 = areas.iter().sum();
            let mut pick = rng.gen::<f64>() * total;
            let mut axis = 2;
            for (k, a) in areas.iter().enumerate() {
                if pick < *a {
                    axis = k;
                    break;
                }
                pick -= a;
            }
            let side = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let mut p = Vec3::zeros();
            for k in 0..3 {
                p[k] = if k == axis { side * h[k] } else { rng.gen_range(-h[k]..h[k]) };
            }
            let mut n = Vec3::zeros();
            n[axis] = side;
            (p, n)
        }
        Shape::Spheres { centers, radii } => {
            let total: f64 = radii.iter().map(|r| r * r).sum();
            let mut pick = rng.gen::<f64>() * total;
            let mut k = radii.len() - 1;
            for (i, r) in radii.iter().enumerate() {
                if pick < r * r {
                    k = i;
                    break;
                }
                pick -= r * r;
            }
            let n = unit_vector(rng);
            (centers[k] + n * radii[k], n)
        }
    }
}

/// Rotate `n` by `angle` radians towards a random perpendicular direction.
fn tilt(n: &Vec3, angle: f64, rng: &mut ChaCha8Rng) -> Vec3 {
    let mut t = unit_vector(rng);
    t -= n * n.dot(&t);
    if t.norm() < 1e-9 {
        return *n;
    }
    (n * angle.cos() + t.normalize() * angle.sin()).normalize()
}

/// `n` area-uniform surface samples with exact normals, then hole-cut,
/// jittered and normal-perturbed per `degradation`.
pub fn sample_scene(scene: &AnalyticScene, n: usize, degradation: &DegradationSpec, seed: u64) -> Result<OrientedPointCloud> {
    if n == 0 {
        return Err(Error::Precondition("sample count must be at least 1".into()));
    }
    scene.validate()?;
    degradation.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hole = degradation.hole.map(|h| (h.axis.normalize(), h.half_angle.to_radians().cos()));
    let jitter = Normal::new(0.0, degradation.jitter_sigma).map_err(|e| Error::Precondition(e.to_string()))?;
    let tilt_scale = Normal::new(0.0, degradation.normal_noise.to_radians()).map_err(|e| Error::Precondition(e.to_string()))?;
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let (mut p, mut normal) = surface_point(&scene.shape, &mut rng);
        if let Some((axis, cos_max)) = hole {
            if normal.dot(&axis) > cos_max {
                continue;
            }
        }
        if degradation.jitter_sigma > 0.0 {
            p += Vec3::new(jitter.sample(&mut rng), jitter.sample(&mut rng), jitter.sample(&mut rng));
        }
        if degradation.normal_noise > 0.0 {
            let angle: f64 = tilt_scale.sample(&mut rng);
            normal = tilt(&normal, angle.abs(), &mut rng);
        }
        points.push(OrientedPoint { position: p, normal });
    }
    if points.is_empty() {
        return Err(Error::EmptyOutput("the hole removed every sample".into()));
    }
    OrientedPointCloud::new(points)
}

/// Reference rendering at pixel centres. Background pixels are black and
/// invalid in the mask.
pub fn render_views(scene: &AnalyticScene, cameras: &[Camera]) -> Result<Vec<(Image, Mask)>> {
    let params = TraceParams::for_box(&Aabb::unit());
    cameras
        .iter()
        .map(|cam| {
            cam.validate()?;
            let (w, h) = (cam.width as usize, cam.height as usize);
            let rays: Vec<_> = (0..h).flat_map(|j| (0..w).map(move |i| (i, j))).map(|(i, j)| cam.ray(i as f64 + 0.5, j as f64 + 0.5)).collect();
            let traced = trace_rays(&scene.shape, &rays, &params)?;
            let mut img = Image::new(w, h);
            let mut valid = vec![false; w * h];
            for (k, t) in traced.iter().enumerate() {
                if let Some(hit) = t.hit() {
                    img.set(k % w, k / w, scene.shade(&hit.point, &hit.normal));
                    valid[k] = true;
                }
            }
            Ok((img, Mask { width: w, height: h, valid }))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intrinsics {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Centred principal point with the given horizontal field of view.
    pub fn from_fov(width: u32, height: u32, fov_deg: f64) -> Self {
        let f = 0.5 * width as f64 / (0.5 * fov_deg.to_radians()).tan();
        Self {
            width,
            height,
            fx: f,
            fy: f,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
        }
    }
}

/// Camera at `center` looking at `target`, with world +z projecting upwards.
pub fn look_at_camera(name: String, center: Vec3, target: Vec3, intr: &Intrinsics) -> Result<Camera> {
    let f = target - center;
    if f.norm() == 0.0 {
        return Err(Error::Precondition("camera centre coincides with its target".into()));
    }
    let f = f.normalize();
    let up = if f.cross(&Vec3::z()).norm() > 1e-6 { Vec3::z() } else { Vec3::y() };
    let right = f.cross(&up).normalize();
    let down = f.cross(&right);
    let cam = Camera {
        name,
        width: intr.width,
        height: intr.height,
        fx: intr.fx,
        fy: intr.fy,
        cx: intr.cx,
        cy: intr.cy,
        rotation: Mat3::from_columns(&[right, down, f]),
        translation: center,
    };
    cam.validate()?;
    Ok(cam)
}

/// `n_views` cameras equally spaced in azimuth at a fixed elevation (degrees).
pub fn orbit_cameras(n_views: usize, radius: f64, elevation: f64, look_at: Vec3, intr: &Intrinsics) -> Result<Vec<Camera>> {
    if n_views == 0 || !(radius > 0.0) {
        return Err(Error::Precondition("orbit needs at least one view and a positive radius".into()));
    }
    let el = elevation.to_radians();
    (0..n_views)
        .map(|k| {
            let az = std::f64::consts::TAU * k as f64 / n_views as f64;
            let c = look_at + radius * Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            look_at_camera(format!("view{k:03}"), c, look_at, intr)
        })
        .collect()
}

/// Everything needed to generate a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub scene: AnalyticScene,
    pub n_points: usize,
    #[serde(default)]
    pub degradation: DegradationSpec,
    pub views: ViewSpec,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewSpec {
    pub count: usize,
    pub radius: f64,
    pub elevation: f64,
    pub width: u32,
    pub height: u32,
    pub fov: f64,
}

impl SceneSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: SceneSpec = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        spec.scene.validate()?;
        spec.degradation.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn cameras(&self) -> Result<Vec<Camera>> {
        let v = &self.views;
        orbit_cameras(v.count, v.radius, v.elevation, Vec3::zeros(), &Intrinsics::from_fov(v.width, v.height, v.fov))
    }
}
