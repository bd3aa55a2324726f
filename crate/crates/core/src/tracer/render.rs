use super::camera::Camera;
use super::trace::{trace_rays, TraceOutcome, TraceParams};
use crate::diffmlp::{param_gradient, sdf_forward, zero_seeds, JetOrder, MlpArchitecture, ParamStore, SurfaceQuery};
use crate::error::{Error, Result};
use crate::field::{LightField, SdfField};
use crate::geom::{Ray, Vec3};
use crate::image::Image;

/// Rays whose direction is this close to tangent (`|v . grad f|`) are dropped.
pub const TANGENT_FLOOR: f64 = 1e-4;

/// Whether the traced point follows the distance parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderMode {
    /// Hit point, normal and descriptor are constants.
    Frozen,
    /// Hit point re-parameterized by the current distance value at the hit.
    Differentiable,
}

/// First-order re-parameterization of a traced hit:
/// `x = x0 - scale * v * (f(x0) - f0) / (v . grad0)` where `f0` and `grad0`
/// are frozen at tracing time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrozenIntersection {
    pub x0: Vec3,
    pub view: Vec3,
    pub f0: f64,
    pub grad0: Vec3,
    pub scale: f64,
}

impl FrozenIntersection {
    pub fn new(x0: Vec3, view: Vec3, f0: f64, grad0: Vec3, scale: f64) -> Result<Self> {
        let dot = view.dot(&grad0);
        if dot.abs() < TANGENT_FLOOR {
            return Err(Error::TangentialRay { dot });
        }
        Ok(Self {
            x0,
            view,
            f0,
            grad0,
            scale,
        })
    }

    pub fn position(&self, f_current: f64) -> Vec3 {
        self.x0 + self.sensitivity() * (f_current - self.f0)
    }

    /// `dx / d f(x0)`, the only parameter-dependent path.
    pub fn sensitivity(&self) -> Vec3 {
        -self.view * (self.scale / self.view.dot(&self.grad0))
    }
}

/// Differentiable intersection evaluated against the current field.
pub fn differentiable_intersection<F: SdfField + ?Sized>(x0: &Vec3, view: &Vec3, f_frozen: f64, grad_frozen: &Vec3, field: &F) -> Result<Vec3> {
    let xi = FrozenIntersection::new(*x0, *view, f_frozen, *grad_frozen, 1.0)?;
    Ok(xi.position(field.value(x0)?))
}

/// Parameter gradient of `sum_i xbar_i . x_i(theta)` for intersections
/// re-parameterized through a distance network. Only `f(x0; theta)` depends
/// on the parameters, so this is `sum_i (xbar_i . dx/df) df(x0_i)/dtheta`.
pub fn intersection_param_gradient(arch: &MlpArchitecture, params: &ParamStore, hits: &[FrozenIntersection], xbar: &[Vec3]) -> Result<Vec<f64>> {
    if hits.len() != xbar.len() {
        return Err(Error::DimensionMismatch("one adjoint per intersection required".into()));
    }
    let points: Vec<Vec3> = hits.iter().map(|h| h.x0).collect();
    let tape = sdf_forward(arch, params, &points, JetOrder::Value, true)?;
    let mut seeds = zero_seeds(&tape);
    for (s, (h, xb)) in hits.iter().zip(xbar).enumerate() {
        seeds[[0, s]] = xb.dot(&h.sensitivity());
    }
    param_gradient(arch, params, &tape, &seeds)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PixelOutcome {
    Color(Vec3),
    Miss,
    /// Traced but the view ray is tangent to the surface.
    Tangential,
}

impl PixelOutcome {
    pub fn color(&self) -> Option<Vec3> {
        match self {
            PixelOutcome::Color(c) => Some(*c),
            _ => None,
        }
    }
}

/// Shade already-traced hits. Rays that did not converge count as misses.
pub fn shade_hits<F, L>(sdf: &F, light: &L, rays: &[Ray], traced: &[TraceOutcome], mode: RenderMode) -> Result<Vec<PixelOutcome>>
where
    F: SdfField + ?Sized,
    L: LightField + ?Sized,
{
    let hit_idx: Vec<usize> = (0..rays.len()).filter(|&i| traced[i].hit().is_some()).collect();
    let points: Vec<Vec3> = hit_idx.iter().map(|&i| traced[i].hit().unwrap().point).collect();
    let samples = sdf.sample(&points, JetOrder::Gradient)?;
    let mut out = vec![PixelOutcome::Miss; rays.len()];
    let mut queries = Vec::with_capacity(points.len());
    let mut slots = Vec::with_capacity(points.len());
    let mut positions = Vec::with_capacity(points.len());
    for ((&i, x0), s) in hit_idx.iter().zip(&points).zip(&samples) {
        let v = rays[i].dir;
        let g = s.gradient;
        let x = match mode {
            RenderMode::Frozen => *x0,
            RenderMode::Differentiable => match FrozenIntersection::new(*x0, v, s.value, g, 1.0) {
                Ok(xi) => xi.position(s.value),
                Err(_) => {
                    out[i] = PixelOutcome::Tangential;
                    continue;
                }
            },
        };
        if g.norm() == 0.0 {
            out[i] = PixelOutcome::Tangential;
            continue;
        }
        positions.push(x);
        queries.push(SurfaceQuery {
            x,
            normal: g.normalize(),
            view: v,
            descriptor: Vec::new(),
        });
        slots.push(i);
    }
    if sdf.descriptor_width() > 0 {
        for (q, d) in queries.iter_mut().zip(sdf.descriptors(&positions)?) {
            q.descriptor = d;
        }
    }
    for (i, c) in slots.into_iter().zip(light.shade(&queries)?) {
        out[i] = PixelOutcome::Color(c);
    }
    Ok(out)
}

/// Render a set of pixel positions of one camera.
pub fn render_pixels<F, L>(sdf: &F, light: &L, camera: &Camera, pixels: &[(f64, f64)], mode: RenderMode, params: &TraceParams) -> Result<Vec<PixelOutcome>>
where
    F: SdfField + ?Sized,
    L: LightField + ?Sized,
{
    let rays: Vec<Ray> = pixels.iter().map(|&(u, v)| camera.ray(u, v)).collect();
    let traced = trace_rays(sdf, &rays, params)?;
    shade_hits(sdf, light, &rays, &traced, mode)
}

pub fn render_pixel<F, L>(sdf: &F, light: &L, camera: &Camera, pixel: (f64, f64), mode: RenderMode, params: &TraceParams) -> Result<PixelOutcome>
where
    F: SdfField + ?Sized,
    L: LightField + ?Sized,
{
    super::camera::pixel_ray(camera, pixel)?;
    Ok(render_pixels(sdf, light, camera, &[pixel], mode, params)?[0])
}

/// Full image at pixel centres; anything but a shaded hit is black.
pub fn render_image<F, L>(sdf: &F, light: &L, camera: &Camera, params: &TraceParams) -> Result<Image>
where
    F: SdfField + ?Sized,
    L: LightField + ?Sized,
{
    let (w, h) = (camera.width as usize, camera.height as usize);
    let pixels: Vec<(f64, f64)> = (0..h).flat_map(|j| (0..w).map(move |i| (i as f64 + 0.5, j as f64 + 0.5))).collect();
    let outcomes = render_pixels(sdf, light, camera, &pixels, RenderMode::Frozen, params)?;
    let mut img = Image::new(w, h);
    for (k, o) in outcomes.iter().enumerate() {
        if let Some(c) = o.color() {
            img.set(k % w, k / w, c);
        }
    }
    Ok(img)
}
