//! Cameras, sphere tracing and the differentiable hit point.

mod camera;
mod render;
mod trace;

pub use camera::{format_cameras, parse_cameras, pixel_ray, read_cameras, write_cameras, Camera};
pub use render::{
    differentiable_intersection, intersection_param_gradient, render_image, render_pixel, render_pixels, shade_hits, FrozenIntersection, PixelOutcome, RenderMode, TANGENT_FLOOR,
};
pub use trace::{sphere_trace, trace_rays, SurfaceHit, TraceOutcome, TraceParams};
