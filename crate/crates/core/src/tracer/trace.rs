use crate::diffmlp::JetOrder;
use crate::error::Result;
use crate::field::SdfField;
use crate::geom::{Aabb, Ray, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceParams {
    pub t_min: f64,
    pub t_max: f64,
    pub hit_tol: f64,
    pub max_steps: usize,
    /// Steps are clamped to `[-step_max, step_max]`.
    pub step_max: f64,
    /// When set, marching is restricted to the ray's overlap with this box.
    pub domain: Option<Aabb>,
}

impl TraceParams {
    /// Defaults scaled to a scene box.
    pub fn for_box(domain: &Aabb) -> Self {
        let diag = domain.diagonal();
        Self {
            t_min: 0.0,
            t_max: 2.0 * diag,
            hit_tol: 5e-5 * diag,
            max_steps: 128,
            step_max: 0.5 * diag,
            domain: Some(*domain),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceHit {
    pub point: Vec3,
    pub t: f64,
    pub sdf_value: f64,
    /// Unit field gradient at the hit.
    pub normal: Vec3,
    pub steps: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceOutcome {
    Hit(SurfaceHit),
    /// Left the marching interval.
    Miss,
    /// Ran out of steps without meeting the tolerance.
    NotConverged { t: f64, sdf_value: f64 },
}

impl TraceOutcome {
    pub fn hit(&self) -> Option<&SurfaceHit> {
        match self {
            TraceOutcome::Hit(h) => Some(h),
            _ => None,
        }
    }
}

/// Sphere-trace a batch of rays; all live rays advance together so each
/// step is one batched field evaluation.
pub fn trace_rays<F: SdfField + ?Sized>(field: &F, rays: &[Ray], params: &TraceParams) -> Result<Vec<TraceOutcome>> {
    let mut outcomes = vec![TraceOutcome::Miss; rays.len()];
    let mut t = vec![0.0; rays.len()];
    let mut t_start = vec![0.0; rays.len()];
    let mut t_end = vec![0.0; rays.len()];
    let mut live: Vec<usize> = Vec::with_capacity(rays.len());
    for (i, ray) in rays.iter().enumerate() {
        let (mut lo, mut hi) = (params.t_min, params.t_max);
        if let Some(domain) = &params.domain {
            match domain.ray_interval(&ray.origin, &ray.dir) {
                Some((a, b)) => {
                    lo = lo.max(a);
                    hi = hi.min(b);
                }
                None => continue,
            }
        }
        if lo <= hi {
            t[i] = lo;
            t_start[i] = lo;
            t_end[i] = hi;
            live.push(i);
        }
    }
    let mut last_value = vec![f64::NAN; rays.len()];
    let mut hits: Vec<(usize, usize)> = Vec::new();
    for step in 0..params.max_steps {
        if live.is_empty() {
            break;
        }
        let points: Vec<Vec3> = live.iter().map(|&i| rays[i].at(t[i])).collect();
        let values = field.values(&points)?;
        let mut next = Vec::with_capacity(live.len());
        for (&i, f) in live.iter().zip(values) {
            last_value[i] = f;
            if f.abs() <= params.hit_tol {
                hits.push((i, step + 1));
                continue;
            }
            t[i] += f.clamp(-params.step_max, params.step_max);
            if t[i] > t_end[i] || t[i] < t_start[i] {
                continue;
            }
            next.push(i);
        }
        live = next;
    }
    for &i in &live {
        outcomes[i] = TraceOutcome::NotConverged {
            t: t[i],
            sdf_value: last_value[i],
        };
    }
    if !hits.is_empty() {
        let points: Vec<Vec3> = hits.iter().map(|&(i, _)| rays[i].at(t[i])).collect();
        let samples = field.sample(&points, JetOrder::Gradient)?;
        for ((&(i, steps), p), s) in hits.iter().zip(points).zip(samples) {
            let norm = s.gradient.norm();
            let normal = if norm > 0.0 { s.gradient / norm } else { -rays[i].dir };
            outcomes[i] = TraceOutcome::Hit(SurfaceHit {
                point: p,
                t: t[i],
                sdf_value: last_value[i],
                normal,
                steps,
                converged: true,
            });
        }
    }
    Ok(outcomes)
}

pub fn sphere_trace<F: SdfField + ?Sized>(field: &F, ray: &Ray, params: &TraceParams) -> Result<TraceOutcome> {
    Ok(trace_rays(field, std::slice::from_ref(ray), params)?.remove(0))
}
