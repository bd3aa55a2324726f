//! Loss terms, their weighted total and Monte-Carlo surface integrals.
//!
//! Each geometric term is built from a per-sample kernel returning the
//! sample's loss and its adjoints with respect to the field value, gradient
//! and Hessian; the trainer pushes the same adjoints through the network.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffmlp::JetOrder;
use crate::error::{Error, Result};
use crate::field::{LightField, SdfField};
use crate::geom::{Aabb, Mat3, Vec3, HESSIAN_PAIRS};
use crate::pointcloud::{BoundaryPoint, OrientedPoint};
use crate::tracer::{render_pixels, Camera, PixelOutcome, RenderMode, TraceParams};

/// Gradient norms below this make the data-term normal undefined.
pub const VANISHING_GRADIENT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub data: f64,
    pub boundary: f64,
    pub eikonal: f64,
    pub hessian: f64,
    pub minimal_surface: f64,
    pub render: f64,
    /// Distance part of the data term.
    pub lambda_d: f64,
    /// Normal part of the data term.
    pub lambda_n: f64,
    /// Width of the regularized Dirac delta, in field units.
    pub epsilon: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            data: 1.0,
            boundary: 1.0,
            eikonal: 0.1,
            hessian: 0.01,
            minimal_surface: 0.01,
            render: 1.0,
            lambda_d: 1.0,
            lambda_n: 1.0,
            epsilon: 10.0,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self {
            data: 0.0,
            boundary: 0.0,
            eikonal: 0.0,
            hessian: 0.0,
            minimal_surface: 0.0,
            render: 0.0,
            lambda_d: 0.0,
            lambda_n: 0.0,
            epsilon: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.data,
            self.boundary,
            self.eikonal,
            self.hessian,
            self.minimal_surface,
            self.render,
            self.lambda_d,
            self.lambda_n,
        ];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// A training pixel: camera index, image position and target colour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelSample {
    pub camera: usize,
    pub pixel: (f64, f64),
    pub rgb: Vec3,
}

/// Samples for one iteration.
#[derive(Debug, Clone, Default)]
pub struct SampleBatch {
    pub data: Vec<OrientedPoint>,
    pub boundary: Vec<BoundaryPoint>,
    pub uniform: Vec<Vec3>,
    pub pixels: Vec<PixelSample>,
}

impl SampleBatch {
    pub fn validate(&self, domain: &Aabb) -> Result<()> {
        if let Some(x) = self.uniform.iter().find(|x| !domain.contains(x)) {
            return Err(Error::Precondition(format!("uniform sample {x:?} outside the domain")));
        }
        if self.pixels.iter().any(|p| !p.rgb.iter().all(|c| (0.0..=1.0).contains(c))) {
            return Err(Error::Precondition("pixel colours must lie in [0, 1]".into()));
        }
        if self.boundary.iter().any(|b| !(b.target_distance >= 0.0)) {
            return Err(Error::Precondition("boundary targets must be non-negative".into()));
        }
        Ok(())
    }
}

/// Sum by pairwise halving over fixed-size blocks; the result depends only
/// on the input order, never on scheduling.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 64 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        pairwise_sum(v) / v.len() as f64
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Loss of one sample and its adjoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelOutput {
    pub loss: f64,
    pub d_value: f64,
    pub d_gradient: Vec3,
    /// Adjoints of the six unique Hessian entries in `HESSIAN_PAIRS` order.
    pub d_hessian: [f64; 6],
}

impl KernelOutput {
    fn new(loss: f64) -> Self {
        Self {
            loss,
            d_value: 0.0,
            d_gradient: Vec3::zeros(),
            d_hessian: [0.0; 6],
        }
    }
}

/// `lambda_d |f| + lambda_n (1 - n . grad/|grad|)`; the second flag reports a
/// vanishing gradient, where the normal part takes its maximum `2 lambda_n`.
pub fn data_kernel(f: f64, g: &Vec3, n: &Vec3, lambda_d: f64, lambda_n: f64) -> (KernelOutput, bool) {
    let gn = g.norm();
    if gn < VANISHING_GRADIENT {
        let mut k = KernelOutput::new(lambda_d * f.abs() + 2.0 * lambda_n);
        k.d_value = lambda_d * sign(f);
        return (k, true);
    }
    let u = g / gn;
    let c = n.dot(&u);
    let mut k = KernelOutput::new(lambda_d * f.abs() + lambda_n * (1.0 - c));
    k.d_value = lambda_d * sign(f);
    k.d_gradient = -(n - u * c) * (lambda_n / gn);
    (k, false)
}

pub fn boundary_kernel(f: f64, target: f64) -> KernelOutput {
    let mut k = KernelOutput::new((f - target).abs());
    k.d_value = sign(f - target);
    k
}

pub fn eikonal_kernel(g: &Vec3) -> KernelOutput {
    let gn = g.norm();
    let mut k = KernelOutput::new((gn - 1.0).abs());
    if gn > 0.0 {
        k.d_gradient = g * (sign(gn - 1.0) / gn);
    }
    k
}

/// Element-wise 1-norm of the symmetric Hessian given by its unique entries.
pub fn hessian_kernel(pairs: &[f64; 6]) -> KernelOutput {
    let mut k = KernelOutput::new(0.0);
    for (p, (i, j)) in HESSIAN_PAIRS.iter().enumerate() {
        let mult = if i == j { 1.0 } else { 2.0 };
        k.loss += mult * pairs[p].abs();
        k.d_hessian[p] = mult * sign(pairs[p]);
    }
    k
}

/// `(epsilon / pi) / (epsilon^2 + z^2)`.
pub fn regularized_dirac(z: f64, epsilon: f64) -> f64 {
    (epsilon / PI) / (epsilon * epsilon + z * z)
}

pub fn minimal_surface_kernel(f: f64, epsilon: f64) -> KernelOutput {
    let den = epsilon * epsilon + f * f;
    let mut k = KernelOutput::new(regularized_dirac(f, epsilon));
    k.d_value = -(epsilon / PI) * 2.0 * f / (den * den);
    k
}

fn hessian_pairs(h: &Mat3) -> [f64; 6] {
    std::array::from_fn(|p| h[HESSIAN_PAIRS[p]])
}

/// Data term and the number of samples hit by the vanishing-gradient guard.
pub fn data_loss_guarded<F: SdfField + ?Sized>(field: &F, data: &[OrientedPoint], lambda_d: f64, lambda_n: f64) -> Result<(f64, usize)> {
    let xs: Vec<Vec3> = data.iter().map(|p| p.position).collect();
    let samples = field.sample(&xs, JetOrder::Gradient)?;
    let mut guarded = 0;
    let losses: Vec<f64> = samples
        .iter()
        .zip(data)
        .map(|(s, p)| {
            let (k, g) = data_kernel(s.value, &s.gradient, &p.normal, lambda_d, lambda_n);
            guarded += g as usize;
            k.loss
        })
        .collect();
    Ok((mean(&losses), guarded))
}

pub fn data_loss<F: SdfField + ?Sized>(field: &F, data: &[OrientedPoint], lambda_d: f64, lambda_n: f64) -> Result<f64> {
    Ok(data_loss_guarded(field, data, lambda_d, lambda_n)?.0)
}

pub fn boundary_loss<F: SdfField + ?Sized>(field: &F, boundary: &[BoundaryPoint]) -> Result<f64> {
    let xs: Vec<Vec3> = boundary.iter().map(|b| b.position).collect();
    let values = field.values(&xs)?;
    Ok(mean(&values.iter().zip(boundary).map(|(f, b)| boundary_kernel(*f, b.target_distance).loss).collect::<Vec<_>>()))
}

pub fn eikonal_loss<F: SdfField + ?Sized>(field: &F, uniform: &[Vec3]) -> Result<f64> {
    let samples = field.sample(uniform, JetOrder::Gradient)?;
    Ok(mean(&samples.iter().map(|s| eikonal_kernel(&s.gradient).loss).collect::<Vec<_>>()))
}

pub fn hessian_loss<F: SdfField + ?Sized>(field: &F, uniform: &[Vec3]) -> Result<f64> {
    let samples = field.sample(uniform, JetOrder::Hessian)?;
    Ok(mean(&samples.iter().map(|s| hessian_kernel(&hessian_pairs(&s.hessian)).loss).collect::<Vec<_>>()))
}

pub fn minimal_surface_loss<F: SdfField + ?Sized>(field: &F, uniform: &[Vec3], epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::Precondition("epsilon must be positive".into()));
    }
    let values = field.values(uniform)?;
    Ok(mean(&values.iter().map(|f| regularized_dirac(*f, epsilon)).collect::<Vec<_>>()))
}

/// Render term with its bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RenderLoss {
    pub value: f64,
    /// Pixels whose ray hit and were shaded.
    pub used: usize,
    /// Missed, non-converged or tangential pixels.
    pub skipped: usize,
}

impl RenderLoss {
    /// No pixel contributed although some were requested.
    pub fn all_missed(&self) -> bool {
        self.used == 0 && self.skipped > 0
    }
}

/// Mean L1 colour error over pixels whose rays hit. A batch where every
/// pixel misses yields 0 and a warning.
pub fn render_loss<F, L>(sdf: &F, light: &L, cameras: &[Camera], pixels: &[PixelSample], mode: RenderMode, params: &TraceParams) -> Result<RenderLoss>
where
    F: SdfField + ?Sized,
    L: LightField + ?Sized,
{
    let mut errors = Vec::with_capacity(pixels.len());
    let mut skipped = 0;
    for (cam_id, cam) in cameras.iter().enumerate() {
        let mine: Vec<&PixelSample> = pixels.iter().filter(|p| p.camera == cam_id).collect();
        if mine.is_empty() {
            continue;
        }
        let pos: Vec<(f64, f64)> = mine.iter().map(|p| p.pixel).collect();
        for (o, p) in render_pixels(sdf, light, cam, &pos, mode, params)?.into_iter().zip(&mine) {
            match o {
                PixelOutcome::Color(c) => errors.push((c - p.rgb).abs().sum()),
                _ => skipped += 1,
            }
        }
    }
    if let Some(p) = pixels.iter().find(|p| p.camera >= cameras.len()) {
        return Err(Error::Precondition(format!("pixel references camera {} of {}", p.camera, cameras.len())));
    }
    if errors.is_empty() && skipped > 0 {
        log::warn!("every render pixel missed the surface; render loss set to 0");
    }
    Ok(RenderLoss {
        value: mean(&errors),
        used: errors.len(),
        skipped,
    })
}

/// Unweighted terms of one evaluation of the total loss.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub data: f64,
    pub boundary: f64,
    pub eikonal: f64,
    pub hessian: f64,
    pub minimal_surface: f64,
    pub render: f64,
    pub total: f64,
    pub skipped_pixels: usize,
    pub vanishing_gradients: usize,
    pub render_all_missed: bool,
}

impl LossBreakdown {
    /// `sum_k weight_k * term_k`.
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        w.data * self.data
            + w.boundary * self.boundary
            + w.eikonal * self.eikonal
            + w.hessian * self.hessian
            + w.minimal_surface * self.minimal_surface
            + w.render * self.render
    }

    /// One structured log record; floats are printed losslessly.
    pub fn log_line(&self, iteration: usize, lr: f64) -> String {
        let mut s = format!("iter={iteration} lr={lr:e}");
        for (k, v) in [
            ("data", self.data),
            ("boundary", self.boundary),
            ("eikonal", self.eikonal),
            ("hessian", self.hessian),
            ("minimal", self.minimal_surface),
            ("render", self.render),
            ("total", self.total),
        ] {
            write!(s, " {k}={v:e}").unwrap();
        }
        write!(s, " skipped_pixels={}", self.skipped_pixels).unwrap();
        s
    }

    pub fn parse_log_line(line: &str) -> Result<(usize, f64, LossBreakdown)> {
        let mut b = LossBreakdown::default();
        let mut iter = None;
        let mut lr = None;
        for tok in line.split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(|| Error::Format(format!("bad log token `{tok}`")))?;
            let num = || v.parse::<f64>().map_err(|_| Error::Format(format!("bad log value `{tok}`")));
            match k {
                "iter" => iter = Some(v.parse().map_err(|_| Error::Format(format!("bad iteration `{v}`")))?),
                "lr" => lr = Some(num()?),
                "data" => b.data = num()?,
                "boundary" => b.boundary = num()?,
                "eikonal" => b.eikonal = num()?,
                "hessian" => b.hessian = num()?,
                "minimal" => b.minimal_surface = num()?,
                "render" => b.render = num()?,
                "total" => b.total = num()?,
                "skipped_pixels" => b.skipped_pixels = v.parse().map_err(|_| Error::Format(format!("bad count `{v}`")))?,
                _ => return Err(Error::Format(format!("unknown log key `{k}`"))),
            }
        }
        Ok((
            iter.ok_or_else(|| Error::Format("log line lacks iter".into()))?,
            lr.ok_or_else(|| Error::Format("log line lacks lr".into()))?,
            b,
        ))
    }
}

/// Everything besides the distance field that the total loss reads.
pub struct LossContext<'a, L: LightField + ?Sized> {
    pub light: Option<&'a L>,
    pub cameras: &'a [Camera],
    pub trace: TraceParams,
    pub mode: RenderMode,
}

/// Weighted sum of all terms and the unweighted breakdown. The render term
/// is evaluated only when a light field, cameras and pixels are present.
pub fn total_loss<F, L>(sdf: &F, ctx: &LossContext<'_, L>, batch: &SampleBatch, w: &LossWeights) -> Result<(f64, LossBreakdown)>
where
    F: SdfField + ?Sized,
    L: LightField + ?Sized,
{
    w.validate()?;
    let mut b = LossBreakdown::default();
    let (data, guarded) = data_loss_guarded(sdf, &batch.data, w.lambda_d, w.lambda_n).map_err(|e| e.in_term("data"))?;
    b.data = data;
    b.vanishing_gradients = guarded;
    b.boundary = boundary_loss(sdf, &batch.boundary).map_err(|e| e.in_term("boundary"))?;
    b.eikonal = eikonal_loss(sdf, &batch.uniform).map_err(|e| e.in_term("eikonal"))?;
    b.hessian = hessian_loss(sdf, &batch.uniform).map_err(|e| e.in_term("hessian"))?;
    b.minimal_surface = minimal_surface_loss(sdf, &batch.uniform, w.epsilon).map_err(|e| e.in_term("minimal_surface"))?;
    if let Some(light) = ctx.light {
        if !batch.pixels.is_empty() {
            let r = render_loss(sdf, light, ctx.cameras, &batch.pixels, ctx.mode, &ctx.trace).map_err(|e| e.in_term("render"))?;
            b.render = r.value;
            b.skipped_pixels = r.skipped;
            b.render_all_missed = r.all_missed();
        }
    }
    b.total = b.weighted_total(w);
    if !b.total.is_finite() {
        return Err(Error::numeric("total loss"));
    }
    Ok((b.total, b))
}

fn uniform_points(domain: &Aabb, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    (0..n)
        .map(|_| Vec3::from_fn(|i, _| rng.gen_range(domain.min[i]..domain.max[i])))
        .collect()
}

const MC_CHUNK: usize = 1 << 16;

fn monte_carlo<F: SdfField + ?Sized>(field: &F, domain: &Aabb, n: usize, seed: u64, g: impl Fn(f64) -> f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Precondition("at least one sample required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut partial = Vec::new();
    let mut left = n;
    while left > 0 {
        let m = left.min(MC_CHUNK);
        let xs = uniform_points(domain, m, &mut rng);
        let vals: Vec<f64> = field.values(&xs)?.into_iter().map(&g).collect();
        partial.push(pairwise_sum(&vals));
        left -= m;
    }
    Ok(domain.volume() * pairwise_sum(&partial) / n as f64)
}

/// Surface area as `vol(domain) * mean delta_eps(f)` over uniform samples.
pub fn estimate_area<F: SdfField + ?Sized>(field: &F, domain: &Aabb, epsilon: f64, n: usize, seed: u64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::Precondition("epsilon must be positive".into()));
    }
    monte_carlo(field, domain, n, seed, |f| regularized_dirac(f, epsilon))
}

/// Interior volume as `vol(domain) * fraction of samples with f < 0`.
pub fn estimate_volume<F: SdfField + ?Sized>(field: &F, domain: &Aabb, n: usize, seed: u64) -> Result<f64> {
    monte_carlo(field, domain, n, seed, |f| if f < 0.0 { 1.0 } else { 0.0 })
}
