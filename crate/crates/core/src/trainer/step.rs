use ndarray::Array2;
use rayon::prelude::*;

use super::config::{lr_at, TrainConfig};
use super::optim::OptimizerState;
use super::scene::{Model, TrainingScene};
use crate::diffmlp::{
    sdf_backward, sdf_forward, slf_backward, slf_forward, tape_descriptor, tape_gradient, tape_hessian_pairs, tape_rgb, tape_value, zero_seeds,
    JetOrder, MlpArchitecture, ParamStore, SurfaceQuery,
};
use crate::error::{Error, Result};
use crate::field::NeuralSdf;
use crate::geom::{sym_from_pairs, Ray, Vec3};
use crate::losses::{
    boundary_kernel, data_kernel, eikonal_kernel, hessian_kernel, minimal_surface_kernel, pairwise_sum, KernelOutput, LossBreakdown, LossWeights,
    SampleBatch,
};
use crate::tracer::{trace_rays, Camera, RenderMode, TraceParams, TANGENT_FLOOR};

const DATA_CHUNK: usize = 1024;
const VALUE_CHUNK: usize = 4096;
const SECOND_ORDER_CHUNK: usize = 256;

/// Map `f` over fixed-size chunks (in parallel within groups) and fold the
/// results in chunk order, so the outcome never depends on the schedule.
fn fold_chunks<T: Sync, R: Send>(items: &[T], chunk: usize, f: impl Fn(&[T]) -> Result<R> + Sync, mut fold: impl FnMut(R)) -> Result<()> {
    let group = chunk * rayon::current_num_threads().max(1);
    for g in items.chunks(group) {
        let rs: Vec<Result<R>> = g.par_chunks(chunk).map(&f).collect();
        for r in rs {
            fold(r?);
        }
    }
    Ok(())
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        pairwise_sum(v) / v.len() as f64
    }
}

/// Write `coef * kernel adjoints` for sample `s` into distance-tape seeds.
fn seed_kernel(seeds: &mut Array2<f64>, n: usize, s: usize, k: &KernelOutput, coef: f64, order: JetOrder) {
    seeds[[0, s]] += coef * k.d_value;
    if order >= JetOrder::Gradient {
        for i in 0..3 {
            seeds[[0, (1 + i) * n + s]] += coef * k.d_gradient[i];
        }
    }
    if order == JetOrder::Hessian {
        for p in 0..6 {
            seeds[[0, (4 + p) * n + s]] += coef * k.d_hessian[p];
        }
    }
}

struct ChunkOut {
    losses: Vec<Vec<f64>>,
    count: usize,
    grad: Option<Vec<f64>>,
}

fn backprop(arch: &MlpArchitecture, params: &ParamStore, tape: &crate::diffmlp::BatchTape, seeds: &Array2<f64>, active: bool) -> Option<Vec<f64>> {
    active.then(|| {
        let mut g = vec![0.0; params.len()];
        sdf_backward(arch, params, tape, seeds, &mut g);
        g
    })
}

/// Gradient of the total loss with respect to both networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub sdf: Vec<f64>,
    pub light: Option<Vec<f64>>,
}

impl Gradients {
    pub fn all_finite(&self) -> bool {
        self.sdf.iter().chain(self.light.iter().flatten()).all(|g| g.is_finite())
    }
}

/// Geometric terms: per-sample kernels evaluated on batched jets, adjoints
/// pushed back through the distance network.
fn geometry(model: &Model, batch: &SampleBatch, w: &LossWeights, b: &mut LossBreakdown, grad: &mut [f64]) -> Result<()> {
    let arch = &model.sdf_arch;
    let params = &model.sdf;

    let nd = batch.data.len().max(1) as f64;
    let coef = w.data / nd;
    let mut losses = Vec::with_capacity(batch.data.len());
    fold_chunks(
        &batch.data,
        DATA_CHUNK,
        |chunk| {
            let xs: Vec<Vec3> = chunk.iter().map(|p| p.position).collect();
            let tape = sdf_forward(arch, params, &xs, JetOrder::Gradient, true)?;
            let n = xs.len();
            let mut seeds = zero_seeds(&tape);
            let mut out = ChunkOut {
                losses: vec![Vec::with_capacity(n)],
                count: 0,
                grad: None,
            };
            for (s, p) in chunk.iter().enumerate() {
                let (k, guarded) = data_kernel(tape_value(&tape, s), &tape_gradient(&tape, s), &p.normal, w.lambda_d, w.lambda_n);
                out.losses[0].push(k.loss);
                out.count += guarded as usize;
                seed_kernel(&mut seeds, n, s, &k, coef, JetOrder::Gradient);
            }
            out.grad = backprop(arch, params, &tape, &seeds, coef != 0.0);
            Ok(out)
        },
        |o| {
            losses.extend_from_slice(&o.losses[0]);
            b.vanishing_gradients += o.count;
            if let Some(g) = o.grad {
                add_into(grad, &g);
            }
        },
    )
    .map_err(|e| e.in_term("data"))?;
    b.data = mean(&losses);

    let coef = w.boundary / batch.boundary.len().max(1) as f64;
    let mut losses = Vec::with_capacity(batch.boundary.len());
    fold_chunks(
        &batch.boundary,
        VALUE_CHUNK,
        |chunk| {
            let xs: Vec<Vec3> = chunk.iter().map(|p| p.position).collect();
            let tape = sdf_forward(arch, params, &xs, JetOrder::Value, true)?;
            let mut seeds = zero_seeds(&tape);
            let mut ls = Vec::with_capacity(xs.len());
            for (s, p) in chunk.iter().enumerate() {
                let k = boundary_kernel(tape_value(&tape, s), p.target_distance);
                ls.push(k.loss);
                seed_kernel(&mut seeds, xs.len(), s, &k, coef, JetOrder::Value);
            }
            Ok(ChunkOut {
                losses: vec![ls],
                count: 0,
                grad: backprop(arch, params, &tape, &seeds, coef != 0.0),
            })
        },
        |o| {
            losses.extend_from_slice(&o.losses[0]);
            if let Some(g) = o.grad {
                add_into(grad, &g);
            }
        },
    )
    .map_err(|e| e.in_term("boundary"))?;
    b.boundary = mean(&losses);

    let smooth = arch.activation.is_twice_differentiable();
    if w.hessian > 0.0 && !smooth {
        return Err(arch.require_hessian().unwrap_err().in_term("hessian"));
    }
    let order = if smooth { JetOrder::Hessian } else { JetOrder::Gradient };
    let nr = batch.uniform.len().max(1) as f64;
    let (ce, ch, cm) = (w.eikonal / nr, w.hessian / nr, w.minimal_surface / nr);
    let mut terms: [Vec<f64>; 3] = Default::default();
    let chunk = if smooth { SECOND_ORDER_CHUNK } else { DATA_CHUNK };
    fold_chunks(
        &batch.uniform,
        chunk,
        |xs| {
            let tape = sdf_forward(arch, params, xs, order, true)?;
            let n = xs.len();
            let mut seeds = zero_seeds(&tape);
            let mut ls = vec![Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
            for s in 0..n {
                let ke = eikonal_kernel(&tape_gradient(&tape, s));
                ls[0].push(ke.loss);
                seed_kernel(&mut seeds, n, s, &ke, ce, order);
                if smooth {
                    let kh = hessian_kernel(&tape_hessian_pairs(&tape, s));
                    ls[1].push(kh.loss);
                    seed_kernel(&mut seeds, n, s, &kh, ch, order);
                }
                let km = minimal_surface_kernel(tape_value(&tape, s), w.epsilon);
                ls[2].push(km.loss);
                seed_kernel(&mut seeds, n, s, &km, cm, order);
            }
            Ok(ChunkOut {
                losses: ls,
                count: 0,
                grad: backprop(arch, params, &tape, &seeds, ce != 0.0 || ch != 0.0 || cm != 0.0),
            })
        },
        |o| {
            for (t, l) in terms.iter_mut().zip(&o.losses) {
                t.extend_from_slice(l);
            }
            if let Some(g) = o.grad {
                add_into(grad, &g);
            }
        },
    )
    .map_err(|e| e.in_term("uniform"))?;
    b.eikonal = mean(&terms[0]);
    b.hessian = mean(&terms[1]);
    b.minimal_surface = mean(&terms[2]);
    Ok(())
}

struct RenderHit {
    x0: Vec3,
    view: Vec3,
    rgb: Vec3,
}

struct RenderChunk {
    losses: Vec<f64>,
    skipped: usize,
    sdf: Option<Vec<f64>>,
    light: Vec<f64>,
}

/// Render term. Rays are traced against the current field; each hit is
/// re-parameterized as `x = x0 + sens * (f(x0) - f0)` with
/// `sens = -scale * v / (v . grad f0)`, and the normal and descriptor are
/// taken at `x`, so their dependence on the hit position is chained
/// through the Hessian and the descriptor's spatial gradient. In frozen
/// mode only the light field receives gradients.
#[allow(clippy::too_many_arguments)]
fn render(
    model: &Model,
    cameras: &[Camera],
    trace: &TraceParams,
    batch: &SampleBatch,
    weight: f64,
    mode: RenderMode,
    scale: f64,
    b: &mut LossBreakdown,
    grad_sdf: &mut [f64],
    grad_light: &mut [f64],
) -> Result<()> {
    let Some((larch, lparams)) = &model.light else {
        return Ok(());
    };
    if batch.pixels.is_empty() {
        return Ok(());
    }
    if let Some(p) = batch.pixels.iter().find(|p| p.camera >= cameras.len()) {
        return Err(Error::Precondition(format!("pixel references camera {} of {}", p.camera, cameras.len())));
    }
    let arch = &model.sdf_arch;
    let params = &model.sdf;
    let field = NeuralSdf::new(arch, params);
    let mut hits = Vec::new();
    let mut skipped = 0;
    for (cam_id, cam) in cameras.iter().enumerate() {
        let mine: Vec<_> = batch.pixels.iter().filter(|p| p.camera == cam_id).collect();
        if mine.is_empty() {
            continue;
        }
        let rays: Vec<Ray> = mine.iter().map(|p| cam.ray(p.pixel.0, p.pixel.1)).collect();
        for ((o, r), p) in trace_rays(&field, &rays, trace)?.iter().zip(&rays).zip(&mine) {
            match o.hit() {
                Some(h) => hits.push(RenderHit {
                    x0: h.point,
                    view: r.dir,
                    rgb: p.rgb,
                }),
                None => skipped += 1,
            }
        }
    }
    let differentiable = mode == RenderMode::Differentiable;
    let order = if differentiable { JetOrder::Hessian } else { JetOrder::Gradient };
    if differentiable {
        arch.require_hessian()?;
    }
    let train_sdf = differentiable && weight != 0.0;
    let dw = arch.descriptor_width;
    let mut losses = Vec::with_capacity(hits.len());
    let mut gs = vec![0.0; params.len()];
    let mut gl = vec![0.0; lparams.len()];
    fold_chunks(
        &hits,
        SECOND_ORDER_CHUNK,
        |chunk| {
            let xs: Vec<Vec3> = chunk.iter().map(|h| h.x0).collect();
            let n = xs.len();
            let tape = sdf_forward(arch, params, &xs, order, false)?;
            let mut kept = Vec::new();
            let mut queries = Vec::new();
            let mut skipped = 0;
            for (s, h) in chunk.iter().enumerate() {
                let g = tape_gradient(&tape, s);
                let gn = g.norm();
                if gn == 0.0 || (differentiable && h.view.dot(&g).abs() < TANGENT_FLOOR) {
                    skipped += 1;
                    continue;
                }
                kept.push((s, g, gn));
                queries.push(SurfaceQuery {
                    x: h.x0,
                    normal: g / gn,
                    view: h.view,
                    descriptor: tape_descriptor(&tape, s),
                });
            }
            let mut out = RenderChunk {
                losses: Vec::with_capacity(kept.len()),
                skipped,
                sdf: None,
                light: vec![0.0; lparams.len()],
            };
            if kept.is_empty() {
                return Ok(out);
            }
            let ltape = slf_forward(larch, lparams, &queries)?;
            let mut cbar = Array2::<f64>::zeros((3, kept.len()));
            for (q, &(s, _, _)) in kept.iter().enumerate() {
                let r = tape_rgb(&ltape, q) - chunk[s].rgb;
                out.losses.push(r.abs().sum());
                for c in 0..3 {
                    cbar[[c, q]] = r[c].signum() * (r[c] != 0.0) as u8 as f64;
                }
            }
            let adj = slf_backward(larch, lparams, &ltape, &cbar, &mut out.light);
            if train_sdf {
                let mut seeds = zero_seeds(&tape);
                for (q, &(s, g, gn)) in kept.iter().enumerate() {
                    let a = &adj[q];
                    let nrm = queries[q].normal;
                    let gbar = (a.normal - nrm * nrm.dot(&a.normal)) / gn;
                    let v = chunk[s].view;
                    let sens = -v * (scale / v.dot(&g));
                    let hess = sym_from_pairs(&tape_hessian_pairs(&tape, s));
                    let mut xbar = a.x + hess * gbar;
                    for r in 0..dw {
                        let dg = Vec3::new(tape.out(1 + r, 1, s), tape.out(1 + r, 2, s), tape.out(1 + r, 3, s));
                        xbar += dg * a.descriptor[r];
                        seeds[[1 + r, s]] = a.descriptor[r];
                    }
                    seeds[[0, s]] = xbar.dot(&sens);
                    for i in 0..3 {
                        seeds[[0, (1 + i) * n + s]] = gbar[i];
                    }
                }
                out.sdf = backprop(arch, params, &tape, &seeds, true);
            }
            Ok(out)
        },
        |o| {
            losses.extend_from_slice(&o.losses);
            skipped += o.skipped;
            add_into(&mut gl, &o.light);
            if let Some(g) = o.sdf {
                add_into(&mut gs, &g);
            }
        },
    )
    .map_err(|e| e.in_term("render"))?;
    if losses.is_empty() {
        log::warn!("every render pixel missed the surface; render loss set to 0");
    } else {
        let c = weight / losses.len() as f64;
        for (a, g) in grad_light.iter_mut().zip(&gl) {
            *a += c * g;
        }
        for (a, g) in grad_sdf.iter_mut().zip(&gs) {
            *a += c * g;
        }
    }
    b.render = mean(&losses);
    b.skipped_pixels = skipped;
    b.render_all_missed = losses.is_empty() && skipped > 0;
    Ok(())
}

/// Total loss of a batch and its exact gradient with respect to both
/// networks' parameters.
pub fn loss_and_gradient(
    model: &Model,
    cameras: &[Camera],
    trace: &TraceParams,
    batch: &SampleBatch,
    w: &LossWeights,
    mode: RenderMode,
    intersection_grad_scale: f64,
) -> Result<(LossBreakdown, Gradients)> {
    w.validate()?;
    model.sdf.check_finite()?;
    let mut b = LossBreakdown::default();
    let mut gs = vec![0.0; model.sdf.len()];
    let mut gl = model.light.as_ref().map(|(_, p)| vec![0.0; p.len()]);
    geometry(model, batch, w, &mut b, &mut gs)?;
    if let Some(gl) = gl.as_mut() {
        render(model, cameras, trace, batch, w.render, mode, intersection_grad_scale, &mut b, &mut gs, gl)?;
    }
    b.total = b.weighted_total(w);
    Ok((b, Gradients { sdf: gs, light: gl }))
}

/// Parameters and optimizer moments between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: Model,
    pub opt_sdf: OptimizerState,
    pub opt_light: Option<OptimizerState>,
    /// Next epoch to run.
    pub epoch: usize,
    pub consecutive_skips: usize,
}

impl TrainState {
    pub fn new(model: Model) -> Self {
        let opt_sdf = OptimizerState::new(model.sdf.len());
        let opt_light = model.light.as_ref().map(|(_, p)| OptimizerState::new(p.len()));
        Self {
            model,
            opt_sdf,
            opt_light,
            epoch: 0,
            consecutive_skips: 0,
        }
    }
}

/// Consecutive non-finite steps tolerated before training aborts.
pub const MAX_CONSECUTIVE_SKIPS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub breakdown: LossBreakdown,
    pub lr: f64,
    /// False when a non-finite loss or gradient made the step a no-op.
    pub applied: bool,
}

/// One Adam step at `epoch` on a drawn batch.
pub fn train_step(state: &mut TrainState, scene: &TrainingScene, batch: &SampleBatch, config: &TrainConfig, epoch: usize) -> Result<StepReport> {
    let w = config.weights_at(epoch);
    let lr = lr_at(config, epoch);
    let mode = config.render_mode(epoch);
    let result = loss_and_gradient(&state.model, scene.cameras(), &scene.trace, batch, &w, mode, config.intersection_grad_scale);
    let (breakdown, grads) = match result {
        Ok(r) => r,
        Err(e) if matches!(e.root(), Error::NumericFault { .. }) => {
            let b = LossBreakdown {
                total: f64::NAN,
                ..Default::default()
            };
            return skip(state, epoch, b, lr, &e.to_string());
        }
        Err(e) => return Err(e),
    };
    if !breakdown.total.is_finite() || !grads.all_finite() {
        return skip(state, epoch, breakdown, lr, "non-finite loss or gradient");
    }
    state.consecutive_skips = 0;
    state.opt_sdf.update(&mut state.model.sdf.values, &grads.sdf, lr);
    if let (Some((_, p)), Some(opt), Some(g)) = (state.model.light.as_mut(), state.opt_light.as_mut(), grads.light.as_ref()) {
        opt.update(&mut p.values, g, lr);
    }
    Ok(StepReport { breakdown, lr, applied: true })
}

fn skip(state: &mut TrainState, epoch: usize, breakdown: LossBreakdown, lr: f64, why: &str) -> Result<StepReport> {
    state.consecutive_skips += 1;
    log::warn!("epoch {epoch}: step skipped ({why})");
    if state.consecutive_skips >= MAX_CONSECUTIVE_SKIPS {
        return Err(Error::NonConvergence(format!(
            "{} consecutive non-finite steps at epoch {epoch}; last: {why}; last losses: {}",
            state.consecutive_skips,
            breakdown.log_line(epoch, lr)
        )));
    }
    Ok(StepReport {
        breakdown,
        lr,
        applied: false,
    })
}
