//! Point and batch evaluation of the distance and light-field networks.

use ndarray::Array2;

use super::arch::{MlpArchitecture, NetKind};
use super::encoding::{encode_points, encoding_width, positional_encoding};
use super::jet::{backward, forward, BatchTape, JetOrder};
use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::geom::{sym_from_pairs, Mat3, Vec3};

/// Forward pass of the distance network at one location.
#[derive(Debug, Clone)]
pub struct EvalRecord {
    arch: MlpArchitecture,
    input: Vec3,
    tape: BatchTape,
}

impl EvalRecord {
    pub fn tape(&self) -> &BatchTape {
        &self.tape
    }

    pub fn input(&self) -> Vec3 {
        self.input
    }

    pub fn architecture(&self) -> &MlpArchitecture {
        &self.arch
    }

    /// Re-run the forward pass from the recorded input.
    pub fn replay(&self, params: &ParamStore) -> Result<EvalRecord> {
        let tape = sdf_forward(&self.arch, params, &[self.input], self.tape.order(), false)?;
        Ok(EvalRecord {
            arch: self.arch.clone(),
            input: self.input,
            tape,
        })
    }

    pub fn outputs_bit_equal(&self, other: &EvalRecord) -> bool {
        self.tape
            .output()
            .iter()
            .zip(other.tape.output().iter())
            .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Clone)]
pub struct SdfEval {
    pub distance: f64,
    pub descriptor: Vec<f64>,
    pub record: EvalRecord,
}

fn check_kind(arch: &MlpArchitecture, kind: NetKind) -> Result<()> {
    if arch.kind == kind {
        Ok(())
    } else {
        Err(Error::Precondition(format!("expected a {kind:?} network, got {:?}", arch.kind)))
    }
}

/// Batched jets of the distance network. Row 0 of the output is the
/// distance, rows `1..` the descriptor (absent when `head_only`).
pub fn sdf_forward(arch: &MlpArchitecture, params: &ParamStore, points: &[Vec3], order: JetOrder, head_only: bool) -> Result<BatchTape> {
    check_kind(arch, NetKind::Sdf)?;
    if order == JetOrder::Hessian {
        arch.require_hessian()?;
    }
    params.check_finite()?;
    let enc = encode_points(points, arch.pe_octaves, order);
    forward(arch, &params.values, enc, order, head_only)
}

/// Accumulate parameter gradients for the given output-jet adjoints.
pub fn sdf_backward(arch: &MlpArchitecture, params: &ParamStore, tape: &BatchTape, seeds: &Array2<f64>, grad: &mut [f64]) {
    backward(arch, &params.values, tape, seeds, grad, false);
}

/// Exact parameter gradient of a loss whose adjoints with respect to the
/// recorded output jets are `seeds`.
pub fn param_gradient(arch: &MlpArchitecture, params: &ParamStore, tape: &BatchTape, seeds: &Array2<f64>) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; params.len()];
    backward(arch, &params.values, tape, seeds, &mut grad, false);
    if grad.iter().all(|g| g.is_finite()) {
        Ok(grad)
    } else {
        Err(Error::numeric("parameter gradient"))
    }
}

/// Zero adjoints shaped like a tape's output.
pub fn zero_seeds(tape: &BatchTape) -> Array2<f64> {
    Array2::zeros(tape.output().raw_dim())
}

/// Jet accessors for sample `s` of a distance-network tape.
pub fn tape_value(tape: &BatchTape, s: usize) -> f64 {
    tape.out(0, 0, s)
}

pub fn tape_gradient(tape: &BatchTape, s: usize) -> Vec3 {
    Vec3::new(tape.out(0, 1, s), tape.out(0, 2, s), tape.out(0, 3, s))
}

pub fn tape_hessian_pairs(tape: &BatchTape, s: usize) -> [f64; 6] {
    std::array::from_fn(|p| tape.out(0, 4 + p, s))
}

pub fn tape_descriptor(tape: &BatchTape, s: usize) -> Vec<f64> {
    (1..tape.head_rows()).map(|r| tape.out(r, 0, s)).collect()
}

/// Distance, descriptor and a record carrying first and (for smooth
/// activations) second input derivatives.
pub fn eval_sdf(params: &ParamStore, arch: &MlpArchitecture, x: &Vec3) -> Result<SdfEval> {
    let order = if arch.activation.is_twice_differentiable() {
        JetOrder::Hessian
    } else {
        JetOrder::Gradient
    };
    let tape = sdf_forward(arch, params, &[*x], order, false)?;
    Ok(SdfEval {
        distance: tape_value(&tape, 0),
        descriptor: tape_descriptor(&tape, 0),
        record: EvalRecord {
            arch: arch.clone(),
            input: *x,
            tape,
        },
    })
}

pub fn grad_sdf(record: &EvalRecord) -> Result<Vec3> {
    let g = tape_gradient(&record.tape, 0);
    if g.iter().all(|v| v.is_finite()) {
        Ok(g)
    } else {
        Err(Error::numeric("input gradient"))
    }
}

pub fn hessian_sdf(record: &EvalRecord) -> Result<Mat3> {
    record.arch.require_hessian()?;
    if record.tape.order() != JetOrder::Hessian {
        return Err(Error::Precondition("record holds no second-order jets".into()));
    }
    let h = sym_from_pairs(&tape_hessian_pairs(&record.tape, 0));
    if h.iter().all(|v| v.is_finite()) {
        Ok(h)
    } else {
        Err(Error::numeric("input Hessian"))
    }
}

/// Input to the light-field network at one surface point.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceQuery {
    pub x: Vec3,
    pub normal: Vec3,
    pub view: Vec3,
    pub descriptor: Vec<f64>,
}

const UNIT_TOL: f64 = 1e-6;

fn encode_queries(arch: &MlpArchitecture, queries: &[SurfaceQuery]) -> Result<Array2<f64>> {
    let n = queries.len();
    let mut enc = Array2::<f64>::zeros((arch.encoded_width(), n));
    let pe = encoding_width(arch.pe_octaves);
    for (s, q) in queries.iter().enumerate() {
        if (q.normal.norm() - 1.0).abs() > UNIT_TOL || (q.view.norm() - 1.0).abs() > UNIT_TOL {
            return Err(Error::Precondition("normal and view direction must be unit vectors".into()));
        }
        if q.descriptor.len() != arch.descriptor_width {
            return Err(Error::DimensionMismatch(format!(
                "descriptor has {} channels, network expects {}",
                q.descriptor.len(),
                arch.descriptor_width
            )));
        }
        for c in 0..3 {
            enc[[c, s]] = q.x[c];
            enc[[3 + c, s]] = q.normal[c];
        }
        for (r, v) in positional_encoding(&q.view, arch.pe_octaves).into_iter().enumerate() {
            enc[[6 + r, s]] = v;
        }
        for (r, v) in q.descriptor.iter().enumerate() {
            enc[[6 + pe + r, s]] = *v;
        }
    }
    Ok(enc)
}

pub fn slf_forward(arch: &MlpArchitecture, params: &ParamStore, queries: &[SurfaceQuery]) -> Result<BatchTape> {
    check_kind(arch, NetKind::LightField)?;
    params.check_finite()?;
    let enc = encode_queries(arch, queries)?;
    forward(arch, &params.values, enc, JetOrder::Value, false)
}

/// Adjoints of the light-field inputs.
#[derive(Debug, Clone)]
pub struct QueryAdjoint {
    pub x: Vec3,
    pub normal: Vec3,
    pub descriptor: Vec<f64>,
}

/// Backpropagate colour adjoints (`3 x n`); accumulates parameter gradients
/// and returns per-query input adjoints.
pub fn slf_backward(arch: &MlpArchitecture, params: &ParamStore, tape: &BatchTape, seeds: &Array2<f64>, grad: &mut [f64]) -> Vec<QueryAdjoint> {
    let enc_adj = backward(arch, &params.values, tape, seeds, grad, true).expect("input adjoint requested");
    let pe = encoding_width(arch.pe_octaves);
    (0..tape.len())
        .map(|s| QueryAdjoint {
            x: Vec3::new(enc_adj[[0, s]], enc_adj[[1, s]], enc_adj[[2, s]]),
            normal: Vec3::new(enc_adj[[3, s]], enc_adj[[4, s]], enc_adj[[5, s]]),
            descriptor: (0..arch.descriptor_width).map(|r| enc_adj[[6 + pe + r, s]]).collect(),
        })
        .collect()
}

pub fn tape_rgb(tape: &BatchTape, s: usize) -> Vec3 {
    Vec3::new(tape.out(0, 0, s), tape.out(1, 0, s), tape.out(2, 0, s))
}

/// Colour of one surface point.
pub fn eval_slf(params: &ParamStore, arch: &MlpArchitecture, x: &Vec3, n: &Vec3, v: &Vec3, descriptor: &[f64]) -> Result<Vec3> {
    let q = SurfaceQuery {
        x: *x,
        normal: *n,
        view: *v,
        descriptor: descriptor.to_vec(),
    };
    let tape = slf_forward(arch, params, std::slice::from_ref(&q))?;
    Ok(tape_rgb(&tape, 0))
}
