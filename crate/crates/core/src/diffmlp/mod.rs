//! Multilayer perceptrons with exact input derivatives up to second order
//! and exact parameter gradients of losses built from them.

mod arch;
pub mod checkpoint;
mod encoding;
mod eval;
mod jet;
mod params;

pub use arch::{Activation, FinalActivation, MlpArchitecture, NetKind, ParamLayout, Segment, SegmentKind, DEFAULT_SOFTPLUS_BETA};
pub use encoding::{encoding_width, positional_encoding};
pub use eval::{
    eval_sdf, eval_slf, grad_sdf, hessian_sdf, param_gradient, sdf_backward, sdf_forward, slf_backward, slf_forward, tape_descriptor,
    tape_gradient, tape_hessian_pairs, tape_rgb, tape_value, zero_seeds, EvalRecord, QueryAdjoint, SdfEval, SurfaceQuery,
};
pub use jet::{BatchTape, JetOrder};
pub use params::{init_params, ParamStore};
