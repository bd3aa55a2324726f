//! Batched forward jets through the MLP and the matching reverse pass.
//!
//! Every activation matrix has one row per unit and `K * n` columns, where
//! `K` is the number of jet components (value, 3 input tangents, 6 unique
//! second derivatives) and column `c * n + s` holds component `c` of sample
//! `s`. Linear layers act on all components with one GEMM; only the value
//! component receives the bias. The reverse pass differentiates the whole
//! jet computation, so seeding tangent or second-order components yields
//! exact parameter gradients of gradient- and Hessian-based losses.

use ndarray::{linalg::general_mat_mul, s, Array2, ArrayView2, ArrayViewMut2, Axis};

use super::arch::{FinalActivation, MlpArchitecture};
use crate::error::{Error, Result};
use crate::geom::HESSIAN_PAIRS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum JetOrder {
    Value,
    Gradient,
    Hessian,
}

impl JetOrder {
    pub fn width(self) -> usize {
        match self {
            JetOrder::Value => 1,
            JetOrder::Gradient => 4,
            JetOrder::Hessian => 10,
        }
    }
}

/// Cached forward pass over a batch.
#[derive(Debug, Clone)]
pub struct BatchTape {
    pub(crate) order: JetOrder,
    pub(crate) n: usize,
    /// Input to each linear layer (skip concatenation included).
    pub(crate) inputs: Vec<Array2<f64>>,
    /// Pre-activation of each linear layer.
    pub(crate) pre: Vec<Array2<f64>>,
    pub(crate) output: Array2<f64>,
    /// Only the first `head_rows` output rows were computed.
    pub(crate) head_rows: usize,
}

impl BatchTape {
    pub fn order(&self) -> JetOrder {
        self.order
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Component `comp` of output row `row` for sample `s`.
    #[inline]
    pub fn out(&self, row: usize, comp: usize, s: usize) -> f64 {
        self.output[[row, comp * self.n + s]]
    }

    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn head_rows(&self) -> usize {
        self.head_rows
    }
}

fn weight_view<'a>(params: &'a [f64], arch: &MlpArchitecture, l: usize) -> ArrayView2<'a, f64> {
    let seg = arch.layout().weight(l);
    ArrayView2::from_shape((seg.rows, seg.cols), &params[seg.range()]).expect("layout")
}

/// Propagate jets through the activation, elementwise per unit and sample.
fn activation_forward(z: &Array2<f64>, n: usize, order: JetOrder, derivs: impl Fn(f64) -> [f64; 4]) -> Array2<f64> {
    let mut a = Array2::<f64>::zeros(z.raw_dim());
    for (zr, mut ar) in z.outer_iter().zip(a.outer_iter_mut()) {
        let zr = zr.as_slice().expect("row-major");
        let ar = ar.as_slice_mut().expect("row-major");
        for s in 0..n {
            let d = derivs(zr[s]);
            ar[s] = d[0];
            if order >= JetOrder::Gradient {
                let zi = [zr[n + s], zr[2 * n + s], zr[3 * n + s]];
                for i in 0..3 {
                    ar[(1 + i) * n + s] = d[1] * zi[i];
                }
                if order == JetOrder::Hessian {
                    for (p, &(i, j)) in HESSIAN_PAIRS.iter().enumerate() {
                        let col = (4 + p) * n + s;
                        ar[col] = d[2] * zi[i] * zi[j] + d[1] * zr[col];
                    }
                }
            }
        }
    }
    a
}

/// Adjoint of [`activation_forward`]; `abar` is overwritten with `zbar`.
fn activation_backward(z: ArrayView2<f64>, abar: &mut ArrayViewMut2<f64>, n: usize, order: JetOrder, derivs: impl Fn(f64) -> [f64; 4]) {
    for (zr, mut gr) in z.outer_iter().zip(abar.outer_iter_mut()) {
        let zr = zr.as_slice().expect("row-major");
        let gr = gr.as_slice_mut().expect("row-major");
        for s in 0..n {
            let d = derivs(zr[s]);
            let a0 = gr[s];
            let mut z0 = a0 * d[1];
            if order >= JetOrder::Gradient {
                let zi = [zr[n + s], zr[2 * n + s], zr[3 * n + s]];
                let ai = [gr[n + s], gr[2 * n + s], gr[3 * n + s]];
                let mut zbar_i = [0.0; 3];
                for i in 0..3 {
                    z0 += ai[i] * d[2] * zi[i];
                    zbar_i[i] = ai[i] * d[1];
                }
                if order == JetOrder::Hessian {
                    for (p, &(i, j)) in HESSIAN_PAIRS.iter().enumerate() {
                        let col = (4 + p) * n + s;
                        let aij = gr[col];
                        z0 += aij * (d[3] * zi[i] * zi[j] + d[2] * zr[col]);
                        zbar_i[i] += aij * d[2] * zi[j];
                        zbar_i[j] += aij * d[2] * zi[i];
                        gr[col] = aij * d[1];
                    }
                }
                for i in 0..3 {
                    gr[(1 + i) * n + s] = zbar_i[i];
                }
            }
            gr[s] = z0;
        }
    }
}

fn check_finite(m: &Array2<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::numeric(what.to_string()))
    }
}

/// Forward jets of the network for an already-encoded input.
///
/// `head_only` restricts the final layer to the output head, skipping the
/// descriptor rows.
pub(crate) fn forward(
    arch: &MlpArchitecture,
    params: &[f64],
    enc: Array2<f64>,
    order: JetOrder,
    head_only: bool,
) -> Result<BatchTape> {
    let k = order.width();
    debug_assert_eq!(enc.ncols() % k, 0);
    let n = enc.ncols() / k;
    let layout = arch.layout();
    let n_layers = arch.n_layers();
    let mut inputs = Vec::with_capacity(n_layers);
    let mut pre = Vec::with_capacity(n_layers);
    let mut current = enc.clone();
    let mut head_rows = 0;
    for l in 0..n_layers {
        if l > 0 && arch.skip_layers.contains(&l) {
            current = ndarray::concatenate(Axis(0), &[current.view(), enc.view()]).expect("skip concat");
        }
        let w_full = weight_view(params, arch, l);
        let last = l + 1 == n_layers;
        let rows = if last && head_only { arch.output_width } else { w_full.nrows() };
        if last {
            head_rows = rows;
        }
        let w = w_full.slice(s![..rows, ..]);
        let mut z = Array2::<f64>::zeros((rows, k * n));
        general_mat_mul(1.0, &w, &current, 0.0, &mut z);
        let bias = &params[layout.bias(l).range()];
        for (r, mut row) in z.outer_iter_mut().enumerate() {
            row.slice_mut(s![..n]).mapv_inplace(|v| v + bias[r]);
        }
        let a = if last {
            let mut out = z.clone();
            if arch.final_activation != FinalActivation::None {
                let fa = arch.final_activation;
                let head = z.slice(s![..arch.output_width, ..]).to_owned();
                let squashed = activation_forward(&head, n, order, |v| fa.derivatives(v));
                out.slice_mut(s![..arch.output_width, ..]).assign(&squashed);
            }
            out
        } else {
            let act = arch.activation;
            activation_forward(&z, n, order, |v| act.derivatives(v))
        };
        inputs.push(std::mem::replace(&mut current, a));
        pre.push(z);
    }
    check_finite(&current, "network forward pass")?;
    Ok(BatchTape {
        order,
        n,
        inputs,
        pre,
        output: current,
        head_rows,
    })
}

/// Reverse pass: accumulates `d(loss)/d(params)` into `grad` given the
/// adjoint `seeds` of every output jet component. Returns the adjoint of the
/// encoded input when `want_input` is set.
pub(crate) fn backward(
    arch: &MlpArchitecture,
    params: &[f64],
    tape: &BatchTape,
    seeds: &Array2<f64>,
    grad: &mut [f64],
    want_input: bool,
) -> Option<Array2<f64>> {
    let n = tape.n;
    let order = tape.order;
    let layout = arch.layout();
    let n_layers = arch.n_layers();
    let enc_width = arch.encoded_width();
    assert_eq!(seeds.dim(), tape.output.dim(), "seed shape");

    let mut g = seeds.clone();
    if arch.final_activation != FinalActivation::None {
        let fa = arch.final_activation;
        let z_head = tape.pre[n_layers - 1].slice(s![..arch.output_width, ..]);
        let mut g_head = g.slice_mut(s![..arch.output_width, ..]);
        activation_backward(z_head, &mut g_head, n, order, |v| fa.derivatives(v));
    }
    let mut enc_adj = want_input.then(|| Array2::<f64>::zeros((enc_width, order.width() * n)));

    for l in (0..n_layers).rev() {
        let a_in = &tape.inputs[l];
        let rows = g.nrows();
        let wseg = layout.weight(l);
        {
            let wgrad = &mut grad[wseg.range()];
            let mut wbar = ArrayViewMut2::from_shape((wseg.rows, wseg.cols), wgrad).expect("layout");
            let mut wbar = wbar.slice_mut(s![..rows, ..]);
            general_mat_mul(1.0, &g, &a_in.t(), 1.0, &mut wbar);
        }
        let bseg = layout.bias(l);
        for (r, row) in g.outer_iter().enumerate() {
            grad[bseg.offset + r] += row.slice(s![..n]).sum();
        }
        if l == 0 && !want_input {
            break;
        }
        let w = weight_view(params, arch, l);
        let w = w.slice(s![..rows, ..]);
        let mut abar = Array2::<f64>::zeros(a_in.raw_dim());
        general_mat_mul(1.0, &w.t(), &g, 0.0, &mut abar);
        if l == 0 {
            if let Some(e) = enc_adj.as_mut() {
                *e += &abar;
            }
            break;
        }
        let width_prev = arch.hidden[l - 1];
        if arch.skip_layers.contains(&l) {
            if let Some(e) = enc_adj.as_mut() {
                *e += &abar.slice(s![width_prev.., ..]);
            }
        }
        let mut abar_prev = abar.slice(s![..width_prev, ..]).to_owned();
        let act = arch.activation;
        activation_backward(tape.pre[l - 1].view(), &mut abar_prev.view_mut(), n, order, |v| act.derivatives(v));
        g = abar_prev;
    }
    enc_adj
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmlp::encoding::encode_points;
    use crate::diffmlp::params::init_params;
    use crate::geom::Vec3;

    #[test]
    fn value_components_agree_across_orders() {
        let arch = MlpArchitecture::sdf(vec![16, 16, 16], vec![2], 2, 3);
        let p = init_params(&arch, 5);
        let pts = vec![Vec3::new(0.1, 0.2, -0.3), Vec3::new(-0.5, 0.4, 0.9)];
        let t0 = forward(&arch, &p.values, encode_points(&pts, 2, JetOrder::Value), JetOrder::Value, false).unwrap();
        let t2 = forward(&arch, &p.values, encode_points(&pts, 2, JetOrder::Hessian), JetOrder::Hessian, false).unwrap();
        for r in 0..4 {
            for s in 0..2 {
                assert_eq!(t0.out(r, 0, s), t2.out(r, 0, s));
            }
        }
        let th = forward(&arch, &p.values, encode_points(&pts, 2, JetOrder::Gradient), JetOrder::Gradient, true).unwrap();
        assert_eq!(th.output.nrows(), 1);
        assert_eq!(th.out(0, 2, 1), t2.out(0, 2, 1));
    }
}
