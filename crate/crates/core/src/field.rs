//! Field abstractions shared by losses, tracer and mesher, so every stage
//! runs identically against analytic ground truth and the trained networks.

use crate::diffmlp::{
    sdf_forward, slf_forward, tape_descriptor, tape_gradient, tape_hessian_pairs, tape_rgb, tape_value, JetOrder, MlpArchitecture, ParamStore,
    SurfaceQuery,
};
use crate::error::Result;
use crate::geom::{sym_from_pairs, Mat3, Vec3};

/// Value and input derivatives of a scalar field at one point. Entries
/// beyond the requested order are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub value: f64,
    pub gradient: Vec3,
    pub hessian: Mat3,
}

impl FieldSample {
    pub fn value_only(value: f64) -> Self {
        Self {
            value,
            gradient: Vec3::zeros(),
            hessian: Mat3::zeros(),
        }
    }
}

/// A signed distance field, negative inside.
pub trait SdfField: Sync {
    fn sample(&self, xs: &[Vec3], order: JetOrder) -> Result<Vec<FieldSample>>;

    fn values(&self, xs: &[Vec3]) -> Result<Vec<f64>> {
        Ok(self.sample(xs, JetOrder::Value)?.into_iter().map(|s| s.value).collect())
    }

    fn value(&self, x: &Vec3) -> Result<f64> {
        Ok(self.values(std::slice::from_ref(x))?[0])
    }

    /// Width of the location descriptor fed to a light field (0 if none).
    fn descriptor_width(&self) -> usize {
        0
    }

    fn descriptors(&self, xs: &[Vec3]) -> Result<Vec<Vec<f64>>> {
        Ok(vec![Vec::new(); xs.len()])
    }
}

/// Colour of a surface point seen from a direction.
pub trait LightField: Sync {
    fn shade(&self, queries: &[SurfaceQuery]) -> Result<Vec<Vec3>>;
}

/// `f(x) = c` everywhere.
#[derive(Debug, Clone, Copy)]
pub struct ConstantField(pub f64);

impl SdfField for ConstantField {
    fn sample(&self, xs: &[Vec3], _order: JetOrder) -> Result<Vec<FieldSample>> {
        Ok(vec![FieldSample::value_only(self.0); xs.len()])
    }
}

/// `f(x) = w . x + b`.
#[derive(Debug, Clone, Copy)]
pub struct LinearField {
    pub weight: Vec3,
    pub bias: f64,
}

impl SdfField for LinearField {
    fn sample(&self, xs: &[Vec3], _order: JetOrder) -> Result<Vec<FieldSample>> {
        Ok(xs
            .iter()
            .map(|x| FieldSample {
                value: self.weight.dot(x) + self.bias,
                gradient: self.weight,
                hessian: Mat3::zeros(),
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantLight(pub Vec3);

impl LightField for ConstantLight {
    fn shade(&self, queries: &[SurfaceQuery]) -> Result<Vec<Vec3>> {
        Ok(vec![self.0; queries.len()])
    }
}

fn chunk_len(order: JetOrder) -> usize {
    match order {
        JetOrder::Value => 4096,
        JetOrder::Gradient => 1024,
        JetOrder::Hessian => 256,
    }
}

/// Distance network bound to its parameters.
#[derive(Debug, Clone, Copy)]
pub struct NeuralSdf<'a> {
    pub arch: &'a MlpArchitecture,
    pub params: &'a ParamStore,
}

impl<'a> NeuralSdf<'a> {
    pub fn new(arch: &'a MlpArchitecture, params: &'a ParamStore) -> Self {
        Self { arch, params }
    }
}

impl SdfField for NeuralSdf<'_> {
    fn sample(&self, xs: &[Vec3], order: JetOrder) -> Result<Vec<FieldSample>> {
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(chunk_len(order)) {
            let tape = sdf_forward(self.arch, self.params, chunk, order, true)?;
            for s in 0..chunk.len() {
                let mut fs = FieldSample::value_only(tape_value(&tape, s));
                if order >= JetOrder::Gradient {
                    fs.gradient = tape_gradient(&tape, s);
                }
                if order == JetOrder::Hessian {
                    fs.hessian = sym_from_pairs(&tape_hessian_pairs(&tape, s));
                }
                out.push(fs);
            }
        }
        Ok(out)
    }

    fn descriptor_width(&self) -> usize {
        self.arch.descriptor_width
    }

    fn descriptors(&self, xs: &[Vec3]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(chunk_len(JetOrder::Value)) {
            let tape = sdf_forward(self.arch, self.params, chunk, JetOrder::Value, false)?;
            out.extend((0..chunk.len()).map(|s| tape_descriptor(&tape, s)));
        }
        Ok(out)
    }
}

/// Light-field network bound to its parameters.
#[derive(Debug, Clone, Copy)]
pub struct NeuralLightField<'a> {
    pub arch: &'a MlpArchitecture,
    pub params: &'a ParamStore,
}

impl<'a> NeuralLightField<'a> {
    pub fn new(arch: &'a MlpArchitecture, params: &'a ParamStore) -> Self {
        Self { arch, params }
    }
}

impl LightField for NeuralLightField<'_> {
    fn shade(&self, queries: &[SurfaceQuery]) -> Result<Vec<Vec3>> {
        let mut out = Vec::with_capacity(queries.len());
        for chunk in queries.chunks(1024) {
            let tape = slf_forward(self.arch, self.params, chunk)?;
            out.extend((0..chunk.len()).map(|s| tape_rgb(&tape, s)));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmlp::{eval_sdf, grad_sdf, hessian_sdf, init_params};

    #[test]
    fn neural_field_matches_point_evaluation() {
        let arch = MlpArchitecture::sdf(vec![16, 16], vec![], 2, 3);
        let params = init_params(&arch, 4);
        let field = NeuralSdf::new(&arch, &params);
        let xs: Vec<Vec3> = (0..300).map(|i| Vec3::new(i as f64 / 300.0, 0.2, -0.1)).collect();
        let samples = field.sample(&xs, JetOrder::Hessian).unwrap();
        let descs = field.descriptors(&xs).unwrap();
        for (i, x) in xs.iter().enumerate().step_by(37) {
            let ev = eval_sdf(&params, &arch, x).unwrap();
            assert_eq!(samples[i].value, ev.distance);
            assert_eq!(samples[i].gradient, grad_sdf(&ev.record).unwrap());
            assert_eq!(samples[i].hessian, hessian_sdf(&ev.record).unwrap());
            assert_eq!(descs[i], ev.descriptor);
        }
    }
}
