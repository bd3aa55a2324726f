use crate::error::{Error, Result};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    /// `ln(1 + exp(beta z)) / beta`, smooth to all orders.
    Softplus { beta: f64 },
    Relu,
}

impl Activation {
    pub fn id(&self) -> u8 {
        match self {
            Activation::Softplus { .. } => 0,
            Activation::Relu => 1,
        }
    }

    pub fn is_twice_differentiable(&self) -> bool {
        matches!(self, Activation::Softplus { .. })
    }

    /// Value and first three derivatives at `z`.
    #[inline]
    pub fn derivatives(&self, z: f64) -> [f64; 4] {
        match *self {
            Activation::Softplus { beta } => {
                let bz = beta * z;
                let value = (bz.max(0.0) + (-bz.abs()).exp().ln_1p()) / beta;
                let s = sigmoid(bz);
                let ds = s * (1.0 - s);
                [value, s, beta * ds, beta * beta * ds * (1.0 - 2.0 * s)]
            }
            Activation::Relu => {
                if z > 0.0 {
                    [z, 1.0, 0.0, 0.0]
                } else {
                    [0.0, 0.0, 0.0, 0.0]
                }
            }
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Activation::Softplus { beta } => write!(f, "softplus(beta={beta})"),
            Activation::Relu => write!(f, "relu"),
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Squashing applied to the output head only; descriptor channels are never squashed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinalActivation {
    None,
    Sigmoid,
}

impl FinalActivation {
    pub fn id(&self) -> u8 {
        match self {
            FinalActivation::None => 0,
            FinalActivation::Sigmoid => 1,
        }
    }

    #[inline]
    pub(crate) fn derivatives(&self, z: f64) -> [f64; 4] {
        match self {
            FinalActivation::None => [z, 1.0, 0.0, 0.0],
            FinalActivation::Sigmoid => {
                let s = sigmoid(z);
                let ds = s * (1.0 - s);
                [s, ds, ds * (1.0 - 2.0 * s), ds * (1.0 - 6.0 * ds)]
            }
        }
    }
}

/// What the network consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetKind {
    /// A 3D location, positional-encoded inside the network; outputs a
    /// distance plus `descriptor_width` descriptor channels.
    Sdf,
    /// A surface query `(x, n, encoded v, descriptor)`; `descriptor_width`
    /// is the width of the incoming descriptor.
    LightField,
}

impl NetKind {
    pub fn id(&self) -> u8 {
        match self {
            NetKind::Sdf => 0,
            NetKind::LightField => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpArchitecture {
    pub kind: NetKind,
    /// Widths of the hidden layers.
    pub hidden: Vec<usize>,
    /// Linear layers (1-based into `hidden`) that also receive the encoded input.
    pub skip_layers: Vec<usize>,
    pub activation: Activation,
    /// Octaves for positions (SDF) or view directions (light field).
    pub pe_octaves: usize,
    pub output_width: usize,
    pub descriptor_width: usize,
    pub final_activation: FinalActivation,
}

pub const DEFAULT_SOFTPLUS_BETA: f64 = 100.0;

impl MlpArchitecture {
    pub fn sdf(hidden: Vec<usize>, skip_layers: Vec<usize>, pe_octaves: usize, descriptor_width: usize) -> Self {
        Self {
            kind: NetKind::Sdf,
            hidden,
            skip_layers,
            activation: Activation::Softplus {
                beta: DEFAULT_SOFTPLUS_BETA,
            },
            pe_octaves,
            output_width: 1,
            descriptor_width,
            final_activation: FinalActivation::None,
        }
    }

    /// 8 x 512 with a middle skip, 6 octaves, 256-channel descriptor.
    pub fn default_sdf() -> Self {
        Self::sdf(vec![512; 8], vec![4], 6, 256)
    }

    pub fn light_field(hidden: Vec<usize>, descriptor_width: usize, view_octaves: usize) -> Self {
        Self {
            kind: NetKind::LightField,
            hidden,
            skip_layers: Vec::new(),
            activation: Activation::Relu,
            pe_octaves: view_octaves,
            output_width: 3,
            descriptor_width,
            final_activation: FinalActivation::Sigmoid,
        }
    }

    pub fn default_light_field() -> Self {
        Self::light_field(vec![512; 4], 256, 4)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() && !self.skip_layers.is_empty() {
            return Err(Error::Config("skip layers need hidden layers".into()));
        }
        if self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.output_width == 0 {
            return Err(Error::Config("output width must be positive".into()));
        }
        for &s in &self.skip_layers {
            if s == 0 || s >= self.hidden.len() {
                return Err(Error::Config(format!(
                    "skip layer {s} outside 1..{}",
                    self.hidden.len().saturating_sub(1)
                )));
            }
        }
        if let Activation::Softplus { beta } = self.activation {
            if !(beta > 0.0 && beta.is_finite()) {
                return Err(Error::Config(format!("softplus beta {beta} must be positive")));
            }
        }
        Ok(())
    }

    /// Fails when second derivatives are requested from a rectifier network.
    pub fn require_hessian(&self) -> Result<()> {
        if self.activation.is_twice_differentiable() {
            Ok(())
        } else {
            Err(Error::UnsupportedActivation(self.activation.to_string()))
        }
    }

    /// Width of the vector fed to the first linear layer.
    pub fn encoded_width(&self) -> usize {
        let pe = 3 * (1 + 2 * self.pe_octaves);
        match self.kind {
            NetKind::Sdf => pe,
            NetKind::LightField => 6 + pe + self.descriptor_width,
        }
    }

    pub fn output_rows(&self) -> usize {
        match self.kind {
            NetKind::Sdf => self.output_width + self.descriptor_width,
            NetKind::LightField => self.output_width,
        }
    }

    pub fn n_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    /// `(fan_in, fan_out)` of linear layer `l`.
    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        let enc = self.encoded_width();
        let fan_in = if l == 0 {
            enc
        } else {
            self.hidden[l - 1] + if self.skip_layers.contains(&l) { enc } else { 0 }
        };
        let fan_out = if l < self.hidden.len() {
            self.hidden[l]
        } else {
            self.output_rows()
        };
        (fan_in, fan_out)
    }

    pub fn layout(&self) -> ParamLayout {
        let mut segments = Vec::with_capacity(2 * self.n_layers());
        let mut offset = 0;
        for l in 0..self.n_layers() {
            let (fan_in, fan_out) = self.layer_shape(l);
            segments.push(Segment {
                layer: l,
                kind: SegmentKind::Weight,
                offset,
                rows: fan_out,
                cols: fan_in,
            });
            offset += fan_in * fan_out;
            segments.push(Segment {
                layer: l,
                kind: SegmentKind::Bias,
                offset,
                rows: fan_out,
                cols: 1,
            });
            offset += fan_out;
        }
        ParamLayout {
            segments,
            len: offset,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layout().len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Weight,
    Bias,
}

/// One contiguous block of the flat parameter vector. Weights are row-major
/// `rows x cols` (`fan_out x fan_in`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub layer: usize,
    pub kind: SegmentKind,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub segments: Vec<Segment>,
    pub len: usize,
}

impl ParamLayout {
    pub fn weight(&self, layer: usize) -> Segment {
        self.segments[2 * layer]
    }

    pub fn bias(&self, layer: usize) -> Segment {
        self.segments[2 * layer + 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_counts_skip_inputs() {
        let arch = MlpArchitecture::sdf(vec![8, 8, 8], vec![2], 1, 4);
        let enc = 9;
        assert_eq!(arch.layer_shape(0), (enc, 8));
        assert_eq!(arch.layer_shape(1), (8, 8));
        assert_eq!(arch.layer_shape(2), (8 + enc, 8));
        assert_eq!(arch.layer_shape(3), (8, 5));
        let expected = enc * 8 + 8 + 64 + 8 + (8 + enc) * 8 + 8 + 8 * 5 + 5;
        assert_eq!(arch.param_count(), expected);
        let layout = arch.layout();
        assert_eq!(layout.segments.last().unwrap().range().end, layout.len);
    }

    #[test]
    fn invalid_skips_rejected() {
        let mut arch = MlpArchitecture::sdf(vec![8, 8], vec![2], 0, 0);
        assert!(arch.validate().is_err());
        arch.skip_layers = vec![0];
        assert!(arch.validate().is_err());
        arch.skip_layers = vec![1];
        assert!(arch.validate().is_ok());
    }

    #[test]
    fn rectifier_cannot_provide_hessian() {
        let arch = MlpArchitecture::default_light_field();
        assert!(matches!(arch.require_hessian(), Err(Error::UnsupportedActivation(_))));
        assert!(MlpArchitecture::default_sdf().require_hessian().is_ok());
    }

    #[test]
    fn softplus_derivatives_match_finite_differences() {
        let act = Activation::Softplus { beta: 7.0 };
        for &z in &[-0.4, -0.05, 0.0, 0.03, 0.5] {
            let h = 1e-6;
            let d = act.derivatives(z);
            let p = act.derivatives(z + h);
            let m = act.derivatives(z - h);
            for k in 0..3 {
                let fd = (p[k] - m[k]) / (2.0 * h);
                assert!((fd - d[k + 1]).abs() < 1e-6 * (1.0 + d[k + 1].abs()), "order {k} at {z}");
            }
        }
        let sig = FinalActivation::Sigmoid;
        for &z in &[-2.0, 0.0, 1.3] {
            let h = 1e-6;
            let d = sig.derivatives(z);
            let p = sig.derivatives(z + h);
            let m = sig.derivatives(z - h);
            for k in 0..3 {
                let fd = (p[k] - m[k]) / (2.0 * h);
                assert!((fd - d[k + 1]).abs() < 1e-7, "sigmoid order {k} at {z}");
            }
        }
    }

    #[test]
    fn softplus_is_stable_for_large_arguments() {
        let act = Activation::Softplus { beta: 100.0 };
        assert_eq!(act.derivatives(50.0)[0], 50.0);
        assert_eq!(act.derivatives(-50.0)[0], 0.0);
        assert!(act.derivatives(1e4).iter().all(|v| v.is_finite()));
    }
}
