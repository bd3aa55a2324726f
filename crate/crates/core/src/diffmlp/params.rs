use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arch::{MlpArchitecture, ParamLayout, SegmentKind};
use crate::error::{Error, Result};

/// Flat parameter vector with the layout implied by its architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    pub values: Vec<f64>,
    pub layout: ParamLayout,
}

impl ParamStore {
    pub fn zeros(arch: &MlpArchitecture) -> Self {
        let layout = arch.layout();
        Self {
            values: vec![0.0; layout.len],
            layout,
        }
    }

    pub fn from_values(arch: &MlpArchitecture, values: Vec<f64>) -> Result<Self> {
        let layout = arch.layout();
        if values.len() != layout.len {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters supplied, architecture needs {}",
                values.len(),
                layout.len
            )));
        }
        Ok(Self { values, layout })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::numeric(format!("parameter {i} is not finite"))),
        }
    }
}

/// Fan-in scaled uniform weights, `U(-a, a)` with `a = sqrt(6 / fan_in)`
/// (variance `2 / fan_in`), zero biases.
pub fn init_params(arch: &MlpArchitecture, seed: u64) -> ParamStore {
    let mut store = ParamStore::zeros(arch);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for seg in store.layout.segments.clone() {
        if seg.kind == SegmentKind::Weight {
            let a = (6.0 / seg.cols as f64).sqrt();
            for v in &mut store.values[seg.range()] {
                *v = rng.gen_range(-a..a);
            }
        }
    }
    store
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let arch = MlpArchitecture::sdf(vec![32, 32], vec![], 2, 4);
        assert_eq!(init_params(&arch, 1), init_params(&arch, 1));
        assert_ne!(init_params(&arch, 1), init_params(&arch, 2));
    }

    #[test]
    fn biases_start_at_zero() {
        let arch = MlpArchitecture::sdf(vec![16, 16], vec![1], 1, 2);
        let p = init_params(&arch, 9);
        for seg in &p.layout.segments {
            if seg.kind == SegmentKind::Bias {
                assert!(p.values[seg.range()].iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn length_checked() {
        let arch = MlpArchitecture::sdf(vec![4], vec![], 0, 0);
        assert!(ParamStore::from_values(&arch, vec![0.0; 3]).is_err());
        assert!(ParamStore::from_values(&arch, vec![0.0; arch.param_count()]).is_ok());
    }
}
