use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::tracer::RenderMode;

/// Optimization settings. One epoch is `iterations_per_epoch` sampled batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub iterations_per_epoch: usize,
    /// Images drawn per batch.
    pub batch_size: usize,
    pub n_data: usize,
    pub n_uniform: usize,
    pub n_pixels_per_image: usize,
    pub lr0: f64,
    pub decay_factor: f64,
    pub decay_start_fraction: f64,
    pub decay_interval_fraction: f64,
    pub warmup_fraction: f64,
    pub seed: u64,
    pub weights: LossWeights,
    /// Scales the parameter path through the re-parameterized hit point.
    pub intersection_grad_scale: f64,
    /// Replaces `lambda_n` from the middle of training on.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normal_weight_second_half: Option<f64>,
    /// Epochs between checkpoints; `None` means `max(1, epochs / 20)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1800,
            iterations_per_epoch: 1,
            batch_size: 8,
            n_data: 32768,
            n_uniform: 16384,
            n_pixels_per_image: 4096,
            lr0: 1e-3,
            decay_factor: 10f64.sqrt(),
            decay_start_fraction: 1.0 / 3.0,
            decay_interval_fraction: 1.0 / 6.0,
            warmup_fraction: 1.0 / 6.0,
            seed: 0,
            weights: LossWeights::default(),
            intersection_grad_scale: 1.0,
            normal_weight_second_half: None,
            checkpoint_every: None,
        }
    }
}

// epochs * fraction is floored after a tiny nudge so 1800 * (1/3) lands on 600
fn fraction_of(epochs: usize, f: f64) -> usize {
    (epochs as f64 * f + 1e-9).floor() as usize
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("decay_start_fraction", self.decay_start_fraction),
            ("decay_interval_fraction", self.decay_interval_fraction),
            ("warmup_fraction", self.warmup_fraction),
        ] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1], got {f}")));
            }
        }
        for (name, n) in [
            ("iterations_per_epoch", self.iterations_per_epoch),
            ("batch_size", self.batch_size),
            ("n_data", self.n_data),
            ("n_uniform", self.n_uniform),
            ("n_pixels_per_image", self.n_pixels_per_image),
        ] {
            if n == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config("lr0 must be positive".into()));
        }
        if !(self.decay_factor >= 1.0 && self.decay_factor.is_finite()) {
            return Err(Error::Config("decay_factor must be at least 1".into()));
        }
        if !(self.intersection_grad_scale >= 0.0 && self.intersection_grad_scale.is_finite()) {
            return Err(Error::Config("intersection_grad_scale must be non-negative".into()));
        }
        if let Some(l) = self.normal_weight_second_half {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::Config("normal_weight_second_half must be non-negative".into()));
            }
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::Config("checkpoint_every must be positive".into()));
        }
        self.weights.validate()
    }

    pub fn checkpoint_interval(&self) -> usize {
        self.checkpoint_every.unwrap_or((self.epochs / 20).max(1))
    }


    pub fn render_mode(&self, epoch: usize) -> RenderMode {
        if (epoch as f64) < self.warmup_fraction * self.epochs as f64 {
            RenderMode::Frozen
        } else {
            RenderMode::Differentiable
        }
    }

    /// Loss weights in force at `epoch`.
    pub fn weights_at(&self, epoch: usize) -> LossWeights {
        let mut w = self.weights;
        if let Some(l) = self.normal_weight_second_half {
            if 2 * epoch >= self.epochs {
                w.lambda_n = l;
            }
        }
        w
    }
}

/// Step schedule: `lr0` until `decay_start_fraction` of training, then one
/// division by `decay_factor` at that epoch and at every further
/// `decay_interval_fraction`.
pub fn lr_at(config: &TrainConfig, epoch: usize) -> f64 {
    let start = fraction_of(config.epochs, config.decay_start_fraction);
    let interval = fraction_of(config.epochs, config.decay_interval_fraction).max(1);
    if epoch < start {
        return config.lr0;
    }
    let decays = 1 + (epoch - start) / interval;
    config.lr0 / config.decay_factor.powi(decays as i32)
}
