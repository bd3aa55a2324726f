//! Optimization loop: batch sampling, Adam, learning-rate schedule,
//! warm-up and checkpoints.

mod batch;
mod checkpoint;
mod config;
mod optim;
mod scene;
mod step;

use std::path::Path;

pub use batch::{batch_rng, sample_batch};
pub use checkpoint::{decode_state, encode_state, load_training, save_training, LIGHT_CHECKPOINT, LOSS_LOG, SDF_CHECKPOINT, STATE_FILE};
pub use config::{lr_at, TrainConfig};
pub use optim::{OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use scene::{normalize_scene, Model, SceneTransform, TrainingScene, DEFAULT_PADDING};
pub use step::{loss_and_gradient, train_step, Gradients, StepReport, TrainState, MAX_CONSECUTIVE_SKIPS};

use crate::error::Result;

/// Outcome of a training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub state: TrainState,
    /// One loss line per iteration since the start of training.
    pub log: Vec<String>,
    pub skipped_steps: usize,
    /// Batches that had to draw data points with replacement.
    pub resampled_batches: usize,
}

/// Run the remaining epochs of `state`. `log` holds the lines of earlier
/// epochs when resuming. With a checkpoint directory, networks, state and
/// log are saved every `checkpoint_interval` epochs and at the end.
pub fn train(scene: &TrainingScene, config: &TrainConfig, state: TrainState, log: Vec<String>, checkpoint_dir: Option<&Path>) -> Result<TrainReport> {
    train_until(scene, config, state, log, checkpoint_dir, config.epochs)
}

/// [`train`] stopped before epoch `stop` (as if interrupted there); the
/// final save still happens.
pub fn train_until(
    scene: &TrainingScene,
    config: &TrainConfig,
    state: TrainState,
    log: Vec<String>,
    checkpoint_dir: Option<&Path>,
    stop: usize,
) -> Result<TrainReport> {
    config.validate()?;
    state.model.validate()?;
    let mut report = TrainReport {
        state,
        log,
        skipped_steps: 0,
        resampled_batches: 0,
    };
    let every = config.checkpoint_interval();
    while report.state.epoch < config.epochs.min(stop) {
        let epoch = report.state.epoch;
        for it in 0..config.iterations_per_epoch {
            let global = epoch * config.iterations_per_epoch + it;
            let mut rng = batch_rng(config.seed, global as u64);
            let (batch, replaced) = sample_batch(&mut rng, scene, config)?;
            if replaced {
                if report.resampled_batches == 0 {
                    log::warn!("cloud has {} points, fewer than n_data = {}; sampling with replacement", scene.cloud().len(), config.n_data);
                }
                report.resampled_batches += 1;
            }
            let step = train_step(&mut report.state, scene, &batch, config, epoch)?;
            if !step.applied {
                report.skipped_steps += 1;
            }
            let line = step.breakdown.log_line(global, step.lr);
            log::debug!("{line}");
            report.log.push(line);
        }
        report.state.epoch += 1;
        if let Some(dir) = checkpoint_dir {
            if report.state.epoch % every == 0 && report.state.epoch < config.epochs {
                save_training(dir, &report.state, &report.log)?;
            }
        }
    }
    if let Some(dir) = checkpoint_dir {
        save_training(dir, &report.state, &report.log)?;
    }
    Ok(report)
}
