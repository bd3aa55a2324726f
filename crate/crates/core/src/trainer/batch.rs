use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::scene::TrainingScene;
use crate::error::Result;
use crate::geom::Vec3;
use crate::losses::{PixelSample, SampleBatch};

/// Generator of the batch drawn at a global iteration: one ChaCha stream per
/// iteration, so any batch can be redrawn without replaying earlier ones.
pub fn batch_rng(seed: u64, iteration: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration);
    rng
}

/// Draw one batch. Data points are taken without replacement unless the
/// cloud is smaller than `n_data`; the returned flag reports that case.
/// All boundary points enter every batch. Pixels are only drawn when the
/// render term is active.
pub fn sample_batch(rng: &mut ChaCha8Rng, scene: &TrainingScene, config: &TrainConfig) -> Result<(SampleBatch, bool)> {
    let pts = scene.cloud().points();
    let (data, replaced) = if config.n_data <= pts.len() {
        let idx = index::sample(rng, pts.len(), config.n_data);
        (idx.into_iter().map(|i| pts[i]).collect(), false)
    } else {
        ((0..config.n_data).map(|_| pts[rng.gen_range(0..pts.len())]).collect(), true)
    };
    let uniform = (0..config.n_uniform)
        .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let mut pixels = Vec::new();
    if config.weights.render > 0.0 && scene.has_pixels() {
        let usable: Vec<usize> = (0..scene.views().len()).filter(|&v| !scene.valid_pixels(v).is_empty()).collect();
        for _ in 0..config.batch_size {
            let view = usable[rng.gen_range(0..usable.len())];
            let valid = scene.valid_pixels(view);
            let img = &scene.views()[view].0;
            for _ in 0..config.n_pixels_per_image {
                let (i, j) = valid[rng.gen_range(0..valid.len())];
                pixels.push(PixelSample {
                    camera: view,
                    pixel: (i as f64 + 0.5, j as f64 + 0.5),
                    rgb: img.get(i as usize, j as usize),
                });
            }
        }
    }
    Ok((
        SampleBatch {
            data,
            boundary: scene.boundary().to_vec(),
            uniform,
            pixels,
        },
        replaced,
    ))
}
