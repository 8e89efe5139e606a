//! Mini-batch Adam training with loss-based early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::kernels::{self, BackScratch, Real, Trace};
use super::shape::{CLASSES, IN_H, IN_W, N_PARAMS};
use super::{CnnModel, Sample};
use crate::error::{Error, Result};
use crate::task::Task;

/// Samples per independently accumulated gradient chunk. Chunk sums are
/// added in chunk order, so results do not depend on the thread count.
const CHUNK: usize = 16;

/// Arithmetic used for the forward/backward passes during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Single,
    Double,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Consecutive epochs without improvement before stopping.
    pub patience: usize,
    /// An epoch improves only if its loss is below the best so far by more than this.
    pub min_improvement: f64,
    pub adam: AdamConfig,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 50,
            batch_size: 128,
            patience: 5,
            min_improvement: 0.01,
            adam: AdamConfig::default(),
            seed: 0,
            precision: Precision::Single,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the last epoch run (not the best epoch).
    pub model: CnnModel,
    /// Mean per-sample training loss of each epoch.
    pub loss_history: Vec<f64>,
    pub stopped_early: bool,
}

/// Sum of per-sample losses; `grad` receives the gradient of the mean loss.
pub(crate) fn batch_gradient<T: Real>(params: &[T], batch: &[Sample<'_>], grad: &mut [T]) -> f64 {
    let scale = T::from_f64(1.0 / batch.len() as f64);
    let parts: Vec<(Vec<T>, f64)> = batch
        .par_chunks(CHUNK)
        .map_init(
            || (Trace::<T>::default(), BackScratch::<T>::default()),
            |(trace, scratch), chunk| {
                let mut g = vec![T::ZERO; N_PARAMS];
                let mut loss = 0.0;
                for (img, label) in chunk {
                    kernels::forward(params, img, trace);
                    loss += kernels::cross_entropy(trace.probabilities(), *label);
                    kernels::backward(params, trace, *label, scale, &mut g, scratch);
                }
                (g, loss)
            },
        )
        .collect();
    grad.fill(T::ZERO);
    let mut loss = 0.0;
    for (g, l) in parts {
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += *b;
        }
        loss += l;
    }
    loss
}

/// Train a fresh network for `task`. Labels are 0 (negative) or 1 (positive).
pub fn train(task: Task, samples: &[Sample<'_>], config: &TrainConfig) -> Result<TrainOutcome> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no training samples".into()));
    }
    if config.batch_size == 0 || config.max_epochs == 0 {
        return Err(Error::InvalidArgument("batch size and epoch count must be positive".into()));
    }
    let mut seen = [false; CLASSES];
    for (img, label) in samples {
        if img.data.len() != IN_H * IN_W {
            return Err(Error::ShapeMismatch {
                expected: format!("{IN_H}x{IN_W} image"),
                actual: format!("{} values", img.data.len()),
            });
        }
        *seen
            .get_mut(*label)
            .ok_or_else(|| Error::InvalidArgument(format!("label {label} out of range")))? = true;
    }
    if !seen.iter().all(|&s| s) {
        return Err(Error::SingleClass);
    }

    let init = CnnModel::init(task, config.seed);
    let (params, loss_history, stopped_early) = match config.precision {
        Precision::Single => run::<f32>(init.params(), samples, config)?,
        Precision::Double => run::<f64>(init.params(), samples, config)?,
    };
    let mut model = CnnModel::from_params(task, params);
    model.round_to_storage();
    Ok(TrainOutcome { model, loss_history, stopped_early })
}

fn run<T: Real>(
    init: &[f64],
    samples: &[Sample<'_>],
    config: &TrainConfig,
) -> Result<(Vec<f64>, Vec<f64>, bool)> {
    let mut params: Vec<T> = init.iter().map(|&p| T::from_f64(p)).collect();
    let mut grad = vec![T::ZERO; N_PARAMS];
    let mut adam = AdamState::<T>::new(N_PARAMS);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);

    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut batch: Vec<Sample<'_>> = Vec::with_capacity(config.batch_size);
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(idx.iter().map(|&i| samples[i]));
            total += batch_gradient(&params, &batch, &mut grad);
            adam.step(&mut params, &grad, &config.adam)?;
        }
        let loss = total / samples.len() as f64;
        history.push(loss);
        log::debug!("epoch {} loss {loss:.5}", epoch + 1);
        if loss < best - config.min_improvement {
            best = loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                return Ok((params.iter().map(|p| p.to_f64()).collect(), history, true));
            }
        }
    }
    Ok((params.iter().map(|p| p.to_f64()).collect(), history, false))
}
