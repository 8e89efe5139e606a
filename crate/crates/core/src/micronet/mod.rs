//! Small convolutional classifier trained from scratch.
//!
//! Two 16-filter 3x3 conv + relu + 2x2 max-pool stages, a 128-unit relu
//! hidden layer and a two-way softmax. See [`shape`] for the dimension chain.

mod adam;
mod kernels;
pub mod shape;
mod train;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use adam::{AdamConfig, AdamState};
pub use kernels::{cross_entropy, Real, Trace};
pub use train::{train, Precision, TrainConfig, TrainOutcome};

use crate::container::{Family, ModelBlob};
use crate::error::{Error, Result};
use crate::images::FeatureImage;
use crate::task::Task;
use shape::*;

/// Network parameters for one task, flattened in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    task: Task,
    params: Vec<f64>,
}

/// A labelled training example; label 1 is the positive class of the task.
pub type Sample<'a> = (&'a FeatureImage, usize);

impl CnnModel {
    pub fn zeros(task: Task) -> Self {
        Self { task, params: vec![0.0; N_PARAMS] }
    }

    /// Uniform He initialization (bound sqrt(6 / fan_in)), zero biases.
    /// Weights are rounded to f32 so the model is exactly representable on disk.
    pub fn init(task: Task, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; N_PARAMS];
        {
            let p = kernels::split_mut(&mut params);
            let fill = |w: &mut [f64], fan_in: usize, rng: &mut ChaCha8Rng| {
                let bound = (6.0 / fan_in as f64).sqrt();
                for v in w {
                    *v = rng.gen_range(-bound..bound) as f32 as f64;
                }
            };
            fill(p.conv1_w, KERNEL * KERNEL, &mut rng);
            fill(p.conv2_w, FILTERS * KERNEL * KERNEL, &mut rng);
            fill(p.dense_w, FLAT, &mut rng);
            fill(p.out_w, HIDDEN, &mut rng);
        }
        Self { task, params }
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub(crate) fn from_params(task: Task, params: Vec<f64>) -> Self {
        assert_eq!(params.len(), N_PARAMS);
        Self { task, params }
    }

    /// Round every parameter to the nearest f32.
    pub fn round_to_storage(&mut self) {
        self.params.iter_mut().for_each(|p| *p = *p as f32 as f64);
    }

    fn check(image: &FeatureImage) -> Result<()> {
        if image.data.len() != IN_H * IN_W {
            return Err(Error::ShapeMismatch {
                expected: format!("{IN_H}x{IN_W} image"),
                actual: format!("{} values", image.data.len()),
            });
        }
        Ok(())
    }

    /// Class probabilities for one image.
    pub fn forward(&self, image: &FeatureImage) -> Result<[f64; CLASSES]> {
        Self::check(image)?;
        let mut t = Trace::<f64>::default();
        kernels::forward(&self.params, image, &mut t);
        Ok(t.probabilities())
    }

    /// Forward pass keeping every intermediate.
    pub fn trace(&self, image: &FeatureImage) -> Result<Trace<f64>> {
        Self::check(image)?;
        let mut t = Trace::<f64>::default();
        kernels::forward(&self.params, image, &mut t);
        Ok(t)
    }

    /// Probabilities together with the relu outputs of both conv layers.
    pub fn forward_with_activations(
        &self,
        image: &FeatureImage,
    ) -> Result<([f64; CLASSES], ActivationDump)> {
        let t = self.trace(image)?;
        Ok((t.probabilities(), ActivationDump::from_trace(&t)))
    }

    /// Probabilities for many images, in input order.
    pub fn probabilities(&self, images: &[FeatureImage]) -> Result<Vec<[f64; CLASSES]>> {
        images.iter().try_for_each(Self::check)?;
        Ok(images
            .par_iter()
            .map_init(Trace::<f64>::default, |t, img| {
                kernels::forward(&self.params, img, t);
                t.probabilities()
            })
            .collect())
    }

    pub fn to_blob(&self) -> ModelBlob {
        ModelBlob {
            family: Family::Cnn,
            task: self.task,
            dims: dimension_table(),
            values: self.params.iter().map(|&p| p as f32).collect(),
        }
    }

    pub fn from_blob(blob: ModelBlob) -> Result<Self> {
        if blob.family != Family::Cnn {
            return Err(Error::ModelFormat("not a CNN model file".into()));
        }
        if blob.dims != dimension_table() {
            return Err(Error::ModelFormat(format!("unexpected layer table {:?}", blob.dims)));
        }
        if blob.values.len() != N_PARAMS {
            return Err(Error::ModelFormat(format!(
                "expected {N_PARAMS} weights, found {}",
                blob.values.len()
            )));
        }
        Ok(Self { task: blob.task, params: blob.values.iter().map(|&v| v as f64).collect() })
    }

    /// Parameters are written as f32; see [`CnnModel::round_to_storage`].
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_blob().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_blob(ModelBlob::load(path)?)
    }
}

/// One relu feature map, stored band-major (height rows, width columns).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl FeatureMap {
    fn from_width_major(src: &[f64], width: usize, height: usize) -> Self {
        let mut values = vec![0.0; width * height];
        for x in 0..width {
            for y in 0..height {
                values[y * width + x] = src[x * height + y];
            }
        }
        Self { height, width, values }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// CSV with one line per mel row.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in self.values.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }
}

/// Relu activations of both convolutional layers for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationDump {
    pub conv1: Vec<FeatureMap>,
    pub conv2: Vec<FeatureMap>,
}

impl ActivationDump {
    fn from_trace(t: &Trace<f64>) -> Self {
        let conv1 = t
            .a1
            .chunks_exact(C1_W * C1_H)
            .map(|c| FeatureMap::from_width_major(c, C1_W, C1_H))
            .collect();
        let conv2 = t
            .a2
            .chunks_exact(C2_W * C2_H)
            .map(|c| FeatureMap::from_width_major(c, C2_W, C2_H))
            .collect();
        Self { conv1, conv2 }
    }

    /// Mean activation per filter, conv1 then conv2.
    pub fn filter_means(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.conv1.iter().map(FeatureMap::mean).collect(),
            self.conv2.iter().map(FeatureMap::mean).collect(),
        )
    }

    /// Write `conv{1,2}_filter{k}.csv` into `dir`.
    pub fn write_csv(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (layer, maps) in [("conv1", &self.conv1), ("conv2", &self.conv2)] {
            for (k, m) in maps.iter().enumerate() {
                std::fs::write(dir.join(format!("{layer}_filter{k:02}.csv")), m.to_csv())?;
            }
        }
        Ok(())
    }
}

/// Mean cross-entropy of a batch and its gradient with respect to every parameter.
pub fn gradients(model: &CnnModel, batch: &[Sample<'_>]) -> Result<(Vec<f64>, f64)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    for (img, label) in batch {
        CnnModel::check(img)?;
        if *label >= CLASSES {
            return Err(Error::InvalidArgument(format!("label {label} out of range")));
        }
    }
    let mut grad = vec![0.0; N_PARAMS];
    let loss = train::batch_gradient(&model.params, batch, &mut grad);
    Ok((grad, loss / batch.len() as f64))
}

/// One Adam update of the model parameters.
pub fn adam_step(
    state: &mut AdamState<f64>,
    model: &mut CnnModel,
    grads: &[f64],
    config: &AdamConfig,
) -> Result<()> {
    state.step(&mut model.params, grads, config)
}

/// A classifier decision attached to its instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedDecision {
    pub time: f64,
    pub positive: bool,
    pub p_positive: f64,
}

/// Argmax decision per image; an exact tie goes to class 0.
pub fn predict_sequence(model: &CnnModel, images: &[FeatureImage]) -> Result<Vec<TimedDecision>> {
    let probs = model.probabilities(images)?;
    Ok(images
        .iter()
        .zip(probs)
        .map(|(img, p)| TimedDecision { time: img.center_time, positive: p[1] > p[0], p_positive: p[1] })
        .collect())
}

#[cfg(test)]
mod tests;
