//! A small built-in classifier family: ReLU multilayer perceptrons over
//! flattened, per-channel standardized pixels, trained with plain mini-batch
//! SGD and weight decay.
//!
//! Everything random (label noise, initialization, batch order) comes from a
//! single ChaCha stream seeded with `init_seed`, so a `(config, dataset)` pair
//! always produces bitwise-identical parameters.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image_ops::Image;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("{images} images but {labels} labels")]
    LabelCount { images: usize, labels: usize },
    #[error("label {label} outside [0, {n_classes})")]
    InvalidLabel { label: u32, n_classes: usize },
    #[error("expected a {expected:?} image, got {actual:?}")]
    ShapeMismatch {
        expected: (u32, u32, u8),
        actual: (u32, u32, u8),
    },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model_id: String,
    /// Empty for softmax regression.
    pub hidden_widths: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub init_seed: u64,
    /// Probability of replacing a training label with a different class.
    #[serde(default)]
    pub label_noise: f64,
}

impl ModelConfig {
    pub fn new(model_id: impl Into<String>, hidden_widths: Vec<usize>, epochs: usize, init_seed: u64) -> Self {
        Self {
            model_id: model_id.into(),
            hidden_widths,
            epochs,
            learning_rate: 0.01,
            weight_decay: 1e-4,
            batch_size: 32,
            init_seed,
            label_noise: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(format!("{}: {m}", self.model_id)));
        if self.hidden_widths.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(0.0..1.0).contains(&self.label_noise) {
            return bad("label noise must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Dense layer, weights stored output-major (`outputs × inputs`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Dense {
    fn init(inputs: usize, outputs: usize, limit: f32, rng: &mut ChaCha8Rng) -> Self {
        Self {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| rng.random_range(-limit..limit)).collect(),
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f32], out: &mut Vec<f32>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.inputs)
                .zip(&self.bias)
                .map(|(row, b)| b + dot(row, x)),
        );
    }
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    // eight independent accumulators let the compiler vectorize
    let mut acc = [0.0f32; 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        for k in 0..8 {
            acc[k] += a[i * 8 + k] * b[i * 8 + k];
        }
    }
    let mut sum = acc.iter().sum::<f32>();
    for i in chunks * 8..a.len() {
        sum += a[i] * b[i];
    }
    sum
}

#[inline]
fn axpy(alpha: f32, x: &[f32], y: &mut [f32]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Per-channel standardization fitted on the training images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl Normalizer {
    fn fit(images: &[Image]) -> Self {
        let channels = images[0].channels() as usize;
        let mut sum = vec![0.0f64; channels];
        let mut sq = vec![0.0f64; channels];
        let mut count = 0usize;
        for img in images {
            for px in img.pixels().chunks_exact(channels) {
                for (c, &v) in px.iter().enumerate() {
                    let v = v as f64 / 255.0;
                    sum[c] += v;
                    sq[c] += v * v;
                }
                count += 1;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| ((s / count as f64 - m * m).max(0.0).sqrt().max(1e-6)) as f32)
            .collect();
        Self {
            mean: mean.into_iter().map(|m| m as f32).collect(),
            std,
        }
    }

    fn apply(&self, image: &Image) -> Vec<f32> {
        let channels = self.mean.len();
        image
            .pixels()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let c = i % channels;
                (v as f32 / 255.0 - self.mean[c]) / self.std[c]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub layers: Vec<Dense>,
    pub normalizer: Normalizer,
    /// `(width, height, channels)` of the training images.
    pub input_shape: (u32, u32, u8),
    pub n_classes: usize,
    /// Accuracy on the clean training labels.
    pub train_accuracy: f64,
}

/// Class prediction plus raw scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub pred: u32,
    pub logits: Vec<f32>,
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f32]) -> u32 {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best as u32
}

fn shape_of(image: &Image) -> (u32, u32, u8) {
    (image.width(), image.height(), image.channels())
}

fn softmax_in_place(logits: &mut [f32]) {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut total = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in logits.iter_mut() {
        *v /= total;
    }
}

impl TrainedModel {
    fn check_shape(&self, image: &Image) -> Result<(), ModelError> {
        if shape_of(image) != self.input_shape {
            return Err(ModelError::ShapeMismatch {
                expected: self.input_shape,
                actual: shape_of(image),
            });
        }
        Ok(())
    }

    /// Activations of every layer for a normalized input; the last entry is
    /// the logit vector.
    fn activations(&self, input: Vec<f32>) -> Vec<Vec<f32>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input);
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.forward(acts.last().unwrap(), &mut out);
            if i + 1 < self.layers.len() {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    /// Features before the classifier layer together with the prediction.
    pub fn forward(&self, image: &Image) -> Result<(Vec<f32>, Prediction), ModelError> {
        self.check_shape(image)?;
        let mut acts = self.activations(self.normalizer.apply(image));
        let logits = acts.pop().unwrap();
        let feature = acts.pop().unwrap();
        Ok((
            feature,
            Prediction {
                pred: argmax(&logits),
                logits,
            },
        ))
    }

    pub fn feature_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.inputs)
    }
}

pub fn predict(model: &TrainedModel, image: &Image) -> Result<Prediction, ModelError> {
    model.forward(image).map(|(_, p)| p)
}

/// Penultimate activations; for softmax regression, the normalized pixels.
pub fn extract_features(model: &TrainedModel, image: &Image) -> Result<Vec<f32>, ModelError> {
    model.forward(image).map(|(f, _)| f)
}

fn noisy_labels(labels: &[u32], n_classes: usize, noise: f64, rng: &mut ChaCha8Rng) -> Vec<u32> {
    labels
        .iter()
        .map(|&label| {
            if n_classes > 1 && noise > 0.0 && rng.random_bool(noise) {
                let shift = rng.random_range(1..n_classes as u32);
                (label + shift) % n_classes as u32
            } else {
                label
            }
        })
        .collect()
}

pub fn train(config: &ModelConfig, images: &[Image], labels: &[u32], n_classes: usize) -> Result<TrainedModel, ModelError> {
    config.validate()?;
    if images.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if images.len() != labels.len() {
        return Err(ModelError::LabelCount {
            images: images.len(),
            labels: labels.len(),
        });
    }
    if let Some(&label) = labels.iter().find(|&&l| l as usize >= n_classes) {
        return Err(ModelError::InvalidLabel { label, n_classes });
    }
    let input_shape = shape_of(&images[0]);
    if let Some(bad) = images.iter().find(|img| shape_of(img) != input_shape) {
        return Err(ModelError::ShapeMismatch {
            expected: input_shape,
            actual: shape_of(bad),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
    let targets = noisy_labels(labels, n_classes, config.label_noise, &mut rng);

    let input_dim = images[0].pixels().len();
    let mut widths = vec![input_dim];
    widths.extend(&config.hidden_widths);
    widths.push(n_classes);
    let layers: Vec<Dense> = widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let is_output = i + 2 == widths.len();
            let limit = if is_output {
                (6.0 / (w[0] + w[1]) as f32).sqrt()
            } else {
                (6.0 / w[0] as f32).sqrt()
            };
            Dense::init(w[0], w[1], limit, &mut rng)
        })
        .collect();

    let normalizer = Normalizer::fit(images);
    let inputs: Vec<Vec<f32>> = images.iter().map(|img| normalizer.apply(img)).collect();
    let mut model = TrainedModel {
        config: config.clone(),
        layers,
        normalizer,
        input_shape,
        n_classes,
        train_accuracy: 0.0,
    };

    let lr = config.learning_rate as f32;
    let decay = config.weight_decay as f32;
    let mut grads: Vec<Dense> = model
        .layers
        .iter()
        .map(|l| Dense {
            inputs: l.inputs,
            outputs: l.outputs,
            weights: vec![0.0; l.weights.len()],
            bias: vec![0.0; l.bias.len()],
        })
        .collect();
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            for g in grads.iter_mut() {
                g.weights.fill(0.0);
                g.bias.fill(0.0);
            }
            for &i in batch {
                accumulate_gradients(&model, &inputs[i], targets[i] as usize, &mut grads);
            }
            let scale = 1.0 / batch.len() as f32;
            for (layer, g) in model.layers.iter_mut().zip(&grads) {
                for (w, gw) in layer.weights.iter_mut().zip(&g.weights) {
                    *w -= lr * (gw * scale + decay * *w);
                }
                for (b, gb) in layer.bias.iter_mut().zip(&g.bias) {
                    *b -= lr * gb * scale;
                }
            }
        }
    }

    let correct = inputs
        .iter()
        .zip(labels)
        .filter(|(x, &label)| {
            let acts = model.activations(x.to_vec());
            argmax(acts.last().unwrap()) == label
        })
        .count();
    model.train_accuracy = correct as f64 / inputs.len() as f64;
    Ok(model)
}

/// Backpropagates softmax cross-entropy for one sample, adding into `grads`.
fn accumulate_gradients(model: &TrainedModel, input: &[f32], target: usize, grads: &mut [Dense]) {
    let acts = model.activations(input.to_vec());
    let mut delta = acts.last().unwrap().clone();
    softmax_in_place(&mut delta);
    delta[target] -= 1.0;

    for li in (0..model.layers.len()).rev() {
        let layer = &model.layers[li];
        let below = &acts[li];
        let g = &mut grads[li];
        for (o, &d) in delta.iter().enumerate() {
            if d != 0.0 {
                axpy(d, below, &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs]);
                g.bias[o] += d;
            }
        }
        if li == 0 {
            break;
        }
        // propagate through the weights, then the ReLU of the layer below
        let mut next = vec![0.0f32; layer.inputs];
        for (o, &d) in delta.iter().enumerate() {
            if d != 0.0 {
                axpy(d, &layer.weights[o * layer.inputs..(o + 1) * layer.inputs], &mut next);
            }
        }
        for (n, &a) in next.iter_mut().zip(below) {
            if a <= 0.0 {
                *n = 0.0;
            }
        }
        delta = next;
    }
}
