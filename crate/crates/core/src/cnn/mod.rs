//! Convolutional classifier for job signatures.
//!
//! Architecture: three `[conv 3×3 same → ReLU → max-pool 2×2]` stages with
//! 32, 64 and 128 filters, dropout (0.30), flatten, a ReLU dense layer,
//! dropout (0.70) and a softmax output layer. Training minimizes categorical
//! cross-entropy with mini-batch gradient descent and momentum.

mod gradcheck;
pub mod network;
mod persist;
mod train;

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gaf::JobSignature;
use crate::prediction::PredictionResult;
use crate::synth::rng::derive_seed;
use crate::{Error, Result};
use network::{ConvLayer, DenseLayer, DropoutMasks, Geometry, Params, Scalar};

pub use gradcheck::{gradient_check, GradCheckReport};
pub use persist::{load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use train::{history_csv, train, EpochStats, LabeledBatch};

/// Samples per forward/backward work unit. Gradients are summed over units
/// in a fixed order, so results do not depend on the thread count.
pub(crate) const CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub input_side: usize,
    pub channels: usize,
    pub num_classes: usize,
    pub conv_kernels: [usize; 3],
    pub kernel_size: usize,
    pub dense_units: usize,
    pub dropout_pre_flatten: f64,
    pub dropout_dense: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl CnnConfig {
    pub fn new(input_side: usize, channels: usize, num_classes: usize) -> Self {
        CnnConfig {
            input_side,
            channels,
            num_classes,
            conv_kernels: [32, 64, 128],
            kernel_size: 3,
            dense_units: 128,
            dropout_pre_flatten: 0.30,
            dropout_dense: 0.70,
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            momentum: 0.9,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.input_side < 8 {
            return fail(format!(
                "input side {} does not survive three 2x2 poolings (minimum 8)",
                self.input_side
            ));
        }
        if self.channels == 0 {
            return fail("at least one input channel is required".into());
        }
        if self.num_classes < 2 {
            return fail(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if self.kernel_size.is_multiple_of(2) {
            return fail(format!("kernel size {} must be odd", self.kernel_size));
        }
        if self.conv_kernels.contains(&0) || self.dense_units == 0 {
            return fail("layer widths must be positive".into());
        }
        for p in [self.dropout_pre_flatten, self.dropout_dense] {
            if !(0.0..1.0).contains(&p) {
                return fail(format!("dropout rate {p} outside [0, 1)"));
            }
        }
        if self.batch_size == 0 {
            return fail("batch size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!(
                "learning rate {} must be positive",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum {} outside [0, 1)", self.momentum));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Geometry {
        Geometry {
            side: self.input_side,
            channels: self.channels,
            kernel: self.kernel_size,
            filters: self.conv_kernels,
        }
    }

    /// Length of the flattened feature vector entering the dense head.
    pub fn flatten_len(&self) -> usize {
        self.geometry().flatten_len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub config: CnnConfig,
    /// Class names in output order.
    pub vocab: Vec<String>,
    pub params: Params<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    Inference,
    /// Dropout active, masks drawn from the given seed.
    Training {
        dropout_seed: u64,
    },
}

/// Normal weights with variance `gain / fan_in`.
fn fan_in_normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize, gain: f64) -> Array2<f32> {
    let normal = Normal::new(0.0, (gain / rows as f64).sqrt()).expect("positive std");
    Array2::from_shape_simple_fn((rows, cols), || normal.sample(rng) as f32)
}

/// Variance gain of the output layer. Max pooling inflates activations by
/// a few times per stage, so a unit gain here would start training with
/// logits several units apart; the small gain keeps initial predictions
/// close to uniform.
pub(crate) const OUTPUT_GAIN: f64 = 0.01;

/// Initializes a model with seeded fan-in scaled normal weights (gain 2 for
/// ReLU layers, [`OUTPUT_GAIN`] for the output layer) and zero biases.
pub fn build_model(config: CnnConfig, vocab: Vec<String>) -> Result<CnnModel> {
    config.validate()?;
    if vocab.len() != config.num_classes {
        return Err(Error::Config(format!(
            "vocabulary has {} classes, configuration expects {}",
            vocab.len(),
            config.num_classes
        )));
    }
    let geo = config.geometry();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let k2 = config.kernel_size * config.kernel_size;
    let conv = (0..3)
        .map(|i| {
            let fan_in = k2 * geo.in_channels(i);
            ConvLayer {
                weight: fan_in_normal(&mut rng, fan_in, config.conv_kernels[i], 2.0),
                bias: ndarray::Array1::zeros(config.conv_kernels[i]),
            }
        })
        .collect();
    let flat = geo.flatten_len();
    let hidden = DenseLayer {
        weight: fan_in_normal(&mut rng, flat, config.dense_units, 2.0),
        bias: ndarray::Array1::zeros(config.dense_units),
    };
    let output = DenseLayer {
        weight: fan_in_normal(
            &mut rng,
            config.dense_units,
            config.num_classes,
            OUTPUT_GAIN,
        ),
        bias: ndarray::Array1::zeros(config.num_classes),
    };
    Ok(CnnModel {
        config,
        vocab,
        params: Params {
            conv,
            hidden,
            output,
        },
    })
}

/// Converts a channel-major signature tensor to the network's HWC layout.
pub(crate) fn to_hwc<F: Scalar>(tensor: &Array3<f32>, out: &mut Vec<F>) {
    let hwc = tensor.view().permuted_axes([1, 2, 0]);
    out.extend(hwc.iter().map(|&v| F::from_f32(v).expect("finite")));
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `ln Σ exp(z) − z_target`.
pub(crate) fn cross_entropy(logits: &[f64], target: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[target]
}

pub(crate) fn dropout_masks<F: Scalar>(
    config: &CnnConfig,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> DropoutMasks<F> {
    let mut mask = |rows: usize, cols: usize, p: f64| {
        let keep = F::from_f64(1.0 / (1.0 - p)).expect("finite");
        Array2::from_shape_simple_fn((rows, cols), || {
            if p > 0.0 && rng.random::<f64>() < p {
                F::zero()
            } else {
                keep
            }
        })
    };
    DropoutMasks {
        pre_flatten: mask(n, config.flatten_len(), config.dropout_pre_flatten),
        dense: mask(n, config.dense_units, config.dropout_dense),
    }
}

impl CnnModel {
    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub(crate) fn check_shape(&self, tensor: &Array3<f32>) -> Result<()> {
        let c = &self.config;
        let expected = (c.channels, c.input_side, c.input_side);
        if tensor.dim() != expected {
            return Err(Error::Contract(format!(
                "signature shape {:?} does not match the model's {expected:?}",
                tensor.dim()
            )));
        }
        Ok(())
    }

    /// Class probabilities for each input tensor.
    pub fn forward(&self, batch: &[&Array3<f32>], mode: ForwardMode) -> Result<Vec<Vec<f64>>> {
        for t in batch {
            self.check_shape(t)?;
        }
        let geo = self.config.geometry();
        let chunks: Vec<Vec<Vec<f64>>> = batch
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(chunk_index, chunk)| {
                let mut input = Vec::new();
                for t in chunk {
                    to_hwc::<f32>(t, &mut input);
                }
                let masks = match mode {
                    ForwardMode::Inference => None,
                    ForwardMode::Training { dropout_seed } => {
                        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                            dropout_seed,
                            &[chunk_index as u64],
                        ));
                        Some(dropout_masks(&self.config, chunk.len(), &mut rng))
                    }
                };
                let (logits, _) = network::forward(
                    &self.params,
                    &geo,
                    &input,
                    chunk.len(),
                    masks.as_ref(),
                    false,
                );
                logits
                    .rows()
                    .into_iter()
                    .map(|row| softmax(&row.iter().map(|&z| f64::from(z)).collect::<Vec<_>>()))
                    .collect()
            })
            .collect();
        Ok(chunks.into_iter().flatten().collect())
    }

    /// Inference-mode probabilities for a set of signatures.
    pub fn probabilities(&self, sigs: &[JobSignature]) -> Result<Vec<Vec<f64>>> {
        let tensors: Vec<&Array3<f32>> = sigs.iter().map(|s| &s.tensor).collect();
        self.forward(&tensors, ForwardMode::Inference)
    }

    pub fn predict(&self, sig: &JobSignature, threshold: f64) -> Result<PredictionResult> {
        let probs = self.forward(&[&sig.tensor], ForwardMode::Inference)?;
        Ok(PredictionResult::from_scores(
            probs.into_iter().next().expect("one input"),
            &self.vocab,
            threshold,
        ))
    }

    pub fn predict_all(
        &self,
        sigs: &[JobSignature],
        threshold: f64,
    ) -> Result<Vec<PredictionResult>> {
        Ok(self
            .probabilities(sigs)?
            .into_iter()
            .map(|p| PredictionResult::from_scores(p, &self.vocab, threshold))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("class{i}")).collect()
    }

    fn random_tensor(c: usize, l: usize, seed: u64) -> Array3<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array3::from_shape_simple_fn((c, l, l), || rng.random_range(-1.0f32..=1.0))
    }

    #[test]
    fn flatten_sizes_follow_three_pools() {
        // Shape oracle: each pool floors the side in half.
        let oracle = |l: usize| {
            let mut s = l;
            for _ in 0..3 {
                s /= 2;
            }
            s * s * 128
        };
        assert_eq!(CnnConfig::new(128, 3, 12).flatten_len(), 32768);
        assert_eq!(oracle(128), 32768);
        assert_eq!(CnnConfig::new(32, 1, 4).flatten_len(), 2048);
        assert_eq!(oracle(32), 2048);
        for l in 8..70 {
            assert_eq!(CnnConfig::new(l, 1, 2).flatten_len(), oracle(l));
        }
    }

    #[test]
    fn config_errors() {
        assert!(matches!(
            build_model(CnnConfig::new(4, 1, 2), vocab(2)),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            build_model(CnnConfig::new(8, 1, 1), vocab(1)),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            build_model(CnnConfig::new(8, 1, 3), vocab(2)),
            Err(Error::Config(_))
        ));
        let mut c = CnnConfig::new(8, 1, 2);
        c.dropout_dense = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn parameter_shapes() {
        let m = build_model(CnnConfig::new(32, 3, 5), vocab(5)).unwrap();
        let p = &m.params;
        assert_eq!(p.conv[0].weight.dim(), (27, 32));
        assert_eq!(p.conv[1].weight.dim(), (288, 64));
        assert_eq!(p.conv[2].weight.dim(), (576, 128));
        assert_eq!(p.hidden.weight.dim(), (2048, 128));
        assert_eq!(p.output.weight.dim(), (128, 5));
        assert!(p.conv.iter().all(|c| c.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn fresh_model_is_near_uniform() {
        let inputs: Vec<_> = (0..8).map(|s| random_tensor(3, 32, s)).collect();
        let refs: Vec<_> = inputs.iter().collect();
        for seed in 0..4 {
            let mut config = CnnConfig::new(32, 3, 4);
            config.seed = seed;
            let m = build_model(config, vocab(4)).unwrap();
            for p in m.forward(&refs, ForwardMode::Inference).unwrap() {
                assert!(p.iter().all(|&q| (q - 0.25).abs() < 0.2), "{p:?}");
            }
        }
    }

    #[test]
    fn outputs_are_distributions() {
        let m = build_model(CnnConfig::new(16, 2, 3), vocab(3)).unwrap();
        let zero = Array3::zeros((2, 16, 16));
        let other = random_tensor(2, 16, 3);
        let probs = m
            .forward(&[&zero, &other, &zero], ForwardMode::Inference)
            .unwrap();
        for p in &probs {
            assert!(p.iter().all(|q| q.is_finite() && *q >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        assert_eq!(probs[0], probs[2]);
        let again = m.forward(&[&other], ForwardMode::Inference).unwrap();
        assert_eq!(again[0], probs[1]);
        let dropped = m
            .forward(&[&other], ForwardMode::Training { dropout_seed: 5 })
            .unwrap();
        assert!((dropped[0].iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let m = build_model(CnnConfig::new(16, 2, 3), vocab(3)).unwrap();
        let wrong = Array3::zeros((3, 16, 16));
        assert!(matches!(
            m.forward(&[&wrong], ForwardMode::Inference),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn predict_applies_threshold() {
        let m = build_model(CnnConfig::new(8, 1, 2), vocab(2)).unwrap();
        let sig = JobSignature {
            tensor: random_tensor(1, 8, 1),
            channel_order: vec![crate::MetricKind::Power],
            kind: crate::gaf::GafKind::Gasf,
            job_id: "j".into(),
            label: None,
            coverage_fraction: 1.0,
        };
        let r = m.predict(&sig, 0.0).unwrap();
        assert!(r.label.is_some());
        let r = m.predict(&sig, 1.0 + 1e-9).unwrap();
        assert_eq!(r.label_str(), "unknown");
    }

    #[test]
    fn softmax_and_loss_agree() {
        let z = [1.0, -2.0, 0.5];
        let p = softmax(&z);
        assert!((cross_entropy(&z, 0) + p[0].ln()).abs() < 1e-12);
        let big = softmax(&[1000.0, 0.0]);
        assert!(big.iter().all(|v| v.is_finite()));
    }
}
