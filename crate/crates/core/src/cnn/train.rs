use std::fmt::Write as _;

use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::network::{self, Params};
use super::{cross_entropy, dropout_masks, softmax, to_hwc, CnnModel, ForwardMode, CHUNK};
use crate::gaf::JobSignature;
use crate::prediction::argmax;
use crate::synth::rng::derive_seed;
use crate::{Error, Result};

const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

/// Tensors with class indices into a model vocabulary.
#[derive(Debug, Clone)]
pub struct LabeledBatch<'a> {
    pub tensors: Vec<&'a Array3<f32>>,
    pub labels: Vec<usize>,
}

impl<'a> LabeledBatch<'a> {
    pub fn from_signatures(sigs: &'a [JobSignature], vocab: &[String]) -> Result<Self> {
        let labels = sigs
            .iter()
            .map(|s| {
                let label = s
                    .label
                    .as_deref()
                    .ok_or_else(|| Error::MissingLabel(s.job_id.clone()))?;
                vocab
                    .iter()
                    .position(|v| v == label)
                    .ok_or_else(|| Error::UnknownLabel {
                        job_id: s.job_id.clone(),
                        label: label.to_string(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LabeledBatch {
            tensors: sigs.iter().map(|s| &s.tensor).collect(),
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean loss and accuracy over the epoch's batches, dropout active.
    pub train_loss: f64,
    pub train_acc: f64,
    /// Inference-mode loss and accuracy on the validation set.
    pub val_loss: f64,
    pub val_acc: f64,
}

/// `epoch,train_loss,train_acc,val_loss,val_acc` rows.
pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
    for h in history {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6}",
            h.epoch, h.train_loss, h.train_acc, h.val_loss, h.val_acc
        );
    }
    out
}

fn evaluate(model: &CnnModel, data: &LabeledBatch<'_>) -> Result<(f64, f64)> {
    let probs = model.forward(&data.tensors, ForwardMode::Inference)?;
    let mut loss = 0.0;
    let mut correct = 0;
    for (p, &y) in probs.iter().zip(&data.labels) {
        loss -= p[y].max(f64::MIN_POSITIVE).ln();
        if argmax(p) == Some(y) {
            correct += 1;
        }
    }
    let n = data.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

struct ChunkResult {
    grads: Params<f32>,
    loss: f64,
    correct: usize,
}

/// Trains for `model.config.epochs` epochs and returns the model with one
/// history entry per epoch. Runs are reproducible from the config seed.
pub fn train(
    mut model: CnnModel,
    train_set: &[JobSignature],
    validation: &[JobSignature],
) -> Result<(CnnModel, Vec<EpochStats>)> {
    if train_set.is_empty() {
        return Err(Error::EmptyInput("training set is empty".into()));
    }
    if validation.is_empty() {
        return Err(Error::EmptyInput("validation set is empty".into()));
    }
    let train_batch = LabeledBatch::from_signatures(train_set, &model.vocab)?;
    let val_batch = LabeledBatch::from_signatures(validation, &model.vocab)?;
    for t in train_batch.tensors.iter().chain(&val_batch.tensors) {
        model.check_shape(t)?;
    }

    let config = model.config.clone();
    let geo = config.geometry();
    let inputs: Vec<Vec<f32>> = train_batch
        .tensors
        .iter()
        .map(|t| {
            let mut v = Vec::with_capacity(t.len());
            to_hwc(t, &mut v);
            v
        })
        .collect();
    let lr = config.learning_rate as f32;
    let momentum = config.momentum as f32;
    let mut velocity = model.params.zeros_like();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[SHUFFLE_STREAM, epoch as u64]));
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0;
        let mut epoch_correct = 0;
        for (batch_index, batch) in order.chunks(config.batch_size).enumerate() {
            let scale = 1.0 / batch.len() as f64;
            let params = &model.params;
            let results: Vec<ChunkResult> = batch
                .par_chunks(CHUNK)
                .enumerate()
                .map(|(chunk_index, chunk)| {
                    let mut input = Vec::with_capacity(chunk.len() * inputs[0].len());
                    for &i in chunk {
                        input.extend_from_slice(&inputs[i]);
                    }
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                        config.seed,
                        &[
                            DROPOUT_STREAM,
                            epoch as u64,
                            batch_index as u64,
                            chunk_index as u64,
                        ],
                    ));
                    let masks = dropout_masks::<f32>(&config, chunk.len(), &mut rng);
                    let (logits, cache) =
                        network::forward(params, &geo, &input, chunk.len(), Some(&masks), true);
                    let mut dlogits = Array2::<f32>::zeros(logits.raw_dim());
                    let mut loss = 0.0;
                    let mut correct = 0;
                    for (r, &i) in chunk.iter().enumerate() {
                        let z: Vec<f64> = logits.row(r).iter().map(|&v| f64::from(v)).collect();
                        let target = train_batch.labels[i];
                        loss += cross_entropy(&z, target);
                        let p = softmax(&z);
                        if argmax(&p) == Some(target) {
                            correct += 1;
                        }
                        for (c, &pc) in p.iter().enumerate() {
                            let y = if c == target { 1.0 } else { 0.0 };
                            dlogits[[r, c]] = ((pc - y) * scale) as f32;
                        }
                    }
                    let cache = cache.expect("cache requested");
                    let grads = network::backward(
                        params,
                        &geo,
                        &cache,
                        chunk.len(),
                        Some(&masks),
                        &dlogits,
                    );
                    ChunkResult {
                        grads,
                        loss,
                        correct,
                    }
                })
                .collect();

            let mut results = results.into_iter();
            let first = results.next().expect("batch is non-empty");
            let mut grads = first.grads;
            let mut batch_loss = first.loss;
            epoch_correct += first.correct;
            for r in results {
                grads.add_assign(&r.grads);
                batch_loss += r.loss;
                epoch_correct += r.correct;
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: batch_index,
                });
            }
            epoch_loss += batch_loss;

            for ((w, v), g) in model
                .params
                .slices_mut()
                .into_iter()
                .zip(velocity.slices_mut())
                .zip(grads.slices())
            {
                for ((w, v), &g) in w.iter_mut().zip(v.iter_mut()).zip(g) {
                    *v = momentum * *v - lr * g;
                    *w += *v;
                }
            }
        }

        let (val_loss, val_acc) = evaluate(&model, &val_batch)?;
        let n = inputs.len() as f64;
        let stats = EpochStats {
            epoch: epoch + 1,
            train_loss: epoch_loss / n,
            train_acc: epoch_correct as f64 / n,
            val_loss,
            val_acc,
        };
        log::info!(
            "epoch {}/{}: loss {:.4} acc {:.3} val_loss {:.4} val_acc {:.3}",
            stats.epoch,
            config.epochs,
            stats.train_loss,
            stats.train_acc,
            stats.val_loss,
            stats.val_acc
        );
        history.push(stats);
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::{build_model, CnnConfig};
    use crate::gaf::GafKind;
    use crate::MetricKind;

    fn constant_sig(id: usize, value: f32, label: &str) -> JobSignature {
        JobSignature {
            tensor: Array3::from_elem((1, 8, 8), value),
            channel_order: vec![MetricKind::Power],
            kind: GafKind::Gasf,
            job_id: format!("j{id}"),
            label: Some(label.into()),
            coverage_fraction: 1.0,
        }
    }

    fn toy() -> (Vec<JobSignature>, CnnModel) {
        let sigs: Vec<_> = (0..16)
            .map(|i| {
                if i % 2 == 0 {
                    constant_sig(i, -1.0, "low")
                } else {
                    constant_sig(i, 1.0, "high")
                }
            })
            .collect();
        let mut config = CnnConfig::new(8, 1, 2);
        config.epochs = 5;
        config.batch_size = 4;
        config.learning_rate = 0.01;
        config.dense_units = 16;
        config.seed = 3;
        let model = build_model(config, vec!["high".into(), "low".into()]).unwrap();
        (sigs, model)
    }

    #[test]
    fn separable_toy_reaches_full_accuracy() {
        let (sigs, model) = toy();
        let (model, history) = train(model, &sigs, &sigs).unwrap();
        assert_eq!(history.len(), 5);
        assert_eq!(history.last().unwrap().val_acc, 1.0);
        let labels = LabeledBatch::from_signatures(&sigs, &model.vocab).unwrap();
        let (_, acc) = evaluate(&model, &labels).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn zero_epochs_leave_model_unchanged() {
        let (sigs, mut model) = toy();
        model.config.epochs = 0;
        let (trained, history) = train(model.clone(), &sigs, &sigs).unwrap();
        assert!(history.is_empty());
        assert_eq!(trained, model);
    }

    #[test]
    fn training_is_reproducible() {
        let (sigs, model) = toy();
        let (a, ha) = train(model.clone(), &sigs, &sigs).unwrap();
        let (b, hb) = train(model, &sigs, &sigs).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
    }

    #[test]
    fn labels_outside_vocab_are_rejected() {
        let (mut sigs, model) = toy();
        sigs[3].label = Some("mystery".into());
        match train(model.clone(), &sigs, &sigs) {
            Err(Error::UnknownLabel { job_id, .. }) => assert_eq!(job_id, "j3"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            train(model, &[], &sigs),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let (sigs, mut model) = toy();
        model.params.output.weight.fill(f32::NAN);
        assert!(matches!(
            train(model, &sigs, &sigs),
            Err(Error::NonFiniteLoss { epoch: 1, batch: 0 })
        ));
    }

    #[test]
    fn history_format() {
        let h = vec![EpochStats {
            epoch: 1,
            train_loss: 0.5,
            train_acc: 0.75,
            val_loss: 0.25,
            val_acc: 1.0,
        }];
        assert_eq!(
            history_csv(&h),
            "epoch,train_loss,train_acc,val_loss,val_acc\n1,0.500000,0.750000,0.250000,1.000000\n"
        );
    }
}
