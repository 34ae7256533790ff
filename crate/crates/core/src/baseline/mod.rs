//! Statistical-feature baseline: eleven summary statistics per raw metric
//! trace, standardized, and one logistic-loss linear scorer per class
//! (one-vs-rest). Scores are per-class sigmoids in `[0, 1]`, so the same
//! confidence threshold applies as for the CNN, although they need not sum
//! to one.

mod features;

use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::binio::{ByteReader, ByteWriter};
use crate::fsutil::write_atomic;
use crate::prediction::PredictionResult;
use crate::{Error, MetricKind, Result};

pub use features::{
    extract_all, extract_features, feature_names, features_csv, percentile, trace_statistics,
    FeatureVector, STATISTICS, STATS_PER_CHANNEL,
};

pub const BASELINE_MAGIC: [u8; 4] = *b"ARBM";
pub const BASELINE_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// Full-batch gradient steps.
    pub iterations: usize,
    pub learning_rate: f64,
    /// L2 penalty on weights (not biases).
    pub l2: f64,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            iterations: 500,
            learning_rate: 0.5,
            l2: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub channels: Vec<MetricKind>,
    pub vocab: Vec<String>,
    /// Per-dimension standardization. A zero std marks a constant dimension,
    /// which standardizes to 0.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// One row of `dim` weights per class.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-dimension mean and population std.
pub fn standardization(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut std = vec![0.0; d];
    for r in rows {
        for ((s, v), m) in std.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    for (s, m) in std.iter_mut().zip(&mean) {
        *s = (*s / n).sqrt();
        // Spread below rounding noise of the mean counts as constant.
        if *s <= 1e-12 * m.abs().max(1e-300) {
            *s = 0.0;
        }
    }
    (mean, std)
}

fn standardize(values: &[f64], mean: &[f64], std: &[f64]) -> Vec<f64> {
    values
        .iter()
        .zip(mean.iter().zip(std))
        .map(|(v, (m, s))| if *s > 0.0 { (v - m) / s } else { 0.0 })
        .collect()
}

/// Fits one logistic scorer per class in `vocab` on the labelled features.
pub fn train_baseline(
    features: &[FeatureVector],
    labels: &[String],
    vocab: &[String],
    config: &BaselineConfig,
) -> Result<BaselineModel> {
    if features.is_empty() {
        return Err(Error::EmptyInput("no feature vectors".into()));
    }
    if features.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} feature vectors but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if vocab.len() < 2 {
        return Err(Error::Config(format!(
            "a one-vs-rest model needs at least 2 classes, got {}",
            vocab.len()
        )));
    }
    let channels = features[0].channels.clone();
    if features.iter().any(|f| f.channels != channels) {
        return Err(Error::Schema(
            "feature vectors use different channels".into(),
        ));
    }
    let targets = labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            vocab
                .iter()
                .position(|v| v == l)
                .ok_or_else(|| Error::UnknownLabel {
                    job_id: format!("#{i}"),
                    label: l.clone(),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let present = vocab
        .iter()
        .enumerate()
        .filter(|(c, _)| targets.contains(c))
        .count();
    if present < 2 {
        return Err(Error::Config(
            "training data contains a single class".into(),
        ));
    }

    let raw: Vec<Vec<f64>> = features.iter().map(|f| f.values.clone()).collect();
    let (mean, std) = standardization(&raw);
    let x: Vec<Vec<f64>> = raw.iter().map(|r| standardize(r, &mean, &std)).collect();
    let d = mean.len();
    let n = x.len() as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = Normal::new(0.0, 0.01).expect("positive std");
    let mut weights: Vec<Vec<f64>> = (0..vocab.len())
        .map(|_| (0..d).map(|_| init.sample(&mut rng)).collect())
        .collect();
    let mut bias = vec![0.0; vocab.len()];

    for (class, (w, b)) in weights.iter_mut().zip(bias.iter_mut()).enumerate() {
        for _ in 0..config.iterations {
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for (row, &t) in x.iter().zip(&targets) {
                let z = *b + row.iter().zip(w.iter()).map(|(a, c)| a * c).sum::<f64>();
                let err = sigmoid(z) - if t == class { 1.0 } else { 0.0 };
                for (g, v) in gw.iter_mut().zip(row) {
                    *g += err * v;
                }
                gb += err;
            }
            for (wi, g) in w.iter_mut().zip(&gw) {
                *wi -= config.learning_rate * (g / n + config.l2 * *wi);
            }
            *b -= config.learning_rate * gb / n;
        }
    }
    Ok(BaselineModel {
        channels,
        vocab: vocab.to_vec(),
        mean,
        std,
        weights,
        bias,
    })
}

impl BaselineModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Per-class sigmoid scores.
    pub fn scores(&self, features: &FeatureVector) -> Result<Vec<f64>> {
        if features.values.len() != self.dim() || features.channels != self.channels {
            return Err(Error::Contract(format!(
                "feature vector of {} values over {:?} does not match the model's {} over {:?}",
                features.values.len(),
                features.channels,
                self.dim(),
                self.channels
            )));
        }
        let x = standardize(&features.values, &self.mean, &self.std);
        Ok(self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| sigmoid(b + w.iter().zip(&x).map(|(a, c)| a * c).sum::<f64>()))
            .collect())
    }
}

pub fn predict_baseline(
    model: &BaselineModel,
    features: &FeatureVector,
    threshold: f64,
) -> Result<PredictionResult> {
    Ok(PredictionResult::from_scores(
        model.scores(features)?,
        &model.vocab,
        threshold,
    ))
}

/// Layout of a `.arbm` file, little-endian: magic `ARBM`, version u16,
/// reserved u16, channel count u32 and names, class count u32 and names
/// (u32 length + UTF-8 each), dimension u32, then f64 mean, std, the
/// class-major weight matrix and the biases.
pub fn save_baseline(model: &BaselineModel, path: &Path) -> Result<()> {
    let mut w = ByteWriter::default();
    w.bytes(&BASELINE_MAGIC);
    w.u16(BASELINE_VERSION);
    w.u16(0);
    w.len(model.channels.len())?;
    for c in &model.channels {
        w.str(c.name())?;
    }
    w.len(model.vocab.len())?;
    for v in &model.vocab {
        w.str(v)?;
    }
    w.len(model.dim())?;
    for v in model
        .mean
        .iter()
        .chain(&model.std)
        .chain(model.weights.iter().flatten())
        .chain(&model.bias)
    {
        w.f64(*v);
    }
    write_atomic(path, &w.buf)
}

pub fn load_baseline(path: &Path) -> Result<BaselineModel> {
    let bytes = std::fs::read(path)?;
    let mut r = ByteReader::new(&bytes, path);
    if r.take(4)? != BASELINE_MAGIC {
        return Err(r.fail("not a baseline model file (bad magic)"));
    }
    let version = r.u16()?;
    if version != BASELINE_VERSION {
        return Err(r.fail(format!("unsupported baseline version {version}")));
    }
    r.u16()?;
    let nc = r.len()?;
    let channels = (0..nc)
        .map(|_| {
            let name = r.str()?;
            name.parse::<MetricKind>()
                .map_err(|_| r.fail(format!("unknown channel {name:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let k = r.len()?;
    let vocab = (0..k).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let d = r.len()?;
    if d != nc * STATS_PER_CHANNEL || k < 2 {
        return Err(r.fail(format!(
            "inconsistent sizes: {nc} channels, {k} classes, dim {d}"
        )));
    }
    let mut vec = |len: usize| (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>();
    let mean = vec(d)?;
    let std = vec(d)?;
    let weights = (0..k).map(|_| vec(d)).collect::<Result<Vec<_>>>()?;
    let bias = vec(k)?;
    r.finish()?;
    Ok(BaselineModel {
        channels,
        vocab,
        mean,
        std,
        weights,
        bias,
    })
}
