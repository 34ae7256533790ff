//! Backpropagation versus central finite differences, in `f64`.

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{self, Geometry, Params};
use super::{cross_entropy, softmax, to_hwc, CnnModel};
use crate::{Error, Result};

/// Added to every bias before checking so that no unit sits exactly on a
/// ReLU kink.
const BIAS_SHIFT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Max of `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`.
    pub max_relative_error: f64,
    pub checked: usize,
    /// Draws rejected because a ±ε step changed a ReLU mask or pooling
    /// winner, where finite differences are meaningless.
    pub skipped: usize,
}

struct Problem<'a> {
    geo: Geometry,
    input: Vec<f64>,
    labels: &'a [usize],
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.labels.len()
    }

    fn loss(&self, params: &Params<f64>) -> f64 {
        let (logits, _) = network::forward(params, &self.geo, &self.input, self.n(), None, false);
        logits
            .rows()
            .into_iter()
            .zip(self.labels)
            .map(|(row, &y)| cross_entropy(row.as_slice().expect("contiguous"), y))
            .sum::<f64>()
            / self.n() as f64
    }

    fn pattern(&self, params: &Params<f64>) -> Vec<u8> {
        network::activation_pattern(params, &self.geo, &self.input, self.n())
    }

    fn gradient(&self, params: &Params<f64>) -> Params<f64> {
        let n = self.n();
        let (logits, cache) = network::forward(params, &self.geo, &self.input, n, None, true);
        let mut dlogits = Array2::<f64>::zeros(logits.raw_dim());
        for (r, &y) in self.labels.iter().enumerate() {
            let p = softmax(logits.row(r).as_slice().expect("contiguous"));
            for (c, pc) in p.into_iter().enumerate() {
                dlogits[[r, c]] = (pc - if c == y { 1.0 } else { 0.0 }) / n as f64;
            }
        }
        network::backward(params, &self.geo, &cache.expect("cache"), n, None, &dlogits)
    }
}

/// Compares analytic gradients with central differences on `samples`
/// parameters spread evenly over the model's tensors. Dropout is off.
pub fn gradient_check(
    model: &CnnModel,
    inputs: &[&Array3<f32>],
    labels: &[usize],
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(Error::Contract(
            "gradient check needs one label per input and at least one input".into(),
        ));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= model.num_classes()) {
        return Err(Error::Contract(format!("label index {y} out of range")));
    }
    for t in inputs {
        model.check_shape(t)?;
    }
    let mut input = Vec::new();
    for t in inputs {
        to_hwc::<f64>(t, &mut input);
    }
    let problem = Problem {
        geo: model.config.geometry(),
        input,
        labels,
    };

    let mut params = model.params.map(f64::from);
    for c in &mut params.conv {
        c.bias.mapv_inplace(|b| b + BIAS_SHIFT);
    }
    params.hidden.bias.mapv_inplace(|b| b + BIAS_SHIFT);

    let analytic = problem.gradient(&params);
    let analytic_slices: Vec<Vec<f64>> = analytic.slices().iter().map(|s| s.to_vec()).collect();
    let base_pattern = problem.pattern(&params);
    let tensor_count = analytic_slices.len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    let max_attempts = samples * 20 + 100;
    let mut attempts = 0;
    while report.checked < samples && attempts < max_attempts {
        attempts += 1;
        let tensor = report.checked % tensor_count;
        let index = rng.random_range(0..analytic_slices[tensor].len());

        let original = params.slices()[tensor][index];
        params.slices_mut()[tensor][index] = original + epsilon;
        let plus = problem.loss(&params);
        let plus_pattern = problem.pattern(&params);
        params.slices_mut()[tensor][index] = original - epsilon;
        let minus = problem.loss(&params);
        let minus_pattern = problem.pattern(&params);
        params.slices_mut()[tensor][index] = original;

        if plus_pattern != base_pattern || minus_pattern != base_pattern {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * epsilon);
        let exact = analytic_slices[tensor][index];
        let denom = exact.abs().max(numeric.abs()).max(1e-8);
        let rel = (exact - numeric).abs() / denom;
        report.max_relative_error = report.max_relative_error.max(rel);
        report.checked += 1;
    }
    if report.checked < samples {
        return Err(Error::Contract(format!(
            "only {} of {samples} parameters could be checked away from kinks",
            report.checked
        )));
    }
    Ok(report)
}
