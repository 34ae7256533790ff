//! Confidence-thresholded labelling shared by both classifiers.

use serde::Serialize;

/// Label emitted when no class reaches the threshold.
pub const UNKNOWN_LABEL: &str = "unknown";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionResult {
    /// Per-class scores in vocabulary order. Softmax probabilities for the
    /// CNN; independent one-vs-rest sigmoid scores for the baseline.
    pub scores: Vec<f64>,
    /// Index of the emitted class, `None` for unknown.
    pub class_index: Option<usize>,
    /// Emitted class name, `None` for unknown.
    pub label: Option<String>,
    pub threshold: f64,
}

impl PredictionResult {
    pub fn from_scores(scores: Vec<f64>, vocab: &[String], threshold: f64) -> Self {
        let class_index = decide(&scores, threshold);
        PredictionResult {
            label: class_index.map(|i| vocab[i].clone()),
            class_index,
            scores,
            threshold,
        }
    }

    pub fn max_score(&self) -> f64 {
        self.scores
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// The emitted label, `unknown` included.
    pub fn label_str(&self) -> &str {
        self.label.as_deref().unwrap_or(UNKNOWN_LABEL)
    }
}

/// Index of the highest score, lowest index on ties.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            Some(b) if scores[b] >= s => {}
            _ => best = Some(i),
        }
    }
    best
}

/// The top class when its score is at least `threshold`, otherwise `None`.
pub fn decide(scores: &[f64], threshold: f64) -> Option<usize> {
    argmax(scores).filter(|&i| scores[i] >= threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vec<String> {
        ["a", "b", "c"].map(String::from).to_vec()
    }

    #[test]
    fn threshold_truth_table() {
        let p = vec![0.9, 0.05, 0.05];
        assert_eq!(
            PredictionResult::from_scores(p.clone(), &vocab(), 0.8)
                .label
                .as_deref(),
            Some("a")
        );
        let r = PredictionResult::from_scores(p.clone(), &vocab(), 0.95);
        assert_eq!(r.label, None);
        assert_eq!(r.label_str(), "unknown");
        assert_eq!(decide(&[0.2, 0.5, 0.3], 0.0), Some(1));
    }

    #[test]
    fn ties_pick_lowest_index() {
        assert_eq!(argmax(&[0.4, 0.4, 0.2]), Some(0));
        assert_eq!(argmax(&[0.1, 0.45, 0.45]), Some(1));
        assert_eq!(argmax(&[]), None);
    }

    #[test]
    fn threshold_is_inclusive() {
        assert_eq!(decide(&[0.8, 0.2], 0.8), Some(0));
    }
}
