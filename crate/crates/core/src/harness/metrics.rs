//! Accuracy under the confidence-threshold rule.

use serde::Serialize;

use crate::prediction::decide;
use crate::{Error, Result};

/// How an `unknown` prediction is scored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum UnknownPolicy {
    /// `unknown` never matches a known truth.
    AsWrong,
    /// `unknown` is also correct when the truth is the named novel class.
    AsNovelCorrect(String),
}

fn is_correct(prediction: Option<&str>, truth: &str, policy: &UnknownPolicy) -> bool {
    match prediction {
        Some(p) => p == truth,
        None => matches!(policy, UnknownPolicy::AsNovelCorrect(c) if c == truth),
    }
}

/// Fraction of correct predictions; `None` is `unknown`.
pub fn accuracy(
    predictions: &[Option<&str>],
    truths: &[&str],
    policy: &UnknownPolicy,
) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if truths.is_empty() {
        return Err(Error::EmptyInput("no predictions to score".into()));
    }
    let correct = predictions
        .iter()
        .zip(truths)
        .filter(|(p, t)| is_correct(**p, t, policy))
        .count();
    Ok(correct as f64 / truths.len() as f64)
}

/// Scores of one model on one labelled set, reusable across thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub vocab: Vec<String>,
    pub scores: Vec<Vec<f64>>,
    pub truths: Vec<String>,
}

impl ScoreTable {
    pub fn new(vocab: Vec<String>, scores: Vec<Vec<f64>>, truths: Vec<String>) -> Result<Self> {
        if scores.len() != truths.len() {
            return Err(Error::Contract(format!(
                "{} score rows for {} truths",
                scores.len(),
                truths.len()
            )));
        }
        if let Some(row) = scores.iter().find(|r| r.len() != vocab.len()) {
            return Err(Error::Contract(format!(
                "score row of length {} for {} classes",
                row.len(),
                vocab.len()
            )));
        }
        Ok(ScoreTable {
            vocab,
            scores,
            truths,
        })
    }

    pub fn len(&self) -> usize {
        self.truths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truths.is_empty()
    }

    pub fn predictions(&self, threshold: f64) -> Vec<Option<&str>> {
        self.scores
            .iter()
            .map(|s| decide(s, threshold).map(|i| self.vocab[i].as_str()))
            .collect()
    }

    /// Indices of samples that receive a known label at `threshold`.
    pub fn labelled_set(&self, threshold: f64) -> Vec<usize> {
        self.scores
            .iter()
            .enumerate()
            .filter(|(_, s)| decide(s, threshold).is_some())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn accuracy(&self, threshold: f64, policy: &UnknownPolicy) -> Result<f64> {
        let truths: Vec<&str> = self.truths.iter().map(String::as_str).collect();
        accuracy(&self.predictions(threshold), &truths, policy)
    }

    /// Accuracy restricted to samples whose truth is `class`, with the
    /// number of such samples.
    pub fn class_accuracy(
        &self,
        class: &str,
        threshold: f64,
        policy: &UnknownPolicy,
    ) -> Result<(f64, usize)> {
        let preds = self.predictions(threshold);
        let (p, t): (Vec<Option<&str>>, Vec<&str>) = preds
            .into_iter()
            .zip(&self.truths)
            .filter(|(_, t)| *t == class)
            .map(|(p, t)| (p, t.as_str()))
            .unzip();
        let n = t.len();
        Ok((accuracy(&p, &t, policy)?, n))
    }

    /// Fraction of samples of `class` labelled `unknown` at `threshold`.
    pub fn unknown_fraction(&self, class: &str, threshold: f64) -> Result<f64> {
        self.class_accuracy(
            class,
            threshold,
            &UnknownPolicy::AsNovelCorrect(class.to_string()),
        )
        .map(|(a, _)| a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn policies() {
        assert_eq!(
            accuracy(
                &[Some("a"), Some("b")],
                &["a", "b"],
                &UnknownPolicy::AsWrong
            )
            .unwrap(),
            1.0
        );
        let preds = [None, None, None];
        let truths = ["A", "A", "A"];
        let novel = UnknownPolicy::AsNovelCorrect("A".into());
        assert_eq!(accuracy(&preds, &truths, &novel).unwrap(), 1.0);
        assert_eq!(
            accuracy(&preds, &truths, &UnknownPolicy::AsWrong).unwrap(),
            0.0
        );
        assert!(accuracy(&[None], &[], &UnknownPolicy::AsWrong).is_err());
    }

    #[test]
    fn table_thresholds() {
        let t = ScoreTable::new(
            vec!["a".into(), "b".into()],
            vec![vec![0.9, 0.1], vec![0.45, 0.55], vec![0.3, 0.7]],
            vec!["a".into(), "b".into(), "a".into()],
        )
        .unwrap();
        assert!((t.accuracy(0.0, &UnknownPolicy::AsWrong).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((t.accuracy(0.6, &UnknownPolicy::AsWrong).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(t.labelled_set(0.6), vec![0, 2]);
        assert_eq!(
            t.class_accuracy("a", 0.0, &UnknownPolicy::AsWrong).unwrap(),
            (0.5, 2)
        );
        assert_eq!(t.unknown_fraction("b", 0.6).unwrap(), 1.0);
        assert!(ScoreTable::new(vec!["a".into()], vec![vec![0.1, 0.9]], vec!["a".into()]).is_err());
    }

    fn table_strategy() -> impl Strategy<Value = ScoreTable> {
        (2usize..5, 1usize..30).prop_flat_map(|(k, n)| {
            (
                prop::collection::vec(prop::collection::vec(0.0f64..1.0, k), n),
                prop::collection::vec(0..k, n),
            )
                .prop_map(move |(raw, truth)| {
                    let vocab: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
                    let scores = raw
                        .into_iter()
                        .map(|r| {
                            let s: f64 = r.iter().sum::<f64>() + 1e-9;
                            r.into_iter().map(|v| v / s).collect()
                        })
                        .collect();
                    let truths = truth.iter().map(|&t| vocab[t].clone()).collect();
                    ScoreTable::new(vocab, scores, truths).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn accuracy_is_monotone_in_threshold(t in table_strategy()) {
            let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
            for w in grid.windows(2) {
                let hi: std::collections::BTreeSet<_> = t.labelled_set(w[1]).into_iter().collect();
                let lo: std::collections::BTreeSet<_> = t.labelled_set(w[0]).into_iter().collect();
                prop_assert!(hi.is_subset(&lo));
                let a0 = t.accuracy(w[0], &UnknownPolicy::AsWrong).unwrap();
                let a1 = t.accuracy(w[1], &UnknownPolicy::AsWrong).unwrap();
                prop_assert!(a1 <= a0);
            }
        }

        #[test]
        fn novel_policy_never_scores_lower(t in table_strategy(), tau in 0.0f64..1.0) {
            let wrong = t.accuracy(tau, &UnknownPolicy::AsWrong).unwrap();
            for c in t.vocab.clone() {
                let novel = t.accuracy(tau, &UnknownPolicy::AsNovelCorrect(c)).unwrap();
                prop_assert!(wrong <= novel);
            }
        }
    }
}
