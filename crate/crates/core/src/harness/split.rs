//! Train/validation/test splits and k-fold partitions over labelled items.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gaf::JobSignature;
use crate::synth::rng::derive_seed;
use crate::{Error, JobRecord, Result};

/// Smallest class a stratified split accepts.
pub const MIN_STRATIFIED_CLASS: usize = 5;

pub trait Labelled {
    fn item_id(&self) -> &str;
    fn item_label(&self) -> Option<&str>;
}

impl Labelled for JobRecord {
    fn item_id(&self) -> &str {
        &self.job_id
    }

    fn item_label(&self) -> Option<&str> {
        self.label.as_deref()
    }
}

impl Labelled for JobSignature {
    fn item_id(&self) -> &str {
        &self.job_id
    }

    fn item_label(&self) -> Option<&str> {
        self.label.as_deref()
    }
}

pub fn labels_of<T: Labelled>(items: &[T]) -> Result<Vec<&str>> {
    items
        .iter()
        .map(|i| {
            i.item_label()
                .ok_or_else(|| Error::MissingLabel(i.item_id().to_string()))
        })
        .collect()
}

/// Sorted distinct labels.
pub fn vocabulary<T: Labelled>(items: &[T]) -> Result<Vec<String>> {
    let mut v: Vec<String> = labels_of(items)?.into_iter().map(String::from).collect();
    v.sort();
    v.dedup();
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_frac: 0.6,
            val_frac: 0.2,
            test_frac: 0.2,
            stratified: true,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fracs = [self.train_frac, self.val_frac, self.test_frac];
        if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config(format!(
                "split fractions {fracs:?} outside [0, 1]"
            )));
        }
        let sum: f64 = fracs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions sum to {sum}, not 1"
            )));
        }
        Ok(())
    }
}

/// Index sets of a split, each ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    pub fn select<T: Clone>(&self, items: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
        let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect();
        (pick(&self.train), pick(&self.val), pick(&self.test))
    }
}

fn groups(labels: &[&str]) -> BTreeMap<String, Vec<usize>> {
    let mut g: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        g.entry(l.to_string()).or_default().push(i);
    }
    g
}

fn shuffled(mut members: Vec<usize>, seed: u64, stream: u64) -> Vec<usize> {
    members.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[stream])));
    members
}

/// Splits item indices by label. Within each group (each class when
/// stratified, everything otherwise) the shuffled members go
/// `round(train_frac·n)` to train, `round(val_frac·n)` to validation and the
/// rest to test.
pub fn split_indices(labels: &[&str], spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    if labels.is_empty() {
        return Err(Error::EmptyInput("nothing to split".into()));
    }
    let buckets: Vec<(String, Vec<usize>)> = if spec.stratified {
        groups(labels).into_iter().collect()
    } else {
        vec![("all".to_string(), (0..labels.len()).collect())]
    };
    let mut out = SplitIndices {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (stream, (class, members)) in buckets.into_iter().enumerate() {
        if spec.stratified && members.len() < MIN_STRATIFIED_CLASS {
            return Err(Error::ClassTooSmall {
                class,
                have: members.len(),
                need: MIN_STRATIFIED_CLASS,
            });
        }
        let n = members.len();
        let n_train = ((spec.train_frac * n as f64).round() as usize).min(n);
        let n_val = ((spec.val_frac * n as f64).round() as usize).min(n - n_train);
        let members = shuffled(members, spec.seed, stream as u64);
        out.train.extend_from_slice(&members[..n_train]);
        out.val
            .extend_from_slice(&members[n_train..n_train + n_val]);
        out.test.extend_from_slice(&members[n_train + n_val..]);
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

pub fn split_dataset<T: Labelled + Clone>(
    items: &[T],
    spec: &SplitSpec,
) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    Ok(split_indices(&labels_of(items)?, spec)?.select(items))
}

/// Partitions item indices into `k` folds with per-class counts differing by
/// at most one between folds. Classes are dealt round-robin after a seeded
/// shuffle, continuing where the previous class stopped so fold sizes stay
/// balanced too.
pub fn stratified_kfold(labels: &[&str], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    let mut folds = vec![Vec::new(); k];
    let mut offset = 0;
    for (stream, (class, members)) in groups(labels).into_iter().enumerate() {
        if members.len() < k {
            return Err(Error::ClassTooSmall {
                class,
                have: members.len(),
                need: k,
            });
        }
        let n = members.len();
        for (j, idx) in shuffled(members, seed, stream as u64)
            .into_iter()
            .enumerate()
        {
            folds[(offset + j) % k].push(idx);
        }
        offset = (offset + n) % k;
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Test fold `i`, validation fold `i + 1 (mod k)`, training on the rest.
pub fn fold_split(folds: &[Vec<usize>], i: usize) -> SplitIndices {
    let k = folds.len();
    let v = (i + 1) % k;
    let mut train: Vec<usize> = (0..k)
        .filter(|&f| f != i && f != v)
        .flat_map(|f| folds[f].iter().copied())
        .collect();
    train.sort_unstable();
    SplitIndices {
        train,
        val: folds[v].clone(),
        test: folds[i].clone(),
    }
}
