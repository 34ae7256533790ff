//! Fixed-length resampling of metric traces.
//!
//! Long traces are cut into `⌊n/l⌋`-sample groups that are reduced with an
//! aggregation function; trailing samples that do not fill a group are
//! dropped. Short traces are forward-filled: each sample is repeated
//! `⌊l/n⌋` times and the last value pads the tail up to `l`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::MetricTrace;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggFn {
    #[default]
    Mean,
    Max,
    Min,
    Median,
}

impl AggFn {
    /// Reduces a non-empty group.
    pub fn apply(self, group: &[f64]) -> f64 {
        debug_assert!(!group.is_empty());
        match self {
            AggFn::Mean => group.iter().sum::<f64>() / group.len() as f64,
            AggFn::Max => group.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            AggFn::Min => group.iter().copied().fold(f64::INFINITY, f64::min),
            AggFn::Median => {
                let mut sorted = group.to_vec();
                sorted.sort_by(f64::total_cmp);
                let mid = sorted.len() / 2;
                if sorted.len() % 2 == 1 {
                    sorted[mid]
                } else {
                    (sorted[mid - 1] + sorted[mid]) / 2.0
                }
            }
        }
    }
}

impl fmt::Display for AggFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggFn::Mean => "mean",
            AggFn::Max => "max",
            AggFn::Min => "min",
            AggFn::Median => "median",
        })
    }
}

impl FromStr for AggFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" | "avg" => Ok(AggFn::Mean),
            "max" => Ok(AggFn::Max),
            "min" => Ok(AggFn::Min),
            "median" => Ok(AggFn::Median),
            other => Err(Error::Config(format!("unknown aggregation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResampleSpec {
    target_length: usize,
    pub agg: AggFn,
}

impl ResampleSpec {
    pub fn new(target_length: usize, agg: AggFn) -> Result<Self> {
        if target_length < 2 {
            return Err(Error::Config(format!(
                "resampling length must be at least 2, got {target_length}"
            )));
        }
        Ok(ResampleSpec { target_length, agg })
    }

    pub fn target_length(&self) -> usize {
        self.target_length
    }
}

/// Group-aggregates `values` (length `n > l`) down to exactly `l` samples.
pub fn downsample_values(values: &[f64], l: usize, agg: AggFn) -> Result<Vec<f64>> {
    let n = values.len();
    if l == 0 || n <= l {
        return Err(Error::Contract(format!(
            "downsampling needs more samples ({n}) than the target length ({l})"
        )));
    }
    let group = n / l;
    Ok(values[..group * l]
        .chunks_exact(group)
        .map(|g| agg.apply(g))
        .collect())
}

/// Forward-fills `values` (length `0 < n < l`) up to exactly `l` samples.
pub fn upsample_values(values: &[f64], l: usize) -> Result<Vec<f64>> {
    let n = values.len();
    if n == 0 {
        return Err(Error::EmptyInput("cannot upsample an empty trace".into()));
    }
    if n >= l {
        return Err(Error::Contract(format!(
            "upsampling needs fewer samples ({n}) than the target length ({l})"
        )));
    }
    let repeat = l / n;
    let mut out = Vec::with_capacity(l);
    for &v in values {
        out.extend(std::iter::repeat_n(v, repeat));
    }
    let last = values[n - 1];
    out.resize(l, last);
    Ok(out)
}

/// Brings `values` to length `l`, choosing the branch by length.
pub fn resample_values(values: &[f64], l: usize, agg: AggFn) -> Result<Vec<f64>> {
    use std::cmp::Ordering;
    match values.len().cmp(&l) {
        Ordering::Greater => downsample_values(values, l, agg),
        Ordering::Less => upsample_values(values, l),
        Ordering::Equal => Ok(values.to_vec()),
    }
}

pub fn downsample(trace: &MetricTrace, spec: &ResampleSpec) -> Result<MetricTrace> {
    let values = downsample_values(&trace.values, spec.target_length, spec.agg)?;
    let group = trace.len() / spec.target_length;
    MetricTrace::new(trace.kind, values, trace.sample_period * group as f64)
}

pub fn upsample(trace: &MetricTrace, l: usize) -> Result<MetricTrace> {
    let values = upsample_values(&trace.values, l)?;
    let period = trace.sample_period * trace.len() as f64 / l as f64;
    MetricTrace::new(trace.kind, values, period)
}

pub fn resample(trace: &MetricTrace, spec: &ResampleSpec) -> Result<MetricTrace> {
    use std::cmp::Ordering;
    match trace.len().cmp(&spec.target_length) {
        Ordering::Greater => downsample(trace, spec),
        Ordering::Less => upsample(trace, spec.target_length),
        Ordering::Equal => Ok(trace.clone()),
    }
}
