//! Order-free summary statistics of raw metric traces.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::{Error, JobRecord, MetricKind, Result};

pub const STATISTICS: [&str; 11] = [
    "min", "max", "mean", "std", "skew", "kurtosis", "p5", "p25", "p50", "p75", "p95",
];
pub const STATS_PER_CHANNEL: usize = STATISTICS.len();

/// `STATS_PER_CHANNEL` values per channel, in channel order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub channels: Vec<MetricKind>,
}

/// `statistic_channel` column names.
pub fn feature_names(channels: &[MetricKind]) -> Vec<String> {
    channels
        .iter()
        .flat_map(|c| STATISTICS.iter().map(move |s| format!("{s}_{}", c.name())))
        .collect()
}

/// Linear interpolation between closest ranks on sorted data.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// The eleven statistics of one trace. Standard deviation is the population
/// one; skew and kurtosis are standardized central moments with kurtosis
/// non-excess, both 0 for a constant trace.
pub fn trace_statistics(values: &[f64]) -> Result<[f64; STATS_PER_CHANNEL]> {
    if values.is_empty() {
        return Err(Error::EmptyInput("cannot summarize an empty trace".into()));
    }
    let n = values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let (skew, kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    } else {
        (0.0, 0.0)
    };
    Ok([
        sorted[0],
        sorted[sorted.len() - 1],
        mean,
        m2.sqrt(),
        skew,
        kurtosis,
        percentile(&sorted, 5.0),
        percentile(&sorted, 25.0),
        percentile(&sorted, 50.0),
        percentile(&sorted, 75.0),
        percentile(&sorted, 95.0),
    ])
}

/// Features of the raw, un-resampled traces of `channels`.
pub fn extract_features(job: &JobRecord, channels: &[MetricKind]) -> Result<FeatureVector> {
    if channels.is_empty() {
        return Err(Error::Config("no channels selected".into()));
    }
    let mut values = Vec::with_capacity(channels.len() * STATS_PER_CHANNEL);
    for &c in channels {
        let stats = trace_statistics(&job.trace(c).values)
            .map_err(|_| Error::EmptyInput(format!("job {}: {c} trace is empty", job.job_id)))?;
        values.extend_from_slice(&stats);
    }
    Ok(FeatureVector {
        values,
        channels: channels.to_vec(),
    })
}

pub fn extract_all(jobs: &[JobRecord], channels: &[MetricKind]) -> Result<Vec<FeatureVector>> {
    jobs.par_iter()
        .map(|j| extract_features(j, channels))
        .collect()
}

/// `job_id,label,<statistic>_<channel>...` rows.
pub fn features_csv(jobs: &[JobRecord], features: &[FeatureVector]) -> Result<String> {
    let channels = features
        .first()
        .map(|f| f.channels.clone())
        .unwrap_or_default();
    let mut out = String::from("job_id,label");
    for name in feature_names(&channels) {
        out.push(',');
        out.push_str(&name);
    }
    out.push('\n');
    for (job, f) in jobs.iter().zip(features) {
        if f.channels != channels {
            return Err(Error::Schema(
                "feature vectors use different channels".into(),
            ));
        }
        let _ = write!(out, "{},{}", job.job_id, job.label.as_deref().unwrap_or(""));
        for v in &f.values {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    Ok(out)
}
