//! Seeded synthetic workloads: labelled multi-metric job traces with
//! per-class temporal structure, written in the ingest CSV format.
//!
//! Each metric follows `base + amplitude · w(t)` where `w` is a waveform in
//! `[0, 1]` over normalized job time `t ∈ [0, 1)`, plus Gaussian noise with
//! standard deviation `noise_sigma · base`. Values are clipped at zero.
//! Random draws come from [`rng::SplitMix64`], so datasets are reproducible
//! from the seed alone.

pub mod rng;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fsutil::write_atomic;
use crate::ingest::{
    job_from_nodes, manifest_json, trace_csv, ManifestEntry, NodeRows, RawSampleRow, MANIFEST_FILE,
};
use crate::{Error, JobRecord, Result};
use rng::{derive_seed, SplitMix64};

/// Cycles per sample; IPC is encoded as `tot_ins / CYCLES_PER_SAMPLE`.
pub const CYCLES_PER_SAMPLE: u64 = 2_000_000_000;
/// Node memory in bytes.
pub const MEM_TOTAL: u64 = 128 << 30;
/// First sample timestamp of every job.
pub const START_TIMESTAMP: i64 = 1_700_000_000;
/// Fraction of each period a periodic burst stays high.
pub const BURST_DUTY: f64 = 0.15;
/// Relative noise applied to extra nodes on top of the shared trace.
pub const NODE_JITTER: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Waveform {
    Constant,
    /// Rises linearly over the whole job; ignores the period.
    Ramp,
    /// High for the first half of each period.
    Square,
    Sawtooth,
    /// High for the first [`BURST_DUTY`] of each period.
    PeriodicBurst,
}

impl Waveform {
    /// `w(t)` for `t` in `[0, 1)`.
    pub fn value(self, t: f64, period_fraction: f64, phase: f64) -> f64 {
        let cycle = t / period_fraction + phase;
        let frac = cycle - cycle.floor();
        match self {
            Waveform::Constant => 0.0,
            Waveform::Ramp => t,
            Waveform::Square => {
                if frac < 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            Waveform::Sawtooth => frac,
            Waveform::PeriodicBurst => {
                if frac < BURST_DUTY {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternSpec {
    pub base: f64,
    pub amplitude: f64,
    pub waveform: Waveform,
    /// Period as a fraction of the job duration.
    pub period_fraction: f64,
    /// Offset in periods.
    pub phase: f64,
}

impl PatternSpec {
    pub fn constant(base: f64) -> Self {
        PatternSpec {
            base,
            amplitude: 0.0,
            waveform: Waveform::Constant,
            period_fraction: 1.0,
            phase: 0.0,
        }
    }

    pub fn wave(base: f64, amplitude: f64, waveform: Waveform, period_fraction: f64) -> Self {
        PatternSpec {
            base,
            amplitude,
            waveform,
            period_fraction,
            phase: 0.0,
        }
    }

    pub fn level(&self, t: f64) -> f64 {
        self.base + self.amplitude * self.waveform.value(t, self.period_fraction, self.phase)
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.base > 0.0 && self.base.is_finite()) {
            return Err(Error::Config(format!(
                "{what}: base level must be positive"
            )));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::Config(format!(
                "{what}: amplitude must be non-negative"
            )));
        }
        if !(self.period_fraction > 0.0 && self.period_fraction.is_finite()) {
            return Err(Error::Config(format!(
                "{what}: period fraction must be positive"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    pub name: String,
    /// Watts.
    pub power: PatternSpec,
    pub ipc: PatternSpec,
    /// Bytes.
    pub mem: PatternSpec,
    /// Noise std as a fraction of each pattern's base level.
    pub noise_sigma: f64,
    /// Seconds, drawn uniformly.
    pub duration_range: (f64, f64),
    pub node_count_range: (usize, usize),
    /// Seconds between samples.
    pub sample_period: f64,
    /// Plays every pattern backwards: sample `i` of `n` takes the level of
    /// sample `n - 1 - i`.
    #[serde(default)]
    pub time_reversed: bool,
}

impl ClassProfile {
    pub fn new(name: &str, power: PatternSpec, ipc: PatternSpec, mem: PatternSpec) -> Self {
        ClassProfile {
            name: name.to_string(),
            power,
            ipc,
            mem,
            noise_sigma: 0.05,
            duration_range: (600.0, 1800.0),
            node_count_range: (1, 1),
            sample_period: 5.0,
            time_reversed: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config("profile name is empty".into()));
        }
        for (what, p) in [
            ("power", &self.power),
            ("ipc", &self.ipc),
            ("mem", &self.mem),
        ] {
            p.validate(&format!("profile {}: {what}", self.name))?;
        }
        let fail = |m: &str| Err(Error::Config(format!("profile {}: {m}", self.name)));
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail("noise sigma must be non-negative");
        }
        let (lo, hi) = self.duration_range;
        if !(lo >= 60.0 && hi >= lo && hi.is_finite()) {
            return fail("duration range must satisfy 60 <= min <= max");
        }
        let (nlo, nhi) = self.node_count_range;
        if nlo == 0 || nhi < nlo {
            return fail("node count range must satisfy 1 <= min <= max");
        }
        if !(self.sample_period > 0.0 && self.sample_period <= lo / 2.0) {
            return fail("sample period must be positive and fit two samples in a job");
        }
        Ok(())
    }
}

/// Four classes with visibly distinct temporal structure.
pub fn default_profiles() -> Vec<ClassProfile> {
    let ipc = PatternSpec::constant(1.2);
    let mem = PatternSpec::constant(24e9);
    vec![
        ClassProfile::new("flat_high_power", PatternSpec::constant(380.0), ipc, mem),
        ClassProfile::new(
            "ramping_memory",
            PatternSpec::constant(240.0),
            ipc,
            PatternSpec::wave(8e9, 64e9, Waveform::Ramp, 1.0),
        ),
        ClassProfile::new(
            "periodic_burst_ipc",
            PatternSpec::constant(260.0),
            PatternSpec::wave(0.6, 1.8, Waveform::PeriodicBurst, 0.125),
            mem,
        ),
        ClassProfile::new(
            "sawtooth_power",
            PatternSpec::wave(180.0, 200.0, Waveform::Sawtooth, 0.25),
            ipc,
            mem,
        ),
    ]
}

/// Two classes whose traces are time reversals of each other, so each
/// value multiset has the same distribution in both. Power is a square wave
/// with period 0.8 of the job (high, low, high). A symmetric pattern would
/// not work here: reversing a half-duty square wave equals negating it after
/// rescaling, and GAF fields are invariant under negation.
pub fn confusable_profiles() -> Vec<ClassProfile> {
    let power = PatternSpec::wave(200.0, 150.0, Waveform::Square, 0.8);
    let ipc = PatternSpec::constant(1.0);
    let mem = PatternSpec::constant(32e9);
    let forward = ClassProfile::new("power_square_forward", power, ipc, mem);
    let reversed = ClassProfile {
        name: "power_square_reversed".into(),
        time_reversed: true,
        ..forward.clone()
    };
    vec![forward, reversed]
}

/// The named profile sets accepted by [`ProfileSet::from_str`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileSet {
    Default,
    Confusable,
    Default6,
}

impl ProfileSet {
    pub fn profiles(self) -> Vec<ClassProfile> {
        match self {
            ProfileSet::Default => default_profiles(),
            ProfileSet::Confusable => confusable_profiles(),
            ProfileSet::Default6 => {
                let mut p = default_profiles();
                p.extend(confusable_profiles());
                p
            }
        }
    }
}

impl fmt::Display for ProfileSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProfileSet::Default => "default",
            ProfileSet::Confusable => "confusable",
            ProfileSet::Default6 => "default6",
        })
    }
}

impl FromStr for ProfileSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(ProfileSet::Default),
            "confusable" => Ok(ProfileSet::Confusable),
            "default6" => Ok(ProfileSet::Default6),
            other => Err(Error::Config(format!(
                "unknown profile set {other:?} (expected default, confusable or default6)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDatasetSpec {
    pub profiles: Vec<ClassProfile>,
    pub jobs_per_class: usize,
    pub seed: u64,
}

impl SynthDatasetSpec {
    pub fn new(profiles: Vec<ClassProfile>, jobs_per_class: usize, seed: u64) -> Self {
        SynthDatasetSpec {
            profiles,
            jobs_per_class,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.profiles.is_empty() {
            return Err(Error::Config("no class profiles".into()));
        }
        if self.jobs_per_class == 0 {
            return Err(Error::Config("jobs per class must be positive".into()));
        }
        let mut names = BTreeSet::new();
        for p in &self.profiles {
            p.validate()?;
            if !names.insert(p.name.as_str()) {
                return Err(Error::Config(format!(
                    "duplicate profile name {:?}",
                    p.name
                )));
            }
        }
        Ok(())
    }

    /// Overrides every profile's node count.
    pub fn with_nodes(mut self, nodes: usize) -> Self {
        for p in &mut self.profiles {
            p.node_count_range = (nodes, nodes);
        }
        self
    }
}

/// One generated job: its raw per-node rows and the record derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthJob {
    pub rows: Vec<RawSampleRow>,
    pub record: JobRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    /// Grouped by profile, in profile order.
    pub jobs: Vec<SynthJob>,
    pub manifest: Vec<ManifestEntry>,
}

impl SynthDataset {
    pub fn records(&self) -> Vec<JobRecord> {
        self.jobs.iter().map(|j| j.record.clone()).collect()
    }
}

fn sample(pattern: &PatternSpec, t: f64, sigma: f64, rng: &mut SplitMix64) -> f64 {
    let noise = if sigma > 0.0 {
        sigma * pattern.base * rng.normal()
    } else {
        0.0
    };
    (pattern.level(t) + noise).max(0.0)
}

fn encode_row(timestamp: i64, node_id: &str, power: f64, ipc: f64, mem: f64) -> RawSampleRow {
    let mem_used = (mem.round() as u64).min(MEM_TOTAL);
    RawSampleRow {
        timestamp,
        node_id: node_id.to_string(),
        power,
        tot_ins: (ipc * CYCLES_PER_SAMPLE as f64).round() as u64,
        tot_cyc: CYCLES_PER_SAMPLE,
        mem_total: MEM_TOTAL,
        mem_free: MEM_TOTAL - mem_used,
    }
}

/// Raw monitoring rows for one job, grouped by node.
pub fn generate_rows(profile: &ClassProfile, seed: u64) -> Result<Vec<NodeRows>> {
    profile.validate()?;
    let mut rng = SplitMix64::new(seed);
    let (lo, hi) = profile.duration_range;
    let duration = rng.uniform(lo, hi);
    let nodes = rng.uniform_usize(profile.node_count_range.0, profile.node_count_range.1);
    let n = ((duration / profile.sample_period).round() as usize).max(2);
    let sigma = profile.noise_sigma;

    let shared: Vec<[f64; 3]> = (0..n)
        .map(|i| {
            let k = if profile.time_reversed { n - 1 - i } else { i };
            let t = k as f64 / n as f64;
            [
                sample(&profile.power, t, sigma, &mut rng),
                sample(&profile.ipc, t, sigma, &mut rng),
                sample(&profile.mem, t, sigma, &mut rng),
            ]
        })
        .collect();

    let step = profile.sample_period.round().max(1.0) as i64;
    Ok((0..nodes)
        .map(|node| {
            let node_id = format!("nid{node:05}");
            let rows = shared
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let mut v = *v;
                    if node > 0 {
                        for x in &mut v {
                            *x = (*x * (1.0 + NODE_JITTER * rng.normal())).max(0.0);
                        }
                    }
                    encode_row(
                        START_TIMESTAMP + i as i64 * step,
                        &node_id,
                        v[0],
                        v[1],
                        v[2],
                    )
                })
                .collect();
            NodeRows { node_id, rows }
        })
        .collect())
}

/// Generates one labelled job through the same derivation path as ingest.
pub fn generate_job(profile: &ClassProfile, job_id: &str, seed: u64) -> Result<SynthJob> {
    let nodes = generate_rows(profile, seed)?;
    let (record, _) = job_from_nodes(job_id, Some(profile.name.clone()), &nodes)?;
    Ok(SynthJob {
        rows: nodes.into_iter().flat_map(|n| n.rows).collect(),
        record,
    })
}

pub fn job_id(profile: &ClassProfile, index: usize) -> String {
    format!("{}_{index:04}", profile.name)
}

/// `jobs_per_class` jobs per profile. Job `j` overall uses the seed
/// `derive_seed(spec.seed, [j])`.
pub fn generate_dataset(spec: &SynthDatasetSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let tasks: Vec<(&ClassProfile, usize, usize)> = spec
        .profiles
        .iter()
        .flat_map(|p| (0..spec.jobs_per_class).map(move |i| (p, i)))
        .enumerate()
        .map(|(counter, (p, i))| (p, i, counter))
        .collect();
    let jobs = tasks
        .par_iter()
        .map(|&(p, i, counter)| {
            generate_job(p, &job_id(p, i), derive_seed(spec.seed, &[counter as u64]))
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = jobs
        .iter()
        .map(|j| ManifestEntry {
            job_id: j.record.job_id.clone(),
            label: j.record.label.clone().expect("synthetic jobs are labelled"),
        })
        .collect();
    Ok(SynthDataset { jobs, manifest })
}

/// Writes `<job_id>.csv` per job and the label manifest into `dir`.
pub fn write_dataset(dataset: &SynthDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    dataset.jobs.par_iter().try_for_each(|job| {
        let path = dir.join(format!("{}.csv", job.record.job_id));
        write_atomic(&path, &trace_csv(&job.rows)?)
    })?;
    write_atomic(&dir.join(MANIFEST_FILE), &manifest_json(&dataset.manifest)?)
}
