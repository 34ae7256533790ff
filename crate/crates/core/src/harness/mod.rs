//! Evaluation harness: splits, accuracy, and the experiment families
//! (threshold sweep, per-application cross-validation, novel-application
//! detection, channel ablation, partial signatures, resolution sweep).
//!
//! Accuracy is micro-accuracy over the evaluated samples; per-class accuracy
//! restricts to samples of that class. On known-class experiments `unknown`
//! counts as wrong.

mod metrics;
mod report;
mod split;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{
    extract_all, predict_baseline, train_baseline, BaselineConfig, BaselineModel,
};
use crate::cnn::{build_model, train, CnnConfig, CnnModel, EpochStats};
use crate::gaf::{partial_signature, signature_payload_bytes, GafKind, JobSignature};
use crate::ingest::{filter_jobs, DEFAULT_MIN_DURATION};
use crate::resample::{AggFn, ResampleSpec};
use crate::{Error, JobRecord, MetricKind, Result};

pub use metrics::{accuracy, ScoreTable, UnknownPolicy};
pub use report::{EvalReport, ReportPaths, ReportRow, TimingRow, ALL_CLASSES};
pub use split::{
    fold_split, labels_of, split_dataset, split_indices, stratified_kfold, vocabulary, Labelled,
    SplitIndices, SplitSpec, MIN_STRATIFIED_CLASS,
};

pub const CNN: &str = "cnn";
pub const BASELINE: &str = "baseline";

/// `{0.0, 0.1, …, 1.0}`.
pub fn default_thresholds() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

pub fn validate_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(Error::Config("no thresholds given".into()));
    }
    if thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::Config("thresholds must lie in [0, 1]".into()));
    }
    if thresholds.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("thresholds must be sorted ascending".into()));
    }
    Ok(())
}

/// CNN hyperparameters apart from the input geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub dense_units: usize,
    pub seed: u64,
}

impl Default for TrainingParams {
    fn default() -> Self {
        let c = CnnConfig::new(8, 1, 2);
        TrainingParams {
            epochs: c.epochs,
            batch_size: c.batch_size,
            learning_rate: c.learning_rate,
            momentum: c.momentum,
            dense_units: c.dense_units,
            seed: c.seed,
        }
    }
}

impl TrainingParams {
    pub fn cnn_config(&self, side: usize, channels: usize, classes: usize) -> CnnConfig {
        CnnConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            dense_units: self.dense_units,
            seed: self.seed,
            ..CnnConfig::new(side, channels, classes)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Resampling length and signature side.
    pub length: usize,
    pub agg: AggFn,
    pub kind: GafKind,
    pub channels: Vec<MetricKind>,
    pub training: TrainingParams,
    pub baseline: BaselineConfig,
    pub split: SplitSpec,
    /// Grid for threshold sweeps.
    pub thresholds: Vec<f64>,
    /// Single threshold for per-class experiments.
    pub eval_threshold: f64,
    /// Jobs shorter than this many seconds are dropped.
    pub min_duration: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            length: 128,
            agg: AggFn::Mean,
            kind: GafKind::Gasf,
            channels: MetricKind::ALL.to_vec(),
            training: TrainingParams::default(),
            baseline: BaselineConfig::default(),
            split: SplitSpec::default(),
            thresholds: default_thresholds(),
            eval_threshold: 0.8,
            min_duration: DEFAULT_MIN_DURATION,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length < 8 {
            return Err(Error::Config(format!(
                "length {} is below the minimum of 8",
                self.length
            )));
        }
        if self.channels.is_empty() {
            return Err(Error::Config("no channels selected".into()));
        }
        validate_thresholds(&self.thresholds)?;
        if !(0.0..=1.0).contains(&self.eval_threshold) {
            return Err(Error::Config("evaluation threshold outside [0, 1]".into()));
        }
        self.split.validate()
    }

    fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Drops short jobs and requires every remaining job to be labelled.
pub fn prepare_jobs(jobs: Vec<JobRecord>, min_duration: f64) -> Result<Vec<JobRecord>> {
    let before = jobs.len();
    let jobs = filter_jobs(jobs, min_duration);
    if jobs.len() < before {
        log::info!(
            "dropped {} jobs shorter than {min_duration} s",
            before - jobs.len()
        );
    }
    labels_of(&jobs)?;
    if jobs.is_empty() {
        return Err(Error::EmptyInput("no jobs left after filtering".into()));
    }
    Ok(jobs)
}

/// Signatures of the leading `fraction` of each job, in job order.
pub fn encode_jobs(
    jobs: &[JobRecord],
    length: usize,
    agg: AggFn,
    kind: GafKind,
    channels: &[MetricKind],
    fraction: f64,
) -> Result<Vec<JobSignature>> {
    let spec = ResampleSpec::new(length, agg)?;
    jobs.par_iter()
        .map(|j| partial_signature(j, fraction, &spec, kind, channels))
        .collect()
}

pub fn channel_set_name(channels: &[MetricKind]) -> String {
    channels
        .iter()
        .map(|c| c.name())
        .collect::<Vec<_>>()
        .join("+")
}

#[derive(Debug, Clone)]
pub struct TrainedCnn {
    pub model: CnnModel,
    pub history: Vec<EpochStats>,
    pub train_seconds: f64,
}

pub fn fit_cnn(
    train_set: &[JobSignature],
    val_set: &[JobSignature],
    vocab: &[String],
    params: &TrainingParams,
) -> Result<TrainedCnn> {
    let first = train_set
        .first()
        .ok_or_else(|| Error::EmptyInput("training set is empty".into()))?;
    let config = params.cnn_config(first.side(), first.channels(), vocab.len());
    let model = build_model(config, vocab.to_vec())?;
    let start = Instant::now();
    let (model, history) = train(model, train_set, val_set)?;
    Ok(TrainedCnn {
        model,
        history,
        train_seconds: start.elapsed().as_secs_f64(),
    })
}

fn truths<T: Labelled>(items: &[T]) -> Result<Vec<String>> {
    Ok(labels_of(items)?.into_iter().map(String::from).collect())
}

/// CNN probabilities on `sigs` and the wall-clock time to compute them.
pub fn cnn_scores(model: &CnnModel, sigs: &[JobSignature]) -> Result<(ScoreTable, f64)> {
    let start = Instant::now();
    let scores = model.probabilities(sigs)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok((
        ScoreTable::new(model.vocab.clone(), scores, truths(sigs)?)?,
        seconds,
    ))
}

pub fn fit_baseline(
    train_jobs: &[JobRecord],
    vocab: &[String],
    channels: &[MetricKind],
    config: &BaselineConfig,
) -> Result<BaselineModel> {
    let features = extract_all(train_jobs, channels)?;
    train_baseline(&features, &truths(train_jobs)?, vocab, config)
}

pub fn baseline_scores(model: &BaselineModel, jobs: &[JobRecord]) -> Result<ScoreTable> {
    let features = extract_all(jobs, &model.channels)?;
    let scores = features
        .iter()
        .map(|f| predict_baseline(model, f, 0.0).map(|p| p.scores))
        .collect::<Result<Vec<_>>>()?;
    ScoreTable::new(model.vocab.clone(), scores, truths(jobs)?)
}

/// Overall accuracy of each model at each threshold, `unknown` counted
/// wrong. Every table must cover the same samples.
pub fn run_threshold_sweep(
    tables: &[(&str, &ScoreTable)],
    thresholds: &[f64],
    section: &str,
    report: &mut EvalReport,
) -> Result<()> {
    validate_thresholds(thresholds)?;
    if let Some((_, first)) = tables.first() {
        if tables.iter().any(|(_, t)| t.truths != first.truths) {
            return Err(Error::Contract(
                "models were scored on different test sets".into(),
            ));
        }
    }
    for (name, table) in tables {
        for &tau in thresholds {
            let acc = table.accuracy(tau, &UnknownPolicy::AsWrong)?;
            report.push(name, section, ALL_CLASSES, tau, acc, table.len());
        }
    }
    Ok(())
}

/// Overall and per-class rows for one model at one threshold.
fn push_class_rows(
    report: &mut EvalReport,
    model: &str,
    section: &str,
    table: &ScoreTable,
    classes: &[String],
    threshold: f64,
    policy: &UnknownPolicy,
) -> Result<()> {
    report.push(
        model,
        section,
        ALL_CLASSES,
        threshold,
        table.accuracy(threshold, policy)?,
        table.len(),
    );
    for c in classes {
        let (acc, n) = table.class_accuracy(c, threshold, policy)?;
        report.push(model, section, c, threshold, acc, n);
    }
    Ok(())
}

/// Outputs of the standard 60/20/20 pipeline.
#[derive(Debug, Clone)]
pub struct MainRun {
    pub report: EvalReport,
    pub vocab: Vec<String>,
    pub split: SplitIndices,
    pub cnn: TrainedCnn,
    pub baseline: BaselineModel,
    pub cnn_table: ScoreTable,
    pub baseline_table: ScoreTable,
}

/// Splits, trains the CNN and the baseline on the same training jobs, and
/// sweeps thresholds on the shared test split.
pub fn run_main(jobs: &[JobRecord], cfg: &ExperimentConfig) -> Result<MainRun> {
    cfg.validate()?;
    let jobs = prepare_jobs(jobs.to_vec(), cfg.min_duration)?;
    let vocab = vocabulary(&jobs)?;
    let split = split_indices(&labels_of(&jobs)?, &cfg.split)?;
    let sigs = encode_jobs(&jobs, cfg.length, cfg.agg, cfg.kind, &cfg.channels, 1.0)?;
    let (train_sigs, val_sigs, test_sigs) = split.select(&sigs);
    let (train_jobs, _, test_jobs) = split.select(&jobs);

    let cnn = fit_cnn(&train_sigs, &val_sigs, &vocab, &cfg.training)?;
    let (cnn_table, cnn_predict) = cnn_scores(&cnn.model, &test_sigs)?;

    let start = Instant::now();
    let baseline = fit_baseline(&train_jobs, &vocab, &cfg.channels, &cfg.baseline)?;
    let baseline_train = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let baseline_table = baseline_scores(&baseline, &test_jobs)?;
    let baseline_predict = start.elapsed().as_secs_f64();

    let mut report = EvalReport::new("sweep", cfg.echo());
    run_threshold_sweep(
        &[(CNN, &cnn_table), (BASELINE, &baseline_table)],
        &cfg.thresholds,
        "test",
        &mut report,
    )?;
    report.timing.push(TimingRow {
        section: CNN.into(),
        train_seconds: cnn.train_seconds,
        predict_seconds: cnn_predict,
        payload_bytes: Some(signature_payload_bytes(cfg.length, cfg.channels.len())),
    });
    report.timing.push(TimingRow {
        section: BASELINE.into(),
        train_seconds: baseline_train,
        predict_seconds: baseline_predict,
        payload_bytes: None,
    });
    Ok(MainRun {
        report,
        vocab,
        split,
        cnn,
        baseline,
        cnn_table,
        baseline_table,
    })
}

/// k-fold cross-validation; per-class accuracy at `cfg.eval_threshold`,
/// averaged without weights over the folds.
pub fn run_per_application(
    jobs: &[JobRecord],
    cfg: &ExperimentConfig,
    folds: usize,
) -> Result<EvalReport> {
    cfg.validate()?;
    let jobs = prepare_jobs(jobs.to_vec(), cfg.min_duration)?;
    let vocab = vocabulary(&jobs)?;
    let partition = stratified_kfold(&labels_of(&jobs)?, folds, cfg.split.seed)?;
    let sigs = encode_jobs(&jobs, cfg.length, cfg.agg, cfg.kind, &cfg.channels, 1.0)?;
    let tau = cfg.eval_threshold;
    let policy = UnknownPolicy::AsWrong;

    // [model][class or overall] -> (sum of fold accuracies, samples)
    let mut sums = vec![vec![(0.0, 0usize); vocab.len() + 1]; 2];
    let mut timing = (0.0, 0.0);
    for i in 0..folds {
        let split = fold_split(&partition, i);
        let (train_sigs, val_sigs, test_sigs) = split.select(&sigs);
        let (train_jobs, _, test_jobs) = split.select(&jobs);
        let cnn = fit_cnn(&train_sigs, &val_sigs, &vocab, &cfg.training)?;
        let (cnn_table, predict) = cnn_scores(&cnn.model, &test_sigs)?;
        timing.0 += cnn.train_seconds;
        timing.1 += predict;
        let baseline = fit_baseline(&train_jobs, &vocab, &cfg.channels, &cfg.baseline)?;
        let baseline_table = baseline_scores(&baseline, &test_jobs)?;
        for (m, table) in [&cnn_table, &baseline_table].into_iter().enumerate() {
            let overall = table.accuracy(tau, &policy)?;
            sums[m][0].0 += overall;
            sums[m][0].1 += table.len();
            for (c, class) in vocab.iter().enumerate() {
                let (acc, n) = table.class_accuracy(class, tau, &policy)?;
                sums[m][c + 1].0 += acc;
                sums[m][c + 1].1 += n;
            }
        }
        log::info!("fold {}/{folds} done", i + 1);
    }

    let mut echo = cfg.echo();
    echo["folds"] = folds.into();
    let mut report = EvalReport::new("per_app", echo);
    for (m, name) in [CNN, BASELINE].into_iter().enumerate() {
        let section = format!("{folds}fold");
        let classes = std::iter::once(ALL_CLASSES).chain(vocab.iter().map(String::as_str));
        for (class, (sum, n)) in classes.zip(&sums[m]) {
            report.push(name, &section, class, tau, sum / folds as f64, *n);
        }
    }
    report.timing.push(TimingRow {
        section: CNN.into(),
        train_seconds: timing.0,
        predict_seconds: timing.1,
        payload_bytes: Some(signature_payload_bytes(cfg.length, cfg.channels.len())),
    });
    Ok(report)
}

/// Scores of the models trained without the held-out class.
#[derive(Debug, Clone)]
pub struct NovelRun {
    pub report: EvalReport,
    pub held_out: String,
    pub cnn: TrainedCnn,
    pub cnn_table: ScoreTable,
    pub baseline_table: ScoreTable,
}

/// Removes `held_out` from training and validation, keeps the test split
/// untouched, and scores with `unknown` correct for the held-out class.
pub fn run_novel_detection(
    jobs: &[JobRecord],
    held_out: &str,
    cfg: &ExperimentConfig,
) -> Result<NovelRun> {
    cfg.validate()?;
    let jobs = prepare_jobs(jobs.to_vec(), cfg.min_duration)?;
    let full_vocab = vocabulary(&jobs)?;
    if !full_vocab.iter().any(|c| c == held_out) {
        return Err(Error::UnknownClass(held_out.to_string()));
    }
    let vocab: Vec<String> = full_vocab
        .iter()
        .filter(|c| *c != held_out)
        .cloned()
        .collect();
    if vocab.len() < 2 {
        return Err(Error::Config(
            "holding out a class must leave at least 2 classes to train on".into(),
        ));
    }
    let split = split_indices(&labels_of(&jobs)?, &cfg.split)?;
    let sigs = encode_jobs(&jobs, cfg.length, cfg.agg, cfg.kind, &cfg.channels, 1.0)?;
    let known = |s: &JobSignature| s.label.as_deref() != Some(held_out);
    let (train_sigs, val_sigs, test_sigs) = split.select(&sigs);
    let train_sigs: Vec<_> = train_sigs.into_iter().filter(known).collect();
    let val_sigs: Vec<_> = val_sigs.into_iter().filter(known).collect();
    let (train_jobs, _, test_jobs) = split.select(&jobs);
    let train_jobs: Vec<_> = train_jobs
        .into_iter()
        .filter(|j| j.label.as_deref() != Some(held_out))
        .collect();

    let cnn = fit_cnn(&train_sigs, &val_sigs, &vocab, &cfg.training)?;
    let (cnn_table, predict) = cnn_scores(&cnn.model, &test_sigs)?;
    let baseline = fit_baseline(&train_jobs, &vocab, &cfg.channels, &cfg.baseline)?;
    let baseline_table = baseline_scores(&baseline, &test_jobs)?;

    let mut echo = cfg.echo();
    echo["held_out"] = held_out.into();
    let mut report = EvalReport::new("novel", echo);
    let policy = UnknownPolicy::AsNovelCorrect(held_out.to_string());
    for (name, table) in [(CNN, &cnn_table), (BASELINE, &baseline_table)] {
        for &tau in &cfg.thresholds {
            push_class_rows(&mut report, name, "test", table, &full_vocab, tau, &policy)?;
        }
    }
    report.timing.push(TimingRow {
        section: CNN.into(),
        train_seconds: cnn.train_seconds,
        predict_seconds: predict,
        payload_bytes: Some(signature_payload_bytes(cfg.length, cfg.channels.len())),
    });
    Ok(NovelRun {
        report,
        held_out: held_out.to_string(),
        cnn,
        cnn_table,
        baseline_table,
    })
}

/// The three single channels followed by all three together.
pub fn default_channel_sets() -> Vec<Vec<MetricKind>> {
    MetricKind::ALL
        .iter()
        .map(|&c| vec![c])
        .chain(std::iter::once(MetricKind::ALL.to_vec()))
        .collect()
}

/// One fresh CNN per channel set on a shared split; per-class accuracy at
/// `cfg.eval_threshold`.
pub fn run_channel_ablation(
    jobs: &[JobRecord],
    channel_sets: &[Vec<MetricKind>],
    cfg: &ExperimentConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    if channel_sets.is_empty() || channel_sets.iter().any(Vec::is_empty) {
        return Err(Error::Config("every channel set must be non-empty".into()));
    }
    let jobs = prepare_jobs(jobs.to_vec(), cfg.min_duration)?;
    let vocab = vocabulary(&jobs)?;
    let split = split_indices(&labels_of(&jobs)?, &cfg.split)?;
    let mut echo = cfg.echo();
    echo["channel_sets"] = channel_sets
        .iter()
        .map(|s| channel_set_name(s))
        .collect::<Vec<_>>()
        .into();
    let mut report = EvalReport::new("ablation", echo);
    for set in channel_sets {
        let section = channel_set_name(set);
        let sigs = encode_jobs(&jobs, cfg.length, cfg.agg, cfg.kind, set, 1.0)?;
        let (train_sigs, val_sigs, test_sigs) = split.select(&sigs);
        let cnn = fit_cnn(&train_sigs, &val_sigs, &vocab, &cfg.training)?;
        let (table, predict) = cnn_scores(&cnn.model, &test_sigs)?;
        push_class_rows(
            &mut report,
            CNN,
            &section,
            &table,
            &vocab,
            cfg.eval_threshold,
            &UnknownPolicy::AsWrong,
        )?;
        report.timing.push(TimingRow {
            section,
            train_seconds: cnn.train_seconds,
            predict_seconds: predict,
            payload_bytes: Some(signature_payload_bytes(cfg.length, set.len())),
        });
    }
    Ok(report)
}

pub const DEFAULT_FRACTIONS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

/// Trains on full signatures and evaluates the test split encoded from the
/// leading fraction of each job.
pub fn run_partial_signatures(
    jobs: &[JobRecord],
    fractions: &[f64],
    cfg: &ExperimentConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    if fractions.is_empty() || fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return Err(Error::Config("fractions must lie in (0, 1]".into()));
    }
    let jobs = prepare_jobs(jobs.to_vec(), cfg.min_duration)?;
    let vocab = vocabulary(&jobs)?;
    let split = split_indices(&labels_of(&jobs)?, &cfg.split)?;
    let sigs = encode_jobs(&jobs, cfg.length, cfg.agg, cfg.kind, &cfg.channels, 1.0)?;
    let (train_sigs, val_sigs, _) = split.select(&sigs);
    let (_, _, test_jobs) = split.select(&jobs);
    let cnn = fit_cnn(&train_sigs, &val_sigs, &vocab, &cfg.training)?;

    let mut echo = cfg.echo();
    echo["fractions"] = fractions.to_vec().into();
    let mut report = EvalReport::new("partial", echo);
    for &f in fractions {
        let section = format!("fraction={f}");
        let test_sigs = encode_jobs(&test_jobs, cfg.length, cfg.agg, cfg.kind, &cfg.channels, f)?;
        let (table, predict) = cnn_scores(&cnn.model, &test_sigs)?;
        push_class_rows(
            &mut report,
            CNN,
            &section,
            &table,
            &vocab,
            cfg.eval_threshold,
            &UnknownPolicy::AsWrong,
        )?;
        report.timing.push(TimingRow {
            section,
            train_seconds: 0.0,
            predict_seconds: predict,
            payload_bytes: None,
        });
    }
    report.timing.insert(
        0,
        TimingRow {
            section: "train".into(),
            train_seconds: cnn.train_seconds,
            predict_seconds: 0.0,
            payload_bytes: Some(signature_payload_bytes(cfg.length, cfg.channels.len())),
        },
    );
    Ok(report)
}

pub const DEFAULT_LENGTHS: [usize; 3] = [32, 64, 128];

/// Re-encodes at each length, trains with identical parameters and split,
/// and records the threshold sweep with training time.
pub fn run_resolution_sweep(
    jobs: &[JobRecord],
    lengths: &[usize],
    cfg: &ExperimentConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    if lengths.is_empty() || lengths.iter().any(|&l| l < 8) {
        return Err(Error::Config("lengths must each be at least 8".into()));
    }
    let jobs = prepare_jobs(jobs.to_vec(), cfg.min_duration)?;
    let vocab = vocabulary(&jobs)?;
    let split = split_indices(&labels_of(&jobs)?, &cfg.split)?;
    let mut echo = cfg.echo();
    echo["lengths"] = lengths.to_vec().into();
    let mut report = EvalReport::new("resolution", echo);
    for &l in lengths {
        let section = format!("l={l}");
        let sigs = encode_jobs(&jobs, l, cfg.agg, cfg.kind, &cfg.channels, 1.0)?;
        let (train_sigs, val_sigs, test_sigs) = split.select(&sigs);
        let cnn = fit_cnn(&train_sigs, &val_sigs, &vocab, &cfg.training)?;
        let (table, predict) = cnn_scores(&cnn.model, &test_sigs)?;
        run_threshold_sweep(&[(CNN, &table)], &cfg.thresholds, &section, &mut report)?;
        report.timing.push(TimingRow {
            section,
            train_seconds: cnn.train_seconds,
            predict_seconds: predict,
            payload_bytes: Some(signature_payload_bytes(l, cfg.channels.len())),
        });
    }
    Ok(report)
}
