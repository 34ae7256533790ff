use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use arcode::gaf::GafKind;
use arcode::harness::{ExperimentConfig, TrainingParams, DEFAULT_FRACTIONS, DEFAULT_LENGTHS};
use arcode::resample::AggFn;
use arcode::synth::ProfileSet;
use arcode::MetricKind;

#[derive(Debug, Parser)]
#[command(
    name = "arcode",
    version,
    about = "Job signatures from HPC monitoring traces"
)]
#[command(args_override_self = true)]
pub struct Cli {
    /// Threads for parallel ingest, encoding and synthesis.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(usize))]
    pub workers: Option<usize>,

    /// File of `key = value` lines supplying defaults for long options of
    /// the chosen subcommand. Options given on the command line win.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labelled synthetic dataset in the ingest CSV format.
    Synth(SynthArgs),
    /// Encode trace CSVs into signature files.
    Encode(EncodeArgs),
    /// Train a CNN on signatures, or the statistical baseline on traces.
    Train(TrainArgs),
    /// Label jobs with a trained model.
    Predict(PredictArgs),
    /// Run an evaluation experiment and write its reports.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SynthArgs {
    /// Profile set: default, confusable or default6.
    #[arg(long, default_value = "default")]
    pub classes: ProfileSet,
    /// Jobs per class.
    #[arg(long, default_value_t = 50)]
    pub jobs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Nodes per job.
    #[arg(long, default_value_t = 1)]
    pub nodes: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EncodingArgs {
    /// Resampling length and signature side.
    #[arg(long = "l", default_value_t = 128)]
    pub length: usize,
    /// Aggregation for downsampling: mean, max, min or median.
    #[arg(long, default_value = "mean")]
    pub agg: AggFn,
    /// Field kind: gasf or gadf.
    #[arg(long, default_value = "gasf")]
    pub kind: GafKind,
    /// Use sin(φi−φj) for the difference field instead of cos(φi−φj).
    #[arg(long)]
    pub gadf_sin: bool,
    /// Comma-separated channels: power, ipc, mem_used.
    #[arg(long, value_delimiter = ',', default_value = "power,ipc,mem_used")]
    pub channels: Vec<MetricKind>,
    /// Jobs shorter than this many seconds are skipped.
    #[arg(long, default_value_t = 60.0)]
    pub min_duration: f64,
}

impl EncodingArgs {
    pub fn kind(&self) -> GafKind {
        match (self.kind, self.gadf_sin) {
            (GafKind::Gadf, true) => GafKind::GadfSin,
            (k, _) => k,
        }
    }
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct EncodeArgs {
    /// Directory of trace CSVs with an optional label manifest.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub encoding: EncodingArgs,
    /// Encode only this leading fraction of each job.
    #[arg(long, default_value_t = 1.0)]
    pub fraction: f64,
    /// Also write a PNG per signature (1 or 3 channels).
    #[arg(long)]
    pub png: bool,
}

#[derive(Debug, Args)]
pub struct TrainingArgs {
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 128)]
    pub dense_units: usize,
    /// Seed for initialization, shuffling, dropout and splits.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Gradient-descent iterations of the baseline.
    #[arg(long, default_value_t = 500)]
    pub baseline_iterations: usize,
}

impl TrainingArgs {
    pub fn params(&self) -> TrainingParams {
        TrainingParams {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            momentum: self.momentum,
            dense_units: self.dense_units,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    /// Signature directory (CNN).
    #[arg(long, required_unless_present = "baseline")]
    pub sigs: Option<PathBuf>,
    /// Train the statistical baseline on trace CSVs instead.
    #[arg(long, requires = "data")]
    pub baseline: bool,
    /// Trace directory (baseline).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Channels the baseline extracts features from.
    #[arg(long, value_delimiter = ',', default_value = "power,ipc,mem_used")]
    pub channels: Vec<MetricKind>,
    /// Fraction of each class held out for validation.
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Model file; the CNN history goes next to it as `.history.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct PredictArgs {
    /// CNN or baseline model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Signature directory (CNN models).
    #[arg(long)]
    pub sigs: Option<PathBuf>,
    /// Trace directory (baseline models).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Minimum top score for a known-class label.
    #[arg(long, default_value_t = 0.0)]
    pub threshold: f64,
    /// Output CSV with `job_id,label,max_prob`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Directory of labelled trace CSVs.
    #[arg(long)]
    pub data: PathBuf,
    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Suffix of the report file names.
    #[arg(long, default_value = "run")]
    pub tag: String,
    #[command(flatten)]
    pub encoding: EncodingArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Threshold grid, `start:stop:step` or a comma-separated list.
    #[arg(long, default_value = "0:1:0.1", value_parser = parse_thresholds)]
    pub thresholds: Thresholds,
    /// Threshold for per-class experiments.
    #[arg(long, default_value_t = 0.8)]
    pub eval_threshold: f64,
}

impl ExperimentArgs {
    pub fn config(&self) -> ExperimentConfig {
        let defaults = ExperimentConfig::default();
        let mut cfg = ExperimentConfig {
            length: self.encoding.length,
            agg: self.encoding.agg,
            kind: self.encoding.kind(),
            channels: self.encoding.channels.clone(),
            training: self.training.params(),
            thresholds: self.thresholds.0.clone(),
            eval_threshold: self.eval_threshold,
            min_duration: self.encoding.min_duration,
            ..defaults
        };
        cfg.baseline.iterations = self.training.baseline_iterations;
        cfg.baseline.seed = self.training.seed;
        cfg.split.seed = self.training.seed;
        cfg
    }
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// CNN and baseline accuracy over a threshold grid.
    Sweep(SweepArgs),
    /// Per-class accuracy under stratified k-fold cross-validation.
    PerApp(PerAppArgs),
    /// Hold one class out of training and measure how often it is `unknown`.
    Novel(NovelArgs),
    /// Retrain on single channels and on all channels.
    Ablation(SweepArgs),
    /// Evaluate signatures built from leading fractions of each job.
    Partial(PartialArgs),
    /// Retrain at several resampling lengths and record training time.
    Resolution(ResolutionArgs),
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: ExperimentArgs,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct PerAppArgs {
    #[command(flatten)]
    pub common: ExperimentArgs,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct NovelArgs {
    #[command(flatten)]
    pub common: ExperimentArgs,
    /// Class withheld from training.
    #[arg(long)]
    pub hold_out: String,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct PartialArgs {
    #[command(flatten)]
    pub common: ExperimentArgs,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_FRACTIONS)]
    pub fractions: Vec<f64>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct ResolutionArgs {
    #[command(flatten)]
    pub common: ExperimentArgs,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LENGTHS)]
    pub lengths: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Thresholds(pub Vec<f64>);

/// `start:stop:step` (inclusive, snapped to 1e-9) or `a,b,c`.
pub fn parse_thresholds(s: &str) -> Result<Thresholds, String> {
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| format!("{t:?} is not a number"))
    };
    let values = if let [start, stop, step] = s.split(':').collect::<Vec<_>>()[..] {
        let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
        if step.is_nan() || step <= 0.0 || stop < start {
            return Err("range needs start <= stop and a positive step".into());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
            .collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    arcode::harness::validate_thresholds(&values).map_err(|e| e.to_string())?;
    Ok(Thresholds(values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_ranges() {
        let t = parse_thresholds("0:1:0.1").unwrap().0;
        assert_eq!(t.len(), 11);
        assert_eq!(t[3], 0.3);
        assert_eq!(t[10], 1.0);
        assert_eq!(parse_thresholds("0.5,0.9").unwrap().0, [0.5, 0.9]);
        assert_eq!(parse_thresholds("0:0.5:0.25").unwrap().0, [0.0, 0.25, 0.5]);
        assert!(parse_thresholds("1:0:0.1").is_err());
        assert!(parse_thresholds("0:1:0").is_err());
        assert!(parse_thresholds("0.2,x").is_err());
        assert!(parse_thresholds("0,1.5").is_err());
    }

    #[test]
    fn gadf_sin_switch() {
        let cli = Cli::try_parse_from([
            "arcode",
            "encode",
            "--in",
            "a",
            "--out",
            "b",
            "--kind",
            "gadf",
            "--gadf-sin",
        ])
        .unwrap();
        let Command::Encode(e) = cli.command else {
            panic!("expected encode")
        };
        assert_eq!(e.encoding.kind(), GafKind::GadfSin);
    }

    #[test]
    fn experiment_config_carries_seed() {
        let cli = Cli::try_parse_from([
            "arcode", "eval", "sweep", "--data", "d", "--out", "o", "--seed", "9", "--l", "32",
        ])
        .unwrap();
        let Command::Eval(EvalCommand::Sweep(s)) = cli.command else {
            panic!("expected sweep")
        };
        let cfg = s.common.config();
        assert_eq!(cfg.length, 32);
        assert_eq!(
            (cfg.training.seed, cfg.split.seed, cfg.baseline.seed),
            (9, 9, 9)
        );
        assert_eq!(cfg.thresholds.len(), 11);
    }
}
