use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use arcode::baseline::{
    extract_features, load_baseline, predict_baseline, save_baseline, BaselineConfig,
    BASELINE_MAGIC,
};
use arcode::cnn::{history_csv, load_model, save_model, MODEL_MAGIC};
use arcode::fsutil::write_atomic;
use arcode::gaf::{export_png, partial_signature, read_signature_dir, write_signature};
use arcode::harness::{
    default_channel_sets, fit_baseline, fit_cnn, labels_of, prepare_jobs, run_channel_ablation,
    run_main, run_novel_detection, run_partial_signatures, run_per_application,
    run_resolution_sweep, split_indices, vocabulary, EvalReport, SplitSpec,
};
use arcode::ingest::{filter_jobs, load_dataset, JobRecord};
use arcode::resample::ResampleSpec;
use arcode::synth::{generate_dataset, write_dataset, SynthDatasetSpec};
use arcode::PredictionResult;

use crate::args::{
    Command, EncodeArgs, EvalCommand, ExperimentArgs, PredictArgs, SynthArgs, TrainArgs,
};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => synth(&a),
        Command::Encode(a) => encode(&a),
        Command::Train(a) => train(&a),
        Command::Predict(a) => predict(&a),
        Command::Eval(e) => eval(e),
    }
}

fn require_dir(path: &Path, what: &str) -> Result<()> {
    if !path.is_dir() {
        bail!("{what} {} is not a directory", path.display());
    }
    Ok(())
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        bail!("{what} {} does not exist", path.display());
    }
    Ok(())
}

fn load_jobs(dir: &Path) -> Result<Vec<JobRecord>> {
    require_dir(dir, "data directory")?;
    let loaded = load_dataset(dir).with_context(|| format!("loading {}", dir.display()))?;
    if loaded.zero_cycle_samples > 0 {
        log::warn!(
            "{} samples had zero cycles; their IPC was set to 0",
            loaded.zero_cycle_samples
        );
    }
    log::info!("loaded {} jobs from {}", loaded.jobs.len(), dir.display());
    Ok(loaded.jobs)
}

fn synth(a: &SynthArgs) -> Result<()> {
    if a.out.is_file() {
        bail!("output {} is a file", a.out.display());
    }
    let spec = SynthDatasetSpec::new(a.classes.profiles(), a.jobs, a.seed).with_nodes(a.nodes);
    let data = generate_dataset(&spec)?;
    write_dataset(&data, &a.out)?;
    log::info!("wrote {} jobs to {}", data.jobs.len(), a.out.display());
    Ok(())
}

fn encode(a: &EncodeArgs) -> Result<()> {
    if !(a.fraction > 0.0 && a.fraction <= 1.0) {
        bail!("--fraction must lie in (0, 1]");
    }
    let spec = ResampleSpec::new(a.encoding.length, a.encoding.agg)?;
    let jobs = filter_jobs(load_jobs(&a.input)?, a.encoding.min_duration);
    std::fs::create_dir_all(&a.out)?;
    let kind = a.encoding.kind();
    jobs.par_iter().try_for_each(|job| -> Result<()> {
        let sig = partial_signature(job, a.fraction, &spec, kind, &a.encoding.channels)
            .with_context(|| format!("encoding job {}", job.job_id))?;
        write_signature(&sig, &a.out)?;
        if a.png {
            export_png(&sig, &a.out.join(format!("{}.png", sig.job_id)))?;
        }
        Ok(())
    })?;
    log::info!("encoded {} jobs into {}", jobs.len(), a.out.display());
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    if a.baseline {
        return train_baseline(a);
    }
    let dir = a.sigs.as_deref().expect("clap requires --sigs");
    require_dir(dir, "signature directory")?;
    if !(a.val_fraction > 0.0 && a.val_fraction < 1.0) {
        bail!("--val-fraction must lie in (0, 1)");
    }
    let sigs = read_signature_dir(dir)?;
    if sigs.is_empty() {
        bail!("no signatures in {}", dir.display());
    }
    let vocab = vocabulary(&sigs)?;
    let split = split_indices(
        &labels_of(&sigs)?,
        &SplitSpec {
            train_frac: 1.0 - a.val_fraction,
            val_frac: a.val_fraction,
            test_frac: 0.0,
            stratified: true,
            seed: a.training.seed,
        },
    )?;
    let (train_sigs, val_sigs, _) = split.select(&sigs);
    log::info!(
        "training on {} signatures, validating on {}, classes {vocab:?}",
        train_sigs.len(),
        val_sigs.len()
    );
    let trained = fit_cnn(&train_sigs, &val_sigs, &vocab, &a.training.params())?;
    save_model(&trained.model, &a.out)?;
    let history = a.out.with_extension("history.csv");
    write_atomic(&history, history_csv(&trained.history).as_bytes())?;
    if let Some(last) = trained.history.last() {
        log::info!(
            "final validation accuracy {:.4}, {:.1} s",
            last.val_acc,
            trained.train_seconds
        );
    }
    log::info!("wrote {} and {}", a.out.display(), history.display());
    Ok(())
}

fn train_baseline(a: &TrainArgs) -> Result<()> {
    let dir = a.data.as_deref().expect("clap requires --data");
    let jobs = prepare_jobs(load_jobs(dir)?, arcode::ingest::DEFAULT_MIN_DURATION)?;
    let vocab = vocabulary(&jobs)?;
    let config = BaselineConfig {
        iterations: a.training.baseline_iterations,
        seed: a.training.seed,
        ..BaselineConfig::default()
    };
    let model = fit_baseline(&jobs, &vocab, &a.channels, &config)?;
    save_baseline(&model, &a.out)?;
    log::info!(
        "wrote baseline over {} jobs to {}",
        jobs.len(),
        a.out.display()
    );
    Ok(())
}

fn predict(a: &PredictArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.threshold) {
        bail!("--threshold must lie in [0, 1]");
    }
    require_file(&a.model, "model")?;
    let mut magic = [0u8; 4];
    {
        use std::io::Read;
        std::fs::File::open(&a.model)?
            .read_exact(&mut magic)
            .with_context(|| format!("reading {}", a.model.display()))?;
    }
    let rows: Vec<(String, PredictionResult)> = if magic == MODEL_MAGIC {
        let Some(dir) = &a.sigs else {
            bail!("a CNN model needs --sigs");
        };
        require_dir(dir, "signature directory")?;
        let model = load_model(&a.model)?;
        let sigs = read_signature_dir(dir)?;
        let preds = model.predict_all(&sigs, a.threshold)?;
        sigs.into_iter().map(|s| s.job_id).zip(preds).collect()
    } else if magic == BASELINE_MAGIC {
        let Some(dir) = &a.data else {
            bail!("a baseline model needs --data");
        };
        let model = load_baseline(&a.model)?;
        load_jobs(dir)?
            .par_iter()
            .map(|job| {
                let f = extract_features(job, &model.channels)?;
                Ok((
                    job.job_id.clone(),
                    predict_baseline(&model, &f, a.threshold)?,
                ))
            })
            .collect::<Result<_>>()?
    } else {
        bail!("{} is not a model file", a.model.display());
    };

    let mut csv = String::from("job_id,label,max_prob\n");
    for (id, p) in &rows {
        let _ = writeln!(csv, "{id},{},{:.6}", p.label_str(), p.max_score());
    }
    write_atomic(&a.out, csv.as_bytes())?;
    let unknown = rows.iter().filter(|(_, p)| p.label.is_none()).count();
    log::info!(
        "labelled {} jobs ({unknown} unknown) into {}",
        rows.len(),
        a.out.display()
    );
    Ok(())
}

fn eval(cmd: EvalCommand) -> Result<()> {
    let (common, report) = match &cmd {
        EvalCommand::Sweep(s) => {
            let jobs = load_jobs(&s.common.data)?;
            (&s.common, run_main(&jobs, &s.common.config())?.report)
        }
        EvalCommand::PerApp(p) => {
            let jobs = load_jobs(&p.common.data)?;
            (
                &p.common,
                run_per_application(&jobs, &p.common.config(), p.folds)?,
            )
        }
        EvalCommand::Novel(n) => {
            let jobs = load_jobs(&n.common.data)?;
            let run = run_novel_detection(&jobs, &n.hold_out, &n.common.config())?;
            (&n.common, run.report)
        }
        EvalCommand::Ablation(s) => {
            let jobs = load_jobs(&s.common.data)?;
            let sets = default_channel_sets();
            (
                &s.common,
                run_channel_ablation(&jobs, &sets, &s.common.config())?,
            )
        }
        EvalCommand::Partial(p) => {
            let jobs = load_jobs(&p.common.data)?;
            (
                &p.common,
                run_partial_signatures(&jobs, &p.fractions, &p.common.config())?,
            )
        }
        EvalCommand::Resolution(r) => {
            let jobs = load_jobs(&r.common.data)?;
            (
                &r.common,
                run_resolution_sweep(&jobs, &r.lengths, &r.common.config())?,
            )
        }
    };
    write_report(common, &report)
}

fn write_report(common: &ExperimentArgs, report: &EvalReport) -> Result<()> {
    let paths = report.write(&common.out, &common.tag)?;
    log::info!(
        "wrote {}, {} and {}",
        paths.csv.display(),
        paths.timing_csv.display(),
        paths.json.display()
    );
    Ok(())
}
