use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn arcode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arcode"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = arcode(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files_with_ext(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    v.sort();
    v
}

fn synth(dir: &Path, jobs: &str, seed: &str) {
    ok(&["synth", "--jobs", jobs, "--seed", seed, "--out", s(dir)]);
}

#[test]
fn synth_without_out_is_a_usage_error() {
    let out = arcode(&["synth", "--jobs", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_subcommand_and_bad_values_are_usage_errors() {
    assert_eq!(arcode(&["frobnicate"]).status.code(), Some(2));
    let out = arcode(&["encode", "--in", "a", "--out", "b", "--kind", "mtf"]);
    assert_eq!(out.status.code(), Some(2));
    let out = arcode(&[
        "eval",
        "sweep",
        "--data",
        "a",
        "--out",
        "b",
        "--thresholds",
        "1:0:1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_exits_zero() {
    let out = arcode(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["synth", "encode", "train", "predict", "eval"] {
        assert!(text.contains(cmd));
    }
}

#[test]
fn synth_writes_six_classes_and_is_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for d in [&a, &b] {
        ok(&[
            "synth",
            "--classes",
            "default6",
            "--jobs",
            "2",
            "--seed",
            "7",
            "--out",
            s(d),
        ]);
    }
    let csvs = files_with_ext(&a, "csv");
    assert_eq!(csvs.len(), 12);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.as_array().unwrap().len(), 12);
    for f in csvs.iter().chain([&a.join("manifest.json")]) {
        let other = b.join(f.file_name().unwrap());
        assert_eq!(std::fs::read(f).unwrap(), std::fs::read(other).unwrap());
    }
}

#[test]
fn encode_variants() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "2", "3");

    let full = tmp.path().join("full");
    ok(&[
        "encode",
        "--l",
        "16",
        "--in",
        s(&data),
        "--out",
        s(&full),
        "--png",
    ]);
    let sigs = files_with_ext(&full, "arcd");
    assert_eq!(sigs.len(), 8);
    assert_eq!(files_with_ext(&full, "png").len(), 8);
    let bytes = std::fs::read(&sigs[0]).unwrap();
    assert_eq!(&bytes[..4], b"ARCD");
    assert_eq!(bytes.len(), 16 + 16 * 16 * 3 * 4);

    let part = tmp.path().join("part");
    ok(&[
        "encode",
        "--l",
        "8",
        "--fraction",
        "0.25",
        "--in",
        s(&data),
        "--out",
        s(&part),
    ]);
    let sidecar: serde_json::Value =
        serde_json::from_slice(&std::fs::read(files_with_ext(&part, "json")[0].clone()).unwrap())
            .unwrap();
    assert_eq!(sidecar["coverage_fraction"], 0.25);

    let power = tmp.path().join("power");
    ok(&[
        "encode",
        "--l",
        "8",
        "--channels",
        "power",
        "--in",
        s(&data),
        "--out",
        s(&power),
    ]);
    let bytes = std::fs::read(&files_with_ext(&power, "arcd")[0]).unwrap();
    assert_eq!(u16::from_le_bytes([bytes[8], bytes[9]]), 1);
    assert_eq!(bytes.len(), 16 + 8 * 8 * 4);

    let out = arcode(&[
        "encode",
        "--in",
        s(&tmp.path().join("nope")),
        "--out",
        s(&power),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_and_predict_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let sigs = tmp.path().join("sigs");
    synth(&data, "6", "11");
    ok(&["encode", "--l", "8", "--in", s(&data), "--out", s(&sigs)]);

    let model = tmp.path().join("model.arcm");
    let train = [
        "train",
        "--sigs",
        s(&sigs),
        "--epochs",
        "2",
        "--dense-units",
        "8",
        "--seed",
        "1",
        "--out",
        s(&model),
    ];
    ok(&train);
    assert!(model.exists());
    let history = std::fs::read_to_string(tmp.path().join("model.history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);

    let first = std::fs::read(&model).unwrap();
    ok(&train);
    assert_eq!(std::fs::read(&model).unwrap(), first);

    let preds = tmp.path().join("preds.csv");
    for threshold in ["0.0", "0.95"] {
        ok(&[
            "predict",
            "--model",
            s(&model),
            "--sigs",
            s(&sigs),
            "--threshold",
            threshold,
            "--out",
            s(&preds),
        ]);
        let text = std::fs::read_to_string(&preds).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("job_id,label,max_prob"));
        let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
        assert_eq!(rows.len(), 24);
        for r in &rows {
            let p: f64 = r[2].parse().unwrap();
            let t: f64 = threshold.parse().unwrap();
            assert_eq!(r[1] == "unknown", p < t, "{r:?}");
        }
    }

    let out = arcode(&[
        "predict",
        "--model",
        s(&tmp.path().join("missing.arcm")),
        "--sigs",
        s(&sigs),
        "--out",
        s(&preds),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn baseline_train_and_predict() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "5", "5");
    let model = tmp.path().join("base.arbm");
    ok(&[
        "train",
        "--baseline",
        "--data",
        s(&data),
        "--out",
        s(&model),
    ]);
    let preds = tmp.path().join("preds.csv");
    ok(&[
        "predict",
        "--model",
        s(&model),
        "--data",
        s(&data),
        "--out",
        s(&preds),
    ]);
    let text = std::fs::read_to_string(&preds).unwrap();
    assert_eq!(text.lines().count(), 21);
    let correct = text
        .lines()
        .skip(1)
        .filter(|l| {
            let mut f = l.split(',');
            let id = f.next().unwrap();
            id.starts_with(f.next().unwrap())
        })
        .count();
    assert!(
        correct >= 18,
        "{correct} of 20 training jobs labelled correctly"
    );
}

#[test]
fn missing_label_names_the_job() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let sigs = tmp.path().join("sigs");
    synth(&data, "5", "2");
    let path = data.join("manifest.json");
    let mut manifest: Vec<serde_json::Value> =
        serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    let dropped = manifest.remove(3)["job_id"].as_str().unwrap().to_string();
    std::fs::write(&path, serde_json::to_vec(&manifest).unwrap()).unwrap();

    ok(&["encode", "--l", "8", "--in", s(&data), "--out", s(&sigs)]);
    let out = arcode(&[
        "train",
        "--sigs",
        s(&sigs),
        "--epochs",
        "1",
        "--out",
        "m.arcm",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(&dropped));
}

#[test]
fn eval_reports_are_deterministic_and_config_files_apply() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "5", "4");
    let conf = tmp.path().join("quick.conf");
    std::fs::write(
        &conf,
        "l = 8\nepochs = 1\ndense_units = 8\nbaseline-iterations = 20\n",
    )
    .unwrap();

    let mut reports = Vec::new();
    for run in ["r1", "r2"] {
        let out = tmp.path().join(run);
        ok(&[
            "--config",
            s(&conf),
            "eval",
            "sweep",
            "--data",
            s(&data),
            "--out",
            s(&out),
            "--tag",
            "t",
            "--seed",
            "3",
        ]);
        reports.push(std::fs::read(out.join("report_sweep_t.csv")).unwrap());
        assert!(out.join("report_sweep_t_timing.csv").exists());
        let json: serde_json::Value =
            serde_json::from_slice(&std::fs::read(out.join("report_sweep_t.json")).unwrap())
                .unwrap();
        assert_eq!(json["config"]["length"], 8);
        assert_eq!(json["config"]["training"]["epochs"], 1);
    }
    assert_eq!(reports[0], reports[1]);
    // 2 models × 11 thresholds plus the header.
    assert_eq!(String::from_utf8_lossy(&reports[0]).lines().count(), 23);

    let out = tmp.path().join("more");
    let common = ["--data", s(&data), "--out", s(&out), "--tag", "t"];
    let run = |extra: &[&str]| {
        let mut args: Vec<&str> = vec!["--config", s(&conf), "eval"];
        args.extend_from_slice(extra);
        args.extend_from_slice(&common);
        ok(&args);
    };
    run(&["novel", "--hold-out", "sawtooth_power"]);
    run(&["resolution", "--lengths", "8,16"]);
    run(&["partial", "--fractions", "0.5,1"]);
    for name in ["novel", "resolution", "partial"] {
        assert!(out.join(format!("report_{name}_t.csv")).exists());
    }
    let timing = std::fs::read_to_string(out.join("report_resolution_t_timing.csv")).unwrap();
    assert!(timing.contains("l=8") && timing.contains("l=16"));

    let mut args: Vec<&str> = vec!["--config", s(&conf), "eval", "novel", "--hold-out", "nope"];
    args.extend_from_slice(&common);
    assert_eq!(arcode(&args).status.code(), Some(1));
}
