//! Experiment reports.
//!
//! Each report is written as three files sharing the stem
//! `report_<experiment>_<tag>`:
//!
//! - `.csv` with `model,section,class,threshold,accuracy,samples`. `class`
//!   is `all` for overall rows. Contains no timing, so reruns with the same
//!   seeds reproduce it byte for byte.
//! - `_timing.csv` with `section,train_seconds,predict_seconds,payload_bytes`.
//! - `.json` holding the configuration echo, rows and timings together.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::fsutil::write_atomic;
use crate::Result;

/// `class` value of overall rows.
pub const ALL_CLASSES: &str = "all";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub model: String,
    pub section: String,
    pub class: String,
    pub threshold: f64,
    pub accuracy: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub section: String,
    pub train_seconds: f64,
    pub predict_seconds: f64,
    pub payload_bytes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub experiment: String,
    pub config: serde_json::Value,
    pub rows: Vec<ReportRow>,
    pub timing: Vec<TimingRow>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportPaths {
    pub csv: PathBuf,
    pub timing_csv: PathBuf,
    pub json: PathBuf,
}

impl EvalReport {
    pub fn new(experiment: &str, config: serde_json::Value) -> Self {
        EvalReport {
            experiment: experiment.to_string(),
            config,
            rows: Vec::new(),
            timing: Vec::new(),
        }
    }

    pub fn push(
        &mut self,
        model: &str,
        section: &str,
        class: &str,
        threshold: f64,
        accuracy: f64,
        samples: usize,
    ) {
        self.rows.push(ReportRow {
            model: model.to_string(),
            section: section.to_string(),
            class: class.to_string(),
            threshold,
            accuracy,
            samples,
        });
    }

    /// Rows matching the given fields, in insertion order.
    pub fn select<'a>(
        &'a self,
        model: &'a str,
        section: &'a str,
        class: &'a str,
    ) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.model == model && r.section == section && r.class == class)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("model,section,class,threshold,accuracy,samples\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:.2},{:.6},{}",
                r.model, r.section, r.class, r.threshold, r.accuracy, r.samples
            );
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("section,train_seconds,predict_seconds,payload_bytes\n");
        for t in &self.timing {
            let bytes = t.payload_bytes.map(|b| b.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{:.3},{:.3},{bytes}",
                t.section, t.train_seconds, t.predict_seconds
            );
        }
        out
    }

    pub fn paths(&self, dir: &Path, tag: &str) -> ReportPaths {
        let stem = format!("report_{}_{tag}", self.experiment);
        ReportPaths {
            csv: dir.join(format!("{stem}.csv")),
            timing_csv: dir.join(format!("{stem}_timing.csv")),
            json: dir.join(format!("{stem}.json")),
        }
    }

    pub fn write(&self, dir: &Path, tag: &str) -> Result<ReportPaths> {
        std::fs::create_dir_all(dir)?;
        let paths = self.paths(dir, tag);
        write_atomic(&paths.csv, self.csv().as_bytes())?;
        write_atomic(&paths.timing_csv, self.timing_csv().as_bytes())?;
        let mut json = serde_json::to_vec_pretty(self)?;
        json.push(b'\n');
        write_atomic(&paths.json, &json)?;
        Ok(paths)
    }
}
