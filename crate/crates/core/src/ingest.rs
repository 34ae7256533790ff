//! Per-node monitoring samples to per-job metric traces.
//!
//! Input files hold one job step each, with the header
//! `timestamp,node_id,power,tot_ins,tot_cyc,mem_total,mem_free`. The
//! instruction and cycle columns are per-interval deltas, not raw counters.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const CSV_HEADER: [&str; 7] = [
    "timestamp",
    "node_id",
    "power",
    "tot_ins",
    "tot_cyc",
    "mem_total",
    "mem_free",
];

/// File name of the label manifest inside a dataset directory.
pub const MANIFEST_FILE: &str = "manifest.json";

/// Jobs shorter than this are dropped before encoding.
pub const DEFAULT_MIN_DURATION: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Power,
    Ipc,
    MemUsed,
}

impl MetricKind {
    /// Canonical channel order of a three-channel signature.
    pub const ALL: [MetricKind; 3] = [MetricKind::Power, MetricKind::Ipc, MetricKind::MemUsed];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Power => "power",
            MetricKind::Ipc => "ipc",
            MetricKind::MemUsed => "mem_used",
        }
    }

    fn index(self) -> usize {
        match self {
            MetricKind::Power => 0,
            MetricKind::Ipc => 1,
            MetricKind::MemUsed => 2,
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "power" => Ok(MetricKind::Power),
            "ipc" => Ok(MetricKind::Ipc),
            "mem" | "mem_used" | "memused" | "memory" => Ok(MetricKind::MemUsed),
            other => Err(Error::Config(format!("unknown metric {other:?}"))),
        }
    }
}

/// One monitoring sample of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSampleRow {
    pub timestamp: i64,
    pub node_id: String,
    /// Watts.
    pub power: f64,
    pub tot_ins: u64,
    pub tot_cyc: u64,
    /// Kilobytes.
    pub mem_total: u64,
    /// Kilobytes.
    pub mem_free: u64,
}

/// The timestamp-sorted samples of a single node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRows {
    pub node_id: String,
    pub rows: Vec<RawSampleRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricTrace {
    pub kind: MetricKind,
    pub values: Vec<f64>,
    /// Seconds between consecutive samples.
    pub sample_period: f64,
}

impl MetricTrace {
    pub fn new(kind: MetricKind, values: Vec<f64>, sample_period: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput(format!("{kind} trace has no samples")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Contract(format!(
                "{kind} trace has a non-finite value at index {i}"
            )));
        }
        if !(sample_period.is_finite() && sample_period > 0.0) {
            return Err(Error::Contract(format!(
                "sample period must be positive, got {sample_period}"
            )));
        }
        Ok(MetricTrace {
            kind,
            values,
            sample_period,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The leading `len` samples.
    pub fn prefix(&self, len: usize) -> MetricTrace {
        MetricTrace {
            kind: self.kind,
            values: self.values[..len.min(self.values.len())].to_vec(),
            sample_period: self.sample_period,
        }
    }
}

/// Everything known about one job step.
#[derive(Debug, Clone, PartialEq)]
pub struct JobRecord {
    pub job_id: String,
    pub label: Option<String>,
    pub num_nodes: usize,
    /// Seconds.
    pub duration: f64,
    /// Power, Ipc and MemUsed, in that order, all of the same length.
    pub traces: [MetricTrace; 3],
}

impl JobRecord {
    pub fn trace(&self, kind: MetricKind) -> &MetricTrace {
        &self.traces[kind.index()]
    }

    /// Number of samples per trace.
    pub fn len(&self) -> usize {
        self.traces[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces[0].is_empty()
    }
}

/// Output of [`derive_metrics`].
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedMetrics {
    pub traces: Vec<MetricTrace>,
    /// Samples whose cycle count was zero; their IPC was set to 0.
    pub zero_cycle_samples: usize,
}

fn parse_field<T: FromStr>(field: &str, name: &str, line: u64) -> Result<T> {
    field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("{name}: cannot parse {field:?}"),
    })
}

/// Parses the monitoring CSV of one job step into timestamp-sorted
/// per-node groups, ordered by node id.
pub fn parse_trace_csv<R: Read>(input: R) -> Result<Vec<NodeRows>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = reader.records();

    let header = match records.next() {
        None => return Err(Error::EmptyInput("file has no header".into())),
        Some(h) => h?,
    };
    if header.len() != CSV_HEADER.len() || header.iter().zip(CSV_HEADER).any(|(a, b)| a != b) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {:?}", CSV_HEADER.join(",")),
        });
    }

    let mut groups: BTreeMap<String, Vec<(u64, RawSampleRow)>> = BTreeMap::new();
    for record in records {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != CSV_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!(
                    "expected {} columns, found {}",
                    CSV_HEADER.len(),
                    record.len()
                ),
            });
        }
        let row = RawSampleRow {
            timestamp: parse_field(&record[0], "timestamp", line)?,
            node_id: record[1].to_string(),
            power: parse_field(&record[2], "power", line)?,
            tot_ins: parse_field(&record[3], "tot_ins", line)?,
            tot_cyc: parse_field(&record[4], "tot_cyc", line)?,
            mem_total: parse_field(&record[5], "mem_total", line)?,
            mem_free: parse_field(&record[6], "mem_free", line)?,
        };
        if !(row.power.is_finite() && row.power >= 0.0) {
            return Err(Error::Validation {
                line,
                message: format!("power must be a non-negative number, got {}", row.power),
            });
        }
        if row.mem_free > row.mem_total {
            return Err(Error::Validation {
                line,
                message: format!(
                    "mem_free ({}) exceeds mem_total ({})",
                    row.mem_free, row.mem_total
                ),
            });
        }
        groups
            .entry(row.node_id.clone())
            .or_default()
            .push((line, row));
    }
    if groups.is_empty() {
        return Err(Error::EmptyInput("file has no samples".into()));
    }

    groups
        .into_iter()
        .map(|(node_id, mut rows)| {
            rows.sort_by_key(|(_, r)| r.timestamp);
            if let Some(w) = rows
                .windows(2)
                .find(|w| w[0].1.timestamp == w[1].1.timestamp)
            {
                return Err(Error::Validation {
                    line: w[1].0,
                    message: format!(
                        "duplicate timestamp {} for node {node_id}",
                        w[1].1.timestamp
                    ),
                });
            }
            Ok(NodeRows {
                node_id,
                rows: rows.into_iter().map(|(_, r)| r).collect(),
            })
        })
        .collect()
}

fn sample_period(rows: &[RawSampleRow]) -> f64 {
    match (rows.first(), rows.last()) {
        (Some(a), Some(b)) if rows.len() > 1 && b.timestamp > a.timestamp => {
            (b.timestamp - a.timestamp) as f64 / (rows.len() - 1) as f64
        }
        _ => 1.0,
    }
}

/// Computes the power, IPC and memory-used traces of one node.
pub fn derive_metrics(rows: &[RawSampleRow]) -> Result<DerivedMetrics> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("node has no samples".into()));
    }
    let period = sample_period(rows);
    let mut zero_cycle_samples = 0;
    let ipc = rows
        .iter()
        .map(|r| {
            if r.tot_cyc == 0 {
                zero_cycle_samples += 1;
                0.0
            } else {
                r.tot_ins as f64 / r.tot_cyc as f64
            }
        })
        .collect();
    if zero_cycle_samples > 0 {
        log::warn!(
            "node {}: {zero_cycle_samples} samples with zero cycles, IPC set to 0",
            rows[0].node_id
        );
    }
    let power = rows.iter().map(|r| r.power).collect();
    let mem = rows
        .iter()
        .map(|r| (r.mem_total - r.mem_free) as f64)
        .collect();
    Ok(DerivedMetrics {
        traces: vec![
            MetricTrace::new(MetricKind::Power, power, period)?,
            MetricTrace::new(MetricKind::Ipc, ipc, period)?,
            MetricTrace::new(MetricKind::MemUsed, mem, period)?,
        ],
        zero_cycle_samples,
    })
}

/// Averages node traces sample by sample, after truncating every node to
/// the shortest trace.
pub fn aggregate_nodes(nodes: &[Vec<MetricTrace>]) -> Result<[MetricTrace; 3]> {
    if nodes.is_empty() {
        return Err(Error::EmptyInput("no nodes to aggregate".into()));
    }
    let mut by_kind: [Vec<&MetricTrace>; 3] = Default::default();
    for (n, traces) in nodes.iter().enumerate() {
        let mut kinds: Vec<MetricKind> = traces.iter().map(|t| t.kind).collect();
        kinds.sort();
        if kinds != MetricKind::ALL {
            return Err(Error::Schema(format!(
                "node {n} provides metrics {kinds:?}, expected {:?}",
                MetricKind::ALL
            )));
        }
        for t in traces {
            by_kind[t.kind.index()].push(t);
        }
    }
    let len = nodes
        .iter()
        .flat_map(|traces| traces.iter().map(MetricTrace::len))
        .min()
        .unwrap_or(0);
    if len == 0 {
        return Err(Error::EmptyInput("a node trace is empty".into()));
    }
    let count = nodes.len() as f64;
    let mean_of = |kind: MetricKind| -> Result<MetricTrace> {
        let traces = &by_kind[kind.index()];
        // Shifted by the first node so identical nodes average exactly.
        let values = (0..len)
            .map(|i| {
                let anchor = traces[0].values[i];
                anchor + traces.iter().map(|t| t.values[i] - anchor).sum::<f64>() / count
            })
            .collect();
        let period = traces.iter().map(|t| t.sample_period).sum::<f64>() / count;
        MetricTrace::new(kind, values, period)
    };
    Ok([
        mean_of(MetricKind::Power)?,
        mean_of(MetricKind::Ipc)?,
        mean_of(MetricKind::MemUsed)?,
    ])
}

/// Keeps records lasting at least `min_duration` seconds with non-empty
/// traces, in their original order.
pub fn filter_jobs(records: Vec<JobRecord>, min_duration: f64) -> Vec<JobRecord> {
    records
        .into_iter()
        .filter(|r| r.duration >= min_duration && !r.is_empty())
        .collect()
}

/// Builds a job record from the parsed node groups of one file.
pub fn job_from_nodes(
    job_id: impl Into<String>,
    label: Option<String>,
    nodes: &[NodeRows],
) -> Result<(JobRecord, usize)> {
    let mut warnings = 0;
    let mut per_node = Vec::with_capacity(nodes.len());
    let mut duration: f64 = 0.0;
    for node in nodes {
        let derived = derive_metrics(&node.rows)?;
        warnings += derived.zero_cycle_samples;
        let first = node.rows.first().map_or(0, |r| r.timestamp);
        let last = node.rows.last().map_or(0, |r| r.timestamp);
        let span = (last - first) as f64 + derived.traces[0].sample_period;
        duration = duration.max(span);
        per_node.push(derived.traces);
    }
    let traces = aggregate_nodes(&per_node)?;
    Ok((
        JobRecord {
            job_id: job_id.into(),
            label,
            num_nodes: nodes.len(),
            duration,
            traces,
        },
        warnings,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub job_id: String,
    pub label: String,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let file = File::open(path)?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::format(path, format!("bad label manifest: {e}")))
}

pub fn manifest_json(entries: &[ManifestEntry]) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(entries)?;
    out.push(b'\n');
    Ok(out)
}

/// Serializes rows in the ingest CSV format.
pub fn trace_csv(rows: &[RawSampleRow]) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(CSV_HEADER)?;
    for r in rows {
        writer.write_record([
            r.timestamp.to_string(),
            r.node_id.clone(),
            r.power.to_string(),
            r.tot_ins.to_string(),
            r.tot_cyc.to_string(),
            r.mem_total.to_string(),
            r.mem_free.to_string(),
        ])?;
    }
    writer
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// A dataset directory loaded into memory.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub jobs: Vec<JobRecord>,
    /// Total samples whose IPC had to be zeroed.
    pub zero_cycle_samples: usize,
}

/// The `*.csv` files of a directory, sorted by name.
pub fn list_trace_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    Ok(files)
}

/// Loads one job file; the file stem is the job id.
pub fn load_job_file(path: &Path, label: Option<String>) -> Result<(JobRecord, usize)> {
    let job_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| Error::format(path, "no file name"))?;
    let file = File::open(path)?;
    let nodes = parse_trace_csv(BufReader::new(file)).map_err(|e| match e {
        Error::Io(_) => e,
        other => Error::format(path, other.to_string()),
    })?;
    job_from_nodes(job_id, label, &nodes)
}

/// Labels keyed by job id, from the directory's manifest when present.
pub fn dataset_labels(dir: &Path) -> Result<BTreeMap<String, String>> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    Ok(read_manifest(&path)?
        .into_iter()
        .map(|e| (e.job_id, e.label))
        .collect())
}

/// Loads every job file in `dir`, attaching labels from its manifest.
pub fn load_dataset(dir: &Path) -> Result<LoadedDataset> {
    let labels = dataset_labels(dir)?;
    let mut jobs = Vec::new();
    let mut zero_cycle_samples = 0;
    for path in list_trace_files(dir)? {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        let label = stem.and_then(|s| labels.get(&s).cloned());
        let (job, warnings) = load_job_file(&path, label)?;
        zero_cycle_samples += warnings;
        jobs.push(job);
    }
    Ok(LoadedDataset {
        jobs,
        zero_cycle_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "timestamp,node_id,power,tot_ins,tot_cyc,mem_total,mem_free\n";

    fn row(ts: i64, node: &str, power: f64) -> RawSampleRow {
        RawSampleRow {
            timestamp: ts,
            node_id: node.into(),
            power,
            tot_ins: 2_000_000_000,
            tot_cyc: 1_000_000_000,
            mem_total: 96_000_000,
            mem_free: 90_000_000,
        }
    }

    fn trace(kind: MetricKind, values: &[f64]) -> MetricTrace {
        MetricTrace::new(kind, values.to_vec(), 1.0).unwrap()
    }

    fn node(power: &[f64]) -> Vec<MetricTrace> {
        vec![
            trace(MetricKind::Power, power),
            trace(MetricKind::Ipc, &vec![1.0; power.len()]),
            trace(MetricKind::MemUsed, &vec![5.0; power.len()]),
        ]
    }

    fn job(id: &str, duration: f64) -> JobRecord {
        let traces = aggregate_nodes(&[node(&[1.0, 2.0])]).unwrap();
        JobRecord {
            job_id: id.into(),
            label: None,
            num_nodes: 1,
            duration,
            traces,
        }
    }

    #[test]
    fn parses_single_node() {
        let text = format!("{HEADER}1,n1,300,2,1,10,5\n2,n1,310,4,2,10,4\n");
        let groups = parse_trace_csv(text.as_bytes()).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].node_id, "n1");
        assert_eq!(groups[0].rows.len(), 2);
        assert_eq!(groups[0].rows[1].power, 310.0);
    }

    #[test]
    fn groups_interleaved_nodes_sorted_by_time() {
        let text =
            format!("{HEADER}3,n1,1,1,1,10,5\n2,n2,1,1,1,10,5\n1,n1,1,1,1,10,5\n1,n2,1,1,1,10,5\n");
        let groups = parse_trace_csv(text.as_bytes()).unwrap();
        assert_eq!(groups.len(), 2);
        for g in &groups {
            let ts: Vec<i64> = g.rows.iter().map(|r| r.timestamp).collect();
            assert!(ts.windows(2).all(|w| w[0] < w[1]), "{ts:?}");
        }
        assert_eq!(
            groups[0]
                .rows
                .iter()
                .map(|r| r.timestamp)
                .collect::<Vec<_>>(),
            [1, 3]
        );
    }

    #[test]
    fn rejects_mem_free_above_total() {
        let text = format!("{HEADER}1,n1,1,1,1,10,5\n2,n1,1,1,1,10,11\n");
        match parse_trace_csv(text.as_bytes()) {
            Err(Error::Validation { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("mem_free"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let text = format!("{HEADER}1,n1,1,1,1,10,5\n2,n1,abc,1,1,10,5\n");
        assert!(matches!(
            parse_trace_csv(text.as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
        let text = format!("{HEADER}1,n1,1,1,1,10\n");
        assert!(matches!(
            parse_trace_csv(text.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(
            parse_trace_csv(&b""[..]),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            parse_trace_csv(HEADER.as_bytes()),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            parse_trace_csv(&b"a,b,c\n"[..]),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_timestamps_rejected() {
        let text = format!("{HEADER}1,n1,1,1,1,10,5\n1,n1,1,1,1,10,5\n");
        assert!(matches!(
            parse_trace_csv(text.as_bytes()),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn derives_table_metrics() {
        let r = RawSampleRow {
            timestamp: 0,
            node_id: "n".into(),
            power: 300.0,
            tot_ins: 2_000_000_000,
            tot_cyc: 1_000_000_000,
            mem_total: 96_000_000,
            mem_free: 90_000_000,
        };
        let d = derive_metrics(&[r]).unwrap();
        assert_eq!(d.traces[0].values, [300.0]);
        assert_eq!(d.traces[1].values, [2.0]);
        assert_eq!(d.traces[2].values, [6e6]);
        assert_eq!(d.zero_cycle_samples, 0);
    }

    #[test]
    fn degenerate_ipc() {
        let mut a = row(0, "n", 1.0);
        a.tot_ins = 0;
        let mut b = row(1, "n", 1.0);
        b.tot_ins = 5;
        b.tot_cyc = 0;
        let d = derive_metrics(&[a, b]).unwrap();
        assert_eq!(d.traces[1].values, [0.0, 0.0]);
        assert_eq!(d.zero_cycle_samples, 1);
    }

    #[test]
    fn aggregate_single_node_is_identity() {
        let n = node(&[1.0, 5.0, 3.0]);
        let out = aggregate_nodes(std::slice::from_ref(&n)).unwrap();
        assert_eq!(out.to_vec(), n);
    }

    #[test]
    fn aggregate_means_and_truncates() {
        let out = aggregate_nodes(&[node(&[100.0, 100.0]), node(&[300.0, 300.0])]).unwrap();
        assert_eq!(out[0].values, [200.0, 200.0]);
        let out = aggregate_nodes(&[node(&[1.0; 5]), node(&[1.0; 4])]).unwrap();
        assert!(out.iter().all(|t| t.len() == 4));
    }

    #[test]
    fn aggregate_errors() {
        assert!(matches!(aggregate_nodes(&[]), Err(Error::EmptyInput(_))));
        let mut bad = node(&[1.0]);
        bad[2].kind = MetricKind::Power;
        assert!(matches!(aggregate_nodes(&[bad]), Err(Error::Schema(_))));
    }

    #[test]
    fn filter_by_duration() {
        let jobs = vec![job("a", 59.0), job("b", 60.0), job("c", 172867.0)];
        let kept = filter_jobs(jobs.clone(), 60.0);
        assert_eq!(
            kept.iter().map(|j| j.job_id.as_str()).collect::<Vec<_>>(),
            ["b", "c"]
        );
        assert_eq!(filter_jobs(jobs.clone(), 0.0), jobs);
        assert!(filter_jobs(jobs, 1e9).is_empty());
    }

    #[test]
    fn job_duration_and_nodes() {
        let text = format!(
            "{HEADER}0,n1,1,1,1,10,5\n1,n1,1,1,1,10,5\n0,n2,3,1,1,10,5\n1,n2,3,1,1,10,5\n2,n2,3,1,1,10,5\n"
        );
        let nodes = parse_trace_csv(text.as_bytes()).unwrap();
        let (job, _) = job_from_nodes("j", None, &nodes).unwrap();
        assert_eq!(job.num_nodes, 2);
        assert_eq!(job.len(), 2);
        assert_eq!(job.duration, 3.0);
        assert_eq!(job.trace(MetricKind::Power).values, [2.0, 2.0]);
    }

    #[test]
    fn csv_writer_round_trips() {
        let rows = vec![row(5, "n1", 301.25), row(6, "n1", 299.5)];
        let bytes = trace_csv(&rows).unwrap();
        let groups = parse_trace_csv(bytes.as_slice()).unwrap();
        assert_eq!(groups[0].rows, rows);
    }

    proptest! {
        #[test]
        fn derive_preserves_length(powers in prop::collection::vec(0.0f64..500.0, 1..50)) {
            let rows: Vec<_> = powers.iter().enumerate().map(|(i, &p)| row(i as i64, "n", p)).collect();
            let d = derive_metrics(&rows).unwrap();
            prop_assert!(d.traces.iter().all(|t| t.len() == rows.len()));
        }

        #[test]
        fn aggregate_is_order_invariant(
            a in prop::collection::vec(0.0f64..1e3, 1..20),
            b in prop::collection::vec(0.0f64..1e3, 1..20),
            c in prop::collection::vec(0.0f64..1e3, 1..20),
        ) {
            let fwd = aggregate_nodes(&[node(&a), node(&b), node(&c)]).unwrap();
            let rev = aggregate_nodes(&[node(&c), node(&a), node(&b)]).unwrap();
            for (x, y) in fwd.iter().zip(&rev) {
                prop_assert_eq!(x.len(), y.len());
                for (u, v) in x.values.iter().zip(&y.values) {
                    prop_assert!((u - v).abs() <= 1e-9 * u.abs().max(1.0));
                }
            }
        }

        #[test]
        fn aggregate_of_copies(a in prop::collection::vec(0.0f64..1e6, 1..20), n in 1usize..8) {
            let nodes = vec![node(&a); n];
            let out = aggregate_nodes(&nodes).unwrap();
            for (u, v) in out[0].values.iter().zip(&a) {
                prop_assert!((u - v).abs() <= 1e-12);
            }
        }

        #[test]
        fn filter_is_idempotent(durations in prop::collection::vec(0.0f64..200.0, 0..20), min in 0.0f64..150.0) {
            let jobs: Vec<_> = durations.iter().enumerate().map(|(i, &d)| job(&i.to_string(), d)).collect();
            let once = filter_jobs(jobs, min);
            prop_assert_eq!(filter_jobs(once.clone(), min), once);
        }
    }
}
