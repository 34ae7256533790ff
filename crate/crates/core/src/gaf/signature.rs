use std::path::Path;

use image::{GrayImage, ImageFormat, RgbImage};
use ndarray::{Array3, Axis};

use super::{trace_field, GafKind};
use crate::fsutil::write_atomic;
use crate::ingest::{JobRecord, MetricKind, MetricTrace};
use crate::resample::{resample, ResampleSpec};
use crate::{Error, Result};

/// An `l × l × c` stack of fields, one channel per metric.
#[derive(Debug, Clone, PartialEq)]
pub struct JobSignature {
    /// Channel-major: `[channel, row, column]`.
    pub tensor: Array3<f32>,
    pub channel_order: Vec<MetricKind>,
    pub kind: GafKind,
    pub job_id: String,
    pub label: Option<String>,
    /// Fraction of the job's samples that were encoded, in `(0, 1]`.
    pub coverage_fraction: f64,
}

impl JobSignature {
    pub fn side(&self) -> usize {
        self.tensor.len_of(Axis(1))
    }

    pub fn channels(&self) -> usize {
        self.tensor.len_of(Axis(0))
    }
}

/// Bytes of float payload in a stored signature (header excluded).
pub fn signature_payload_bytes(side: usize, channels: usize) -> usize {
    side * side * channels * std::mem::size_of::<f32>()
}

/// Stacks the fields of equal-length traces into a signature.
pub fn encode_signature(
    traces: &[MetricTrace],
    kind: GafKind,
    job_id: impl Into<String>,
    label: Option<String>,
    coverage_fraction: f64,
) -> Result<JobSignature> {
    let first = traces
        .first()
        .ok_or_else(|| Error::EmptyInput("a signature needs at least one trace".into()))?;
    let side = first.len();
    if let Some(t) = traces.iter().find(|t| t.len() != side) {
        return Err(Error::Contract(format!(
            "{} trace has length {}, expected {side}",
            t.kind,
            t.len()
        )));
    }
    if !(coverage_fraction > 0.0 && coverage_fraction <= 1.0) {
        return Err(Error::Contract(format!(
            "coverage fraction {coverage_fraction} outside (0, 1]"
        )));
    }
    let mut tensor = Array3::<f32>::zeros((traces.len(), side, side));
    for (mut channel, trace) in tensor.outer_iter_mut().zip(traces) {
        let g = trace_field(&trace.values, kind)?;
        channel.zip_mut_with(&g.data, |dst, &src| *dst = src as f32);
    }
    Ok(JobSignature {
        tensor,
        channel_order: traces.iter().map(|t| t.kind).collect(),
        kind,
        job_id: job_id.into(),
        label,
        coverage_fraction,
    })
}

/// Encodes the leading `fraction` of a job's traces.
pub fn partial_signature(
    job: &JobRecord,
    fraction: f64,
    spec: &ResampleSpec,
    kind: GafKind,
    channels: &[MetricKind],
) -> Result<JobSignature> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Contract(format!(
            "fraction {fraction} outside (0, 1]"
        )));
    }
    if channels.is_empty() {
        return Err(Error::Config("no channels selected".into()));
    }
    let n = job.len();
    // The small offset keeps products like 0.3 * 10 from rounding up a sample.
    let prefix = ((fraction * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n);
    if prefix == 0 {
        return Err(Error::EmptyInput(format!(
            "job {}: a {fraction} prefix of {n} samples is empty",
            job.job_id
        )));
    }
    let traces = channels
        .iter()
        .map(|&k| resample(&job.trace(k).prefix(prefix), spec))
        .collect::<Result<Vec<_>>>()?;
    encode_signature(
        &traces,
        kind,
        job.job_id.clone(),
        job.label.clone(),
        fraction,
    )
}

/// Encodes a whole job.
pub fn encode_job(
    job: &JobRecord,
    spec: &ResampleSpec,
    kind: GafKind,
    channels: &[MetricKind],
) -> Result<JobSignature> {
    partial_signature(job, 1.0, spec, kind, channels)
}

/// `⌊(v + 1) / 2 · 255⌋` per entry.
pub fn to_pixels(sig: &JobSignature) -> Array3<u8> {
    sig.tensor.mapv(|v| {
        ((f64::from(v) + 1.0) / 2.0 * 255.0)
            .floor()
            .clamp(0.0, 255.0) as u8
    })
}

/// Writes a grayscale (one channel) or RGB (three channels) PNG.
pub fn export_png(sig: &JobSignature, path: &Path) -> Result<()> {
    let pixels = to_pixels(sig);
    let side = sig.side() as u32;
    let mut bytes = std::io::Cursor::new(Vec::new());
    match sig.channels() {
        1 => {
            let raw: Vec<u8> = pixels.index_axis(Axis(0), 0).iter().copied().collect();
            GrayImage::from_raw(side, side, raw)
                .expect("buffer matches dimensions")
                .write_to(&mut bytes, ImageFormat::Png)?;
        }
        3 => {
            // Interleave channel-major planes into RGB triples.
            let hwc = pixels.permuted_axes([1, 2, 0]);
            let raw: Vec<u8> = hwc.iter().copied().collect();
            RgbImage::from_raw(side, side, raw)
                .expect("buffer matches dimensions")
                .write_to(&mut bytes, ImageFormat::Png)?;
        }
        c => return Err(Error::UnsupportedVisualization(c)),
    }
    write_atomic(path, bytes.get_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resample::AggFn;

    fn trace(kind: MetricKind, values: Vec<f64>) -> MetricTrace {
        MetricTrace::new(kind, values, 1.0).unwrap()
    }

    fn job(n: usize) -> JobRecord {
        let ramp = |s: f64| (0..n).map(|i| s * i as f64 + 1.0).collect::<Vec<_>>();
        JobRecord {
            job_id: "j1".into(),
            label: Some("app".into()),
            num_nodes: 1,
            duration: n as f64,
            traces: [
                trace(MetricKind::Power, ramp(1.0)),
                trace(MetricKind::Ipc, (0..n).map(|i| (i % 7) as f64).collect()),
                trace(MetricKind::MemUsed, ramp(-2.0)),
            ],
        }
    }

    fn sig(channels: usize, side: usize) -> JobSignature {
        let traces: Vec<_> = (0..channels)
            .map(|c| {
                trace(
                    MetricKind::Power,
                    (0..side).map(|i| ((i * (c + 3)) % 11) as f64).collect(),
                )
            })
            .collect();
        encode_signature(&traces, GafKind::Gasf, "j", None, 1.0).unwrap()
    }

    #[test]
    fn constant_traces_encode_to_minus_one() {
        let traces: Vec<_> = MetricKind::ALL
            .iter()
            .map(|&k| trace(k, vec![5.0; 16]))
            .collect();
        let s = encode_signature(&traces, GafKind::Gasf, "j", None, 1.0).unwrap();
        assert_eq!(s.tensor.dim(), (3, 16, 16));
        assert!(s.tensor.iter().all(|&v| v == -1.0));
        assert_eq!(s.channel_order, MetricKind::ALL);
    }

    #[test]
    fn channel_counts() {
        assert_eq!(sig(1, 8).tensor.dim(), (1, 8, 8));
        assert_eq!(sig(4, 8).tensor.dim(), (4, 8, 8));
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let traces = vec![
            trace(MetricKind::Power, vec![1.0; 4]),
            trace(MetricKind::Ipc, vec![1.0; 5]),
        ];
        assert!(matches!(
            encode_signature(&traces, GafKind::Gasf, "j", None, 1.0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn pixel_mapping() {
        let mut s = sig(1, 2);
        s.tensor
            .assign(&ndarray::arr3(&[[[-1.0f32, 1.0], [0.0, 0.5]]]));
        let p = to_pixels(&s);
        assert_eq!(p.dim(), (1, 2, 2));
        assert_eq!(p.iter().copied().collect::<Vec<_>>(), [0, 255, 127, 191]);
    }

    #[test]
    fn partial_signatures() {
        let spec = ResampleSpec::new(16, AggFn::Mean).unwrap();
        let j = job(1000);
        let full = encode_job(&j, &spec, GafKind::Gasf, &MetricKind::ALL).unwrap();
        let same = partial_signature(&j, 1.0, &spec, GafKind::Gasf, &MetricKind::ALL).unwrap();
        assert_eq!(full, same);

        let quarter = partial_signature(&j, 0.25, &spec, GafKind::Gasf, &MetricKind::ALL).unwrap();
        assert_eq!(quarter.coverage_fraction, 0.25);
        let prefix: Vec<_> = j
            .traces
            .iter()
            .map(|t| resample(&t.prefix(250), &spec).unwrap())
            .collect();
        let expected =
            encode_signature(&prefix, GafKind::Gasf, "j1", Some("app".into()), 0.25).unwrap();
        assert_eq!(quarter.tensor, expected.tensor);

        let single =
            partial_signature(&job(1), 0.5, &spec, GafKind::Gasf, &[MetricKind::Power]).unwrap();
        assert_eq!(single.tensor.dim(), (1, 16, 16));

        assert!(partial_signature(&j, 0.0, &spec, GafKind::Gasf, &MetricKind::ALL).is_err());
        assert!(partial_signature(&j, 1.5, &spec, GafKind::Gasf, &MetricKind::ALL).is_err());
    }

    #[test]
    fn png_export() {
        let dir = tempfile::tempdir().unwrap();
        let rgb = dir.path().join("rgb.png");
        export_png(&sig(3, 128), &rgb).unwrap();
        let img = image::open(&rgb).unwrap();
        assert_eq!((img.width(), img.height()), (128, 128));
        assert!(matches!(img, image::DynamicImage::ImageRgb8(_)));

        let gray = dir.path().join("gray.png");
        export_png(&sig(1, 32), &gray).unwrap();
        let img = image::open(&gray).unwrap();
        assert_eq!((img.width(), img.height()), (32, 32));
        assert!(matches!(img, image::DynamicImage::ImageLuma8(_)));

        let four = dir.path().join("four.png");
        assert!(matches!(
            export_png(&sig(4, 8), &four),
            Err(Error::UnsupportedVisualization(4))
        ));
        assert!(!four.exists());
    }

    #[test]
    fn rgb_channel_mapping() {
        let s = sig(3, 8);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.png");
        export_png(&s, &path).unwrap();
        let img = image::open(&path).unwrap().to_rgb8();
        let px = to_pixels(&s);
        for (x, y, p) in img.enumerate_pixels() {
            for c in 0..3 {
                assert_eq!(p[c], px[[c, y as usize, x as usize]]);
            }
        }
    }
}
