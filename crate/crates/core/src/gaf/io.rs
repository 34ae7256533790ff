//! Binary signature files.
//!
//! Layout of `<job_id>.arcd`, all integers little-endian:
//!
//! | offset | size | field                                      |
//! |--------|------|--------------------------------------------|
//! | 0      | 4    | magic `ARCD`                               |
//! | 4      | 2    | format version (u16)                       |
//! | 6      | 2    | side length `l` (u16)                      |
//! | 8      | 2    | channel count `c` (u16)                    |
//! | 10     | 1    | field kind: 0 GASF, 1 GADF, 2 GADF (sin)   |
//! | 11     | 5    | zero padding                               |
//! | 16     | 4·l·l·c | f32 values, channel-major, then row-major |
//!
//! Metadata lives in a JSON sidecar `<job_id>.json`.

use std::path::{Path, PathBuf};

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use super::{GafKind, JobSignature};
use crate::fsutil::write_atomic;
use crate::ingest::MetricKind;
use crate::{Error, Result};

pub const SIGNATURE_MAGIC: [u8; 4] = *b"ARCD";
pub const SIGNATURE_VERSION: u16 = 1;
pub const SIGNATURE_HEADER_LEN: usize = 16;
pub const SIGNATURE_EXTENSION: &str = "arcd";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureSidecar {
    pub job_id: String,
    pub label: Option<String>,
    pub coverage_fraction: f64,
    pub channel_order: Vec<MetricKind>,
}

pub fn sidecar_path(signature_path: &Path) -> PathBuf {
    signature_path.with_extension("json")
}

fn encode(sig: &JobSignature) -> Result<Vec<u8>> {
    let side = u16::try_from(sig.side())
        .map_err(|_| Error::Contract(format!("side {} too large", sig.side())))?;
    let channels = u16::try_from(sig.channels())
        .map_err(|_| Error::Contract(format!("{} channels too many", sig.channels())))?;
    let mut out = Vec::with_capacity(SIGNATURE_HEADER_LEN + 4 * sig.tensor.len());
    out.extend_from_slice(&SIGNATURE_MAGIC);
    out.extend_from_slice(&SIGNATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&side.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.push(sig.kind.code());
    out.extend_from_slice(&[0u8; 5]);
    for v in sig.tensor.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Writes `<dir>/<job_id>.arcd` and its sidecar; returns the signature path.
pub fn write_signature(sig: &JobSignature, dir: &Path) -> Result<PathBuf> {
    let path = dir.join(format!("{}.{SIGNATURE_EXTENSION}", sig.job_id));
    write_atomic(&path, &encode(sig)?)?;
    let sidecar = SignatureSidecar {
        job_id: sig.job_id.clone(),
        label: sig.label.clone(),
        coverage_fraction: sig.coverage_fraction,
        channel_order: sig.channel_order.clone(),
    };
    let mut json = serde_json::to_vec_pretty(&sidecar)?;
    json.push(b'\n');
    write_atomic(&sidecar_path(&path), &json)?;
    Ok(path)
}

pub fn read_signature(path: &Path) -> Result<JobSignature> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < SIGNATURE_HEADER_LEN || bytes[..4] != SIGNATURE_MAGIC {
        return Err(Error::format(path, "not a signature file"));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let version = u16_at(4);
    if version != SIGNATURE_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported version {version}"),
        ));
    }
    let side = usize::from(u16_at(6));
    let channels = usize::from(u16_at(8));
    let kind = GafKind::from_code(bytes[10])
        .ok_or_else(|| Error::format(path, format!("unknown field kind {}", bytes[10])))?;
    let count = side * side * channels;
    if bytes.len() != SIGNATURE_HEADER_LEN + 4 * count {
        return Err(Error::format(
            path,
            format!(
                "expected {} payload bytes, found {}",
                4 * count,
                bytes.len() - SIGNATURE_HEADER_LEN
            ),
        ));
    }
    let values: Vec<f32> = bytes[SIGNATURE_HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let tensor = Array3::from_shape_vec((channels, side, side), values)
        .map_err(|e| Error::format(path, e.to_string()))?;

    let side_path = sidecar_path(path);
    let sidecar: SignatureSidecar = serde_json::from_slice(&std::fs::read(&side_path)?)
        .map_err(|e| Error::format(&side_path, e.to_string()))?;
    if sidecar.channel_order.len() != channels {
        return Err(Error::format(
            &side_path,
            format!(
                "{} channel names for {channels} channels",
                sidecar.channel_order.len()
            ),
        ));
    }
    Ok(JobSignature {
        tensor,
        channel_order: sidecar.channel_order,
        kind,
        job_id: sidecar.job_id,
        label: sidecar.label,
        coverage_fraction: sidecar.coverage_fraction,
    })
}

/// Reads every `*.arcd` in `dir`, sorted by file name.
pub fn read_signature_dir(dir: &Path) -> Result<Vec<JobSignature>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == SIGNATURE_EXTENSION))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_signature(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaf::encode_signature;
    use crate::ingest::MetricTrace;

    fn sample() -> JobSignature {
        let traces: Vec<_> = MetricKind::ALL
            .iter()
            .enumerate()
            .map(|(c, &k)| {
                MetricTrace::new(k, (0..8).map(|i| ((i * (c + 2)) % 5) as f64).collect(), 1.0)
                    .unwrap()
            })
            .collect();
        encode_signature(&traces, GafKind::Gadf, "job-7", Some("lammps".into()), 0.5).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&sample()).unwrap();
        assert_eq!(&bytes[..4], b"ARCD");
        assert_eq!(&bytes[4..6], &1u16.to_le_bytes());
        assert_eq!(&bytes[6..8], &8u16.to_le_bytes());
        assert_eq!(&bytes[8..10], &3u16.to_le_bytes());
        assert_eq!(bytes[10], 1);
        assert_eq!(&bytes[11..16], &[0; 5]);
        assert_eq!(bytes.len(), 16 + 8 * 8 * 3 * 4);
    }

    #[test]
    fn round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let sig = sample();
        let path = write_signature(&sig, dir.path()).unwrap();
        assert_eq!(read_signature(&path).unwrap(), sig);
        assert_eq!(read_signature_dir(dir.path()).unwrap(), vec![sig]);

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_signature(&path), Err(Error::Format { .. })));
        std::fs::write(&path, b"XXXX").unwrap();
        assert!(matches!(read_signature(&path), Err(Error::Format { .. })));
    }
}
