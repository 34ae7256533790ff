//! Gramian Angular Fields.
//!
//! A trace is min-max rescaled to `[-1, 1]`, mapped to polar angles
//! `φ = arccos(t̃)`, and expanded into the `l × l` matrix of pairwise
//! `cos(φi + φj)` (summation field) or `cos(φi − φj)` (difference field).
//! The summation diagonal is `cos(2φ) = 2t̃² − 1`.

mod io;
mod signature;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use io::{
    read_signature, read_signature_dir, sidecar_path, write_signature, SignatureSidecar,
    SIGNATURE_EXTENSION, SIGNATURE_HEADER_LEN, SIGNATURE_MAGIC, SIGNATURE_VERSION,
};
pub use signature::{
    encode_job, encode_signature, export_png, partial_signature, signature_payload_bytes,
    to_pixels, JobSignature,
};

/// A trace rescaled into `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedTrace {
    values: Vec<f64>,
}

impl NormalizedTrace {
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolarTrace {
    /// Angles in `[0, π]`.
    pub phi: Vec<f64>,
    /// Radii `(i + 1) / l`, strictly increasing in `(0, 1]`.
    pub r: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GafKind {
    /// `cos(φi + φj)`.
    #[default]
    Gasf,
    /// `cos(φi − φj)`.
    Gadf,
    /// `sin(φi − φj)`, the difference-field convention common elsewhere.
    /// Antisymmetric with a zero diagonal.
    GadfSin,
}

impl GafKind {
    pub(crate) fn code(self) -> u8 {
        match self {
            GafKind::Gasf => 0,
            GafKind::Gadf => 1,
            GafKind::GadfSin => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(GafKind::Gasf),
            1 => Some(GafKind::Gadf),
            2 => Some(GafKind::GadfSin),
            _ => None,
        }
    }
}

impl fmt::Display for GafKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GafKind::Gasf => "gasf",
            GafKind::Gadf => "gadf",
            GafKind::GadfSin => "gadf_sin",
        })
    }
}

impl FromStr for GafKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gasf" | "gaf" => Ok(GafKind::Gasf),
            "gadf" => Ok(GafKind::Gadf),
            "gadf_sin" | "gadf-sin" => Ok(GafKind::GadfSin),
            other => Err(Error::Config(format!("unknown field kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GafMatrix {
    pub kind: GafKind,
    pub data: Array2<f64>,
}

/// Min-max rescaling into `[-1, 1]`. A constant trace maps to all zeros.
pub fn rescale_unit(values: &[f64]) -> Result<NormalizedTrace> {
    if values.is_empty() {
        return Err(Error::EmptyInput("cannot rescale an empty trace".into()));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let range = max - min;
    let values = if range > 0.0 {
        values
            .iter()
            .map(|&t| (((t - max) + (t - min)) / range).clamp(-1.0, 1.0))
            .collect()
    } else {
        vec![0.0; values.len()]
    };
    Ok(NormalizedTrace { values })
}

pub fn to_polar(nt: &NormalizedTrace) -> PolarTrace {
    let l = nt.values.len() as f64;
    PolarTrace {
        phi: nt.values.iter().map(|v| v.acos()).collect(),
        r: (1..=nt.values.len()).map(|i| i as f64 / l).collect(),
    }
}

fn pairwise(phi: &[f64], f: impl Fn(f64, f64) -> f64) -> Array2<f64> {
    let l = phi.len();
    Array2::from_shape_fn((l, l), |(i, j)| f(phi[i], phi[j]))
}

pub fn gasf(pt: &PolarTrace) -> GafMatrix {
    GafMatrix {
        kind: GafKind::Gasf,
        data: pairwise(&pt.phi, |a, b| (a + b).cos()),
    }
}

pub fn gadf(pt: &PolarTrace) -> GafMatrix {
    GafMatrix {
        kind: GafKind::Gadf,
        data: pairwise(&pt.phi, |a, b| (a - b).cos()),
    }
}

pub fn gadf_sin(pt: &PolarTrace) -> GafMatrix {
    GafMatrix {
        kind: GafKind::GadfSin,
        data: pairwise(&pt.phi, |a, b| (a - b).sin()),
    }
}

pub fn field(pt: &PolarTrace, kind: GafKind) -> GafMatrix {
    match kind {
        GafKind::Gasf => gasf(pt),
        GafKind::Gadf => gadf(pt),
        GafKind::GadfSin => gadf_sin(pt),
    }
}

/// The field of a raw trace: rescale, polar map, pairwise combination.
pub fn trace_field(values: &[f64], kind: GafKind) -> Result<GafMatrix> {
    Ok(field(&to_polar(&rescale_unit(values)?), kind))
}
