//! CNN model files.
//!
//! Layout of a `.arcm` file, little-endian:
//!
//! ```text
//! magic "ARCM" | version u16 | reserved u16
//! input_side, channels, num_classes, conv_kernels[3], kernel_size,
//!     dense_units (u32 each)
//! dropout_pre_flatten, dropout_dense (f64) | epochs, batch_size (u32)
//! learning_rate, momentum (f64) | seed (u64)
//! num_classes × (u32 byte length, UTF-8 class name)
//! every parameter tensor as f32, in storage order
//! ```

use std::path::Path;

use ndarray::{Array1, Array2};

use super::network::{ConvLayer, DenseLayer, Params};
use super::{CnnConfig, CnnModel};
use crate::binio::{ByteReader, ByteWriter};
use crate::fsutil::write_atomic;
use crate::Result;

pub const MODEL_MAGIC: [u8; 4] = *b"ARCM";
pub const MODEL_VERSION: u16 = 1;

fn encode(model: &CnnModel) -> Result<Vec<u8>> {
    let c = &model.config;
    let mut w = ByteWriter::default();
    w.bytes(&MODEL_MAGIC);
    w.u16(MODEL_VERSION);
    w.u16(0);
    for v in [c.input_side, c.channels, c.num_classes]
        .into_iter()
        .chain(c.conv_kernels)
        .chain([c.kernel_size, c.dense_units])
    {
        w.len(v)?;
    }
    w.f64(c.dropout_pre_flatten);
    w.f64(c.dropout_dense);
    w.len(c.epochs)?;
    w.len(c.batch_size)?;
    w.f64(c.learning_rate);
    w.f64(c.momentum);
    w.u64(c.seed);
    for name in &model.vocab {
        w.str(name)?;
    }
    for tensor in model.params.slices() {
        for &v in tensor {
            w.f32(v);
        }
    }
    Ok(w.buf)
}

pub fn save_model(model: &CnnModel, path: &Path) -> Result<()> {
    write_atomic(path, &encode(model)?)
}

pub fn load_model(path: &Path) -> Result<CnnModel> {
    let bytes = std::fs::read(path)?;
    let mut r = ByteReader::new(&bytes, path);
    if r.take(4)? != MODEL_MAGIC {
        return Err(r.fail("not a model file (bad magic)"));
    }
    let version = r.u16()?;
    if version != MODEL_VERSION {
        return Err(r.fail(format!("unsupported model version {version}")));
    }
    r.u16()?;
    let input_side = r.len()?;
    let channels = r.len()?;
    let num_classes = r.len()?;
    let conv_kernels = [r.len()?, r.len()?, r.len()?];
    let kernel_size = r.len()?;
    let dense_units = r.len()?;
    let config = CnnConfig {
        input_side,
        channels,
        num_classes,
        conv_kernels,
        kernel_size,
        dense_units,
        dropout_pre_flatten: r.f64()?,
        dropout_dense: r.f64()?,
        epochs: r.len()?,
        batch_size: r.len()?,
        learning_rate: r.f64()?,
        momentum: r.f64()?,
        seed: r.u64()?,
    };
    config
        .validate()
        .map_err(|e| r.fail(format!("stored configuration is invalid: {e}")))?;
    let vocab = (0..num_classes)
        .map(|_| r.str())
        .collect::<Result<Vec<_>>>()?;

    let geo = config.geometry();
    let k2 = kernel_size * kernel_size;
    let mut matrix = |rows: usize, cols: usize| -> Result<Array2<f32>> {
        let values = (0..rows * cols)
            .map(|_| r.f32())
            .collect::<Result<Vec<_>>>()?;
        Ok(Array2::from_shape_vec((rows, cols), values).expect("sized"))
    };
    let mut conv = Vec::with_capacity(3);
    for (i, &kernels) in conv_kernels.iter().enumerate() {
        let weight = matrix(k2 * geo.in_channels(i), kernels)?;
        let bias = matrix(1, kernels)?;
        conv.push(ConvLayer {
            weight,
            bias: Array1::from_vec(bias.into_raw_vec_and_offset().0),
        });
    }
    let mut dense = |inputs: usize, outputs: usize| -> Result<DenseLayer<f32>> {
        let weight = matrix(inputs, outputs)?;
        let bias = matrix(1, outputs)?;
        Ok(DenseLayer {
            weight,
            bias: Array1::from_vec(bias.into_raw_vec_and_offset().0),
        })
    };
    let hidden = dense(geo.flatten_len(), dense_units)?;
    let output = dense(dense_units, num_classes)?;
    r.finish()?;
    Ok(CnnModel {
        config,
        vocab,
        params: Params {
            conv,
            hidden,
            output,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::build_model;
    use crate::Error;

    fn model() -> CnnModel {
        let mut config = CnnConfig::new(8, 2, 3);
        config.seed = 77;
        config.dense_units = 16;
        build_model(config, vec!["alpha".into(), "βeta".into(), "c".into()]).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.arcm");
        let m = model();
        save_model(&m, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), m);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"ARCM");
        // 4 + 2 + 2 header, 8 u32 sizes, 2 f64, 2 u32, 2 f64, u64, names, weights.
        let names = 4 + 5 + 4 + "βeta".len() + 4 + 1;
        let fixed = 8 + 8 * 4 + 16 + 8 + 16 + 8;
        assert_eq!(bytes.len(), fixed + names + 4 * m.params.len());
    }

    #[test]
    fn corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.arcm");
        save_model(&model(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format { .. })));

        let mut extra = bytes.clone();
        extra.push(0);
        std::fs::write(&path, &extra).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format { .. })));

        let mut magic = bytes.clone();
        magic[0] = b'X';
        std::fs::write(&path, &magic).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format { .. })));

        let mut version = bytes;
        version[4] = 9;
        std::fs::write(&path, &version).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format { .. })));
    }
}
