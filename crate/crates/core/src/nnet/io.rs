//! Model serialization.
//!
//! Layout: magic `MOGPE1`, format version u16, layer count u16, then per
//! layer a kind tag u8 with its u32 shape dims, followed by that layer's
//! parameter tensors as little-endian f32, and a trailing CRC32 (IEEE) of
//! everything before it.

use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::layers::LayerSpec;
use super::network::{Network, NetworkSpec};
use super::tensor::Tensor;

pub const MODEL_MAGIC: &[u8; 6] = b"MOGPE1";
pub const MODEL_VERSION: u16 = 1;

const TAG_CONV2D: u8 = 1;
const TAG_MAXPOOL2: u8 = 2;
const TAG_RELU: u8 = 3;
const TAG_FLATTEN: u8 = 4;
const TAG_DENSE: u8 = 5;

/// CRC32 (IEEE 802.3, reflected, poly 0xEDB88320).
pub fn crc32(bytes: &[u8]) -> u32 {
    let mut crc = 0xffff_ffffu32;
    for &b in bytes {
        crc ^= b as u32;
        for _ in 0..8 {
            let mask = (crc & 1).wrapping_neg();
            crc = (crc >> 1) ^ (0xedb8_8320 & mask);
        }
    }
    !crc
}

pub fn encode_model<S: Scalar>(net: &Network<S>) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    buf.extend_from_slice(&(net.spec.layers.len() as u16).to_le_bytes());
    for (layer, params) in net.spec.layers.iter().zip(&net.params) {
        match *layer {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
            } => {
                buf.push(TAG_CONV2D);
                for d in [in_channels, out_channels, kernel] {
                    buf.extend_from_slice(&(d as u32).to_le_bytes());
                }
            }
            LayerSpec::MaxPool2 => buf.push(TAG_MAXPOOL2),
            LayerSpec::Relu => buf.push(TAG_RELU),
            LayerSpec::Flatten => buf.push(TAG_FLATTEN),
            LayerSpec::Dense { inputs, outputs } => {
                buf.push(TAG_DENSE);
                for d in [inputs, outputs] {
                    buf.extend_from_slice(&(d as u32).to_le_bytes());
                }
            }
        }
        for p in params {
            for v in p.iter() {
                buf.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
            }
        }
    }
    let crc = crc32(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

pub fn decode_model<S: Scalar>(bytes: &[u8]) -> Result<Network<S>> {
    let err = |msg: String| Error::ModelFormat(msg);
    if bytes.len() < MODEL_MAGIC.len() + 4 + 4 {
        return Err(err("file truncated before header".into()));
    }
    if &bytes[..6] != MODEL_MAGIC {
        return Err(err(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..6]),
            String::from_utf8_lossy(MODEL_MAGIC)
        )));
    }
    let body = &bytes[..bytes.len() - 4];
    let stored_crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let actual_crc = crc32(body);
    if stored_crc != actual_crc {
        return Err(err(format!(
            "CRC mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}"
        )));
    }

    let mut pos = 6;
    let mut take = |n: usize| -> Result<&[u8]> {
        if pos + n > body.len() {
            return Err(Error::ModelFormat("file truncated".into()));
        }
        let s = &body[pos..pos + n];
        pos += n;
        Ok(s)
    };

    let version = u16::from_le_bytes(take(2)?.try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(err(format!(
            "unsupported format version {version}, expected {MODEL_VERSION}"
        )));
    }
    let layer_count = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;

    let mut layers = Vec::with_capacity(layer_count);
    let mut params = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let tag = take(1)?[0];
        let layer = match tag {
            TAG_CONV2D => {
                let in_channels = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
                let out_channels = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
                let kernel = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                }
            }
            TAG_MAXPOOL2 => LayerSpec::MaxPool2,
            TAG_RELU => LayerSpec::Relu,
            TAG_FLATTEN => LayerSpec::Flatten,
            TAG_DENSE => {
                let inputs = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
                let outputs = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
                LayerSpec::Dense { inputs, outputs }
            }
            other => return Err(err(format!("unknown layer tag {other}"))),
        };
        let mut layer_params = Vec::new();
        for shape in layer.param_shapes() {
            let n: usize = shape.iter().product();
            let raw = take(n * 4)?;
            let data: Vec<S> = raw
                .chunks_exact(4)
                .map(|c| S::from_f64_lossy(f32::from_le_bytes(c.try_into().unwrap()) as f64))
                .collect();
            layer_params.push(Tensor::from_vec(&shape, data));
        }
        layers.push(layer);
        params.push(layer_params);
    }
    if pos != body.len() {
        return Err(err(format!(
            "{} trailing bytes after last layer",
            body.len() - pos
        )));
    }
    Ok(Network {
        spec: NetworkSpec::new(layers),
        params,
    })
}

pub fn save_model<S: Scalar>(net: &Network<S>, path: &Path) -> Result<()> {
    let bytes = encode_model(net);
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(&bytes)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_model<S: Scalar>(path: &Path) -> Result<Network<S>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    decode_model(&bytes)
}
