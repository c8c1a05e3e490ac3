//! `ENDM` model checkpoints.
//!
//! All integers little-endian:
//!
//! ```text
//! magic        4 bytes  "ENDM"
//! version      u32      1
//! input tag    u8       0 = flat, 1 = image
//! input dims   3 x u32  flat: (n, 0, 0); image: (channels, height, width)
//! layer count  u32
//! gamma index  u32
//! per layer    u8 kind + 5 x u32
//!                0 dense   (inputs, outputs, 0, 0, 0)
//!                1 conv2d  (in_channels, out_channels, kernel, stride, padding)
//!                2 relu, 3 global_avg_pool, 4 flatten,
//!                5 l2_normalize, 6 leaky_relu   (all zero)
//! param count  u64
//! params       f32 x count, per layer weight then bias
//! ```

use std::fs;
use std::path::Path;

use super::{Architecture, LayerParams, LayerSpec, Network, Shape};
use crate::codec::{put_u32, put_u64, to_u32, Reader};
use crate::error::{Error, Result};
use crate::linalg::Real;

pub const MAGIC: &[u8; 4] = b"ENDM";
pub const VERSION: u32 = 1;

pub fn encode<F: Real>(net: &Network<F>) -> Result<Vec<u8>> {
    let arch = net.architecture();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    let (tag, dims) = match arch.input {
        Shape::Flat(n) => (0u8, [n, 0, 0]),
        Shape::Image {
            channels,
            height,
            width,
        } => (1u8, [channels, height, width]),
    };
    out.push(tag);
    for d in dims {
        put_u32(&mut out, to_u32(d, "input dimension")?);
    }
    put_u32(&mut out, to_u32(arch.layers.len(), "layer count")?);
    put_u32(&mut out, to_u32(arch.gamma, "gamma index")?);
    for layer in &arch.layers {
        let (kind, fields) = match *layer {
            LayerSpec::Dense { inputs, outputs } => (0u8, [inputs, outputs, 0, 0, 0]),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => (1, [in_channels, out_channels, kernel, stride, padding]),
            LayerSpec::Relu => (2, [0; 5]),
            LayerSpec::GlobalAvgPool => (3, [0; 5]),
            LayerSpec::Flatten => (4, [0; 5]),
            LayerSpec::L2Normalize => (5, [0; 5]),
            LayerSpec::LeakyRelu => (6, [0; 5]),
        };
        out.push(kind);
        for f in fields {
            put_u32(&mut out, to_u32(f, "layer field")?);
        }
    }
    let flat = net.flat_params();
    put_u64(&mut out, flat.len() as u64);
    for v in flat {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode<F: Real>(bytes: &[u8]) -> Result<Network<F>> {
    let mut r = Reader::new(bytes, "checkpoint");
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not an ENDM checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let tag = r.u8()?;
    let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let input = match tag {
        0 => Shape::Flat(dims[0]),
        1 => Shape::Image {
            channels: dims[0],
            height: dims[1],
            width: dims[2],
        },
        other => return Err(Error::Format(format!("unknown input tag {other}"))),
    };
    let n_layers = r.u32()? as usize;
    let gamma = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers.min(1024));
    for _ in 0..n_layers {
        let kind = r.u8()?;
        let f: Vec<usize> = (0..5).map(|_| r.u32().map(|v| v as usize)).collect::<Result<_>>()?;
        layers.push(match kind {
            0 => LayerSpec::Dense {
                inputs: f[0],
                outputs: f[1],
            },
            1 => LayerSpec::Conv2d {
                in_channels: f[0],
                out_channels: f[1],
                kernel: f[2],
                stride: f[3],
                padding: f[4],
            },
            2 => LayerSpec::Relu,
            3 => LayerSpec::GlobalAvgPool,
            4 => LayerSpec::Flatten,
            5 => LayerSpec::L2Normalize,
            6 => LayerSpec::LeakyRelu,
            other => return Err(Error::Format(format!("unknown layer kind {other}"))),
        });
    }
    let arch = Architecture::new(input, layers, gamma)
        .map_err(|e| Error::Format(format!("invalid architecture: {e}")))?;
    let count = r.u64()? as usize;
    if count != arch.parameter_count() {
        return Err(Error::Format(format!(
            "architecture has {} parameters but the file stores {count}",
            arch.parameter_count()
        )));
    }
    let values = r.f32_vec(count)?;
    r.finish()?;
    let mut it = values.into_iter().map(|v| F::of_f64(v as f64));
    let params = arch
        .layers
        .iter()
        .map(|l| {
            let (nw, nb) = l.parameter_shapes().unwrap_or((0, 0));
            LayerParams {
                weight: it.by_ref().take(nw).collect(),
                bias: it.by_ref().take(nb).collect(),
            }
        })
        .collect();
    Network::from_params(arch, params)
}

pub fn save<F: Real>(net: &Network<F>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(net)?)?;
    Ok(())
}

pub fn load<F: Real>(path: impl AsRef<Path>) -> Result<Network<F>> {
    decode(&fs::read(path)?)
}
