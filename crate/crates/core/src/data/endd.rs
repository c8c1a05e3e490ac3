//! `ENDD` dataset files. All fields little-endian:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "ENDD"
//!      4     4  version u32 = 1
//!      8     8  sample count n (u64)
//!     16     2  target classes T (u16)
//!     18     2  bias classes B (u16)
//!     20     1  layout: 0 = vector, 1 = planar image
//!     21     1  dtype: 1 = f32
//!     22     2  reserved, 0
//!     24    12  dims, 3 x u32: vector (D, 1, 1); image (C, H, W)
//!     36  4nd   features, n x d f32 (d = product of dims)
//!      .   4n   labels, per sample u16 target then u16 bias
//!      .    20  spec block: rho f64, seed u64, generator u8, split u8, reserved u16
//! ```
//!
//! Generator tags: 0 gaussian clusters, 1 colored patterns, 2 injected IDX.
//! Split tags: 0 train, 1 biased test, 2 unbiased test, 3 bias-conflicting.

use std::fs;
use std::path::Path;

use super::{BiasedDataset, DatasetSpec, Dims, Generator, Split};
use crate::codec::{put_u32, put_u64, to_u32, Reader};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ENDD";
pub const VERSION: u32 = 1;
const DTYPE_F32: u8 = 1;

pub fn encode(ds: &BiasedDataset) -> Result<Vec<u8>> {
    let spec = &ds.spec;
    let n = ds.len();
    let mut out = Vec::with_capacity(56 + ds.features().len() * 4 + n * 4);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u64(&mut out, n as u64);
    out.extend_from_slice(&(spec.n_targets as u16).to_le_bytes());
    out.extend_from_slice(&(spec.n_biases as u16).to_le_bytes());
    let (layout, dims) = match spec.dims {
        Dims::Vector(d) => (0u8, [d, 1, 1]),
        Dims::Image {
            height,
            width,
            channels,
        } => (1u8, [channels, height, width]),
    };
    out.push(layout);
    out.push(DTYPE_F32);
    out.extend_from_slice(&0u16.to_le_bytes());
    for d in dims {
        put_u32(&mut out, to_u32(d, "dimension")?);
    }
    for v in ds.features() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for (t, b) in ds.targets().iter().zip(ds.biases()) {
        out.extend_from_slice(&t.to_le_bytes());
        out.extend_from_slice(&b.to_le_bytes());
    }
    out.extend_from_slice(&spec.rho.to_le_bytes());
    put_u64(&mut out, spec.seed);
    out.push(spec.generator.tag());
    out.push(ds.split.tag());
    out.extend_from_slice(&0u16.to_le_bytes());
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<BiasedDataset> {
    let mut r = Reader::new(bytes, "dataset");
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not an ENDD dataset (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let n = usize::try_from(r.u64()?).map_err(|_| Error::Format("sample count overflows".into()))?;
    let n_targets = r.u16()? as usize;
    let n_biases = r.u16()? as usize;
    let layout = r.u8()?;
    let dtype = r.u8()?;
    if dtype != DTYPE_F32 {
        return Err(Error::Format(format!("unsupported dtype tag {dtype}")));
    }
    r.u16()?;
    let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let dims = match layout {
        0 => Dims::Vector(dims[0]),
        1 => Dims::Image {
            channels: dims[0],
            height: dims[1],
            width: dims[2],
        },
        other => return Err(Error::Format(format!("unknown layout tag {other}"))),
    };
    let d = dims.feature_len();
    let values = n
        .checked_mul(d)
        .ok_or_else(|| Error::Format("feature count overflows".into()))?;
    // Fail on truncation before allocating.
    if values.saturating_mul(4).saturating_add(n.saturating_mul(4)) > bytes.len() {
        return Err(Error::Format(format!(
            "dataset truncated: header declares {n} samples of {d} values"
        )));
    }
    let features = r.f32_vec(values)?;
    let mut targets = Vec::with_capacity(n);
    let mut biases = Vec::with_capacity(n);
    for _ in 0..n {
        targets.push(r.u16()?);
        biases.push(r.u16()?);
    }
    let rho = r.f64()?;
    let seed = r.u64()?;
    let generator = Generator::from_tag(r.u8()?)?;
    let split = Split::from_tag(r.u8()?)?;
    r.u16()?;
    r.finish()?;
    let spec = DatasetSpec {
        n_samples: n,
        n_targets,
        n_biases,
        rho,
        generator,
        dims,
        seed,
    };
    BiasedDataset::new(spec, split, features, targets, biases)
        .map_err(|e| Error::Format(format!("inconsistent dataset: {e}")))
}

pub fn write(ds: &BiasedDataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(ds)?)?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<BiasedDataset> {
    decode(&fs::read(path)?)
}
