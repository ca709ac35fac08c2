//! Versioned binary model files.
//!
//! All integers and floats are little-endian. Layout:
//!
//! ```text
//! "TTNM"  u16 version  u16 flags  u64 total file length
//! u32 n_leaves  u32 n_features  u32 n_classes  i32 center (-1: none)
//! per feature: u8 kind  f64 x_max  u32 name length  name bytes (UTF-8)
//! per leaf:    i32 feature (-1: padding)
//! per node:    u32 dl  u32 dr  u32 dp  dl*dr*dp f64 (row-major)
//! u32 CRC-32 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::{FeatureEncoding, FeatureKind, FeatureSpec, ModelError, TreeTopology, TtnModel};
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;

pub const MAGIC: &[u8; 4] = b"TTNM";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported format version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u16, supported: u16 },
    #[error("file truncated: {actual} of {expected} bytes")]
    Truncated { expected: u64, actual: u64 },
    #[error("checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed model file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub fn to_bytes<T: Scalar>(model: &TtnModel<T>) -> Vec<u8> {
    let topo = model.topology();
    let mut b = Vec::new();
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    b.extend_from_slice(&0u16.to_le_bytes());
    b.extend_from_slice(&0u64.to_le_bytes());
    put_u32(&mut b, topo.n_leaves());
    put_u32(&mut b, topo.n_features());
    put_u32(&mut b, model.n_classes());
    b.extend_from_slice(&model.canonical_center().map_or(-1i32, |c| c as i32).to_le_bytes());
    for f in &model.feature_spec().features {
        b.push(match f.kind {
            FeatureKind::Continuous => 0,
            FeatureKind::Charge => 1,
        });
        b.extend_from_slice(&f.x_max.to_le_bytes());
        put_u32(&mut b, f.name.len());
        b.extend_from_slice(f.name.as_bytes());
    }
    for lf in topo.leaf_features() {
        b.extend_from_slice(&lf.map_or(-1i32, |f| f as i32).to_le_bytes());
    }
    for t in model.tensors() {
        for &d in t.shape() {
            put_u32(&mut b, d);
        }
        for &x in t.data() {
            b.extend_from_slice(&x.to_f64_lossy().to_le_bytes());
        }
    }
    let total = (b.len() + 4) as u64;
    b[8..16].copy_from_slice(&total.to_le_bytes());
    let crc = crc32fast::hash(&b);
    b.extend_from_slice(&crc.to_le_bytes());
    b
}

pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<TtnModel<T>, ModelFileError> {
    if bytes.len() < 4 {
        return Err(ModelFileError::Truncated {
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(ModelFileError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(ModelFileError::Truncated {
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(ModelFileError::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let total = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    if (bytes.len() as u64) < total {
        return Err(ModelFileError::Truncated {
            expected: total,
            actual: bytes.len() as u64,
        });
    }
    if (bytes.len() as u64) != total || total < (HEADER_LEN + 4) as u64 {
        return Err(ModelFileError::Corrupt(format!(
            "declared length {total} but file holds {} bytes",
            bytes.len()
        )));
    }
    let body = &bytes[..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(ModelFileError::Checksum { stored, computed });
    }
    parse(&body[HEADER_LEN..])
}

fn parse<T: Scalar>(body: &[u8]) -> Result<TtnModel<T>, ModelFileError> {
    let mut r = Reader { buf: body, pos: 0 };
    let n_leaves = r.u32()? as usize;
    let n_features = r.u32()? as usize;
    let n_classes = r.u32()? as usize;
    let center = r.i32()?;
    if n_leaves < 2 || !n_leaves.is_power_of_two() || n_features > n_leaves {
        return Err(ModelFileError::Corrupt(format!("{n_features} features on {n_leaves} leaves")));
    }
    let mut features = Vec::with_capacity(n_features);
    for _ in 0..n_features {
        let kind = match r.u8()? {
            0 => FeatureKind::Continuous,
            1 => FeatureKind::Charge,
            k => return Err(ModelFileError::Corrupt(format!("unknown feature kind {k}"))),
        };
        let x_max = r.f64()?;
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| ModelFileError::Corrupt("feature name is not UTF-8".into()))?;
        features.push(FeatureEncoding { name, kind, x_max });
    }
    let spec = FeatureSpec::new(features)?;
    let mut leaf_map = Vec::with_capacity(n_leaves);
    for _ in 0..n_leaves {
        let f = r.i32()?;
        leaf_map.push(if f < 0 { None } else { Some(f as usize) });
    }
    let topology = TreeTopology::from_leaf_map(leaf_map)?;
    let mut tensors = Vec::with_capacity(topology.n_nodes());
    for _ in 0..topology.n_nodes() {
        let shape = vec![r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n.filter(|&n| n * 8 <= r.remaining()).ok_or_else(|| {
            ModelFileError::Corrupt(format!("node shape {shape:?} exceeds the payload"))
        })?;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(T::of(r.f64()?));
        }
        tensors.push(DenseTensor::new(shape, data).map_err(ModelError::from)?);
    }
    if r.remaining() != 0 {
        return Err(ModelFileError::Corrupt(format!("{} trailing bytes", r.remaining())));
    }
    let center = if center < 0 { None } else { Some(center as usize) };
    Ok(TtnModel::from_parts(topology, tensors, n_classes, spec, center)?)
}

pub fn save_model<T: Scalar>(model: &TtnModel<T>, path: impl AsRef<Path>) -> Result<(), ModelFileError> {
    fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<TtnModel<T>, ModelFileError> {
    from_bytes(&fs::read(path)?)
}

fn put_u32(b: &mut Vec<u8>, v: usize) {
    b.extend_from_slice(&u32::try_from(v).expect("extent fits in u32").to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelFileError> {
        if n > self.remaining() {
            return Err(ModelFileError::Corrupt("payload ends early".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ModelFileError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ModelFileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn i32(&mut self) -> Result<i32, ModelFileError> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, ModelFileError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
