//! Binary model checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "ALTMLP\0\x01"
//! version      u32      = 1
//! scalar_bytes u32      4 (f32) or 8 (f64)
//! n_dims       u32
//! dims         n_dims x u64
//! dropout      f64
//! adam_step    u64
//! tensors      per layer l: W_l (row-major dims[l] x dims[l+1]), b_l
//!              then the same sequence for Adam first moments,
//!              then for Adam second moments
//! ```
//!
//! Tensor entries use `scalar_bytes` each. Loading rejects trailing bytes.

use std::fs;
use std::path::Path;

use super::mlp::{AdamState, MlpModel, ParamSet};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAGIC: [u8; 8] = *b"ALTMLP\0\x01";
pub const VERSION: u32 = 1;

pub fn encode<T: Real>(model: &MlpModel<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&u32::from(T::BYTES).to_le_bytes());
    out.extend_from_slice(&(model.dims().len() as u32).to_le_bytes());
    for &d in model.dims() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.extend_from_slice(&model.dropout().to_le_bytes());
    out.extend_from_slice(&model.adam().step.to_le_bytes());
    for set in [model.params(), &model.adam().first, &model.adam().second] {
        for (w, b) in set.weights.iter().zip(&set.biases) {
            for &v in w.as_slice().iter().chain(b) {
                v.to_le_bytes_vec(&mut out);
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Data(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode<T: Real>(bytes: &[u8]) -> Result<MlpModel<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Data("not a model checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Data(format!("unsupported checkpoint version {version}")));
    }
    let width = r.u32()?;
    if width != u32::from(T::BYTES) {
        return Err(Error::Data(format!(
            "checkpoint stores {width}-byte scalars, loader expects {}",
            T::BYTES
        )));
    }
    let n_dims = r.u32()? as usize;
    if !(2..=64).contains(&n_dims) {
        return Err(Error::Data(format!("implausible layer count {n_dims}")));
    }
    let dims = (0..n_dims)
        .map(|_| r.u64().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let dropout = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
    let step = r.u64()?;
    let width = width as usize;
    let read_set = |r: &mut Reader<'_>| -> Result<ParamSet<T>> {
        let mut set = ParamSet {
            weights: Vec::new(),
            biases: Vec::new(),
        };
        for w in dims.windows(2) {
            let count = w[0].checked_mul(w[1]).ok_or_else(|| Error::Data("layer size overflows".into()))?;
            let raw = r.take(count * width)?;
            let vals = raw.chunks_exact(width).map(T::from_le_slice).collect();
            set.weights.push(DenseMatrix::from_vec(w[0], w[1], vals)?);
            let raw = r.take(w[1] * width)?;
            set.biases.push(raw.chunks_exact(width).map(T::from_le_slice).collect());
        }
        Ok(set)
    };
    let params = read_set(&mut r)?;
    let first = read_set(&mut r)?;
    let second = read_set(&mut r)?;
    if r.pos != bytes.len() {
        return Err(Error::Data(format!("{} trailing bytes in checkpoint", bytes.len() - r.pos)));
    }
    // Validate dims and dropout through the public constructor, then attach state.
    MlpModel::from_params(&dims, params.clone(), dropout)?;
    Ok(MlpModel::from_parts(dims, params, dropout, AdamState { step, first, second }))
}

pub fn save<T: Real>(model: &MlpModel<T>, path: &Path) -> Result<()> {
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load<T: Real>(path: &Path) -> Result<MlpModel<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
