// Copyright 2026 The closnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Binary model checkpoints.
//!
//! All integers are little-endian. A file is
//!
//! ```text
//! magic      8 bytes  "CLOSCKPT"
//! version    u32      1
//! precision  u8       4 (f32) or 8 (f64)
//! layers     u32
//! layer*     (below)
//! ```
//!
//! and each layer is
//!
//! ```text
//! kind       u8       0 dense, 1 low-rank, 2 pruned, 3 Clos
//! seed       u64
//! shape      dense:    inputs u64, outputs u64, has_bias u8
//!            low-rank: inputs u64, outputs u64, rank u64
//!            pruned:   inputs u64, outputs u64, density f64, nnz u64,
//!                      row_ptr (inputs + 1) x u64, columns nnz x u32
//!            Clos:     I, O, R_i, R_m, R_o as u64, activation u8 (0 none, 1 relu)
//! tensors    u32 count, then per tensor: length u64, values
//! ```
//!
//! Tensors follow [`Layer::params`] order and values are raw IEEE-754 bits,
//! so a save/load round trip is bit-exact. Trailing bytes are rejected.

use std::path::Path;

use crate::error::{Error, Result};
use crate::layers::{
    Activation, ClosLayer, DenseLayer, InitRule, Layer, LowRankLayer, PruneMask, PrunedLayer,
};
use crate::scalar::Scalar;
use crate::topology::ClosSpec;
use crate::train::Model;

pub const MAGIC: &[u8; 8] = b"CLOSCKPT";
pub const VERSION: u32 = 1;

const KIND_DENSE: u8 = 0;
const KIND_LOWRANK: u8 = 1;
const KIND_PRUNED: u8 = 2;
const KIND_CLOS: u8 = 3;

fn put_u64(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}

pub fn encode<T: Scalar>(model: &Model<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(T::BYTES as u8);
    out.extend_from_slice(&(model.layers().len() as u32).to_le_bytes());
    for layer in model.layers() {
        match layer {
            Layer::Dense(l) => {
                out.push(KIND_DENSE);
                out.extend_from_slice(&l.seed.to_le_bytes());
                put_u64(&mut out, l.inputs());
                put_u64(&mut out, l.outputs());
                out.push(l.bias.is_some() as u8);
            }
            Layer::LowRank(l) => {
                out.push(KIND_LOWRANK);
                out.extend_from_slice(&l.seed.to_le_bytes());
                put_u64(&mut out, l.inputs());
                put_u64(&mut out, l.outputs());
                put_u64(&mut out, l.rank());
            }
            Layer::Pruned(l) => {
                out.push(KIND_PRUNED);
                out.extend_from_slice(&l.seed.to_le_bytes());
                put_u64(&mut out, l.inputs());
                put_u64(&mut out, l.outputs());
                out.extend_from_slice(&l.density.to_le_bytes());
                put_u64(&mut out, l.mask.nnz());
                for &p in l.mask.row_ptr() {
                    put_u64(&mut out, p);
                }
                for &c in l.mask.col_indices() {
                    out.extend_from_slice(&c.to_le_bytes());
                }
            }
            Layer::Clos(l) => {
                out.push(KIND_CLOS);
                out.extend_from_slice(&l.seed.to_le_bytes());
                for v in l.spec().spec().as_array() {
                    put_u64(&mut out, v);
                }
                out.push(l.activation().code());
            }
        }
        let params = layer.params();
        out.extend_from_slice(&(params.len() as u32).to_le_bytes());
        for p in params {
            put_u64(&mut out, p.len());
            for &v in p {
                v.write_le(&mut out);
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
        let end =
            end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    /// A size field, bounded by the bytes left so corrupt files cannot
    /// trigger huge allocations.
    fn len(&mut self, elem_bytes: usize) -> Result<usize> {
        let v = self.u64()?;
        let left = (self.bytes.len() - self.pos) as u64;
        if v.saturating_mul(elem_bytes as u64) > left {
            return Err(Error::Checkpoint(format!("size field {v} exceeds file")));
        }
        Ok(v as usize)
    }

    fn dim(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v)
            .ok()
            .filter(|&d| d > 0 && d <= u32::MAX as usize)
            .ok_or_else(|| Error::Checkpoint(format!("bad dimension {v}")))
    }
}

/// Precision byte of an encoded checkpoint, after checking magic and version.
pub fn precision_bytes(bytes: &[u8]) -> Result<usize> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    match r.u8()? {
        b @ (4 | 8) => Ok(b as usize),
        b => Err(Error::Checkpoint(format!("bad precision byte {b}"))),
    }
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<Model<T>> {
    let precision = precision_bytes(bytes)?;
    if precision != T::BYTES {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {}-byte values, requested {}",
            precision,
            T::NAME
        )));
    }
    let mut r = Reader { bytes, pos: 13 };
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let kind = r.u8()?;
        let seed = r.u64()?;
        let mut layer: Layer<T> = match kind {
            KIND_DENSE => {
                let (i, o) = (r.dim()?, r.dim()?);
                let bias = match r.u8()? {
                    0 => false,
                    1 => true,
                    b => return Err(Error::Checkpoint(format!("bad bias flag {b}"))),
                };
                check_size(&r, i.saturating_mul(o))?;
                let mut l = DenseLayer::new(i, o, bias, 0);
                l.seed = seed;
                l.into()
            }
            KIND_LOWRANK => {
                let (i, o, k) = (r.dim()?, r.dim()?, r.dim()?);
                check_size(&r, k.saturating_mul(i.saturating_add(o)))?;
                let mut l = LowRankLayer::new(i, o, k, 0);
                l.seed = seed;
                l.into()
            }
            KIND_PRUNED => {
                let (i, o) = (r.dim()?, r.dim()?);
                let density = f64::from_bits(r.u64()?);
                if !(density > 0.0 && density <= 1.0) {
                    return Err(Error::InvalidDensity(density));
                }
                let nnz = r.len(4)?;
                check_size(&r, i.saturating_add(1).saturating_mul(8))?;
                let row_ptr = (0..=i)
                    .map(|_| r.u64().map(|v| v as usize))
                    .collect::<Result<Vec<_>>>()?;
                let cols = (0..nnz).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
                let mask = PruneMask::from_parts(i, o, row_ptr, cols)?;
                let values = vec![T::ZERO; mask.nnz()];
                PrunedLayer::from_parts(mask, values, density, seed)?.into()
            }
            KIND_CLOS => {
                let mut f = [0usize; 5];
                for v in &mut f {
                    *v = r.dim()?;
                }
                let spec = ClosSpec::new(f[0], f[1], f[2], f[3], f[4]).validate()?;
                check_size(&r, spec.param_count())?;
                let code = r.u8()?;
                let act = Activation::from_code(code)
                    .ok_or_else(|| Error::Checkpoint(format!("bad activation code {code}")))?;
                ClosLayer::new(&spec, InitRule::Constant(0.0), seed, act).into()
            }
            k => return Err(Error::Checkpoint(format!("unknown layer kind {k}"))),
        };
        let tensors = r.u32()? as usize;
        let mut params = layer.params_mut();
        if tensors != params.len() {
            return Err(Error::Checkpoint(format!(
                "layer has {} tensors, file has {tensors}",
                params.len()
            )));
        }
        for p in params.iter_mut() {
            let len = r.len(T::BYTES)?;
            if len != p.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor length {len}, expected {}",
                    p.len()
                )));
            }
            let raw = r.take(len * T::BYTES)?;
            for (dst, chunk) in p.iter_mut().zip(raw.chunks_exact(T::BYTES)) {
                *dst = T::read_le(chunk);
            }
        }
        layers.push(layer);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Model::new(layers)
}

/// Rejects shapes whose weights could not possibly fit in the rest of the
/// file, before anything is allocated.
fn check_size(r: &Reader<'_>, weights: usize) -> Result<()> {
    if weights > r.bytes.len() - r.pos {
        return Err(Error::Checkpoint(format!(
            "shape with {weights} weights exceeds file"
        )));
    }
    Ok(())
}

pub fn save<T: Scalar>(model: &Model<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode(model))?;
    Ok(())
}

pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<Model<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    decode(&bytes)
}
