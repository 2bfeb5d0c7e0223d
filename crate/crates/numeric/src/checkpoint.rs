//! Versioned binary container mapping parameter names to shaped tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "TODOCKPT"
//! version    u32      1
//! meta_len   u32      byte length of the metadata block
//! metadata   UTF-8    `key=value` lines, sorted by key
//! count      u32      number of tensors
//! per tensor:
//!   name_len u32, name UTF-8
//!   rank     u32, dims u64 × rank
//!   values   f64 × product(dims)
//! ```
//!
//! Values are stored as raw IEEE-754 bits so a round trip is exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{NumericError, Result};
use crate::params::ParamSet;
use crate::tensor::{checked_numel, Tensor};

pub const MAGIC: &[u8; 8] = b"TODOCKPT";
pub const VERSION: u32 = 1;
const MAX_RANK: usize = 8;

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Checkpoint {
    pub metadata: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor)>,
}

fn format_err(msg: impl Into<String>) -> NumericError {
    NumericError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn from_params(params: &ParamSet, metadata: BTreeMap<String, String>) -> Self {
        let tensors = params
            .iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect();
        Self { metadata, tensors }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Copies every tensor into `params`. Names and shapes must match
    /// exactly, in both directions.
    pub fn load_into(&self, params: &mut ParamSet) -> Result<()> {
        if self.tensors.len() != params.len() {
            return Err(format_err(format!(
                "checkpoint has {} tensors, model expects {}",
                self.tensors.len(),
                params.len()
            )));
        }
        for (name, tensor) in &self.tensors {
            let id = params.id(name)?;
            let slot = params.value_mut(id);
            if slot.shape() != tensor.shape() {
                return Err(format_err(format!(
                    "`{name}` has shape {:?}, model expects {:?}",
                    tensor.shape(),
                    slot.shape()
                )));
            }
            *slot = tensor.clone();
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let mut meta = String::new();
        for (k, v) in &self.metadata {
            meta.push_str(k);
            meta.push('=');
            meta.push_str(v);
            meta.push('\n');
        }
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(format_err("bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(format_err(format!("unsupported version {version}")));
        }
        let meta_len = r.u32()? as usize;
        let meta = std::str::from_utf8(r.take(meta_len)?)
            .map_err(|_| format_err("metadata is not UTF-8"))?;
        let mut metadata = BTreeMap::new();
        for line in meta.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format_err(format!("metadata line without '=': {line:?}")))?;
            metadata.insert(k.to_string(), v.to_string());
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| format_err("tensor name is not UTF-8"))?
                .to_string();
            let rank = r.u32()? as usize;
            if rank > MAX_RANK {
                return Err(format_err(format!("`{name}`: rank {rank} exceeds {MAX_RANK}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let d = usize::try_from(r.u64()?).map_err(|_| format_err("dimension overflows"))?;
                shape.push(d);
            }
            let numel = checked_numel(&shape)
                .filter(|n| n.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| format_err(format!("`{name}`: shape {shape:?} exceeds the file")))?;
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                data.push(f64::from_bits(r.u64()?));
            }
            tensors.push((name, Tensor::new(shape, data)?));
        }
        if r.remaining() != 0 {
            return Err(format_err(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Self { metadata, tensors })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(format_err(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Initializer;

    fn sample() -> Checkpoint {
        let mut ps = ParamSet::new();
        let mut init = Initializer::new(9);
        ps.add_uniform("enc.w", &[3, 4], 0.1, &mut init).unwrap();
        ps.add("bias", Tensor::row(vec![f64::MIN_POSITIVE, -0.0, 1e300])).unwrap();
        let mut meta = BTreeMap::new();
        meta.insert("init".into(), "uniform(-0.1,0.1)".into());
        Checkpoint::from_params(&ps, meta)
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let back = Checkpoint::decode(&ck.encode()).unwrap();
        assert_eq!(back, ck);
        for ((_, a), (_, b)) in ck.tensors.iter().zip(&back.tensors) {
            let bits_a: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn truncation_and_trailing_bytes_fail() {
        let bytes = sample().encode();
        for cut in [0, 7, 12, bytes.len() - 1] {
            assert!(Checkpoint::decode(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::decode(&extra).is_err());
    }

    #[test]
    fn load_into_checks_shapes() {
        let ck = sample();
        let mut ps = ParamSet::new();
        ps.add_zeros("enc.w", &[3, 4]).unwrap();
        ps.add_zeros("bias", &[1, 3]).unwrap();
        ck.load_into(&mut ps).unwrap();
        assert_eq!(ps.value(ps.id("enc.w").unwrap()), ck.get("enc.w").unwrap());

        let mut wrong = ParamSet::new();
        wrong.add_zeros("enc.w", &[4, 3]).unwrap();
        wrong.add_zeros("bias", &[1, 3]).unwrap();
        assert!(ck.load_into(&mut wrong).is_err());
    }

    #[test]
    fn huge_declared_shape_is_rejected_without_allocating() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        bytes.extend_from_slice(&0u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.push(b'x');
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&u64::MAX.to_le_bytes());
        bytes.extend_from_slice(&u64::MAX.to_le_bytes());
        assert!(Checkpoint::decode(&bytes).is_err());
    }
}
