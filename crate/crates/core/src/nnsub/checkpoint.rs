//! Shared checkpoint container.
//!
//! Layout (all integers little-endian):
//!   magic "BPSE" | version u32 | meta_len u32 | meta JSON bytes |
//!   record count u32 | records
//! One record per parameter, in canonical order:
//!   name_len u32 | name UTF-8 | dtype u8 (0 = f64) | rank u32 |
//!   dims u64 * rank | values f64 * prod(dims)
//! The meta blob echoes the model's architecture config verbatim.

use std::fs;
use std::path::Path;

use super::error::NnError;
use super::params::ParamSet;
use super::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"BPSE";
pub const VERSION: u32 = 1;

const DTYPE_F64: u8 = 0;

/// Serializes `params` with a metadata JSON header.
pub fn save(path: &Path, meta_json: &str, params: &ParamSet) -> Result<(), NnError> {
    fs::write(path, encode(meta_json, params))?;
    Ok(())
}

/// Byte encoding of a checkpoint (exposed for byte-identity checks).
pub fn encode(meta_json: &str, params: &ParamSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
    out.extend_from_slice(meta_json.as_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, tensor) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(DTYPE_F64);
        out.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
        for &d in tensor.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Loads a checkpoint: (metadata JSON, parameters).
pub fn load(path: &Path) -> Result<(String, ParamSet), NnError> {
    let bytes = fs::read(path)?;
    decode(&bytes)
}

pub fn decode(bytes: &[u8]) -> Result<(String, ParamSet), NnError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let meta_len = cur.u32()? as usize;
    let meta = String::from_utf8(cur.take(meta_len)?.to_vec())
        .map_err(|_| NnError::Checkpoint("metadata is not UTF-8".into()))?;
    let count = cur.u32()? as usize;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let name_len = cur.u32()? as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|_| NnError::Checkpoint("parameter name is not UTF-8".into()))?;
        let dtype = cur.u8()?;
        if dtype != DTYPE_F64 {
            return Err(NnError::Checkpoint(format!("unsupported dtype tag {dtype}")));
        }
        let rank = cur.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u64()? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(cur.f64()?);
        }
        params.add(name, Tensor::new(shape, data));
    }
    Ok((meta, params))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(NnError::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, NnError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        let s = self.take(4)?;
        Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        let s = self.take(8)?;
        Ok(u64::from_le_bytes(s.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, NnError> {
        let s = self.take(8)?;
        Ok(f64::from_le_bytes(s.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_names_shapes_and_bits() {
        let mut ps = ParamSet::new();
        ps.add("enc.w", Tensor::new(vec![2, 3], vec![1.5, -0.25, 0.0, 3.25e-8, 1e9, -7.0]));
        ps.add("enc.b", Tensor::new(vec![3], vec![0.1, 0.2, 0.3]));
        ps.add("k", Tensor::new(vec![2, 1, 2], vec![9.0, 8.0, 7.0, 6.0]));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bpse");
        save(&path, r#"{"kind":"test"}"#, &ps).unwrap();
        let (meta, back) = load(&path).unwrap();
        assert_eq!(meta, r#"{"kind":"test"}"#);
        assert_eq!(back, ps);
    }

    #[test]
    fn encoding_is_deterministic() {
        let mut ps = ParamSet::new();
        ps.add("a", Tensor::new(vec![2], vec![1.0, 2.0]));
        assert_eq!(encode("{}", &ps), encode("{}", &ps));
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let mut ps = ParamSet::new();
        ps.add("a", Tensor::new(vec![1], vec![1.0]));
        let mut bytes = encode("{}", &ps);
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(NnError::Checkpoint(_))));
        bytes.truncate(10);
        assert!(decode(&bytes).is_err());
    }
}
