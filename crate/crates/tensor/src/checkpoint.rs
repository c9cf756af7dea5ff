//! Self-describing binary checkpoint.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        4 bytes  "MMTC"
//! version      u32
//! meta_len     u32, then meta_len bytes of UTF-8 metadata (JSON by convention)
//! count        u32
//! count × entry:
//!   name_len   u32, then name bytes (UTF-8)
//!   ndim       u32, then ndim × u32 dimensions
//!   dtype      u8   (0 = f32, 1 = f64)
//!   payload    product(dims) × dtype size, little-endian
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::params::ParamStore;
use crate::real::{DType, Real};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"MMTC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl AnyTensor {
    pub fn shape(&self) -> &[usize] {
        match self {
            AnyTensor::F32(t) => t.shape(),
            AnyTensor::F64(t) => t.shape(),
        }
    }

    pub fn dtype(&self) -> DType {
        match self {
            AnyTensor::F32(_) => DType::F32,
            AnyTensor::F64(_) => DType::F64,
        }
    }

    pub fn to_real<F: Real>(&self) -> Tensor<F> {
        match self {
            AnyTensor::F32(t) => t.cast(),
            AnyTensor::F64(t) => t.cast(),
        }
    }

    pub fn from_real<F: Real>(t: &Tensor<F>) -> Self {
        match F::DTYPE {
            DType::F32 => AnyTensor::F32(t.cast()),
            DType::F64 => AnyTensor::F64(t.cast()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub metadata: String,
    pub tensors: Vec<(String, AnyTensor)>,
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_string(r: &mut impl Read, len: usize) -> Result<String> {
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| TensorError::Format(format!("invalid UTF-8: {e}")))
}

fn payload<F: Real>(t: &Tensor<F>, out: &mut Vec<u8>) {
    for &v in t.data() {
        v.write_le(out);
    }
}

fn decode<F: Real>(shape: Vec<usize>, bytes: &[u8]) -> Result<Tensor<F>> {
    let size = F::DTYPE.size();
    let data = bytes.chunks_exact(size).map(F::read_le).collect();
    Tensor::new(shape, data)
}

impl Checkpoint {
    pub fn new(metadata: impl Into<String>) -> Self {
        Self {
            metadata: metadata.into(),
            tensors: Vec::new(),
        }
    }

    pub fn push<F: Real>(&mut self, name: impl Into<String>, t: &Tensor<F>) {
        self.tensors.push((name.into(), AnyTensor::from_real(t)));
    }

    /// Every parameter of `store`, in registration order.
    pub fn from_store<F: Real>(store: &ParamStore<F>, metadata: impl Into<String>) -> Self {
        let mut ck = Self::new(metadata);
        for (_, name, t) in store.iter() {
            ck.push(name, t);
        }
        ck
    }

    pub fn get(&self, name: &str) -> Option<&AnyTensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Copies matching tensors into `store`. Every store parameter must be
    /// present with the same shape.
    pub fn load_into<F: Real>(&self, store: &mut ParamStore<F>) -> Result<()> {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let name = store.name(id).to_string();
            let t = self
                .get(&name)
                .ok_or_else(|| TensorError::Format(format!("checkpoint lacks tensor {name}")))?;
            store.set(id, t.to_real())?;
        }
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.metadata.len() as u32).to_le_bytes());
        out.extend_from_slice(self.metadata.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            out.push(t.dtype().tag());
            match t {
                AnyTensor::F32(t) => payload(t, &mut out),
                AnyTensor::F64(t) => payload(t, &mut out),
            }
        }
        w.write_all(&out)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(TensorError::Format("bad magic".into()));
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(TensorError::Format(format!("unsupported format version {version}")));
        }
        let meta_len = read_u32(r)? as usize;
        let metadata = read_string(r, meta_len)?;
        let count = read_u32(r)? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = read_u32(r)? as usize;
            let name = read_string(r, name_len)?;
            let ndim = read_u32(r)? as usize;
            let shape = (0..ndim).map(|_| read_u32(r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let mut tag = [0u8; 1];
            r.read_exact(&mut tag)?;
            let dtype = DType::from_tag(tag[0])
                .ok_or_else(|| TensorError::Format(format!("unknown dtype tag {}", tag[0])))?;
            let n: usize = shape.iter().product();
            let mut bytes = vec![0u8; n * dtype.size()];
            r.read_exact(&mut bytes)?;
            let t = match dtype {
                DType::F32 => AnyTensor::F32(decode(shape, &bytes)?),
                DType::F64 => AnyTensor::F64(decode(shape, &bytes)?),
            };
            tensors.push((name, t));
        }
        Ok(Self { metadata, tensors })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut &bytes[..])
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(matches!(Checkpoint::from_bytes(b"XXXX"), Err(TensorError::Format(_))));
        let mut ck = Checkpoint::new("{}");
        ck.push("w", &Tensor::<f32>::ones(&[2, 2]));
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
