//! `AVI1` tensor files: magic, u32 dtype tag, u32 rank, u32 dims, then the
//! little-endian payload.

use std::path::Path;

use super::PipelineError;
use crate::neural::{Dtype, Real, Tensor};

pub const MAGIC: &[u8; 4] = b"AVI1";

pub fn encode_tensor<R: Real>(t: &Tensor<R>, out: &mut Vec<u8>) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&R::DTYPE.tag().to_le_bytes());
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(out);
    }
}

/// Tensor of either precision.
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

    pub fn cast<R: Real>(&self) -> Tensor<R> {
        match self {
            AnyTensor::F32(t) => t.cast(),
            AnyTensor::F64(t) => t.cast(),
        }
    }
}

fn u32_at(b: &[u8], pos: &mut usize) -> Result<u32, PipelineError> {
    let s = b
        .get(*pos..*pos + 4)
        .ok_or_else(|| PipelineError::Format("truncated tensor header".into()))?;
    *pos += 4;
    Ok(u32::from_le_bytes(s.try_into().expect("4 bytes")))
}

fn payload<R: Real>(b: &[u8], shape: Vec<usize>) -> Result<Tensor<R>, PipelineError> {
    let size = R::DTYPE.size();
    let data = b.chunks_exact(size).map(R::read_le).collect();
    Tensor::new(shape, data).map_err(|e| PipelineError::Format(e.to_string()))
}

/// Decodes one tensor starting at `*pos` and advances past it.
pub fn decode_tensor(b: &[u8], pos: &mut usize) -> Result<AnyTensor, PipelineError> {
    if b.get(*pos..*pos + 4) != Some(MAGIC.as_slice()) {
        return Err(PipelineError::Format("missing AVI1 magic".into()));
    }
    *pos += 4;
    let tag = u32_at(b, pos)?;
    let dtype = Dtype::from_tag(tag).ok_or_else(|| PipelineError::Format(format!("unknown dtype tag {tag}")))?;
    let rank = u32_at(b, pos)? as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(u32_at(b, pos)? as usize);
    }
    let count: usize = shape.iter().product();
    let bytes = count
        .checked_mul(dtype.size())
        .ok_or_else(|| PipelineError::Format("tensor size overflows".into()))?;
    let body = b
        .get(*pos..*pos + bytes)
        .ok_or_else(|| PipelineError::Format(format!("payload shorter than {bytes} bytes")))?;
    *pos += bytes;
    Ok(match dtype {
        Dtype::F32 => AnyTensor::F32(payload(body, shape)?),
        Dtype::F64 => AnyTensor::F64(payload(body, shape)?),
    })
}

pub fn write_tensor<R: Real>(path: &Path, t: &Tensor<R>) -> Result<(), PipelineError> {
    let mut out = Vec::with_capacity(16 + t.len() * R::DTYPE.size());
    encode_tensor(t, &mut out);
    std::fs::write(path, out).map_err(|e| PipelineError::io(path, e))
}

/// Reads a whole file that must hold exactly one tensor.
pub fn read_tensor(path: &Path) -> Result<AnyTensor, PipelineError> {
    let b = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    let mut pos = 0;
    let t = decode_tensor(&b, &mut pos).map_err(|e| PipelineError::Format(format!("{}: {e}", path.display())))?;
    if pos != b.len() {
        return Err(PipelineError::Format(format!(
            "{}: {} trailing bytes",
            path.display(),
            b.len() - pos
        )));
    }
    Ok(t)
}
