//! IDX files of unsigned bytes (`0x0000_08NN`, `NN` = rank).

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct IdxFile {
    pub dims: Vec<usize>,
    pub payload: Vec<u8>,
}

impl IdxFile {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Idx(format!("file of {} bytes has no header", bytes.len())));
        }
        if bytes[0] != 0 || bytes[1] != 0 || bytes[2] != 0x08 {
            return Err(Error::Idx(format!(
                "bad magic {:02x}{:02x}{:02x}{:02x}; only unsigned-byte data is supported",
                bytes[0], bytes[1], bytes[2], bytes[3]
            )));
        }
        let rank = bytes[3] as usize;
        if rank == 0 {
            return Err(Error::Idx("rank 0".into()));
        }
        let header = 4 + 4 * rank;
        if bytes.len() < header {
            return Err(Error::Idx(format!(
                "header needs {header} bytes, file has {}",
                bytes.len()
            )));
        }
        let dims: Vec<usize> = (0..rank)
            .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize)
            .collect();
        let expected = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Idx(format!("dims {dims:?} overflow")))?;
        let actual = bytes.len() - header;
        if actual != expected {
            return Err(Error::Idx(format!(
                "payload has {actual} bytes, dims {dims:?} need {expected}"
            )));
        }
        Ok(Self {
            dims,
            payload: bytes[header..].to_vec(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0, 0, 0x08, self.dims.len() as u8];
        for d in &self.dims {
            out.extend_from_slice(&(*d as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.payload);
        out
    }

    /// Payload scaled to `[0, 1]` and shaped by `dims`.
    pub fn to_tensor(&self) -> Tensor {
        let data = self.payload.iter().map(|b| *b as f64 / 255.0).collect();
        Tensor::from_vec(&self.dims, data).expect("validated dims")
    }

    /// Quantizes values in `[0, 1]` to bytes.
    pub fn from_tensor(t: &Tensor) -> Self {
        Self {
            dims: t.shape().to_vec(),
            payload: t.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect(),
        }
    }
}

pub fn parse_idx(path: &Path) -> Result<Tensor> {
    Ok(IdxFile::parse(&std::fs::read(path)?)?.to_tensor())
}

/// Raw byte values, for label files.
pub fn parse_idx_labels(path: &Path) -> Result<Vec<u8>> {
    Ok(IdxFile::parse(&std::fs::read(path)?)?.payload)
}

pub fn write_idx(path: &Path, t: &Tensor) -> Result<()> {
    std::fs::write(path, IdxFile::from_tensor(t).to_bytes())?;
    Ok(())
}
