//! Model files: `LYRM`, `u32` version, `u32` layer count, then per layer a
//! `u32`-length-prefixed UTF-8 name, a `u32` tensor count and, per tensor,
//! `u32` rank, `u32` dims and the raw little-endian `f64` values.

use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

use super::tensor::Tensor;

pub const MODEL_MAGIC: &[u8; 4] = b"LYRM";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SavedLayer {
    pub name: String,
    pub tensors: Vec<Tensor>,
}

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a model file")]
    Magic,
    #[error("unsupported model version {0}")]
    Version(u32),
    #[error("{0}")]
    Corrupt(String),
}

pub fn write_model<W: Write>(layers: &[SavedLayer], mut out: W) -> io::Result<()> {
    out.write_all(MODEL_MAGIC)?;
    out.write_u32::<LittleEndian>(MODEL_VERSION)?;
    out.write_u32::<LittleEndian>(layers.len() as u32)?;
    for l in layers {
        out.write_u32::<LittleEndian>(l.name.len() as u32)?;
        out.write_all(l.name.as_bytes())?;
        out.write_u32::<LittleEndian>(l.tensors.len() as u32)?;
        for t in &l.tensors {
            out.write_u32::<LittleEndian>(t.shape.len() as u32)?;
            for &d in &t.shape {
                out.write_u32::<LittleEndian>(d as u32)?;
            }
            for &v in &t.data {
                out.write_f64::<LittleEndian>(v)?;
            }
        }
    }
    out.flush()
}

pub fn read_model<R: Read>(mut r: R) -> Result<Vec<SavedLayer>, ContainerError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(ContainerError::Magic);
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != MODEL_VERSION {
        return Err(ContainerError::Version(version));
    }
    let count = r.read_u32::<LittleEndian>()?;
    let mut layers = Vec::new();
    for _ in 0..count {
        let len = r.read_u32::<LittleEndian>()? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| ContainerError::Corrupt("layer name is not UTF-8".into()))?;
        let nt = r.read_u32::<LittleEndian>()?;
        let mut tensors = Vec::new();
        for _ in 0..nt {
            let rank = r.read_u32::<LittleEndian>()? as usize;
            let shape = (0..rank).map(|_| r.read_u32::<LittleEndian>().map(|d| d as usize)).collect::<io::Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let mut data = vec![0.0; n];
            r.read_f64_into::<LittleEndian>(&mut data)?;
            tensors.push(Tensor { shape, data });
        }
        layers.push(SavedLayer { name, tensors });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(ContainerError::Corrupt("trailing bytes after the last layer".into()));
    }
    Ok(layers)
}
