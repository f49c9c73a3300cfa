//! Binary checkpoint container.
//!
//! ```text
//! "NACK" | u16 version | u32 n | n bytes JSON config
//! u32 tensors, then per tensor:
//!   u16 name_len | name | u8 ndim | u32 dims[ndim] | f32 LE data (row-major)
//! ```

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

use super::{Model, ModelConfig, ModelError, Params};
use crate::Scalar;

pub const CHECKPOINT_VERSION: u16 = 1;
const MAGIC: &[u8; 4] = b"NACK";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint: {0}")]
    Format(String),
    #[error("config: {0}")]
    Config(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub fn save_checkpoint<T: Scalar, W: Write>(model: &Model<T>, mut w: W) -> Result<(), CheckpointError> {
    w.write_all(MAGIC)?;
    w.write_u16::<LittleEndian>(CHECKPOINT_VERSION)?;
    let cfg = serde_json::to_vec(&model.config)?;
    w.write_u32::<LittleEndian>(cfg.len() as u32)?;
    w.write_all(&cfg)?;
    let tensors = model.params.tensors();
    w.write_u32::<LittleEndian>(tensors.len() as u32)?;
    for (name, a) in tensors {
        w.write_u16::<LittleEndian>(name.len() as u16)?;
        w.write_all(name.as_bytes())?;
        w.write_u8(a.ndim() as u8)?;
        for &d in a.shape() {
            w.write_u32::<LittleEndian>(d as u32)?;
        }
        for &v in a.iter() {
            w.write_f32::<LittleEndian>(v.as_f64() as f32)?;
        }
    }
    Ok(())
}

pub fn load_checkpoint<T: Scalar, R: Read>(mut r: R) -> Result<Model<T>, CheckpointError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::Format("bad magic".into()));
    }
    let version = r.read_u16::<LittleEndian>()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Format(format!("unsupported version {version}")));
    }
    let n = r.read_u32::<LittleEndian>()? as usize;
    let mut cfg = vec![0u8; n];
    r.read_exact(&mut cfg)?;
    let config: ModelConfig = serde_json::from_slice(&cfg)?;
    config.validate()?;
    let mut params = Params::<T>::init(&config);
    let count = r.read_u32::<LittleEndian>()? as usize;
    let mut slots = params.tensors_mut();
    if count != slots.len() {
        return Err(CheckpointError::Format(format!(
            "{count} tensors stored, configuration has {}",
            slots.len()
        )));
    }
    for (expected_name, slot) in slots.iter_mut() {
        let len = r.read_u16::<LittleEndian>()? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| CheckpointError::Format(e.to_string()))?;
        if &name != expected_name {
            return Err(CheckpointError::Format(format!(
                "expected tensor {expected_name}, found {name}"
            )));
        }
        let ndim = r.read_u8()? as usize;
        let dims = (0..ndim)
            .map(|_| r.read_u32::<LittleEndian>().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        if dims != slot.shape() {
            return Err(CheckpointError::Format(format!(
                "tensor {name} has shape {dims:?}, expected {:?}",
                slot.shape()
            )));
        }
        for v in slot.iter_mut() {
            let x = r.read_f32::<LittleEndian>()?;
            if !x.is_finite() {
                return Err(CheckpointError::Format(format!("non-finite value in {name}")));
            }
            *v = T::lit(f64::from(x));
        }
    }
    drop(slots);
    Ok(Model::from_parts(config, params)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            embed_dim: 8,
            snn_neurons: 8,
            num_heads: 2,
            num_layers: 1,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn round_trip_is_exact_for_f32() {
        let m = Model::<f32>::new(small()).unwrap();
        let mut buf = Vec::new();
        save_checkpoint(&m, &mut buf).unwrap();
        let back: Model<f32> = load_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back.config, m.config);
        assert_eq!(back.params, m.params);
    }

    #[test]
    fn rejects_corruption() {
        let m = Model::<f64>::new(small()).unwrap();
        let mut buf = Vec::new();
        save_checkpoint(&m, &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(load_checkpoint::<f64, _>(bad.as_slice()).is_err());
        buf.truncate(buf.len() - 3);
        assert!(load_checkpoint::<f64, _>(buf.as_slice()).is_err());
    }
}
