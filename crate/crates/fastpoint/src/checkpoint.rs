//! Model checkpoint container: config as structured text plus named f32
//! parameter/state blobs and training state (epoch, optimizer moments).
//!
//! Layout, all little-endian: ASCII magic `FPNN-CKPT-1`; length-prefixed JSON
//! config; parameter blobs; state blobs (batch-norm statistics); epoch; an
//! optional Adam section (step counter plus first/second moments in
//! parameter order); the training seed.

use std::path::Path;

use crate::data::ByteReader;
use crate::error::{Error, Result};
use crate::models::ModelConfig;
use crate::tensor::{ParamSet, Tensor};

pub const CKPT_MAGIC: &[u8; 11] = b"FPNN-CKPT-1";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamBlob {
    pub step: u64,
    /// First and second moments, aligned with the parameter blob order.
    pub m: Vec<NamedTensor>,
    pub v: Vec<NamedTensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: Vec<NamedTensor>,
    pub state: Vec<NamedTensor>,
    /// Completed training epochs.
    pub epoch: u32,
    pub optimizer: Option<AdamBlob>,
    pub seed: u64,
}

fn write_blob(out: &mut Vec<u8>, t: &NamedTensor) {
    out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
    out.extend_from_slice(t.name.as_bytes());
    out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
    for &d in &t.shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_blob(r: &mut ByteReader<'_>) -> Result<NamedTensor> {
    let name_len = r.u32("blob name length")? as usize;
    let name = String::from_utf8(r.take(name_len, "blob name")?.to_vec())
        .map_err(|_| Error::data(r.pos, "blob name is not UTF-8".to_string()))?;
    let rank = r.u32("blob rank")? as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(r.u32("blob dim")? as usize);
    }
    let numel: usize = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    for _ in 0..numel {
        data.push(r.f32("blob value")?);
    }
    Ok(NamedTensor { name, shape, data })
}

fn write_blobs(out: &mut Vec<u8>, blobs: &[NamedTensor]) {
    out.extend_from_slice(&(blobs.len() as u32).to_le_bytes());
    for b in blobs {
        write_blob(out, b);
    }
}

fn read_blobs(r: &mut ByteReader<'_>) -> Result<Vec<NamedTensor>> {
    let count = r.u32("blob count")? as usize;
    let mut blobs = Vec::with_capacity(count);
    for _ in 0..count {
        blobs.push(read_blob(r)?);
    }
    Ok(blobs)
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CKPT_MAGIC);
        let config = serde_json::to_string(&self.config).expect("config serializes");
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(config.as_bytes());
        write_blobs(&mut out, &self.params);
        write_blobs(&mut out, &self.state);
        out.extend_from_slice(&self.epoch.to_le_bytes());
        match &self.optimizer {
            None => out.push(0),
            Some(adam) => {
                out.push(1);
                out.extend_from_slice(&adam.step.to_le_bytes());
                write_blobs(&mut out, &adam.m);
                write_blobs(&mut out, &adam.v);
            }
        }
        out.extend_from_slice(&self.seed.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let mut r = ByteReader::new(bytes);
        if r.take(CKPT_MAGIC.len(), "magic")? != CKPT_MAGIC {
            return Err(Error::data(0, "bad magic, not a checkpoint file".to_string()));
        }
        let config_len = r.u32("config length")? as usize;
        let config_bytes = r.take(config_len, "config json")?;
        let config: ModelConfig = serde_json::from_slice(config_bytes)
            .map_err(|e| Error::data(r.pos, format!("config json: {e}")))?;
        let params = read_blobs(&mut r)?;
        let state = read_blobs(&mut r)?;
        let epoch = r.u32("epoch")?;
        let has_opt = r.take(1, "optimizer flag")?[0];
        let optimizer = match has_opt {
            0 => None,
            1 => {
                let step_bytes = r.take(8, "adam step")?;
                let step = u64::from_le_bytes(step_bytes.try_into().unwrap());
                let m = read_blobs(&mut r)?;
                let v = read_blobs(&mut r)?;
                Some(AdamBlob { step, m, v })
            }
            other => {
                return Err(Error::data(
                    r.pos - 1,
                    format!("bad optimizer flag {other}"),
                ))
            }
        };
        let seed_bytes = r.take(8, "seed")?;
        let seed = u64::from_le_bytes(seed_bytes.try_into().unwrap());
        if (r.pos as usize) != bytes.len() {
            return Err(Error::data(
                r.pos,
                format!("{} trailing bytes after checkpoint", bytes.len() - r.pos as usize),
            ));
        }
        Ok(Checkpoint {
            config,
            params,
            state,
            epoch,
            optimizer,
            seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_bytes())
            .map_err(|e| Error::io(format!("writing checkpoint {}", path.as_ref().display()), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let bytes = std::fs::read(path.as_ref()).map_err(|e| {
            Error::io(format!("reading checkpoint {}", path.as_ref().display()), e)
        })?;
        Self::from_bytes(&bytes)
    }
}

/// Snapshots a parameter set into (parameter, state) blob lists.
pub fn capture_params(params: &ParamSet<f32>) -> (Vec<NamedTensor>, Vec<NamedTensor>) {
    let p = params
        .iter()
        .map(|p| NamedTensor {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            data: p.value.data().to_vec(),
        })
        .collect();
    let s = params
        .iter_state()
        .map(|(name, t)| NamedTensor {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            data: t.data().to_vec(),
        })
        .collect();
    (p, s)
}

/// Writes blob values back into a freshly initialized parameter set; every
/// blob must match an existing entry by name and shape, and cover all of
/// them.
pub fn restore_params(
    params: &mut ParamSet<f32>,
    blobs: &[NamedTensor],
    state: &[NamedTensor],
) -> Result<()> {
    if blobs.len() != params.len() {
        return Err(Error::Checkpoint(format!(
            "parameter count mismatch: checkpoint has {}, model expects {}",
            blobs.len(),
            params.len()
        )));
    }
    for blob in blobs {
        let id = params.lookup(&blob.name).ok_or_else(|| {
            Error::Checkpoint(format!("unknown parameter '{}' in checkpoint", blob.name))
        })?;
        let t = Tensor::from_vec(blob.shape.clone(), blob.data.clone())?;
        params.set_value(id, t).map_err(|_| {
            Error::Checkpoint(format!(
                "shape mismatch for parameter '{}': checkpoint {:?}",
                blob.name, blob.shape
            ))
        })?;
    }
    for blob in state {
        let id = params.lookup_state(&blob.name).ok_or_else(|| {
            Error::Checkpoint(format!("unknown state '{}' in checkpoint", blob.name))
        })?;
        let t = Tensor::from_vec(blob.shape.clone(), blob.data.clone())?;
        if params.state(id).shape() != t.shape() {
            return Err(Error::Checkpoint(format!(
                "shape mismatch for state '{}': checkpoint {:?}",
                blob.name, blob.shape
            )));
        }
        *params.state_mut(id) = t;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Classifier, ClassifierConfig};

    fn sample_checkpoint() -> Checkpoint {
        let cfg = ClassifierConfig::scaled(32, 4);
        let model = Classifier::<f32>::init(cfg.clone(), 5).unwrap();
        let (params, state) = capture_params(&model.params);
        Checkpoint {
            config: ModelConfig::Classifier(cfg),
            params,
            state,
            epoch: 3,
            optimizer: None,
            seed: 42,
        }
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let ckpt = sample_checkpoint();
        let bytes = ckpt.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn restore_round_trips_parameter_values() {
        let cfg = ClassifierConfig::scaled(32, 4);
        let model = Classifier::<f32>::init(cfg.clone(), 5).unwrap();
        let (params, state) = capture_params(&model.params);

        let mut fresh = Classifier::<f32>::init(cfg, 999).unwrap();
        assert_ne!(
            fresh.params.get(fresh.params.lookup("enc1.0.w").unwrap()).value,
            model.params.get(model.params.lookup("enc1.0.w").unwrap()).value
        );
        restore_params(&mut fresh.params, &params, &state).unwrap();
        for (a, b) in fresh.params.iter().zip(model.params.iter()) {
            assert_eq!(a.value, b.value, "{}", a.name);
        }
    }

    #[test]
    fn bad_magic_and_truncation_are_data_errors() {
        let mut bytes = sample_checkpoint().to_bytes();
        bytes[3] = b'?';
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::Data { .. })
        ));

        let bytes = sample_checkpoint().to_bytes();
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Data { .. })
        ));
    }

    #[test]
    fn restore_rejects_mismatched_model() {
        let ckpt = sample_checkpoint();
        let other = Classifier::<f32>::init(ClassifierConfig::scaled(32, 7), 1).unwrap();
        let mut params = other.params;
        assert!(matches!(
            restore_params(&mut params, &ckpt.params, &ckpt.state),
            Err(Error::Checkpoint(_))
        ));
    }
}
