//! Checkpoint persistence.
//!
//! A checkpoint is a directory with a `manifest.json` (configs, epoch log,
//! rng state, parameter table) plus one raw little-endian float64 file per
//! parameter, named after the parameter. Save/load round-trips bit-exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{ModelConfig, MsvaModel};
use crate::rng::RngState;
use crate::tensor::Tensor;

use super::{Checkpoint, EpochLog, TrainConfig, TrainError};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    version: u32,
    model_config: ModelConfig,
    train_config: TrainConfig,
    epoch_log: EpochLog,
    rng: RngState,
    params: Vec<ParamEntry>,
}

fn io_err(path: &Path, source: std::io::Error) -> TrainError {
    TrainError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, dir: &Path) -> Result<(), TrainError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut entries = Vec::new();
    for (name, tensor) in ckpt.model.named_params() {
        let file = format!("{name}.f64");
        let mut bytes = Vec::with_capacity(tensor.numel() * 8);
        for v in tensor.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let path = dir.join(&file);
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        entries.push(ParamEntry {
            name,
            shape: tensor.shape().to_vec(),
            file,
        });
    }
    let manifest = CheckpointManifest {
        version: CHECKPOINT_VERSION,
        model_config: ckpt.model.config().clone(),
        train_config: ckpt.train_config.clone(),
        epoch_log: ckpt.epoch_log.clone(),
        rng: ckpt.rng.clone(),
        params: entries,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let path = dir.join("manifest.json");
    fs::write(&path, json + "\n").map_err(|e| io_err(&path, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint, TrainError> {
    let manifest_path = dir.join("manifest.json");
    let raw = fs::read_to_string(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&raw).map_err(|e| TrainError::Format {
            field: "manifest.json".into(),
            message: e.to_string(),
        })?;
    if manifest.version != CHECKPOINT_VERSION {
        return Err(TrainError::Format {
            field: "version".into(),
            message: format!(
                "incompatible checkpoint version {} (this build reads {})",
                manifest.version, CHECKPOINT_VERSION
            ),
        });
    }

    let mut loaded: BTreeMap<String, Tensor> = BTreeMap::new();
    for entry in &manifest.params {
        let numel: usize = entry.shape.iter().product();
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
        if bytes.len() != numel * 8 {
            return Err(TrainError::Format {
                field: entry.name.clone(),
                message: format!(
                    "array {} holds {} bytes, expected {}",
                    entry.file,
                    bytes.len(),
                    numel * 8
                ),
            });
        }
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let tensor = Tensor::new(entry.shape.clone(), data).map_err(|e| TrainError::Format {
            field: entry.name.clone(),
            message: e.to_string(),
        })?;
        if loaded.insert(entry.name.clone(), tensor).is_some() {
            return Err(TrainError::Format {
                field: entry.name.clone(),
                message: "duplicate parameter entry".into(),
            });
        }
    }

    let mut model = MsvaModel::init(&manifest.model_config, 0)?;
    for (name, slot) in model.named_params_mut() {
        let mut tensor = loaded.remove(&name).ok_or_else(|| TrainError::Format {
            field: name.clone(),
            message: "missing parameter".into(),
        })?;
        if tensor.shape() != slot.shape() {
            return Err(TrainError::Format {
                field: name.clone(),
                message: format!(
                    "shape {:?} does not match expected {:?}",
                    tensor.shape(),
                    slot.shape()
                ),
            });
        }
        tensor.requires_grad = slot.requires_grad;
        *slot = tensor;
    }
    if let Some((name, _)) = loaded.into_iter().next() {
        return Err(TrainError::Format {
            field: name,
            message: "unexpected parameter entry".into(),
        });
    }

    Ok(Checkpoint {
        model,
        train_config: manifest.train_config,
        epoch_log: manifest.epoch_log,
        rng: manifest.rng,
    })
}
