//! Binary model files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! b"CUPMLP1"                       magic + format version
//! u32 L, then L × u32             layer sizes
//! u8                              input mode: 0 raw, 1 standardized
//! [f64; n_in] mean, [f64; n_in] std   only when standardized
//! f64 × param_count               per layer: weights (out, in) row-major, then biases
//! ```
//!
//! Every saved model from the CLI also gets a `<file>.json` sidecar with the
//! training configuration and final metrics.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{param_count, InputMode, Mlp, TrainConfig, TrainHistory};
use crate::dataset::FeatureStats;
use crate::sensor::CHAMBERS;
use crate::{Error, Result};

pub const MAGIC: &[u8; 7] = b"CUPMLP1";

pub fn model_to_bytes(model: &Mlp) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 8 * model.params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(model.layer_sizes.len() as u32).to_le_bytes());
    for &n in &model.layer_sizes {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    match &model.input_mode {
        InputMode::Raw => out.push(0),
        InputMode::Standardized(stats) => {
            out.push(1);
            for x in stats.mean.iter().chain(&stats.std) {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    for p in &model.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.bytes.len())
            .ok_or_else(|| Error::ModelFormat(format!("truncated while reading {what}")))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<Mlp> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(MAGIC.len(), "magic")?;
    if magic != MAGIC {
        if magic.starts_with(b"CUPMLP") {
            return Err(Error::ModelFormat(format!(
                "unsupported format version '{}'",
                magic[6] as char
            )));
        }
        return Err(Error::ModelFormat("not a model file (bad magic)".into()));
    }

    let n_sizes = cur.u32("layer count")? as usize;
    if !(2..=64).contains(&n_sizes) {
        return Err(Error::ModelFormat(format!("implausible layer count {n_sizes}")));
    }
    let mut sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        let n = cur.u32("layer size")? as usize;
        if n == 0 || n > 1 << 16 {
            return Err(Error::ModelFormat(format!("implausible layer size {n}")));
        }
        sizes.push(n);
    }

    let input_mode = match cur.take(1, "input mode")?[0] {
        0 => InputMode::Raw,
        1 => {
            if sizes[0] != CHAMBERS {
                return Err(Error::ModelFormat(format!(
                    "standardized model must have {CHAMBERS} inputs, has {}",
                    sizes[0]
                )));
            }
            let mut mean = [0.0; CHAMBERS];
            let mut std = [0.0; CHAMBERS];
            for m in &mut mean {
                *m = cur.f64("feature mean")?;
            }
            for s in &mut std {
                *s = cur.f64("feature std")?;
            }
            let stats = FeatureStats::new(mean, std)
                .map_err(|e| Error::ModelFormat(format!("feature statistics: {e}")))?;
            InputMode::Standardized(stats)
        }
        other => return Err(Error::ModelFormat(format!("unknown input mode {other}"))),
    };

    let n_params = param_count(&sizes);
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        params.push(cur.f64("parameters")?);
    }
    if cur.pos != bytes.len() {
        return Err(Error::ModelFormat(format!(
            "{} trailing bytes after parameters (shape mismatch?)",
            bytes.len() - cur.pos
        )));
    }
    Mlp::from_parts(sizes, params, input_mode).map_err(|e| Error::ModelFormat(e.to_string()))
}

pub fn save_model(model: &Mlp, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Mlp> {
    model_from_bytes(&fs::read(path)?)
}

/// Training metadata written next to a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub format: String,
    pub layer_sizes: Vec<usize>,
    pub train_config: TrainConfig,
    pub train_samples: usize,
    pub val_samples: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub best_val_rmse_deg: Option<f64>,
}

impl ModelSidecar {
    pub fn path_for(model_path: &Path) -> PathBuf {
        let mut name = model_path.as_os_str().to_owned();
        name.push(".json");
        PathBuf::from(name)
    }
}

/// Saves the model and its JSON sidecar; returns the sidecar path.
pub fn save_trained(
    model: &Mlp,
    config: &TrainConfig,
    history: &TrainHistory,
    sizes: (usize, usize),
    path: impl AsRef<Path>,
) -> Result<PathBuf> {
    let path = path.as_ref();
    save_model(model, path)?;
    let best_val_rmse_deg = history
        .best_epoch
        .checked_sub(1)
        .and_then(|i| history.val_rmse_deg.get(i).copied());
    let sidecar = ModelSidecar {
        format: String::from_utf8_lossy(MAGIC).into_owned(),
        layer_sizes: model.layer_sizes.clone(),
        train_config: config.clone(),
        train_samples: sizes.0,
        val_samples: sizes.1,
        epochs_run: history.epochs(),
        best_epoch: history.best_epoch,
        best_val_loss: history.best_val_loss,
        best_val_rmse_deg,
    };
    let sidecar_path = ModelSidecar::path_for(path);
    fs::write(&sidecar_path, serde_json::to_string_pretty(&sidecar)? + "\n")?;
    Ok(sidecar_path)
}
