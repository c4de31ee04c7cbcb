//! Self-describing JSON checkpoints.
//!
//! Floats are written in shortest round-trip form and parsed exactly, so a
//! loaded model reproduces the saved one bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Model;
use crate::error::{Error, Result};
use crate::nn::Parameterized;
use crate::rng::RngState;

pub const CHECKPOINT_FORMAT: &str = "cic-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    model: Model,
}

pub fn checkpoint_to_string(model: &Model) -> Result<String> {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        model: model.clone(),
    };
    serde_json::to_string(&file).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn checkpoint_from_str(text: &str) -> Result<Model> {
    let file: CheckpointFile =
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!(
            "unexpected format `{}`",
            file.format
        )));
    }
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {} (this build reads {CHECKPOINT_VERSION})",
            file.version
        )));
    }
    check_structure(&file.model)?;
    Ok(file.model)
}

/// A checkpoint must have exactly the parameter shapes its spec builds.
fn check_structure(model: &Model) -> Result<()> {
    let reference = Model::build(model.spec(), &mut RngState::new(0))?;
    let got: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
    let want: Vec<usize> = reference.params().iter().map(|p| p.len()).collect();
    let layer_names = |m: &Model| -> Vec<&'static str> {
        m.encoder()
            .layers()
            .iter()
            .chain(m.trunk().layers())
            .map(|l| l.name())
            .collect()
    };
    if got != want || layer_names(model) != layer_names(&reference) {
        return Err(Error::Checkpoint(
            "parameter shapes do not match the stored network spec".into(),
        ));
    }
    Ok(())
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, checkpoint_to_string(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_str(&text)
}
