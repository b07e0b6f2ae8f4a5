use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::FittedModel;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope {
    version: u32,
    model: serde_json::Value,
}

pub fn checkpoint_to_json(model: &FittedModel) -> Result<String> {
    let env = Envelope {
        version: CHECKPOINT_VERSION,
        model: serde_json::to_value(model)?,
    };
    Ok(serde_json::to_string_pretty(&env)?)
}

pub fn checkpoint_from_json(text: &str) -> Result<FittedModel> {
    let env: Envelope = serde_json::from_str(text)?;
    if env.version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            expected: CHECKPOINT_VERSION,
            found: env.version,
        });
    }
    let model: FittedModel = serde_json::from_value(env.model)?;
    if model.network.params.len() != model.network.layout.param_count() {
        return Err(Error::Contract(format!(
            "checkpoint holds {} tensors, layout expects {}",
            model.network.params.len(),
            model.network.layout.param_count()
        )));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &FittedModel, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, checkpoint_to_json(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<FittedModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_json(&text)
}
