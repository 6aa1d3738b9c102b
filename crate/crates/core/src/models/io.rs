//! Versioned JSON model files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Model;
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "drivexai-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize)]
struct ModelFileRef<'a> {
    format: &'a str,
    version: u32,
    model: &'a Model,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Deserialize)]
struct ModelFile {
    model: Model,
}

pub fn serialize_model(model: &Model) -> Result<String> {
    Ok(serde_json::to_string(&ModelFileRef {
        format: MODEL_FORMAT,
        version: MODEL_VERSION,
        model,
    })?)
}

/// Parses and validates a model document.
pub fn read_model(text: &str) -> Result<Model> {
    let header: Header = serde_json::from_str(text)
        .map_err(|e| Error::Schema(format!("unreadable model file: {e}")))?;
    if header.format != MODEL_FORMAT {
        return Err(Error::Schema(format!(
            "not a model file (format '{}')",
            header.format
        )));
    }
    if header.version != MODEL_VERSION {
        return Err(Error::Schema(format!(
            "model version {} is not supported (expected {MODEL_VERSION})",
            header.version
        )));
    }
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("invalid model: {e}")))?;
    file.model.validate()?;
    Ok(file.model)
}

pub fn write_model(model: &Model, path: &Path) -> Result<()> {
    let text = serialize_model(model)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_model(&text)
}
