//! Versioned JSON envelopes for fitted models.
//!
//! Every model file is an object `{"format": <kind>, "version": <n>, "model": {...}}`.
//! Matrices are nested row arrays. Floats are written in shortest round-trip form and
//! parsed back exactly.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{DeaError, Result};

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    format: &'a str,
    version: u64,
    model: &'a T,
}

#[derive(Deserialize)]
struct EnvelopeIn<T> {
    #[allow(dead_code)]
    format: String,
    #[allow(dead_code)]
    version: u64,
    model: T,
}

pub fn to_json<T: Serialize>(kind: &str, version: u64, model: &T) -> Result<String> {
    let env = EnvelopeOut {
        format: kind,
        version,
        model,
    };
    serde_json::to_string_pretty(&env).map_err(|e| DeaError::Schema {
        field: "model".into(),
        msg: e.to_string(),
    })
}

pub fn from_json<T: DeserializeOwned>(kind: &str, version: u64, text: &str) -> Result<T> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| DeaError::Schema {
        field: "<document>".into(),
        msg: e.to_string(),
    })?;
    let format = value
        .get("format")
        .and_then(|v| v.as_str())
        .ok_or_else(|| DeaError::Schema {
            field: "format".into(),
            msg: "missing or not a string".into(),
        })?;
    if format != kind {
        return Err(DeaError::Schema {
            field: "format".into(),
            msg: format!("expected `{kind}`, found `{format}`"),
        });
    }
    let found = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| DeaError::Schema {
            field: "version".into(),
            msg: "missing or not an unsigned integer".into(),
        })?;
    if found != version {
        return Err(DeaError::Version {
            found,
            expected: version,
        });
    }
    let env: EnvelopeIn<T> = serde_path_to_error::deserialize(value).map_err(|e| DeaError::Schema {
        field: e.path().to_string(),
        msg: e.inner().to_string(),
    })?;
    Ok(env.model)
}

pub fn save<T: Serialize>(kind: &str, version: u64, model: &T, path: &Path) -> Result<()> {
    let text = to_json(kind, version, model)?;
    fs::write(path, text).map_err(|e| DeaError::io(path, e))
}

pub fn load<T: DeserializeOwned>(kind: &str, version: u64, path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| DeaError::io(path, e))?;
    from_json(kind, version, &text)
}

/// Reads only the `format` tag of a model file.
pub fn peek_format(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path).map_err(|e| DeaError::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| DeaError::Schema {
        field: "<document>".into(),
        msg: e.to_string(),
    })?;
    value
        .get("format")
        .and_then(|v| v.as_str())
        .map(str::to_string)
        .ok_or_else(|| DeaError::Schema {
            field: "format".into(),
            msg: "missing or not a string".into(),
        })
}
