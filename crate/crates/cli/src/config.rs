//! Pipeline configuration files: `key = value` lines or a JSON object, with
//! command-line `--set key=value` overrides applied last.

use std::path::Path;

use anyhow::{anyhow, Context, Result};
use dea_core::PipelineConfig;
use serde_json::{Map, Value};

use crate::UsageError;

/// Every configuration key with a short description, in display order.
pub const KEYS: &[(&str, &str)] = &[
    ("u", "cluster count; `auto` uses 2N when M > 2N, otherwise N"),
    ("k", "neighbours in the similarity graph; `auto` uses round(ln M)"),
    ("q_fraction", "fraction of centroids kept after kernel ranking (Q = round(q_fraction * U))"),
    ("p", "number of output components"),
    ("sigma_grid", "kernel widths searched, as start:step:end or a comma list"),
    ("cluster_max_iter", "Lloyd iterations per restart"),
    ("cluster_tol", "relative objective change that ends a Lloyd run"),
    ("cluster_restarts", "seeded clustering restarts; the best objective is kept"),
    ("lambda", "L2 weight regularization coefficient"),
    ("beta", "sparsity regularization coefficient"),
    ("rho", "sparsity proportion (target mean activation)"),
    ("max_epochs", "autoencoder epoch cap"),
    ("learning_rate", "initial gradient step; halved when the loss rises"),
    ("stop_tol", "relative loss decrease over 100 epochs below which training stops"),
    ("input_scale", "divisor mapping distances into [0, 1] before encoding"),
    ("seed", "seed for clustering and weight initialization"),
];

fn default_value(key: &str) -> Value {
    let defaults = serde_json::to_value(PipelineConfig::default()).expect("config serializes");
    defaults.get(key).cloned().unwrap_or(Value::Null)
}

fn display_value(v: &Value) -> String {
    match v {
        Value::Null => "auto".to_string(),
        Value::Array(items) => items.iter().map(display_value).collect::<Vec<_>>().join(","),
        other => other.to_string(),
    }
}

/// Help text listing every key with its default.
pub fn keys_help() -> String {
    let mut out = String::from("Configuration keys (config file or --set key=value):\n");
    for (key, doc) in KEYS {
        let default = match *key {
            "sigma_grid" => "0.5:0.1:1.5".to_string(),
            _ => display_value(&default_value(key)),
        };
        out.push_str(&format!("  {key:<17} {doc} [default: {default}]\n"));
    }
    out
}

/// Default configuration as a `key = value` file.
pub fn defaults_file() -> String {
    let mut out = String::new();
    for (key, doc) in KEYS {
        out.push_str(&format!("# {doc}\n{key} = {}\n", display_value(&default_value(key))));
    }
    out
}

fn parse_scalar(key: &str, raw: &str) -> Result<Value> {
    let raw = raw.trim();
    if raw.is_empty() || raw.eq_ignore_ascii_case("auto") || raw.eq_ignore_ascii_case("none") {
        return Ok(Value::Null);
    }
    if key == "sigma_grid" {
        let values: Vec<f64> = if raw.contains(':') {
            let parts: Vec<f64> = raw
                .split(':')
                .map(|p| p.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| UsageError(format!("sigma_grid `{raw}` is not start:step:end")))?;
            if parts.len() != 3 {
                return Err(UsageError(format!("sigma_grid `{raw}` is not start:step:end")).into());
            }
            dea_core::kernel_rank::sigma_grid(parts[0], parts[1], parts[2])
                .map_err(|e| UsageError(e.to_string()))?
        } else {
            raw.trim_matches(['[', ']'])
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| UsageError(format!("sigma_grid `{raw}` is not a list of numbers")))?
        };
        return Ok(serde_json::to_value(values)?);
    }
    serde_json::from_str(raw).map_err(|_| UsageError(format!("value `{raw}` for `{key}` is not a number")).into())
}

fn parse_key_values(text: &str, origin: &str) -> Result<Map<String, Value>> {
    let mut map = Map::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| UsageError(format!("{origin}:{}: expected key = value", lineno + 1)))?;
        let key = key.trim();
        map.insert(key.to_string(), parse_scalar(key, value)?);
    }
    Ok(map)
}

/// Reads an optional config file and applies `key=value` overrides on top of the
/// defaults. Unknown keys are rejected.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<PipelineConfig> {
    let mut merged = match serde_json::to_value(PipelineConfig::default())? {
        Value::Object(map) => map,
        _ => unreachable!("config serializes to an object"),
    };
    let mut layers = Vec::new();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| dea_core::DeaError::Io { path: path.to_path_buf(), source: e })
            .context("reading config file")?;
        let layer = if text.trim_start().starts_with('{') {
            match serde_json::from_str::<Value>(&text)
                .map_err(|e| UsageError(format!("{}: {e}", path.display())))?
            {
                Value::Object(map) => map,
                _ => return Err(UsageError(format!("{}: expected a JSON object", path.display())).into()),
            }
        } else {
            parse_key_values(&text, &path.display().to_string())?
        };
        layers.push(layer);
    }
    layers.push(parse_key_values(&overrides.join("\n"), "--set")?);

    for layer in layers {
        for (key, value) in layer {
            if !merged.contains_key(&key) {
                return Err(UsageError(format!("unknown configuration key `{key}`")).into());
            }
            merged.insert(key, value);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| anyhow!(UsageError(format!("invalid configuration: {e}"))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_file_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dea.conf");
        std::fs::write(&path, defaults_file()).unwrap();
        assert_eq!(load(Some(&path), &[]).unwrap(), PipelineConfig::default());
    }

    #[test]
    fn overrides_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dea.json");
        std::fs::write(&path, r#"{"p": 12, "u": 30, "beta": 2.0}"#).unwrap();
        let cfg = load(Some(&path), &["p=5".into(), "sigma_grid=1:0.5:2".into()]).unwrap();
        assert_eq!(cfg.p, 5);
        assert_eq!(cfg.u, Some(30));
        assert_eq!(cfg.beta, 2.0);
        assert_eq!(cfg.sigma_grid, vec![1.0, 1.5, 2.0]);
        let cfg = load(None, &["u=auto".into(), "sigma_grid=0.7,0.9".into()]).unwrap();
        assert_eq!(cfg.u, None);
        assert_eq!(cfg.sigma_grid, vec![0.7, 0.9]);
    }

    #[test]
    fn bad_input_is_a_usage_error() {
        for bad in ["colour=3", "p=many", "p", "sigma_grid=1:2"] {
            let err = load(None, &[bad.to_string()]).unwrap_err();
            assert!(err.downcast_ref::<UsageError>().is_some(), "{bad}");
        }
    }

    #[test]
    fn help_lists_every_key() {
        let help = keys_help();
        let defaults = serde_json::to_value(PipelineConfig::default()).unwrap();
        for key in defaults.as_object().unwrap().keys() {
            assert!(help.contains(&format!("  {key} ")), "{key}");
        }
        assert!(help.contains("[default: 1.6]"));
    }
}
