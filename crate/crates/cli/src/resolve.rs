//! Layered configuration: defaults, then an optional TOML file, then flags.
//!
//! Every subcommand has a config struct whose keys are exactly its long flag
//! names (with `-` as `_`). Flags that were not given serialize as `null` and
//! leave the lower layers alone.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

fn object(v: Value, what: &str) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        other => panic!("{what} must serialize to a map, got {other}"),
    }
}

/// Read a TOML config file into a JSON object.
pub fn read_config_file(path: &Path) -> CliResult<Map<String, Value>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let table: toml::Table =
        toml::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    Ok(object(
        serde_json::to_value(table).expect("toml converts to json"),
        "config file",
    ))
}

/// Merge `file` and `flags` over `C::default()` and deserialize.
pub fn resolve<C, F>(file: Option<&Path>, flags: &F) -> CliResult<C>
where
    C: Serialize + DeserializeOwned + Default,
    F: Serialize,
{
    let mut merged = object(serde_json::to_value(C::default()).expect("config serializes"), "config");
    if let Some(path) = file {
        for (k, v) in read_config_file(path)? {
            if !merged.contains_key(&k) {
                return Err(CliError::validation(format!(
                    "{}: unknown key `{k}`",
                    path.display()
                )));
            }
            merged.insert(k, v);
        }
    }
    for (k, v) in object(serde_json::to_value(flags).expect("flags serialize"), "flags") {
        if v.is_null() {
            continue;
        }
        assert!(merged.contains_key(&k), "flag `{k}` has no matching config key");
        merged.insert(k, v);
    }
    from_value(Value::Object(merged))
}

/// Deserialize a resolved config, naming the offending key on failure.
pub fn from_value<C: DeserializeOwned>(v: Value) -> CliResult<C> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        CliError::validation(format!("{path}: {}", e.into_inner()))
    })
}
