//! Versioned JSON configs layered over command defaults.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::output::Failure;

pub const SCHEMA_VERSION: u64 = 1;

/// Overlays `over` onto `base`. Objects merge key by key and keys absent
/// from `base` are rejected, which catches typos. An object carrying a
/// "kind" tag replaces the base wholesale, since it may select a different
/// variant with different fields.
fn merge(base: &mut Value, over: Value, path: &str) -> Result<(), Failure> {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) if !o.contains_key("kind") => {
            for (key, v) in o {
                let child = format!("{path}.{key}");
                match b.get_mut(&key) {
                    Some(slot) => merge(slot, v, &child)?,
                    None => return Err(Failure::usage(format!("unknown config key {}", &child[1..]))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

/// Resolves a command config: defaults, then the `--config` file, then the
/// `--seed` flag. The file must carry `"schema_version": 1` and may name
/// the command it was written for.
pub fn resolve<T: Serialize + DeserializeOwned>(
    defaults: &T,
    file: Option<&Path>,
    seed: Option<u64>,
    command: &str,
) -> Result<T, Failure> {
    let mut value = serde_json::to_value(defaults).map_err(Failure::runtime)?;
    if let Some(path) = file {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
        let parsed: Value = serde_json::from_str(&text)
            .map_err(|e| Failure::usage(format!("config {} is not valid JSON: {e}", path.display())))?;
        let Value::Object(mut obj) = parsed else {
            return Err(Failure::usage(format!("config {} must be a JSON object", path.display())));
        };
        match obj.remove("schema_version").and_then(|v| v.as_u64()) {
            Some(SCHEMA_VERSION) => {}
            Some(v) => return Err(Failure::usage(format!("unsupported schema_version {v}; expected {SCHEMA_VERSION}"))),
            None => return Err(Failure::usage("config needs an integer \"schema_version\"")),
        }
        if let Some(c) = obj.remove("command") {
            if c.as_str() != Some(command) {
                return Err(Failure::usage(format!("config was written for command {c}, not {command:?}")));
            }
        }
        merge(&mut value, Value::Object(obj), "")?;
    }
    if let Some(seed) = seed {
        match value.get_mut("seed") {
            Some(slot) => *slot = Value::from(seed),
            None => return Err(Failure::usage(format!("{command} takes no seed"))),
        }
    }
    serde_json::from_value(value).map_err(|e| Failure::usage(format!("invalid config: {e}")))
}

/// The resolved config in the file format `resolve` accepts.
pub fn echo<T: Serialize>(config: &T, command: &str) -> Result<Value, Failure> {
    let mut out = Map::new();
    out.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
    out.insert("command".into(), Value::from(command));
    match serde_json::to_value(config).map_err(Failure::runtime)? {
        Value::Object(fields) => out.extend(fields),
        other => {
            out.insert("config".into(), other);
        }
    }
    Ok(Value::Object(out))
}
