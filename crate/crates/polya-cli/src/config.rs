//! Layered configuration: defaults, then the JSON config file, then flags.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use polya::urn::{UrnSpec, UrnSpecDoc};
use polya::Param;

use crate::args::{CommonArgs, UrnArgs};
use crate::CliError;

pub const DEFAULT_SEED: u64 = 1;

/// Flags naming files of this invocation; never read from or echoed into a config.
const LOCAL_KEYS: [&str; 3] = ["config", "output", "spec_file"];

fn object(value: Value, origin: &str) -> Result<Map<String, Value>, CliError> {
    match value {
        Value::Object(map) => Ok(map),
        _ => Err(CliError::Usage(format!("{origin} must be a JSON object"))),
    }
}

/// Reads a config file; an earlier JSON or CSV output contributes its embedded config.
pub fn load_config(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let bad = |e: serde_json::Error| CliError::Usage(format!("config {}: {e}", path.display()));
    if text.trim_start().starts_with('#') {
        let line = text
            .lines()
            .find_map(|l| l.strip_prefix("# config: "))
            .ok_or_else(|| CliError::Usage(format!("{} has no embedded config line", path.display())))?;
        return object(serde_json::from_str(line).map_err(bad)?, "embedded config");
    }
    let mut map = object(serde_json::from_str(&text).map_err(bad)?, "config")?;
    if map.contains_key("polya_version") {
        if let Some(inner) = map.remove("config") {
            return object(inner, "embedded config");
        }
    }
    Ok(map)
}

fn flag_layer<T: Serialize>(args: &T) -> Map<String, Value> {
    let Value::Object(map) = serde_json::to_value(args).expect("flags serialize") else {
        unreachable!("flag structs serialize to objects")
    };
    map.into_iter().filter(|(_, v)| !v.is_null()).collect()
}

fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var("POLYA_SEED") {
        Ok(text) => text
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("POLYA_SEED={text:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Merged configuration, both typed and as the JSON object echoed into outputs.
pub struct Resolved<T> {
    pub args: T,
    pub config: Map<String, Value>,
}

impl<T> Resolved<T> {
    pub fn seed(&self) -> u64 {
        self.config.get("seed").and_then(Value::as_u64).unwrap_or(DEFAULT_SEED)
    }
}

pub fn resolve<T: Serialize + DeserializeOwned>(
    args: &T,
    common: &CommonArgs,
    defaults: Value,
) -> Result<Resolved<T>, CliError> {
    let mut merged = object(defaults, "defaults")?;
    merged.insert("seed".into(), env_seed()?.unwrap_or(DEFAULT_SEED).into());
    if let Some(path) = &common.config {
        let mut file = load_config(path)?;
        for key in LOCAL_KEYS {
            file.remove(key);
        }
        merged.extend(file);
    }
    merged.extend(flag_layer(args));
    let args = serde_json::from_value(Value::Object(merged.clone()))
        .map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))?;
    for key in LOCAL_KEYS {
        merged.remove(key);
    }
    Ok(Resolved { args, config: merged })
}

const SPEC_KEYS: [&str; 12] = ["family", "p", "sigma", "ell", "ell1", "ell2", "alpha", "j", "w0", "b0", "initial", "phase"];

/// Builds the urn from `spec` (file, then config object) overlaid with the flat spec fields.
///
/// The flat fields are folded into a canonical `spec` object in the echoed config.
pub fn resolve_spec(config: &mut Map<String, Value>, urn: &UrnArgs) -> Result<UrnSpec, CliError> {
    let mut doc: UrnSpecDoc = match (&urn.spec_file, config.get("spec")) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read spec {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("spec {}: {e}", path.display())))?
        }
        (None, Some(v)) => serde_json::from_value(v.clone()).map_err(|e| CliError::Usage(format!("spec: {e}")))?,
        (None, None) => UrnSpecDoc {
            family: "polya_young".into(),
            p: Some(2),
            sigma: Some(Param::integer(1)),
            ell: Some(Param::integer(1)),
            ..Default::default()
        },
    };
    if let Some(family) = &urn.family {
        let family = if family == "py" { "polya_young".to_string() } else { family.clone() };
        if family != doc.family {
            doc = UrnSpecDoc { family, ..Default::default() };
        }
    }
    macro_rules! overlay {
        ($($field:ident),*) => { $( if urn.$field.is_some() { doc.$field = urn.$field.clone(); } )* };
    }
    overlay!(p, sigma, ell, ell1, ell2, alpha, j, initial, phase);
    if doc.family != "branch_urn" && doc.family != "custom" {
        doc.sigma.get_or_insert_with(|| Param::integer(1));
        let colors = doc.colors.unwrap_or(2);
        let initial = doc.initial.get_or_insert_with(|| vec![Param::integer(1); colors]);
        if let Some(w0) = &urn.w0 {
            initial[0] = w0.clone();
        }
        if let Some(b0) = &urn.b0 {
            let last = initial.len() - 1;
            initial[last] = b0.clone();
        }
        if urn.initial.is_some() || urn.w0.is_some() || urn.b0.is_some() {
            doc.colors = None;
        }
    }
    let spec = doc.into_spec().map_err(CliError::from)?;
    for key in SPEC_KEYS {
        config.remove(key);
    }
    config.insert("spec".into(), spec.to_json());
    Ok(spec)
}
