//! Layering of defaults, `--config` values and explicit flags.

use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

/// Keys whose string values name input files. Relative paths found in a
/// config file are taken relative to that file.
const PATH_KEYS: &[&str] = &["data", "denoiser", "trajectory", "profile", "samples", "reference"];

pub struct ConfigFile {
    dir: PathBuf,
    root: Map<String, Value>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let Value::Object(root) = value else {
            return Err(CliError::validation(format!(
                "{}: config must be a JSON object",
                path.display()
            )));
        };
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { dir, root })
    }

    /// Top-level scalar keys, then the keys of the `section` object on top.
    /// Returns the layer plus the keys that came from the section, which
    /// must all be recognised by the subcommand.
    fn layer(&self, section: &str) -> Result<(Map<String, Value>, Vec<String>), CliError> {
        let mut out: Map<String, Value> = self
            .root
            .iter()
            .filter(|(_, v)| !v.is_object())
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let mut strict = Vec::new();
        match self.root.get(section) {
            None => {}
            Some(Value::Object(sec)) => {
                for (k, v) in sec {
                    out.insert(k.clone(), v.clone());
                    strict.push(k.clone());
                }
            }
            Some(_) => {
                return Err(CliError::validation(format!(
                    "config section `{section}` must be an object"
                )));
            }
        }
        for k in PATH_KEYS {
            if let Some(Value::String(s)) = out.get(*k) {
                let p = Path::new(s);
                if p.is_relative() {
                    out.insert(
                        (*k).to_string(),
                        Value::String(self.dir.join(p).to_string_lossy().into_owned()),
                    );
                }
            }
        }
        Ok((out, strict))
    }
}

/// Overlay config values onto `parsed` wherever the flag was not given on
/// the command line.
pub fn resolve<T: Serialize + DeserializeOwned>(
    parsed: T,
    matches: &ArgMatches,
    config: Option<&ConfigFile>,
    section: &str,
) -> Result<T, CliError> {
    let Some(config) = config else {
        return Ok(parsed);
    };
    let Value::Object(mut fields) = serde_json::to_value(&parsed).expect("arguments serialize") else {
        unreachable!("argument structs serialize to objects");
    };
    let (layer, strict) = config.layer(section)?;
    for key in &strict {
        if !fields.contains_key(key) {
            return Err(CliError::usage(format!(
                "config section `{section}` has unknown key `{key}`"
            )));
        }
    }
    for (key, value) in layer {
        if !fields.contains_key(&key) {
            continue;
        }
        if matches.value_source(&key) == Some(ValueSource::CommandLine) {
            continue;
        }
        fields.insert(key, value);
    }
    serde_json::from_value(Value::Object(fields))
        .map_err(|e| CliError::validation(format!("config for `{section}`: {e}")))
}
