use std::fs;
use std::path::Path;

use serde::Deserialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use walklab::seq2seq::ModelConfig;
use walklab::trainer::TrainRunConfig;

use crate::error::CliError;

/// Optional JSON configuration file; every field is a partial override.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    model: Map<String, Value>,
    #[serde(default)]
    train: Option<TrainRunConfig>,
}

/// Model and run configuration after merging file and flags.
#[derive(Debug, Clone)]
pub struct Settings {
    pub model: ModelConfig,
    pub train: TrainRunConfig,
}

impl Settings {
    /// Defaults overlaid with `path`, if given.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let file: ConfigFile = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::user(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::user(format!("invalid config {}: {e}", p.display())))?
            }
            None => ConfigFile::default(),
        };
        let mut model = match serde_json::to_value(ModelConfig::new(1))? {
            Value::Object(m) => m,
            _ => unreachable!("config serializes to an object"),
        };
        model.extend(file.model);
        let model: ModelConfig = serde_json::from_value(Value::Object(model))
            .map_err(|e| CliError::user(format!("invalid model config: {e}")))?;
        Ok(Self {
            model,
            train: file.train.unwrap_or_default(),
        })
    }

    /// SHA-256 of the merged configuration.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.model.to_canonical_json());
        h.update(b"\n");
        h.update(serde_json::to_string(&self.train).expect("run config serializes"));
        hex::encode(h.finalize())
    }
}
