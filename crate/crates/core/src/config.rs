//! Run configuration (TOML) and provenance digests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backtest::BacktestConfig;
use crate::error::{Error, Result};
use crate::synth::GeneratorConfig;

/// Everything a pipeline command needs. Every section is optional in the
/// file; missing keys take their defaults and unknown keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; overrides `generator.seed` when set.
    pub seed: Option<u64>,
    /// Data root used when a command gets no explicit `--data`.
    pub data_dir: Option<PathBuf>,
    pub generator: GeneratorConfig,
    pub backtest: BacktestConfig,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = toml::from_str(&s).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            line: toml_line(&s, e.span()),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies the seed override and checks every section.
    pub fn validate(&self) -> Result<()> {
        self.generator().validate()?;
        self.backtest.validate()
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if seed.is_some() {
            self.seed = seed;
        }
        self
    }

    pub fn generator(&self) -> GeneratorConfig {
        let mut g = self.generator.clone();
        if let Some(seed) = self.seed {
            g.seed = seed;
        }
        g
    }

    /// The seed folded into the generator section.
    pub fn resolved(&self) -> RunConfig {
        RunConfig {
            seed: None,
            generator: self.generator(),
            ..self.clone()
        }
    }

    pub fn digest(&self) -> Result<String> {
        let mut resolved = self.resolved();
        // the data location does not change results
        resolved.data_dir = None;
        digest_of(&resolved)
    }
}

fn toml_line(src: &str, span: Option<std::ops::Range<usize>>) -> u64 {
    span.map(|r| src[..r.start.min(src.len())].matches('\n').count() as u64 + 1)
        .unwrap_or(0)
}

/// SHA-256 of the value's canonical JSON (object keys sorted).
pub fn digest_of<T: Serialize>(value: &T) -> Result<String> {
    let canonical = serde_json::to_value(value)?;
    let bytes = serde_json::to_vec(&canonical)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_digest: String,
    pub inputs: Vec<String>,
    pub warnings: Vec<String>,
    pub config: RunConfig,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &RunConfig, inputs: Vec<String>) -> Result<Self> {
        Ok(RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest: cfg.digest()?,
            inputs,
            warnings: Vec::new(),
            config: cfg.resolved(),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("run_manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(&path, e))
    }
}
