//! The run config document consumed by `kgcil run`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::schedule::{Split, DEFAULT_SAMPLES_PER_CLASS};
use crate::generator_sim::GeneratorConfig;
use crate::graph_inference::ClassText;
use crate::task_graph::DEFAULT_R_TARGET;
use crate::text_encoder::{HashingEncoder, TextEncoder, DEFAULT_DIMENSION};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config key `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_owned(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<String>>,
    /// One class per line; blank lines and `#` comments ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes_file: Option<PathBuf>,
    pub split: Split,
    #[serde(default = "default_samples")]
    pub samples_per_class: usize,
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES_PER_CLASS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub id: String,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default)]
    pub class_text: ClassText,
}

fn default_dimension() -> usize {
    DEFAULT_DIMENSION
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { id: "hashing".into(), dimension: DEFAULT_DIMENSION, class_text: ClassText::Name }
    }
}

impl EncoderConfig {
    pub fn build(&self) -> Result<Box<dyn TextEncoder>, ConfigError> {
        match self.id.as_str() {
            "hashing" if self.dimension > 0 => Ok(Box::new(HashingEncoder::new(self.dimension))),
            "hashing" => Err(invalid("encoder.dimension", "must be positive")),
            other => Err(invalid("encoder.id", format!("unknown encoder `{other}`; expected `hashing`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub graph_path: PathBuf,
    pub schedule: ScheduleConfig,
    #[serde(default = "default_r")]
    pub r_target: usize,
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
    pub orders: Vec<u64>,
    pub output_dir: PathBuf,
}

fn default_r() -> usize {
    DEFAULT_R_TARGET
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.graph_path);
        fix(&mut self.output_dir);
        if let Some(p) = self.schedule.classes_file.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match (&self.schedule.classes, &self.schedule.classes_file) {
            (Some(_), Some(_)) => return Err(invalid("schedule.classes", "give either classes or classes_file, not both")),
            (None, None) => return Err(invalid("schedule.classes", "one of classes or classes_file is required")),
            (Some(c), None) if c.is_empty() => return Err(invalid("schedule.classes", "must not be empty")),
            _ => {}
        }
        if self.schedule.samples_per_class == 0 {
            return Err(invalid("schedule.samples_per_class", "must be positive"));
        }
        if self.r_target == 0 {
            return Err(invalid("r_target", "must be positive"));
        }
        if self.orders.is_empty() {
            return Err(invalid("orders", "at least one order seed is required"));
        }
        if let Err(message) = self.generator.validate() {
            let key = message.split_whitespace().next().unwrap_or("generator").to_owned();
            return Err(ConfigError::Invalid { key, message });
        }
        self.encoder.build()?;
        Ok(())
    }

    pub fn classes(&self) -> Result<Vec<String>, ConfigError> {
        if let Some(c) = &self.schedule.classes {
            return Ok(c.clone());
        }
        let path = self.schedule.classes_file.as_ref().expect("validated");
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
        Ok(text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_owned)
            .collect())
    }
}
