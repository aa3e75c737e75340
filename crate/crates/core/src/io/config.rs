//! Pipeline configuration files (TOML).
//!
//! Every registration parameter sits at the top level next to the pipeline
//! keys below. Missing keys take their defaults; unknown keys are errors.
//!
//! ```toml
//! direction = "he_to_shg"        # or "shg_to_he"
//! deformable_enabled = true
//! deformable_resolution = 1024
//! matcher = "builtin"            # or "external" with matcher_command
//! matcher_command = "python3 superglue_plugin.py"
//! matcher_timeout_secs = 120
//! output_dir = "out"
//! seed = 7
//! angles = [0, 90, 180, 270]
//!
//! [[levels]]
//! scale = 0.5
//! theta = 5.0
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::config::RegistrationConfig;
use crate::error::{Error, Result};
use crate::features::{BuiltinMatcher, ExternalMatcher, Matcher};

/// Which modality is warped onto which.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Source is the H&E image, target the SHG image.
    #[default]
    HeToShg,
    ShgToHe,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatcherChoice {
    Builtin,
    External { command: String, timeout_secs: u64 },
}

impl MatcherChoice {
    pub fn build(&self, cfg: &RegistrationConfig) -> Box<dyn Matcher> {
        match self {
            MatcherChoice::Builtin => Box::new(BuiltinMatcher::from_config(cfg)),
            MatcherChoice::External { command, timeout_secs } => Box::new(ExternalMatcher::new(
                command.clone(),
                Duration::from_secs(*timeout_secs),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub registration: RegistrationConfig,
    pub direction: Direction,
    pub deformable_enabled: bool,
    /// Maximum dimension of the deformable stage's working images.
    pub deformable_resolution: usize,
    pub matcher: MatcherChoice,
    pub output_dir: Option<PathBuf>,
}

pub const DEFAULT_MATCHER_TIMEOUT_SECS: u64 = 120;

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            registration: RegistrationConfig::default(),
            direction: Direction::HeToShg,
            deformable_enabled: true,
            deformable_resolution: 1024,
            matcher: MatcherChoice::Builtin,
            output_dir: None,
        }
    }
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum MatcherKind {
    Builtin,
    External,
}

const PIPELINE_KEYS: [&str; 7] = [
    "direction",
    "deformable_enabled",
    "deformable_resolution",
    "matcher",
    "matcher_command",
    "matcher_timeout_secs",
    "output_dir",
];

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        let mut take = |key: &str| table.remove(key);
        let pipeline: Vec<(&str, Option<toml::Value>)> = PIPELINE_KEYS.iter().map(|&k| (k, take(k))).collect();
        let registration: RegistrationConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;

        let mut cfg = PipelineConfig {
            registration,
            ..Default::default()
        };
        let mut kind = MatcherKind::Builtin;
        let mut command: Option<String> = None;
        let mut timeout_secs = DEFAULT_MATCHER_TIMEOUT_SECS;
        for (key, value) in pipeline {
            let Some(value) = value else { continue };
            let bad = |e: toml::de::Error| Error::Config(format!("{key}: {}", e.message()));
            match key {
                "direction" => cfg.direction = value.try_into().map_err(bad)?,
                "deformable_enabled" => cfg.deformable_enabled = value.try_into().map_err(bad)?,
                "deformable_resolution" => cfg.deformable_resolution = value.try_into().map_err(bad)?,
                "matcher" => kind = value.try_into().map_err(bad)?,
                "matcher_command" => command = Some(value.try_into().map_err(bad)?),
                "matcher_timeout_secs" => timeout_secs = value.try_into().map_err(bad)?,
                "output_dir" => cfg.output_dir = Some(value.try_into().map_err(bad)?),
                _ => unreachable!("key list is fixed"),
            }
        }
        cfg.matcher = match (kind, command) {
            (MatcherKind::Builtin, None) => MatcherChoice::Builtin,
            (MatcherKind::Builtin, Some(_)) => {
                return Err(Error::Config("matcher_command requires matcher = \"external\"".into()))
            }
            (MatcherKind::External, Some(command)) if !command.trim().is_empty() => {
                MatcherChoice::External { command, timeout_secs }
            }
            (MatcherKind::External, _) => {
                return Err(Error::Config("matcher = \"external\" requires matcher_command".into()))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.registration.validate()?;
        if self.deformable_resolution < 32 {
            return Err(Error::Config(format!(
                "deformable_resolution {} must be at least 32",
                self.deformable_resolution
            )));
        }
        if let MatcherChoice::External { timeout_secs: 0, .. } = self.matcher {
            return Err(Error::Config("matcher_timeout_secs must be positive".into()));
        }
        Ok(())
    }
}

pub fn load_pipeline_config(path: impl AsRef<Path>) -> Result<PipelineConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    PipelineConfig::from_toml_str(&text).map_err(|e| Error::file(path, e))
}
