//! Run configuration: one JSON file, overridable from the command line.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distiller::DistillOptions;
use crate::knowledge_base::{BagOfClasses, Embedder, DEFAULT_TOP_N};
use crate::llm_gateway::{
    ChatClient, Gateway, GatewayError, LiveClient, LiveConfig, PromptRegistry, RecordingClient, ReplayClient, Script,
    ScriptedClient,
};
use crate::planner::CorrectionConfig;
use crate::scene_graph::GeometryParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Scripted,
    Replay,
    Live,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Scripted => "scripted",
            Backend::Replay => "replay",
            Backend::Live => "live",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub kb_dir: Option<PathBuf>,
    pub backend: Backend,
    /// Script for the scripted backend; the bundled golden script if unset.
    pub script: Option<PathBuf>,
    /// JSON-lines log answered by the replay backend.
    pub replay_log: Option<PathBuf>,
    /// Append every exchange to this JSON-lines log.
    pub record_log: Option<PathBuf>,
    pub live: Option<LiveConfig>,
    /// Directory of `<template_id>.txt` files overriding bundled prompts.
    pub templates_dir: Option<PathBuf>,
    pub downsample: usize,
    pub top_n: usize,
    pub correction: CorrectionConfig,
    pub embedder: String,
    pub geometry: GeometryParams,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            kb_dir: None,
            backend: Backend::Scripted,
            script: None,
            replay_log: None,
            record_log: None,
            live: None,
            templates_dir: None,
            downsample: 5,
            top_n: DEFAULT_TOP_N,
            correction: CorrectionConfig::default(),
            embedder: BagOfClasses::NAME.to_string(),
            geometry: GeometryParams::default(),
            seed: 0,
        }
    }
}

impl Config {
    pub fn from_json(text: &str, path: &Path) -> Result<Config, ConfigError> {
        let config: Config =
            serde_json::from_str(text).map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Config::from_json(&text, path)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.downsample == 0 {
            return Err(ConfigError::Invalid("downsample must be at least 1".into()));
        }
        if self.top_n == 0 {
            return Err(ConfigError::Invalid("top_n must be at least 1".into()));
        }
        if self.embedder != BagOfClasses::NAME {
            return Err(ConfigError::Invalid(format!("unknown embedder `{}`", self.embedder)));
        }
        if !self.geometry.is_valid() {
            return Err(ConfigError::Invalid("geometry thresholds out of range".into()));
        }
        match self.backend {
            Backend::Replay if self.replay_log.is_none() => {
                Err(ConfigError::Invalid("the replay backend needs `replay_log`".into()))
            }
            Backend::Live if self.live.is_none() => Err(ConfigError::Invalid("the live backend needs `live`".into())),
            _ => Ok(()),
        }
    }

    pub fn distill_options(&self) -> DistillOptions {
        DistillOptions { downsample: self.downsample, geometry: self.geometry }
    }

    pub fn embedder(&self) -> Box<dyn Embedder> {
        Box::new(BagOfClasses::default())
    }

    pub fn gateway(&self) -> Result<Gateway, ConfigError> {
        let client: Arc<dyn ChatClient> = match self.backend {
            Backend::Scripted => match &self.script {
                Some(p) => Arc::new(ScriptedClient::new(Script::load(p)?)),
                None => Arc::new(ScriptedClient::golden()),
            },
            Backend::Replay => Arc::new(ReplayClient::load(self.replay_log.as_deref().expect("validated"))?),
            Backend::Live => Arc::new(LiveClient::from_env(self.live.clone().expect("validated"))?),
        };
        let client: Arc<dyn ChatClient> = match &self.record_log {
            Some(p) => Arc::new(RecordingClient::new(client, p)?),
            None => client,
        };
        let mut gw = Gateway::new(client);
        if let Some(dir) = &self.templates_dir {
            gw = gw.with_registry(PromptRegistry::with_overrides(dir)?);
        }
        Ok(gw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_unknown_keys() {
        let p = Path::new("c.json");
        assert_eq!(Config::from_json("{}", p).unwrap(), Config::default());
        assert!(matches!(Config::from_json(r#"{"bogus": 1}"#, p), Err(ConfigError::Parse { .. })));
        let c = Config::from_json(r#"{"downsample": 2, "correction": {"max_plan_rounds": 1}}"#, p).unwrap();
        assert_eq!(c.downsample, 2);
        assert_eq!(c.correction.max_plan_rounds, 1);
        assert_eq!(c.correction.max_exec_corrections_per_step, 2);
        assert!(matches!(Config::from_json(r#"{"backend": "replay"}"#, p), Err(ConfigError::Invalid(_))));
        assert!(matches!(Config::from_json(r#"{"downsample": 0}"#, p), Err(ConfigError::Invalid(_))));
    }
}
