//! TOML configuration with environment overrides.
//!
//! ```toml
//! site = "fixtures/shop"          # snapshot directory
//! dataset = "out/dataset.jsonl"   # EpisodeRecord JSONL with split labels
//! taxonomy = "wordnet/data.noun"  # optional; .json or WordNet data file
//! out_dir = "out"
//!
//! [llm]
//! endpoint = "http://localhost:8000/generate"
//! model = "qa-model"
//! mock_dir = "fixtures/shop/mock"  # when set, no network calls are made
//! timeout_secs = 60
//!
//! [captioner]
//! sidecar = "captions.json"        # or endpoint + model
//!
//! [model]
//! size = "default"                 # or "tiny"
//!
//! [train]                          # every key of TrainConfig
//! iterations = 5000
//! learning_rate = 0.001
//!
//! [eval]
//! max_steps = 10
//! seed = 0
//!
//! [serve]
//! addr = "127.0.0.1:8080"
//! token = "secret"                 # optional shared bearer token
//! idle_timeout_secs = 1800
//! ui_dir = "ui/dist"
//! checkpoint = "out/model.ckpt"    # enables the learned agent for reports
//! ```
//!
//! Environment variables override the file: `LLM_ENDPOINT`, `LLM_API_KEY`,
//! `LLM_MODEL`, `WEBVLN_SITE`, `WEBVLN_DATASET`, `WEBVLN_ADDR`,
//! `WEBVLN_TOKEN`.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use webvln_core::model::ModelConfig;
use webvln_core::sim::DEFAULT_MAX_STEPS;
use webvln_core::train::TrainConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub site: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub llm: LlmConfig,
    pub captioner: CaptionerConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub serve: ServeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub endpoint: Option<String>,
    pub model: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub mock_dir: Option<PathBuf>,
    pub timeout_secs: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig { endpoint: None, model: "default".into(), api_key: None, mock_dir: None, timeout_secs: 60 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptionerConfig {
    pub sidecar: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSize {
    #[default]
    Default,
    Tiny,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub size: ModelSize,
}

impl ModelSection {
    pub fn config(&self, vocab_size: usize) -> ModelConfig {
        match self.size {
            ModelSize::Default => ModelConfig::new(vocab_size),
            ModelSize::Tiny => ModelConfig::tiny(vocab_size),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { max_steps: DEFAULT_MAX_STEPS, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub addr: String,
    #[serde(skip_serializing)]
    pub token: Option<String>,
    pub idle_timeout_secs: u64,
    pub ui_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig { addr: "127.0.0.1:8080".into(), token: None, idle_timeout_secs: 1800, ui_dir: None, checkpoint: None }
    }
}

impl Config {
    /// Parses a TOML file; `None` starts from defaults. Environment
    /// overrides are applied afterwards.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut config = match path {
            Some(p) => {
                let src = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&src).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => Config::default(),
        };
        config.apply_env(|k| std::env::var(k).ok());
        Ok(config)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(v) = get("LLM_ENDPOINT") {
            self.llm.endpoint = Some(v);
        }
        if let Some(v) = get("LLM_API_KEY") {
            self.llm.api_key = Some(v);
        }
        if let Some(v) = get("LLM_MODEL") {
            self.llm.model = v;
        }
        if let Some(v) = get("WEBVLN_SITE") {
            self.site = Some(v.into());
        }
        if let Some(v) = get("WEBVLN_DATASET") {
            self.dataset = Some(v.into());
        }
        if let Some(v) = get("WEBVLN_ADDR") {
            self.serve.addr = v;
        }
        if let Some(v) = get("WEBVLN_TOKEN") {
            self.serve.token = Some(v);
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_keys_and_env_overrides() {
        let mut c: Config = toml::from_str(
            r#"
            site = "s"
            [llm]
            model = "m"
            [train]
            iterations = 7
            [serve]
            token = "file"
            "#,
        )
        .unwrap();
        assert_eq!(c.train.iterations, 7);
        assert_eq!(c.train.batch_size, TrainConfig::default().batch_size);
        c.apply_env(|k| match k {
            "LLM_ENDPOINT" => Some("http://x".into()),
            "WEBVLN_TOKEN" => Some("env".into()),
            _ => None,
        });
        assert_eq!(c.llm.endpoint.as_deref(), Some("http://x"));
        assert_eq!(c.llm.model, "m");
        assert_eq!(c.serve.token.as_deref(), Some("env"));
        assert!(toml::from_str::<Config>("bogus = 1").is_err());
    }
}
