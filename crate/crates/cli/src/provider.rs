use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde_json::{json, Value};

use portal_synth::llm::{Completer, HttpCompleter, MockCompleter, ProviderConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    /// Deterministic offline generator
    Mock,
    /// OpenAI-compatible completions endpoint
    Openai,
}

/// Provider selection. Flags override values from `--config`.
#[derive(Debug, Args)]
pub struct ProviderArgs {
    #[arg(long, value_enum)]
    pub provider: ProviderKind,
    /// JSON file with provider settings
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_new_tokens: Option<u32>,
    /// Environment variable holding the API key; empty for none
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    #[arg(long)]
    pub max_parallel: Option<usize>,
    #[arg(long)]
    pub timeout_seconds: Option<u64>,
}

impl ProviderArgs {
    pub fn resolve(&self) -> Result<ProviderConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => ProviderConfig::default(),
        };
        if let Some(v) = &self.endpoint {
            config.endpoint_url = v.clone();
        }
        if let Some(v) = &self.model {
            config.model = v.clone();
        }
        if let Some(v) = self.temperature {
            config.temperature = v;
        }
        if let Some(v) = self.max_new_tokens {
            config.max_new_tokens = v;
        }
        if let Some(v) = &self.api_key_env {
            config.api_key_env = v.clone();
        }
        if let Some(v) = self.max_retries {
            config.max_retries = v;
        }
        if let Some(v) = self.max_parallel {
            config.max_parallel = v;
        }
        if let Some(v) = self.timeout_seconds {
            config.timeout_seconds = v;
        }
        config.validate()?;
        Ok(config)
    }

    /// The completer plus a description for provenance.
    pub fn build(&self) -> Result<(Box<dyn Completer>, Value)> {
        match self.provider {
            ProviderKind::Mock => {
                let mock = MockCompleter {
                    max_parallel: self
                        .max_parallel
                        .unwrap_or(MockCompleter::default().max_parallel)
                        .max(1),
                };
                Ok((Box::new(mock), json!({ "provider": "mock" })))
            }
            ProviderKind::Openai => {
                let config = self.resolve()?;
                let described = json!({ "provider": "openai", "config": config });
                Ok((Box::new(HttpCompleter::new(config)?), described))
            }
        }
    }
}
