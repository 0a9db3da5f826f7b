use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{FixedOffset, NaiveDate};
use serde::{Deserialize, Serialize};

use release_gate_core::collectors::{SourceConfig, SourceKind};
use release_gate_core::gate::GateConfig;

pub const DEFAULT_CONFIG_PATH: &str = "release-gate.json";

/// Prefix of the environment variables that override a source's token,
/// e.g. `RELEASE_GATE_TOKEN_CI`.
pub const TOKEN_ENV_PREFIX: &str = "RELEASE_GATE_TOKEN_";

fn default_timezone() -> String {
    "+00:00".to_string()
}

fn default_webhook_timeout() -> u64 {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolConfig {
    /// Dataset CSV; relative paths are resolved against the config file's directory.
    pub dataset_path: PathBuf,
    #[serde(default)]
    pub sources: Vec<SourceConfig>,
    #[serde(default)]
    pub gate: GateConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub webhook_url: Option<String>,
    #[serde(default = "default_webhook_timeout")]
    pub webhook_timeout_secs: u64,
    /// Start of the first release window.
    pub project_start_date: NaiveDate,
    /// UTC offset used to turn event timestamps into calendar dates.
    #[serde(default = "default_timezone")]
    pub timezone: String,
}

impl ToolConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut config: ToolConfig = serde_json::from_str(&text)
            .with_context(|| format!("invalid config {}", path.display()))?;
        if config.dataset_path.is_relative() {
            let base = path.parent().unwrap_or(Path::new(""));
            config.dataset_path = base.join(&config.dataset_path);
        }
        config.apply_token_overrides(|name| env::var(name).ok());
        config.validate()?;
        Ok(config)
    }

    pub fn apply_token_overrides(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        for source in &mut self.sources {
            let name = token_variable(source.kind);
            if let Some(token) = lookup(&name).filter(|t| !t.is_empty()) {
                source.auth_token = Some(token);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset_path.as_os_str().is_empty() {
            bail!("dataset_path must not be empty");
        }
        for source in &self.sources {
            source.validate()?;
        }
        self.gate.validate()?;
        if let Some(url) = &self.webhook_url {
            if !(url.starts_with("http://") || url.starts_with("https://")) {
                bail!("webhook_url must be an http(s) URL, got `{url}`");
            }
        }
        if self.webhook_timeout_secs == 0 {
            bail!("webhook_timeout_secs must be positive");
        }
        self.utc_offset()?;
        Ok(())
    }

    pub fn utc_offset(&self) -> Result<FixedOffset> {
        self.timezone
            .parse()
            .map_err(|_| anyhow::anyhow!("timezone must be a UTC offset like +02:00, got `{}`", self.timezone))
    }

    pub fn candidate_path(&self) -> PathBuf {
        sidecar(&self.dataset_path, ".candidate.json")
    }

    pub fn lock_path(&self) -> PathBuf {
        sidecar(&self.dataset_path, ".lock")
    }
}

pub fn token_variable(kind: SourceKind) -> String {
    format!("{TOKEN_ENV_PREFIX}{}", kind.as_str().to_ascii_uppercase())
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}
