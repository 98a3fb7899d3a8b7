//! Backend configuration file (`[[backend]]` tables in TOML).
//!
//! Credentials never live in the file: `api_key_env` names the environment
//! variable holding the key.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::http::{ChatCompletionBackend, LocalHttpBackend};
use super::ledger::Price;
use super::mock::{MockBackend, MockTable};
use super::retry::RetryPolicy;
use super::{Backend, GatewayError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    ChatCompletion,
    LocalHttp,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSpec {
    pub name: String,
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    /// Environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(flatten)]
    pub price: Price,
    #[serde(default)]
    pub requests_per_minute: Option<u32>,
    #[serde(default)]
    pub max_in_flight: Option<usize>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Mock only: JSON lookup table, relative to the config file.
    #[serde(default)]
    pub table: Option<String>,
}

fn default_temperature() -> f64 {
    1.0
}

fn default_max_output_tokens() -> u32 {
    512
}

fn default_timeout_secs() -> u64 {
    60
}

impl BackendSpec {
    /// A free, unthrottled mock spec.
    pub fn mock(name: &str) -> Self {
        BackendSpec {
            name: name.to_string(),
            kind: BackendKind::Mock,
            endpoint: None,
            model: None,
            api_key_env: None,
            temperature: default_temperature(),
            max_output_tokens: default_max_output_tokens(),
            price: Price::default(),
            requests_per_minute: None,
            max_in_flight: None,
            timeout_secs: default_timeout_secs(),
            table: None,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: String| Err(GatewayError::Config(format!("backend `{}`: {m}", self.name)));
        if self.name.trim().is_empty() {
            return Err(GatewayError::Config("backend name is empty".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature {} must be >= 0", self.temperature));
        }
        self.price
            .validate()
            .map_err(|m| GatewayError::Config(format!("backend `{}`: {m}", self.name)))?;
        if self.requests_per_minute == Some(0) {
            return bad("requests_per_minute must be positive".into());
        }
        if self.max_in_flight == Some(0) {
            return bad("max_in_flight must be positive".into());
        }
        if matches!(self.kind, BackendKind::ChatCompletion | BackendKind::LocalHttp) && self.endpoint.is_none() {
            return bad("endpoint is required".into());
        }
        Ok(())
    }
}

/// Parsed backend configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default, rename = "backend")]
    pub backends: Vec<BackendSpec>,
}

impl GatewayConfig {
    pub fn parse(text: &str) -> Result<Self, GatewayError> {
        let config: GatewayConfig = toml::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))?;
        let mut seen = std::collections::BTreeSet::new();
        for spec in &config.backends {
            spec.validate()?;
            if !seen.insert(spec.name.as_str()) {
                return Err(GatewayError::Config(format!("duplicate backend `{}`", spec.name)));
            }
        }
        Ok(config)
    }

    /// Loads a config file; mock table paths are resolved relative to it.
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for spec in &mut config.backends {
            if let Some(table) = &spec.table {
                spec.table = Some(base.join(table).to_string_lossy().into_owned());
            }
        }
        Ok(config)
    }

    /// Configuration with a single mock backend named `mock`.
    pub fn default_mock() -> Self {
        GatewayConfig {
            retry: RetryPolicy::default(),
            backends: vec![BackendSpec::mock("mock")],
        }
    }
}

pub(crate) fn build_backend(spec: &BackendSpec) -> Result<Arc<dyn Backend>, GatewayError> {
    let timeout = Duration::from_secs(spec.timeout_secs);
    Ok(match spec.kind {
        BackendKind::Mock => {
            let table = match &spec.table {
                Some(path) => MockTable::load(Path::new(path))?,
                None => MockTable::default(),
            };
            Arc::new(MockBackend::new(table))
        }
        BackendKind::ChatCompletion => {
            let key = match &spec.api_key_env {
                Some(var) => Some(std::env::var(var).map_err(|_| {
                    GatewayError::Config(format!(
                        "backend `{}`: environment variable {var} is not set",
                        spec.name
                    ))
                })?),
                None => None,
            };
            Arc::new(ChatCompletionBackend::new(
                spec.endpoint.clone().unwrap_or_default(),
                spec.model.clone().unwrap_or_default(),
                key,
                timeout,
            ))
        }
        BackendKind::LocalHttp => Arc::new(LocalHttpBackend::new(
            spec.endpoint.clone().unwrap_or_default(),
            timeout,
        )),
    })
}
