//! Run configuration read from TOML, with `${VAR}` environment interpolation
//! in string values.
//!
//! ```toml
//! seed = 7
//! cache_dir = "cache"
//! out_dir = "out"
//! parallelism = 4
//! overpass_endpoint = "https://overpass-api.de/api/interpreter"
//!
//! [metrics]
//! tau = 10.0
//!
//! [pipeline]
//! representation = "topology-direction"
//!
//! [providers.gpt]
//! endpoint = "https://api.openai.com/v1/chat/completions"
//! model = "gpt-4o"
//! api_key_env = "OPENAI_API_KEY"
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gaptrace_core::baselines::HmmParams;
use gaptrace_core::llm::{PipelineConfig, ProviderConfig};
use gaptrace_core::metrics::MetricsConfig;
use gaptrace_core::roadnet::DEFAULT_OVERPASS_ENDPOINT;
use gaptrace_core::traces::{FilterConfig, MaskConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("environment variable {0} referenced in config is not set")]
    MissingVar(String),
    #[error("unterminated ${{...}} in config value {0:?}")]
    Unterminated(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub cache_dir: PathBuf,
    pub out_dir: PathBuf,
    pub overpass_endpoint: String,
    pub seed: u64,
    pub parallelism: usize,
    /// Train / dev / test proportions.
    pub split_ratios: [f64; 3],
    pub filter: FilterConfig,
    pub mask: MaskConfig,
    pub metrics: MetricsConfig,
    pub hmm: HmmParams,
    pub pipeline: PipelineConfig,
    pub providers: BTreeMap<String, ProviderConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            cache_dir: PathBuf::from("cache"),
            out_dir: PathBuf::from("out"),
            overpass_endpoint: DEFAULT_OVERPASS_ENDPOINT.to_string(),
            seed: 0,
            parallelism: 1,
            split_ratios: [0.7, 0.15, 0.15],
            filter: FilterConfig::default(),
            mask: MaskConfig::default(),
            metrics: MetricsConfig::default(),
            hmm: HmmParams::default(),
            pipeline: PipelineConfig::default(),
            providers: BTreeMap::new(),
        }
    }
}

/// Replaces `${NAME}` with the value from `lookup`; `$$` escapes a dollar.
pub fn interpolate(
    s: &str,
    lookup: &dyn Fn(&str) -> Option<String>,
) -> Result<String, ConfigError> {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('$') {
        out.push_str(&rest[..i]);
        let tail = &rest[i + 1..];
        if let Some(after) = tail.strip_prefix('$') {
            out.push('$');
            rest = after;
        } else if let Some(body) = tail.strip_prefix('{') {
            let end = body
                .find('}')
                .ok_or_else(|| ConfigError::Unterminated(s.to_string()))?;
            let name = &body[..end];
            out.push_str(&lookup(name).ok_or_else(|| ConfigError::MissingVar(name.to_string()))?);
            rest = &body[end + 1..];
        } else {
            out.push('$');
            rest = tail;
        }
    }
    out.push_str(rest);
    Ok(out)
}

fn interpolate_value(
    v: &mut toml::Value,
    lookup: &dyn Fn(&str) -> Option<String>,
) -> Result<(), ConfigError> {
    match v {
        toml::Value::String(s) => *s = interpolate(s, lookup)?,
        toml::Value::Array(items) => {
            for item in items {
                interpolate_value(item, lookup)?;
            }
        }
        toml::Value::Table(t) => {
            for (_, item) in t.iter_mut() {
                interpolate_value(item, lookup)?;
            }
        }
        _ => {}
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(
        text: &str,
        lookup: &dyn Fn(&str) -> Option<String>,
    ) -> Result<Self, ConfigError> {
        let mut value: toml::Value = toml::from_str(text)?;
        interpolate_value(&mut value, lookup)?;
        let cfg: RunConfig = value.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text, &|k| std::env::var(k).ok())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.parallelism == 0 {
            return Err(ConfigError::Invalid("parallelism must be >= 1".into()));
        }
        if !(self.metrics.tau > 0.0) {
            return Err(ConfigError::Invalid("metrics.tau must be > 0".into()));
        }
        if !(self.metrics.large_gap_threshold > 0.0) {
            return Err(ConfigError::Invalid(
                "metrics.large_gap_threshold must be > 0".into(),
            ));
        }
        self.hmm
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("hmm: {e}")))?;
        for (name, p) in &self.providers {
            p.validate()
                .map_err(|e| ConfigError::Invalid(format!("providers.{name}: {e}")))?;
        }
        Ok(())
    }
}
