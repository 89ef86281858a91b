//! Flat `section.key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored; values may be double-quoted.
//! Every key has a default, so an empty file is a valid configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::aggregation::AggregationMode;
use crate::clustering::ClusteringConfig;
use crate::error::ConfigError;
use crate::eval::{ClusterMethod, MethodVariant};
use crate::providers::ProviderConfig;
use crate::routing::GranularityConfig;
use crate::scoring::ScoringConfig;

/// Which units are embedded and clustered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClusterUnits {
    /// Retained anchor units plus reference sentences.
    #[default]
    PostGranularity,
    /// Every sentence of every response; anchor units take their parent
    /// sentence's membership.
    SentencesOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NliKind {
    /// Offline lexical-overlap stand-in.
    #[default]
    Lexical,
    /// Offline hash-derived logits.
    Hash,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EmbedKind {
    /// Offline hashed bag-of-words vectors.
    #[default]
    Bow,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DecomposeKind {
    /// Offline rule-based splitter.
    #[default]
    Rule,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvidersConfig {
    pub nli_kind: NliKind,
    pub embed_kind: EmbedKind,
    pub decompose_kind: DecomposeKind,
    pub nli: ProviderConfig,
    pub embed: ProviderConfig,
    pub decompose: ProviderConfig,
    /// Dimension of the offline bag-of-words embedder.
    pub bow_dim: usize,
    /// Artificial per-call latency of the offline decomposer.
    pub decompose_latency_ms: u64,
}

impl Default for ProvidersConfig {
    fn default() -> Self {
        Self {
            nli_kind: NliKind::default(),
            embed_kind: EmbedKind::default(),
            decompose_kind: DecomposeKind::default(),
            nli: ProviderConfig::default(),
            embed: ProviderConfig::default(),
            decompose: ProviderConfig::default(),
            bow_dim: 64,
            decompose_latency_ms: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Set when the method was chosen by variant name.
    pub variant: Option<MethodVariant>,
    pub scoring: ScoringConfig,
    pub granularity: GranularityConfig,
    pub clustering: ClusteringConfig,
    pub cluster_method: ClusterMethod,
    pub cluster_units: ClusterUnits,
    pub aggregation: AggregationMode,
    pub providers: ProvidersConfig,
    /// Persistent provider cache; in-memory when absent.
    pub cache_dir: Option<PathBuf>,
    pub report_dir: Option<PathBuf>,
    /// Prompt worker threads; 0 means one per logical core.
    pub workers: usize,
    /// Record wall-clock stage durations. Off makes reports byte-reproducible.
    pub report_timings: bool,
    /// Write a clustering dump next to each report.
    pub debug_dump: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let (mode, method, aggregation) = MethodVariant::Agsc.settings();
        Self {
            seed: 0,
            variant: None,
            scoring: ScoringConfig::default(),
            granularity: GranularityConfig {
                mode,
                ..GranularityConfig::default()
            },
            clustering: ClusteringConfig::default(),
            cluster_method: method,
            cluster_units: ClusterUnits::default(),
            aggregation,
            providers: ProvidersConfig::default(),
            cache_dir: None,
            report_dir: None,
            workers: 0,
            report_timings: true,
            debug_dump: false,
        }
    }
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        message: message.into(),
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| invalid(key, format!("`{value}`: {e}")))
}

fn boolean(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(invalid(key, format!("`{value}` is not true or false"))),
    }
}

fn named<T: DeserializeOwned>(key: &str, value: &str) -> Result<T, ConfigError> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| invalid(key, format!("unknown option `{value}`")))
}

fn name_of<T: Serialize>(value: &T) -> String {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::String(s)) => s,
        other => panic!("not a unit enum: {other:?}"),
    }
}

fn set_provider(cfg: &mut ProviderConfig, field: &str, key: &str, value: &str) -> Result<bool, ConfigError> {
    match field {
        "endpoint" => cfg.endpoint = value.to_string(),
        "auth_env_var" => cfg.auth_env_var = value.to_string(),
        "batch_size" => cfg.batch_size = num(key, value)?,
        "max_in_flight" => cfg.max_in_flight = num(key, value)?,
        "retry.max_attempts" => cfg.retry.max_attempts = num(key, value)?,
        "retry.base_backoff_ms" => cfg.retry.base_backoff_ms = num(key, value)?,
        "timeout_ms" => cfg.timeout_ms = num(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut explicit_method = None;
        let mut seen = std::collections::BTreeSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: idx + 1,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let key = key.trim();
            let mut value = value.trim();
            if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
                value = &value[1..value.len() - 1];
            }
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Syntax {
                    line: idx + 1,
                    message: format!("duplicate key `{key}`"),
                });
            }
            if matches!(key, "granularity.mode" | "clustering.method" | "aggregation.mode") {
                explicit_method.get_or_insert(key.to_string());
            }
            cfg.set(key, value)?;
        }
        if let (Some(_), Some(key)) = (cfg.variant, explicit_method) {
            return Err(invalid(
                "variant",
                format!("cannot be combined with `{key}`; a variant fixes the method"),
            ));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "seed" => self.seed = num(key, value)?,
            "variant" => {
                let v: MethodVariant = value.parse().map_err(|e: String| invalid(key, e))?;
                self.apply_variant(v);
            }
            "workers" => self.workers = num(key, value)?,
            "cache_dir" => self.cache_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            "report_dir" => self.report_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            "report.timings" => self.report_timings = boolean(key, value)?,
            "report.debug_dump" => self.debug_dump = boolean(key, value)?,

            "scoring.chunk_budget_chars" => self.scoring.chunk_budget_chars = num(key, value)?,
            "scoring.chunk_stride_chars" => self.scoring.chunk_stride_chars = num(key, value)?,
            "scoring.nli_direction" => self.scoring.nli_direction = named(key, value)?,
            "scoring.distribution_chunks" => self.scoring.distribution_chunks = named(key, value)?,

            "granularity.tau" => self.granularity.tau = num(key, value)?,
            "granularity.mode" => self.granularity.mode = named(key, value)?,
            "granularity.unit_aggregation" => self.granularity.unit_aggregation = named(key, value)?,

            "clustering.method" => self.cluster_method = named(key, value)?,
            "clustering.units" => self.cluster_units = named(key, value)?,
            "clustering.k_limit" => self.clustering.k_limit = num(key, value)?,
            "clustering.bic_epsilon" => self.clustering.bic_epsilon = num(key, value)?,
            "clustering.cov_reg" => self.clustering.cov_reg = num(key, value)?,
            "clustering.em_tol" => self.clustering.em_tol = num(key, value)?,
            "clustering.em_max_iter" => self.clustering.em_max_iter = num(key, value)?,
            "clustering.n_init" => self.clustering.n_init = num(key, value)?,
            "clustering.target_dim" => self.clustering.target_dim = num(key, value)?,

            "aggregation.mode" => self.aggregation = named(key, value)?,

            "providers.nli.kind" => self.providers.nli_kind = named(key, value)?,
            "providers.embed.kind" => self.providers.embed_kind = named(key, value)?,
            "providers.decompose.kind" => self.providers.decompose_kind = named(key, value)?,
            "providers.embed.bow_dim" => self.providers.bow_dim = num(key, value)?,
            "providers.decompose.latency_ms" => self.providers.decompose_latency_ms = num(key, value)?,
            _ => {
                let handled = if let Some(f) = key.strip_prefix("providers.nli.") {
                    set_provider(&mut self.providers.nli, f, key, value)?
                } else if let Some(f) = key.strip_prefix("providers.embed.") {
                    set_provider(&mut self.providers.embed, f, key, value)?
                } else if let Some(f) = key.strip_prefix("providers.decompose.") {
                    set_provider(&mut self.providers.decompose, f, key, value)?
                } else {
                    false
                };
                if !handled {
                    return Err(ConfigError::UnknownKey(key.to_string()));
                }
            }
        }
        Ok(())
    }

    /// Select a method by name, overriding the granularity, clustering and
    /// aggregation modes.
    pub fn apply_variant(&mut self, variant: MethodVariant) {
        let (mode, method, aggregation) = variant.settings();
        self.variant = Some(variant);
        self.granularity.mode = mode;
        self.cluster_method = method;
        self.aggregation = aggregation;
    }

    /// The named variant matching the configured modes, if any.
    pub fn effective_variant(&self) -> Option<MethodVariant> {
        self.variant.or_else(|| {
            MethodVariant::from_settings((self.granularity.mode, self.cluster_method, self.aggregation))
        })
    }

    /// Clustering settings with the run seed applied.
    pub fn clustering_config(&self) -> ClusteringConfig {
        ClusteringConfig {
            seed: self.seed,
            ..self.clustering.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scoring.validate().map_err(|m| invalid("scoring", m))?;
        self.granularity.validate().map_err(|m| invalid("granularity.tau", m))?;
        self.clustering.validate().map_err(|m| invalid("clustering", m))?;
        for (name, p) in [
            ("providers.nli", &self.providers.nli),
            ("providers.embed", &self.providers.embed),
            ("providers.decompose", &self.providers.decompose),
        ] {
            p.validate().map_err(|m| invalid(name, m))?;
        }
        if self.providers.bow_dim == 0 {
            return Err(invalid("providers.embed.bow_dim", "must be positive"));
        }
        Ok(())
    }

    /// Render in the file format. `parse(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("seed", self.seed.to_string());
        match self.variant {
            Some(v) => line("variant", v.name().to_string()),
            None => {
                line("granularity.mode", name_of(&self.granularity.mode));
                line("clustering.method", name_of(&self.cluster_method));
                line("aggregation.mode", name_of(&self.aggregation));
            }
        }
        line("workers", self.workers.to_string());
        if let Some(p) = &self.cache_dir {
            line("cache_dir", format!("\"{}\"", p.display()));
        }
        if let Some(p) = &self.report_dir {
            line("report_dir", format!("\"{}\"", p.display()));
        }
        line("report.timings", self.report_timings.to_string());
        line("report.debug_dump", self.debug_dump.to_string());
        let s = &self.scoring;
        line("scoring.chunk_budget_chars", s.chunk_budget_chars.to_string());
        line("scoring.chunk_stride_chars", s.chunk_stride_chars.to_string());
        line("scoring.nli_direction", name_of(&s.nli_direction));
        line("scoring.distribution_chunks", name_of(&s.distribution_chunks));
        line("granularity.tau", format!("{:?}", self.granularity.tau));
        line("granularity.unit_aggregation", name_of(&self.granularity.unit_aggregation));
        let c = &self.clustering;
        line("clustering.units", name_of(&self.cluster_units));
        line("clustering.k_limit", c.k_limit.to_string());
        line("clustering.bic_epsilon", format!("{:?}", c.bic_epsilon));
        line("clustering.cov_reg", format!("{:?}", c.cov_reg));
        line("clustering.em_tol", format!("{:?}", c.em_tol));
        line("clustering.em_max_iter", c.em_max_iter.to_string());
        line("clustering.n_init", c.n_init.to_string());
        line("clustering.target_dim", c.target_dim.to_string());
        let p = &self.providers;
        line("providers.nli.kind", name_of(&p.nli_kind));
        line("providers.embed.kind", name_of(&p.embed_kind));
        line("providers.decompose.kind", name_of(&p.decompose_kind));
        line("providers.embed.bow_dim", p.bow_dim.to_string());
        line("providers.decompose.latency_ms", p.decompose_latency_ms.to_string());
        for (name, cfg) in [("nli", &p.nli), ("embed", &p.embed), ("decompose", &p.decompose)] {
            line(&format!("providers.{name}.endpoint"), format!("\"{}\"", cfg.endpoint));
            line(&format!("providers.{name}.auth_env_var"), format!("\"{}\"", cfg.auth_env_var));
            line(&format!("providers.{name}.batch_size"), cfg.batch_size.to_string());
            line(&format!("providers.{name}.max_in_flight"), cfg.max_in_flight.to_string());
            line(&format!("providers.{name}.retry.max_attempts"), cfg.retry.max_attempts.to_string());
            line(&format!("providers.{name}.retry.base_backoff_ms"), cfg.retry.base_backoff_ms.to_string());
            line(&format!("providers.{name}.timeout_ms"), cfg.timeout_ms.to_string());
        }
        out
    }
}
