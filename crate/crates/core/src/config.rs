//! Pipeline parameters and backend settings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{field} must be in [0, 1], got {value}")]
    OutOfUnitRange { field: &'static str, value: f64 },
    #[error("{field} must be at least 1")]
    NotPositive { field: &'static str },
    #[error("chunk_overlap ({overlap}) must be smaller than chunk_size ({size})")]
    Overlap { overlap: usize, size: usize },
    #[error("unknown pipeline mode {0:?} (expected plain, rag, rag_kg, rag_val or knight)")]
    UnknownMode(String),
    #[error("missing setting: {0}")]
    Missing(&'static str),
    #[error("config file {path}: {message}")]
    File { path: String, message: String },
}

/// The five stage configurations compared in the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineMode {
    Plain,
    Rag,
    RagKg,
    RagVal,
    Knight,
}

impl PipelineMode {
    pub const ALL: [PipelineMode; 5] =
        [PipelineMode::Plain, PipelineMode::Rag, PipelineMode::RagKg, PipelineMode::RagVal, PipelineMode::Knight];

    pub fn uses_retrieval(self) -> bool {
        self != PipelineMode::Plain
    }

    pub fn uses_kg(self) -> bool {
        matches!(self, PipelineMode::RagKg | PipelineMode::Knight)
    }

    pub fn uses_validator(self) -> bool {
        matches!(self, PipelineMode::RagVal | PipelineMode::Knight)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineMode::Plain => "plain",
            PipelineMode::Rag => "rag",
            PipelineMode::RagKg => "rag_kg",
            PipelineMode::RagVal => "rag_val",
            PipelineMode::Knight => "knight",
        }
    }
}

impl fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PipelineMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| ConfigError::UnknownMode(s.to_string()))
    }
}

/// Where a child node may be created relative to `d_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthGate {
    /// Children are added only when `parent.depth + 1 <= d_max`, so every
    /// node lies in the depth ball.
    Add,
    /// The literal loop order: children are always added, only enqueueing is
    /// gated. Leaves may sit at `d_max + 1`.
    EnqueueOnly,
}

/// Order in which queued nodes are expanded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expansion {
    /// All nodes of one depth run their pure stages concurrently; graph
    /// mutations are applied serially in node-id order.
    LevelSynchronous,
    /// One node at a time from a FIFO queue.
    Fifo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub d_max: usize,
    pub max_branches: usize,
    pub eta_overlap: f64,
    pub lambda_max: f64,
    pub tau_alias: f64,
    pub delta_option: f64,
    pub score_floor: f64,
    pub temp_desc: f64,
    pub temp_triples: f64,
    pub max_tokens_triples: u32,
    pub temp_title_check: f64,
    pub temp_mcq: f64,
    pub temp_validate: f64,
    pub chunk_size: usize,
    pub chunk_overlap: usize,
    pub search_limit: usize,
    pub summary_char_limit: usize,
    /// BM25 survivors handed to the re-ranker.
    pub first_stage_top: usize,
    /// Passages kept after re-ranking.
    pub top_k: usize,
    pub nli_threshold: f64,
    pub validation_sample_rate: f64,
    pub pipeline_mode: PipelineMode,
    pub rng_seed: u64,
    pub num_q: usize,
    /// Hop count of generated questions. Defaults to `d_max`.
    pub level: Option<usize>,
    pub depth_gate: DepthGate,
    pub expansion: Expansion,
    pub max_inflight: usize,
    pub max_attempts: u32,
    /// Generation attempts per requested item before giving up.
    pub oversample: usize,
    /// Fail on adapter outages instead of skipping the check.
    pub strict_adapters: bool,
    /// Force the validator on in modes that do not include it.
    pub validate: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            d_max: 2,
            max_branches: 2,
            eta_overlap: 0.35,
            lambda_max: 0.15,
            tau_alias: 0.90,
            delta_option: 0.85,
            score_floor: 0.15,
            temp_desc: 0.4,
            temp_triples: 0.1,
            max_tokens_triples: 2000,
            temp_title_check: 0.0,
            temp_mcq: 0.4,
            temp_validate: 0.0,
            chunk_size: 1000,
            chunk_overlap: 100,
            search_limit: 5,
            summary_char_limit: 1000,
            first_stage_top: 50,
            top_k: 5,
            nli_threshold: 0.5,
            validation_sample_rate: 1.0,
            pipeline_mode: PipelineMode::Knight,
            rng_seed: 0,
            num_q: 10,
            level: None,
            depth_gate: DepthGate::Add,
            expansion: Expansion::LevelSynchronous,
            max_inflight: 4,
            max_attempts: 3,
            oversample: 3,
            strict_adapters: false,
            validate: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fractions = [
            ("eta_overlap", self.eta_overlap),
            ("lambda_max", self.lambda_max),
            ("tau_alias", self.tau_alias),
            ("delta_option", self.delta_option),
            ("score_floor", self.score_floor),
            ("temp_desc", self.temp_desc),
            ("temp_triples", self.temp_triples),
            ("temp_title_check", self.temp_title_check),
            ("temp_mcq", self.temp_mcq),
            ("temp_validate", self.temp_validate),
            ("nli_threshold", self.nli_threshold),
            ("validation_sample_rate", self.validation_sample_rate),
        ];
        for (field, value) in fractions {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::OutOfUnitRange { field, value });
            }
        }
        let positives = [
            ("d_max", self.d_max),
            ("max_branches", self.max_branches),
            ("chunk_size", self.chunk_size),
            ("top_k", self.top_k),
            ("first_stage_top", self.first_stage_top),
            ("num_q", self.num_q),
            ("max_inflight", self.max_inflight),
            ("oversample", self.oversample),
            ("max_tokens_triples", self.max_tokens_triples as usize),
            ("max_attempts", self.max_attempts as usize),
            ("level", self.level.unwrap_or(1)),
        ];
        for (field, value) in positives {
            if value == 0 {
                return Err(ConfigError::NotPositive { field });
            }
        }
        if self.chunk_overlap >= self.chunk_size {
            return Err(ConfigError::Overlap { overlap: self.chunk_overlap, size: self.chunk_size });
        }
        Ok(())
    }

    pub fn question_level(&self) -> usize {
        self.level.unwrap_or(self.d_max)
    }

    pub fn validator_enabled(&self) -> bool {
        self.validate || self.pipeline_mode.uses_validator()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Deterministic fixture-driven backends, fully offline.
    Mock,
    /// OpenAI-compatible chat plus the public retrieval and scoring services.
    Network,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreKind {
    Memory,
    Bolt,
}

/// Connection settings for backends and stores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSettings {
    pub backend: Backend,
    pub store: StoreKind,
    pub openai_api_key: Option<String>,
    pub openai_model: String,
    pub openai_base_url: String,
    pub embedding_model: String,
    pub wikipedia_base_url: String,
    pub wikidata_base_url: String,
    pub languagetool_url: String,
    pub nli_url: Option<String>,
    pub probe_url: Option<String>,
    pub neo4j_uri: Option<String>,
    pub neo4j_user: Option<String>,
    pub neo4j_pass: Option<String>,
    /// Directory holding `corpus/` and `mock/`; the built-in fixtures are
    /// used when absent.
    pub fixtures_dir: Option<String>,
    pub request_timeout_secs: u64,
    /// Admissible Wikidata type ids per relation, e.g. `born_in = ["Q515"]`.
    /// Relations without an entry pass the type check.
    pub relation_types: BTreeMap<String, BTreeSet<String>>,
}

impl Default for BackendSettings {
    fn default() -> Self {
        BackendSettings {
            backend: Backend::Mock,
            store: StoreKind::Memory,
            openai_api_key: None,
            openai_model: "gpt-4o-mini".into(),
            openai_base_url: "https://api.openai.com/v1".into(),
            embedding_model: "text-embedding-3-small".into(),
            wikipedia_base_url: "https://en.wikipedia.org".into(),
            wikidata_base_url: "https://www.wikidata.org".into(),
            languagetool_url: "https://api.languagetool.org/v2/check".into(),
            nli_url: None,
            probe_url: None,
            neo4j_uri: None,
            neo4j_user: None,
            neo4j_pass: None,
            fixtures_dir: None,
            request_timeout_secs: 60,
            relation_types: BTreeMap::new(),
        }
    }
}

/// Everything a run needs: pipeline parameters plus backend settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub pipeline: PipelineConfig,
    pub backend: BackendSettings,
}

impl Settings {
    pub fn from_toml_str(text: &str, path: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::File { path: path.to_string(), message: e.to_string() })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::File { path: shown.clone(), message: e.to_string() })?;
        Self::from_toml_str(&text, &shown)
    }

    /// TOML dump with secrets replaced by a fixed mask.
    pub fn redacted_toml(&self) -> String {
        let mut shown = self.clone();
        for secret in [&mut shown.backend.openai_api_key, &mut shown.backend.neo4j_pass] {
            if secret.is_some() {
                *secret = Some(REDACTED.to_string());
            }
        }
        toml::to_string(&shown).expect("settings serialize to TOML")
    }
}

pub const REDACTED: &str = "••••";
