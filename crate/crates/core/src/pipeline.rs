//! End-to-end orchestration for the five pipeline modes, plus the
//! individual stages used by the CLI subcommands.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::mock::{MockEmbedder, MockGrammar, MockNli, MockPolicy, MockProbe, MockTypes};
use crate::adapters::network::{HttpNli, HttpProbe, LanguageTool, OpenAiEmbedder, OpenAiModeration, WikidataTypes};
use crate::adapters::{AdapterError, GrammarChecker, NliScorer, ProbeScorer};
use crate::builder::{build_kg, BuildContext, BuildReport};
use crate::config::{Backend, BackendSettings, ConfigError, PipelineConfig, PipelineMode};
use crate::curation::{Curator, RejectRecord};
use crate::fixtures::{FixtureError, Fixtures};
use crate::gateway::mock::MockLlm;
use crate::gateway::openai::OpenAiChat;
use crate::gateway::{Gateway, GatewayError, TaskTag, TokenLedger};
use crate::metrics::{evaluate, MetricAdapters, MetricsReport};
use crate::model::{GraphError, KnowledgeGraph, Topic};
use crate::qgen::{self, GenerationReport, McqItem, PathJob, QuestionDeduper};
use crate::retrieval::rerank::{EmbeddingReranker, LexicalReranker};
use crate::retrieval::source::{FixtureCorpus, WikipediaRest};
use crate::retrieval::{RetrievalError, RetrievalResult, Retriever};
use crate::store::{self, DatasetRecord, GraphSnapshot, Provenance, StoreError};
use crate::synthesis::evidence_block;
use crate::validation::{validate_item, LlmStatus, ValidationSummary};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Fixtures(#[from] FixtureError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("backend failure: {0}")]
    Gateway(#[from] GatewayError),
    #[error("graph build aborted: {0}")]
    BuildAborted(String),
    #[error("retrieval failed: {0}")]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Every external dependency of a run.
pub struct Services {
    pub gateway: Gateway,
    pub retriever: Retriever,
    pub curator: Curator,
    pub probe: Arc<dyn ProbeScorer>,
    pub grammar: Arc<dyn GrammarChecker>,
}

/// Stand-in for a scoring service with no configured endpoint; every call
/// fails, so the dependent check or metric is skipped.
struct Unconfigured(&'static str);

impl NliScorer for Unconfigured {
    fn entailment(&self, _: &str, _: &str) -> Result<f64, AdapterError> {
        Err(AdapterError::new(self.0, "no endpoint configured"))
    }
}

impl ProbeScorer for Unconfigured {
    fn logits(&self, _: &str, _: &[String; 4], _: &str) -> Result<[f64; 4], AdapterError> {
        Err(AdapterError::new(self.0, "no endpoint configured"))
    }
}

impl Services {
    pub fn mock(fixtures: &Fixtures, config: &PipelineConfig) -> Self {
        let t = &fixtures.tables;
        Services {
            gateway: Gateway::new(Arc::new(MockLlm::new(t, config.rng_seed)), config.max_inflight, config.max_attempts),
            retriever: Retriever {
                source: Arc::new(FixtureCorpus::new(fixtures.corpus.clone())),
                reranker: Arc::new(LexicalReranker),
            },
            curator: Curator {
                embedder: Arc::new(MockEmbedder::new(t)),
                nli: Arc::new(MockNli::new(t)),
                types: Arc::new(MockTypes::new(t)),
                policy: Arc::new(MockPolicy::new(t)),
            },
            probe: Arc::new(MockProbe::new(t)),
            grammar: Arc::new(MockGrammar::new(t)),
        }
    }

    pub fn network(settings: &BackendSettings, config: &PipelineConfig) -> Result<Self, PipelineError> {
        let key = settings.openai_api_key.as_deref().ok_or(ConfigError::Missing("OPENAI_API_KEY"))?;
        if config.strict_adapters && settings.relation_types.is_empty() {
            return Err(ConfigError::Missing("backend.relation_types (required with strict_adapters)").into());
        }
        let timeout = Duration::from_secs(settings.request_timeout_secs.max(1));
        let chat = OpenAiChat::new(&settings.openai_base_url, key, &settings.openai_model, timeout);
        let embedder = Arc::new(OpenAiEmbedder::new(&settings.openai_base_url, key, &settings.embedding_model, timeout));
        let nli: Arc<dyn NliScorer> = match &settings.nli_url {
            Some(url) => Arc::new(HttpNli::new(url, timeout)),
            None => Arc::new(Unconfigured("nli")),
        };
        let probe: Arc<dyn ProbeScorer> = match &settings.probe_url {
            Some(url) => Arc::new(HttpProbe::new(url, timeout)),
            None => Arc::new(Unconfigured("probe")),
        };
        Ok(Services {
            gateway: Gateway::new(Arc::new(chat), config.max_inflight, config.max_attempts),
            retriever: Retriever {
                source: Arc::new(WikipediaRest::new(&settings.wikipedia_base_url, timeout)),
                reranker: Arc::new(EmbeddingReranker { embedder: embedder.clone() }),
            },
            curator: Curator {
                embedder,
                nli,
                types: Arc::new(WikidataTypes::new(&settings.wikidata_base_url, settings.relation_types.clone(), timeout)),
                policy: Arc::new(OpenAiModeration::new(&settings.openai_base_url, key, timeout)),
            },
            probe,
            grammar: Arc::new(LanguageTool::new(&settings.languagetool_url, timeout)),
        })
    }

    pub fn from_settings(settings: &BackendSettings, config: &PipelineConfig) -> Result<Self, PipelineError> {
        match settings.backend {
            Backend::Mock => {
                let fixtures = match &settings.fixtures_dir {
                    Some(dir) => Fixtures::from_dir(Path::new(dir))?,
                    None => Fixtures::builtin(),
                };
                Ok(Services::mock(&fixtures, config))
            }
            Backend::Network => Services::network(settings, config),
        }
    }

    pub fn metric_adapters(&self) -> MetricAdapters<'_> {
        MetricAdapters { probe: self.probe.as_ref(), nli: self.curator.nli.as_ref(), grammar: self.grammar.as_ref() }
    }
}

/// Task tags a mode is expected to put on the token ledger.
pub fn expected_tags(mode: PipelineMode, validate: bool) -> Vec<TaskTag> {
    let mut tags = Vec::new();
    if mode.uses_kg() {
        tags.extend([TaskTag::Gloss, TaskTag::Triples]);
    }
    if mode.uses_retrieval() {
        tags.push(TaskTag::TitleCheck);
    }
    tags.push(TaskTag::McqForward);
    if mode.uses_kg() {
        tags.push(TaskTag::McqReverse);
    }
    if validate || mode.uses_validator() {
        tags.push(TaskTag::Validate);
    }
    tags.sort();
    tags
}

#[derive(Debug)]
pub struct GraphBuild {
    pub graph: KnowledgeGraph,
    pub report: BuildReport,
    pub rejects: Vec<RejectRecord>,
}

pub fn build_graph(services: &Services, config: &PipelineConfig, topic: &Topic) -> Result<GraphBuild, PipelineError> {
    config.validate()?;
    let ctx = BuildContext {
        gateway: &services.gateway,
        retriever: &services.retriever,
        curator: &services.curator,
        config,
    };
    let out = build_kg(topic, &ctx);
    if let Some(cause) = out.aborted {
        return Err(PipelineError::BuildAborted(cause));
    }
    Ok(GraphBuild { graph: out.graph, report: out.report, rejects: out.rejects })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Generated {
    /// Emitted items in output order.
    pub items: Vec<McqItem>,
    pub generation: GenerationReport,
    pub validation: Option<ValidationSummary>,
    pub candidates: usize,
}

/// Generates until `num_q` items survive (validation included when
/// `validate` is set) or the candidates run out. `order` gives each
/// candidate's position in the output.
fn generate_loop<T, K, F>(
    services: &Services,
    config: &PipelineConfig,
    candidates: &[T],
    validate: bool,
    order: impl Fn(&T) -> K,
    generate: F,
) -> Result<Generated, PipelineError>
where
    T: Sync,
    K: Ord,
    F: Fn(&T) -> Result<McqItem, qgen::QgenError> + Sync,
{
    let deduper = QuestionDeduper::default();
    let mut out = Generated { candidates: candidates.len(), ..Default::default() };
    let mut summary = ValidationSummary::default();
    let mut kept: Vec<(usize, McqItem)> = Vec::new();
    let mut next = 0;
    while kept.len() < config.num_q && next < candidates.len() {
        let before = out.generation.attempted;
        let (batch, fatal) = qgen::generate_until(
            &candidates[next..],
            config.num_q - kept.len(),
            config.max_inflight,
            &deduper,
            &mut out.generation,
            &generate,
        );
        let batch: Vec<(usize, McqItem)> = batch.into_iter().map(|(i, item)| (next + i, item)).collect();
        next += out.generation.attempted - before;
        if validate {
            let reports: Vec<_> = batch
                .par_iter()
                .map(|(i, item)| validate_item(&services.gateway, config, item, *i))
                .collect();
            for ((i, mut item), report) in batch.into_iter().zip(reports) {
                let report = report?;
                summary.checked += 1;
                match report.llm_status {
                    LlmStatus::SkippedRuleFailure => summary.rule_failures += 1,
                    LlmStatus::Unvalidated => summary.unvalidated += 1,
                    LlmStatus::Error(_) => summary.critic_errors += 1,
                    LlmStatus::Validated => {}
                }
                let keep = report.kept;
                item.flags = Some(report);
                if keep {
                    summary.kept += 1;
                    kept.push((i, item));
                }
            }
        } else {
            kept.extend(batch);
        }
        if let Some(e) = fatal {
            return Err(e.into());
        }
    }
    kept.sort_by(|a, b| order(&candidates[a.0]).cmp(&order(&candidates[b.0])));
    out.items = kept.into_iter().map(|(_, item)| item).collect();
    out.validation = validate.then_some(summary);
    Ok(out)
}

/// Path-grounded items over every node's `level`-hop paths.
pub fn generate_from_graph(
    services: &Services,
    config: &PipelineConfig,
    graph: &KnowledgeGraph,
    topic: &str,
    validate: bool,
) -> Result<Generated, PipelineError> {
    config.validate()?;
    let pairs = qgen::oriented_paths(graph, &graph.node_ids(), config.question_level());
    let jobs = qgen::sample_from(&pairs, config.num_q * config.oversample, config.rng_seed);
    generate_loop(services, config, &jobs, validate, PathJob::sort_key, |job| {
        qgen::generate_mcq(&services.gateway, config, graph, job, topic)
    })
}

/// Items from the topic alone, or from retrieved evidence when `evidence`
/// is given.
pub fn generate_without_graph(
    services: &Services,
    config: &PipelineConfig,
    topic: &str,
    evidence: Option<&RetrievalResult>,
    validate: bool,
) -> Result<Generated, PipelineError> {
    config.validate()?;
    let context = evidence.filter(|r| !r.passages.is_empty()).map(|r| evidence_block(&r.passages));
    let variants: Vec<u32> = (0..(config.num_q * config.oversample) as u32).collect();
    generate_loop(services, config, &variants, validate, |v| *v, |v| {
        qgen::generate_baseline(&services.gateway, config, topic, context.as_deref(), *v)
    })
}

/// Summary written next to the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub topic: String,
    pub mode: PipelineMode,
    pub requested: usize,
    pub emitted: usize,
    pub generation: GenerationReport,
    pub validation: Option<ValidationSummary>,
    pub build: Option<BuildReport>,
    pub tokens: TokenLedger,
    pub tokens_per_item: Option<f64>,
    pub metrics: MetricsReport,
}

#[derive(Debug)]
pub struct RunOutput {
    pub records: Vec<DatasetRecord>,
    pub graph: Option<GraphBuild>,
    pub report: RunReport,
}

/// Executes the stage set of `config.pipeline_mode`.
pub fn run(services: &Services, config: &PipelineConfig, topic: &Topic) -> Result<RunOutput, PipelineError> {
    config.validate()?;
    let mode = config.pipeline_mode;
    let validate = config.validator_enabled();
    let (generated, graph, records) = if mode.uses_kg() {
        let build = build_graph(services, config, topic)?;
        let generated = generate_from_graph(services, config, &build.graph, &topic.name, validate)?;
        let records = generated
            .items
            .iter()
            .map(|i| DatasetRecord::new(i, Some(&build.graph), Provenance::default()))
            .collect();
        (generated, Some(build), records)
    } else {
        let evidence = if mode.uses_retrieval() {
            Some(services.retriever.retrieve(&services.gateway, config, &topic.name, &topic.name)?)
        } else {
            None
        };
        let generated = generate_without_graph(services, config, &topic.name, evidence.as_ref(), validate)?;
        let provenance = match &evidence {
            Some(r) => Provenance {
                seed_node: Some(topic.name.clone()),
                passage_ids: r.passages.iter().map(|p| p.id.clone()).collect(),
                mixture_weights: r.weights(),
                parametric_fallback: r.fallback,
            },
            None => Provenance { seed_node: Some(topic.name.clone()), parametric_fallback: true, ..Default::default() },
        };
        let records = generated.items.iter().map(|i| DatasetRecord::new(i, None, provenance.clone())).collect();
        (generated, None, records)
    };
    let metrics = evaluate(&generated.items, &services.metric_adapters(), config.nli_threshold);
    let tokens = services.gateway.token_ledger();
    let report = RunReport {
        topic: topic.name.clone(),
        mode,
        requested: config.num_q,
        emitted: generated.items.len(),
        generation: generated.generation,
        validation: generated.validation,
        build: graph.as_ref().map(|g| g.report.clone()),
        tokens_per_item: tokens.per_item(generated.items.len()),
        tokens,
        metrics,
    };
    if report.emitted < config.num_q {
        log::warn!("only {} of {} requested items survived", report.emitted, config.num_q);
    }
    Ok(RunOutput { records, graph, report })
}

/// `<dir>/<stem>.<suffix>` next to `output`.
pub fn sidecar(output: &Path, suffix: &str) -> PathBuf {
    let stem = output.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    output.with_file_name(format!("{stem}.{suffix}"))
}

/// Snapshot plus reject log for a built graph.
pub fn write_graph(
    build: &GraphBuild,
    topic: &str,
    config: &PipelineConfig,
    snapshot_path: &Path,
    rejects_path: &Path,
) -> Result<(), StoreError> {
    store::save_snapshot(&GraphSnapshot::new(&build.graph, topic, config, Some(&build.report)), snapshot_path)?;
    store::write_jsonl(&build.rejects, rejects_path)
}

/// Writes the dataset to `output` and the report, snapshot and reject log
/// beside it. Returns every path written.
pub fn write_run(out: &RunOutput, config: &PipelineConfig, output: &Path) -> Result<Vec<PathBuf>, StoreError> {
    store::write_jsonl(&out.records, output)?;
    let report_path = sidecar(output, "report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&out.report)? + "\n")
        .map_err(|source| StoreError::File { path: report_path.display().to_string(), source })?;
    let mut written = vec![output.to_path_buf(), report_path];
    if let Some(build) = &out.graph {
        let (snap, rejects) = (sidecar(output, "graph.json"), sidecar(output, "curation_rejects.jsonl"));
        write_graph(build, &out.report.topic, config, &snap, &rejects)?;
        written.extend([snap, rejects]);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_mode(mode: PipelineMode, validate: bool) -> RunOutput {
        let config = PipelineConfig { pipeline_mode: mode, validate, rng_seed: 7, ..Default::default() };
        let services = Services::mock(&Fixtures::builtin(), &config);
        run(&services, &config, &Topic::new("Biology").unwrap()).unwrap()
    }

    #[test]
    fn strict_network_needs_type_mapping() {
        let mut settings = BackendSettings { openai_api_key: Some("k".into()), ..Default::default() };
        let strict = PipelineConfig { strict_adapters: true, ..Default::default() };
        assert!(matches!(Services::network(&settings, &strict), Err(PipelineError::Config(ConfigError::Missing(_)))));
        assert!(Services::network(&settings, &PipelineConfig::default()).is_ok());
        settings.relation_types.insert("born_in".into(), ["Q515".to_string()].into());
        assert!(Services::network(&settings, &strict).is_ok());
    }

    #[test]
    fn ledger_tags_follow_mode() {
        for mode in PipelineMode::ALL {
            let out = run_mode(mode, false);
            assert_eq!(out.report.tokens.tags(), expected_tags(mode, false), "{mode}");
            assert!(!out.records.is_empty(), "{mode}");
        }
        let out = run_mode(PipelineMode::Plain, true);
        assert_eq!(out.report.tokens.tags(), [TaskTag::McqForward, TaskTag::Validate]);
    }

    #[test]
    fn knight_fills_request_with_kept_items() {
        let out = run_mode(PipelineMode::Knight, false);
        assert_eq!(out.records.len(), 10);
        assert!(out.records.iter().all(|r| r.validation.as_ref().is_some_and(|v| v.kept)));
        assert!(out.records.iter().all(|r| r.level == 2 && r.path.len() == 2));
    }

    #[test]
    fn sidecar_names() {
        assert_eq!(sidecar(Path::new("out/bio_d2.json"), "graph.json"), Path::new("out/bio_d2.graph.json"));
        assert_eq!(sidecar(Path::new("bio"), "report.json"), Path::new("bio.report.json"));
    }
}
