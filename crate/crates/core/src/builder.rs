//! Breadth-first, depth-bounded graph construction: retrieve, gloss, gate,
//! extract, deduplicate, curate, link.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DepthGate, Expansion, PipelineConfig};
use crate::curation::{Curator, RejectRecord};
use crate::gateway::{Gateway, GatewayError};
use crate::model::{normalize_name, KnowledgeGraph, NodeId, Topic};
use crate::retrieval::{RetrievalError, Retriever};
use crate::synthesis::{self, Gloss, SynthesisError, Triple};

pub struct BuildContext<'a> {
    pub gateway: &'a Gateway,
    pub retriever: &'a Retriever,
    pub curator: &'a Curator,
    pub config: &'a PipelineConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub nodes_added: usize,
    pub edges_added: usize,
    pub expansions: usize,
    pub glosses_rejected_by_gamma: usize,
    pub parametric_fallbacks: usize,
    pub triples_extracted: usize,
    pub triples_deduped: usize,
    /// Triples whose head names neither the expanded node nor any node in
    /// the graph.
    pub triples_unanchored: usize,
    pub candidates_curated: usize,
    pub candidates_merged: usize,
    pub candidates_rejected: usize,
    /// Accepted candidates dropped by the per-node branch cap.
    pub branch_capped: usize,
    pub depth_blocked: usize,
    pub stage_errors: usize,
    pub curation_prune_rate: f64,
    /// Excluded from serialized output so snapshots stay byte-stable.
    #[serde(skip)]
    pub wall_time_seconds: f64,
    pub per_depth_counts: BTreeMap<usize, usize>,
}

#[derive(Debug)]
pub struct BuildOutcome {
    pub graph: KnowledgeGraph,
    pub report: BuildReport,
    pub rejects: Vec<RejectRecord>,
    /// Set when an unrecoverable backend failure stopped the build early.
    pub aborted: Option<String>,
}

/// Everything computed for one node before the graph is touched.
struct Prepared {
    node: NodeId,
    gloss: Option<Gloss>,
    gamma_ok: bool,
    extracted: usize,
    triples: Vec<Triple>,
    error: Option<String>,
    fatal: Option<String>,
}

#[derive(Default)]
struct State {
    parents: HashMap<NodeId, NodeId>,
    report: BuildReport,
    rejects: Vec<RejectRecord>,
}

fn is_fatal(e: &GatewayError) -> bool {
    matches!(e, GatewayError::Auth(_) | GatewayError::Exhausted { .. })
}

impl BuildContext<'_> {
    fn extracts_triples(&self, depth: usize) -> bool {
        match self.config.depth_gate {
            DepthGate::Add => depth < self.config.d_max,
            DepthGate::EnqueueOnly => depth <= self.config.d_max,
        }
    }

    fn add_depth_limit(&self) -> usize {
        match self.config.depth_gate {
            DepthGate::Add => self.config.d_max,
            DepthGate::EnqueueOnly => self.config.d_max + 1,
        }
    }

    fn prepare(&self, graph: &KnowledgeGraph, id: NodeId, parent: Option<&str>, topic: &str) -> Prepared {
        let node = graph.node(id).expect("queued node exists");
        let mut out =
            Prepared { node: id, gloss: None, gamma_ok: false, extracted: 0, triples: Vec::new(), error: None, fatal: None };
        let term = node.name.as_str();
        let gateway_failure = |out: &mut Prepared, stage: &str, e: &GatewayError| {
            if is_fatal(e) {
                out.fatal = Some(format!("{stage} for {term:?}: {e}"));
            } else {
                out.error = Some(format!("{stage} for {term:?}: {e}"));
            }
        };
        let retrieval = match self.retriever.retrieve(self.gateway, self.config, term, topic) {
            Ok(r) => r,
            Err(RetrievalError::Gateway(e)) => {
                gateway_failure(&mut out, "retrieval", &e);
                return out;
            }
            Err(e) => {
                out.error = Some(format!("retrieval for {term:?}: {e}"));
                return out;
            }
        };
        let gloss = match synthesis::generate_gloss(self.gateway, self.config, term, &retrieval, parent) {
            Ok(g) => g,
            Err(e) => {
                gateway_failure(&mut out, "gloss", &e);
                return out;
            }
        };
        out.gamma_ok = synthesis::gate_gloss(&gloss, &retrieval.passages, self.config.eta_overlap);
        let text = gloss.text.clone();
        out.gloss = Some(gloss);
        if !out.gamma_ok || !self.extracts_triples(node.depth) {
            return out;
        }
        match synthesis::extract_triples(self.gateway, self.config, &text) {
            Ok(raw) => {
                out.extracted = raw.len();
                out.triples = synthesis::dedup_triples(&raw, self.config.lambda_max);
            }
            Err(SynthesisError::Gateway(e)) => gateway_failure(&mut out, "triple extraction", &e),
            Err(e) => out.error = Some(format!("triple extraction for {term:?}: {e}")),
        }
        out
    }

    /// Applies one prepared expansion and returns the children to enqueue.
    fn apply(&self, graph: &mut KnowledgeGraph, prep: Prepared, state: &mut State) -> Vec<(NodeId, usize)> {
        let report = &mut state.report;
        report.expansions += 1;
        if let Some(e) = &prep.error {
            log::warn!("{e}; node contributes no children");
            report.stage_errors += 1;
        }
        let node = graph.node_mut(prep.node).expect("prepared node exists");
        if let Some(gloss) = prep.gloss {
            if prep.gamma_ok {
                report.parametric_fallbacks += usize::from(gloss.parametric_fallback);
                node.gloss = Some(gloss.text);
                node.provenance = gloss.supported_by;
                node.mixture_weights = gloss.mixture_weights;
                node.parametric_fallback = gloss.parametric_fallback;
            } else {
                log::info!("gloss for {:?} failed the overlap gate", node.name);
                node.gamma_rejected = true;
                report.glosses_rejected_by_gamma += 1;
            }
        }
        let name = node.name.clone();
        let self_key = node.normalized_name.clone();
        report.triples_extracted += prep.extracted;
        report.triples_deduped += prep.extracted - prep.triples.len();
        let (anchored, unanchored): (Vec<Triple>, Vec<Triple>) = prep.triples.into_iter().partition(|t| {
            let k = normalize_name(&t.head);
            k == self_key || graph.contains_normalized(&k)
        });
        report.triples_unanchored += unanchored.len();
        if anchored.is_empty() {
            return Vec::new();
        }
        let outcome = match self.curator.curate(graph, prep.node, &anchored, self.config) {
            Ok(o) => o,
            Err(e) => {
                log::warn!("curation for {name:?} failed: {e}; node contributes no children");
                report.stage_errors += 1;
                return Vec::new();
            }
        };
        report.candidates_curated += anchored.len();
        report.candidates_merged += outcome.merged.len();
        report.candidates_rejected += outcome.rejected.len();
        state.rejects.extend(outcome.reject_records(&name));

        let cap = self.config.max_branches.min(outcome.accepted.len());
        report.branch_capped += outcome.accepted.len() - cap;
        let kept = &outcome.accepted[..cap];
        let kept_keys: Vec<String> = kept.iter().map(|t| normalize_name(&t.tail)).collect();
        let mut batch: Vec<Triple> = kept.to_vec();
        batch.extend(outcome.links.iter().filter(|t| {
            let k = normalize_name(&t.tail);
            graph.contains_normalized(&k) || kept_keys.contains(&k)
        }).cloned());
        let insert = match graph.add_curated(prep.node, &batch, self.add_depth_limit()) {
            Ok(i) => i,
            Err(e) => {
                log::warn!("linking children of {name:?} failed: {e}");
                report.stage_errors += 1;
                return Vec::new();
            }
        };
        report.edges_added += insert.edges_added;
        report.depth_blocked += insert.depth_blocked;
        let mut children = Vec::new();
        for id in insert.new_nodes {
            state.parents.insert(id, prep.node);
            let depth = graph.node(id).expect("new node").depth;
            if depth <= self.config.d_max {
                children.push((id, depth));
            }
        }
        children
    }

    fn parent_name(&self, graph: &KnowledgeGraph, state: &State, id: NodeId) -> Option<String> {
        state.parents.get(&id).and_then(|p| graph.node(*p)).map(|n| n.name.clone())
    }

    /// One pass of the loop body for a single node.
    pub fn expand_node(
        &self,
        graph: &mut KnowledgeGraph,
        id: NodeId,
        topic: &str,
        parent: Option<&str>,
    ) -> Result<Vec<(NodeId, usize)>, String> {
        let mut state = State::default();
        let prep = self.prepare(graph, id, parent, topic);
        if let Some(f) = prep.fatal.clone() {
            return Err(f);
        }
        Ok(self.apply(graph, prep, &mut state))
    }
}

pub fn build_kg(topic: &Topic, ctx: &BuildContext) -> BuildOutcome {
    let started = Instant::now();
    let mut graph = KnowledgeGraph::new(&topic.name);
    let mut state = State::default();
    let mut aborted = None;
    let mut queue: VecDeque<NodeId> = VecDeque::from([graph.seed_id()]);
    while !queue.is_empty() {
        let batch: Vec<NodeId> = match ctx.config.expansion {
            Expansion::LevelSynchronous => queue.drain(..).collect(),
            Expansion::Fifo => queue.pop_front().into_iter().collect(),
        };
        let parents: Vec<Option<String>> = batch.iter().map(|&id| ctx.parent_name(&graph, &state, id)).collect();
        let prepared: Vec<Prepared> = batch
            .par_iter()
            .zip(parents.par_iter())
            .map(|(&id, parent)| ctx.prepare(&graph, id, parent.as_deref(), &topic.name))
            .collect();
        for prep in prepared {
            if let Some(f) = prep.fatal.clone() {
                log::error!("aborting build: {f}");
                aborted = Some(f);
                break;
            }
            queue.extend(ctx.apply(&mut graph, prep, &mut state).into_iter().map(|(id, _)| id));
        }
        if aborted.is_some() {
            break;
        }
    }
    let mut report = state.report;
    report.nodes_added = graph.node_count() - 1;
    report.curation_prune_rate = if report.candidates_curated == 0 {
        0.0
    } else {
        report.candidates_rejected as f64 / report.candidates_curated as f64
    };
    for n in graph.nodes() {
        *report.per_depth_counts.entry(n.depth).or_default() += 1;
    }
    report.wall_time_seconds = started.elapsed().as_secs_f64();
    BuildOutcome { graph, report, rejects: state.rejects, aborted }
}
