//! Candidate-triple curation: duplicate and alias filtering against the
//! graph, then type, entailment and content-policy checks.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{cosine, AdapterError, Embedder, NliScorer, PolicyScreen, TypeChecker};
use crate::config::PipelineConfig;
use crate::model::{normalize_name, GraphError, KnowledgeGraph, NodeId};
use crate::synthesis::Triple;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurationError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Duplicate,
    Alias,
    TypeFail,
    NliFail,
    PolicyFail,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurationOutcome {
    pub accepted: Vec<Triple>,
    /// Candidates folded into an existing node.
    pub merged: Vec<(Triple, NodeId)>,
    pub rejected: Vec<(Triple, RejectReason)>,
    /// Edges to existing (or already accepted) nodes implied by duplicates
    /// and aliases, with the tail rewritten to the surviving name.
    pub links: Vec<Triple>,
    pub prune_rate: f64,
}

/// One line of the reject log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectRecord {
    pub parent: String,
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub reason: RejectReason,
}

pub struct Curator {
    pub embedder: Arc<dyn Embedder>,
    pub nli: Arc<dyn NliScorer>,
    pub types: Arc<dyn TypeChecker>,
    pub policy: Arc<dyn PolicyScreen>,
}

/// Equal normalized names, or embedding cosine at least `tau`. Embedding
/// failures fall back to the name comparison.
pub fn is_alias(embedder: &dyn Embedder, a: &str, b: &str, tau: f64) -> bool {
    if normalize_name(a) == normalize_name(b) {
        return true;
    }
    match (embedder.embed(a), embedder.embed(b)) {
        (Ok(x), Ok(y)) => cosine(&x, &y) >= tau,
        (Err(e), _) | (_, Err(e)) => {
            log::warn!("alias check for {a:?} / {b:?} fell back to name equality: {e}");
            false
        }
    }
}

struct EmbedCache<'a> {
    embedder: &'a dyn Embedder,
    vectors: HashMap<String, Option<Vec<f64>>>,
}

impl EmbedCache<'_> {
    fn get(&mut self, name: &str) -> Option<&Vec<f64>> {
        let embedder = self.embedder;
        self.vectors
            .entry(normalize_name(name))
            .or_insert_with(|| match embedder.embed(name) {
                Ok(v) => Some(v),
                Err(e) => {
                    log::warn!("embedding {name:?} failed, alias check uses names only: {e}");
                    None
                }
            })
            .as_ref()
    }

    fn alias(&mut self, a: &str, b: &str, tau: f64) -> bool {
        if normalize_name(a) == normalize_name(b) {
            return true;
        }
        let Some(x) = self.get(a).cloned() else { return false };
        self.get(b).is_some_and(|y| cosine(&x, y) >= tau)
    }
}

impl Curator {
    /// The first failing check, if any. Adapter errors skip that check
    /// unless `strict_adapters` is set.
    pub fn content_filter(
        &self,
        triple: &Triple,
        head_gloss: Option<&str>,
        tail_gloss: Option<&str>,
        config: &PipelineConfig,
    ) -> Result<Option<RejectReason>, AdapterError> {
        let soft = |r: Result<bool, AdapterError>, check: &str| -> Result<bool, AdapterError> {
            match r {
                Ok(failed) => Ok(failed),
                Err(e) if !config.strict_adapters => {
                    log::warn!("{check} check skipped for {}: {e}", triple.key());
                    Ok(false)
                }
                Err(e) => Err(e),
            }
        };
        if soft(self.types.admissible(&triple.relation, &triple.tail).map(|ok| !ok), "type")? {
            return Ok(Some(RejectReason::TypeFail));
        }
        if let Some(premise) = head_gloss {
            let p = self.nli.entailment(premise, &triple.sentence());
            if soft(p.map(|p| p < config.nli_threshold), "entailment")? {
                return Ok(Some(RejectReason::NliFail));
            }
        }
        let mut text = triple.sentence();
        if let Some(g) = tail_gloss {
            text.push('\n');
            text.push_str(g);
        }
        if soft(self.policy.blocked_category(&text).map(|c| c.is_some()), "policy")? {
            return Ok(Some(RejectReason::PolicyFail));
        }
        Ok(None)
    }

    /// Classifies each candidate: duplicate name, alias of an existing or
    /// already accepted node, content filter, accept. Candidates are visited
    /// shortest tail first (ties by normalized name, then head and relation),
    /// so among mutually aliased new names the shortest surface form is
    /// kept whatever the input order. Results are reported in input order.
    pub fn curate(
        &self,
        graph: &KnowledgeGraph,
        parent: NodeId,
        raw: &[Triple],
        config: &PipelineConfig,
    ) -> Result<CurationOutcome, CurationError> {
        graph.node(parent).ok_or(GraphError::UnknownNode(parent))?;
        let mut cache = EmbedCache { embedder: self.embedder.as_ref(), vectors: HashMap::new() };
        let mut pending: Vec<(String, String)> = Vec::new();
        let link = |t: &Triple, tail: &str| Triple { head: t.head.clone(), relation: t.relation.clone(), tail: tail.to_string() };
        let mut visit: Vec<usize> = (0..raw.len()).collect();
        visit.sort_by_cached_key(|&i| {
            let t = &raw[i];
            (t.tail.chars().count(), normalize_name(&t.tail), t.head.clone(), t.relation.clone())
        });
        let mut verdicts: Vec<Option<Verdict>> = vec![None; raw.len()];
        for i in visit {
            let t = &raw[i];
            let tail_key = normalize_name(&t.tail);
            let verdict = if tail_key.is_empty() || tail_key == normalize_name(&t.head) {
                Verdict::Rejected(RejectReason::Duplicate, None)
            } else if let Some(existing) = graph.find(&t.tail) {
                Verdict::Rejected(RejectReason::Duplicate, Some(link(t, &existing.name)))
            } else if let Some((_, name)) = pending.iter().find(|(k, _)| *k == tail_key) {
                Verdict::Rejected(RejectReason::Duplicate, Some(link(t, name)))
            } else if let Some(node) = graph.nodes().find(|n| cache.alias(&t.tail, &n.name, config.tau_alias)) {
                Verdict::Merged(node.id, link(t, &node.name))
            } else if let Some((_, name)) = pending.iter().find(|(_, name)| cache.alias(&t.tail, name, config.tau_alias)) {
                Verdict::Rejected(RejectReason::Alias, Some(link(t, name)))
            } else {
                let head_gloss = graph.find(&t.head).and_then(|n| n.gloss.as_deref());
                match self.content_filter(t, head_gloss, None, config)? {
                    Some(reason) => Verdict::Rejected(reason, None),
                    None => {
                        pending.push((tail_key, t.tail.clone()));
                        Verdict::Accepted
                    }
                }
            };
            verdicts[i] = Some(verdict);
        }
        let mut out = CurationOutcome::default();
        for (t, verdict) in raw.iter().zip(verdicts) {
            match verdict.expect("every candidate visited") {
                Verdict::Accepted => out.accepted.push(t.clone()),
                Verdict::Merged(id, l) => {
                    out.links.push(l);
                    out.merged.push((t.clone(), id));
                }
                Verdict::Rejected(reason, l) => {
                    out.links.extend(l);
                    out.rejected.push((t.clone(), reason));
                }
            }
        }
        out.prune_rate = if raw.is_empty() { 0.0 } else { out.rejected.len() as f64 / raw.len() as f64 };
        Ok(out)
    }
}

#[derive(Debug, Clone)]
enum Verdict {
    Accepted,
    Merged(NodeId, Triple),
    Rejected(RejectReason, Option<Triple>),
}

impl CurationOutcome {
    pub fn reject_records(&self, parent: &str) -> Vec<RejectRecord> {
        self.rejected
            .iter()
            .map(|(t, reason)| RejectRecord {
                parent: parent.to_string(),
                head: t.head.clone(),
                relation: t.relation.clone(),
                tail: t.tail.clone(),
                reason: *reason,
            })
            .collect()
    }
}
