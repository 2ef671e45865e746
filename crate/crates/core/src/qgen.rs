//! Multi-hop question generation: path sampling, path verbalization into
//! the context block T(P), prompting, and strict parsing of the six-line
//! output format.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;

use rand::SeedableRng;
use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::PipelineConfig;
use crate::gateway::{ChatRequest, Gateway, GatewayError, TaskTag};
use crate::model::{KnowledgeGraph, NodeId, Orientation, PathSample, enumerate_paths};
use crate::prompts::{self, PathSlots};
use crate::synthesis::gloss_body;
use crate::text::{first_sentence, stable_hash, truncate_at_word};
use crate::validation::ValidationReport;

pub const LETTERS: [&str; 4] = ["A", "B", "C", "D"];

/// Longest start/end description placed in the prompt, in characters.
const DESCRIPTION_CHARS: usize = 600;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("missing {0} line")]
    Missing(&'static str),
    #[error("option {0} appears twice")]
    DuplicateLetter(char),
    #[error("answer key {0:?} is not one of A-D")]
    BadKey(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QgenError {
    #[error("path has no hops")]
    EmptyPath,
    #[error("path is not in the graph")]
    InvalidPath,
    #[error("unparseable generation: {0}")]
    Parse(#[from] ParseError),
    #[error("key option {option:?} does not contain {expected:?}")]
    KeyMismatch { expected: String, option: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McqItem {
    pub id: String,
    pub question: String,
    /// Keys `A`..`D`.
    pub options: BTreeMap<String, String>,
    pub answer_key: String,
    pub topic: String,
    /// Hop count; 0 for items generated without a path.
    pub level: usize,
    pub orientation: Orientation,
    #[serde(default)]
    pub path: Option<PathSample>,
    pub source_context: String,
    #[serde(default)]
    pub flags: Option<ValidationReport>,
}

impl McqItem {
    pub fn key_text(&self) -> Option<&str> {
        self.options.get(&self.answer_key).map(String::as_str)
    }

    /// Options in letter order; missing letters are empty.
    pub fn option_array(&self) -> [String; 4] {
        LETTERS.map(|l| self.options.get(l).cloned().unwrap_or_default())
    }

    pub fn kept(&self) -> bool {
        self.flags.as_ref().is_some_and(|f| f.kept)
    }
}

fn item_id(topic: &str, orientation: Orientation, path_key: &str, question: &str) -> String {
    format!("q-{:016x}", stable_hash([topic, &orientation.to_string(), path_key, question]))
}

fn path_key(path: &PathSample) -> String {
    let ids: Vec<String> = path.node_ids.iter().map(|n| n.0.to_string()).collect();
    format!("{}:{}", ids.join(","), path.relations.join(","))
}

fn flatten(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").replace('"', "'")
}

fn excerpt(graph: &KnowledgeGraph, id: NodeId) -> Option<String> {
    let body = gloss_body(graph.node(id)?.gloss.as_deref()?);
    first_sentence(&flatten(&body)).map(str::to_string)
}

fn description(graph: &KnowledgeGraph, id: NodeId) -> String {
    let node = graph.node(id);
    match node.and_then(|n| n.gloss.as_deref()) {
        Some(g) => truncate_at_word(&flatten(&gloss_body(g)), DESCRIPTION_CHARS).to_string(),
        None => String::new(),
    }
}

/// Renders a path as prompt slots plus the context block T(P).
///
/// Nodes and relations are listed in edge direction for both orientations;
/// the orientation only decides which end is the answer.
pub fn verbalize(path: &PathSample, graph: &KnowledgeGraph) -> (PathSlots, String) {
    let (nodes, rels) = path.edge_order();
    let name = |id: NodeId| graph.node(id).map(|n| n.name.clone()).unwrap_or_else(|| id.to_string());
    let mut rep = format!("\"{}\"", name(nodes[0]));
    for (rel, id) in rels.iter().zip(&nodes[1..]) {
        rep.push_str(&format!(" -[{}]-> \"{}\"", rel.to_uppercase(), name(*id)));
    }
    let mut lines = vec![format!("Path: {rep}"), "Nodes:".to_string()];
    for &id in &nodes {
        match excerpt(graph, id) {
            Some(e) => lines.push(format!("- {}: {e}", name(id))),
            None => {
                log::warn!("no gloss for path node {:?}; using its name alone", name(id));
                lines.push(format!("- {}", name(id)));
            }
        }
    }
    let (start, end) = (nodes[0], *nodes.last().expect("non-empty path"));
    let slots = PathSlots {
        path_representation: rep,
        start_node: name(start),
        start_desc: description(graph, start),
        end_node: name(end),
        end_desc: description(graph, end),
    };
    lines.push(format!("Start Node: \"{}\"", slots.start_node));
    lines.push(format!("Description: \"{}\"", slots.start_desc));
    lines.push(format!("End Node: \"{}\"", slots.end_node));
    lines.push(format!("Description: \"{}\"", slots.end_desc));
    (slots, lines.join("\n"))
}

/// Lowercased question text with whitespace collapsed and trailing
/// punctuation removed.
pub fn normalize_question(q: &str) -> String {
    let collapsed = q.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed.trim_end_matches(['?', '.', '!', ' ']).to_string()
}

fn option_line(line: &str) -> Option<(char, &str)> {
    let mut chars = line.chars();
    let letter = chars.next()?.to_ascii_uppercase();
    let sep = chars.next()?;
    if !('A'..='D').contains(&letter) || !matches!(sep, ')' | '.' | ':') {
        return None;
    }
    Some((letter, chars.as_str().trim()))
}

fn parse_key(raw: &str) -> Result<String, ParseError> {
    let cleaned = raw.trim().trim_matches(|c: char| matches!(c, '"' | '\'' | '[' | ']' | '*' | ' '));
    let mut chars = cleaned.chars();
    let first = chars.next().map(|c| c.to_ascii_uppercase());
    let rest_ok = chars.next().is_none_or(|c| !c.is_alphanumeric());
    match first {
        Some(c @ 'A'..='D') if rest_ok => Ok(c.to_string()),
        _ => Err(ParseError::BadKey(raw.trim().to_string())),
    }
}

/// Extracts `(question, options, key)` from a generation. Prose before the
/// `Question:` line and after the `Correct Answer:` line is ignored.
pub fn parse_mcq_output(text: &str) -> Result<(String, BTreeMap<String, String>, String), ParseError> {
    let lines: Vec<&str> = text.lines().map(|l| l.trim().trim_start_matches("**")).collect();
    let qi = lines
        .iter()
        .position(|l| l.starts_with("Question:"))
        .ok_or(ParseError::Missing("Question"))?;
    let question = lines[qi]["Question:".len()..].trim().trim_matches('*').trim().to_string();
    if question.is_empty() {
        return Err(ParseError::Missing("Question"));
    }
    let mut options = BTreeMap::new();
    let mut key = None;
    for line in &lines[qi + 1..] {
        if let Some(rest) = line.strip_prefix("Correct Answer:") {
            key = Some(parse_key(rest)?);
            break;
        }
        if let Some((letter, body)) = option_line(line) {
            if options.insert(letter.to_string(), body.to_string()).is_some() {
                return Err(ParseError::DuplicateLetter(letter));
            }
        }
    }
    for (i, l) in LETTERS.iter().enumerate() {
        if !options.contains_key(*l) {
            return Err(ParseError::Missing(["A)", "B)", "C)", "D)"][i]));
        }
    }
    let key = key.ok_or(ParseError::Missing("Correct Answer"))?;
    Ok((question, options, key))
}

/// The canonical six-line block.
pub fn format_mcq(question: &str, options: &BTreeMap<String, String>, key: &str) -> String {
    let mut out = format!("Question: {question}\n");
    for l in LETTERS {
        out.push_str(&format!("{l}) {}\n", options.get(l).map(String::as_str).unwrap_or("")));
    }
    out.push_str(&format!("Correct Answer: {key}"));
    out
}

/// One generation request: an oriented path and a prompt variant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PathJob {
    pub path: PathSample,
    pub variant: u32,
}

impl PathJob {
    /// Edge-order key, then orientation, then variant.
    pub fn sort_key(&self) -> (Vec<NodeId>, Vec<String>, Orientation, u32) {
        let (n, r) = self.path.edge_order();
        (n, r, self.path.orientation, self.variant)
    }
}

/// Forward and reverse versions of every forward path of `level` hops
/// starting at any of `starts`, in (path, orientation) order.
pub fn oriented_paths(graph: &KnowledgeGraph, starts: &[NodeId], level: usize) -> Vec<PathSample> {
    let mut out = Vec::new();
    for &v0 in starts {
        for p in enumerate_paths(graph, v0, level) {
            let r = p.reversed();
            out.push(p);
            out.push(r);
        }
    }
    out
}

/// Picks `n` jobs from `pairs`. With too few pairs they are cycled with
/// increasing variant numbers; with too many a seeded sample without
/// replacement is drawn. Jobs come back in generation order.
pub fn sample_from(pairs: &[PathSample], n: usize, rng_seed: u64) -> Vec<PathJob> {
    if pairs.is_empty() || n == 0 {
        return Vec::new();
    }
    if pairs.len() <= n {
        return (0..n)
            .map(|i| PathJob { path: pairs[i % pairs.len()].clone(), variant: (i / pairs.len()) as u32 })
            .collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    index::sample(&mut rng, pairs.len(), n)
        .into_iter()
        .map(|i| PathJob { path: pairs[i].clone(), variant: 0 })
        .collect()
}

pub fn sample_paths(graph: &KnowledgeGraph, v0: NodeId, level: usize, num_q: usize, rng_seed: u64) -> Vec<PathJob> {
    sample_from(&oriented_paths(graph, &[v0], level), num_q, rng_seed)
}

fn tag_for(orientation: Orientation) -> TaskTag {
    match orientation {
        Orientation::Forward => TaskTag::McqForward,
        Orientation::Reverse => TaskTag::McqReverse,
    }
}

/// Prompts for one item and checks that the key option names the answer
/// node: the end node for forward paths, the start node for reverse ones.
pub fn generate_mcq(
    gateway: &Gateway,
    config: &PipelineConfig,
    graph: &KnowledgeGraph,
    job: &PathJob,
    topic: &str,
) -> Result<McqItem, QgenError> {
    let path = &job.path;
    if path.hops() == 0 {
        return Err(QgenError::EmptyPath);
    }
    if !path.is_valid_in(graph) {
        return Err(QgenError::InvalidPath);
    }
    let (slots, context) = verbalize(path, graph);
    let (system, user) = match path.orientation {
        Orientation::Forward => (prompts::mcq_forward_system(), prompts::mcq_forward_user(&slots, topic, job.variant)),
        Orientation::Reverse => (prompts::mcq_reverse_system(), prompts::mcq_reverse_user(&slots, topic, job.variant)),
    };
    let req = ChatRequest::for_task(tag_for(path.orientation), config, system, user);
    let (question, options, answer_key) = parse_mcq_output(&gateway.complete(&req)?.text)?;
    let expected = match path.orientation {
        Orientation::Forward => &slots.end_node,
        Orientation::Reverse => &slots.start_node,
    };
    let option = options[&answer_key].clone();
    if !option.to_lowercase().contains(&expected.to_lowercase()) {
        return Err(QgenError::KeyMismatch { expected: expected.clone(), option });
    }
    Ok(McqItem {
        id: item_id(topic, path.orientation, &path_key(path), &question),
        question,
        options,
        answer_key,
        topic: topic.to_string(),
        level: path.hops(),
        orientation: path.orientation,
        path: Some(path.clone()),
        source_context: context,
        flags: None,
    })
}

/// An item generated from the topic alone or from retrieved passages, with
/// no graph path behind it.
pub fn generate_baseline(
    gateway: &Gateway,
    config: &PipelineConfig,
    topic: &str,
    context: Option<&str>,
    variant: u32,
) -> Result<McqItem, QgenError> {
    let req = ChatRequest::for_task(
        TaskTag::McqForward,
        config,
        prompts::baseline_system(),
        prompts::baseline_user(topic, context, variant),
    );
    let (question, options, answer_key) = parse_mcq_output(&gateway.complete(&req)?.text)?;
    Ok(McqItem {
        id: item_id(topic, Orientation::Forward, &format!("baseline:{variant}"), &question),
        question,
        options,
        answer_key,
        topic: topic.to_string(),
        level: 0,
        orientation: Orientation::Forward,
        path: None,
        source_context: context.unwrap_or("").to_string(),
        flags: None,
    })
}

/// Drops questions whose normalized text was already seen in this run.
#[derive(Debug, Default)]
pub struct QuestionDeduper {
    seen: Mutex<BTreeSet<String>>,
}

impl QuestionDeduper {
    /// True the first time a question is offered.
    pub fn admit(&self, question: &str) -> bool {
        self.seen.lock().expect("deduper lock").insert(normalize_question(question))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub attempted: usize,
    pub generated: usize,
    pub parse_failures: usize,
    pub key_mismatches: usize,
    pub duplicates: usize,
    pub gateway_errors: usize,
}

impl GenerationReport {
    fn record(&mut self, err: &QgenError) {
        match err {
            QgenError::Parse(_) => self.parse_failures += 1,
            QgenError::KeyMismatch { .. } => self.key_mismatches += 1,
            QgenError::Gateway(_) => self.gateway_errors += 1,
            QgenError::EmptyPath | QgenError::InvalidPath => self.parse_failures += 1,
        }
    }
}

/// Runs `generate` over the candidates in parallel batches until `want`
/// unique items exist or candidates run out. Auth and retry-exhaustion
/// errors abort and are returned alongside what was produced.
pub fn generate_until<T, F>(
    candidates: &[T],
    want: usize,
    batch: usize,
    deduper: &QuestionDeduper,
    report: &mut GenerationReport,
    generate: F,
) -> (Vec<(usize, McqItem)>, Option<GatewayError>)
where
    T: Sync,
    F: Fn(&T) -> Result<McqItem, QgenError> + Sync,
{
    let mut out = Vec::new();
    let mut next = 0;
    while out.len() < want && next < candidates.len() {
        let end = (next + batch.max(want - out.len())).min(candidates.len());
        let results: Vec<_> = candidates[next..end].par_iter().map(&generate).collect();
        for (offset, result) in results.into_iter().enumerate() {
            report.attempted += 1;
            match result {
                Ok(item) if out.len() < want => {
                    if deduper.admit(&item.question) {
                        report.generated += 1;
                        out.push((next + offset, item));
                    } else {
                        report.duplicates += 1;
                    }
                }
                Ok(_) => {}
                Err(QgenError::Gateway(e @ (GatewayError::Auth(_) | GatewayError::Exhausted { .. }))) => {
                    report.gateway_errors += 1;
                    return (out, Some(e));
                }
                Err(e) => {
                    log::debug!("generation rejected: {e}");
                    report.record(&e);
                }
            }
        }
        next = end;
    }
    (out, None)
}
