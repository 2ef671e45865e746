//! Persistence: canonical JSON graph snapshots, JSONL datasets with
//! provenance, and graph stores (in-memory or Neo4j over Bolt).

pub mod bolt;
pub mod packstream;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::builder::BuildReport;
use crate::config::{BackendSettings, PipelineConfig, StoreKind};
use crate::model::{Edge, GraphError, KnowledgeGraph, Node, NodeId, Orientation, PathSample};
use crate::qgen::McqItem;
use crate::synthesis::Triple;
use crate::validation::ValidationReport;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("snapshot schema version {found:?} is not {expected}")]
    Version { found: Option<u64>, expected: u32 },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("store configuration: {0}")]
    Config(String),
    #[error("cannot connect: {0}")]
    Connect(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("{code}: {message}")]
    Query { code: String, message: String },
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::File { path: path.display().to_string(), source }
}

/// Rebuilds every object with keys in sorted order, whatever map
/// implementation serde_json was built with.
fn canonical(v: serde_json::Value) -> serde_json::Value {
    match v {
        serde_json::Value::Object(o) => {
            let mut entries: Vec<(String, serde_json::Value)> = o.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            serde_json::Value::Object(entries.into_iter().map(|(k, v)| (k, canonical(v))).collect())
        }
        serde_json::Value::Array(a) => serde_json::Value::Array(a.into_iter().map(canonical).collect()),
        other => other,
    }
}

/// Compact JSON with sorted keys.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String, StoreError> {
    Ok(serde_json::to_string(&canonical(serde_json::to_value(value)?))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub schema_version: u32,
    pub topic: String,
    /// Configuration echo; kept as plain JSON so older or newer keys load.
    #[serde(default)]
    pub config: serde_json::Value,
    pub seed_id: NodeId,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    #[serde(default)]
    pub report: Option<BuildReport>,
}

impl GraphSnapshot {
    pub fn new(graph: &KnowledgeGraph, topic: &str, config: &PipelineConfig, report: Option<&BuildReport>) -> Self {
        GraphSnapshot {
            schema_version: SCHEMA_VERSION,
            topic: topic.to_string(),
            config: serde_json::to_value(config).expect("config serializes"),
            seed_id: graph.seed_id(),
            nodes: graph.nodes().cloned().collect(),
            edges: graph.edges().cloned().collect(),
            report: report.cloned(),
        }
    }

    pub fn graph(&self) -> Result<KnowledgeGraph, StoreError> {
        Ok(KnowledgeGraph::from_parts(self.seed_id, self.nodes.clone(), self.edges.clone())?)
    }
}

pub fn snapshot_to_string(snapshot: &GraphSnapshot) -> Result<String, StoreError> {
    to_canonical_json(snapshot)
}

/// Checks the schema version before reading the rest; unknown fields are
/// ignored.
pub fn parse_snapshot(text: &str) -> Result<GraphSnapshot, StoreError> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let found = value.get("schema_version").and_then(serde_json::Value::as_u64);
    if found != Some(SCHEMA_VERSION as u64) {
        return Err(StoreError::Version { found, expected: SCHEMA_VERSION });
    }
    Ok(serde_json::from_value(value)?)
}

pub fn save_snapshot(snapshot: &GraphSnapshot, path: &Path) -> Result<(), StoreError> {
    std::fs::write(path, snapshot_to_string(snapshot)? + "\n").map_err(file_err(path))
}

pub fn load_snapshot(path: &Path) -> Result<GraphSnapshot, StoreError> {
    parse_snapshot(&std::fs::read_to_string(path).map_err(file_err(path))?)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Name of the path's first node in edge direction.
    pub seed_node: Option<String>,
    pub passage_ids: Vec<String>,
    pub mixture_weights: Vec<f64>,
    pub parametric_fallback: bool,
}

/// One dataset line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub topic: String,
    pub level: usize,
    pub orientation: Orientation,
    /// Hops in edge direction, by node name.
    pub path: Vec<Triple>,
    /// The same hops by node id, in question orientation.
    #[serde(default)]
    pub path_ids: Option<PathSample>,
    pub question: String,
    pub options: BTreeMap<String, String>,
    pub answer_key: String,
    pub source_context: String,
    #[serde(default)]
    pub validation: Option<ValidationReport>,
    pub provenance: Provenance,
}

impl DatasetRecord {
    /// Path triples and provenance are taken from `graph` when the item has
    /// a path; otherwise `provenance` is used as given.
    pub fn new(item: &McqItem, graph: Option<&KnowledgeGraph>, provenance: Provenance) -> Self {
        let mut record = DatasetRecord {
            id: item.id.clone(),
            topic: item.topic.clone(),
            level: item.level,
            orientation: item.orientation,
            path: Vec::new(),
            path_ids: item.path.clone(),
            question: item.question.clone(),
            options: item.options.clone(),
            answer_key: item.answer_key.clone(),
            source_context: item.source_context.clone(),
            validation: item.flags.clone(),
            provenance,
        };
        if let (Some(path), Some(g)) = (&item.path, graph) {
            let (ids, rels) = path.edge_order();
            let name = |id: &NodeId| g.node(*id).map(|n| n.name.clone()).unwrap_or_else(|| id.to_string());
            record.path = ids
                .windows(2)
                .zip(&rels)
                .map(|(w, r)| Triple { head: name(&w[0]), relation: r.clone(), tail: name(&w[1]) })
                .collect();
            let mut prov = Provenance { seed_node: ids.first().map(name), ..Default::default() };
            for id in &ids {
                if let Some(n) = g.node(*id) {
                    prov.passage_ids.extend(n.provenance.iter().cloned());
                    prov.mixture_weights.extend(n.mixture_weights.iter().copied());
                    prov.parametric_fallback |= n.parametric_fallback;
                }
            }
            record.provenance = prov;
        }
        record
    }

    pub fn to_item(&self) -> McqItem {
        McqItem {
            id: self.id.clone(),
            question: self.question.clone(),
            options: self.options.clone(),
            answer_key: self.answer_key.clone(),
            topic: self.topic.clone(),
            level: self.level,
            orientation: self.orientation,
            path: self.path_ids.clone(),
            source_context: self.source_context.clone(),
            flags: self.validation.clone(),
        }
    }
}

/// One canonical JSON object per line.
pub fn jsonl_string<T: Serialize>(records: &[T]) -> Result<String, StoreError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&to_canonical_json(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(records: &[T], path: &Path) -> Result<(), StoreError> {
    let text = jsonl_string(records)?;
    let mut f = std::fs::File::create(path).map_err(file_err(path))?;
    f.write_all(text.as_bytes()).map_err(file_err(path))
}

/// Blank lines are skipped; a malformed line fails with its 1-based number.
pub fn parse_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, StoreError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| StoreError::Line { line: i + 1, message: e.to_string() }))
        .collect()
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    parse_jsonl(&std::fs::read_to_string(path).map_err(file_err(path))?)
}

/// Uniform interface over graph backends.
pub trait GraphStore {
    fn clear(&mut self) -> Result<(), StoreError>;
    /// Creates or overwrites the node with the same id.
    fn create_node(&mut self, node: &Node) -> Result<(), StoreError>;
    fn create_edge(&mut self, edge: &Edge) -> Result<(), StoreError>;
    /// All nodes in id order.
    fn nodes(&mut self) -> Result<Vec<Node>, StoreError>;
    /// All edges, sorted.
    fn edges(&mut self) -> Result<Vec<Edge>, StoreError>;
    /// Simple forward paths with exactly `hops` edges from `from`, sorted.
    fn query_paths(&mut self, from: NodeId, hops: usize) -> Result<Vec<PathSample>, StoreError>;
}

/// Replaces the store's contents with `graph`.
pub fn save_graph(store: &mut dyn GraphStore, graph: &KnowledgeGraph) -> Result<(), StoreError> {
    store.clear()?;
    for n in graph.nodes() {
        store.create_node(n)?;
    }
    for e in graph.edges() {
        store.create_edge(e)?;
    }
    Ok(())
}

pub fn load_graph(store: &mut dyn GraphStore, seed_id: NodeId) -> Result<KnowledgeGraph, StoreError> {
    let nodes = store.nodes()?;
    let edges = store.edges()?;
    Ok(KnowledgeGraph::from_parts(seed_id, nodes, edges)?)
}

#[derive(Debug, Default)]
pub struct MemoryStore {
    nodes: BTreeMap<NodeId, Node>,
    edges: BTreeSet<Edge>,
}

impl GraphStore for MemoryStore {
    fn clear(&mut self) -> Result<(), StoreError> {
        self.nodes.clear();
        self.edges.clear();
        Ok(())
    }

    fn create_node(&mut self, node: &Node) -> Result<(), StoreError> {
        self.nodes.insert(node.id, node.clone());
        Ok(())
    }

    fn create_edge(&mut self, edge: &Edge) -> Result<(), StoreError> {
        for end in [edge.head, edge.tail] {
            if !self.nodes.contains_key(&end) {
                return Err(GraphError::UnknownNode(end).into());
            }
        }
        self.edges.insert(edge.clone());
        Ok(())
    }

    fn nodes(&mut self) -> Result<Vec<Node>, StoreError> {
        Ok(self.nodes.values().cloned().collect())
    }

    fn edges(&mut self) -> Result<Vec<Edge>, StoreError> {
        Ok(self.edges.iter().cloned().collect())
    }

    fn query_paths(&mut self, from: NodeId, hops: usize) -> Result<Vec<PathSample>, StoreError> {
        let mut out = Vec::new();
        if hops > 0 && self.nodes.contains_key(&from) {
            self.walk(&mut vec![from], &mut Vec::new(), hops, &mut out);
        }
        out.sort();
        Ok(out)
    }
}

impl MemoryStore {
    fn walk(&self, nodes: &mut Vec<NodeId>, rels: &mut Vec<String>, hops: usize, out: &mut Vec<PathSample>) {
        if rels.len() == hops {
            out.push(PathSample { node_ids: nodes.clone(), relations: rels.clone(), orientation: Orientation::Forward });
            return;
        }
        let last = *nodes.last().expect("walk starts at a node");
        for e in self.edges.iter().filter(|e| e.head == last) {
            if nodes.contains(&e.tail) {
                continue;
            }
            nodes.push(e.tail);
            rels.push(e.relation.clone());
            self.walk(nodes, rels, hops, out);
            nodes.pop();
            rels.pop();
        }
    }
}

/// Opens the configured store. Bolt needs the URI, user and password,
/// normally supplied through `NEO4J_URI`, `NEO4J_USER` and `NEO4J_PASS`.
pub fn open_store(settings: &BackendSettings) -> Result<Box<dyn GraphStore>, StoreError> {
    match settings.store {
        StoreKind::Memory => Ok(Box::new(MemoryStore::default())),
        StoreKind::Bolt => {
            let need = |v: &Option<String>, var: &str| {
                v.clone().ok_or_else(|| StoreError::Config(format!("{var} is not set (required for the bolt store)")))
            };
            let uri = need(&settings.neo4j_uri, "NEO4J_URI")?;
            let user = need(&settings.neo4j_user, "NEO4J_USER")?;
            let pass = need(&settings.neo4j_pass, "NEO4J_PASS")?;
            let timeout = Duration::from_secs(settings.request_timeout_secs.max(1));
            Ok(Box::new(bolt::BoltStore::open(&uri, &user, &pass, timeout)?))
        }
    }
}
