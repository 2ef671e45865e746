//! Graph, node, edge and path types shared by every stage, plus the pure
//! graph operations (name normalization, curated insertion, depth balls and
//! path enumeration).

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::synthesis::Triple;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("triple head {head:?} is neither the parent {parent:?} nor an existing node")]
    UnknownHead { head: String, parent: String },
    #[error("invalid relation label {0:?}")]
    InvalidRelation(String),
    #[error("empty topic name")]
    EmptyTopic,
    #[error("duplicate normalized name {0:?}")]
    DuplicateName(String),
    #[error("edge endpoint {0} does not resolve")]
    DanglingEdge(NodeId),
    #[error("seed node {0} must have depth 0")]
    SeedDepth(NodeId),
}

/// User-specified topic that seeds a build.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optional_prompt: Option<String>,
}

impl Topic {
    pub fn new(name: impl Into<String>) -> Result<Self, GraphError> {
        let name = name.into().trim().to_string();
        if name.is_empty() {
            return Err(GraphError::EmptyTopic);
        }
        Ok(Topic { name, optional_prompt: None })
    }

    pub fn with_prompt(mut self, prompt: impl Into<String>) -> Self {
        self.optional_prompt = Some(prompt.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    pub normalized_name: String,
    #[serde(default)]
    pub gloss: Option<String>,
    pub depth: usize,
    /// Passage ids supporting the gloss.
    #[serde(default)]
    pub provenance: Vec<String>,
    /// Retrieval mixture weight per entry of `provenance`.
    #[serde(default)]
    pub mixture_weights: Vec<f64>,
    #[serde(default)]
    pub parametric_fallback: bool,
    /// Set when the gloss failed the evidence-overlap gate; such nodes keep
    /// their place in the graph but are never expanded.
    #[serde(default)]
    pub gamma_rejected: bool,
}

impl Node {
    fn new(id: NodeId, name: &str, depth: usize) -> Self {
        Node {
            id,
            name: name.trim().to_string(),
            normalized_name: normalize_name(name),
            gloss: None,
            depth,
            provenance: Vec::new(),
            mixture_weights: Vec::new(),
            parametric_fallback: false,
            gamma_rejected: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub head: NodeId,
    pub relation: String,
    pub tail: NodeId,
}

pub fn is_valid_relation(label: &str) -> bool {
    !label.is_empty()
        && label
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Forward,
    Reverse,
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::Forward => "forward",
            Orientation::Reverse => "reverse",
        })
    }
}

/// A simple path through the graph.
///
/// Nodes are stored in traversal order. A forward path follows edge
/// direction (`v0 -> ... -> vd`); a reverse path is the same route walked
/// backwards (`vd -> ... -> v0`), so consecutive pairs are connected by the
/// listed relation against edge direction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PathSample {
    pub node_ids: Vec<NodeId>,
    pub relations: Vec<String>,
    pub orientation: Orientation,
}

impl PathSample {
    pub fn hops(&self) -> usize {
        self.relations.len()
    }

    /// First node in edge direction (`v0`).
    pub fn origin(&self) -> NodeId {
        match self.orientation {
            Orientation::Forward => self.node_ids[0],
            Orientation::Reverse => *self.node_ids.last().expect("non-empty path"),
        }
    }

    /// Last node in edge direction (`vd`).
    pub fn terminus(&self) -> NodeId {
        match self.orientation {
            Orientation::Forward => *self.node_ids.last().expect("non-empty path"),
            Orientation::Reverse => self.node_ids[0],
        }
    }

    /// The node whose name is the correct answer: `vd` for forward items and
    /// `v0` for reverse items.
    pub fn answer_node(&self) -> NodeId {
        match self.orientation {
            Orientation::Forward => self.terminus(),
            Orientation::Reverse => self.origin(),
        }
    }

    pub fn reversed(&self) -> PathSample {
        let mut node_ids = self.node_ids.clone();
        node_ids.reverse();
        let mut relations = self.relations.clone();
        relations.reverse();
        let orientation = match self.orientation {
            Orientation::Forward => Orientation::Reverse,
            Orientation::Reverse => Orientation::Forward,
        };
        PathSample { node_ids, relations, orientation }
    }

    /// Node ids and relations in edge direction, whatever the orientation.
    pub fn edge_order(&self) -> (Vec<NodeId>, Vec<String>) {
        match self.orientation {
            Orientation::Forward => (self.node_ids.clone(), self.relations.clone()),
            Orientation::Reverse => {
                let r = self.reversed();
                (r.node_ids, r.relations)
            }
        }
    }

    pub fn is_simple(&self) -> bool {
        let unique: BTreeSet<_> = self.node_ids.iter().collect();
        unique.len() == self.node_ids.len()
    }

    /// Checks length, simplicity, and that every hop is an edge of `graph`.
    pub fn is_valid_in(&self, graph: &KnowledgeGraph) -> bool {
        if self.node_ids.len() != self.relations.len() + 1 || !self.is_simple() {
            return false;
        }
        let (nodes, rels) = self.edge_order();
        nodes.windows(2).zip(&rels).all(|(pair, rel)| {
            graph.has_edge(&Edge { head: pair[0], relation: rel.clone(), tail: pair[1] })
        })
    }
}

/// Canonical identity key for entity names.
///
/// NFKC-normalizes, lowercases, collapses whitespace, strips one leading
/// article and drops a terminal plural `s` when the singular stays at least
/// three characters long (`"ss"` endings are kept).
pub fn normalize_name(raw: &str) -> String {
    let folded: String = raw.nfkc().collect::<String>().to_lowercase();
    let mut words: Vec<&str> = folded.split_whitespace().collect();
    if words.len() > 1 && matches!(words[0], "the" | "a" | "an") {
        words.remove(0);
    }
    let mut joined = words.join(" ");
    if joined.ends_with('s') && !joined.ends_with("ss") {
        let last_word = joined.rsplit(' ').next().unwrap_or("");
        if last_word.chars().count() - 1 >= 3 {
            joined.pop();
        }
    }
    joined
}

/// Directed labeled property graph grown from a single seed.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    nodes: BTreeMap<NodeId, Node>,
    edges: BTreeSet<Edge>,
    seed_id: NodeId,
    by_name: HashMap<String, NodeId>,
    next_id: u32,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.seed_id == other.seed_id && self.nodes == other.nodes && self.edges == other.edges
    }
}

/// What `add_curated` changed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CuratedInsert {
    pub new_nodes: Vec<NodeId>,
    pub edges_added: usize,
    /// Candidates whose node would exceed the depth limit.
    pub depth_blocked: usize,
}

impl KnowledgeGraph {
    pub fn new(seed_name: &str) -> Self {
        let seed = Node::new(NodeId(0), seed_name, 0);
        let mut by_name = HashMap::new();
        by_name.insert(seed.normalized_name.clone(), seed.id);
        let mut nodes = BTreeMap::new();
        nodes.insert(seed.id, seed);
        KnowledgeGraph { nodes, edges: BTreeSet::new(), seed_id: NodeId(0), by_name, next_id: 1 }
    }

    /// Rebuilds a graph from stored parts, checking every invariant.
    pub fn from_parts(
        seed_id: NodeId,
        nodes: Vec<Node>,
        edges: Vec<Edge>,
    ) -> Result<Self, GraphError> {
        let mut map = BTreeMap::new();
        let mut by_name = HashMap::new();
        let mut next_id = 0;
        for node in nodes {
            if by_name.insert(node.normalized_name.clone(), node.id).is_some() {
                return Err(GraphError::DuplicateName(node.normalized_name));
            }
            next_id = next_id.max(node.id.0 + 1);
            map.insert(node.id, node);
        }
        match map.get(&seed_id) {
            None => return Err(GraphError::UnknownNode(seed_id)),
            Some(seed) if seed.depth != 0 => return Err(GraphError::SeedDepth(seed_id)),
            Some(_) => {}
        }
        let mut set = BTreeSet::new();
        for edge in edges {
            for end in [edge.head, edge.tail] {
                if !map.contains_key(&end) {
                    return Err(GraphError::DanglingEdge(end));
                }
            }
            if !is_valid_relation(&edge.relation) {
                return Err(GraphError::InvalidRelation(edge.relation));
            }
            set.insert(edge);
        }
        Ok(KnowledgeGraph { nodes: map, edges: set, seed_id, by_name, next_id })
    }

    pub fn seed_id(&self) -> NodeId {
        self.seed_id
    }

    pub fn seed(&self) -> &Node {
        &self.nodes[&self.seed_id]
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn node_mut(&mut self, id: NodeId) -> Option<&mut Node> {
        self.nodes.get_mut(&id)
    }

    pub fn find(&self, name: &str) -> Option<&Node> {
        self.by_name.get(&normalize_name(name)).map(|id| &self.nodes[id])
    }

    pub fn contains_normalized(&self, normalized: &str) -> bool {
        self.by_name.contains_key(normalized)
    }

    /// Nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> Vec<NodeId> {
        self.nodes.keys().copied().collect()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, edge: &Edge) -> bool {
        self.edges.contains(edge)
    }

    /// Outgoing edges of `id`, ordered by (relation, tail).
    pub fn successors(&self, id: NodeId) -> impl Iterator<Item = &Edge> {
        let lo = Edge { head: id, relation: String::new(), tail: NodeId(0) };
        self.edges.range(lo..).take_while(move |e| e.head == id)
    }

    /// Inserts an edge between existing nodes. Returns false when it was
    /// already present.
    pub fn add_edge(&mut self, head: NodeId, relation: &str, tail: NodeId) -> Result<bool, GraphError> {
        for end in [head, tail] {
            if !self.nodes.contains_key(&end) {
                return Err(GraphError::UnknownNode(end));
            }
        }
        if !is_valid_relation(relation) {
            return Err(GraphError::InvalidRelation(relation.to_string()));
        }
        Ok(self.edges.insert(Edge { head, relation: relation.to_string(), tail }))
    }

    fn insert_node(&mut self, name: &str, depth: usize) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        let node = Node::new(id, name, depth);
        self.by_name.insert(node.normalized_name.clone(), id);
        self.nodes.insert(id, node);
        id
    }

    /// Links each curated triple to the graph: the tail becomes a child of
    /// the triple's head (the parent, or an existing node named by the head).
    ///
    /// Tails that already exist (by normalized name) only gain an edge. New
    /// tails are created at `head.depth + 1`, but only while that depth is
    /// within `max_depth`.
    pub fn add_curated(
        &mut self,
        parent: NodeId,
        curated: &[Triple],
        max_depth: usize,
    ) -> Result<CuratedInsert, GraphError> {
        let parent_node = self.nodes.get(&parent).ok_or(GraphError::UnknownNode(parent))?;
        let parent_key = parent_node.normalized_name.clone();
        let parent_name = parent_node.name.clone();
        let mut out = CuratedInsert::default();
        for triple in curated {
            if !is_valid_relation(&triple.relation) {
                return Err(GraphError::InvalidRelation(triple.relation.clone()));
            }
            let head_key = normalize_name(&triple.head);
            let head = if head_key == parent_key {
                parent
            } else {
                *self.by_name.get(&head_key).ok_or_else(|| GraphError::UnknownHead {
                    head: triple.head.clone(),
                    parent: parent_name.clone(),
                })?
            };
            let tail_key = normalize_name(&triple.tail);
            let tail = match self.by_name.get(&tail_key) {
                Some(&id) => id,
                None => {
                    let depth = self.nodes[&head].depth + 1;
                    if depth > max_depth {
                        out.depth_blocked += 1;
                        continue;
                    }
                    let id = self.insert_node(&triple.tail, depth);
                    out.new_nodes.push(id);
                    id
                }
            };
            if head != tail && self.add_edge(head, &triple.relation, tail)? {
                out.edges_added += 1;
            }
        }
        Ok(out)
    }
}

/// Nodes within `d` directed hops of `v0` (breadth-first distance).
pub fn depth_ball(graph: &KnowledgeGraph, v0: NodeId, d: usize) -> Result<BTreeSet<NodeId>, GraphError> {
    if graph.node(v0).is_none() {
        return Err(GraphError::UnknownNode(v0));
    }
    let mut seen = BTreeSet::from([v0]);
    let mut queue = VecDeque::from([(v0, 0usize)]);
    while let Some((id, dist)) = queue.pop_front() {
        if dist == d {
            continue;
        }
        for edge in graph.successors(id) {
            if seen.insert(edge.tail) {
                queue.push_back((edge.tail, dist + 1));
            }
        }
    }
    Ok(seen)
}

/// Directed BFS distances from `v0` to every reachable node.
pub fn distances_from(graph: &KnowledgeGraph, v0: NodeId) -> BTreeMap<NodeId, usize> {
    let mut dist = BTreeMap::from([(v0, 0usize)]);
    let mut queue = VecDeque::from([v0]);
    while let Some(id) = queue.pop_front() {
        let here = dist[&id];
        for edge in graph.successors(id) {
            if !dist.contains_key(&edge.tail) {
                dist.insert(edge.tail, here + 1);
                queue.push_back(edge.tail);
            }
        }
    }
    dist
}

/// All simple forward paths with exactly `d` edges starting at `v0`, sorted
/// by node-id sequence (then relation sequence).
pub fn enumerate_paths(graph: &KnowledgeGraph, v0: NodeId, d: usize) -> Vec<PathSample> {
    if d == 0 || graph.node(v0).is_none() {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut nodes = vec![v0];
    let mut rels: Vec<String> = Vec::new();
    extend_paths(graph, d, &mut nodes, &mut rels, &mut out);
    out.sort();
    out
}

fn extend_paths(
    graph: &KnowledgeGraph,
    d: usize,
    nodes: &mut Vec<NodeId>,
    rels: &mut Vec<String>,
    out: &mut Vec<PathSample>,
) {
    if rels.len() == d {
        out.push(PathSample {
            node_ids: nodes.clone(),
            relations: rels.clone(),
            orientation: Orientation::Forward,
        });
        return;
    }
    let last = *nodes.last().expect("path has a start");
    for edge in graph.successors(last) {
        if nodes.contains(&edge.tail) {
            continue;
        }
        nodes.push(edge.tail);
        rels.push(edge.relation.clone());
        extend_paths(graph, d, nodes, rels, out);
        nodes.pop();
        rels.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(h: &str, r: &str, tl: &str) -> Triple {
        Triple::new(h, r, tl).unwrap()
    }

    fn chain() -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new("a");
        let a = g.seed_id();
        g.add_curated(a, &[t("a", "r", "b")], 10).unwrap();
        let b = g.find("b").unwrap().id;
        g.add_curated(b, &[t("b", "r", "c")], 10).unwrap();
        g
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_name("  World War II "), "world war ii");
        assert_eq!(normalize_name("cells"), "cell");
        assert_eq!(normalize_name("The Ottoman Empire"), "ottoman empire");
        assert_eq!(normalize_name(""), "");
        // singular would be shorter than three characters
        assert_eq!(normalize_name("ATPs"), "atp");
        assert_eq!(normalize_name("bus"), "bus");
        assert_eq!(normalize_name("glass"), "glass");
        assert_eq!(normalize_name("The"), "the");
        assert_eq!(normalize_name("ＤＮＡ"), "dna");
    }

    #[test]
    fn normalize_matches_independent_transform() {
        // Independent restatement of the rule for ASCII inputs.
        fn oracle(s: &str) -> String {
            let lower = s.to_ascii_lowercase();
            let mut parts: Vec<String> = lower.split_whitespace().map(String::from).collect();
            if parts.len() > 1 && ["the", "a", "an"].contains(&parts[0].as_str()) {
                parts.remove(0);
            }
            let mut out = parts.join(" ");
            let last_len = parts.last().map(|w| w.len()).unwrap_or(0);
            if out.ends_with('s') && !out.ends_with("ss") && last_len >= 4 {
                out.truncate(out.len() - 1);
            }
            out
        }
        for s in ["The Ottoman Empire", "An  Apple Trees", "a", "Mitochondria", "cells", "Gas"] {
            assert_eq!(normalize_name(s), oracle(s), "{s}");
        }
    }

    #[test]
    fn empty_curated_is_noop() {
        let mut g = KnowledgeGraph::new("hafez");
        let before = g.clone();
        let out = g.add_curated(g.seed_id(), &[], 3).unwrap();
        assert_eq!(out, CuratedInsert::default());
        assert_eq!(g, before);
    }

    #[test]
    fn hafez_born_in_shiraz() {
        let mut g = KnowledgeGraph::new("hafez");
        g.add_curated(g.seed_id(), &[t("hafez", "born_in", "Shiraz")], 3).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.find("shiraz").unwrap().depth, 1);
        assert_eq!(g.find("shiraz").unwrap().name, "Shiraz");
    }

    #[test]
    fn same_child_via_two_parents() {
        let mut g = KnowledgeGraph::new("root");
        let root = g.seed_id();
        g.add_curated(root, &[t("root", "has", "x"), t("root", "has", "y")], 3).unwrap();
        let x = g.find("x").unwrap().id;
        let y = g.find("y").unwrap().id;
        g.add_curated(x, &[t("x", "links", "Child")], 3).unwrap();
        g.add_curated(y, &[t("y", "links", "child")], 3).unwrap();
        assert_eq!(g.node_count(), 4);
        let child = g.find("CHILD").unwrap().id;
        assert_eq!(g.edges().filter(|e| e.tail == child).count(), 2);
    }

    #[test]
    fn unknown_parent_and_head_are_structural_errors() {
        let mut g = KnowledgeGraph::new("root");
        assert_eq!(
            g.add_curated(NodeId(9), &[t("root", "r", "x")], 3),
            Err(GraphError::UnknownNode(NodeId(9)))
        );
        assert!(matches!(
            g.add_curated(g.seed_id(), &[t("stranger", "r", "x")], 3),
            Err(GraphError::UnknownHead { .. })
        ));
    }

    #[test]
    fn depth_limit_blocks_new_nodes_but_not_edges() {
        let mut g = KnowledgeGraph::new("root");
        let root = g.seed_id();
        g.add_curated(root, &[t("root", "r", "x")], 1).unwrap();
        let x = g.find("x").unwrap().id;
        let out = g.add_curated(x, &[t("x", "r", "deep"), t("x", "back", "root")], 1).unwrap();
        assert_eq!(out.depth_blocked, 1);
        assert!(out.new_nodes.is_empty());
        assert_eq!(out.edges_added, 1);
        assert!(g.find("deep").is_none());
    }

    #[test]
    fn depth_ball_examples() {
        let g = KnowledgeGraph::new("solo");
        assert_eq!(depth_ball(&g, g.seed_id(), 0).unwrap(), BTreeSet::from([g.seed_id()]));
        let g = chain();
        let a = g.find("a").unwrap().id;
        let b = g.find("b").unwrap().id;
        assert_eq!(depth_ball(&g, a, 1).unwrap(), BTreeSet::from([a, b]));
        assert!(depth_ball(&g, NodeId(77), 1).is_err());
    }

    #[test]
    fn enumerate_examples() {
        let g = KnowledgeGraph::new("solo");
        assert!(enumerate_paths(&g, g.seed_id(), 1).is_empty());
        let g = chain();
        let paths = enumerate_paths(&g, g.seed_id(), 2);
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].node_ids, vec![NodeId(0), NodeId(1), NodeId(2)]);
        assert!(paths[0].is_valid_in(&g));
        assert!(paths[0].reversed().is_valid_in(&g));
        assert_eq!(paths[0].reversed().origin(), NodeId(0));
        assert_eq!(paths[0].reversed().answer_node(), NodeId(0));
        assert_eq!(paths[0].answer_node(), NodeId(2));
    }

    #[test]
    fn from_parts_rejects_broken_invariants() {
        let g = chain();
        let nodes: Vec<Node> = g.nodes().cloned().collect();
        let edges: Vec<Edge> = g.edges().cloned().collect();
        assert_eq!(KnowledgeGraph::from_parts(g.seed_id(), nodes.clone(), edges.clone()).unwrap(), g);
        let mut dup = nodes.clone();
        dup[1].normalized_name = dup[0].normalized_name.clone();
        assert!(matches!(
            KnowledgeGraph::from_parts(g.seed_id(), dup, edges.clone()),
            Err(GraphError::DuplicateName(_))
        ));
        let mut bad_edges = edges.clone();
        bad_edges.push(Edge { head: NodeId(0), relation: "r".into(), tail: NodeId(40) });
        assert_eq!(
            KnowledgeGraph::from_parts(g.seed_id(), nodes.clone(), bad_edges),
            Err(GraphError::DanglingEdge(NodeId(40)))
        );
        assert_eq!(
            KnowledgeGraph::from_parts(NodeId(1), nodes, edges),
            Err(GraphError::SeedDepth(NodeId(1)))
        );
    }
}
