//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use knight::model::{normalize_name, Edge, KnowledgeGraph, Node, NodeId, Orientation, PathSample};
use knight::qgen::LETTERS;
use knight::store::{DatasetRecord, Provenance};
use knight::synthesis::Triple;
use knight::validation::{Criteria, LlmStatus, RuleFlags, ValidationReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOPICS: [&str; 4] = ["Biology", "History", "Mathematics", "Hafez"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Textbook full-matrix edit distance over chars.
pub fn levenshtein_dp(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut m = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in m.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        m[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = m[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            m[i][j] = sub.min(m[i - 1][j] + 1).min(m[i][j - 1] + 1);
        }
    }
    m[a.len()][b.len()]
}

/// Every `d`-tuple of edges, kept when it chains from `v0` without
/// revisiting a node.
pub fn brute_force_paths(graph: &KnowledgeGraph, v0: NodeId, d: usize) -> Vec<PathSample> {
    let edges: Vec<&Edge> = graph.edges().collect();
    let mut out = Vec::new();
    if d == 0 || edges.is_empty() {
        return out;
    }
    let mut idx = vec![0usize; d];
    loop {
        let chosen: Vec<&Edge> = idx.iter().map(|&i| edges[i]).collect();
        let mut nodes = vec![v0];
        let mut ok = true;
        for e in &chosen {
            if e.head != *nodes.last().unwrap() || nodes.contains(&e.tail) {
                ok = false;
                break;
            }
            nodes.push(e.tail);
        }
        if ok {
            out.push(PathSample {
                node_ids: nodes,
                relations: chosen.iter().map(|e| e.relation.clone()).collect(),
                orientation: Orientation::Forward,
            });
        }
        // odometer increment
        let mut k = 0;
        loop {
            if k == d {
                out.sort();
                return out;
            }
            idx[k] += 1;
            if idx[k] < edges.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

pub fn node(id: u32, name: &str, depth: usize) -> Node {
    Node {
        id: NodeId(id),
        name: name.to_string(),
        normalized_name: normalize_name(name),
        gloss: None,
        depth,
        provenance: Vec::new(),
        mixture_weights: Vec::new(),
        parametric_fallback: false,
        gamma_rejected: false,
    }
}

const SYLLABLES: [&str; 12] = ["ka", "lo", "mi", "ne", "su", "ra", "to", "vi", "zé", "qu", "ß", "ō"];

pub fn word<R: Rng>(rng: &mut R, parts: usize) -> String {
    (0..parts).map(|_| SYLLABLES[rng.random_range(0..SYLLABLES.len())]).collect()
}

/// Up to `max_nodes` nodes and `max_edges` edges over three relation labels;
/// self-loops and parallel edges included.
pub fn random_graph<R: Rng>(rng: &mut R, max_nodes: usize, max_edges: usize) -> KnowledgeGraph {
    let n = rng.random_range(1..=max_nodes);
    let mut nodes: Vec<Node> = (0..n)
        .map(|i| node(i as u32, &format!("N{i} {}", word(rng, 2)), if i == 0 { 0 } else { rng.random_range(1..4) }))
        .collect();
    for nd in nodes.iter_mut() {
        if rng.random_bool(0.5) {
            nd.gloss = Some(format!("Term: {}\n1. Definition and Scope: \"{}\" text.", nd.name, word(rng, 3)));
            nd.provenance = vec![format!("{}#summary", nd.name)];
            nd.mixture_weights = vec![rng.random::<f64>()];
        }
        nd.parametric_fallback = rng.random_bool(0.2);
    }
    let m = rng.random_range(0..=max_edges);
    let edges: Vec<Edge> = (0..m)
        .map(|_| Edge {
            head: NodeId(rng.random_range(0..n) as u32),
            relation: ["part_of", "studies", "has"][rng.random_range(0..3)].to_string(),
            tail: NodeId(rng.random_range(0..n) as u32),
        })
        .collect();
    KnowledgeGraph::from_parts(NodeId(0), nodes, edges).expect("generated graph is valid")
}

/// A record satisfying the item invariants: four options A-D, the key among
/// them, level equal to the path length.
pub fn random_record<R: Rng>(rng: &mut R, i: usize) -> DatasetRecord {
    let level = rng.random_range(0..4);
    let path: Vec<Triple> = (0..level)
        .map(|_| Triple { head: word(rng, 3), relation: "leads_to".into(), tail: word(rng, 3) })
        .collect();
    let path_ids = (level > 0).then(|| PathSample {
        node_ids: (0..=level as u32).collect::<Vec<_>>().into_iter().map(NodeId).collect(),
        relations: vec!["leads_to".into(); level],
        orientation: if rng.random_bool(0.5) { Orientation::Forward } else { Orientation::Reverse },
    });
    let orientation = path_ids.as_ref().map_or(Orientation::Forward, |p| p.orientation);
    let options: BTreeMap<String, String> =
        LETTERS.iter().map(|l| (l.to_string(), format!("{} \"{}\"\t{}", l, word(rng, 2), rng.random::<u16>()))).collect();
    let flag = |rng: &mut R| rng.random_bool(0.8);
    let rules = RuleFlags { rule_four_options: true, rule_one_key: flag(rng), rule_options_distinct: flag(rng) };
    let criteria = Criteria {
        grammar_fluency: flag(rng),
        single_correct_key: flag(rng),
        option_uniqueness: flag(rng),
        answerable_from_source: flag(rng),
        topic_relevant: [None, Some(true), Some(false)][rng.random_range(0..3)],
    };
    let status = match rng.random_range(0..4) {
        0 => LlmStatus::Unvalidated,
        1 => LlmStatus::Error(format!("bad line {}", rng.random::<u8>())),
        _ => LlmStatus::Validated,
    };
    let n_passages = rng.random_range(0..4);
    DatasetRecord {
        id: format!("q-{i:016x}"),
        topic: TOPICS[i % TOPICS.len()].to_string(),
        level,
        orientation,
        path,
        path_ids,
        question: format!("Which {} follows\n{}? ✓", word(rng, 4), word(rng, 2)),
        options,
        answer_key: LETTERS[rng.random_range(0..4)].to_string(),
        source_context: format!("Path: \"{}\"", word(rng, 5)),
        validation: rng.random_bool(0.7).then(|| ValidationReport::new(rules, criteria, status)),
        provenance: Provenance {
            seed_node: rng.random_bool(0.9).then(|| word(rng, 2)),
            passage_ids: (0..n_passages).map(|k| format!("Page#{k}")).collect(),
            mixture_weights: (0..n_passages).map(|_| rng.random::<f64>() * 1e3 - 5e2).collect(),
            parametric_fallback: n_passages == 0,
        },
    }
}

/// Runs the built binary in `dir` with the given environment additions.
pub fn knight(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_knight"));
    cmd.current_dir(dir).args(args);
    for var in knight::cli::SECRET_VARS {
        cmd.env_remove(var);
    }
    for var in ["KNIGHT_DEPTH", "KNIGHT_LEVEL", "KNIGHT_NUM_Q", "KNIGHT_MODE", "KNIGHT_SEED", "KNIGHT_BACKEND", "KNIGHT_STORE", "KNIGHT_CONFIG", "KNIGHT_MAX_INFLIGHT"] {
        cmd.env_remove(var);
    }
    cmd.envs(env.iter().copied());
    cmd.output().expect("binary runs")
}

pub const BIOLOGY_INVOCATION: [&str; 11] = [
    "--topic",
    "Biology",
    "--prompt",
    "multiple-choice",
    "--depth",
    "2",
    "--num-q",
    "10",
    "--output",
    "bio_d2.json",
    "--validate",
];
