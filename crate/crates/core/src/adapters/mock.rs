//! Table-driven adapters for hermetic runs.

use std::collections::{BTreeMap, BTreeSet};

use super::{AdapterError, Embedder, GrammarChecker, NliScorer, PolicyScreen, ProbeScorer, TypeChecker};
use crate::fixtures::{MockTables, NliRule};
use crate::model::normalize_name;
use crate::text::{content_tokens, stable_hash, unit_fraction, words_lower};

const EMBED_DIM: usize = 64;

/// Fixture vectors by normalized name; other names get a pseudo-random
/// vector derived from the name, so unrelated names are near-orthogonal.
pub struct MockEmbedder {
    table: BTreeMap<String, Vec<f64>>,
}

impl MockEmbedder {
    pub fn new(tables: &MockTables) -> Self {
        let table = tables.embeddings.iter().map(|(k, v)| (normalize_name(k), v.clone())).collect();
        MockEmbedder { table }
    }
}

impl Embedder for MockEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, AdapterError> {
        let key = normalize_name(text);
        if let Some(v) = self.table.get(&key) {
            return Ok(v.clone());
        }
        Ok((0..EMBED_DIM)
            .map(|i| unit_fraction(stable_hash(["embed", key.as_str(), &i.to_string()])) * 2.0 - 1.0)
            .collect())
    }
}

/// Identical texts entail each other; otherwise the first matching rule
/// wins, with a default probability for everything else.
pub struct MockNli {
    rules: Vec<NliRule>,
    default: f64,
}

impl MockNli {
    pub fn new(tables: &MockTables) -> Self {
        MockNli { rules: tables.nli.clone(), default: 0.9 }
    }
}

impl NliScorer for MockNli {
    fn entailment(&self, premise: &str, hypothesis: &str) -> Result<f64, AdapterError> {
        if premise.trim().eq_ignore_ascii_case(hypothesis.trim()) {
            return Ok(1.0);
        }
        let premise_key = normalize_name(premise);
        let hyp = hypothesis.to_lowercase();
        let hit = self.rules.iter().find(|r| {
            (r.premise == "*" || normalize_name(&r.premise) == premise_key) && hyp.contains(&r.contains.to_lowercase())
        });
        Ok(hit.map_or(self.default, |r| r.p))
    }
}

/// Relations listed in the table constrain tails with known types; anything
/// the table does not cover is admitted.
pub struct MockTypes {
    relations: BTreeMap<String, BTreeSet<String>>,
    types: BTreeMap<String, BTreeSet<String>>,
}

impl MockTypes {
    pub fn new(tables: &MockTables) -> Self {
        let o = &tables.ontology;
        MockTypes {
            relations: o.relations.iter().map(|(k, v)| (k.clone(), v.iter().cloned().collect())).collect(),
            types: o.types.iter().map(|(k, v)| (normalize_name(k), v.iter().cloned().collect())).collect(),
        }
    }
}

impl TypeChecker for MockTypes {
    fn admissible(&self, relation: &str, tail: &str) -> Result<bool, AdapterError> {
        let (Some(allowed), Some(types)) = (self.relations.get(relation), self.types.get(&normalize_name(tail))) else {
            return Ok(true);
        };
        Ok(!allowed.is_disjoint(types))
    }
}

pub struct MockPolicy {
    blocked: BTreeMap<String, Vec<String>>,
}

impl MockPolicy {
    pub fn new(tables: &MockTables) -> Self {
        MockPolicy { blocked: tables.policy.clone() }
    }
}

impl PolicyScreen for MockPolicy {
    fn blocked_category(&self, text: &str) -> Result<Option<String>, AdapterError> {
        let lower = text.to_lowercase();
        Ok(self
            .blocked
            .iter()
            .find(|(_, terms)| terms.iter().any(|t| lower.contains(&t.to_lowercase())))
            .map(|(cat, _)| cat.clone()))
    }
}

/// Table lookup by question text, falling back to an open-book lexical
/// reader: each option scores by how much of it appears on the context's
/// `Path:` line (or the whole context, or the question when there is none),
/// minus how much of it the question already names.
pub struct MockProbe {
    table: BTreeMap<String, [f64; 4]>,
}

pub fn question_key(q: &str) -> String {
    q.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl MockProbe {
    pub fn new(tables: &MockTables) -> Self {
        MockProbe { table: tables.probe.iter().map(|(k, v)| (question_key(k), *v)).collect() }
    }
}

impl ProbeScorer for MockProbe {
    fn logits(&self, question: &str, options: &[String; 4], source_context: &str) -> Result<[f64; 4], AdapterError> {
        if let Some(z) = self.table.get(&question_key(question)) {
            return Ok(*z);
        }
        let reference = source_context
            .lines()
            .find_map(|l| l.strip_prefix("Path:"))
            .or(Some(source_context).filter(|c| !c.trim().is_empty()))
            .unwrap_or(question);
        let known = content_tokens(reference);
        let asked = if reference == question { Default::default() } else { content_tokens(question) };
        let mut z = [0.0; 4];
        for (slot, option) in z.iter_mut().zip(options) {
            let toks = content_tokens(option);
            if !toks.is_empty() {
                let n = toks.len() as f64;
                *slot = 4.0 * (toks.intersection(&known).count() as f64 - toks.intersection(&asked).count() as f64) / n;
            }
        }
        Ok(z)
    }
}

/// Counts doubled words and known misspellings.
pub struct MockGrammar {
    misspellings: BTreeSet<String>,
}

impl MockGrammar {
    pub fn new(tables: &MockTables) -> Self {
        MockGrammar { misspellings: tables.grammar.keys().map(|k| k.to_lowercase()).collect() }
    }
}

impl GrammarChecker for MockGrammar {
    fn error_count(&self, text: &str) -> Result<usize, AdapterError> {
        let words = words_lower(text);
        let doubled = words.windows(2).filter(|w| w[0] == w[1]).count();
        let misspelled = words.iter().filter(|w| self.misspellings.contains(*w)).count();
        Ok(doubled + misspelled)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::cosine;
    use crate::fixtures::Fixtures;

    fn tables() -> MockTables {
        Fixtures::builtin().tables
    }

    #[test]
    fn fixture_embeddings_give_expected_cosines() {
        let e = MockEmbedder::new(&tables());
        let c = |a: &str, b: &str| cosine(&e.embed(a).unwrap(), &e.embed(b).unwrap());
        assert!((c("Second World War", "World War II") - 0.95).abs() < 1e-9);
        assert!((c("Biology", "Calculus") - 0.1).abs() < 1e-9);
        assert!(c("World War I", "World War II").abs() < 0.9);
        assert_eq!(e.embed("Mitosis").unwrap(), e.embed("mitosis").unwrap());
    }

    #[test]
    fn nli_rules() {
        let n = MockNli::new(&tables());
        assert_eq!(n.entailment("Biology", "biology").unwrap(), 1.0);
        assert_eq!(n.entailment("World History", "Which gas does photosynthesis release?").unwrap(), 0.05);
        assert_eq!(n.entailment("anything", "photosynthesis explained by phlogiston").unwrap(), 0.2);
        assert_eq!(n.entailment("Biology", "What does a cell contain?").unwrap(), 0.9);
    }

    #[test]
    fn ontology_and_policy() {
        let t = MockTypes::new(&tables());
        assert!(t.admissible("born_in", "Shiraz").unwrap());
        assert!(!t.admissible("born_in", "Persian language").unwrap());
        assert!(t.admissible("wrote", "Divan of Hafez").unwrap());
        let p = MockPolicy::new(&tables());
        assert_eq!(p.blocked_category("Bioweapon production").unwrap().as_deref(), Some("weapons"));
        assert_eq!(p.blocked_category("Oxygen").unwrap(), None);
    }

    #[test]
    fn grammar_counts_by_hand() {
        let g = MockGrammar::new(&tables());
        // "the the" doubled once, "recieve" misspelled once
        assert_eq!(g.error_count("Which cell did the the nucleus recieve?").unwrap(), 2);
        assert_eq!(g.error_count("Which organelle produces energy?").unwrap(), 0);
    }

    #[test]
    fn probe_reads_path_line() {
        let p = MockProbe::new(&tables());
        let opts = ["Cell".to_string(), "Meiosis".into(), "Genetics".into(), "Osmosis".into()];
        let z = p.logits("q?", &opts, "Path: \"Biology\" -[STUDIES]-> \"Cell\"\nStart Node: x").unwrap();
        assert_eq!(z, [4.0, 0.0, 0.0, 0.0]);
        let z = p.logits("What does Biology study?", &["Biology".to_string(), "Cell".into(), "Osmosis".into(), "Gene".into()], "Path: \"Biology\" -[STUDIES]-> \"Cell\"").unwrap();
        assert_eq!(z, [0.0, 4.0, 0.0, 0.0]);
        let z = p.logits("Which city was Hafez born in?", &opts, "").unwrap();
        assert_eq!(z, [0.0, 3.0, 0.0, 0.0]);
    }
}
