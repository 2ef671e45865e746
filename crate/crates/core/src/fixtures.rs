//! Offline fixture world: a small encyclopedia corpus and the tables that
//! drive the deterministic mock backends.
//!
//! On disk the layout is `corpus/<Title>.txt` plus `mock/<table>.json`. The
//! same files are compiled into the binary so tests and `--backend mock`
//! runs need no external directory.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

/// A triple table entry: either structured triples or a raw response body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TripleEntry {
    Triples(Vec<[String; 3]>),
    Raw { raw: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NliRule {
    /// Normalized premise to match, or `*` for any.
    pub premise: String,
    /// Lowercase substring that must occur in the hypothesis.
    pub contains: String,
    pub p: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OntologyTable {
    /// relation → admissible tail types
    pub relations: BTreeMap<String, Vec<String>>,
    /// normalized entity name → types
    pub types: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McqTable {
    /// normalized topic → distractor pool
    pub pools: BTreeMap<String, Vec<String>>,
    /// Raw responses keyed by `<normalized answer>|<forward|reverse>`.
    pub overrides: BTreeMap<String, String>,
    /// Fraction of generations answered with a wrong key letter.
    pub wrong_key_rate: f64,
    /// Fraction of generations missing an option line.
    pub malformed_rate: f64,
    /// Fraction of generations with a doubled word in the stem.
    pub typo_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidatorTable {
    /// Raw critic responses keyed by normalized question text.
    pub overrides: BTreeMap<String, String>,
    /// normalized topic → words marking a question as off-topic
    pub off_topic: BTreeMap<String, Vec<String>>,
}

/// All mock tables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MockTables {
    /// `<normalized term>|<title>` → raw answer
    pub titles: BTreeMap<String, String>,
    pub triples: BTreeMap<String, TripleEntry>,
    /// normalized term → gloss used instead of the evidence-derived one
    pub glosses: BTreeMap<String, String>,
    pub embeddings: BTreeMap<String, Vec<f64>>,
    pub nli: Vec<NliRule>,
    pub ontology: OntologyTable,
    /// category → blocked terms
    pub policy: BTreeMap<String, Vec<String>>,
    /// normalized question → logits
    pub probe: BTreeMap<String, [f64; 4]>,
    /// misspelling → correction
    pub grammar: BTreeMap<String, String>,
    pub mcq: McqTable,
    pub validator: ValidatorTable,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Fixtures {
    /// title → page text; the first paragraph is the summary
    pub corpus: BTreeMap<String, String>,
    pub tables: MockTables,
}

macro_rules! corpus_files {
    ($($title:literal),* $(,)?) => {
        &[$(($title, include_str!(concat!("../fixtures/corpus/", $title, ".txt")))),*]
    };
}

const BUILTIN_CORPUS: &[(&str, &str)] = corpus_files!(
    "Adenosine triphosphate",
    "Algebra",
    "Allied Powers",
    "Arithmetic",
    "Biology",
    "Calculus",
    "Cell (biology)",
    "Cell nucleus",
    "Cell phone",
    "Central Powers",
    "Chromosome",
    "DNA",
    "Derivative",
    "Divan of Hafez",
    "Gene",
    "Genetics",
    "Hafez",
    "Heredity",
    "History",
    "Integral",
    "Mathematics",
    "Mendelian inheritance",
    "Mitochondrion",
    "Nucleotide",
    "Ottoman Empire",
    "Photosynthesis",
    "Shiraz",
    "Shiraz (city)",
    "World War I",
    "World War II",
);

const BUILTIN_TABLES: &[(&str, &str)] = &[
    ("titles", include_str!("../fixtures/mock/titles.json")),
    ("triples", include_str!("../fixtures/mock/triples.json")),
    ("glosses", include_str!("../fixtures/mock/glosses.json")),
    ("embeddings", include_str!("../fixtures/mock/embeddings.json")),
    ("nli", include_str!("../fixtures/mock/nli.json")),
    ("ontology", include_str!("../fixtures/mock/ontology.json")),
    ("policy", include_str!("../fixtures/mock/policy.json")),
    ("probe", include_str!("../fixtures/mock/probe.json")),
    ("grammar", include_str!("../fixtures/mock/grammar.json")),
    ("mcq", include_str!("../fixtures/mock/mcq.json")),
    ("validator", include_str!("../fixtures/mock/validator.json")),
];

fn parse<T: for<'de> Deserialize<'de>>(name: &str, text: &str) -> Result<T, FixtureError> {
    serde_json::from_str(text).map_err(|source| FixtureError::Json { path: format!("mock/{name}.json"), source })
}

impl MockTables {
    fn from_sources(mut get: impl FnMut(&str) -> Result<Option<String>, FixtureError>) -> Result<Self, FixtureError> {
        let mut t = MockTables::default();
        for (name, _) in BUILTIN_TABLES {
            let Some(text) = get(name)? else { continue };
            match *name {
                "titles" => t.titles = parse(name, &text)?,
                "triples" => t.triples = parse(name, &text)?,
                "glosses" => t.glosses = parse(name, &text)?,
                "embeddings" => t.embeddings = parse(name, &text)?,
                "nli" => t.nli = parse(name, &text)?,
                "ontology" => t.ontology = parse(name, &text)?,
                "policy" => t.policy = parse(name, &text)?,
                "probe" => t.probe = parse(name, &text)?,
                "grammar" => t.grammar = parse(name, &text)?,
                "mcq" => t.mcq = parse(name, &text)?,
                "validator" => t.validator = parse(name, &text)?,
                _ => unreachable!("table list and match arms agree"),
            }
        }
        Ok(t)
    }
}

impl Fixtures {
    pub fn builtin() -> Self {
        let corpus = BUILTIN_CORPUS.iter().map(|(t, body)| (t.to_string(), body.to_string())).collect();
        let tables = MockTables::from_sources(|name| {
            Ok(BUILTIN_TABLES.iter().find(|(n, _)| *n == name).map(|(_, s)| s.to_string()))
        })
        .expect("built-in fixtures parse");
        Fixtures { corpus, tables }
    }

    /// Loads `corpus/*.txt` and `mock/*.json` from `dir`. Missing tables are
    /// left empty.
    pub fn from_dir(dir: &Path) -> Result<Self, FixtureError> {
        let io = |p: &Path, source| FixtureError::Io { path: p.display().to_string(), source };
        let mut corpus = BTreeMap::new();
        let corpus_dir = dir.join("corpus");
        if corpus_dir.is_dir() {
            for entry in std::fs::read_dir(&corpus_dir).map_err(|e| io(&corpus_dir, e))? {
                let path = entry.map_err(|e| io(&corpus_dir, e))?.path();
                if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                    continue;
                }
                let title = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                let text = std::fs::read_to_string(&path).map_err(|e| io(&path, e))?;
                corpus.insert(title, text);
            }
        }
        let tables = MockTables::from_sources(|name| {
            let path = dir.join("mock").join(format!("{name}.json"));
            if !path.exists() {
                return Ok(None);
            }
            std::fs::read_to_string(&path).map(Some).map_err(|e| io(&path, e))
        })?;
        Ok(Fixtures { corpus, tables })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_fixtures_load() {
        let f = Fixtures::builtin();
        assert!(f.corpus.contains_key("Biology"));
        assert!(f.tables.triples.contains_key("biology"));
        assert!(!f.tables.embeddings.is_empty());
    }

    #[test]
    fn directory_layout_matches_builtin() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
        let f = Fixtures::from_dir(&dir).unwrap();
        assert_eq!(f, Fixtures::builtin());
    }
}
