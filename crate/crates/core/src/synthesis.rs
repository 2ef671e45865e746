//! Gloss generation from retrieved evidence, the overlap gate, and triple
//! extraction with near-duplicate removal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::PipelineConfig;
use crate::gateway::{ChatRequest, Gateway, GatewayError, TaskTag};
use crate::model::is_valid_relation;
use crate::prompts::{self, GLOSS_HEADINGS};
use crate::retrieval::{Passage, RetrievalResult};
use crate::text::content_tokens;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthesisError {
    #[error("invalid triple: {0}")]
    InvalidTriple(String),
    #[error("no parseable triplet JSON in response")]
    NoJson,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl Triple {
    /// Trims all fields and normalizes the relation label.
    pub fn new(head: &str, relation: &str, tail: &str) -> Result<Self, SynthesisError> {
        let (head, tail) = (head.trim(), tail.trim());
        let relation = normalize_relation(relation);
        if head.is_empty() || tail.is_empty() || !is_valid_relation(&relation) {
            return Err(SynthesisError::InvalidTriple(format!("({head:?}, {relation:?}, {tail:?})")));
        }
        Ok(Triple { head: head.to_string(), relation, tail: tail.to_string() })
    }

    /// `head|relation|tail`, the string compared during deduplication.
    pub fn key(&self) -> String {
        format!("{}|{}|{}", self.head, self.relation, self.tail)
    }

    /// Plain-language form used as an NLI hypothesis.
    pub fn sentence(&self) -> String {
        format!("{} {} {}", self.head, self.relation.replace('_', " "), self.tail)
    }
}

/// Lowercases and joins runs of non-alphanumeric characters with `_`.
pub fn normalize_relation(raw: &str) -> String {
    let mut out = String::new();
    let mut pending = false;
    for c in raw.trim().chars() {
        if c.is_ascii_alphanumeric() {
            if pending && !out.is_empty() {
                out.push('_');
            }
            pending = false;
            out.push(c.to_ascii_lowercase());
        } else {
            pending = true;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gloss {
    pub term: String,
    pub text: String,
    pub sections_present: usize,
    pub supported_by: Vec<String>,
    pub parametric_fallback: bool,
    pub mixture_weights: Vec<f64>,
}

/// Number of the eight required headings present in `text`.
pub fn count_sections(text: &str) -> usize {
    let lower = text.to_lowercase();
    GLOSS_HEADINGS.iter().filter(|h| lower.contains(&h.to_lowercase())).count()
}

/// Passages are injected best first, which is also descending mixture
/// weight since the weights are a softmax of the scores.
pub fn evidence_block(passages: &[Passage]) -> String {
    passages.iter().map(|p| p.text.trim()).collect::<Vec<_>>().join("\n\n")
}

pub fn generate_gloss(
    gateway: &Gateway,
    config: &PipelineConfig,
    term: &str,
    retrieval: &RetrievalResult,
    parent: Option<&str>,
) -> Result<Gloss, GatewayError> {
    let context = (!retrieval.fallback).then(|| evidence_block(&retrieval.passages));
    let req = ChatRequest::for_task(
        TaskTag::Gloss,
        config,
        prompts::gloss_system(),
        prompts::gloss_user(term, context.as_deref(), parent),
    );
    let text = gateway.complete(&req)?.text;
    let sections_present = count_sections(&text);
    if sections_present < 4 {
        log::warn!("malformed gloss for {term:?}: {sections_present} of 8 sections");
    }
    Ok(Gloss {
        term: term.to_string(),
        text,
        sections_present,
        supported_by: retrieval.passages.iter().map(|p| p.id.clone()).collect(),
        parametric_fallback: retrieval.fallback,
        mixture_weights: retrieval.weights(),
    })
}

/// Share of the gloss's content tokens that also occur in the passage.
pub fn overlap(passage_text: &str, gloss_text: &str) -> f64 {
    let gloss = content_tokens(gloss_text);
    if gloss.is_empty() {
        return 0.0;
    }
    let passage = content_tokens(passage_text);
    gloss.intersection(&passage).count() as f64 / gloss.len() as f64
}

/// The gloss without its `Term:` line and section labels, which come from
/// the prompt template rather than from evidence.
pub fn gloss_body(text: &str) -> String {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.starts_with("Term:") {
            continue;
        }
        let unnumbered = line.trim_start_matches(|c: char| c.is_ascii_digit() || matches!(c, '.' | ')' | '*' | '#' | ' '));
        let body = GLOSS_HEADINGS
            .iter()
            .find_map(|h| {
                let rest = unnumbered.get(..h.len()).filter(|p| p.eq_ignore_ascii_case(h)).map(|_| &unnumbered[h.len()..])?;
                Some(rest.trim_start_matches([':', ' ', '-', '*', '\u{2013}']))
            })
            .unwrap_or(line);
        if !body.is_empty() {
            out.push(body);
        }
    }
    out.join("\n")
}

/// Evidence-backed glosses must overlap some passage by at least `eta`.
/// Parametric glosses have no evidence to check and pass.
pub fn gate_gloss(gloss: &Gloss, passages: &[Passage], eta: f64) -> bool {
    if gloss.parametric_fallback {
        return true;
    }
    let body = gloss_body(&gloss.text);
    passages.iter().any(|p| overlap(&p.text, &body) >= eta)
}

pub fn extract_triples(gateway: &Gateway, config: &PipelineConfig, gloss_text: &str) -> Result<Vec<Triple>, SynthesisError> {
    let req = ChatRequest::for_task(
        TaskTag::Triples,
        config,
        prompts::triples_system(),
        prompts::triples_user(gloss_text),
    );
    parse_triples(&gateway.complete(&req)?.text)
}

/// Reads the first JSON object carrying a `triplets` array, ignoring any
/// surrounding prose. Entries with missing or empty fields are dropped.
pub fn parse_triples(text: &str) -> Result<Vec<Triple>, SynthesisError> {
    let value = json_objects(text)
        .filter_map(|s| serde_json::from_str::<serde_json::Value>(s).ok())
        .find(|v| v.get("triplets").is_some_and(|t| t.is_array()))
        .ok_or(SynthesisError::NoJson)?;
    let field = |e: &serde_json::Value, k: &str| e.get(k).and_then(|v| v.as_str()).unwrap_or("").to_string();
    Ok(value["triplets"]
        .as_array()
        .into_iter()
        .flatten()
        .filter_map(|e| Triple::new(&field(e, "head"), &field(e, "relation"), &field(e, "tail")).ok())
        .collect())
}

/// Balanced `{...}` spans in order of their opening brace, skipping braces
/// inside JSON strings.
fn json_objects(text: &str) -> impl Iterator<Item = &str> {
    text.match_indices('{').filter_map(move |(start, _)| {
        let mut depth = 0usize;
        let mut in_str = false;
        let mut escaped = false;
        for (i, c) in text[start..].char_indices() {
            if in_str {
                match c {
                    _ if escaped => escaped = false,
                    '\\' => escaped = true,
                    '"' => in_str = false,
                    _ => {}
                }
                continue;
            }
            match c {
                '"' => in_str = true,
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(&text[start..start + i + 1]);
                    }
                }
                _ => {}
            }
        }
        None
    })
}

/// Edit distance over characters divided by the longer length.
pub fn normalized_levenshtein(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 0.0;
    }
    strsim::levenshtein(a, b) as f64 / longest as f64
}

/// Keeps each triple unless it lies within `lambda_max` of one already kept.
pub fn dedup_triples(triples: &[Triple], lambda_max: f64) -> Vec<Triple> {
    let mut kept: Vec<(String, &Triple)> = Vec::new();
    for t in triples {
        let key = t.key();
        if kept.iter().all(|(k, _)| normalized_levenshtein(k, &key) > lambda_max) {
            kept.push((key, t));
        }
    }
    kept.into_iter().map(|(_, t)| t.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(h: &str, r: &str, tl: &str) -> Triple {
        Triple::new(h, r, tl).unwrap()
    }

    #[test]
    fn relation_normalization() {
        assert_eq!(normalize_relation("notable relation"), "notable_relation");
        assert_eq!(normalize_relation(" Found In "), "found_in");
        assert_eq!(normalize_relation("part-of"), "part_of");
        assert!(Triple::new("a", "  ", "b").is_err());
        assert!(Triple::new("a", "r", "").is_err());
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(overlap("cell energy", "cell energy"), 1.0);
        assert_eq!(overlap("alpha beta", "gamma delta"), 0.0);
        assert_eq!(overlap("mitochondria in the cell", "mitochondria energy cell organelle"), 0.5);
        assert_eq!(overlap("anything", "the of and"), 0.0);
    }

    fn gloss(text: &str, fallback: bool) -> Gloss {
        Gloss {
            term: "x".into(),
            text: text.into(),
            sections_present: 0,
            supported_by: vec![],
            parametric_fallback: fallback,
            mixture_weights: vec![],
        }
    }

    fn passage(text: &str) -> Passage {
        Passage { id: "p#0".into(), source_title: "p".into(), text: text.into(), score: 0.9 }
    }

    #[test]
    fn gate_threshold_boundaries() {
        // 9 of 25 gloss tokens (0.36) and 17 of 50 (0.34) found in the passage.
        let words = |n: usize| (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let g36 = gloss(&words(25), false);
        let g34 = gloss(&words(50), false);
        let p36 = passage(&words(9));
        let p34 = passage(&words(17));
        assert!(gate_gloss(&g36, &[p36], 0.35));
        assert!(!gate_gloss(&g34, &[p34], 0.35));
        assert!(gate_gloss(&gloss("anything", true), &[], 0.35));
        assert!(!gate_gloss(&gloss("anything", false), &[], 0.35));
    }

    #[test]
    fn body_drops_template_labels() {
        let text = "Term: Cell\n1. Definition and Scope: The cell is a unit.\n**Domains of Use** - biology\nfree line";
        assert_eq!(gloss_body(text), "The cell is a unit.\nbiology\nfree line");
    }

    #[test]
    fn triple_parsing() {
        assert_eq!(parse_triples(r#"{"triplets":[]}"#).unwrap(), vec![]);
        let raw = "Here are the triplets I found:\n{\"triplets\": [{\"head\": \"Chloroplast\", \"relation\": \"contains\", \"tail\": \"Chlorophyll\"}, {\"head\": \"Chloroplast\", \"relation\": \"Found In\", \"tail\": \"Plant cell\"}, {\"head\": \"Chloroplast\", \"relation\": \"stores\", \"tail\": \"\"}]}\nLet me know.";
        assert_eq!(
            parse_triples(raw).unwrap(),
            vec![t("Chloroplast", "contains", "Chlorophyll"), t("Chloroplast", "found_in", "Plant cell")]
        );
        assert_eq!(parse_triples("no json here"), Err(SynthesisError::NoJson));
        assert_eq!(parse_triples("{\"note\": \"a } brace\"} {\"triplets\": [{\"head\": \"a\"}]}").unwrap(), vec![]);
    }

    #[test]
    fn dedup_examples() {
        let a = t("hafez", "born_in", "shiraz");
        assert_eq!(dedup_triples(&[a.clone(), a.clone()], 0.15), vec![a.clone()]);
        let b = t("ww2", "started_in", "1939");
        let c = t("biology", "studies", "life");
        assert_eq!(dedup_triples(&[b.clone(), c.clone()], 0.15).len(), 2);
        let near = t("hafez", "born_in", "shiraaz");
        // one insertion over the 21-character longer key
        assert!((normalized_levenshtein(&a.key(), &near.key()) - 1.0 / 21.0).abs() < 1e-12);
        assert_eq!(dedup_triples(&[a.clone(), near], 0.1), vec![a]);
    }

    fn arb_triple() -> impl Strategy<Value = Triple> {
        ("[a-c]{1,4}", "[a-c_]{0,3}[a-c]", "[a-c]{1,4}").prop_map(|(h, r, tl)| t(&h, &r, &tl))
    }

    proptest! {
        #[test]
        fn dedup_is_idempotent_subsequence(xs in proptest::collection::vec(arb_triple(), 0..25), lambda in 0.0f64..0.5) {
            let once = dedup_triples(&xs, lambda);
            prop_assert_eq!(dedup_triples(&once, lambda), once.clone());
            let mut it = xs.iter();
            for kept in &once {
                prop_assert!(it.any(|x| x == kept));
            }
        }

        #[test]
        fn overlap_bounded(a in "[a-z ]{0,40}", b in "[a-z ]{0,40}") {
            let o = overlap(&a, &b);
            prop_assert!((0.0..=1.0).contains(&o));
            if !content_tokens(&a).is_empty() {
                prop_assert_eq!(overlap(&a, &a), 1.0);
            }
        }

        #[test]
        fn parsed_triples_satisfy_invariants(h in ".{0,8}", r in ".{0,8}", tl in ".{0,8}") {
            let body = serde_json::json!({"triplets": [{"head": h, "relation": r, "tail": tl}]}).to_string();
            for x in parse_triples(&format!("prose {body} more")).unwrap() {
                prop_assert!(!x.head.is_empty() && !x.tail.is_empty() && is_valid_relation(&x.relation));
            }
        }

        #[test]
        fn gate_monotone_in_eta(g in "[a-e ]{1,30}", p in "[a-e ]{1,30}", eta in 0.0f64..1.0, lower in 0.0f64..1.0) {
            let gl = gloss(&g, false);
            let ps = [passage(&p)];
            if gate_gloss(&gl, &ps, eta) {
                prop_assert!(gate_gloss(&gl, &ps, eta * lower));
            }
        }
    }
}
