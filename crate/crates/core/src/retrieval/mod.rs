//! Evidence gathering for a term: title search, LLM title check, summary
//! and page fetch, chunking, two-stage scoring and mixture weights.

pub mod bm25;
pub mod chunk;
pub mod rerank;
pub mod source;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::AdapterError;
use crate::config::PipelineConfig;
use crate::gateway::{ChatRequest, Gateway, GatewayError, TaskTag};
use crate::prompts;
use bm25::Bm25;
use rerank::{rescale, Reranker};
use source::{split_lead, SearchSource, SourceError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error("scorer failed: {0}")]
    Scorer(#[from] AdapterError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("mixture weights need at least one score")]
    EmptyScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub source_title: String,
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    /// At most k passages, score descending, each above the floor.
    pub passages: Vec<Passage>,
    pub fallback: bool,
}

impl RetrievalResult {
    pub fn fallback() -> Self {
        RetrievalResult { passages: Vec::new(), fallback: true }
    }

    pub fn weights(&self) -> Vec<f64> {
        let scores: Vec<f64> = self.passages.iter().map(|p| p.score).collect();
        mixture_weights(&scores).unwrap_or_default()
    }
}

/// A passage before scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub id: String,
    pub source_title: String,
    pub text: String,
}

/// Softmax over retrieval scores.
pub fn mixture_weights(scores: &[f64]) -> Result<Vec<f64>, RetrievalError> {
    if scores.is_empty() {
        return Err(RetrievalError::EmptyScores);
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// BM25 keeps the best `first_stage_top` candidates, the re-ranker scores
/// them into [0, 1], and the top `k` strictly above `score_floor` survive.
pub fn score_and_rerank(
    query: &str,
    candidates: &[Candidate],
    first_stage_top: usize,
    k: usize,
    score_floor: f64,
    reranker: &dyn Reranker,
) -> Result<RetrievalResult, RetrievalError> {
    if candidates.is_empty() {
        return Ok(RetrievalResult::fallback());
    }
    let texts: Vec<&str> = candidates.iter().map(|c| c.text.as_str()).collect();
    let survivors = Bm25::new(&texts).top(query, first_stage_top);
    let kept_texts: Vec<&str> = survivors.iter().map(|&(i, _)| texts[i]).collect();
    let scores = rescale(&reranker.score(query, &kept_texts)?, reranker.scale());
    let mut passages: Vec<Passage> = survivors
        .iter()
        .zip(scores)
        .filter(|(_, s)| *s > score_floor)
        .map(|(&(i, _), score)| {
            let c = &candidates[i];
            Passage { id: c.id.clone(), source_title: c.source_title.clone(), text: c.text.clone(), score }
        })
        .collect();
    passages.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    passages.truncate(k);
    let fallback = passages.is_empty();
    Ok(RetrievalResult { passages, fallback })
}

/// Reads a one-word relevance verdict. Anything other than yes or no is an
/// error for the caller to log.
pub fn parse_yes_no(answer: &str) -> Result<bool, String> {
    let cleaned = answer.trim().trim_matches(|c: char| c == '"' || c == '\'' || c == '.').to_lowercase();
    match cleaned.as_str() {
        "yes" => Ok(true),
        "no" => Ok(false),
        _ => Err(answer.trim().to_string()),
    }
}

pub fn check_title_relevance(
    gateway: &Gateway,
    config: &PipelineConfig,
    term: &str,
    title: &str,
    context_hint: &str,
) -> Result<bool, GatewayError> {
    let req = ChatRequest::for_task(
        TaskTag::TitleCheck,
        config,
        prompts::title_check_system(),
        prompts::title_check_user(term, title, context_hint),
    );
    let resp = gateway.complete(&req)?;
    Ok(parse_yes_no(&resp.text).unwrap_or_else(|other| {
        log::warn!("title check for {term:?} / {title:?} answered {other:?}; treating as no");
        false
    }))
}

/// Runs the full retrieval stage for one term.
pub struct Retriever {
    pub source: Arc<dyn SearchSource>,
    pub reranker: Arc<dyn Reranker>,
}

impl Retriever {
    /// Uses the first candidate title that the LLM accepts and that is not a
    /// disambiguation or missing page. Its summary and the chunked remainder
    /// of the page are the candidate passages.
    pub fn retrieve(
        &self,
        gateway: &Gateway,
        config: &PipelineConfig,
        term: &str,
        context_hint: &str,
    ) -> Result<RetrievalResult, RetrievalError> {
        for title in self.source.search_titles(term, config.search_limit)? {
            if !check_title_relevance(gateway, config, term, &title, context_hint)? {
                continue;
            }
            let summary = match self.source.fetch_summary(&title, config.summary_char_limit) {
                Ok(s) => s,
                Err(e @ (SourceError::Ambiguous(_) | SourceError::NotFound(_))) => {
                    log::info!("skipping title for {term:?}: {e}");
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            let page = match self.source.fetch_page(&title) {
                Ok(p) => p,
                Err(SourceError::NotFound(_)) => String::new(),
                Err(e) => return Err(e.into()),
            };
            let candidates = page_candidates(&title, &summary, &page, config);
            return score_and_rerank(
                term,
                &candidates,
                config.first_stage_top,
                config.top_k,
                config.score_floor,
                self.reranker.as_ref(),
            );
        }
        Ok(RetrievalResult::fallback())
    }
}

fn page_candidates(title: &str, summary: &str, page: &str, config: &PipelineConfig) -> Vec<Candidate> {
    let mut out = Vec::new();
    if !summary.trim().is_empty() {
        out.push(Candidate { id: format!("{title}#summary"), source_title: title.to_string(), text: summary.to_string() });
    }
    let (_, body) = split_lead(page);
    for (i, chunk) in chunk::chunk_text(body, config.chunk_size, config.chunk_overlap).into_iter().enumerate() {
        out.push(Candidate { id: format!("{title}#{i}"), source_title: title.to_string(), text: chunk });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::Fixtures;
    use crate::gateway::{BackendError, ChatResponse, LlmBackend};
    use proptest::prelude::*;
    use rerank::{LexicalReranker, ScoreScale};

    struct Fixed(Vec<f64>);
    impl Reranker for Fixed {
        fn score(&self, _: &str, texts: &[&str]) -> Result<Vec<f64>, AdapterError> {
            // BM25 keeps input order for equal scores, so this maps by position.
            Ok(self.0[..texts.len()].to_vec())
        }
        fn scale(&self) -> ScoreScale {
            ScoreScale::Unit
        }
    }

    fn cands(n: usize) -> Vec<Candidate> {
        (0..n)
            .map(|i| Candidate { id: format!("p#{i}"), source_title: "p".into(), text: format!("text {i}") })
            .collect()
    }

    #[test]
    fn floor_and_order() {
        let r = score_and_rerank("zzz", &cands(3), 50, 5, 0.15, &Fixed(vec![0.9, 0.5, 0.1])).unwrap();
        let scores: Vec<f64> = r.passages.iter().map(|p| p.score).collect();
        assert_eq!(scores, vec![0.9, 0.5]);
        assert!(!r.fallback);
        let r = score_and_rerank("zzz", &cands(3), 50, 5, 0.15, &Fixed(vec![0.15, 0.1, 0.0])).unwrap();
        assert!(r.fallback && r.passages.is_empty());
    }

    #[test]
    fn photosynthesis_chunk_ranks_first() {
        let f = Fixtures::builtin();
        let mut all = Vec::new();
        for (title, text) in &f.corpus {
            for (i, c) in chunk::chunk_text(text, 1000, 100).into_iter().enumerate() {
                all.push(Candidate { id: format!("{title}#{i}"), source_title: title.clone(), text: c });
            }
        }
        let r = score_and_rerank("photosynthesis", &all, 50, 5, 0.15, &LexicalReranker).unwrap();
        assert_eq!(r.passages[0].source_title, "Photosynthesis");
    }

    #[test]
    fn mixture_weight_examples() {
        assert_eq!(mixture_weights(&[0.5, 0.5]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(mixture_weights(&[1.0]).unwrap(), vec![1.0]);
        let w = mixture_weights(&[0.2, 0.8]).unwrap();
        // e^0.6 computed independently: 1.8221188003905089
        let e = 1.822_118_800_390_508_9_f64;
        assert!((w[0] - 1.0 / (1.0 + e)).abs() < 1e-12);
        assert!((w[0] - 0.3543).abs() < 1e-4 && (w[1] - 0.6457).abs() < 1e-4);
        assert_eq!(mixture_weights(&[]), Err(RetrievalError::EmptyScores));
    }

    #[test]
    fn yes_no_parsing() {
        assert_eq!(parse_yes_no("Yes"), Ok(true));
        assert_eq!(parse_yes_no(" no\n"), Ok(false));
        assert_eq!(parse_yes_no("Maybe"), Err("Maybe".into()));
    }

    struct Answer(&'static str);
    impl LlmBackend for Answer {
        fn complete(&self, _: &ChatRequest) -> Result<ChatResponse, BackendError> {
            Ok(ChatResponse { text: self.0.into(), prompt_tokens: 1, completion_tokens: 1 })
        }
    }

    #[test]
    fn title_check_answers() {
        let cfg = PipelineConfig::default();
        for (ans, expect) in [("Yes", true), ("No", false), ("Maybe", false)] {
            let gw = Gateway::new(Arc::new(Answer(ans)), 1, 1);
            assert_eq!(check_title_relevance(&gw, &cfg, "cell", "Cell (biology)", "biology").unwrap(), expect);
        }
    }

    #[test]
    fn ambiguous_title_falls_through_to_next() {
        use std::collections::BTreeMap;
        let pages = BTreeMap::from([
            ("Mercury".to_string(), "Mercury may refer to:\n\nA planet. A metal.".to_string()),
            ("Mercury (planet)".to_string(), "Mercury is the smallest planet.\n\nMercury orbits the Sun.".to_string()),
        ]);
        let r = Retriever { source: Arc::new(source::FixtureCorpus::new(pages)), reranker: Arc::new(LexicalReranker) };
        let gw = Gateway::new(Arc::new(Answer("Yes")), 1, 1);
        let out = r.retrieve(&gw, &PipelineConfig::default(), "Mercury", "astronomy").unwrap();
        assert!(!out.fallback);
        assert!(out.passages.iter().all(|p| p.source_title == "Mercury (planet)"));
        let gw = Gateway::new(Arc::new(Answer("No")), 1, 1);
        assert!(r.retrieve(&gw, &PipelineConfig::default(), "Mercury", "astronomy").unwrap().fallback);
    }

    proptest! {
        #[test]
        fn weights_sum_to_one_and_are_monotone(scores in proptest::collection::vec(0.0f64..1.0, 1..20), shift in -5.0f64..5.0) {
            let w = mixture_weights(&scores).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for i in 0..scores.len() {
                for j in 0..scores.len() {
                    if scores[i] > scores[j] {
                        prop_assert!(w[i] > w[j]);
                    }
                }
            }
            let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
            let ws = mixture_weights(&shifted).unwrap();
            for (a, b) in w.iter().zip(&ws) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn rerank_output_above_floor_and_sorted(raw in proptest::collection::vec(0.0f64..1.0, 0..30), floor in 0.0f64..1.0) {
            let r = score_and_rerank("zzz", &cands(raw.len()), 50, 5, floor, &Fixed(raw.clone())).unwrap();
            prop_assert!(r.passages.len() <= 5);
            prop_assert_eq!(r.fallback, r.passages.is_empty());
            for w in r.passages.windows(2) {
                prop_assert!(w[0].score >= w[1].score);
            }
            for p in &r.passages {
                prop_assert!(p.score > floor);
            }
        }
    }
}
