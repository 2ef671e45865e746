//! Second-stage passage scorers.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::adapters::{cosine, AdapterError, Embedder};
use crate::text::{content_tokens, words_lower};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreScale {
    /// Scores already lie in [0, 1].
    Unit,
    /// Raw scores of arbitrary range; min-max normalized per query.
    Unbounded,
}

pub trait Reranker: Send + Sync {
    fn score(&self, query: &str, texts: &[&str]) -> Result<Vec<f64>, AdapterError>;
    fn scale(&self) -> ScoreScale;
}

/// Deterministic lexical scorer: query-token recall in the passage, damped
/// by how often the query tokens occur (`tf / (tf + 1)`).
pub struct LexicalReranker;

impl Reranker for LexicalReranker {
    fn score(&self, query: &str, texts: &[&str]) -> Result<Vec<f64>, AdapterError> {
        let q = content_tokens(query);
        Ok(texts
            .iter()
            .map(|t| {
                if q.is_empty() {
                    return 0.0;
                }
                let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                let words = words_lower(t);
                for w in &words {
                    if q.contains(w) {
                        *counts.entry(w.as_str()).or_default() += 1;
                    }
                }
                let recall = counts.len() as f64 / q.len() as f64;
                let tf = counts.values().sum::<usize>() as f64;
                recall * tf / (tf + 1.0)
            })
            .collect())
    }

    fn scale(&self) -> ScoreScale {
        ScoreScale::Unit
    }
}

/// Cosine similarity between query and passage embeddings.
pub struct EmbeddingReranker {
    pub embedder: Arc<dyn Embedder>,
}

impl Reranker for EmbeddingReranker {
    fn score(&self, query: &str, texts: &[&str]) -> Result<Vec<f64>, AdapterError> {
        let q = self.embedder.embed(query)?;
        texts.iter().map(|t| Ok(cosine(&q, &self.embedder.embed(t)?))).collect()
    }

    fn scale(&self) -> ScoreScale {
        ScoreScale::Unbounded
    }
}

/// Maps raw scores into [0, 1]. Unit scores are clamped; unbounded scores
/// are min-max normalized, and a constant score vector is clamped as-is.
pub fn rescale(raw: &[f64], scale: ScoreScale) -> Vec<f64> {
    let clamp = |x: f64| if x.is_finite() { x.clamp(0.0, 1.0) } else { 0.0 };
    match scale {
        ScoreScale::Unit => raw.iter().map(|&x| clamp(x)).collect(),
        ScoreScale::Unbounded => {
            let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !(hi - lo > 1e-12) {
                return raw.iter().map(|&x| clamp(x)).collect();
            }
            raw.iter().map(|&x| clamp((x - lo) / (hi - lo))).collect()
        }
    }
}
