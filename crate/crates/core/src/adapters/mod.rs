//! Scoring and lookup services consumed by the pipeline: embeddings, NLI,
//! ontology types, content policy, probe logits and grammar checking.
//!
//! Each has a deterministic table-driven mock and a network implementation.

pub mod mock;
pub mod network;

use std::fmt;

use thiserror::Error;

use crate::gateway::BackendError;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{adapter}: {message}")]
pub struct AdapterError {
    pub adapter: &'static str,
    pub message: String,
    /// Outages and rate limits; a retry may succeed.
    pub retryable: bool,
}

impl AdapterError {
    pub fn new(adapter: &'static str, message: impl fmt::Display) -> Self {
        AdapterError { adapter, message: message.to_string(), retryable: false }
    }

    pub fn from_backend(adapter: &'static str, err: BackendError) -> Self {
        let retryable = matches!(err, BackendError::Transient(_));
        AdapterError { adapter, message: err.to_string(), retryable }
    }
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, AdapterError>;
}

pub trait NliScorer: Send + Sync {
    /// Probability that `premise` entails `hypothesis`.
    fn entailment(&self, premise: &str, hypothesis: &str) -> Result<f64, AdapterError>;
}

pub trait TypeChecker: Send + Sync {
    /// Whether `tail` has a type admissible as the object of `relation`.
    fn admissible(&self, relation: &str, tail: &str) -> Result<bool, AdapterError>;
}

pub trait PolicyScreen: Send + Sync {
    /// The blocked category matched by `text`, if any.
    fn blocked_category(&self, text: &str) -> Result<Option<String>, AdapterError>;
}

pub trait ProbeScorer: Send + Sync {
    /// One raw score per option letter A..D.
    fn logits(&self, question: &str, options: &[String; 4], source_context: &str) -> Result<[f64; 4], AdapterError>;
}

pub trait GrammarChecker: Send + Sync {
    fn error_count(&self, text: &str) -> Result<usize, AdapterError>;
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (x, y) = (at(a, i), at(b, i));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_basics() {
        assert!((cosine(&[1.0, 0.0], &[1.0, 0.0]) - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert_eq!(cosine(&[0.0], &[1.0]), 0.0);
        // shorter vectors are zero-padded
        assert!((cosine(&[1.0], &[1.0, 0.0, 0.0]) - 1.0).abs() < 1e-12);
    }
}
