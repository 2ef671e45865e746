//! Okapi BM25 over a small in-memory document set.

use std::collections::HashMap;

use crate::text::words_lower;

pub const K1: f64 = 1.2;
pub const B: f64 = 0.75;

pub struct Bm25 {
    docs: Vec<HashMap<String, usize>>,
    lengths: Vec<usize>,
    avg_len: f64,
    df: HashMap<String, usize>,
}

impl Bm25 {
    pub fn new<S: AsRef<str>>(docs: &[S]) -> Self {
        let mut tfs = Vec::with_capacity(docs.len());
        let mut lengths = Vec::with_capacity(docs.len());
        let mut df: HashMap<String, usize> = HashMap::new();
        for doc in docs {
            let words = words_lower(doc.as_ref());
            lengths.push(words.len());
            let mut tf: HashMap<String, usize> = HashMap::new();
            for w in words {
                *tf.entry(w).or_default() += 1;
            }
            for term in tf.keys() {
                *df.entry(term.clone()).or_default() += 1;
            }
            tfs.push(tf);
        }
        let avg_len = if lengths.is_empty() {
            0.0
        } else {
            lengths.iter().sum::<usize>() as f64 / lengths.len() as f64
        };
        Bm25 { docs: tfs, lengths, avg_len, df }
    }

    /// Non-negative IDF variant: ln(1 + (N - n + 0.5) / (n + 0.5)).
    fn idf(&self, term: &str) -> f64 {
        let n = *self.df.get(term).unwrap_or(&0) as f64;
        let total = self.docs.len() as f64;
        (1.0 + (total - n + 0.5) / (n + 0.5)).ln()
    }

    pub fn score(&self, query: &str, doc: usize) -> f64 {
        let len_norm = if self.avg_len > 0.0 { self.lengths[doc] as f64 / self.avg_len } else { 0.0 };
        words_lower(query)
            .iter()
            .map(|term| {
                let tf = *self.docs[doc].get(term).unwrap_or(&0) as f64;
                if tf == 0.0 {
                    return 0.0;
                }
                self.idf(term) * tf * (K1 + 1.0) / (tf + K1 * (1.0 - B + B * len_norm))
            })
            .sum()
    }

    /// Indices of the `n` best documents, by score descending then index.
    pub fn top(&self, query: &str, n: usize) -> Vec<(usize, f64)> {
        let mut scored: Vec<(usize, f64)> = (0..self.docs.len()).map(|i| (i, self.score(query, i))).collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(n);
        scored
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_hand_computed_score() {
        let docs = ["cell cell membrane", "genetics of heredity", "the cell"];
        let bm = Bm25::new(&docs);
        // "cell" occurs in 2 of 3 docs; doc 0 has tf 2 and length 3, avg length 8/3
        let idf = (1.0f64 + (3.0 - 2.0 + 0.5) / (2.0 + 0.5)).ln();
        let norm = 3.0 / (8.0 / 3.0);
        let expect = idf * 2.0 * 2.2 / (2.0 + 1.2 * (0.25 + 0.75 * norm));
        assert!((bm.score("cell", 0) - expect).abs() < 1e-12);
        assert_eq!(bm.score("cell", 1), 0.0);
    }

    #[test]
    fn top_orders_by_score_then_index() {
        let docs = ["alpha", "beta", "alpha alpha", "gamma"];
        let bm = Bm25::new(&docs);
        let top = bm.top("alpha", 3);
        assert_eq!(top[0].0, 2);
        assert_eq!(top[1].0, 0);
        assert_eq!(top[2].0, 1);
        assert!(Bm25::new::<&str>(&[]).top("x", 5).is_empty());
    }
}
