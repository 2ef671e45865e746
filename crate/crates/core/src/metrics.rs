//! Dataset quality statistics: grammar quality, predictive entropy, probe
//! accuracy, entailment topicality, off-topic rate, question lengths, and
//! the agreement statistics used when comparing against human ratings.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{AdapterError, GrammarChecker, NliScorer, ProbeScorer};
use crate::model::Orientation;
use crate::qgen::{LETTERS, McqItem};
use crate::text::word_count;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
}

fn domain<T>(msg: impl Into<String>) -> Result<T, MetricError> {
    Err(MetricError::Domain(msg.into()))
}

/// `1 - E/W`, unclamped.
pub fn grammar_quality(words: usize, errors: usize) -> Result<f64, MetricError> {
    if words == 0 {
        return domain("grammar quality of an empty question");
    }
    Ok(1.0 - errors as f64 / words as f64)
}

/// Softmax probabilities and their entropy in nats.
pub fn predictive_entropy(logits: [f64; 4]) -> Result<([f64; 4], f64), MetricError> {
    if logits.iter().any(|z| !z.is_finite()) {
        return domain(format!("non-finite logits {logits:?}"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.map(|z| (z - max).exp());
    let sum: f64 = e.iter().sum();
    let p = e.map(|x| x / sum);
    let h = -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>();
    Ok((p, h.max(0.0)))
}

/// Index of the largest logit; ties go to the earliest letter.
pub fn argmax_letter(logits: &[f64; 4]) -> usize {
    let mut best = 0;
    for i in 1..4 {
        if logits[i] > logits[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub accuracy: f64,
    pub scored: usize,
    pub excluded: usize,
}

/// Share of items whose argmax letter is the key. Items the probe fails on
/// are excluded and counted.
pub fn probe_accuracy(items: &[McqItem], probe: &dyn ProbeScorer) -> Result<ProbeOutcome, MetricError> {
    if items.is_empty() {
        return domain("probe accuracy of an empty dataset");
    }
    let (mut correct, mut scored, mut excluded) = (0usize, 0usize, 0usize);
    for item in items {
        match probe.logits(&item.question, &item.option_array(), &item.source_context) {
            Ok(z) => {
                scored += 1;
                correct += (LETTERS[argmax_letter(&z)] == item.answer_key) as usize;
            }
            Err(e) => {
                log::warn!("probe failed on {}: {e}", item.id);
                excluded += 1;
            }
        }
    }
    if scored == 0 {
        return domain("probe failed on every item");
    }
    Ok(ProbeOutcome { accuracy: correct as f64 / scored as f64, scored, excluded })
}

/// Entailment probability with the topic as premise and the question as
/// hypothesis.
pub fn entailment_relevance(question: &str, topic: &str, nli: &dyn NliScorer) -> Result<f64, MetricError> {
    Ok(nli.entailment(topic, question)?)
}

/// Share of items flagged off-topic by both checks.
pub fn off_topic_rate(flags_entailment: &[bool], flags_llm: &[bool]) -> Result<f64, MetricError> {
    if flags_entailment.len() != flags_llm.len() {
        return domain(format!("flag lengths differ: {} vs {}", flags_entailment.len(), flags_llm.len()));
    }
    if flags_llm.is_empty() {
        return domain("off-topic rate of an empty dataset");
    }
    let both = flags_entailment.iter().zip(flags_llm).filter(|(a, b)| **a && **b).count();
    Ok(both as f64 / flags_llm.len() as f64)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    if x.len() != y.len() {
        return domain(format!("lengths differ: {} vs {}", x.len(), y.len()));
    }
    if x.len() < 2 {
        return domain("pearson needs at least two points");
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return domain("zero variance");
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Fleiss' kappa over an items x categories count matrix where every row
/// sums to the number of raters. When all ratings fall in one category the
/// chance agreement is 1 and kappa is reported as 1.
pub fn fleiss_kappa(ratings: &[Vec<usize>]) -> Result<f64, MetricError> {
    let Some(first) = ratings.first() else {
        return domain("no items");
    };
    let n: usize = first.iter().sum();
    if n < 2 {
        return domain("fewer than two raters");
    }
    let k = first.len();
    if let Some((i, row)) = ratings.iter().enumerate().find(|(_, r)| r.len() != k || r.iter().sum::<usize>() != n) {
        return domain(format!("row {i} has {} ratings over {} categories", row.iter().sum::<usize>(), row.len()));
    }
    let items = ratings.len() as f64;
    let nf = n as f64;
    let p_bar = ratings
        .iter()
        .map(|r| (r.iter().map(|&c| (c * c) as f64).sum::<f64>() - nf) / (nf * (nf - 1.0)))
        .sum::<f64>()
        / items;
    let p_e: f64 = (0..k)
        .map(|j| {
            let pj = ratings.iter().map(|r| r[j] as f64).sum::<f64>() / (items * nf);
            pj * pj
        })
        .sum();
    if p_e == 1.0 {
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

pub const LENGTH_BIN_WIDTH: usize = 2;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub counts: Vec<usize>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Bin start (a multiple of the bin width) to question count.
    pub histogram: BTreeMap<usize, usize>,
}

pub fn length_stats<S: AsRef<str>>(questions: &[S]) -> LengthStats {
    let counts: Vec<usize> = questions.iter().map(|q| word_count(q.as_ref())).collect();
    if counts.is_empty() {
        return LengthStats::default();
    }
    let xs: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let (m, s) = mean_std(&xs);
    let mut histogram = BTreeMap::new();
    for &c in &counts {
        *histogram.entry(c / LENGTH_BIN_WIDTH * LENGTH_BIN_WIDTH).or_insert(0) += 1;
    }
    LengthStats { counts, mean: m, std: s, histogram }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    (m, var.sqrt())
}

/// Per-item metric row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemMetrics {
    pub id: String,
    pub level: usize,
    pub orientation: Orientation,
    pub word_count: usize,
    pub grammar: Option<f64>,
    pub probabilities: Option<[f64; 4]>,
    pub entropy: Option<f64>,
    pub probe_correct: Option<bool>,
    pub entailment: Option<f64>,
    pub off_topic_entailment: bool,
    pub off_topic_llm: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub count: usize,
    pub mean_entropy: Option<f64>,
    pub probe_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_items: usize,
    pub mean_entropy: Option<f64>,
    pub std_entropy: Option<f64>,
    pub probe_accuracy: Option<f64>,
    pub probe_excluded: usize,
    pub mean_grammar: Option<f64>,
    pub mean_entailment: Option<f64>,
    pub off_topic_rate: Option<f64>,
    pub length: LengthStats,
    pub by_level: BTreeMap<usize, GroupStats>,
    pub by_orientation: BTreeMap<Orientation, GroupStats>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub stats: DatasetStats,
    pub items: Vec<ItemMetrics>,
}

pub struct MetricAdapters<'a> {
    pub probe: &'a dyn ProbeScorer,
    pub nli: &'a dyn NliScorer,
    pub grammar: &'a dyn GrammarChecker,
}

fn score_item(item: &McqItem, adapters: &MetricAdapters<'_>, off_topic_below: f64) -> ItemMetrics {
    let words = word_count(&item.question);
    let grammar = adapters.grammar.error_count(&item.question).ok().and_then(|e| grammar_quality(words, e).ok());
    let logits = adapters.probe.logits(&item.question, &item.option_array(), &item.source_context).ok();
    let scored = logits.and_then(|z| predictive_entropy(z).ok().map(|(p, h)| (z, p, h)));
    let entailment = entailment_relevance(&item.question, &item.topic, adapters.nli).ok();
    ItemMetrics {
        id: item.id.clone(),
        level: item.level,
        orientation: item.orientation,
        word_count: words,
        grammar,
        probabilities: scored.map(|(_, p, _)| p),
        entropy: scored.map(|(_, _, h)| h),
        probe_correct: scored.map(|(z, _, _)| LETTERS[argmax_letter(&z)] == item.answer_key),
        entailment,
        off_topic_entailment: entailment.is_some_and(|s| s < off_topic_below),
        off_topic_llm: item.flags.as_ref().is_some_and(|f| f.topic_relevant == Some(false)),
    }
}

fn opt_mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| mean(xs))
}

fn group<'a>(rows: impl Iterator<Item = &'a ItemMetrics>) -> GroupStats {
    let rows: Vec<&ItemMetrics> = rows.collect();
    let h: Vec<f64> = rows.iter().filter_map(|r| r.entropy).collect();
    let acc: Vec<f64> = rows.iter().filter_map(|r| r.probe_correct.map(|c| c as u8 as f64)).collect();
    GroupStats { count: rows.len(), mean_entropy: opt_mean(&h), probe_accuracy: opt_mean(&acc) }
}

/// Scores every item. An item counts as off-topic by entailment when its
/// score is below `off_topic_below`, and by the critic when its topic flag
/// is false.
pub fn evaluate(items: &[McqItem], adapters: &MetricAdapters<'_>, off_topic_below: f64) -> MetricsReport {
    let rows: Vec<ItemMetrics> = items.par_iter().map(|i| score_item(i, adapters, off_topic_below)).collect();
    let h: Vec<f64> = rows.iter().filter_map(|r| r.entropy).collect();
    let g: Vec<f64> = rows.iter().filter_map(|r| r.grammar).collect();
    let s: Vec<f64> = rows.iter().filter_map(|r| r.entailment).collect();
    let overall = group(rows.iter());
    let fe: Vec<bool> = rows.iter().map(|r| r.off_topic_entailment).collect();
    let fl: Vec<bool> = rows.iter().map(|r| r.off_topic_llm).collect();
    let levels: BTreeSet<usize> = rows.iter().map(|r| r.level).collect();
    let orientations: BTreeSet<Orientation> = rows.iter().map(|r| r.orientation).collect();
    let stats = DatasetStats {
        n_items: rows.len(),
        mean_entropy: opt_mean(&h),
        std_entropy: (!h.is_empty()).then(|| mean_std(&h).1),
        probe_accuracy: overall.probe_accuracy,
        probe_excluded: rows.iter().filter(|r| r.entropy.is_none()).count(),
        mean_grammar: opt_mean(&g),
        mean_entailment: opt_mean(&s),
        off_topic_rate: off_topic_rate(&fe, &fl).ok(),
        length: length_stats(&items.iter().map(|i| i.question.as_str()).collect::<Vec<_>>()),
        by_level: levels.into_iter().map(|l| (l, group(rows.iter().filter(|r| r.level == l)))).collect(),
        by_orientation: orientations
            .into_iter()
            .map(|o| (o, group(rows.iter().filter(|r| r.orientation == o))))
            .collect(),
    };
    MetricsReport { stats, items: rows }
}
