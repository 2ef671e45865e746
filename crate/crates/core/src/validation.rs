//! The validity gate: structural rule checks followed by the five-criteria
//! LLM critic. An item is kept only if every applicable flag holds.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::PipelineConfig;
use crate::gateway::{ChatRequest, Gateway, GatewayError, TaskTag};
use crate::prompts;
use crate::qgen::{LETTERS, McqItem};
use crate::text::{stable_hash, unit_fraction, words_lower};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationParseError {
    #[error("expected 5 criterion lines, found {0}")]
    LineCount(usize),
    #[error("line {index} should be {expected}, found {found:?}")]
    Label { index: usize, expected: &'static str, found: String },
    #[error("{label}: unrecognized value {value:?}")]
    Value { label: &'static str, value: String },
}

/// How the LLM criteria of a report were obtained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "reason")]
pub enum LlmStatus {
    Validated,
    /// Sampled out; criteria default to true and are not trusted.
    Unvalidated,
    /// A rule check failed, so the critic was not asked.
    SkippedRuleFailure,
    /// The critic's reply was unusable or the call failed.
    Error(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Criteria {
    pub grammar_fluency: bool,
    pub single_correct_key: bool,
    pub option_uniqueness: bool,
    pub answerable_from_source: bool,
    /// `None` when no topic applies.
    pub topic_relevant: Option<bool>,
}

impl Criteria {
    pub const ALL_TRUE: Criteria = Criteria {
        grammar_fluency: true,
        single_correct_key: true,
        option_uniqueness: true,
        answerable_from_source: true,
        topic_relevant: Some(true),
    };

    pub const ALL_FALSE: Criteria = Criteria {
        grammar_fluency: false,
        single_correct_key: false,
        option_uniqueness: false,
        answerable_from_source: false,
        topic_relevant: Some(false),
    };

    pub fn all_pass(&self) -> bool {
        self.grammar_fluency
            && self.single_correct_key
            && self.option_uniqueness
            && self.answerable_from_source
            && self.topic_relevant != Some(false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleFlags {
    pub rule_four_options: bool,
    pub rule_one_key: bool,
    pub rule_options_distinct: bool,
}

impl RuleFlags {
    pub fn all_pass(&self) -> bool {
        self.rule_four_options && self.rule_one_key && self.rule_options_distinct
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub grammar_fluency: bool,
    pub single_correct_key: bool,
    pub option_uniqueness: bool,
    pub answerable_from_source: bool,
    pub topic_relevant: Option<bool>,
    pub rule_four_options: bool,
    pub rule_one_key: bool,
    pub rule_options_distinct: bool,
    pub llm_status: LlmStatus,
    pub kept: bool,
}

impl ValidationReport {
    pub fn new(rules: RuleFlags, criteria: Criteria, llm_status: LlmStatus) -> Self {
        let mut r = ValidationReport {
            grammar_fluency: criteria.grammar_fluency,
            single_correct_key: criteria.single_correct_key,
            option_uniqueness: criteria.option_uniqueness,
            answerable_from_source: criteria.answerable_from_source,
            topic_relevant: criteria.topic_relevant,
            rule_four_options: rules.rule_four_options,
            rule_one_key: rules.rule_one_key,
            rule_options_distinct: rules.rule_options_distinct,
            llm_status,
            kept: false,
        };
        r.kept = keep(&r);
        r
    }

    pub fn rules(&self) -> RuleFlags {
        RuleFlags {
            rule_four_options: self.rule_four_options,
            rule_one_key: self.rule_one_key,
            rule_options_distinct: self.rule_options_distinct,
        }
    }

    pub fn criteria(&self) -> Criteria {
        Criteria {
            grammar_fluency: self.grammar_fluency,
            single_correct_key: self.single_correct_key,
            option_uniqueness: self.option_uniqueness,
            answerable_from_source: self.answerable_from_source,
            topic_relevant: self.topic_relevant,
        }
    }
}

/// Conjunction of every rule and criterion flag; a not-applicable topic
/// flag is left out. A critic error is never kept.
pub fn keep(report: &ValidationReport) -> bool {
    !matches!(report.llm_status, LlmStatus::Error(_)) && report.rules().all_pass() && report.criteria().all_pass()
}

/// Token Jaccard similarity of two lowercased option texts.
pub fn option_similarity(a: &str, b: &str) -> f64 {
    let ta: BTreeSet<String> = words_lower(a).into_iter().collect();
    let tb: BTreeSet<String> = words_lower(b).into_iter().collect();
    if ta.is_empty() && tb.is_empty() {
        return if a.trim().to_lowercase() == b.trim().to_lowercase() { 1.0 } else { 0.0 };
    }
    ta.intersection(&tb).count() as f64 / ta.union(&tb).count() as f64
}

pub fn rule_checks(item: &McqItem, delta_option: f64) -> RuleFlags {
    let opts: Vec<&String> = item.options.values().collect();
    let four = item.options.len() == 4 && LETTERS.iter().all(|l| item.options.contains_key(*l));
    let one_key = item.key_text().is_some_and(|k| {
        let k = k.trim().to_lowercase();
        opts.iter().filter(|o| o.trim().to_lowercase() == k).count() == 1
    });
    let distinct =
        (0..opts.len()).all(|i| (i + 1..opts.len()).all(|j| option_similarity(opts[i], opts[j]) < delta_option));
    RuleFlags { rule_four_options: four, rule_one_key: one_key, rule_options_distinct: distinct }
}

fn parse_value(label: &'static str, raw: &str, allow_na: bool) -> Result<Option<bool>, ValidationParseError> {
    let v = raw.trim().trim_matches(|c: char| matches!(c, '[' | ']' | '"' | '*' | '.' | ' ')).to_uppercase();
    match v.as_str() {
        "YES" => Ok(Some(true)),
        "NO" => Ok(Some(false)),
        "N/A" | "NA" if allow_na => Ok(None),
        _ => Err(ValidationParseError::Value { label, value: raw.trim().to_string() }),
    }
}

/// Reads the critic's five labeled lines, in order. Blank lines and stray
/// markdown emphasis are ignored; anything else counts as a line.
pub fn parse_validation(text: &str) -> Result<Criteria, ValidationParseError> {
    let lines: Vec<&str> = text.lines().map(|l| l.trim().trim_matches('*').trim()).filter(|l| !l.is_empty()).collect();
    let labels = prompts::validation_labels();
    if lines.len() != labels.len() {
        return Err(ValidationParseError::LineCount(lines.len()));
    }
    let mut values = [None; 5];
    for (i, (line, label)) in lines.iter().zip(labels).enumerate() {
        let (found, value) = line.split_once(':').unwrap_or((line, ""));
        let found = found.trim().trim_matches('*').trim();
        if !found.eq_ignore_ascii_case(label) {
            return Err(ValidationParseError::Label { index: i + 1, expected: label, found: found.to_string() });
        }
        values[i] = parse_value(label, value, i == 4)?;
    }
    let b = |i: usize| values[i].unwrap_or(false);
    Ok(Criteria {
        grammar_fluency: b(0),
        single_correct_key: b(1),
        option_uniqueness: b(2),
        answerable_from_source: b(3),
        topic_relevant: values[4],
    })
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationError {
    #[error(transparent)]
    Parse(#[from] ValidationParseError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

pub fn llm_validate(gateway: &Gateway, config: &PipelineConfig, item: &McqItem) -> Result<Criteria, ValidationError> {
    let key = item.answer_key.chars().next().unwrap_or('?');
    let opts: Vec<(char, &str)> = item
        .options
        .iter()
        .filter_map(|(l, t)| Some((l.chars().next()?, t.as_str())))
        .collect();
    let req = ChatRequest::for_task(
        TaskTag::Validate,
        config,
        prompts::validate_system(),
        prompts::validate_user(&item.question, &opts, key, &item.topic, &item.source_context),
    );
    Ok(parse_validation(&gateway.complete(&req)?.text)?)
}

/// Seeded Bernoulli draw deciding whether item `item_index` is sent to the
/// critic. Each draw depends only on the seed and index.
pub fn sample_gate(rate: f64, item_index: usize, rng_seed: u64) -> bool {
    if rate >= 1.0 {
        return true;
    }
    if rate <= 0.0 {
        return false;
    }
    unit_fraction(stable_hash(["sample_gate", &rng_seed.to_string(), &item_index.to_string()])) < rate
}

/// Full gate for one item. Only fatal gateway errors are returned; other
/// critic failures are recorded in the report as rejections.
pub fn validate_item(
    gateway: &Gateway,
    config: &PipelineConfig,
    item: &McqItem,
    item_index: usize,
) -> Result<ValidationReport, GatewayError> {
    let rules = rule_checks(item, config.delta_option);
    if !rules.all_pass() {
        return Ok(ValidationReport::new(rules, Criteria::ALL_FALSE, LlmStatus::SkippedRuleFailure));
    }
    if !sample_gate(config.validation_sample_rate, item_index, config.rng_seed) {
        return Ok(ValidationReport::new(rules, Criteria::ALL_TRUE, LlmStatus::Unvalidated));
    }
    match llm_validate(gateway, config, item) {
        Ok(criteria) => Ok(ValidationReport::new(rules, criteria, LlmStatus::Validated)),
        Err(ValidationError::Gateway(e @ (GatewayError::Auth(_) | GatewayError::Exhausted { .. }))) => Err(e),
        Err(e) => {
            log::warn!("critic failed for {}: {e}", item.id);
            Ok(ValidationReport::new(rules, Criteria::ALL_FALSE, LlmStatus::Error(e.to_string())))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub checked: usize,
    pub kept: usize,
    pub rule_failures: usize,
    pub unvalidated: usize,
    pub critic_errors: usize,
}

/// Attaches a report to every item, in parallel.
pub fn validate_items(
    gateway: &Gateway,
    config: &PipelineConfig,
    items: &mut [McqItem],
) -> Result<ValidationSummary, GatewayError> {
    let reports: Vec<Result<ValidationReport, GatewayError>> =
        items.par_iter().enumerate().map(|(i, item)| validate_item(gateway, config, item, i)).collect();
    let mut summary = ValidationSummary::default();
    for (item, report) in items.iter_mut().zip(reports) {
        let report = report?;
        summary.checked += 1;
        summary.kept += report.kept as usize;
        match report.llm_status {
            LlmStatus::SkippedRuleFailure => summary.rule_failures += 1,
            LlmStatus::Unvalidated => summary.unvalidated += 1,
            LlmStatus::Error(_) => summary.critic_errors += 1,
            LlmStatus::Validated => {}
        }
        item.flags = Some(report);
    }
    Ok(summary)
}
