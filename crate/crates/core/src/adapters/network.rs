//! HTTP-backed adapters.
//!
//! Wire contracts:
//! - embeddings: OpenAI-compatible `POST {base}/embeddings` `{model, input}` → `data[0].embedding`
//! - moderation: OpenAI-compatible `POST {base}/moderations` `{input}` → `results[0].categories`
//! - NLI: `POST {url}` `{premise, hypothesis}` → `{entailment}`
//! - probe: `POST {url}` `{question, options, context}` → `{logits: [a, b, c, d]}`
//! - grammar: LanguageTool `POST /v2/check` form `text`, `language` → `matches[]`
//! - ontology: Wikidata `wbsearchentities` then `wbgetclaims` for P31 (instance of)

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use ureq::Agent;

use super::{AdapterError, Embedder, GrammarChecker, NliScorer, PolicyScreen, ProbeScorer, TypeChecker};
use crate::http;

fn post_json<T: for<'de> Deserialize<'de>>(
    agent: &Agent,
    adapter: &'static str,
    url: &str,
    bearer: Option<&str>,
    body: &serde_json::Value,
) -> Result<T, AdapterError> {
    let mut req = agent.post(url);
    if let Some(key) = bearer {
        req = req.header("Authorization", format!("Bearer {key}"));
    }
    let resp = req.send_json(body).map_err(|e| AdapterError::from_backend(adapter, http::transport(e)))?;
    http::read_json(resp).map_err(|e| AdapterError::from_backend(adapter, e))
}

pub struct OpenAiEmbedder {
    agent: Agent,
    base_url: String,
    api_key: String,
    model: String,
}

impl OpenAiEmbedder {
    pub fn new(base_url: &str, api_key: &str, model: &str, timeout: Duration) -> Self {
        OpenAiEmbedder {
            agent: http::agent(timeout),
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key: api_key.to_string(),
            model: model.to_string(),
        }
    }
}

impl Embedder for OpenAiEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, AdapterError> {
        #[derive(Deserialize)]
        struct Item {
            embedding: Vec<f64>,
        }
        #[derive(Deserialize)]
        struct Reply {
            data: Vec<Item>,
        }
        let url = format!("{}/embeddings", self.base_url);
        let reply: Reply = post_json(
            &self.agent,
            "embeddings",
            &url,
            Some(&self.api_key),
            &json!({"model": self.model, "input": text}),
        )?;
        reply
            .data
            .into_iter()
            .next()
            .map(|i| i.embedding)
            .ok_or_else(|| AdapterError::new("embeddings", "response had no data"))
    }
}

pub struct HttpNli {
    agent: Agent,
    url: String,
}

impl HttpNli {
    pub fn new(url: &str, timeout: Duration) -> Self {
        HttpNli { agent: http::agent(timeout), url: url.to_string() }
    }
}

impl NliScorer for HttpNli {
    fn entailment(&self, premise: &str, hypothesis: &str) -> Result<f64, AdapterError> {
        #[derive(Deserialize)]
        struct Reply {
            entailment: f64,
        }
        let r: Reply =
            post_json(&self.agent, "nli", &self.url, None, &json!({"premise": premise, "hypothesis": hypothesis}))?;
        if !(0.0..=1.0).contains(&r.entailment) {
            return Err(AdapterError::new("nli", format!("probability {} outside [0, 1]", r.entailment)));
        }
        Ok(r.entailment)
    }
}

pub struct HttpProbe {
    agent: Agent,
    url: String,
}

impl HttpProbe {
    pub fn new(url: &str, timeout: Duration) -> Self {
        HttpProbe { agent: http::agent(timeout), url: url.to_string() }
    }
}

impl ProbeScorer for HttpProbe {
    fn logits(&self, question: &str, options: &[String; 4], source_context: &str) -> Result<[f64; 4], AdapterError> {
        #[derive(Deserialize)]
        struct Reply {
            logits: [f64; 4],
        }
        let r: Reply = post_json(
            &self.agent,
            "probe",
            &self.url,
            None,
            &json!({"question": question, "options": options, "context": source_context}),
        )?;
        Ok(r.logits)
    }
}

pub struct OpenAiModeration {
    agent: Agent,
    base_url: String,
    api_key: String,
}

impl OpenAiModeration {
    pub fn new(base_url: &str, api_key: &str, timeout: Duration) -> Self {
        OpenAiModeration {
            agent: http::agent(timeout),
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key: api_key.to_string(),
        }
    }
}

impl PolicyScreen for OpenAiModeration {
    fn blocked_category(&self, text: &str) -> Result<Option<String>, AdapterError> {
        #[derive(Deserialize)]
        struct Result_ {
            #[serde(default)]
            categories: BTreeMap<String, bool>,
        }
        #[derive(Deserialize)]
        struct Reply {
            results: Vec<Result_>,
        }
        let url = format!("{}/moderations", self.base_url);
        let r: Reply = post_json(&self.agent, "moderation", &url, Some(&self.api_key), &json!({"input": text}))?;
        Ok(r.results
            .into_iter()
            .next()
            .and_then(|res| res.categories.into_iter().find(|(_, hit)| *hit).map(|(c, _)| c)))
    }
}

pub struct LanguageTool {
    agent: Agent,
    url: String,
}

impl LanguageTool {
    pub fn new(url: &str, timeout: Duration) -> Self {
        LanguageTool { agent: http::agent(timeout), url: url.to_string() }
    }
}

impl GrammarChecker for LanguageTool {
    fn error_count(&self, text: &str) -> Result<usize, AdapterError> {
        #[derive(Deserialize)]
        struct Reply {
            matches: Vec<serde_json::Value>,
        }
        let resp = self
            .agent
            .post(&self.url)
            .send_form([("text", text), ("language", "en-US")])
            .map_err(|e| AdapterError::from_backend("grammar", http::transport(e)))?;
        let r: Reply = http::read_json(resp).map_err(|e| AdapterError::from_backend("grammar", e))?;
        Ok(r.matches.len())
    }
}

/// Checks object types against Wikidata `instance of` claims.
///
/// `mapping` lists admissible type ids (e.g. `Q515` for city) per relation;
/// relations without an entry are admitted.
pub struct WikidataTypes {
    agent: Agent,
    base_url: String,
    mapping: BTreeMap<String, BTreeSet<String>>,
}

impl WikidataTypes {
    pub fn new(base_url: &str, mapping: BTreeMap<String, BTreeSet<String>>, timeout: Duration) -> Self {
        WikidataTypes { agent: http::agent(timeout), base_url: base_url.trim_end_matches('/').to_string(), mapping }
    }

    fn get(&self, params: &[(&str, &str)]) -> Result<serde_json::Value, AdapterError> {
        let mut req = self.agent.get(format!("{}/w/api.php", self.base_url));
        for (k, v) in params {
            req = req.query(*k, *v);
        }
        let resp = req.call().map_err(|e| AdapterError::from_backend("wikidata", http::transport(e)))?;
        http::read_json(resp).map_err(|e| AdapterError::from_backend("wikidata", e))
    }
}

impl TypeChecker for WikidataTypes {
    fn admissible(&self, relation: &str, tail: &str) -> Result<bool, AdapterError> {
        let Some(allowed) = self.mapping.get(relation) else {
            return Ok(true);
        };
        let found = self.get(&[
            ("action", "wbsearchentities"),
            ("search", tail),
            ("language", "en"),
            ("limit", "1"),
            ("format", "json"),
        ])?;
        let Some(id) = found["search"][0]["id"].as_str() else {
            return Ok(false);
        };
        let claims = self.get(&[("action", "wbgetclaims"), ("entity", id), ("property", "P31"), ("format", "json")])?;
        let types = claims["claims"]["P31"].as_array().cloned().unwrap_or_default();
        Ok(types
            .iter()
            .filter_map(|c| c["mainsnak"]["datavalue"]["value"]["id"].as_str())
            .any(|t| allowed.contains(t)))
    }
}
