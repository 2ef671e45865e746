//! Encyclopedia sources: an offline fixture corpus and the Wikipedia API.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;
use ureq::Agent;

use crate::gateway::BackendError;
use crate::http;
use crate::model::normalize_name;
use crate::text::truncate_at_word;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SourceError {
    #[error("page not found: {0}")]
    NotFound(String),
    #[error("ambiguous page: {0}")]
    Ambiguous(String),
    #[error("source request failed: {0}")]
    Network(BackendError),
}

impl SourceError {
    pub fn retryable(&self) -> bool {
        matches!(self, SourceError::Network(BackendError::Transient(_)))
    }
}

pub trait SearchSource: Send + Sync {
    /// Candidate page titles in engine order, at most `limit`.
    fn search_titles(&self, term: &str, limit: usize) -> Result<Vec<String>, SourceError>;
    /// Lead summary cut at the last word boundary within `max_chars`.
    fn fetch_summary(&self, title: &str, max_chars: usize) -> Result<String, SourceError>;
    /// Full plain-text page.
    fn fetch_page(&self, title: &str) -> Result<String, SourceError>;
}

/// Splits a page into its lead paragraph and the rest.
pub fn split_lead(text: &str) -> (&str, &str) {
    let text = text.trim();
    match text.find("\n\n") {
        Some(i) => (text[..i].trim(), text[i..].trim()),
        None => (text, ""),
    }
}

fn is_disambiguation(lead: &str) -> bool {
    lead.trim_end().ends_with("may refer to:")
}

/// Directory-style corpus of title → text. Search ranks exact title matches
/// first, then titles containing the term, then pages mentioning it (most
/// mentions first), with ties broken by title.
pub struct FixtureCorpus {
    pages: BTreeMap<String, String>,
}

impl FixtureCorpus {
    pub fn new(pages: BTreeMap<String, String>) -> Self {
        FixtureCorpus { pages }
    }

    fn page(&self, title: &str) -> Result<&str, SourceError> {
        self.pages.get(title).map(String::as_str).ok_or_else(|| SourceError::NotFound(title.to_string()))
    }
}

fn strip_qualifier(title: &str) -> &str {
    match title.find(" (") {
        Some(i) if title.ends_with(')') => &title[..i],
        _ => title,
    }
}

impl SearchSource for FixtureCorpus {
    fn search_titles(&self, term: &str, limit: usize) -> Result<Vec<String>, SourceError> {
        let key = normalize_name(term);
        let needle = term.trim().to_lowercase();
        if key.is_empty() || limit == 0 {
            return Ok(Vec::new());
        }
        let mut hits: Vec<(u8, std::cmp::Reverse<usize>, &String)> = Vec::new();
        for (title, text) in &self.pages {
            let t = normalize_name(title);
            let rank = if t == key || normalize_name(strip_qualifier(title)) == key {
                0
            } else if t.contains(&key) {
                1
            } else {
                2
            };
            let mentions = text.to_lowercase().matches(&needle).count();
            if rank < 2 || mentions > 0 {
                hits.push((rank, std::cmp::Reverse(mentions), title));
            }
        }
        hits.sort();
        Ok(hits.into_iter().take(limit).map(|(_, _, t)| t.clone()).collect())
    }

    fn fetch_summary(&self, title: &str, max_chars: usize) -> Result<String, SourceError> {
        let (lead, _) = split_lead(self.page(title)?);
        if is_disambiguation(lead) {
            return Err(SourceError::Ambiguous(title.to_string()));
        }
        Ok(truncate_at_word(lead, max_chars).to_string())
    }

    fn fetch_page(&self, title: &str) -> Result<String, SourceError> {
        self.page(title).map(str::to_string)
    }
}

/// Wikipedia via the action API (search, plain-text extracts) and the REST
/// summary endpoint.
pub struct WikipediaRest {
    agent: Agent,
    base_url: String,
}

impl WikipediaRest {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        WikipediaRest { agent: http::agent(timeout), base_url: base_url.trim_end_matches('/').to_string() }
    }

    fn get_json(&self, url: &str, params: &[(&str, &str)]) -> Result<(u16, serde_json::Value), SourceError> {
        let mut req = self.agent.get(url);
        for (k, v) in params {
            req = req.query(*k, *v);
        }
        let mut resp = req.call().map_err(|e| SourceError::Network(http::transport(e)))?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| SourceError::Network(http::transport(e)))?;
        if status == 404 {
            return Ok((status, serde_json::Value::Null));
        }
        http::classify(status, &body).map_err(SourceError::Network)?;
        let value = serde_json::from_str(&body)
            .map_err(|e| SourceError::Network(BackendError::Fatal(format!("malformed JSON: {e}"))))?;
        Ok((status, value))
    }
}

#[derive(Deserialize)]
struct Summary {
    #[serde(default, rename = "type")]
    kind: String,
    #[serde(default)]
    extract: String,
}

impl SearchSource for WikipediaRest {
    fn search_titles(&self, term: &str, limit: usize) -> Result<Vec<String>, SourceError> {
        if limit == 0 {
            return Ok(Vec::new());
        }
        let url = format!("{}/w/api.php", self.base_url);
        let lim = limit.to_string();
        let (_, v) = self.get_json(
            &url,
            &[("action", "query"), ("list", "search"), ("srsearch", term), ("srlimit", &lim), ("format", "json")],
        )?;
        Ok(v["query"]["search"]
            .as_array()
            .map(|hits| hits.iter().filter_map(|h| h["title"].as_str().map(str::to_string)).take(limit).collect())
            .unwrap_or_default())
    }

    fn fetch_summary(&self, title: &str, max_chars: usize) -> Result<String, SourceError> {
        let slug = title.replace(' ', "_");
        let encoded = percent_encoding::utf8_percent_encode(&slug, percent_encoding::NON_ALPHANUMERIC).to_string();
        let url = format!("{}/api/rest_v1/page/summary/{encoded}", self.base_url);
        let (status, v) = self.get_json(&url, &[])?;
        if status == 404 {
            return Err(SourceError::NotFound(title.to_string()));
        }
        let s: Summary = serde_json::from_value(v)
            .map_err(|e| SourceError::Network(BackendError::Fatal(format!("malformed summary: {e}"))))?;
        if s.kind == "disambiguation" {
            return Err(SourceError::Ambiguous(title.to_string()));
        }
        if s.extract.trim().is_empty() {
            return Err(SourceError::NotFound(title.to_string()));
        }
        Ok(truncate_at_word(&s.extract, max_chars).to_string())
    }

    fn fetch_page(&self, title: &str) -> Result<String, SourceError> {
        let url = format!("{}/w/api.php", self.base_url);
        let (_, v) = self.get_json(
            &url,
            &[
                ("action", "query"),
                ("prop", "extracts"),
                ("explaintext", "1"),
                ("format", "json"),
                ("formatversion", "2"),
                ("titles", title),
            ],
        )?;
        let page = &v["query"]["pages"][0];
        if page["missing"].as_bool().unwrap_or(false) {
            return Err(SourceError::NotFound(title.to_string()));
        }
        page["extract"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| SourceError::NotFound(title.to_string()))
    }
}
