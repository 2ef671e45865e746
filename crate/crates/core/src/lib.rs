//! Topic-scoped knowledge-graph construction and multi-hop multiple-choice
//! question generation.

pub mod adapters;
pub mod builder;
pub mod cli;
pub mod config;
pub mod curation;
pub mod fixtures;
pub mod gateway;
pub mod http;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod prompts;
pub mod qgen;
pub mod retrieval;
pub mod store;
pub mod synthesis;
pub mod text;
pub mod validation;
