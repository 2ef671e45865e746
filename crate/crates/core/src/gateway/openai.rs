//! OpenAI-compatible chat completion backend.
//!
//! Request: `POST {base_url}/chat/completions` with
//! `{"model", "messages": [{"role":"system"},{"role":"user"}], "temperature", "max_tokens"?}`.
//! Response fields read: `choices[0].message.content`, `usage.prompt_tokens`,
//! `usage.completion_tokens`.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use ureq::Agent;

use super::{BackendError, ChatRequest, ChatResponse, LlmBackend};
use crate::http;

pub struct OpenAiChat {
    agent: Agent,
    base_url: String,
    api_key: String,
    model: String,
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct Body<'a> {
    model: &'a str,
    messages: [Message<'a>; 2],
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Deserialize)]
struct Reply {
    #[serde(default)]
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize, Default)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl OpenAiChat {
    pub fn new(base_url: &str, api_key: &str, model: &str, timeout: Duration) -> Self {
        OpenAiChat {
            agent: http::agent(timeout),
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key: api_key.to_string(),
            model: model.to_string(),
        }
    }
}

impl LlmBackend for OpenAiChat {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let body = Body {
            model: &self.model,
            messages: [
                Message { role: "system", content: &request.system_prompt },
                Message { role: "user", content: &request.user_prompt },
            ],
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let resp = self
            .agent
            .post(format!("{}/chat/completions", self.base_url))
            .header("Authorization", format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(http::transport)?;
        let reply: Reply = http::read_json(resp)?;
        let text = reply
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        let usage = reply.usage.unwrap_or_default();
        Ok(ChatResponse { text, prompt_tokens: usage.prompt_tokens, completion_tokens: usage.completion_tokens })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PipelineConfig;
    use crate::gateway::{Gateway, GatewayError, TaskTag};
    use crate::http::testing::serve;
    use std::sync::Arc;

    fn request() -> ChatRequest {
        ChatRequest::for_task(TaskTag::Triples, &PipelineConfig::default(), "sys".into(), "usr".into())
    }

    #[test]
    fn wire_format_round_trip() {
        let (url, rx) = serve(vec![(
            200,
            r#"{"choices":[{"message":{"role":"assistant","content":"{\"triplets\":[]}"}}],"usage":{"prompt_tokens":12,"completion_tokens":3}}"#.into(),
        )]);
        let chat = OpenAiChat::new(&url, "sk-test", "m", Duration::from_secs(5));
        let resp = chat.complete(&request()).unwrap();
        assert_eq!(resp.text, "{\"triplets\":[]}");
        assert_eq!((resp.prompt_tokens, resp.completion_tokens), (12, 3));
        let seen = rx.recv().unwrap();
        assert_eq!(seen.request_line, "POST /chat/completions HTTP/1.1");
        assert!(seen.headers.iter().any(|h| h == "authorization: Bearer sk-test" || h == "Authorization: Bearer sk-test"));
        let body: serde_json::Value = serde_json::from_str(&seen.body).unwrap();
        assert_eq!(body["temperature"], 0.1);
        assert_eq!(body["max_tokens"], 2000);
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "usr");
    }

    #[test]
    fn invalid_key_is_an_auth_error_without_retry() {
        let (url, rx) = serve(vec![
            (401, r#"{"error":{"message":"Incorrect API key"}}"#.into()),
            (200, r#"{"choices":[]}"#.into()),
        ]);
        let gw = Gateway::new(Arc::new(OpenAiChat::new(&url, "bad", "m", Duration::from_secs(5))), 1, 3)
            .with_backoff(Duration::ZERO);
        assert!(matches!(gw.complete(&request()), Err(GatewayError::Auth(_))));
        rx.recv().unwrap();
        assert!(rx.try_recv().is_err());
    }

    #[test]
    fn server_errors_are_retried() {
        let ok = r#"{"choices":[{"message":{"content":"Yes"}}]}"#.to_string();
        let (url, _rx) = serve(vec![(503, "{}".into()), (200, ok)]);
        let gw = Gateway::new(Arc::new(OpenAiChat::new(&url, "k", "m", Duration::from_secs(5))), 1, 3)
            .with_backoff(Duration::ZERO);
        assert_eq!(gw.complete(&request()).unwrap().text, "Yes");
    }
}
