//! Blocking HTTP helpers shared by the network adapters.

use std::time::Duration;

use serde::de::DeserializeOwned;
use ureq::Agent;

use crate::gateway::BackendError;

pub fn agent(timeout: Duration) -> Agent {
    let config = Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(timeout))
        .build();
    Agent::new_with_config(config)
}

/// Maps an HTTP status to the retry class used by every adapter.
pub fn classify(status: u16, body: &str) -> Result<(), BackendError> {
    let snippet: String = body.chars().take(200).collect();
    match status {
        200..=299 => Ok(()),
        401 | 403 => Err(BackendError::Auth(format!("HTTP {status}: {snippet}"))),
        408 | 409 | 425 | 429 | 500..=599 => Err(BackendError::Transient(format!("HTTP {status}: {snippet}"))),
        _ => Err(BackendError::Fatal(format!("HTTP {status}: {snippet}"))),
    }
}

pub fn transport(err: ureq::Error) -> BackendError {
    BackendError::Transient(err.to_string())
}

/// Reads the body, classifies the status and decodes JSON.
pub fn read_json<T: DeserializeOwned>(mut resp: ureq::http::Response<ureq::Body>) -> Result<T, BackendError> {
    let status = resp.status().as_u16();
    let body = resp.body_mut().read_to_string().map_err(transport)?;
    classify(status, &body)?;
    serde_json::from_str(&body).map_err(|e| BackendError::Fatal(format!("malformed JSON response: {e}")))
}

#[cfg(test)]
pub(crate) mod testing {
    //! One-shot local HTTP server for adapter tests.

    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;
    use std::thread;

    pub struct Captured {
        pub request_line: String,
        pub headers: Vec<String>,
        pub body: String,
    }

    /// Serves the given (status, body) responses in order, one per
    /// connection, and reports what each request looked like.
    pub fn serve(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<Captured>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for (status, body) in responses {
                let (mut stream, _) = match listener.accept() {
                    Ok(s) => s,
                    Err(_) => return,
                };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                reader.read_line(&mut request_line).unwrap();
                let mut headers = Vec::new();
                let mut length = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let line = line.trim_end().to_string();
                    if line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        length = v.trim().parse().unwrap_or(0);
                    }
                    headers.push(line);
                }
                let mut buf = vec![0u8; length];
                reader.read_exact(&mut buf).unwrap();
                let _ = tx.send(Captured {
                    request_line: request_line.trim_end().to_string(),
                    headers,
                    body: String::from_utf8_lossy(&buf).into_owned(),
                });
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(reply.as_bytes());
            }
        });
        (url, rx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_classes() {
        assert!(classify(200, "").is_ok());
        assert!(matches!(classify(401, ""), Err(BackendError::Auth(_))));
        assert!(matches!(classify(429, ""), Err(BackendError::Transient(_))));
        assert!(matches!(classify(503, ""), Err(BackendError::Transient(_))));
        assert!(matches!(classify(400, ""), Err(BackendError::Fatal(_))));
    }
}
