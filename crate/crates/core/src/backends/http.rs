//! Blocking HTTP transport.
//!
//! Chat backends receive `{model, messages: [{role, content}, ..]}` and must
//! answer with `{choices: [{message: {content}}]}`. Scorers receive
//! `{src, hyp, ref?}` and answer with `{score: number}` or a bare number.

use serde_json::Value;

use super::{BackendError, BackendSpec, Reply, Request, Transport};

#[derive(Debug, Clone)]
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl HttpTransport {
    pub fn new() -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent }
    }
}

fn parse_chat(body: &str) -> Option<String> {
    let v: Value = serde_json::from_str(body).ok()?;
    v.get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?
        .as_str()
        .map(str::to_string)
}

/// Accepts `{"score": x}` or a bare JSON number.
pub(crate) fn parse_score(body: &str) -> Option<f64> {
    match serde_json::from_str::<Value>(body.trim()).ok()? {
        Value::Number(n) => n.as_f64(),
        Value::Object(map) => map.get("score")?.as_f64(),
        _ => None,
    }
}

impl Transport for HttpTransport {
    fn send(&self, spec: &BackendSpec, request: &Request) -> Result<Reply, BackendError> {
        let id = || spec.backend_id.clone();
        let endpoint = spec.endpoint.as_deref().ok_or_else(|| BackendError::InvalidSpec {
            backend_id: id(),
            message: "http transport requires an endpoint".into(),
        })?;
        let mut req = self
            .agent
            .post(endpoint)
            .config()
            .timeout_global(Some(spec.timeout()))
            .build()
            .header("Content-Type", "application/json");
        if let Some(var) = &spec.auth_env_var {
            let token = std::env::var(var).map_err(|_| BackendError::MissingCredential {
                backend_id: id(),
                var: var.clone(),
            })?;
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let body = super::cache::canonical_json(&request.payload(spec));
        let mut response = req.send(body.as_bytes()).map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout { backend_id: id() },
            other => BackendError::Transport {
                backend_id: id(),
                message: other.to_string(),
            },
        })?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(BackendError::HttpStatus {
                backend_id: id(),
                code: status,
            });
        }
        let text = response.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout { backend_id: id() },
            other => BackendError::Transport {
                backend_id: id(),
                message: other.to_string(),
            },
        })?;
        match request {
            Request::Chat { .. } => parse_chat(&text).map(Reply::Text).ok_or_else(|| {
                BackendError::MalformedReply {
                    backend_id: id(),
                    message: "missing choices[0].message.content".into(),
                }
            }),
            Request::Score { .. } => parse_score(&text).map(Reply::Score).ok_or_else(|| {
                BackendError::NonNumericReply {
                    backend_id: id(),
                    reply: text.clone(),
                }
            }),
        }
    }
}
