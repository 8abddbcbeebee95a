//! Backend traits and the HTTP implementation.
//!
//! Chat requests go to `POST {endpoint}/chat/completions` with the body
//!
//! ```json
//! {"model": "...", "max_tokens": 256, "temperature": 0.0,
//!  "messages": [{"role": "user", "content": [
//!     {"type": "text", "text": "..."},
//!     {"type": "image_url", "image_url": {"url": "data:image/png;base64,..."}}]}]}
//! ```
//!
//! and the reply text is read from `choices[0].message.content`. Without an
//! image, `content` is a plain string. Embedding requests go to
//! `POST {endpoint}/embeddings` with `{"model": "...", "input": [...]}` and
//! vectors are read from `data[i].embedding`, ordered by `data[i].index`.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::ClientConfig;
use crate::error::{ClientError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaRequest {
    /// Path (relative to the image root), `http(s)://` URL or `data:` URL.
    pub image_ref: Option<String>,
    pub prompt: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaResponse {
    pub text: String,
    pub latency_ms: u64,
    pub model: String,
}

pub trait ChatBackend: Sync {
    fn complete(&self, request: &VqaRequest) -> Result<VqaResponse>;
}

pub trait EmbedBackend: Sync {
    /// One vector per input text, in input order.
    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f32>>>;
}

#[derive(Debug)]
pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    token: Option<String>,
    timeout: Duration,
    temperature: f64,
    max_tokens: u32,
    image_root: Option<PathBuf>,
}

impl HttpBackend {
    /// Fails with [`ClientError::Offline`] naming `stage` when no endpoint is
    /// configured.
    pub fn new(config: &ClientConfig, stage: &str) -> Result<Self> {
        config.validate()?;
        let endpoint = config
            .endpoint
            .as_ref()
            .filter(|e| !e.trim().is_empty())
            .ok_or_else(|| ClientError::Offline { stage: stage.to_string() })?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout()))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            agent,
            endpoint: endpoint.trim_end_matches('/').to_string(),
            token: config.token()?,
            timeout: config.timeout(),
            temperature: config.temperature,
            max_tokens: config.max_tokens,
            image_root: config.image_root.clone(),
        })
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value> {
        let url = format!("{}/{path}", self.endpoint);
        let mut request = self.agent.post(&url).header("Content-Type", "application/json");
        if let Some(token) = &self.token {
            request = request.header("Authorization", format!("Bearer {token}"));
        }
        let mut response = request.send(serde_json::to_vec(body)?).map_err(|e| match e {
            ureq::Error::Timeout(_) => ClientError::Timeout(self.timeout),
            other => ClientError::Transport(other.to_string()),
        })?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(ClientError::Http { status, body: text });
        }
        serde_json::from_str(&text).map_err(|e| ClientError::Protocol(format!("{e}: {text}")))
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &VqaRequest) -> Result<VqaResponse> {
        let image = request
            .image_ref
            .as_deref()
            .map(|r| image_url(r, self.image_root.as_deref()))
            .transpose()?;
        let body = chat_body(request, image.as_deref(), self.temperature, self.max_tokens);
        let start = Instant::now();
        let reply = self.post("chat/completions", &body)?;
        let latency_ms = start.elapsed().as_millis() as u64;
        let (text, model) = parse_chat_reply(&reply)?;
        Ok(VqaResponse {
            text,
            latency_ms,
            model: model.unwrap_or_else(|| request.model.clone()),
        })
    }
}

impl EmbedBackend for HttpBackend {
    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        let reply = self.post("embeddings", &json!({ "model": model, "input": texts }))?;
        let vectors = parse_embedding_reply(&reply)?;
        if vectors.len() != texts.len() {
            return Err(ClientError::Protocol(format!(
                "{} embeddings for {} inputs",
                vectors.len(),
                texts.len()
            )));
        }
        Ok(vectors)
    }
}

pub fn chat_body(request: &VqaRequest, image_url: Option<&str>, temperature: f64, max_tokens: u32) -> Value {
    let content = match image_url {
        None => Value::String(request.prompt.clone()),
        Some(url) => json!([
            { "type": "text", "text": request.prompt },
            { "type": "image_url", "image_url": { "url": url } },
        ]),
    };
    json!({
        "model": request.model,
        "messages": [{ "role": "user", "content": content }],
        "max_tokens": max_tokens,
        "temperature": temperature,
    })
}

/// Returns the reply text and, when present, the serving model's id.
pub fn parse_chat_reply(reply: &Value) -> Result<(String, Option<String>)> {
    let text = reply
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| ClientError::Protocol(format!("no choices[0].message.content in {reply}")))?;
    let model = reply.get("model").and_then(Value::as_str).map(str::to_string);
    Ok((text.to_string(), model))
}

pub fn parse_embedding_reply(reply: &Value) -> Result<Vec<Vec<f32>>> {
    let data = reply
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| ClientError::Protocol(format!("no data array in {reply}")))?;
    let mut rows = Vec::with_capacity(data.len());
    for (position, entry) in data.iter().enumerate() {
        let index = entry
            .get("index")
            .and_then(Value::as_u64)
            .map_or(position, |i| i as usize);
        let vector = entry
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| ClientError::Protocol(format!("entry {position} has no embedding")))?
            .iter()
            .map(|v| v.as_f64().map(|x| x as f32))
            .collect::<Option<Vec<f32>>>()
            .ok_or_else(|| ClientError::Protocol(format!("entry {position} has a non-numeric component")))?;
        rows.push((index, vector));
    }
    rows.sort_by_key(|(index, _)| *index);
    Ok(rows.into_iter().map(|(_, v)| v).collect())
}

/// URLs pass through; file paths become base64 `data:` URLs.
pub fn image_url(image_ref: &str, root: Option<&Path>) -> Result<String> {
    if ["http://", "https://", "data:"].iter().any(|p| image_ref.starts_with(p)) {
        return Ok(image_ref.to_string());
    }
    let path = match root {
        Some(root) => root.join(image_ref),
        None => PathBuf::from(image_ref),
    };
    let bytes = std::fs::read(&path)?;
    let mime = match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        _ => "application/octet-stream",
    };
    let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
    Ok(format!("data:{mime};base64,{encoded}"))
}
