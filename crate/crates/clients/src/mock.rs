//! Scripted in-process backends.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::backend::{ChatBackend, EmbedBackend, VqaRequest, VqaResponse};
use crate::error::{ClientError, Result};

type Reply = Box<dyn Fn(&VqaRequest) -> Result<String> + Send + Sync>;

/// Answers chat requests with a closure and records every request it sees.
pub struct MockChat {
    reply: Reply,
    log: Mutex<Vec<VqaRequest>>,
    /// Requests still to fail transiently, per `(image_ref, prompt)`.
    transient: Mutex<HashMap<(Option<String>, String), usize>>,
    /// Requests allowed before every later one fails permanently.
    budget: Option<AtomicUsize>,
}

impl MockChat {
    pub fn new(reply: impl Fn(&VqaRequest) -> Result<String> + Send + Sync + 'static) -> Self {
        Self {
            reply: Box::new(reply),
            log: Mutex::new(Vec::new()),
            transient: Mutex::new(HashMap::new()),
            budget: None,
        }
    }

    /// Replies `"{image_ref} | {prompt}"`.
    pub fn echo() -> Self {
        Self::new(|r| Ok(format!("{} | {}", r.image_ref.as_deref().unwrap_or("-"), r.prompt)))
    }

    /// Always replies with `text`.
    pub fn fixed(text: impl Into<String>) -> Self {
        let text = text.into();
        Self::new(move |_| Ok(text.clone()))
    }

    /// The first `failures` requests for this cell fail with HTTP 503.
    pub fn fail_transiently(self, image_ref: Option<&str>, prompt: &str, failures: usize) -> Self {
        self.transient
            .lock()
            .unwrap()
            .insert((image_ref.map(str::to_string), prompt.to_string()), failures);
        self
    }

    /// After `n` requests every further request fails with HTTP 400, as if
    /// the run had been cut off.
    pub fn with_budget(mut self, n: usize) -> Self {
        self.budget = Some(AtomicUsize::new(n));
        self
    }

    pub fn requests(&self) -> Vec<VqaRequest> {
        self.log.lock().unwrap().clone()
    }

    pub fn request_count(&self) -> usize {
        self.log.lock().unwrap().len()
    }
}

impl ChatBackend for MockChat {
    fn complete(&self, request: &VqaRequest) -> Result<VqaResponse> {
        self.log.lock().unwrap().push(request.clone());
        if let Some(budget) = &self.budget {
            let spent = budget.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |b| b.checked_sub(1));
            if spent.is_err() {
                return Err(ClientError::Http { status: 400, body: "budget exhausted".into() });
            }
        }
        let key = (request.image_ref.clone(), request.prompt.clone());
        if let Some(left) = self.transient.lock().unwrap().get_mut(&key) {
            if *left > 0 {
                *left -= 1;
                return Err(ClientError::Http { status: 503, body: "try again".into() });
            }
        }
        Ok(VqaResponse {
            text: (self.reply)(request)?,
            latency_ms: 0,
            model: request.model.clone(),
        })
    }
}

type Embedder = Box<dyn Fn(&str) -> Vec<f32> + Send + Sync>;

/// Embeds each text with a closure; counts requests and texts.
pub struct MockEmbed {
    embed: Embedder,
    requests: AtomicUsize,
    texts: AtomicUsize,
}

impl MockEmbed {
    pub fn new(embed: impl Fn(&str) -> Vec<f32> + Send + Sync + 'static) -> Self {
        Self {
            embed: Box::new(embed),
            requests: AtomicUsize::new(0),
            texts: AtomicUsize::new(0),
        }
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn text_count(&self) -> usize {
        self.texts.load(Ordering::SeqCst)
    }
}

impl EmbedBackend for MockEmbed {
    fn embed(&self, _model: &str, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        self.texts.fetch_add(texts.len(), Ordering::SeqCst);
        Ok(texts.iter().map(|t| (self.embed)(t)).collect())
    }
}
