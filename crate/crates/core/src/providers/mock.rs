//! Scriptable providers for tests and demos.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde_json::Value;

use super::{ChatMessage, ChatProvider, ProviderError, RerankProvider};

/// Replies with queued responses in order; errors once the queue is empty.
/// Records every prompt it receives.
#[derive(Debug, Default)]
pub struct SequenceChat {
    replies: Mutex<VecDeque<Result<String, ProviderError>>>,
    seen: Mutex<Vec<Vec<ChatMessage>>>,
}

impl SequenceChat {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            replies: Mutex::new(replies.into_iter().map(|r| Ok(r.into())).collect()),
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn push_error(&self, err: ProviderError) {
        self.replies.lock().unwrap().push_back(Err(err));
    }

    pub fn calls(&self) -> usize {
        self.seen.lock().unwrap().len()
    }

    pub fn prompts(&self) -> Vec<Vec<ChatMessage>> {
        self.seen.lock().unwrap().clone()
    }
}

impl ChatProvider for SequenceChat {
    fn name(&self) -> &str {
        "sequence-chat"
    }

    fn complete(&self, messages: &[ChatMessage], _schema: Option<&Value>) -> Result<String, ProviderError> {
        self.seen.lock().unwrap().push(messages.to_vec());
        self.replies
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(unavailable("sequence-chat")))
    }
}

type ChatFn = dyn Fn(&[ChatMessage]) -> Result<String, ProviderError> + Send + Sync;

/// Answers through a closure over the full message list.
pub struct FnChat {
    f: Box<ChatFn>,
    calls: AtomicUsize,
}

impl FnChat {
    pub fn new(f: impl Fn(&[ChatMessage]) -> Result<String, ProviderError> + Send + Sync + 'static) -> Self {
        Self {
            f: Box::new(f),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatProvider for FnChat {
    fn name(&self) -> &str {
        "fn-chat"
    }

    fn complete(&self, messages: &[ChatMessage], _schema: Option<&Value>) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.f)(messages)
    }
}

/// Always fails as if the service were unreachable.
#[derive(Debug, Default, Clone, Copy)]
pub struct FailingChat;

impl ChatProvider for FailingChat {
    fn name(&self) -> &str {
        "failing-chat"
    }

    fn complete(&self, _messages: &[ChatMessage], _schema: Option<&Value>) -> Result<String, ProviderError> {
        Err(unavailable("failing-chat"))
    }
}

type RerankFn = dyn Fn(&str, &[String]) -> Result<Vec<f64>, ProviderError> + Send + Sync;

pub struct FnReranker {
    f: Box<RerankFn>,
}

impl FnReranker {
    pub fn new(f: impl Fn(&str, &[String]) -> Result<Vec<f64>, ProviderError> + Send + Sync + 'static) -> Self {
        Self { f: Box::new(f) }
    }
}

impl RerankProvider for FnReranker {
    fn name(&self) -> &str {
        "fn-rerank"
    }

    fn score(&self, query: &str, docs: &[String]) -> Result<Vec<f64>, ProviderError> {
        (self.f)(query, docs)
    }
}

pub fn unavailable(provider: &str) -> ProviderError {
    ProviderError::Unavailable {
        provider: provider.to_string(),
        attempts: 1,
        detail: "scripted failure".to_string(),
    }
}
