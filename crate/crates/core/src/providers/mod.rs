//! Interfaces to the external services the engine leans on (chat completion,
//! embeddings, reranking, workflow execution) plus deterministic offline
//! stand-ins for each.
//!
//! Every trait is object-safe and `Send + Sync`; the engine holds them as
//! `Arc<dyn …>` in a [`Providers`] bundle.

mod http;
pub mod mock;
mod offline;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use http::{
    ComfyExecutor, HttpChat, HttpEmbedder, HttpMethod, HttpReranker, HttpRequest, HttpResponse, HttpTransport,
    InstrumentedTransport, RetryPolicy, TransportError, UreqTransport,
};
pub use offline::{
    fnv1a64, ngram_embed, DryRunExecutor, NgramEmbedder, PassthroughReranker, ScriptedChat, NGRAM_DIM,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("{provider}: unavailable after {attempts} attempt(s): {detail}")]
    Unavailable {
        provider: String,
        attempts: u32,
        detail: String,
    },
    #[error("{provider}: HTTP {status} after {attempts} attempt(s): {body}")]
    Status {
        provider: String,
        status: u16,
        attempts: u32,
        body: String,
    },
    #[error("{provider}: invalid response after {attempts} attempt(s): {detail}")]
    InvalidResponse {
        provider: String,
        attempts: u32,
        detail: String,
    },
}

impl ProviderError {
    pub fn provider(&self) -> &str {
        match self {
            ProviderError::Unavailable { provider, .. }
            | ProviderError::Status { provider, .. }
            | ProviderError::InvalidResponse { provider, .. } => provider,
        }
    }

    pub fn attempts(&self) -> u32 {
        match self {
            ProviderError::Unavailable { attempts, .. }
            | ProviderError::Status { attempts, .. }
            | ProviderError::InvalidResponse { attempts, .. } => *attempts,
        }
    }

    pub fn is_unavailable(&self) -> bool {
        matches!(self, ProviderError::Unavailable { .. })
    }
}

pub trait ChatProvider: Send + Sync {
    fn name(&self) -> &str;

    /// Offline stand-ins report `true`; callers with their own deterministic
    /// fallback skip the call entirely.
    fn is_offline(&self) -> bool {
        false
    }

    /// `response_schema` is a hint only; callers validate what comes back.
    fn complete(&self, messages: &[ChatMessage], response_schema: Option<&Value>) -> Result<String, ProviderError>;
}

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

pub trait RerankProvider: Send + Sync {
    fn name(&self) -> &str;

    fn is_offline(&self) -> bool {
        false
    }

    /// One relevance score per document, in document order.
    fn score(&self, query: &str, docs: &[String]) -> Result<Vec<f64>, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RunHandle(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunState {
    Queued,
    Running,
    Done,
    Failed,
}

impl RunState {
    pub fn is_terminal(self) -> bool {
        matches!(self, RunState::Done | RunState::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub state: RunState,
    #[serde(default)]
    pub outputs: Vec<String>,
}

pub trait WorkflowExecutor: Send + Sync {
    fn name(&self) -> &str;

    /// `workflow` is API-format workflow JSON.
    fn submit(&self, workflow: &Value) -> Result<RunHandle, ProviderError>;

    fn poll(&self, handle: &RunHandle) -> Result<RunStatus, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Endpoint {
    pub url: String,
    pub key: Option<String>,
    pub model: Option<String>,
}

/// Which services are reachable, usually read from `COPILOT_*` variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProviderConfig {
    pub offline: bool,
    pub chat: Option<Endpoint>,
    pub embed: Option<Endpoint>,
    pub rerank: Option<Endpoint>,
    pub exec_url: Option<String>,
    pub timeout: Option<Duration>,
}

impl ProviderConfig {
    pub fn from_env() -> Self {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Self {
        let non_empty = |k: &str| get(k).filter(|v| !v.trim().is_empty());
        let endpoint = |prefix: &str| {
            non_empty(&format!("COPILOT_{prefix}_URL")).map(|url| Endpoint {
                url,
                key: non_empty(&format!("COPILOT_{prefix}_KEY")),
                model: non_empty(&format!("COPILOT_{prefix}_MODEL")),
            })
        };
        let offline = non_empty("COPILOT_OFFLINE").is_some_and(|v| v != "0" && !v.eq_ignore_ascii_case("false"));
        Self {
            offline,
            chat: endpoint("CHAT"),
            embed: endpoint("EMBED"),
            rerank: endpoint("RERANK"),
            exec_url: non_empty("COPILOT_EXEC_URL"),
            timeout: non_empty("COPILOT_TIMEOUT_SECS")
                .and_then(|s| s.parse::<u64>().ok())
                .map(Duration::from_secs),
        }
    }
}

/// The set of providers one engine instance talks to.
#[derive(Clone)]
pub struct Providers {
    pub chat: Arc<dyn ChatProvider>,
    pub embed: Arc<dyn EmbeddingProvider>,
    pub rerank: Arc<dyn RerankProvider>,
    pub executor: Arc<dyn WorkflowExecutor>,
}

impl Providers {
    /// All deterministic fallbacks; never touches the network.
    pub fn offline() -> Self {
        Self {
            chat: Arc::new(ScriptedChat::default()),
            embed: Arc::new(NgramEmbedder),
            rerank: Arc::new(PassthroughReranker::default()),
            executor: Arc::new(DryRunExecutor),
        }
    }

    /// HTTP clients for every configured endpoint, fallbacks elsewhere. With
    /// `config.offline` set the transport is never used.
    pub fn from_config(config: &ProviderConfig, transport: Arc<dyn HttpTransport>) -> Self {
        let mut p = Self::offline();
        if config.offline {
            return p;
        }
        let policy = RetryPolicy {
            timeout: config.timeout.unwrap_or(RetryPolicy::default().timeout),
            ..RetryPolicy::default()
        };
        if let Some(ep) = &config.chat {
            p.chat = Arc::new(HttpChat::new(ep.clone(), transport.clone(), policy.clone()));
        }
        if let Some(ep) = &config.embed {
            p.embed = Arc::new(HttpEmbedder::new(ep.clone(), transport.clone(), policy.clone()));
        }
        if let Some(ep) = &config.rerank {
            p.rerank = Arc::new(HttpReranker::new(ep.clone(), transport.clone(), policy.clone()));
        }
        if let Some(url) = &config.exec_url {
            p.executor = Arc::new(ComfyExecutor::new(url.clone(), transport, policy));
        }
        p
    }

    pub fn is_offline(&self) -> bool {
        self.chat.is_offline() && self.rerank.is_offline() && self.embed.name() == NgramEmbedder.name()
    }
}

impl std::fmt::Debug for Providers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Providers")
            .field("chat", &self.chat.name())
            .field("embed", &self.embed.name())
            .field("rerank", &self.rerank.name())
            .field("executor", &self.executor.name())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn env_lookup_builds_endpoints() {
        let vars: HashMap<&str, &str> = [
            ("COPILOT_CHAT_URL", "http://chat"),
            ("COPILOT_CHAT_KEY", "k"),
            ("COPILOT_EXEC_URL", "http://comfy:8188"),
            ("COPILOT_EMBED_URL", ""),
        ]
        .into_iter()
        .collect();
        let cfg = ProviderConfig::from_lookup(|k| vars.get(k).map(|s| s.to_string()));
        assert!(!cfg.offline);
        assert_eq!(cfg.chat.as_ref().unwrap().key.as_deref(), Some("k"));
        assert!(cfg.embed.is_none());
        assert_eq!(cfg.exec_url.as_deref(), Some("http://comfy:8188"));
    }

    #[test]
    fn offline_flag_values() {
        for (v, want) in [("1", true), ("true", true), ("0", false), ("false", false)] {
            let cfg = ProviderConfig::from_lookup(|k| (k == "COPILOT_OFFLINE").then(|| v.to_string()));
            assert_eq!(cfg.offline, want, "{v}");
        }
    }
}
