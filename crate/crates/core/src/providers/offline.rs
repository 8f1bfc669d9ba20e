use std::collections::HashMap;

use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{
    ChatMessage, ChatProvider, EmbeddingProvider, ProviderError, RerankProvider, Role, RunHandle, RunState,
    RunStatus, WorkflowExecutor,
};
use crate::retrieval::{cosine_to_unit, lexical_sim, RetrievalConfig};

pub const NGRAM_DIM: usize = 256;

const DEFAULT_REPLY: &str = "I can recommend workflows, nodes and models, explain what a node does, \
refine image prompts and run parameter sweeps. Tell me what you would like to create.";

/// Replays a fixed table keyed by the hash of the last user message.
#[derive(Debug, Clone)]
pub struct ScriptedChat {
    table: HashMap<String, String>,
    default_reply: String,
    offline: bool,
}

impl Default for ScriptedChat {
    fn default() -> Self {
        Self {
            table: HashMap::new(),
            default_reply: DEFAULT_REPLY.to_string(),
            offline: true,
        }
    }
}

impl ScriptedChat {
    pub fn message_key(message: &str) -> String {
        let digest = Sha256::digest(message.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_pairs<I, K, V>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: Into<String>,
    {
        let table = pairs
            .into_iter()
            .map(|(k, v)| (Self::message_key(k.as_ref()), v.into()))
            .collect();
        Self {
            table,
            ..Self::default()
        }
    }

    /// Loads `{"responses": {message: reply}, "default": reply}`.
    pub fn from_json(value: &Value) -> Option<Self> {
        let responses = value.get("responses")?.as_object()?;
        let mut chat = Self::from_pairs(
            responses
                .iter()
                .filter_map(|(k, v)| v.as_str().map(|v| (k.clone(), v.to_string()))),
        );
        if let Some(d) = value.get("default").and_then(Value::as_str) {
            chat.default_reply = d.to_string();
        }
        Some(chat)
    }

    pub fn with_default(mut self, reply: impl Into<String>) -> Self {
        self.default_reply = reply.into();
        self
    }

    /// Makes the script behave like a live provider, so callers with their
    /// own offline fallback still consult it.
    pub fn live(mut self) -> Self {
        self.offline = false;
        self
    }
}

impl ChatProvider for ScriptedChat {
    fn name(&self) -> &str {
        "scripted-chat"
    }

    fn is_offline(&self) -> bool {
        self.offline
    }

    fn complete(&self, messages: &[ChatMessage], _schema: Option<&Value>) -> Result<String, ProviderError> {
        let last_user = messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("");
        Ok(self
            .table
            .get(&Self::message_key(last_user))
            .cloned()
            .unwrap_or_else(|| self.default_reply.clone()))
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hashed character-trigram counts of the lowercased text, L2-normalised.
/// Texts shorter than three characters form a single gram; the empty text
/// maps to the zero vector.
pub fn ngram_embed(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; NGRAM_DIM];
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    if chars.is_empty() {
        return v;
    }
    let mut add = |gram: &[char]| {
        let s: String = gram.iter().collect();
        v[(fnv1a64(s.as_bytes()) % NGRAM_DIM as u64) as usize] += 1.0;
    };
    if chars.len() < 3 {
        add(&chars);
    } else {
        for w in chars.windows(3) {
            add(w);
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NgramEmbedder;

impl EmbeddingProvider for NgramEmbedder {
    fn name(&self) -> &str {
        "ngram-embed"
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(texts.iter().map(|t| ngram_embed(t)).collect())
    }
}

/// Scores each document with the same weighted lexical/semantic blend the
/// recall stage uses, computed locally from trigram embeddings.
#[derive(Debug, Clone, Default)]
pub struct PassthroughReranker {
    config: RetrievalConfig,
}

impl PassthroughReranker {
    pub fn new(config: RetrievalConfig) -> Self {
        Self { config }
    }
}

impl RerankProvider for PassthroughReranker {
    fn name(&self) -> &str {
        "passthrough-rerank"
    }

    fn is_offline(&self) -> bool {
        true
    }

    fn score(&self, query: &str, docs: &[String]) -> Result<Vec<f64>, ProviderError> {
        let q = ngram_embed(query);
        Ok(docs
            .iter()
            .map(|d| {
                let sem = cosine_to_unit(&q, &ngram_embed(d));
                self.config.combined_score(sem, lexical_sim(query, d))
            })
            .collect())
    }
}

/// Accepts every workflow and reports it finished with a content-addressed
/// placeholder output.
#[derive(Debug, Clone, Copy, Default)]
pub struct DryRunExecutor;

impl WorkflowExecutor for DryRunExecutor {
    fn name(&self) -> &str {
        "dry-run-executor"
    }

    fn submit(&self, workflow: &Value) -> Result<RunHandle, ProviderError> {
        Ok(RunHandle(format!("{:016x}", fnv1a64(workflow.to_string().as_bytes()))))
    }

    fn poll(&self, handle: &RunHandle) -> Result<RunStatus, ProviderError> {
        Ok(RunStatus {
            state: RunState::Done,
            outputs: vec![format!("dryrun://{}", handle.0)],
        })
    }
}
