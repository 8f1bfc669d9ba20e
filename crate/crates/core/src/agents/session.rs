use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{RouteTarget, RoutingDecision};
use crate::providers::{ChatMessage, Role};
use crate::workflow::WorkflowGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMessage {
    pub role: Role,
    pub content: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

/// A question the assistant is waiting on, and where the answer goes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingClarification {
    pub field: String,
    pub question: String,
    pub options: Vec<String>,
    pub resume: RouteTarget,
    /// The request that triggered the question.
    pub request: String,
}

/// Short-term memory of one conversation: a sliding window of messages, the
/// last routing decision, an outstanding clarification and the workflow
/// currently in focus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatSession {
    pub session_id: String,
    messages: VecDeque<SessionMessage>,
    pub max_messages: usize,
    pub pending: Option<PendingClarification>,
    pub active_workflow: Option<WorkflowGraph>,
    pub last_route: Option<RoutingDecision>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

impl ChatSession {
    pub const DEFAULT_MAX_MESSAGES: usize = 40;

    pub fn new(session_id: impl Into<String>) -> Self {
        Self::with_capacity(session_id, Self::DEFAULT_MAX_MESSAGES)
    }

    pub fn with_capacity(session_id: impl Into<String>, max_messages: usize) -> Self {
        Self {
            session_id: session_id.into(),
            messages: VecDeque::new(),
            max_messages: max_messages.max(1),
            pending: None,
            active_workflow: None,
            last_route: None,
        }
    }

    /// Appends a message, evicting the oldest beyond `max_messages`.
    pub fn push(&mut self, role: Role, content: impl Into<String>) {
        self.messages.push_back(SessionMessage {
            role,
            content: content.into(),
            timestamp: now_ms(),
        });
        while self.messages.len() > self.max_messages {
            self.messages.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn messages(&self) -> impl DoubleEndedIterator<Item = &SessionMessage> {
        self.messages.iter()
    }

    /// User messages, newest first.
    pub fn user_messages_rev(&self) -> impl Iterator<Item = &str> {
        self.messages
            .iter()
            .rev()
            .filter(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    /// The last `n` messages as provider chat messages.
    pub fn tail(&self, n: usize) -> Vec<ChatMessage> {
        let skip = self.messages.len().saturating_sub(n);
        self.messages
            .iter()
            .skip(skip)
            .map(|m| ChatMessage {
                role: m.role,
                content: m.content.clone(),
            })
            .collect()
    }
}

struct Slot {
    session: Arc<Mutex<ChatSession>>,
    last_used: Instant,
}

/// In-memory sessions with idle expiry. Each session has its own lock, so
/// messages to one session are serialized while different sessions proceed
/// in parallel.
pub struct SessionStore {
    slots: Mutex<HashMap<String, Slot>>,
    ttl: Duration,
    max_messages: usize,
}

impl SessionStore {
    pub fn new(ttl: Duration, max_messages: usize) -> Self {
        Self {
            slots: Mutex::new(HashMap::new()),
            ttl,
            max_messages,
        }
    }

    /// The session for `id`, created if absent or expired.
    pub fn get_or_create(&self, id: &str) -> Arc<Mutex<ChatSession>> {
        let now = Instant::now();
        let mut slots = self.slots.lock().unwrap();
        slots.retain(|_, s| now.duration_since(s.last_used) < self.ttl);
        let slot = slots.entry(id.to_string()).or_insert_with(|| Slot {
            session: Arc::new(Mutex::new(ChatSession::with_capacity(id, self.max_messages))),
            last_used: now,
        });
        slot.last_used = now;
        slot.session.clone()
    }

    pub fn len(&self) -> usize {
        self.slots.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_evicts_oldest() {
        let mut s = ChatSession::with_capacity("s", 3);
        for i in 0..5 {
            s.push(Role::User, i.to_string());
        }
        assert_eq!(s.len(), 3);
        assert_eq!(s.messages().next().unwrap().content, "2");
        assert_eq!(s.tail(2).len(), 2);
    }

    #[test]
    fn store_expires_idle_sessions() {
        let store = SessionStore::new(Duration::ZERO, 40);
        let a = store.get_or_create("a");
        a.lock().unwrap().push(Role::User, "hi");
        let again = store.get_or_create("a");
        assert!(again.lock().unwrap().is_empty());

        let store = SessionStore::new(Duration::from_secs(60), 40);
        store.get_or_create("a").lock().unwrap().push(Role::User, "hi");
        assert_eq!(store.get_or_create("a").lock().unwrap().len(), 1);
        assert_eq!(store.len(), 1);
    }
}
