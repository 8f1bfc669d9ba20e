//! The assistant agent: routes each message to one worker, keeps the
//! conversation's short-term memory and turns worker output into a reply.

mod session;
mod workers;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::copilot::Copilot;
use crate::error::CopilotError;
use crate::kb::NodeRegistry;
use crate::providers::{ChatMessage, ChatProvider, Role};
use crate::retrieval::tokenize;

pub use session::{ChatSession, PendingClarification, SessionMessage, SessionStore};
pub use workers::{
    detect_base_model, downstream_suggestions, node_qa, parse_prompt_request, recommend_models, recommend_nodes,
    recommend_workflows, write_prompts, DownstreamSuggestion, ModelRecommendation,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RouteTarget {
    Direct,
    WorkflowGen,
    NodeRec,
    ModelRec,
    NodeQa,
    PromptWrite,
    ParamSearch,
}

impl RouteTarget {
    pub const ALL: [RouteTarget; 7] = [
        RouteTarget::Direct,
        RouteTarget::WorkflowGen,
        RouteTarget::NodeRec,
        RouteTarget::ModelRec,
        RouteTarget::NodeQa,
        RouteTarget::PromptWrite,
        RouteTarget::ParamSearch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RouteTarget::Direct => "DIRECT",
            RouteTarget::WorkflowGen => "WORKFLOW_GEN",
            RouteTarget::NodeRec => "NODE_REC",
            RouteTarget::ModelRec => "MODEL_REC",
            RouteTarget::NodeQa => "NODE_QA",
            RouteTarget::PromptWrite => "PROMPT_WRITE",
            RouteTarget::ParamSearch => "PARAM_SEARCH",
        }
    }
}

impl fmt::Display for RouteTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RouteTarget {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let norm = s.trim().to_ascii_uppercase().replace(['-', ' '], "_");
        RouteTarget::ALL.into_iter().find(|t| t.as_str() == norm).ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteSource {
    Keyword,
    Llm,
    Clarification,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub target: RouteTarget,
    pub rationale: String,
    pub source: RouteSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttachmentKind {
    WorkflowCandidate,
    NodeCard,
    ModelCard,
    InstallGuide,
    PromptVariants,
    ParamGridResult,
    Clarification,
    DownstreamSuggestions,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub kind: AttachmentKind,
    pub title: String,
    pub payload: Value,
}

impl Attachment {
    pub fn new(kind: AttachmentKind, title: impl Into<String>, payload: impl Serialize) -> Self {
        Self {
            kind,
            title: title.into(),
            payload: serde_json::to_value(payload).expect("attachment payloads are serializable"),
        }
    }

    /// A question for the user; `field` names what is missing.
    pub fn clarification(question: &str, field: &str, options: &[String]) -> Self {
        Self::new(
            AttachmentKind::Clarification,
            question,
            json!({ "question": question, "field": field, "options": options }),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentReply {
    pub text: String,
    pub attachments: Vec<Attachment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<RoutingDecision>,
}

impl AgentReply {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            attachments: Vec::new(),
            route: None,
        }
    }

    pub fn with(mut self, attachment: Attachment) -> Self {
        self.attachments.push(attachment);
        self
    }

    pub fn count(&self, kind: AttachmentKind) -> usize {
        self.attachments.iter().filter(|a| a.kind == kind).count()
    }
}

/// The apology sent when a worker fails, with a machine-readable error and,
/// for unknown nodes with a known repository, an install guide.
pub fn error_reply(err: &CopilotError) -> AgentReply {
    let mut reply = AgentReply::text(format!("Sorry, I could not complete that request: {err}.")).with(
        Attachment::new(
            AttachmentKind::Error,
            "Error",
            json!({ "kind": err.kind(), "detail": err.to_string() }),
        ),
    );
    if let CopilotError::UnknownNode {
        class_type,
        install_hint: Some(url),
    } = err
    {
        reply.text.push_str(&format!(" `{class_type}` is not installed; it is available from {url}."));
        reply = reply.with(Attachment::new(
            AttachmentKind::InstallGuide,
            format!("Install {class_type}"),
            json!({ "missing": [{ "class_type": class_type, "repo_url": url }] }),
        ));
    }
    reply
}

const KEYWORDS: &[(&[&str], RouteTarget)] = &[
    (&["workflow"], RouteTarget::WorkflowGen),
    (&["node"], RouteTarget::NodeRec),
    (&["lora", "checkpoint", "model"], RouteTarget::ModelRec),
    (&["prompt"], RouteTarget::PromptWrite),
    (&["parameter", "sweep"], RouteTarget::ParamSearch),
];

/// True when `needle` occurs in `haystack` (case-insensitively) without
/// alphanumeric characters on either side.
pub fn contains_term(haystack: &str, needle: &str) -> bool {
    let h = haystack.to_lowercase();
    let n = needle.to_lowercase();
    if n.is_empty() {
        return false;
    }
    let mut from = 0;
    while let Some(pos) = h[from..].find(&n) {
        let start = from + pos;
        let end = start + n.len();
        let before_ok = h[..start].chars().next_back().is_none_or(|c| !c.is_alphanumeric());
        let after_ok = h[end..].chars().next().is_none_or(|c| !c.is_alphanumeric());
        if before_ok && after_ok {
            return true;
        }
        from = start + h[start..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

/// The longest node class named in the message, installed or merely known by
/// repository.
pub fn mentioned_class(message: &str, registry: &NodeRegistry) -> Option<String> {
    let installed = registry.specs().into_iter().map(|s| s.class_type.as_str());
    let mut best: Option<&str> = None;
    for class in installed.chain(registry.known_classes()) {
        if class.len() < 3 || !contains_term(message, class) {
            continue;
        }
        if best.is_none_or(|b| class.len() > b.len() || (class.len() == b.len() && class < b)) {
            best = Some(class);
        }
    }
    best.map(str::to_string)
}

/// The deterministic table: first matching keyword group wins, otherwise
/// DIRECT; a named node class turns DIRECT or NODE_REC into NODE_QA.
pub fn keyword_route(message: &str, registry: &NodeRegistry) -> RoutingDecision {
    let words = tokenize(message);
    let hit = |kw: &str| words.contains(kw) || words.contains(&format!("{kw}s"));
    let mut decision = KEYWORDS
        .iter()
        .find_map(|(kws, target)| {
            kws.iter().find(|k| hit(k)).map(|k| RoutingDecision {
                target: *target,
                rationale: format!("keyword `{k}`"),
                source: RouteSource::Keyword,
            })
        })
        .unwrap_or(RoutingDecision {
            target: RouteTarget::Direct,
            rationale: "no worker keyword".into(),
            source: RouteSource::Keyword,
        });
    if matches!(decision.target, RouteTarget::Direct | RouteTarget::NodeRec) {
        if let Some(class) = mentioned_class(message, registry) {
            decision.rationale = format!("{}; names node class `{class}`", decision.rationale);
            decision.target = RouteTarget::NodeQa;
        }
    }
    decision
}

const ROUTER_SYSTEM: &str = "You are the assistant of a copilot for a node-based image generation tool. \
Choose who handles the user's latest message. Answer with exactly one label:\n\
DIRECT - chit-chat or general questions you answer yourself\n\
WORKFLOW_GEN - the user wants a workflow\n\
NODE_REC - the user wants node suggestions\n\
MODEL_REC - the user wants checkpoints, LoRAs or other models\n\
NODE_QA - the user asks how a specific node works\n\
PROMPT_WRITE - the user wants text-to-image prompts written or improved\n\
PARAM_SEARCH - the user wants to compare parameter values";

fn parse_route_reply(text: &str) -> Option<RouteTarget> {
    if let Ok(v) = serde_json::from_str::<Value>(text.trim()) {
        if let Some(t) = v.get("target").and_then(Value::as_str) {
            return t.parse().ok();
        }
    }
    let cleaned = text.trim().trim_matches(|c: char| c == '"' || c == '`' || c == '.' || c == '\'');
    cleaned.parse().ok()
}

const ROUTE_HISTORY: usize = 6;

/// Picks the worker for `message`. A pending clarification resumes its
/// worker unless the message clearly asks for something else. Online, the
/// chat provider chooses (one retry on an invalid answer); offline or on
/// failure the keyword table decides.
pub fn route(message: &str, session: &ChatSession, registry: &NodeRegistry, llm: &dyn ChatProvider) -> RoutingDecision {
    let by_keyword = keyword_route(message, registry);
    if let Some(p) = &session.pending {
        if by_keyword.target == RouteTarget::Direct || by_keyword.target == p.resume {
            return RoutingDecision {
                target: p.resume,
                rationale: format!("answers the pending question about `{}`", p.field),
                source: RouteSource::Clarification,
            };
        }
    }
    if llm.is_offline() {
        return by_keyword;
    }
    let schema = json!({
        "type": "string",
        "enum": RouteTarget::ALL.iter().map(|t| t.as_str()).collect::<Vec<_>>(),
    });
    let mut messages = vec![ChatMessage::system(ROUTER_SYSTEM)];
    messages.extend(session.tail(ROUTE_HISTORY));
    messages.push(ChatMessage::user(message));
    for _ in 0..2 {
        match llm.complete(&messages, Some(&schema)) {
            Ok(reply) => {
                if let Some(target) = parse_route_reply(&reply) {
                    return RoutingDecision {
                        target,
                        rationale: "chosen by the chat provider".into(),
                        source: RouteSource::Llm,
                    };
                }
                messages.push(ChatMessage::assistant(reply));
                messages.push(ChatMessage::user("Answer with exactly one of the listed labels."));
            }
            Err(e) => {
                tracing::warn!(error = %e, "routing provider failed; using keyword table");
                break;
            }
        }
    }
    by_keyword
}

/// Routes, dispatches to the chosen worker and records both sides of the
/// exchange in the session.
pub fn handle(message: &str, session: &mut ChatSession, copilot: &Copilot) -> AgentReply {
    let decision = route(message, session, copilot.registry(), copilot.providers().chat.as_ref());
    if session.pending.as_ref().is_some_and(|p| p.resume != decision.target) {
        session.pending = None;
    }
    session.push(Role::User, message);
    let mut reply = match workers::dispatch(decision.target, message, session, copilot) {
        Ok(r) => r,
        Err(e) => {
            tracing::debug!(error = %e, target = %decision.target, "worker failed");
            error_reply(&e)
        }
    };
    if !reply.attachments.is_empty() {
        reply.text.push('\n');
        for a in &reply.attachments {
            reply.text.push_str(&format!("\n- {}", a.title));
        }
    }
    session.push(Role::Assistant, reply.text.clone());
    session.last_route = Some(decision.clone());
    reply.route = Some(decision);
    reply
}
