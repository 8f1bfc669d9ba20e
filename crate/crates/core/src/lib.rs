//! Copilot engine for node-graph image and video generation workflows.
//!
//! The crate covers the workflow representation ([`workflow`]), the node,
//! model and workflow knowledge bases ([`kb`]), hybrid retrieval
//! ([`retrieval`]), provider clients with offline fallbacks
//! ([`providers`]), the assistant and its workers ([`agents`]), workflow
//! generation ([`generation`]), parameter sweeps ([`paramsearch`]) and the
//! evaluation harnesses ([`eval`]).

pub mod agents;
pub mod config;
mod copilot;
mod error;
pub mod eval;
pub mod generation;
pub mod kb;
pub mod paramsearch;
pub mod providers;
pub mod retrieval;
pub mod workflow;

pub use config::CopilotConfig;
pub use copilot::{documents, Card, CardScores, Copilot};
pub use error::CopilotError;
pub use kb::{KnowledgeBase, ModelEntry, NodeDoc, NodeRegistry, NodeSpec, WorkflowEntry};
pub use providers::{ProviderConfig, Providers};
pub use retrieval::{EntryKind, Intent, RetrievalConfig, ScoredCandidate};
pub use workflow::{InputValue, Literal, NodeId, NodeInstance, ValidationReport, WorkflowGraph};
