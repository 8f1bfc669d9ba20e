//! Operations shared by the CLI subcommands and the HTTP handlers. Both
//! surfaces parse their input, call one of these, and serialize the result.

use std::collections::BTreeMap;
use std::path::Path;

use copilot_core::agents::{recommend_models, ChatSession, ModelRecommendation, PendingClarification};
use copilot_core::kb::{
    chunk_code, generate_doc, read_source_files, render_doc, retrieve_chunks, template_doc, KnowledgeBase, NodeDoc,
    NodeSpec,
};
use copilot_core::paramsearch::{run_sweep, ParamGridSpec, SweepOptions, SweepResult};
use copilot_core::providers::{Providers, Role};
use copilot_core::workflow::{parse_code, parse_json, to_code, to_json_value, validate, WorkflowGraph};
use copilot_core::{Card, Copilot, CopilotError, EntryKind, RetrievalConfig, ValidationReport};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Code,
}

/// Accepts a workflow either as a JSON value or as a string holding JSON.
fn workflow_from_json(payload: &Value) -> Result<WorkflowGraph, CopilotError> {
    match payload {
        Value::String(s) => Ok(parse_json(s)?),
        other => Ok(parse_json(&other.to_string())?),
    }
}

fn payload_text(payload: &Value) -> Result<&str, CopilotError> {
    payload
        .as_str()
        .ok_or_else(|| CopilotError::InvalidRequest("code payload must be a string".into()))
}

pub fn parse_workflow(format: Format, payload: &Value, copilot: &Copilot) -> Result<WorkflowGraph, CopilotError> {
    match format {
        Format::Json => workflow_from_json(payload),
        Format::Code => Ok(parse_code(payload_text(payload)?, Some(copilot.registry()))?),
    }
}

pub fn validate_workflow(format: Format, payload: &Value, copilot: &Copilot) -> Result<ValidationReport, CopilotError> {
    let graph = parse_workflow(format, payload, copilot)?;
    Ok(validate(&graph, copilot.registry()))
}

/// Converts between the JSON and code forms. JSON comes back as a JSON
/// value, code as a string.
pub fn convert(from: Format, to: Format, payload: &Value, copilot: &Copilot) -> Result<Value, CopilotError> {
    let graph = parse_workflow(from, payload, copilot)?;
    Ok(match to {
        Format::Json => to_json_value(&graph),
        Format::Code => Value::String(to_code(&graph, Some(copilot.registry()))?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recommendation {
    pub kind: EntryKind,
    pub query: String,
    pub cards: Vec<Card>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clarification: Option<PendingClarification>,
}

pub fn parse_kind(segment: &str) -> Option<EntryKind> {
    match segment {
        "workflows" | "workflow" => Some(EntryKind::Workflow),
        "nodes" | "node" => Some(EntryKind::Node),
        "models" | "model" => Some(EntryKind::Model),
        _ => None,
    }
}

/// Ranked cards for a one-off query. Model queries go through the same
/// base-model logic as chat, with `context` standing in for earlier turns.
pub fn recommend(kind: EntryKind, query: &str, context: Option<&str>, copilot: &Copilot) -> Result<Recommendation, CopilotError> {
    if query.trim().is_empty() {
        return Err(CopilotError::InvalidRequest("query must not be empty".into()));
    }
    let mut out = Recommendation {
        kind,
        query: query.to_string(),
        cards: Vec::new(),
        clarification: None,
    };
    if kind == EntryKind::Model {
        let mut session = ChatSession::new("recommend");
        if let Some(ctx) = context.filter(|c| !c.trim().is_empty()) {
            session.push(Role::User, ctx);
        }
        session.push(Role::User, query);
        match recommend_models(query, &mut session, copilot)? {
            ModelRecommendation::Cards(cards) => out.cards = cards,
            ModelRecommendation::Clarify(p) => out.clarification = Some(p),
        }
        return Ok(out);
    }
    let intent = copilot.expand(query, context);
    let ranked = copilot.recommend(kind, &intent)?;
    out.cards = copilot.cards(&ranked);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeInfo {
    pub spec: NodeSpec,
    /// Generated documentation, or a template built from the spec.
    pub doc: NodeDoc,
    pub doc_generated: bool,
    pub markdown: String,
}

pub fn node_info(class_type: &str, copilot: &Copilot) -> Result<NodeInfo, CopilotError> {
    let spec = copilot.registry().get(class_type).ok_or_else(|| CopilotError::UnknownNode {
        class_type: class_type.to_string(),
        install_hint: copilot.registry().repo_hint(class_type),
    })?;
    let (doc, doc_generated) = match &spec.doc {
        Some(d) => (d.clone(), true),
        None => (template_doc(spec), false),
    };
    Ok(NodeInfo {
        markdown: render_doc(&doc),
        spec: spec.clone(),
        doc,
        doc_generated,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Health {
    pub nodes: usize,
    pub models: usize,
    pub workflows: usize,
    pub offline: bool,
}

pub fn health(copilot: &Copilot) -> Health {
    let kb = copilot.kb();
    Health {
        nodes: kb.node_count(),
        models: kb.model_count(),
        workflows: kb.workflow_count(),
        offline: copilot.providers().is_offline(),
    }
}

pub fn paramsearch(
    workflow: &WorkflowGraph,
    grid: &ParamGridSpec,
    parallelism: Option<usize>,
    copilot: &Copilot,
) -> Result<SweepResult, CopilotError> {
    let mut opts = SweepOptions::default();
    if let Some(p) = parallelism {
        opts.parallelism = p.max(1);
    }
    Ok(run_sweep(workflow, grid, copilot.providers().executor.as_ref(), &opts)?)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DocGenSummary {
    pub documented: Vec<String>,
    pub failed: BTreeMap<String, String>,
    pub chunks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DocGenParams {
    pub chunk_size: usize,
    pub overlap: usize,
    pub top_m: usize,
}

/// Generates and stores documentation for `classes` (all nodes when empty),
/// grounding each in the best-matching chunks of the source tree.
pub fn docgen(
    kb: &mut KnowledgeBase,
    source: &Path,
    classes: &[String],
    params: DocGenParams,
    providers: &Providers,
    cfg: &RetrievalConfig,
) -> Result<DocGenSummary, CopilotError> {
    let files = read_source_files(source)?;
    let chunks = chunk_code(&files, params.chunk_size, params.overlap)
        .map_err(|e| CopilotError::InvalidRequest(e.to_string()))?;
    let targets: Vec<NodeSpec> = if classes.is_empty() {
        kb.registry().specs().into_iter().cloned().collect()
    } else {
        classes
            .iter()
            .map(|c| kb.lookup_node(c).cloned())
            .collect::<Result<_, _>>()?
    };
    let mut summary = DocGenSummary {
        chunks: chunks.len(),
        ..DocGenSummary::default()
    };
    for spec in targets {
        let result = retrieve_chunks(&spec, &chunks, params.top_m, providers.embed.as_ref(), cfg)
            .map_err(CopilotError::from)
            .and_then(|top| Ok(generate_doc(&spec, &top, providers.chat.as_ref())?))
            .and_then(|doc| Ok(kb.set_doc(&spec.class_type, doc)?));
        match result {
            Ok(()) => summary.documented.push(spec.class_type),
            Err(e) => {
                tracing::warn!(class_type = %spec.class_type, error = %e, "documentation failed");
                summary.failed.insert(spec.class_type, e.to_string());
            }
        }
    }
    Ok(summary)
}
