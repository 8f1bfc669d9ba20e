//! The workflow worker: retrieved and synthesized workflow candidates, and
//! the generation evaluation harness.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copilot::Copilot;
use crate::kb::NodeRegistry;
use crate::providers::{ChatMessage, ProviderError};
use crate::retrieval::{EntryKind, EntryRef, Intent, RetrievalError, ScoredCandidate};
use crate::workflow::{
    node_metrics, parse_code, to_code, validate, CodeError, CycleError, NodeMetrics, ValidationReport,
    WorkflowGraph,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateSource {
    Retrieved,
    Synthesized,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingNode {
    pub class_type: String,
    pub repo_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateWorkflow {
    pub source: CandidateSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_ref: Option<EntryRef>,
    pub title: String,
    pub graph: WorkflowGraph,
    pub code: String,
    pub report: ValidationReport,
    pub missing_nodes: Vec<MissingNode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<ScoredCandidate>,
}

impl CandidateWorkflow {
    pub fn build(
        source: CandidateSource,
        title: impl Into<String>,
        graph: WorkflowGraph,
        registry: &NodeRegistry,
    ) -> Result<Self, CycleError> {
        let code = to_code(&graph, Some(registry))?;
        let report = validate(&graph, registry);
        let missing_nodes = report
            .missing_nodes()
            .into_iter()
            .map(|(class_type, repo_url)| MissingNode { class_type, repo_url })
            .collect();
        Ok(Self {
            source,
            entry_ref: None,
            title: title.into(),
            graph,
            code,
            report,
            missing_nodes,
            scores: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerationError {
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("generated code is still unparseable after {attempts} attempts: {error}")]
    Unparseable { attempts: usize, error: CodeError },
    #[error(transparent)]
    Cycle(#[from] CycleError),
}

/// Up to `final_k` workflow candidates for the intent: retrieved ones from
/// the knowledge base, with a synthesized workflow taking the last slot when
/// synthesis is enabled and succeeds.
pub fn propose(intent: &Intent, copilot: &Copilot) -> Result<Vec<CandidateWorkflow>, GenerationError> {
    let ranked = copilot.recommend(EntryKind::Workflow, intent)?;
    let mut out = Vec::with_capacity(ranked.len());
    for c in ranked {
        let Ok(entry) = copilot.kb().lookup_workflow(c.id()) else {
            continue;
        };
        let mut cand =
            CandidateWorkflow::build(CandidateSource::Retrieved, &entry.title, entry.graph.clone(), copilot.registry())?;
        cand.entry_ref = Some(c.entry.clone());
        cand.scores = Some(c);
        out.push(cand);
    }
    if copilot.config().generation.synthesize {
        match synthesize(intent, copilot) {
            Ok(s) => {
                out.truncate(copilot.config().retrieval.final_k.saturating_sub(1));
                out.push(s);
            }
            Err(e) => tracing::warn!(error = %e, "workflow synthesis failed; returning retrieved candidates only"),
        }
    }
    Ok(out)
}

const SYNTH_SYSTEM: &str = "You build workflows for a node-based image generation tool. Write the \
workflow in the assignment-style code format shown in the examples: one `var = ClassName(arg=value, ...)` \
statement per node, referencing earlier outputs as `var` or `var[slot]`. Use only the listed node \
classes where possible. Reply with code only.";

/// The prompt for [`synthesize`]: intent, the top recalled nodes and the top
/// recalled workflows rendered as code.
pub fn synthesis_prompt(intent: &Intent, copilot: &Copilot) -> String {
    let gen = &copilot.config().generation;
    let cfg = &copilot.config().retrieval;
    let emb = copilot.providers().embed.as_ref();
    let mut prompt = format!("Task: {}\n", intent.expanded);
    if let Ok(nodes) = copilot.index_for(EntryKind::Node).recall(intent, cfg, emb) {
        prompt.push_str("\nAvailable nodes:\n");
        for c in nodes.iter().take(gen.exemplar_nodes) {
            if let Some(spec) = copilot.registry().get(c.id()) {
                let ins: Vec<String> = spec.inputs.iter().map(|p| format!("{}: {}", p.name, p.type_tag)).collect();
                let outs: Vec<&str> = spec.outputs.iter().map(|o| o.type_tag.as_str()).collect();
                prompt.push_str(&format!(
                    "- {}({}) -> ({}): {}\n",
                    spec.class_type,
                    ins.join(", "),
                    outs.join(", "),
                    spec.retrieval_text()
                ));
            }
        }
    }
    if let Ok(flows) = copilot.index_for(EntryKind::Workflow).recall(intent, cfg, emb) {
        for c in flows.iter().take(gen.exemplar_workflows) {
            let Ok(entry) = copilot.kb().lookup_workflow(c.id()) else {
                continue;
            };
            if let Ok(code) = to_code(&entry.graph, Some(copilot.registry())) {
                prompt.push_str(&format!("\nExample ({}):\n{}", entry.title, code));
            }
        }
    }
    prompt
}

/// Removes a surrounding Markdown code fence, if any.
pub fn strip_fences(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let body = rest.split_once('\n').map_or("", |(_, b)| b);
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

/// Asks the chat provider for a new workflow as code; one repair round with
/// the parser error if the first answer does not parse.
pub fn synthesize(intent: &Intent, copilot: &Copilot) -> Result<CandidateWorkflow, GenerationError> {
    let mut messages = vec![ChatMessage::system(SYNTH_SYSTEM), ChatMessage::user(synthesis_prompt(intent, copilot))];
    let registry = copilot.registry();
    let mut attempts = 0;
    loop {
        attempts += 1;
        let reply = copilot.providers().chat.complete(&messages, None)?;
        match parse_code(strip_fences(&reply), Some(registry)) {
            Ok(graph) => {
                return Ok(CandidateWorkflow::build(
                    CandidateSource::Synthesized,
                    format!("Generated: {}", intent.raw),
                    graph,
                    registry,
                )?)
            }
            Err(error) if attempts >= 2 => return Err(GenerationError::Unparseable { attempts, error }),
            Err(error) => {
                messages.push(ChatMessage::assistant(reply));
                messages.push(ChatMessage::user(format!(
                    "That code does not parse ({error}). Reply with the corrected code only."
                )));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenCase {
    pub intent: String,
    pub reference: WorkflowGraph,
}

/// Reads JSON-lines eval cases, skipping blank lines.
pub fn parse_gen_cases(text: &str) -> Result<Vec<GenCase>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenCaseResult {
    pub intent: String,
    pub parsed: bool,
    pub pass: bool,
    pub nodes: usize,
    pub metrics: NodeMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenReport {
    pub cases: usize,
    pub pass_rate: f64,
    pub avg_nodes: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub results: Vec<GenCaseResult>,
}

fn empty_metrics(reference: &WorkflowGraph) -> NodeMetrics {
    node_metrics(&WorkflowGraph::new(), reference)
}

/// Synthesizes a workflow per case and scores it: executability against the
/// registry and node precision/recall/F1 against the reference. Aggregates
/// are unweighted means; cases run in parallel but results keep case order.
pub fn evaluate_generation(cases: &[GenCase], copilot: &Copilot) -> GenReport {
    let results: Vec<GenCaseResult> = cases
        .par_iter()
        .map(|case| match synthesize(&Intent::new(case.intent.clone()), copilot) {
            Ok(c) => GenCaseResult {
                intent: case.intent.clone(),
                parsed: true,
                pass: c.report.pass,
                nodes: c.graph.len(),
                metrics: node_metrics(&c.graph, &case.reference),
                error: None,
            },
            Err(e) => GenCaseResult {
                intent: case.intent.clone(),
                parsed: false,
                pass: false,
                nodes: 0,
                metrics: empty_metrics(&case.reference),
                error: Some(e.to_string()),
            },
        })
        .collect();
    aggregate(results)
}

pub fn aggregate(results: Vec<GenCaseResult>) -> GenReport {
    let n = results.len();
    let mean = |f: &dyn Fn(&GenCaseResult) -> f64| {
        if n == 0 {
            0.0
        } else {
            results.iter().map(f).sum::<f64>() / n as f64
        }
    };
    GenReport {
        cases: n,
        pass_rate: mean(&|r| if r.pass { 1.0 } else { 0.0 }),
        avg_nodes: mean(&|r| r.nodes as f64),
        precision: mean(&|r| r.metrics.precision),
        recall: mean(&|r| r.metrics.recall),
        f1: mean(&|r| r.metrics.f1),
        results,
    }
}
