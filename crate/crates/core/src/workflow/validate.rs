use serde::{Deserialize, Serialize};

use super::{find_cycle, InputValue, Literal, WorkflowGraph};
use crate::kb::{types_compatible, NodeRegistry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IssueKind {
    MissingNode,
    MissingRequiredInput,
    TypeMismatch,
    Cycle,
    DanglingEdge,
    ComboOutOfRange,
    UnknownInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub kind: IssueKind,
    pub node_id: String,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub install_hint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn error_kinds(&self) -> Vec<IssueKind> {
        let mut kinds: Vec<IssueKind> = self.errors().map(|i| i.kind).collect();
        kinds.sort();
        kinds.dedup();
        kinds
    }

    /// Classes reported as missing, with their install hint, in report order.
    pub fn missing_nodes(&self) -> Vec<(String, Option<String>)> {
        let mut out: Vec<(String, Option<String>)> = Vec::new();
        for issue in self.issues.iter().filter(|i| i.kind == IssueKind::MissingNode) {
            let class = issue.detail.clone();
            if !out.iter().any(|(c, _)| *c == class) {
                out.push((class, issue.install_hint.clone()));
            }
        }
        out
    }
}

/// Checks whether `graph` could execute with the classes in `registry`.
pub fn validate(graph: &WorkflowGraph, registry: &NodeRegistry) -> ValidationReport {
    let mut issues = Vec::new();
    let mut push = |severity, kind, node_id: &str, detail: String, install_hint: Option<String>| {
        issues.push(Issue {
            severity,
            kind,
            node_id: node_id.to_string(),
            detail,
            install_hint,
        })
    };

    for (id, node) in &graph.nodes {
        let id = id.as_str();
        let Some(spec) = registry.get(&node.class_type) else {
            // detail carries the bare class_type so callers can build install guides
            push(
                Severity::Error,
                IssueKind::MissingNode,
                id,
                node.class_type.clone(),
                registry.repo_hint(&node.class_type),
            );
            continue;
        };

        for param in spec.inputs.iter().filter(|p| p.required) {
            if !node.inputs.contains_key(&param.name) {
                push(
                    Severity::Error,
                    IssueKind::MissingRequiredInput,
                    id,
                    format!("{}.{} ({}) is required", node.class_type, param.name, param.type_tag),
                    None,
                );
            }
        }

        for (name, value) in &node.inputs {
            let param = spec.param(name);
            if param.is_none() {
                push(
                    Severity::Warning,
                    IssueKind::UnknownInput,
                    id,
                    format!("{} declares no input `{name}`", node.class_type),
                    None,
                );
            }
            match value {
                InputValue::Edge { upstream, slot } => {
                    let Some(up) = graph.nodes.get(upstream) else {
                        push(
                            Severity::Error,
                            IssueKind::DanglingEdge,
                            id,
                            format!("input `{name}` references missing node `{upstream}`"),
                            None,
                        );
                        continue;
                    };
                    let Some(up_spec) = registry.get(&up.class_type) else {
                        continue;
                    };
                    let Some(out) = up_spec.outputs.get(*slot) else {
                        push(
                            Severity::Error,
                            IssueKind::DanglingEdge,
                            id,
                            format!(
                                "input `{name}` references output {slot} of `{upstream}` ({}), which has {} outputs",
                                up.class_type,
                                up_spec.outputs.len()
                            ),
                            None,
                        );
                        continue;
                    };
                    if let Some(param) = param {
                        if !types_compatible(&out.type_tag, &param.type_tag) {
                            push(
                                Severity::Error,
                                IssueKind::TypeMismatch,
                                id,
                                format!(
                                    "input `{name}` expects {} but `{upstream}` output {slot} is {}",
                                    param.type_tag, out.type_tag
                                ),
                                None,
                            );
                        }
                    }
                }
                InputValue::Literal(lit) => {
                    let Some(param) = param else { continue };
                    if !param.accepts_literal() {
                        push(
                            Severity::Error,
                            IssueKind::TypeMismatch,
                            id,
                            format!("input `{name}` expects a {} connection, got a literal", param.type_tag),
                            None,
                        );
                    } else if let (Some(options), Literal::Str(s)) = (&param.combo_options, lit) {
                        if !options.iter().any(|o| o == s) {
                            push(
                                Severity::Warning,
                                IssueKind::ComboOutOfRange,
                                id,
                                format!("`{s}` is not among the options of `{name}`"),
                                None,
                            );
                        }
                    }
                }
            }
        }
    }

    if let Some(cycle) = find_cycle(graph) {
        let first = cycle.members.first().map(|m| m.to_string()).unwrap_or_default();
        push(Severity::Error, IssueKind::Cycle, &first, cycle.to_string(), None);
    }

    let pass = !issues.iter().any(|i| i.severity == Severity::Error);
    ValidationReport { pass, issues }
}
