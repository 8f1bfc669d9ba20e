//! Workflow graph IR: the API-style JSON format, the assignment-style code
//! DSL, structural validation against a node registry and node-selection
//! metrics.

mod code;
mod json;
mod metrics;
mod topo;
mod validate;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use code::{parse_code, to_code, CodeError};
pub use json::{from_json_value, parse_json, to_json, to_json_value, JsonError};
pub use metrics::{node_metrics, NodeMetrics};
pub use topo::{find_cycle, topo_order, CycleError};
pub use validate::{validate, Issue, IssueKind, Severity, ValidationReport};

/// Identifier of a node instance inside one workflow.
///
/// Ordering is numeric-aware: ids that parse as unsigned integers sort by
/// value and before any non-numeric id, which keeps `"9"` ahead of `"10"`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn numeric(&self) -> Option<u128> {
        if self.0.is_empty() || !self.0.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        self.0.parse().ok()
    }
}

impl Ord for NodeId {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.numeric(), other.numeric()) {
            (Some(a), Some(b)) => a.cmp(&b).then_with(|| self.0.cmp(&other.0)),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => self.0.cmp(&other.0),
        }
    }
}

impl PartialOrd for NodeId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

/// A scalar widget value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl Literal {
    pub fn to_json_value(&self) -> serde_json::Value {
        match self {
            Literal::Bool(b) => serde_json::Value::Bool(*b),
            Literal::Int(i) => serde_json::Value::from(*i),
            Literal::Float(f) => serde_json::Number::from_f64(*f)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            Literal::Str(s) => serde_json::Value::String(s.clone()),
        }
    }

    /// Decodes a JSON scalar. Arrays, objects and null are not literals.
    pub fn from_json_value(value: &serde_json::Value) -> Option<Literal> {
        match value {
            serde_json::Value::Bool(b) => Some(Literal::Bool(*b)),
            serde_json::Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Some(Literal::Int(i))
                } else {
                    n.as_f64().map(Literal::Float)
                }
            }
            serde_json::Value::String(s) => Some(Literal::Str(s.clone())),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Literal::Str(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Int(i) => write!(f, "{i}"),
            Literal::Float(x) => write!(f, "{x}"),
            Literal::Str(s) => f.write_str(s),
        }
    }
}

/// Where an input gets its value from.
#[derive(Debug, Clone, PartialEq)]
pub enum InputValue {
    Literal(Literal),
    Edge { upstream: NodeId, slot: usize },
}

impl InputValue {
    pub fn edge(upstream: impl Into<NodeId>, slot: usize) -> Self {
        InputValue::Edge {
            upstream: upstream.into(),
            slot,
        }
    }

    pub fn as_edge(&self) -> Option<(&NodeId, usize)> {
        match self {
            InputValue::Edge { upstream, slot } => Some((upstream, *slot)),
            InputValue::Literal(_) => None,
        }
    }

    pub fn as_literal(&self) -> Option<&Literal> {
        match self {
            InputValue::Literal(l) => Some(l),
            InputValue::Edge { .. } => None,
        }
    }
}

impl From<Literal> for InputValue {
    fn from(l: Literal) -> Self {
        InputValue::Literal(l)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeInstance {
    pub class_type: String,
    pub inputs: BTreeMap<String, InputValue>,
}

impl NodeInstance {
    pub fn new(class_type: impl Into<String>) -> Self {
        Self {
            class_type: class_type.into(),
            inputs: BTreeMap::new(),
        }
    }

    pub fn with_input(mut self, name: impl Into<String>, value: InputValue) -> Self {
        self.inputs.insert(name.into(), value);
        self
    }

    pub fn with_literal(self, name: impl Into<String>, value: Literal) -> Self {
        self.with_input(name, InputValue::Literal(value))
    }

    pub fn with_edge(self, name: impl Into<String>, upstream: impl Into<NodeId>, slot: usize) -> Self {
        self.with_input(name, InputValue::edge(upstream, slot))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub title: Option<String>,
    pub description: Option<String>,
}

/// A workflow: node instances keyed by id, wired by slot-addressed edges.
///
/// The type itself does not enforce acyclicity or edge validity so that
/// defective graphs can be represented and reported on by [`validate`];
/// [`parse_json`] and [`parse_code`] only ever produce well-formed graphs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorkflowGraph {
    pub nodes: BTreeMap<NodeId, NodeInstance>,
    /// Not part of either wire format.
    pub meta: Option<GraphMeta>,
}

/// One edge, seen from the consuming side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeRef<'a> {
    pub from: &'a NodeId,
    pub slot: usize,
    pub to: &'a NodeId,
    pub input: &'a str,
}

impl WorkflowGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<NodeId>, node: NodeInstance) -> Option<NodeInstance> {
        self.nodes.insert(id.into(), node)
    }

    pub fn with_node(mut self, id: impl Into<NodeId>, node: NodeInstance) -> Self {
        self.insert(id, node);
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: &str) -> Option<&NodeInstance> {
        self.nodes.get(&NodeId::from(id))
    }

    pub fn node_mut(&mut self, id: &str) -> Option<&mut NodeInstance> {
        self.nodes.get_mut(&NodeId::from(id))
    }

    /// All edges in (consumer id, input name) order.
    pub fn edges(&self) -> impl Iterator<Item = EdgeRef<'_>> {
        self.nodes.iter().flat_map(|(to, node)| {
            node.inputs.iter().filter_map(move |(input, value)| {
                value.as_edge().map(|(from, slot)| EdgeRef {
                    from,
                    slot,
                    to,
                    input,
                })
            })
        })
    }

    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }

    /// Returns a copy with every node id replaced through `map`. Ids missing
    /// from the map are kept.
    pub fn relabel(&self, map: &BTreeMap<NodeId, NodeId>) -> WorkflowGraph {
        let lookup = |id: &NodeId| map.get(id).cloned().unwrap_or_else(|| id.clone());
        let nodes = self
            .nodes
            .iter()
            .map(|(id, node)| {
                let inputs = node
                    .inputs
                    .iter()
                    .map(|(name, value)| {
                        let value = match value {
                            InputValue::Edge { upstream, slot } => InputValue::Edge {
                                upstream: lookup(upstream),
                                slot: *slot,
                            },
                            lit => lit.clone(),
                        };
                        (name.clone(), value)
                    })
                    .collect();
                (
                    lookup(id),
                    NodeInstance {
                        class_type: node.class_type.clone(),
                        inputs,
                    },
                )
            })
            .collect();
        WorkflowGraph {
            nodes,
            meta: self.meta.clone(),
        }
    }

    /// Relabels nodes to `"1".."n"` following [`topo_order`], the same
    /// numbering [`parse_code`] assigns to the output of [`to_code`].
    pub fn canonical_relabel(&self) -> Result<WorkflowGraph, CycleError> {
        let order = topo_order(self)?;
        let map = order
            .into_iter()
            .enumerate()
            .map(|(i, id)| (id, NodeId::new((i + 1).to_string())))
            .collect();
        Ok(self.relabel(&map))
    }

    /// Structural equality up to node-id relabeling, compared through the
    /// canonical topological numbering.
    pub fn isomorphic(&self, other: &WorkflowGraph) -> bool {
        match (self.canonical_relabel(), other.canonical_relabel()) {
            (Ok(a), Ok(b)) => a.nodes == b.nodes,
            _ => false,
        }
    }
}
