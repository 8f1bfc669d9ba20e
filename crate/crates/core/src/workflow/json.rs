use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::de::{self, DeserializeSeed, IgnoredAny, MapAccess, Visitor};
use serde_json::Value;

use super::{find_cycle, CycleError, InputValue, Literal, NodeId, NodeInstance, WorkflowGraph};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum JsonError {
    #[error("malformed workflow JSON at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate node id `{id}` at line {line}, column {column}")]
    DuplicateId { id: String, line: usize, column: usize },
    #[error("empty node id at line {line}, column {column}")]
    EmptyId { line: usize, column: usize },
    #[error("node `{node}` repeats input `{input}` at line {line}, column {column}")]
    DuplicateInput {
        node: String,
        input: String,
        line: usize,
        column: usize,
    },
    #[error("node `{node}` has no class_type (line {line}, column {column})")]
    MissingClassType { node: String, line: usize, column: usize },
    #[error("node `{node}` input `{input}` is neither a literal nor an edge (line {line}, column {column})")]
    UnsupportedValue {
        node: String,
        input: String,
        line: usize,
        column: usize,
    },
    #[error("node `{node}` input `{input}` references unknown node `{target}`")]
    UnknownEdgeTarget {
        node: String,
        input: String,
        target: String,
    },
    #[error(transparent)]
    Cycle(#[from] CycleError),
}

enum Semantic {
    DuplicateId(String),
    EmptyId,
    DuplicateInput { node: String, input: String },
    MissingClassType(String),
    UnsupportedValue { node: String, input: String },
}

type Channel = RefCell<Option<Semantic>>;

/// Decodes an API-format workflow: `{id: {"class_type", "inputs"}}` where
/// two-element `[id, slot]` arrays are edges and scalars are literals.
pub fn parse_json(text: &str) -> Result<WorkflowGraph, JsonError> {
    let channel: Channel = RefCell::new(None);
    let mut de = serde_json::Deserializer::from_str(text);
    let parsed = GraphSeed { channel: &channel }
        .deserialize(&mut de)
        .and_then(|nodes| de.end().map(|_| nodes));
    let entries = match parsed {
        Ok(entries) => entries,
        Err(err) => return Err(classify(err, channel.into_inner())),
    };

    let graph = WorkflowGraph {
        nodes: entries.into_iter().map(|(id, node)| (NodeId::new(id), node)).collect(),
        meta: None,
    };
    for edge in graph.edges() {
        if !graph.nodes.contains_key(edge.from) {
            return Err(JsonError::UnknownEdgeTarget {
                node: edge.to.to_string(),
                input: edge.input.to_string(),
                target: edge.from.to_string(),
            });
        }
    }
    if let Some(cycle) = find_cycle(&graph) {
        return Err(cycle.into());
    }
    Ok(graph)
}

fn classify(err: serde_json::Error, semantic: Option<Semantic>) -> JsonError {
    let (line, column) = (err.line(), err.column());
    match semantic {
        Some(Semantic::DuplicateId(id)) => JsonError::DuplicateId { id, line, column },
        Some(Semantic::EmptyId) => JsonError::EmptyId { line, column },
        Some(Semantic::DuplicateInput { node, input }) => JsonError::DuplicateInput {
            node,
            input,
            line,
            column,
        },
        Some(Semantic::MissingClassType(node)) => JsonError::MissingClassType { node, line, column },
        Some(Semantic::UnsupportedValue { node, input }) => JsonError::UnsupportedValue {
            node,
            input,
            line,
            column,
        },
        None => JsonError::Syntax {
            line,
            column,
            message: strip_position(&err.to_string()),
        },
    }
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(idx) => msg[..idx].to_string(),
        None => msg.to_string(),
    }
}

/// Canonical serialization: keys sorted, two-space indentation.
pub fn to_json(graph: &WorkflowGraph) -> String {
    serde_json::to_string_pretty(&to_json_value(graph)).expect("workflow values are serializable")
}

pub fn to_json_value(graph: &WorkflowGraph) -> Value {
    let mut ids: Vec<&NodeId> = graph.nodes.keys().collect();
    ids.sort_by(|a, b| a.as_str().cmp(b.as_str()));
    let mut top = serde_json::Map::new();
    for id in ids {
        let node = &graph.nodes[id];
        let mut inputs = serde_json::Map::new();
        for (name, value) in &node.inputs {
            let v = match value {
                InputValue::Literal(lit) => lit.to_json_value(),
                InputValue::Edge { upstream, slot } => {
                    Value::Array(vec![Value::String(upstream.to_string()), Value::from(*slot)])
                }
            };
            inputs.insert(name.clone(), v);
        }
        let mut obj = serde_json::Map::new();
        obj.insert("class_type".into(), Value::String(node.class_type.clone()));
        obj.insert("inputs".into(), Value::Object(inputs));
        top.insert(id.to_string(), Value::Object(obj));
    }
    Value::Object(top)
}

/// Same decoding as [`parse_json`] but starting from an already-parsed value.
pub fn from_json_value(value: &Value) -> Result<WorkflowGraph, JsonError> {
    parse_json(&value.to_string())
}

impl serde::Serialize for WorkflowGraph {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serde::Serialize::serialize(&to_json_value(self), serializer)
    }
}

impl<'de> serde::Deserialize<'de> for WorkflowGraph {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        from_json_value(&value).map_err(de::Error::custom)
    }
}

fn decode_input(value: Value) -> Option<InputValue> {
    match value {
        Value::Array(items) if items.len() == 2 => {
            let upstream = match &items[0] {
                Value::String(s) => s.clone(),
                Value::Number(n) if n.is_u64() => n.to_string(),
                _ => return None,
            };
            let slot = items[1].as_u64()?;
            Some(InputValue::Edge {
                upstream: NodeId::new(upstream),
                slot: usize::try_from(slot).ok()?,
            })
        }
        other => Literal::from_json_value(&other).map(InputValue::Literal),
    }
}

struct GraphSeed<'a> {
    channel: &'a Channel,
}

impl<'de> DeserializeSeed<'de> for GraphSeed<'_> {
    type Value = Vec<(String, NodeInstance)>;

    fn deserialize<D: de::Deserializer<'de>>(self, deserializer: D) -> Result<Self::Value, D::Error> {
        deserializer.deserialize_map(self)
    }
}

impl<'de> Visitor<'de> for GraphSeed<'_> {
    type Value = Vec<(String, NodeInstance)>;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("an object mapping node ids to nodes")
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        while let Some(id) = map.next_key::<String>()? {
            if id.is_empty() {
                *self.channel.borrow_mut() = Some(Semantic::EmptyId);
                return Err(de::Error::custom("empty node id"));
            }
            if !seen.insert(id.clone()) {
                *self.channel.borrow_mut() = Some(Semantic::DuplicateId(id.clone()));
                return Err(de::Error::custom(format!("duplicate node id `{id}`")));
            }
            let node = map.next_value_seed(NodeSeed {
                id: &id,
                channel: self.channel,
            })?;
            out.push((id, node));
        }
        Ok(out)
    }
}

struct NodeSeed<'a> {
    id: &'a str,
    channel: &'a Channel,
}

impl<'de> DeserializeSeed<'de> for NodeSeed<'_> {
    type Value = NodeInstance;

    fn deserialize<D: de::Deserializer<'de>>(self, deserializer: D) -> Result<Self::Value, D::Error> {
        deserializer.deserialize_map(self)
    }
}

impl<'de> Visitor<'de> for NodeSeed<'_> {
    type Value = NodeInstance;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a node object with class_type and inputs")
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
        let mut class_type = None;
        let mut inputs = BTreeMap::new();
        while let Some(key) = map.next_key::<String>()? {
            match key.as_str() {
                "class_type" => class_type = Some(map.next_value::<String>()?),
                "inputs" => {
                    inputs = map.next_value_seed(InputsSeed {
                        node: self.id,
                        channel: self.channel,
                    })?
                }
                _ => {
                    map.next_value::<IgnoredAny>()?;
                }
            }
        }
        match class_type {
            Some(class_type) => Ok(NodeInstance { class_type, inputs }),
            None => {
                *self.channel.borrow_mut() = Some(Semantic::MissingClassType(self.id.to_string()));
                Err(de::Error::custom(format!("node `{}` has no class_type", self.id)))
            }
        }
    }
}

struct InputsSeed<'a> {
    node: &'a str,
    channel: &'a Channel,
}

impl<'de> DeserializeSeed<'de> for InputsSeed<'_> {
    type Value = BTreeMap<String, InputValue>;

    fn deserialize<D: de::Deserializer<'de>>(self, deserializer: D) -> Result<Self::Value, D::Error> {
        deserializer.deserialize_map(self)
    }
}

impl<'de> Visitor<'de> for InputsSeed<'_> {
    type Value = BTreeMap<String, InputValue>;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("an object of node inputs")
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
        let mut inputs = BTreeMap::new();
        while let Some(name) = map.next_key::<String>()? {
            if inputs.contains_key(&name) {
                *self.channel.borrow_mut() = Some(Semantic::DuplicateInput {
                    node: self.node.to_string(),
                    input: name.clone(),
                });
                return Err(de::Error::custom(format!("duplicate input `{name}`")));
            }
            let raw = map.next_value::<Value>()?;
            match decode_input(raw) {
                Some(value) => {
                    inputs.insert(name, value);
                }
                None => {
                    *self.channel.borrow_mut() = Some(Semantic::UnsupportedValue {
                        node: self.node.to_string(),
                        input: name.clone(),
                    });
                    return Err(de::Error::custom(format!("unsupported value for input `{name}`")));
                }
            }
        }
        Ok(inputs)
    }
}
