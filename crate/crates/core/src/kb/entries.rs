use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::retrieval::Stats;
use crate::workflow::WorkflowGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Checkpoint,
    Lora,
    Vae,
    Controlnet,
    Embedding,
    Other,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Checkpoint => "checkpoint",
            ModelKind::Lora => "lora",
            ModelKind::Vae => "vae",
            ModelKind::Controlnet => "controlnet",
            ModelKind::Embedding => "embedding",
            ModelKind::Other => "other",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub id: String,
    pub name: String,
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_model: Option<String>,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub downloads: u64,
    #[serde(default)]
    pub upvotes: u64,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl ModelEntry {
    pub fn stats(&self) -> Stats {
        Stats {
            stars: 0,
            downloads: self.downloads,
            upvotes: self.upvotes,
        }
    }

    pub fn retrieval_text(&self) -> String {
        if self.description.trim().is_empty() {
            self.name.clone()
        } else {
            self.description.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowEntry {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub stats: Stats,
    pub graph: WorkflowGraph,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl WorkflowEntry {
    pub fn retrieval_text(&self) -> String {
        if self.description.trim().is_empty() {
            self.title.clone()
        } else {
            self.description.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_model_kind_is_rejected() {
        let bad = r#"{"id":"m","name":"m","kind":"hypernetwork"}"#;
        assert!(serde_json::from_str::<ModelEntry>(bad).is_err());
        let ok = r#"{"id":"m","name":"m","kind":"lora","base_model":"SDXL","license":"cc"}"#;
        let m: ModelEntry = serde_json::from_str(ok).unwrap();
        assert_eq!(m.kind, ModelKind::Lora);
        assert_eq!(m.extra["license"], "cc");
    }

    #[test]
    fn workflow_entry_embeds_api_json() {
        let text = r#"{"id":"w1","title":"t","description":"d","stats":{"stars":3},
            "graph":{"1":{"class_type":"A","inputs":{}},"2":{"class_type":"B","inputs":{"x":["1",0]}}}}"#;
        let w: WorkflowEntry = serde_json::from_str(text).unwrap();
        assert_eq!(w.graph.len(), 2);
        assert_eq!(w.stats.stars, 3);
        let back: WorkflowEntry = serde_json::from_value(serde_json::to_value(&w).unwrap()).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn cyclic_workflow_graph_is_rejected() {
        let text = r#"{"id":"w","graph":{"1":{"class_type":"A","inputs":{"x":["1",0]}}}}"#;
        assert!(serde_json::from_str::<WorkflowEntry>(text).is_err());
    }
}
