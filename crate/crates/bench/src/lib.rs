//! Inputs for the criterion benches under `benches/`.

use copilot_core::kb::{OutSpec, ParamSpec};
use copilot_core::{KnowledgeBase, Literal, NodeInstance, NodeSpec, WorkflowGraph};

/// A linear pipeline of `n` nodes, each with a few literals and one edge to
/// its predecessor.
pub fn chain_graph(n: usize) -> WorkflowGraph {
    let mut g = WorkflowGraph::new();
    for i in 1..=n {
        let mut node = NodeInstance::new(format!("Stage{}", i % 7))
            .with_literal("seed", Literal::Int(i as i64))
            .with_literal("strength", Literal::Float(0.25 * (i % 4) as f64))
            .with_literal("label", Literal::Str(format!("stage \"{i}\"")));
        if i > 1 {
            node = node.with_edge("input", (i - 1).to_string(), 0);
        }
        g = g.with_node(i.to_string(), node);
    }
    g
}

/// A knowledge base holding `n` node specs named `Node0000`, `Node0001`, ...
pub fn wide_registry(n: usize) -> KnowledgeBase {
    let mut kb = KnowledgeBase::in_memory();
    for i in 0..n {
        kb.insert_node(NodeSpec {
            inputs: vec![ParamSpec::new("input", "IMAGE"), ParamSpec::new("amount", "FLOAT")],
            outputs: vec![OutSpec::new("IMAGE", "IMAGE")],
            description: Some(format!("synthetic node number {i}")),
            ..NodeSpec::new(format!("Node{i:04}"))
        });
    }
    kb
}
