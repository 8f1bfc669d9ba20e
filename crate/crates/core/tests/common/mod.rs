#![allow(dead_code)]

pub mod mocks;
pub mod oracle;

use std::path::PathBuf;

use copilot_core::kb::KnowledgeBase;
use copilot_core::workflow::{parse_json, Literal, NodeInstance, WorkflowGraph};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn fixture_kb() -> KnowledgeBase {
    let mut kb = KnowledgeBase::in_memory();
    let summary = kb.ingest(fixtures().join("kb")).expect("fixture KB ingests");
    assert!(summary.rejects.is_empty(), "fixture rejects: {:?}", summary.rejects);
    kb
}

/// The 7-node text-to-image workflow.
pub fn txt2img() -> WorkflowGraph {
    let text = std::fs::read_to_string(fixtures().join("txt2img.json")).unwrap();
    parse_json(&text).unwrap()
}

const CLASSES: &[&str] = &["Loader", "KSampler", "VAEDecode", "Mixer", "Image Blend (v2)", "SaveImage"];
const LITERAL_NAMES: &[&str] = &["seed", "cfg", "text", "enabled", "mode"];

fn random_literal(rng: &mut ChaCha8Rng) -> Literal {
    match rng.random_range(0..4) {
        0 => Literal::Int(rng.random_range(-1_000_000..1_000_000)),
        1 => Literal::Float(rng.random_range(-1e4..1e4)),
        2 => Literal::Bool(rng.random_bool(0.5)),
        _ => {
            let pool = ['a', 'Z', ' ', '"', '\\', '\n', 'é', '#', '=', ',', '(', ')', '['];
            let len = rng.random_range(0..12);
            Literal::Str((0..len).map(|_| *pool.choose(rng).unwrap()).collect())
        }
    }
}

/// A random DAG of 1..=`max_nodes` nodes. Edges only point from earlier to
/// later positions in a hidden order, so the graph is acyclic; ids are
/// shuffled so that id order says nothing about that order.
pub fn random_dag(seed: u64, max_nodes: usize) -> WorkflowGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_nodes);
    let mut ids: Vec<String> = (1..=n).map(|i| (i * 3 + 1).to_string()).collect();
    ids.shuffle(&mut rng);
    let mut g = WorkflowGraph::new();
    for pos in 0..n {
        let mut node = NodeInstance::new(*CLASSES.choose(&mut rng).unwrap());
        for name in LITERAL_NAMES {
            if rng.random_bool(0.4) {
                node = node.with_literal(*name, random_literal(&mut rng));
            }
        }
        if pos > 0 {
            for k in 0..rng.random_range(0..=3usize.min(pos)) {
                let up = &ids[rng.random_range(0..pos)];
                node = node.with_edge(format!("in_{k}"), up.as_str(), rng.random_range(0..3));
            }
        }
        g.insert(ids[pos].as_str(), node);
    }
    g
}

/// A graph containing one node per listed class.
pub fn class_graph(classes: &[&str]) -> WorkflowGraph {
    let mut g = WorkflowGraph::new();
    for (i, c) in classes.iter().enumerate() {
        g.insert((i + 1).to_string(), NodeInstance::new(*c));
    }
    g
}
