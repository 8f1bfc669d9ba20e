//! Recall@k evaluation and synthetic test-set generators.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::copilot::Copilot;
use crate::kb::{KnowledgeBase, NodeSpec, OutSpec, ParamSpec, WorkflowEntry};
use crate::retrieval::{EntryKind, RetrievalConfig, RetrievalError, Stats};
use crate::workflow::{Literal, NodeInstance, WorkflowGraph};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecallEvalCase {
    pub instruction: String,
    pub gold_id: String,
    pub kind: EntryKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedCase {
    pub index: usize,
    pub gold_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallEvalReport {
    pub k: usize,
    pub total: usize,
    pub hits: usize,
    pub recall_at_k: f64,
    pub rejected: Vec<RejectedCase>,
    /// Indices of evaluated cases whose gold entry was not in the top k.
    pub misses: Vec<usize>,
}

pub fn parse_recall_cases(text: &str) -> Result<Vec<RecallEvalCase>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

fn gold_exists(copilot: &Copilot, case: &RecallEvalCase) -> bool {
    let kb = copilot.kb();
    match case.kind {
        EntryKind::Workflow => kb.lookup_workflow(&case.gold_id).is_ok(),
        EntryKind::Node => kb.lookup_node(&case.gold_id).is_ok(),
        EntryKind::Model => kb.lookup_model(&case.gold_id).is_ok(),
    }
}

/// Runs the full pipeline per case and counts gold entries in the top `k`.
/// Cases whose gold id is not in the knowledge base are rejected and listed,
/// not counted.
pub fn eval_recall(cases: &[RecallEvalCase], k: usize, copilot: &Copilot) -> Result<RecallEvalReport, RetrievalError> {
    let k = k.max(1);
    let base = &copilot.config().retrieval;
    let cfg = RetrievalConfig {
        final_k: k,
        recall_k: base.recall_k.max(k),
        ..base.clone()
    };
    let mut report = RecallEvalReport {
        k,
        total: 0,
        hits: 0,
        recall_at_k: 0.0,
        rejected: Vec::new(),
        misses: Vec::new(),
    };
    for (index, case) in cases.iter().enumerate() {
        if !gold_exists(copilot, case) {
            report.rejected.push(RejectedCase {
                index,
                gold_id: case.gold_id.clone(),
                reason: format!("no {} with id `{}` in the knowledge base", case.kind, case.gold_id),
            });
            continue;
        }
        let intent = copilot.expand(&case.instruction, None);
        let top = copilot.recommend_with(case.kind, &intent, &cfg, &|_| true)?;
        report.total += 1;
        if top.iter().any(|c| c.entry.id == case.gold_id) {
            report.hits += 1;
        } else {
            report.misses.push(index);
        }
    }
    report.recall_at_k = if report.total == 0 {
        0.0
    } else {
        report.hits as f64 / report.total as f64
    };
    Ok(report)
}

const VERBS: &[&str] = &[
    "upscale", "restyle", "animate", "inpaint", "colorize", "relight", "denoise", "segment", "outpaint", "sharpen",
    "blend", "swap",
];
const ADJECTIVES: &[&str] = &[
    "vintage", "anime", "portrait", "landscape", "cinematic", "noisy", "blurry", "low resolution", "night",
    "product", "architectural", "watercolor",
];
const SUBJECTS: &[&str] = &[
    "photos", "faces", "videos", "sketches", "renders", "scans", "selfies", "illustrations", "frames", "textures",
];
const METHODS: &[&str] = &[
    "with controlnet guidance",
    "using a latent upscaler",
    "through an ipadapter reference",
    "with a lora stack",
    "in two sampling passes",
    "with mask refinement",
    "using depth estimation",
    "with face restoration",
];

const SYNONYMS: &[(&str, &str)] = &[
    ("upscale", "enlarge"),
    ("restyle", "transform"),
    ("animate", "move"),
    ("inpaint", "fill"),
    ("colorize", "tint"),
    ("relight", "illuminate"),
    ("denoise", "clean"),
    ("segment", "split"),
    ("outpaint", "extend"),
    ("sharpen", "crisp"),
    ("blend", "merge"),
    ("swap", "replace"),
    ("vintage", "retro"),
    ("photos", "pictures"),
    ("faces", "portraits"),
    ("videos", "clips"),
    ("sketches", "drawings"),
    ("using", "via"),
    ("with", "plus"),
];

fn synthetic_graph(rng: &mut ChaCha8Rng) -> WorkflowGraph {
    let steps = rng.random_range(10..40);
    WorkflowGraph::new()
        .with_node("1", NodeInstance::new("SynthLoader").with_literal("name", Literal::Str("base".into())))
        .with_node(
            "2",
            NodeInstance::new("SynthStep")
                .with_edge("input", "1", 0)
                .with_literal("steps", Literal::Int(steps)),
        )
}

/// Node specs used by [`synthetic_kb`] workflows.
pub fn synthetic_specs() -> Vec<NodeSpec> {
    vec![
        NodeSpec {
            outputs: vec![OutSpec::new("DATA", "DATA")],
            inputs: vec![ParamSpec::new("name", "STRING")],
            description: Some("loads a synthetic base asset".into()),
            ..NodeSpec::new("SynthLoader")
        },
        NodeSpec {
            inputs: vec![ParamSpec::new("input", "DATA"), ParamSpec::new("steps", "INT")],
            outputs: vec![OutSpec::new("DATA", "DATA")],
            description: Some("applies one synthetic processing step".into()),
            ..NodeSpec::new("SynthStep")
        },
    ]
}

/// A knowledge base of `n` workflows with unique generated descriptions and
/// random popularity, deterministic in `seed`.
pub fn synthetic_kb(n: usize, seed: u64) -> KnowledgeBase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kb = KnowledgeBase::in_memory();
    for spec in synthetic_specs() {
        kb.insert_node(spec);
    }
    let mut used = BTreeSet::new();
    let mut i = 0;
    while i < n {
        let desc = format!(
            "{} {} {} {}",
            VERBS.choose(&mut rng).unwrap(),
            ADJECTIVES.choose(&mut rng).unwrap(),
            SUBJECTS.choose(&mut rng).unwrap(),
            METHODS.choose(&mut rng).unwrap()
        );
        if !used.insert(desc.clone()) {
            continue;
        }
        kb.insert_workflow(WorkflowEntry {
            id: format!("wf-{i:04}"),
            title: format!("Workflow {i}"),
            description: desc,
            stats: Stats {
                stars: rng.random_range(0..500),
                downloads: rng.random_range(0..5000),
                upvotes: rng.random_range(0..200),
            },
            graph: synthetic_graph(&mut rng),
            extra: Default::default(),
        });
        i += 1;
    }
    kb
}

/// One case per workflow, instruction equal to its description.
pub fn verbatim_cases(kb: &KnowledgeBase) -> Vec<RecallEvalCase> {
    kb.workflows()
        .map(|w| RecallEvalCase {
            instruction: w.retrieval_text(),
            gold_id: w.id.clone(),
            kind: EntryKind::Workflow,
        })
        .collect()
}

/// Shuffles the words and replaces about `rate` of those with a known
/// synonym.
pub fn paraphrase(text: &str, rate: f64, rng: &mut impl Rng) -> String {
    let mut words: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    words.shuffle(rng);
    for w in &mut words {
        if let Some((_, syn)) = SYNONYMS.iter().find(|(a, _)| a.eq_ignore_ascii_case(w)) {
            if rng.random_bool(rate) {
                *w = syn.to_string();
            }
        }
    }
    words.join(" ")
}

pub fn paraphrase_cases(kb: &KnowledgeBase, rate: f64, seed: u64) -> Vec<RecallEvalCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    kb.workflows()
        .map(|w| RecallEvalCase {
            instruction: paraphrase(&w.retrieval_text(), rate, &mut rng),
            gold_id: w.id.clone(),
            kind: EntryKind::Workflow,
        })
        .collect()
}
