//! Independent recomputations used as test oracles.

use std::collections::HashSet;

use copilot_core::workflow::{InputValue, IssueKind, WorkflowGraph};

use super::txt2img;

pub const W_S: f64 = 0.7;
pub const W_L: f64 = 0.3;

/// Multiset intersection by sorting both class lists and merging.
pub fn metrics(gen: &WorkflowGraph, reference: &WorkflowGraph) -> (f64, f64, f64) {
    let sorted = |g: &WorkflowGraph| {
        let mut v: Vec<String> = g.nodes.values().map(|n| n.class_type.clone()).collect();
        v.sort();
        v
    };
    let (a, b) = (sorted(gen), sorted(reference));
    let (mut i, mut j, mut m) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Equal => {
                m += 1;
                i += 1;
                j += 1;
            }
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
        }
    }
    let p = if a.is_empty() { 0.0 } else { m as f64 / a.len() as f64 };
    let r = if b.is_empty() { 0.0 } else { m as f64 / b.len() as f64 };
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

fn words(text: &str) -> HashSet<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(String::from)
        .collect()
}

pub fn lexical(query: &str, doc: &str) -> f64 {
    let q = words(query);
    if q.is_empty() {
        return 0.0;
    }
    let d = words(doc);
    q.iter().filter(|w| d.contains(*w)).count() as f64 / q.len() as f64
}

pub fn semantic(q: &[f64], d: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut nq = 0.0;
    let mut nd = 0.0;
    for (x, y) in q.iter().zip(d) {
        dot += x * y;
        nq += x * x;
        nd += y * y;
    }
    if nq == 0.0 || nd == 0.0 {
        return 0.5;
    }
    ((dot / (nq.sqrt() * nd.sqrt()) + 1.0) / 2.0).clamp(0.0, 1.0)
}

/// Every document scored with the weighted sum and sorted by score
/// descending, then id ascending.
pub fn brute_force_rank(
    query: &str,
    docs: &[(String, String)],
    embed: impl Fn(&str) -> Vec<f64>,
) -> Vec<(String, f64)> {
    let qv = embed(query);
    let mut scored: Vec<(String, f64)> = docs
        .iter()
        .map(|(id, text)| (id.clone(), W_S * semantic(&qv, &embed(text)) + W_L * lexical(query, text)))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored
}

fn mutate(g: &WorkflowGraph, f: impl FnOnce(&mut WorkflowGraph)) -> WorkflowGraph {
    let mut g = g.clone();
    f(&mut g);
    g
}

fn set_input(g: &mut WorkflowGraph, id: &str, name: &str, value: InputValue) {
    g.node_mut(id).unwrap().inputs.insert(name.to_string(), value);
}

/// Each defect kind applied singly to the clean text-to-image fixture.
pub fn seeded_defects() -> Vec<(IssueKind, WorkflowGraph)> {
    let base = txt2img();
    vec![
        (
            IssueKind::MissingNode,
            mutate(&base, |g| g.node_mut("9").unwrap().class_type = "SaveImageWebp".into()),
        ),
        (
            IssueKind::MissingRequiredInput,
            mutate(&base, |g| {
                g.node_mut("8").unwrap().inputs.remove("vae");
            }),
        ),
        (
            IssueKind::TypeMismatch,
            mutate(&base, |g| set_input(g, "8", "samples", InputValue::edge("4", 0))),
        ),
        (
            IssueKind::Cycle,
            mutate(&base, |g| set_input(g, "3", "latent_image", InputValue::edge("3", 0))),
        ),
        (
            IssueKind::DanglingEdge,
            mutate(&base, |g| set_input(g, "9", "images", InputValue::edge("42", 0))),
        ),
    ]
}
