use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::WorkflowGraph;

/// Node-selection quality of a generated workflow against a reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: usize,
    pub gen_count: usize,
    pub ref_count: usize,
}

fn class_counts(graph: &WorkflowGraph) -> BTreeMap<&str, usize> {
    let mut counts = BTreeMap::new();
    for node in graph.nodes.values() {
        *counts.entry(node.class_type.as_str()).or_insert(0) += 1;
    }
    counts
}

/// Precision/recall/F1 over class_type multisets.
pub fn node_metrics(generated: &WorkflowGraph, reference: &WorkflowGraph) -> NodeMetrics {
    let gen = class_counts(generated);
    let reference_counts = class_counts(reference);
    let matched: usize = gen
        .iter()
        .map(|(class, n)| (*n).min(reference_counts.get(class).copied().unwrap_or(0)))
        .sum();
    let gen_count = generated.len();
    let ref_count = reference.len();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(matched, gen_count);
    let recall = ratio(matched, ref_count);
    // 2PR/(P+R) reduces to 2m/(|gen|+|ref|), which avoids compounding rounding.
    let f1 = if matched > 0 {
        2.0 * matched as f64 / (gen_count + ref_count) as f64
    } else {
        0.0
    };
    NodeMetrics {
        precision,
        recall,
        f1,
        matched,
        gen_count,
        ref_count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workflow::NodeInstance;

    fn graph(classes: &[&str]) -> WorkflowGraph {
        let mut g = WorkflowGraph::new();
        for (i, c) in classes.iter().enumerate() {
            g.insert((i + 1).to_string(), NodeInstance::new(*c));
        }
        g
    }

    #[test]
    fn identical_graphs_score_one() {
        let g = graph(&["A", "B", "B"]);
        let m = node_metrics(&g, &g);
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn multiset_intersection() {
        let m = node_metrics(&graph(&["A", "A", "B"]), &graph(&["A", "B", "C"]));
        assert_eq!(m.matched, 2);
        assert_eq!(m.precision, 2.0 / 3.0);
        assert_eq!(m.recall, 2.0 / 3.0);
        assert_eq!(m.f1, 2.0 / 3.0);
    }

    #[test]
    fn empty_generation_scores_zero() {
        let m = node_metrics(&WorkflowGraph::new(), &graph(&["A"]));
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn swapping_arguments_swaps_precision_and_recall() {
        let a = graph(&["A", "A", "B", "D"]);
        let b = graph(&["A", "B", "C"]);
        let ab = node_metrics(&a, &b);
        let ba = node_metrics(&b, &a);
        assert_eq!(ab.precision, ba.recall);
        assert_eq!(ab.recall, ba.precision);
        assert_eq!(ab.f1, ba.f1);
    }
}
