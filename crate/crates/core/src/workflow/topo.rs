use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use super::{NodeId, WorkflowGraph};

/// The graph contains a directed cycle; `members` lists the nodes of one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleError {
    pub members: Vec<NodeId>,
}

impl fmt::Display for CycleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<&str> = self.members.iter().map(NodeId::as_str).collect();
        write!(f, "cycle detected through nodes {}", ids.join(", "))
    }
}

impl std::error::Error for CycleError {}

/// Upstream-first ordering; ready nodes are released in ascending id order.
/// Edges whose upstream is not in the graph are ignored.
pub fn topo_order(graph: &WorkflowGraph) -> Result<Vec<NodeId>, CycleError> {
    let mut indegree: BTreeMap<&NodeId, usize> = graph.nodes.keys().map(|id| (id, 0)).collect();
    let mut downstream: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
    for edge in graph.edges() {
        if !graph.nodes.contains_key(edge.from) {
            continue;
        }
        *indegree.get_mut(edge.to).expect("consumer is a graph node") += 1;
        downstream.entry(edge.from).or_default().push(edge.to);
    }

    let mut ready: BinaryHeap<Reverse<&NodeId>> = indegree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(id, _)| Reverse(*id))
        .collect();
    let mut order = Vec::with_capacity(graph.nodes.len());
    while let Some(Reverse(id)) = ready.pop() {
        order.push(id.clone());
        for next in downstream.get(id).into_iter().flatten() {
            let d = indegree.get_mut(next).expect("known node");
            *d -= 1;
            if *d == 0 {
                ready.push(Reverse(*next));
            }
        }
    }

    if order.len() == graph.nodes.len() {
        Ok(order)
    } else {
        Err(find_cycle(graph).expect("Kahn stalled so a cycle exists"))
    }
}

/// Finds one directed cycle, if any, by depth-first search from each node in
/// ascending id order.
pub fn find_cycle(graph: &WorkflowGraph) -> Option<CycleError> {
    // adjacency: upstream -> consumers
    let mut adj: BTreeMap<&NodeId, BTreeSet<&NodeId>> = BTreeMap::new();
    for edge in graph.edges() {
        if graph.nodes.contains_key(edge.from) {
            adj.entry(edge.from).or_default().insert(edge.to);
        }
    }

    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Fresh,
        Active,
        Done,
    }
    let mut marks: BTreeMap<&NodeId, Mark> = graph.nodes.keys().map(|id| (id, Mark::Fresh)).collect();

    for start in graph.nodes.keys() {
        if marks[start] != Mark::Fresh {
            continue;
        }
        // iterative DFS keeping the active path
        let mut path: Vec<&NodeId> = vec![start];
        let mut iters: Vec<std::collections::btree_set::Iter<'_, &NodeId>> = Vec::new();
        let empty = BTreeSet::new();
        marks.insert(start, Mark::Active);
        iters.push(adj.get(start).unwrap_or(&empty).iter());
        while let Some(it) = iters.last_mut() {
            match it.next() {
                Some(next) => match marks[*next] {
                    Mark::Fresh => {
                        marks.insert(*next, Mark::Active);
                        path.push(*next);
                        iters.push(adj.get(*next).unwrap_or(&empty).iter());
                    }
                    Mark::Active => {
                        let pos = path.iter().position(|n| n == next).expect("active node on path");
                        let mut members: Vec<NodeId> = path[pos..].iter().map(|n| (*n).clone()).collect();
                        members.sort();
                        return Some(CycleError { members });
                    }
                    Mark::Done => {}
                },
                None => {
                    iters.pop();
                    let done = path.pop().expect("path mirrors iterator stack");
                    marks.insert(done, Mark::Done);
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workflow::NodeInstance;

    fn ids(order: &[NodeId]) -> Vec<&str> {
        order.iter().map(NodeId::as_str).collect()
    }

    #[test]
    fn chain() {
        let g = WorkflowGraph::new()
            .with_node("3", NodeInstance::new("C").with_edge("in", "2", 0))
            .with_node("2", NodeInstance::new("B").with_edge("in", "1", 0))
            .with_node("1", NodeInstance::new("A"));
        assert_eq!(ids(&topo_order(&g).unwrap()), ["1", "2", "3"]);
    }

    #[test]
    fn diamond_breaks_ties_by_id() {
        let g = WorkflowGraph::new()
            .with_node("1", NodeInstance::new("A"))
            .with_node("3", NodeInstance::new("C").with_edge("in", "1", 0))
            .with_node("2", NodeInstance::new("B").with_edge("in", "1", 1))
            .with_node(
                "4",
                NodeInstance::new("D").with_edge("l", "2", 0).with_edge("r", "3", 0),
            );
        assert_eq!(ids(&topo_order(&g).unwrap()), ["1", "2", "3", "4"]);
    }

    #[test]
    fn two_cycle_is_reported() {
        let g = WorkflowGraph::new()
            .with_node("1", NodeInstance::new("A").with_edge("x", "2", 0))
            .with_node("2", NodeInstance::new("B").with_edge("y", "1", 0));
        let err = topo_order(&g).unwrap_err();
        assert_eq!(ids(&err.members), ["1", "2"]);
    }

    #[test]
    fn self_loop_is_a_cycle() {
        let g = WorkflowGraph::new().with_node("7", NodeInstance::new("A").with_edge("x", "7", 0));
        assert_eq!(ids(&topo_order(&g).unwrap_err().members), ["7"]);
    }

    #[test]
    fn cycle_members_exclude_tail_nodes() {
        // 1 -> 2 -> 3 -> 2
        let g = WorkflowGraph::new()
            .with_node("1", NodeInstance::new("A"))
            .with_node("2", NodeInstance::new("B").with_edge("a", "1", 0).with_edge("b", "3", 0))
            .with_node("3", NodeInstance::new("C").with_edge("a", "2", 0));
        assert_eq!(ids(&find_cycle(&g).unwrap().members), ["2", "3"]);
    }

    #[test]
    fn dangling_edges_are_ignored() {
        let g = WorkflowGraph::new().with_node("1", NodeInstance::new("A").with_edge("x", "99", 0));
        assert_eq!(ids(&topo_order(&g).unwrap()), ["1"]);
    }
}
