//! Pearl d-separation on the grounded DAG.
//!
//! Reachability formulation (Bayes-ball): a ball starting at `xs` travels
//! along active trail segments; `xs` and `ys` are d-separated given `zs`
//! iff no ball reaches `ys`. Linear in edges per query, and the traversal
//! only touches the neighborhood actually reachable from `xs`.

use std::collections::BTreeSet;

use crate::ground::{CausalGraph, NodeId};

/// True iff every undirected path between `xs` and `ys` is blocked by `zs`.
/// The three sets must be pairwise disjoint.
pub fn d_separated(
    graph: &CausalGraph,
    xs: &BTreeSet<NodeId>,
    ys: &BTreeSet<NodeId>,
    zs: &BTreeSet<NodeId>,
) -> bool {
    if xs.is_empty() || ys.is_empty() {
        return true;
    }
    debug_assert!(xs.is_disjoint(ys) && xs.is_disjoint(zs) && ys.is_disjoint(zs));

    // Nodes with a descendant in zs (including zs themselves): these open
    // colliders.
    let mut collider_openers: Vec<bool> = vec![false; graph.len()];
    {
        let mut stack: Vec<NodeId> = zs.iter().copied().collect();
        while let Some(v) = stack.pop() {
            if collider_openers[v.ix()] {
                continue;
            }
            collider_openers[v.ix()] = true;
            stack.extend_from_slice(graph.parents(v));
        }
    }

    let in_z = |v: NodeId| zs.contains(&v);

    // Ball states: (node, arrived_from_child). Arriving "from a child"
    // also covers the start nodes, which may move anywhere.
    let mut visited_up = vec![false; graph.len()];
    let mut visited_down = vec![false; graph.len()];
    let mut stack: Vec<(NodeId, bool)> = xs.iter().map(|&x| (x, true)).collect();

    while let Some((v, from_child)) = stack.pop() {
        let seen = if from_child {
            &mut visited_up
        } else {
            &mut visited_down
        };
        if seen[v.ix()] {
            continue;
        }
        seen[v.ix()] = true;

        if !in_z(v) && ys.contains(&v) {
            return false;
        }

        if from_child {
            // Trail ...<- v or start: may ascend to parents and descend to
            // children unless v is conditioned on.
            if !in_z(v) {
                for &p in graph.parents(v) {
                    stack.push((p, true));
                }
                for &c in graph.children(v) {
                    stack.push((c, false));
                }
            }
        } else {
            // Trail ...-> v: descends through v unless conditioned; bounces
            // back up iff v is a collider opener.
            if !in_z(v) {
                for &c in graph.children(v) {
                    stack.push((c, false));
                }
            }
            if collider_openers[v.ix()] {
                for &p in graph.parents(v) {
                    stack.push((p, true));
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground::{build_graph, GroundAttr, GroundedRule};

    /// Builds a graph from `child <- parent` pairs over single-letter nodes.
    pub(crate) fn graph_from_edges(edges: &[(&str, &str)]) -> CausalGraph {
        let rules: Vec<GroundedRule> = edges
            .iter()
            .map(|(child, parent)| GroundedRule {
                head: GroundAttr::new(*child, &["u"]),
                body: [GroundAttr::new(*parent, &["u"])].into_iter().collect(),
            })
            .collect();
        build_graph(&rules, &[]).unwrap()
    }

    fn set(graph: &CausalGraph, names: &[&str]) -> BTreeSet<NodeId> {
        names
            .iter()
            .map(|n| graph.id(&GroundAttr::new(*n, &["u"])).unwrap())
            .collect()
    }

    #[test]
    fn chain_blocked_by_middle() {
        let g = graph_from_edges(&[("b", "a"), ("c", "b")]);
        assert!(d_separated(
            &g,
            &set(&g, &["a"]),
            &set(&g, &["c"]),
            &set(&g, &["b"])
        ));
        assert!(!d_separated(
            &g,
            &set(&g, &["a"]),
            &set(&g, &["c"]),
            &BTreeSet::new()
        ));
    }

    #[test]
    fn fork_blocked_by_root() {
        let g = graph_from_edges(&[("b", "a"), ("c", "a")]);
        assert!(d_separated(
            &g,
            &set(&g, &["b"]),
            &set(&g, &["c"]),
            &set(&g, &["a"])
        ));
        assert!(!d_separated(
            &g,
            &set(&g, &["b"]),
            &set(&g, &["c"]),
            &BTreeSet::new()
        ));
    }

    #[test]
    fn collider_opens_when_conditioned() {
        let g = graph_from_edges(&[("c", "a"), ("c", "b")]);
        assert!(d_separated(
            &g,
            &set(&g, &["a"]),
            &set(&g, &["b"]),
            &BTreeSet::new()
        ));
        assert!(!d_separated(
            &g,
            &set(&g, &["a"]),
            &set(&g, &["b"]),
            &set(&g, &["c"])
        ));
    }

    #[test]
    fn collider_descendant_opens_path() {
        let g = graph_from_edges(&[("c", "a"), ("c", "b"), ("d", "c")]);
        assert!(!d_separated(
            &g,
            &set(&g, &["a"]),
            &set(&g, &["b"]),
            &set(&g, &["d"])
        ));
    }

    #[test]
    fn empty_sets_are_separated() {
        let g = graph_from_edges(&[("b", "a")]);
        assert!(d_separated(
            &g,
            &BTreeSet::new(),
            &set(&g, &["b"]),
            &BTreeSet::new()
        ));
    }
}
