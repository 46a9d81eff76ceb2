//! d-separation against an exhaustive path-blocking oracle on random DAGs.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use carl_core::analysis::d_separated;
use carl_core::ground::{build_graph, CausalGraph, GroundAttr, GroundedRule, NodeId};

/// Random DAG over `n` nodes: edges only from lower to higher index, so
/// acyclicity holds by construction.
fn random_dag(rng: &mut ChaCha8Rng, n: usize, p: f64) -> (CausalGraph, Vec<NodeId>) {
    let name = |i: usize| format!("v{i}");
    let mut rules = Vec::new();
    for child in 1..n {
        let mut body = BTreeSet::new();
        for parent in 0..child {
            if rng.gen_bool(p) {
                body.insert(GroundAttr::new(name(parent), &["u"]));
            }
        }
        rules.push(GroundedRule {
            head: GroundAttr::new(name(child), &["u"]),
            body,
        });
    }
    // Isolated nodes also appear (head with empty body contributes only
    // the head node).
    let graph = build_graph(&rules, &[]).unwrap();
    let ids = (0..n)
        .filter_map(|i| graph.id(&GroundAttr::new(name(i), &["u"])))
        .collect();
    (graph, ids)
}

/// Oracle: enumerate every simple undirected path between the sets and
/// apply the blocking rules edge pair by edge pair.
fn oracle_d_separated(
    graph: &CausalGraph,
    xs: &BTreeSet<NodeId>,
    ys: &BTreeSet<NodeId>,
    zs: &BTreeSet<NodeId>,
) -> bool {
    let n = graph.len();
    let mut adj: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    for v in graph.node_ids() {
        for &p in graph.parents(v) {
            adj[v.ix()].push(p);
            adj[p.ix()].push(v);
        }
    }

    // Descendant closure of zs for collider activation.
    let mut z_anc = vec![false; n];
    {
        let mut stack: Vec<NodeId> = zs.iter().copied().collect();
        while let Some(v) = stack.pop() {
            if z_anc[v.ix()] {
                continue;
            }
            z_anc[v.ix()] = true;
            stack.extend_from_slice(graph.parents(v));
        }
    }

    let is_parent = |a: NodeId, b: NodeId| graph.parents(b).contains(&a);

    // DFS over simple paths from every x.
    #[allow(clippy::only_used_in_recursion, clippy::too_many_arguments)]
    fn dfs(
        graph: &CausalGraph,
        adj: &[Vec<NodeId>],
        z_anc: &[bool],
        zs: &BTreeSet<NodeId>,
        ys: &BTreeSet<NodeId>,
        is_parent: &dyn Fn(NodeId, NodeId) -> bool,
        path: &mut Vec<NodeId>,
        on_path: &mut Vec<bool>,
    ) -> bool {
        let here = *path.last().unwrap();
        if path.len() > 1 && ys.contains(&here) {
            // Check every intermediate node's blocking status.
            let active = (1..path.len() - 1).all(|i| {
                let (prev, node, next) = (path[i - 1], path[i], path[i + 1]);
                let collider = is_parent(prev, node) && is_parent(next, node);
                if collider {
                    z_anc[node.ix()]
                } else {
                    !zs.contains(&node)
                }
            });
            if active {
                return true;
            }
            // A longer continuation through a y node is still possible,
            // but any such path has this y as an intermediate node; keep
            // exploring.
        }
        for &next in &adj[here.ix()] {
            if on_path[next.ix()] {
                continue;
            }
            path.push(next);
            on_path[next.ix()] = true;
            if dfs(graph, adj, z_anc, zs, ys, is_parent, path, on_path) {
                return true;
            }
            on_path[next.ix()] = false;
            path.pop();
        }
        false
    }

    for &x in xs {
        let mut path = vec![x];
        let mut on_path = vec![false; n];
        on_path[x.ix()] = true;
        if dfs(
            graph,
            &adj,
            &z_anc,
            zs,
            ys,
            &is_parent,
            &mut path,
            &mut on_path,
        ) {
            return false;
        }
    }
    true
}

#[test]
fn matches_oracle_on_random_dags() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20240817);
    let mut disagreements = Vec::new();
    let mut cases = 0;
    let mut separated = 0;
    while cases < 1200 {
        let n = rng.gen_range(3..=8);
        let p = rng.gen_range(0.15..0.6);
        let (graph, ids) = random_dag(&mut rng, n, p);

        // Random disjoint X, Y, Z.
        let mut shuffled = ids.clone();
        shuffled.shuffle(&mut rng);
        let nx = rng.gen_range(1..=2.min(shuffled.len() - 1));
        let ny = rng.gen_range(1..=2.min(shuffled.len() - nx));
        let remaining = shuffled.len() - nx - ny;
        let nz = rng.gen_range(0..=remaining.min(3));
        let xs: BTreeSet<NodeId> = shuffled[..nx].iter().copied().collect();
        let ys: BTreeSet<NodeId> = shuffled[nx..nx + ny].iter().copied().collect();
        let zs: BTreeSet<NodeId> = shuffled[nx + ny..nx + ny + nz].iter().copied().collect();

        let fast = d_separated(&graph, &xs, &ys, &zs);
        let slow = oracle_d_separated(&graph, &xs, &ys, &zs);
        if fast != slow {
            disagreements.push(format!(
                "n={n} p={p:.2} xs={xs:?} ys={ys:?} zs={zs:?}: fast={fast} oracle={slow}"
            ));
        }
        separated += usize::from(slow);
        cases += 1;
    }
    assert!(
        disagreements.is_empty(),
        "{} disagreements, first: {}",
        disagreements.len(),
        disagreements[0]
    );
    // Sanity: the case mix exercises both outcomes.
    assert!(
        separated > 100 && separated < 1100,
        "separated = {separated}"
    );
    assert!(
        started.elapsed().as_secs() < 30,
        "oracle comparison took {:?}",
        started.elapsed()
    );
}
