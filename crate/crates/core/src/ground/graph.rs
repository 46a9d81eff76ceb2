//! Grounded rules and the grounded causal graph.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::error::{CarlError, Result};
use crate::instance::{InstanceBundle, Tuple};
use crate::lang::{AggFunc, AggRuleAst, BoundModel, Term};

use super::eval::eval_condition;

/// A grounded attribute `Attr[c1, ..., cn]`; node identity in the graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct GroundAttr {
    pub attr: String,
    pub args: Tuple,
}

impl GroundAttr {
    pub fn new(attr: impl Into<String>, args: &[&str]) -> Self {
        GroundAttr {
            attr: attr.into(),
            args: args.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl std::fmt::Display for GroundAttr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}[{}]", self.attr, self.args.join(","))
    }
}

/// One grounded rule instance; same-head groundings are merged only at
/// graph construction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct GroundedRule {
    pub head: GroundAttr,
    pub body: BTreeSet<GroundAttr>,
}

/// A grounded aggregate node with its full parent set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct AggGrounding {
    pub head: GroundAttr,
    pub agg: AggFunc,
    pub parents: BTreeSet<GroundAttr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Base,
    Aggregate,
    Embedding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn ix(self) -> usize {
        self.0 as usize
    }
}

/// Grounded causal DAG with canonical (lexicographic) node ordering and a
/// cached topological order. Immutable once built.
#[derive(Debug, Clone)]
pub struct CausalGraph {
    nodes: Vec<GroundAttr>,
    ids: HashMap<GroundAttr, NodeId>,
    parents: Vec<Vec<NodeId>>,
    children: Vec<Vec<NodeId>>,
    kind: Vec<NodeKind>,
    agg: Vec<Option<AggFunc>>,
    by_attr: BTreeMap<String, Vec<NodeId>>,
    topo: Vec<NodeId>,
}

impl CausalGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &GroundAttr {
        &self.nodes[id.ix()]
    }

    pub fn id(&self, node: &GroundAttr) -> Option<NodeId> {
        self.ids.get(node).copied()
    }

    pub fn parents(&self, id: NodeId) -> &[NodeId] {
        &self.parents[id.ix()]
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.children[id.ix()]
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.kind[id.ix()]
    }

    pub fn agg_func(&self, id: NodeId) -> Option<AggFunc> {
        self.agg[id.ix()]
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.parents(id).len() + self.children(id).len()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    /// Nodes of one attribute, in canonical order.
    pub fn nodes_of_attr(&self, attr: &str) -> &[NodeId] {
        self.by_attr.get(attr).map_or(&[], Vec::as_slice)
    }

    pub fn topo_order(&self) -> &[NodeId] {
        &self.topo
    }

    /// All nodes with a directed path to `target`, excluding `target`.
    pub fn ancestors(&self, target: NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<NodeId> = self.parents(target).to_vec();
        while let Some(n) = stack.pop() {
            if seen.insert(n) {
                stack.extend_from_slice(self.parents(n));
            }
        }
        seen
    }

    /// All nodes reachable from `source` by directed edges, excluding it.
    pub fn descendants(&self, source: NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<NodeId> = self.children(source).to_vec();
        while let Some(n) = stack.pop() {
            if seen.insert(n) {
                stack.extend_from_slice(self.children(n));
            }
        }
        seen
    }

    pub fn to_json(&self) -> serde_json::Value {
        let nodes: Vec<serde_json::Value> = self
            .node_ids()
            .map(|id| {
                serde_json::json!({
                    "attr": self.node(id).attr,
                    "args": self.node(id).args,
                    "kind": self.kind(id),
                })
            })
            .collect();
        let mut edges = Vec::new();
        for id in self.node_ids() {
            for p in self.parents(id) {
                edges.push(serde_json::json!({
                    "child": self.node(id).to_string(),
                    "parent": self.node(*p).to_string(),
                }));
            }
        }
        serde_json::json!({ "nodes": nodes, "edges": edges })
    }
}

/// Grounds every rule of a bound model; one grounded rule per satisfying
/// assignment of the head and body variables.
pub fn ground_rules(model: &BoundModel, bundle: &InstanceBundle) -> Vec<GroundedRule> {
    let mut out = BTreeSet::new();
    for rule in &model.model.rules {
        let free: Vec<String> = rule
            .rule_variables()
            .iter()
            .map(|s| s.to_string())
            .collect();
        for binding in eval_condition(bundle, &rule.condition, &free) {
            let lookup: BTreeMap<&str, &str> = free
                .iter()
                .map(String::as_str)
                .zip(binding.iter().map(String::as_str))
                .collect();
            let subst = |args: &[Term]| -> Tuple {
                args.iter()
                    .map(|t| match t {
                        Term::Var(v) => lookup[v.as_str()].to_string(),
                        Term::Const(c) => c.clone(),
                    })
                    .collect()
            };
            let head = GroundAttr {
                attr: rule.head.attribute.clone(),
                args: subst(&rule.head.args),
            };
            let body: BTreeSet<GroundAttr> = rule
                .body
                .iter()
                .map(|b| GroundAttr {
                    attr: b.attribute.clone(),
                    args: subst(&b.args),
                })
                .collect();
            if !in_skeleton(model, bundle, &head)
                || body.iter().any(|b| !in_skeleton(model, bundle, b))
            {
                continue;
            }
            if body.contains(&head) {
                continue; // cannot occur for bound acyclic models
            }
            out.insert(GroundedRule { head, body });
        }
    }
    out.into_iter().collect()
}

fn in_skeleton(model: &BoundModel, bundle: &InstanceBundle, atom: &GroundAttr) -> bool {
    let Some(over) = model.attr_over.get(&atom.attr) else {
        return false;
    };
    bundle
        .skeleton
        .get(over)
        .is_some_and(|s| s.contains(&atom.args))
}

/// Grounds one aggregate rule. `allowed_sources` (when given) restricts the
/// source atoms that may contribute to a parent set; aggregate heads whose
/// restricted parent set is empty are omitted.
pub fn ground_agg_rule(
    rule: &AggRuleAst,
    bundle: &InstanceBundle,
    allowed_sources: Option<&BTreeSet<Tuple>>,
) -> Vec<AggGrounding> {
    let target_vars: Vec<String> = rule.target.variables().map(String::from).collect();
    let source_vars: Vec<String> = rule.source.variables().map(String::from).collect();
    let mut free = target_vars.clone();
    free.extend(source_vars.iter().cloned());

    let mut grouped: BTreeMap<Tuple, BTreeSet<GroundAttr>> = BTreeMap::new();
    for binding in eval_condition(bundle, &rule.condition, &free) {
        let (head_args, source_args) = binding.split_at(target_vars.len());
        if let Some(allowed) = allowed_sources {
            if !allowed.contains(&source_args.to_vec()) {
                continue;
            }
        }
        grouped
            .entry(head_args.to_vec())
            .or_default()
            .insert(GroundAttr {
                attr: rule.source.attribute.clone(),
                args: source_args.to_vec(),
            });
    }
    grouped
        .into_iter()
        .map(|(args, parents)| AggGrounding {
            head: GroundAttr {
                attr: rule.target.attribute.clone(),
                args,
            },
            agg: rule.agg,
            parents,
        })
        .collect()
}

/// Merges groundings into the causal DAG: parents of a node are the union
/// of the bodies of all grounded rules sharing that head.
pub fn build_graph(grounded: &[GroundedRule], aggs: &[AggGrounding]) -> Result<CausalGraph> {
    let mut node_set: BTreeSet<GroundAttr> = BTreeSet::new();
    for r in grounded {
        node_set.insert(r.head.clone());
        node_set.extend(r.body.iter().cloned());
    }
    for a in aggs {
        node_set.insert(a.head.clone());
        node_set.extend(a.parents.iter().cloned());
    }

    let nodes: Vec<GroundAttr> = node_set.into_iter().collect();
    let ids: HashMap<GroundAttr, NodeId> = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), NodeId(i as u32)))
        .collect();

    let n = nodes.len();
    let mut parent_sets: Vec<BTreeSet<NodeId>> = vec![BTreeSet::new(); n];
    let mut kind = vec![NodeKind::Base; n];
    let mut agg = vec![None; n];

    for r in grounded {
        let h = ids[&r.head];
        for b in &r.body {
            parent_sets[h.ix()].insert(ids[b]);
        }
    }
    for a in aggs {
        let h = ids[&a.head];
        kind[h.ix()] = NodeKind::Aggregate;
        agg[h.ix()] = Some(a.agg);
        for p in &a.parents {
            parent_sets[h.ix()].insert(ids[p]);
        }
    }

    let parents: Vec<Vec<NodeId>> = parent_sets
        .into_iter()
        .map(|s| s.into_iter().collect())
        .collect();
    let mut children: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    for (child, ps) in parents.iter().enumerate() {
        for p in ps {
            children[p.ix()].push(NodeId(child as u32));
        }
    }
    for c in &mut children {
        c.sort();
    }

    let mut by_attr: BTreeMap<String, Vec<NodeId>> = BTreeMap::new();
    for (i, node) in nodes.iter().enumerate() {
        by_attr
            .entry(node.attr.clone())
            .or_default()
            .push(NodeId(i as u32));
    }

    // Kahn's algorithm; leftovers mean a cycle.
    let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut queue: Vec<NodeId> = indeg
        .iter()
        .enumerate()
        .filter(|(_, &d)| d == 0)
        .map(|(i, _)| NodeId(i as u32))
        .collect();
    let mut topo = Vec::with_capacity(n);
    let mut at = 0;
    while at < queue.len() {
        let v = queue[at];
        at += 1;
        topo.push(v);
        for &c in &children[v.ix()] {
            indeg[c.ix()] -= 1;
            if indeg[c.ix()] == 0 {
                queue.push(c);
            }
        }
    }
    if topo.len() != n {
        let stuck = indeg
            .iter()
            .position(|&d| d > 0)
            .map(|i| nodes[i].to_string())
            .unwrap_or_default();
        return Err(CarlError::Cycle(format!("node {stuck} lies on a cycle")));
    }

    Ok(CausalGraph {
        nodes,
        ids,
        parents,
        children,
        kind,
        agg,
        by_attr,
        topo,
    })
}
