//! Grounding: evaluating rule conditions against the instance and
//! materializing the grounded causal graph.

mod eval;
mod graph;

pub use eval::{eval_condition, eval_filter, Binding};
pub use graph::{
    build_graph, ground_agg_rule, ground_rules, AggGrounding, CausalGraph, GroundAttr,
    GroundedRule, NodeId, NodeKind,
};
