//! Covariate detection: per response unit, find the treated influencers and
//! an observed node set satisfying the backdoor-style d-separation
//! condition, then greedily minimize it.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::error::{CarlError, Result};
use crate::ground::{CausalGraph, NodeId};
use crate::instance::Tuple;

use super::dsep::d_separated;

/// Covariate selection for one response unit.
#[derive(Debug, Clone)]
pub struct UnitCovariates {
    pub unit: Tuple,
    pub response: NodeId,
    /// Treatment nodes with a directed path to the response node.
    pub treated: Vec<NodeId>,
    /// Observed adjustment set satisfying the d-separation condition.
    pub covariates: Vec<NodeId>,
    /// True when greedy pruning removed something from the default
    /// parent set.
    pub minimized: bool,
}

#[derive(Debug, Clone, Default)]
pub struct CovariateSet {
    pub per_unit: Vec<UnitCovariates>,
}

impl CovariateSet {
    pub fn for_unit(&self, unit: &[String]) -> Option<&UnitCovariates> {
        self.per_unit.iter().find(|u| u.unit == unit)
    }
}

/// Sufficiency check: response independent of the treated nodes' remaining
/// parents given the treated nodes and the candidate set.
fn condition_holds(
    graph: &CausalGraph,
    response: NodeId,
    treated: &BTreeSet<NodeId>,
    parents: &BTreeSet<NodeId>,
    z: &BTreeSet<NodeId>,
) -> bool {
    let xs: BTreeSet<NodeId> = [response].into_iter().collect();
    let mut cond: BTreeSet<NodeId> = treated.clone();
    cond.extend(z.iter().copied());
    cond.remove(&response);
    let ys: BTreeSet<NodeId> = parents
        .iter()
        .copied()
        .filter(|p| !cond.contains(p) && *p != response)
        .collect();
    d_separated(graph, &xs, &ys, &cond)
}

/// Detects covariates for every grounded response node of `response_attr`.
///
/// The default set is the union of the treated nodes' observed parents
/// (always sufficient when those parents are all observed); if that fails,
/// all observed non-descendants of the treated nodes are tried before
/// declaring the unit unidentifiable. Greedy pruning drops members in
/// descending degree order, re-verifying the condition at each step.
pub fn detect_covariates(
    graph: &CausalGraph,
    observed: &BTreeSet<String>,
    treatment_attr: &str,
    response_attr: &str,
) -> Result<CovariateSet> {
    let per_unit: Vec<Result<UnitCovariates>> = graph
        .nodes_of_attr(response_attr)
        .par_iter()
        .map(|&response| detect_for_unit(graph, observed, treatment_attr, response))
        .collect();
    let mut units = Vec::with_capacity(per_unit.len());
    for u in per_unit {
        units.push(u?);
    }
    Ok(CovariateSet { per_unit: units })
}

fn detect_for_unit(
    graph: &CausalGraph,
    observed: &BTreeSet<String>,
    treatment_attr: &str,
    response: NodeId,
) -> Result<UnitCovariates> {
    let unit = graph.node(response).args.clone();
    let treated: BTreeSet<NodeId> = graph
        .ancestors(response)
        .into_iter()
        .filter(|&n| graph.node(n).attr == treatment_attr)
        .collect();

    let mut parents: BTreeSet<NodeId> = BTreeSet::new();
    for &t in &treated {
        parents.extend(graph.parents(t).iter().copied());
    }

    let is_observed = |n: NodeId| {
        observed.contains(&graph.node(n).attr) && !treated.contains(&n) && n != response
    };

    let default: BTreeSet<NodeId> = parents
        .iter()
        .copied()
        .filter(|&n| is_observed(n))
        .collect();

    let mut z = default.clone();
    if !condition_holds(graph, response, &treated, &parents, &z) {
        // Some treated parent is unobserved; widen to every observed
        // non-descendant of the treated nodes.
        let mut forbidden: BTreeSet<NodeId> = treated.clone();
        forbidden.insert(response);
        for &t in &treated {
            forbidden.extend(graph.descendants(t));
        }
        z = graph
            .node_ids()
            .filter(|&n| is_observed(n) && !forbidden.contains(&n))
            .collect();
        if !condition_holds(graph, response, &treated, &parents, &z) {
            return Err(CarlError::Unidentifiable(format!(
                "no observed separator for response unit ({})",
                unit.join(",")
            )));
        }
    }

    // Greedy pruning, deterministic order: descending degree, ties by name.
    let mut order: Vec<NodeId> = z.iter().copied().collect();
    order.sort_by(|a, b| {
        graph
            .degree(*b)
            .cmp(&graph.degree(*a))
            .then_with(|| graph.node(*a).cmp(graph.node(*b)))
    });
    for candidate in order {
        let mut trial = z.clone();
        trial.remove(&candidate);
        if condition_holds(graph, response, &treated, &parents, &trial) {
            z = trial;
        }
    }
    debug_assert!(condition_holds(graph, response, &treated, &parents, &z));

    Ok(UnitCovariates {
        unit,
        response,
        treated: treated.into_iter().collect(),
        minimized: z != default,
        covariates: z.into_iter().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground::{build_graph, ground_rules, GroundAttr};
    use crate::instance::fixtures::toy_bundle;
    use crate::lang::{bind_model, parse_model};

    fn toy_graph() -> (CausalGraph, BTreeSet<String>) {
        let bundle = toy_bundle();
        let model = bind_model(
            &parse_model(
                "Prestige[A] <= Qualification[A] WHERE Person(A)\n\
                 Quality[S] <= Qualification[A] WHERE Author(A,S)\n\
                 Score[S] <= Prestige[A] WHERE Author(A,S)\n\
                 Score[S] <= Quality[S] WHERE Submission(S)\n",
            )
            .unwrap(),
            &bundle.schema,
        )
        .unwrap();
        let graph = build_graph(&ground_rules(&model, &bundle), &[]).unwrap();
        let observed = ["Prestige", "Qualification", "Score", "Blind"]
            .into_iter()
            .map(String::from)
            .collect();
        (graph, observed)
    }

    fn names(graph: &CausalGraph, ids: &[NodeId]) -> Vec<String> {
        ids.iter().map(|n| graph.node(*n).to_string()).collect()
    }

    #[test]
    fn score_query_covariates_match_worked_example() {
        let (graph, observed) = toy_graph();
        let covs = detect_covariates(&graph, &observed, "Prestige", "Score").unwrap();

        let s1 = covs.for_unit(&["s1".to_string()]).unwrap();
        assert_eq!(
            names(&graph, &s1.treated),
            vec!["Prestige[Bob]", "Prestige[Eva]"]
        );
        assert_eq!(
            names(&graph, &s1.covariates),
            vec!["Qualification[Bob]", "Qualification[Eva]"]
        );
        assert!(!s1.minimized);

        let s2 = covs.for_unit(&["s2".to_string()]).unwrap();
        assert_eq!(names(&graph, &s2.treated), vec!["Prestige[Eva]"]);
        assert_eq!(names(&graph, &s2.covariates), vec!["Qualification[Eva]"]);
    }

    #[test]
    fn parentless_treatment_needs_no_covariates() {
        use crate::ground::GroundedRule;
        // T[a] -> Y[a], T has no parents.
        let rules = vec![GroundedRule {
            head: GroundAttr::new("Y", &["a"]),
            body: [GroundAttr::new("T", &["a"])].into_iter().collect(),
        }];
        let graph = build_graph(&rules, &[]).unwrap();
        let observed = ["T", "Y"].into_iter().map(String::from).collect();
        let covs = detect_covariates(&graph, &observed, "T", "Y").unwrap();
        let unit = covs.for_unit(&["a".to_string()]).unwrap();
        assert!(unit.covariates.is_empty());
    }

    #[test]
    fn unobserved_confounder_with_no_separator_is_unidentifiable() {
        use crate::ground::GroundedRule;
        // U -> T -> Y and U -> Y with U unobserved: no observed set blocks
        // the backdoor.
        let rules = vec![
            GroundedRule {
                head: GroundAttr::new("T", &["a"]),
                body: [GroundAttr::new("U", &["a"])].into_iter().collect(),
            },
            GroundedRule {
                head: GroundAttr::new("Y", &["a"]),
                body: [GroundAttr::new("T", &["a"]), GroundAttr::new("U", &["a"])]
                    .into_iter()
                    .collect(),
            },
        ];
        let graph = build_graph(&rules, &[]).unwrap();
        let observed = ["T", "Y"].into_iter().map(String::from).collect();
        let err = detect_covariates(&graph, &observed, "T", "Y").unwrap_err();
        assert!(matches!(err, CarlError::Unidentifiable(_)), "{err}");
    }

    #[test]
    fn mediator_on_unobserved_backdoor_is_found() {
        use crate::ground::GroundedRule;
        // U -> T, U -> M -> Y, T -> Y; U unobserved, M observed: the
        // default (parents of T = {U}) fails but {M} separates.
        let rules = vec![
            GroundedRule {
                head: GroundAttr::new("T", &["a"]),
                body: [GroundAttr::new("U", &["a"])].into_iter().collect(),
            },
            GroundedRule {
                head: GroundAttr::new("M", &["a"]),
                body: [GroundAttr::new("U", &["a"])].into_iter().collect(),
            },
            GroundedRule {
                head: GroundAttr::new("Y", &["a"]),
                body: [GroundAttr::new("T", &["a"]), GroundAttr::new("M", &["a"])]
                    .into_iter()
                    .collect(),
            },
        ];
        let graph = build_graph(&rules, &[]).unwrap();
        let observed = ["T", "M", "Y"].into_iter().map(String::from).collect();
        let covs = detect_covariates(&graph, &observed, "T", "Y").unwrap();
        let unit = covs.for_unit(&["a".to_string()]).unwrap();
        assert_eq!(names(&graph, &unit.covariates), vec!["M[a]"]);
    }
}
