//! Unifying treated and response units and flattening the relational
//! instance into one row per unit: response, own treatment, embedded peer
//! treatments, and embedded covariates.

use std::collections::BTreeSet;

use crate::analysis::{find_relational_paths, CovariateSet, PeerMap, RelationalPath};
use crate::embed::{embed, EmbeddingSpec};
use crate::error::{CarlError, Result};
use crate::ground::{CausalGraph, NodeId, NodeKind};
use crate::instance::{InstanceBundle, Tuple};
use crate::lang::{AggFunc, AggRuleAst, AttrAtom, BoundModel, BoundQuery, PredAtom, Term};
use crate::schema::{PredicateKind, SchemaDef, ValueDomain};
use crate::value::Value;

/// How treated and response units are brought onto the same index set.
#[derive(Debug, Clone)]
pub struct UnificationPlan {
    /// Path the synthesized aggregate follows; `None` when the units
    /// already coincide.
    pub path: Option<RelationalPath>,
    pub agg: AggFunc,
    /// Aggregate rule to ground in addition to the model's rules; `None`
    /// when the model already provides the response or no aggregation is
    /// needed.
    pub synthesized_rule: Option<AggRuleAst>,
    /// Attribute the unit table's response column reads from.
    pub response_attr: String,
    /// Predicate whose constants index the unit table rows.
    pub unit_predicate: String,
}

/// Decides whether and how to aggregate the response onto the treated
/// units (shortest relational path, default AVG).
pub fn plan_unification(
    schema: &SchemaDef,
    model: &BoundModel,
    query: &BoundQuery,
    max_path_len: usize,
) -> Result<UnificationPlan> {
    let treatment_pred = &query.treatment_over;
    let response_pred = &query.response_over;

    if let Some(agg) = query.response_agg {
        let name = query.ast.response.attribute.clone();
        if model.agg_rules_for(&name).next().is_some() {
            let over = model.attr_over[&name].clone();
            if over != *treatment_pred {
                return Err(CarlError::NotConnected(format!(
                    "aggregated response `{name}` ranges over {over}, treatment over {treatment_pred}"
                )));
            }
            return Ok(UnificationPlan {
                path: None,
                agg,
                synthesized_rule: None,
                response_attr: name,
                unit_predicate: over,
            });
        }
        let path = shortest_path(schema, treatment_pred, response_pred, max_path_len)?;
        let rule = synthesize_agg_rule(schema, &name, agg, &query.response_base, &path)?;
        return Ok(UnificationPlan {
            path: Some(path),
            agg,
            synthesized_rule: Some(rule),
            response_attr: name,
            unit_predicate: treatment_pred.clone(),
        });
    }

    if treatment_pred == response_pred {
        return Ok(UnificationPlan {
            path: None,
            agg: AggFunc::Avg,
            synthesized_rule: None,
            response_attr: query.response_base.clone(),
            unit_predicate: treatment_pred.clone(),
        });
    }

    let path = shortest_path(schema, treatment_pred, response_pred, max_path_len)?;
    let name = format!("{}_{}", AggFunc::Avg.name(), query.response_base);
    let rule = synthesize_agg_rule(schema, &name, AggFunc::Avg, &query.response_base, &path)?;
    Ok(UnificationPlan {
        path: Some(path),
        agg: AggFunc::Avg,
        synthesized_rule: Some(rule),
        response_attr: name,
        unit_predicate: treatment_pred.clone(),
    })
}

fn shortest_path(
    schema: &SchemaDef,
    treatment_pred: &str,
    response_pred: &str,
    max_path_len: usize,
) -> Result<RelationalPath> {
    let paths = find_relational_paths(schema, treatment_pred, response_pred, max_path_len);
    paths.into_iter().next().ok_or_else(|| {
        CarlError::NotConnected(format!(
            "no relational path from {treatment_pred} to {response_pred} within {max_path_len} hops"
        ))
    })
}

/// `AGG_Y[X0] <= Y[Xn] WHERE R1(X0,X1), ..., Rn(Xn-1,Xn)` along the path;
/// relationship roles off the traversal get fresh existential variables.
fn synthesize_agg_rule(
    schema: &SchemaDef,
    target_name: &str,
    agg: AggFunc,
    source_attr: &str,
    path: &RelationalPath,
) -> Result<AggRuleAst> {
    let entity_var = |i: usize| Term::Var(format!("U{i}"));
    let mut condition: Vec<PredAtom> = Vec::new();
    let mut fresh = 0usize;
    for (i, step) in path.steps.iter().enumerate() {
        let rel = schema.predicate(&step.relationship).unwrap();
        let args: Vec<Term> = (0..rel.arity())
            .map(|pos| {
                if pos == step.from_role {
                    entity_var(i)
                } else if pos == step.to_role {
                    entity_var(i + 1)
                } else {
                    fresh += 1;
                    Term::Var(format!("W{fresh}"))
                }
            })
            .collect();
        condition.push(PredAtom::new(step.relationship.clone(), args));
    }
    if path.steps.is_empty() {
        // Same-entity aggregation still needs a condition to range over.
        let entity = &path.entities[0];
        if schema.predicate(entity).map(|p| p.kind) != Some(PredicateKind::Entity) {
            return Err(CarlError::NotConnected(format!(
                "cannot synthesize an aggregate anchored at relationship {entity}"
            )));
        }
        condition.push(PredAtom::new(entity.clone(), vec![entity_var(0)]));
    }
    let last = path.steps.len();
    let source_over = &schema.attribute(source_attr).unwrap().over;
    if schema.predicate(source_over).map(|p| p.kind) != Some(PredicateKind::Entity) {
        return Err(CarlError::NotConnected(format!(
            "response attribute `{source_attr}` is not entity-anchored; cannot aggregate it"
        )));
    }
    Ok(AggRuleAst {
        agg,
        target: AttrAtom::new(target_name, vec![entity_var(0)]),
        source: AttrAtom::new(source_attr, vec![entity_var(last)]),
        condition,
    })
}

/// One covariate column group: an attribute either of the unit itself
/// (single scalar channel per value channel) or embedded over the unit's
/// other covariate nodes.
#[derive(Debug, Clone)]
pub struct CovGroup {
    pub attr: String,
    pub own: bool,
    /// Column-major data, each column `n_units` long.
    pub cols: Vec<Vec<f64>>,
    pub col_names: Vec<String>,
}

/// Flat per-unit table; all columns share the row index.
#[derive(Debug, Clone)]
pub struct UnitTable {
    pub units: Vec<Tuple>,
    pub response: Vec<f64>,
    pub treatment: Vec<f64>,
    pub peer_counts: Vec<usize>,
    /// Number of treated peers per row (the observed peer exposure).
    pub peer_treated_counts: Vec<usize>,
    /// Embedded peer-treatment channels, column-major.
    pub peer_embed_cols: Vec<Vec<f64>>,
    pub cov_groups: Vec<CovGroup>,
    pub spec: EmbeddingSpec,
    pub response_attr: String,
    pub treatment_attr: String,
}

impl UnitTable {
    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn covariate_attrs(&self) -> Vec<String> {
        let mut names: Vec<String> = self.cov_groups.iter().map(|g| g.attr.clone()).collect();
        names.dedup();
        names
    }

    /// CSV dump: `unit,response,treatment,psiT_*,Z_*,peer_count`.
    pub fn to_csv(&self) -> String {
        let mut header = vec!["unit".to_string(), "response".into(), "treatment".into()];
        for i in 0..self.peer_embed_cols.len() {
            header.push(format!("psiT_{i}"));
        }
        for g in &self.cov_groups {
            header.extend(g.col_names.iter().cloned());
        }
        header.push("peer_count".into());

        let mut out = header.join(",") + "\n";
        for row in 0..self.n_units() {
            let mut fields = vec![
                self.units[row].join("|"),
                fmt_num(self.response[row]),
                fmt_num(self.treatment[row]),
            ];
            for col in &self.peer_embed_cols {
                fields.push(fmt_num(col[row]));
            }
            for g in &self.cov_groups {
                for col in &g.cols {
                    fields.push(fmt_num(col[row]));
                }
            }
            fields.push(self.peer_counts[row].to_string());
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

fn fmt_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Numeric value of a grounded node: instance lookup for base nodes, the
/// aggregate function over parent values for aggregate nodes.
pub fn node_value(graph: &CausalGraph, bundle: &InstanceBundle, id: NodeId) -> Result<f64> {
    match graph.kind(id) {
        NodeKind::Base => {
            let node = graph.node(id);
            bundle.numeric_value(&node.attr, &node.args).ok_or_else(|| {
                CarlError::MissingValue(format!("{node} has no numeric observed value"))
            })
        }
        NodeKind::Aggregate => {
            let func = graph
                .agg_func(id)
                .expect("aggregate node carries its function");
            let values: Vec<f64> = graph
                .parents(id)
                .iter()
                .map(|&p| node_value(graph, bundle, p))
                .collect::<Result<_>>()?;
            Ok(func.apply(&values))
        }
        NodeKind::Embedding => Err(CarlError::MissingValue(format!(
            "embedding node {} carries no scalar value",
            graph.node(id)
        ))),
    }
}

/// Per-channel numeric expansion of an attribute value: identity for
/// numeric domains, one-hot over all but the last level for categoricals.
fn value_channels(domain: &ValueDomain) -> Vec<String> {
    match domain {
        ValueDomain::Categorical(levels) => levels[..levels.len() - 1]
            .iter()
            .map(|l| format!("={l}"))
            .collect(),
        _ => vec![String::new()],
    }
}

fn channel_values(value: &Value, domain: &ValueDomain) -> Vec<f64> {
    match domain {
        ValueDomain::Categorical(levels) => levels[..levels.len() - 1]
            .iter()
            .map(|l| match value {
                Value::Str(s) if s == l => 1.0,
                _ => 0.0,
            })
            .collect(),
        _ => vec![value.as_f64().unwrap_or(f64::NAN)],
    }
}

/// Builds the unit table. `allowed_units`, when given, keeps only those
/// rows (response units failing a query filter are dropped upstream).
#[allow(clippy::too_many_arguments)]
pub fn build_unit_table(
    graph: &CausalGraph,
    bundle: &InstanceBundle,
    response_attr: &str,
    treatment_attr: &str,
    covs: &CovariateSet,
    peers: &PeerMap,
    spec: &EmbeddingSpec,
    allowed_units: Option<&BTreeSet<Tuple>>,
) -> Result<UnitTable> {
    let selected: Vec<&crate::analysis::UnitCovariates> = covs
        .per_unit
        .iter()
        .filter(|u| allowed_units.is_none_or(|a| a.contains(&u.unit)))
        .collect();

    let n = selected.len();
    let mut units = Vec::with_capacity(n);
    let mut response = Vec::with_capacity(n);
    let mut treatment = Vec::with_capacity(n);
    let mut peer_counts = Vec::with_capacity(n);
    let mut peer_treated_counts = Vec::with_capacity(n);
    let mut peer_vectors: Vec<Vec<f64>> = Vec::with_capacity(n);

    for u in &selected {
        units.push(u.unit.clone());
        response.push(node_value(graph, bundle, u.response)?);
        let t = bundle
            .numeric_value(treatment_attr, &u.unit)
            .ok_or_else(|| {
                CarlError::MissingValue(format!("{treatment_attr}[{}] missing", u.unit.join(",")))
            })?;
        if t != 0.0 && t != 1.0 {
            return Err(CarlError::Domain(format!(
                "{treatment_attr}[{}] = {t} is not binary",
                u.unit.join(",")
            )));
        }
        treatment.push(t);

        let mut values: Vec<f64> = peers
            .peers(&u.unit)
            .iter()
            .map(|p| {
                bundle.numeric_value(treatment_attr, p).ok_or_else(|| {
                    CarlError::MissingValue(format!("{treatment_attr}[{}] missing", p.join(",")))
                })
            })
            .collect::<Result<_>>()?;
        values.sort_by(|a, b| b.partial_cmp(a).unwrap());
        peer_counts.push(values.len());
        peer_treated_counts.push(values.iter().filter(|&&v| v == 1.0).count());
        peer_vectors.push(values);
    }

    let mut peer_embed_cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); spec.dim()];
    for v in &peer_vectors {
        let e = embed(v, spec)?;
        for (col, val) in peer_embed_cols.iter_mut().zip(&e.values) {
            col.push(*val);
        }
    }

    // Covariate groups: the union over units of (attribute, own/peer)
    // buckets, so every row has the same columns. A unit's own node
    // contributes a scalar channel; the remaining nodes are embedded per
    // attribute with the location-only variant of the spec.
    let mut group_keys: BTreeSet<(String, bool)> = BTreeSet::new();
    for u in &selected {
        for &c in &u.covariates {
            let node = graph.node(c);
            group_keys.insert((node.attr.clone(), node.args == u.unit));
        }
    }

    let cov_spec = spec.without_count();
    let mut cov_groups = Vec::new();
    for (attr, own) in group_keys {
        let domain = bundle
            .schema
            .attribute(&attr)
            .map(|a| a.domain.clone())
            .unwrap_or(ValueDomain::Real);
        let channels = value_channels(&domain);
        let width = if own {
            channels.len()
        } else {
            cov_spec.dim() * channels.len()
        };
        let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); width];
        for u in &selected {
            let nodes: Vec<NodeId> = u
                .covariates
                .iter()
                .copied()
                .filter(|&c| {
                    let node = graph.node(c);
                    node.attr == attr && (node.args == u.unit) == own
                })
                .collect();
            if own {
                // At most one node: the unit's own grounding.
                let vals = match nodes.first() {
                    Some(&c) => {
                        let node = graph.node(c);
                        match graph.kind(c) {
                            NodeKind::Base => {
                                let v = bundle.value(&attr, &node.args).ok_or_else(|| {
                                    CarlError::MissingValue(format!("{node} missing"))
                                })?;
                                channel_values(v, &domain)
                            }
                            _ => vec![node_value(graph, bundle, c)?],
                        }
                    }
                    None => vec![0.0; channels.len()],
                };
                for (col, v) in cols.iter_mut().zip(vals) {
                    col.push(v);
                }
            } else {
                for (ci, _) in channels.iter().enumerate() {
                    let mut values: Vec<f64> = nodes
                        .iter()
                        .map(|&c| {
                            let node = graph.node(c);
                            match graph.kind(c) {
                                NodeKind::Base => {
                                    let v = bundle.value(&attr, &node.args).ok_or_else(|| {
                                        CarlError::MissingValue(format!("{node} missing"))
                                    })?;
                                    Ok(channel_values(v, &domain)[ci])
                                }
                                _ => node_value(graph, bundle, c),
                            }
                        })
                        .collect::<Result<_>>()?;
                    values.sort_by(|a, b| b.partial_cmp(a).unwrap());
                    let e = embed(&values, &cov_spec)?;
                    for (k, v) in e.values.iter().enumerate() {
                        cols[ci * cov_spec.dim() + k].push(*v);
                    }
                }
            }
        }
        let col_names: Vec<String> = if own {
            channels.iter().map(|c| format!("Zown_{attr}{c}")).collect()
        } else {
            let mut names = Vec::new();
            for c in &channels {
                for k in 0..cov_spec.dim() {
                    names.push(format!("Z_{attr}{c}_{k}"));
                }
            }
            names
        };
        cov_groups.push(CovGroup {
            attr,
            own,
            cols,
            col_names,
        });
    }

    Ok(UnitTable {
        units,
        response,
        treatment,
        peer_counts,
        peer_treated_counts,
        peer_embed_cols,
        cov_groups,
        spec: spec.clone(),
        response_attr: response_attr.to_string(),
        treatment_attr: treatment_attr.to_string(),
    })
}
