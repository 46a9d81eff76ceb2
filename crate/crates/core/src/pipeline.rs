//! End-to-end query answering: ground the model, detect covariates and
//! peers, fit the embedding, build the unit table, and estimate.

use std::collections::BTreeSet;

use crate::analysis::{compute_peers, detect_covariates, CovariateSet, PeerMap};
use crate::embed::{fit_spec, EmbeddingKind, EmbeddingSpec, FitConfig};
use crate::error::Result;
use crate::estimate::{answer_ate, answer_effects, EffectResult, EstimatorConfig};
use crate::ground::{build_graph, eval_filter, ground_agg_rule, ground_rules, CausalGraph};
use crate::instance::{InstanceBundle, Tuple};
use crate::lang::{BoundModel, BoundQuery, Term};
use crate::unit_table::{
    build_unit_table, node_value, plan_unification, UnificationPlan, UnitTable,
};

#[derive(Debug, Clone)]
pub struct AnswerOptions {
    pub embedding: EmbeddingKind,
    /// Explicit moment order; `None` selects by cross-validation.
    pub moments_k: Option<usize>,
    pub estimator: EstimatorConfig,
    pub max_path_len: usize,
}

impl Default for AnswerOptions {
    fn default() -> Self {
        AnswerOptions {
            embedding: EmbeddingKind::Mean,
            moments_k: None,
            estimator: EstimatorConfig::default(),
            max_path_len: 4,
        }
    }
}

/// Everything the estimators need, kept for inspection and dumps.
pub struct Prepared {
    pub plan: UnificationPlan,
    pub graph: CausalGraph,
    pub covariates: CovariateSet,
    pub peers: PeerMap,
    pub table: UnitTable,
}

/// Observed attributes for adjustment: the schema's observed attributes
/// plus aggregates whose source is observed.
fn observed_attrs(
    bundle: &InstanceBundle,
    model: &BoundModel,
    plan: &UnificationPlan,
) -> BTreeSet<String> {
    let mut observed: BTreeSet<String> = bundle
        .schema
        .attributes
        .iter()
        .filter(|a| a.observed)
        .map(|a| a.name.clone())
        .collect();
    for rule in &model.model.agg_rules {
        if observed.contains(&rule.source.attribute) {
            observed.insert(rule.target.attribute.clone());
        }
    }
    if let Some(rule) = &plan.synthesized_rule {
        if observed.contains(&rule.source.attribute) {
            observed.insert(rule.target.attribute.clone());
        }
    }
    observed
}

/// Response units passing the query's WHERE filter; `None` when the query
/// has no filter. The filter must mention the response atom's variable.
fn filter_allowed_units(
    bundle: &InstanceBundle,
    query: &BoundQuery,
) -> Result<Option<BTreeSet<Tuple>>> {
    if query.ast.where_filter.is_empty() {
        return Ok(None);
    }
    let response_vars: Vec<String> = query
        .ast
        .response
        .args
        .iter()
        .filter_map(|t| match t {
            Term::Var(v) => Some(v.clone()),
            Term::Const(_) => None,
        })
        .collect();
    let filter_vars: BTreeSet<&str> = query
        .ast
        .where_filter
        .iter()
        .flat_map(|f| match f {
            crate::lang::FilterAtom::Pred(p) => p.variables().collect::<Vec<_>>(),
            crate::lang::FilterAtom::AttrEq(a, _) => a.variables().collect(),
        })
        .collect();
    let free: Vec<String> = response_vars
        .into_iter()
        .filter(|v| filter_vars.contains(v.as_str()))
        .collect();
    if free.is_empty() {
        return Err(crate::error::CarlError::Scope(
            "query filter must mention the response variable".into(),
        ));
    }
    Ok(Some(eval_filter(bundle, &query.ast.where_filter, &free)))
}

/// Grounds, analyzes, and flattens one query into its unit table.
pub fn prepare(
    bundle: &InstanceBundle,
    model: &BoundModel,
    query: &BoundQuery,
    opts: &AnswerOptions,
) -> Result<Prepared> {
    let plan = plan_unification(&bundle.schema, model, query, opts.max_path_len)?;
    let allowed = filter_allowed_units(bundle, query)?;

    let grounded = ground_rules(model, bundle);
    let mut aggs = Vec::new();
    for rule in &model.model.agg_rules {
        // The filter restricts the response aggregate's source atoms; other
        // declared aggregates ground in full.
        let restrict = if rule.target.attribute == plan.response_attr {
            allowed.as_ref()
        } else {
            None
        };
        aggs.extend(ground_agg_rule(rule, bundle, restrict));
    }
    if let Some(rule) = &plan.synthesized_rule {
        aggs.extend(ground_agg_rule(rule, bundle, allowed.as_ref()));
    }
    let graph = build_graph(&grounded, &aggs)?;

    let treatment_attr = &query.ast.treatment.attribute;
    let observed = observed_attrs(bundle, model, &plan);
    let covariates = detect_covariates(&graph, &observed, treatment_attr, &plan.response_attr)?;
    let peers = compute_peers(&graph, treatment_attr, &plan.response_attr);

    // Base (non-aggregated) responses apply the filter as a row filter;
    // aggregated responses already folded it into their groundings.
    let row_filter = if plan.synthesized_rule.is_none() && query.response_agg.is_none() {
        allowed.as_ref()
    } else {
        None
    };

    let spec = fit_embedding(
        bundle,
        &graph,
        &covariates,
        &peers,
        treatment_attr,
        opts,
        row_filter,
    )?;
    let table = build_unit_table(
        &graph,
        bundle,
        &plan.response_attr,
        treatment_attr,
        &covariates,
        &peers,
        &spec,
        row_filter,
    )?;
    Ok(Prepared {
        plan,
        graph,
        covariates,
        peers,
        table,
    })
}

#[allow(clippy::too_many_arguments)]
fn fit_embedding(
    bundle: &InstanceBundle,
    graph: &CausalGraph,
    covariates: &CovariateSet,
    peers: &PeerMap,
    treatment_attr: &str,
    opts: &AnswerOptions,
    row_filter: Option<&BTreeSet<Tuple>>,
) -> Result<EmbeddingSpec> {
    match opts.embedding {
        EmbeddingKind::Mean => Ok(EmbeddingSpec::mean()),
        EmbeddingKind::Median => Ok(EmbeddingSpec::median()),
        EmbeddingKind::Moments => {
            if let Some(k) = opts.moments_k {
                return Ok(EmbeddingSpec::moments(k));
            }
            let (vectors, responses) =
                peer_vectors(bundle, graph, covariates, peers, treatment_attr, row_filter)?;
            fit_spec(
                &vectors,
                EmbeddingKind::Moments,
                &FitConfig {
                    k_max: 4,
                    response: Some(responses),
                },
            )
        }
        EmbeddingKind::Padding => {
            let (vectors, _) =
                peer_vectors(bundle, graph, covariates, peers, treatment_attr, row_filter)?;
            fit_spec(&vectors, EmbeddingKind::Padding, &FitConfig::default())
        }
    }
}

fn peer_vectors(
    bundle: &InstanceBundle,
    graph: &CausalGraph,
    covariates: &CovariateSet,
    peers: &PeerMap,
    treatment_attr: &str,
    row_filter: Option<&BTreeSet<Tuple>>,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut vectors = Vec::new();
    let mut responses = Vec::new();
    for u in &covariates.per_unit {
        if row_filter.is_some_and(|a| !a.contains(&u.unit)) {
            continue;
        }
        let mut v: Vec<f64> = peers
            .peers(&u.unit)
            .iter()
            .filter_map(|p| bundle.numeric_value(treatment_attr, p))
            .collect();
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        vectors.push(v);
        responses.push(node_value(graph, bundle, u.response)?);
    }
    Ok((vectors, responses))
}

/// Runs the full pipeline and answers the query: a plain ATE when no peer
/// condition is present, the isolated/relational/overall triple otherwise.
pub fn answer(
    bundle: &InstanceBundle,
    model: &BoundModel,
    query: &BoundQuery,
    opts: &AnswerOptions,
) -> Result<(Prepared, EffectResult)> {
    let prepared = prepare(bundle, model, query, opts)?;
    let query_text = query.ast.to_string();
    let result = match &query.ast.peer_condition {
        None => answer_ate(&prepared.table, &opts.estimator, &query_text)?,
        Some(cnd) => answer_effects(&prepared.table, cnd, &opts.estimator, &query_text)?,
    };
    Ok((prepared, result))
}
