//! Name resolution and validation of parsed models and queries against a
//! schema: arity checks, role-type inference for variables, and the
//! non-recursion check on the attribute-level dependency graph.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{CarlError, Result};
use crate::schema::{SchemaDef, ValueDomain};

use super::ast::*;

/// A model whose names and arities are resolved and whose attribute-level
/// dependency relation is acyclic.
#[derive(Debug, Clone)]
pub struct BoundModel {
    pub model: ModelAst,
    /// Every attribute (schema and aggregate) to the predicate it is over.
    pub attr_over: BTreeMap<String, String>,
    /// body attribute -> set of head attributes it feeds.
    pub deps: BTreeMap<String, BTreeSet<String>>,
}

impl BoundModel {
    pub fn agg_rules_for<'a>(&'a self, target: &'a str) -> impl Iterator<Item = &'a AggRuleAst> {
        self.model
            .agg_rules
            .iter()
            .filter(move |r| r.target.attribute == target)
    }
}

/// Per-variable entity typing inferred from a condition.
fn type_condition_vars(
    condition: &[PredAtom],
    schema: &SchemaDef,
) -> Result<BTreeMap<String, String>> {
    let mut types: BTreeMap<String, String> = BTreeMap::new();
    for atom in condition {
        let pred = schema
            .predicate(&atom.predicate)
            .ok_or_else(|| CarlError::UnknownName(format!("predicate `{}`", atom.predicate)))?;
        if atom.args.len() != pred.arity() {
            return Err(CarlError::Arity(format!(
                "{} expects {} arguments, found {}",
                atom.predicate,
                pred.arity(),
                atom.args.len()
            )));
        }
        for (term, role) in atom.args.iter().zip(&pred.roles) {
            if let Term::Var(v) = term {
                match types.get(v) {
                    None => {
                        types.insert(v.clone(), role.clone());
                    }
                    Some(prev) if prev == role => {}
                    Some(prev) => {
                        return Err(CarlError::Arity(format!(
                            "variable `{v}` used both as {prev} and as {role}"
                        )))
                    }
                }
            }
        }
    }
    Ok(types)
}

/// Checks an attribute atom against the schema, given variable typings.
fn check_attr_atom(
    atom: &AttrAtom,
    schema: &SchemaDef,
    types: &BTreeMap<String, String>,
) -> Result<()> {
    let attr = schema
        .attribute(&atom.attribute)
        .ok_or_else(|| CarlError::UnknownName(format!("attribute `{}`", atom.attribute)))?;
    let pred = schema.predicate(&attr.over).unwrap();
    if atom.args.len() != pred.arity() {
        return Err(CarlError::Arity(format!(
            "{} expects {} arguments, found {}",
            atom.attribute,
            pred.arity(),
            atom.args.len()
        )));
    }
    for (term, role) in atom.args.iter().zip(&pred.roles) {
        if let Term::Var(v) = term {
            if let Some(t) = types.get(v) {
                if t != role {
                    return Err(CarlError::Arity(format!(
                        "variable `{v}` in {} is a {t}, expected {role}",
                        atom.attribute
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Resolves every name in the model, infers aggregate attributes, and
/// rejects recursive dependency structures.
pub fn bind_model(model: &ModelAst, schema: &SchemaDef) -> Result<BoundModel> {
    let mut attr_over: BTreeMap<String, String> = schema
        .attributes
        .iter()
        .map(|a| (a.name.clone(), a.over.clone()))
        .collect();

    for rule in &model.rules {
        let types = type_condition_vars(&rule.condition, schema)?;
        check_attr_atom(&rule.head, schema, &types)?;
        for b in &rule.body {
            check_attr_atom(b, schema, &types)?;
        }
    }

    for rule in &model.agg_rules {
        let types = type_condition_vars(&rule.condition, schema)?;
        check_attr_atom(&rule.source, schema, &types)?;
        // Infer the predicate the aggregate attribute ranges over from the
        // types of the target's variables.
        let target_types: Vec<String> = rule
            .target
            .args
            .iter()
            .map(|t| match t {
                Term::Var(v) => types.get(v).cloned().ok_or_else(|| {
                    CarlError::Scope(format!(
                        "aggregate head variable `{v}` not typed by the condition"
                    ))
                }),
                Term::Const(_) => Err(CarlError::Arity(
                    "aggregate heads take variables, not constants".into(),
                )),
            })
            .collect::<Result<_>>()?;
        let over = match target_types.as_slice() {
            [single] => single.clone(),
            _ => {
                return Err(CarlError::Arity(format!(
                    "aggregate `{}` must range over a single entity",
                    rule.target.attribute
                )))
            }
        };
        match attr_over.get(&rule.target.attribute) {
            None => {
                attr_over.insert(rule.target.attribute.clone(), over);
            }
            Some(prev) if *prev == over => {}
            Some(prev) => {
                return Err(CarlError::Arity(format!(
                    "aggregate `{}` declared over both {prev} and {over}",
                    rule.target.attribute
                )))
            }
        }
    }

    // Attribute-level dependency graph; recursion is rejected.
    let mut deps: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for rule in &model.rules {
        for b in &rule.body {
            deps.entry(b.attribute.clone())
                .or_default()
                .insert(rule.head.attribute.clone());
        }
    }
    for rule in &model.agg_rules {
        deps.entry(rule.source.attribute.clone())
            .or_default()
            .insert(rule.target.attribute.clone());
    }
    if let Some(cycle) = find_cycle(&deps) {
        return Err(CarlError::Recursion(format!(
            "attribute dependency cycle: {}",
            cycle.join(" -> ")
        )));
    }

    Ok(BoundModel {
        model: model.clone(),
        attr_over,
        deps,
    })
}

fn find_cycle(deps: &BTreeMap<String, BTreeSet<String>>) -> Option<Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Grey,
        Black,
    }
    let mut marks: BTreeMap<&str, Mark> = BTreeMap::new();
    let mut stack: Vec<&str> = Vec::new();

    fn visit<'a>(
        node: &'a str,
        deps: &'a BTreeMap<String, BTreeSet<String>>,
        marks: &mut BTreeMap<&'a str, Mark>,
        stack: &mut Vec<&'a str>,
    ) -> Option<Vec<String>> {
        match marks.get(node).copied().unwrap_or(Mark::White) {
            Mark::Black => return None,
            Mark::Grey => {
                let start = stack.iter().position(|n| *n == node).unwrap_or(0);
                let mut cycle: Vec<String> = stack[start..].iter().map(|s| s.to_string()).collect();
                cycle.push(node.to_string());
                return Some(cycle);
            }
            Mark::White => {}
        }
        marks.insert(node, Mark::Grey);
        stack.push(node);
        if let Some(next) = deps.get(node) {
            for n in next {
                if let Some(cycle) = visit(n, deps, marks, stack) {
                    return Some(cycle);
                }
            }
        }
        stack.pop();
        marks.insert(node, Mark::Black);
        None
    }

    let keys: Vec<&str> = deps.keys().map(String::as_str).collect();
    for k in keys {
        if let Some(cycle) = visit(k, deps, &mut marks, &mut stack) {
            return Some(cycle);
        }
    }
    None
}

/// A query resolved against a schema and bound model.
#[derive(Debug, Clone)]
pub struct BoundQuery {
    pub ast: QueryAst,
    /// Base response attribute (e.g. `Score` for `AVG_Score`).
    pub response_base: String,
    /// Present iff the query names an aggregated response.
    pub response_agg: Option<AggFunc>,
    /// Predicate of the (base) response attribute.
    pub response_over: String,
    /// Predicate of the treatment attribute.
    pub treatment_over: String,
}

pub fn bind_query(query: &QueryAst, schema: &SchemaDef, model: &BoundModel) -> Result<BoundQuery> {
    let treatment = schema
        .attribute(&query.treatment.attribute)
        .ok_or_else(|| {
            CarlError::UnknownName(format!("attribute `{}`", query.treatment.attribute))
        })?;
    if treatment.domain != ValueDomain::Binary {
        return Err(CarlError::Domain(format!(
            "treatment attribute `{}` must have binary domain",
            treatment.name
        )));
    }

    let (response_base, response_agg) = match schema.attribute(&query.response.attribute) {
        Some(a) => (a.name.clone(), None),
        None => match query.response.agg_prefix() {
            Some((agg, base)) => {
                let base_attr = schema.attribute(base).ok_or_else(|| {
                    CarlError::UnknownName(format!("attribute `{}`", query.response.attribute))
                })?;
                (base_attr.name.clone(), Some(agg))
            }
            None => {
                return Err(CarlError::UnknownName(format!(
                    "attribute `{}`",
                    query.response.attribute
                )))
            }
        },
    };

    for f in &query.where_filter {
        match f {
            FilterAtom::Pred(p) => {
                let pred = schema.predicate(&p.predicate).ok_or_else(|| {
                    CarlError::UnknownName(format!("predicate `{}`", p.predicate))
                })?;
                if p.args.len() != pred.arity() {
                    return Err(CarlError::Arity(format!(
                        "{} expects {} arguments",
                        p.predicate,
                        pred.arity()
                    )));
                }
            }
            FilterAtom::AttrEq(a, _) => {
                let attr = schema.attribute(&a.attribute).ok_or_else(|| {
                    CarlError::UnknownName(format!("attribute `{}`", a.attribute))
                })?;
                let arity = schema.predicate(&attr.over).unwrap().arity();
                if a.args.len() != arity {
                    return Err(CarlError::Arity(format!(
                        "{} expects {arity} arguments",
                        a.attribute
                    )));
                }
            }
        }
    }

    let response_over = schema.attribute(&response_base).unwrap().over.clone();
    let _ = model; // model participates via attr_over when the agg is declared
    Ok(BoundQuery {
        ast: query.clone(),
        response_base,
        response_agg,
        response_over,
        treatment_over: treatment.over.clone(),
    })
}
