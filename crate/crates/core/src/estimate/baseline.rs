//! Naive baseline: flatten the instance into one universal table by
//! joining the relations connecting treatment and response, then estimate
//! the ATE by logistic-propensity stratification as if rows were i.i.d.
//! units. Kept for comparison; it ignores the interference structure.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::analysis::find_relational_paths;
use crate::error::{CarlError, Result};
use crate::ground::eval_filter;
use crate::instance::InstanceBundle;
use crate::lang::{BoundQuery, FilterAtom, PredAtom, Term};
use crate::linalg;
use crate::schema::ValueDomain;

use super::effects::EffectResult;
use super::fitting::EstimatorConfig;

#[derive(Debug)]
struct UniversalTable {
    treatment: Vec<f64>,
    response: Vec<f64>,
    covariates: Vec<Vec<f64>>, // column-major
    covariate_names: Vec<String>,
}

fn build_universal(bundle: &InstanceBundle, query: &BoundQuery) -> Result<UniversalTable> {
    let schema = &bundle.schema;
    let paths = find_relational_paths(schema, &query.treatment_over, &query.response_over, 4);
    let path = paths.into_iter().next().ok_or_else(|| {
        CarlError::JoinEmpty("treatment and response predicates do not join".into())
    })?;

    let entity_var = |i: usize| format!("U{i}");
    let mut atoms: Vec<FilterAtom> = Vec::new();
    let mut fresh = 0usize;
    for (i, step) in path.steps.iter().enumerate() {
        let rel = schema.predicate(&step.relationship).unwrap();
        let args: Vec<Term> = (0..rel.arity())
            .map(|pos| {
                if pos == step.from_role {
                    Term::Var(entity_var(i))
                } else if pos == step.to_role {
                    Term::Var(entity_var(i + 1))
                } else {
                    fresh += 1;
                    Term::Var(format!("W{fresh}"))
                }
            })
            .collect();
        atoms.push(FilterAtom::Pred(PredAtom::new(
            step.relationship.clone(),
            args,
        )));
    }
    if path.steps.is_empty() {
        atoms.push(FilterAtom::Pred(PredAtom::new(
            path.entities[0].clone(),
            vec![Term::Var(entity_var(0))],
        )));
    }

    // Query filter, with the response variable renamed onto the join.
    let response_var = query.ast.response.args.first().and_then(|t| match t {
        Term::Var(v) => Some(v.clone()),
        Term::Const(_) => None,
    });
    let last_var = entity_var(path.steps.len());
    for f in &query.ast.where_filter {
        let remap = |args: &[Term]| -> Vec<Term> {
            args.iter()
                .map(|t| match t {
                    Term::Var(v) if Some(v) == response_var.as_ref() => Term::Var(last_var.clone()),
                    other => other.clone(),
                })
                .collect()
        };
        atoms.push(match f {
            FilterAtom::Pred(p) => {
                FilterAtom::Pred(PredAtom::new(p.predicate.clone(), remap(&p.args)))
            }
            FilterAtom::AttrEq(a, lit) => FilterAtom::AttrEq(
                crate::lang::AttrAtom::new(a.attribute.clone(), remap(&a.args)),
                lit.clone(),
            ),
        });
    }

    let free: Vec<String> = (0..=path.steps.len()).map(entity_var).collect();
    let rows = eval_filter(bundle, &atoms, &free);
    if rows.is_empty() {
        return Err(CarlError::JoinEmpty(
            "universal join produced no rows".into(),
        ));
    }

    // Observed numeric attributes of each entity on the path, excluding the
    // treatment and response columns themselves.
    let mut cov_specs: Vec<(usize, String, ValueDomain)> = Vec::new();
    for (i, entity) in path.entities.iter().enumerate() {
        for attr in &schema.attributes {
            if !attr.observed || attr.over != *entity {
                continue;
            }
            if (i == 0 && attr.name == query.ast.treatment.attribute)
                || (i == path.steps.len() && attr.name == query.response_base)
            {
                continue;
            }
            cov_specs.push((i, attr.name.clone(), attr.domain.clone()));
        }
    }

    let mut treatment = Vec::with_capacity(rows.len());
    let mut response = Vec::with_capacity(rows.len());
    let mut covariates: Vec<Vec<f64>> = Vec::new();
    let mut covariate_names = Vec::new();
    for (i, name, domain) in &cov_specs {
        match domain {
            ValueDomain::Categorical(levels) => {
                for l in &levels[..levels.len() - 1] {
                    covariate_names.push(format!("{name}={l}@U{i}"));
                    covariates.push(Vec::with_capacity(rows.len()));
                }
            }
            _ => {
                covariate_names.push(format!("{name}@U{i}"));
                covariates.push(Vec::with_capacity(rows.len()));
            }
        }
    }

    for row in &rows {
        let t = bundle
            .numeric_value(&query.ast.treatment.attribute, &row[0..1])
            .ok_or_else(|| CarlError::MissingValue("treatment value".into()))?;
        treatment.push(t);
        let y_key = &row[path.steps.len()..path.steps.len() + 1];
        let y = bundle
            .numeric_value(&query.response_base, y_key)
            .ok_or_else(|| CarlError::MissingValue("response value".into()))?;
        response.push(y);
        let mut col = 0;
        for (i, name, domain) in &cov_specs {
            let key = &row[*i..*i + 1];
            let value = bundle
                .value(name, key)
                .ok_or_else(|| CarlError::MissingValue(format!("{name} value")))?;
            match domain {
                ValueDomain::Categorical(levels) => {
                    for l in &levels[..levels.len() - 1] {
                        covariates[col].push(match value {
                            crate::value::Value::Str(s) if s == l => 1.0,
                            _ => 0.0,
                        });
                        col += 1;
                    }
                }
                _ => {
                    covariates[col].push(value.as_f64().unwrap_or(0.0));
                    col += 1;
                }
            }
        }
    }

    Ok(UniversalTable {
        treatment,
        response,
        covariates,
        covariate_names,
    })
}

/// Logistic regression by iteratively reweighted least squares with a tiny
/// ridge for numeric stability.
fn logistic_fit(x: &DMatrix<f64>, y: &[f64]) -> DVector<f64> {
    let (n, d) = (x.nrows(), x.ncols());
    let mut beta = DVector::zeros(d);
    for _ in 0..25 {
        let eta = x * &beta;
        let p: DVector<f64> = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
        let w: Vec<f64> = p.iter().map(|pi| (pi * (1.0 - pi)).max(1e-8)).collect();
        let mut xtwx = DMatrix::zeros(d, d);
        let mut xtz = DVector::zeros(d);
        for r in 0..n {
            let xr = x.row(r);
            let resid = y[r] - p[r];
            for a in 0..d {
                xtz[a] += xr[a] * (w[r] * (eta[r] + resid / w[r]));
                for b in 0..d {
                    xtwx[(a, b)] += xr[a] * w[r] * xr[b];
                }
            }
        }
        for a in 0..d {
            xtwx[(a, a)] += 1e-6;
        }
        let Some(next) = xtwx.lu().solve(&xtz) else {
            break;
        };
        let delta = (&next - &beta).norm();
        beta = next;
        if delta < 1e-8 {
            break;
        }
    }
    beta
}

fn propensity_ate(
    treatment: &[f64],
    response: &[f64],
    covariates: &[Vec<f64>],
    rows: &[usize],
    bins: usize,
) -> Result<f64> {
    let d = covariates.len() + 1;
    let x = DMatrix::from_fn(rows.len(), d, |r, c| {
        if c == 0 {
            1.0
        } else {
            covariates[c - 1][rows[r]]
        }
    });
    let y: Vec<f64> = rows.iter().map(|&r| treatment[r]).collect();
    let beta = logistic_fit(&x, &y);
    let scores: Vec<f64> = (0..rows.len())
        .map(|r| {
            let eta: f64 = (0..d).map(|c| x[(r, c)] * beta[c]).sum();
            1.0 / (1.0 + (-eta).exp())
        })
        .collect();

    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(a.cmp(&b)));

    let mut estimate = 0.0;
    let mut kept_mass = 0.0;
    for b in 0..bins {
        let lo = b * order.len() / bins;
        let hi = ((b + 1) * order.len() / bins).max(lo);
        let members = &order[lo..hi];
        if members.is_empty() {
            continue;
        }
        let treated: Vec<f64> = members
            .iter()
            .filter(|&&m| treatment[rows[m]] == 1.0)
            .map(|&m| response[rows[m]])
            .collect();
        let control: Vec<f64> = members
            .iter()
            .filter(|&&m| treatment[rows[m]] == 0.0)
            .map(|&m| response[rows[m]])
            .collect();
        if treated.is_empty() || control.is_empty() {
            continue;
        }
        let mass = members.len() as f64 / order.len() as f64;
        estimate += mass * (linalg::mean(&treated) - linalg::mean(&control));
        kept_mass += mass;
    }
    if kept_mass == 0.0 {
        return Err(CarlError::EmptyStrata(
            "no propensity stratum contains both arms".into(),
        ));
    }
    Ok(estimate / kept_mass)
}

/// ATE on the universal table, for comparison against the relational
/// estimate.
pub fn answer_universal_baseline(
    bundle: &InstanceBundle,
    query: &BoundQuery,
    cfg: &EstimatorConfig,
) -> Result<EffectResult> {
    let table = build_universal(bundle, query)?;
    let all_rows: Vec<usize> = (0..table.treatment.len()).collect();
    let bins = cfg.strata_bins.max(1);
    let ate = propensity_ate(
        &table.treatment,
        &table.response,
        &table.covariates,
        &all_rows,
        bins,
    )?;

    let mut stderr = BTreeMap::new();
    if cfg.bootstrap_reps > 0 {
        let n = all_rows.len();
        let mut reps = Vec::new();
        for rep in 0..cfg.bootstrap_reps as u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(rep + 1));
            let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            if let Ok(v) = propensity_ate(
                &table.treatment,
                &table.response,
                &table.covariates,
                &rows,
                bins,
            ) {
                reps.push(v);
            }
        }
        if reps.len() >= 2 {
            stderr.insert("ate".to_string(), linalg::sample_std(&reps));
        }
    }

    let treated: Vec<f64> = table
        .response
        .iter()
        .zip(&table.treatment)
        .filter(|(_, &t)| t == 1.0)
        .map(|(y, _)| *y)
        .collect();
    let control: Vec<f64> = table
        .response
        .iter()
        .zip(&table.treatment)
        .filter(|(_, &t)| t == 0.0)
        .map(|(y, _)| *y)
        .collect();
    let naive = (!treated.is_empty() && !control.is_empty())
        .then(|| linalg::mean(&treated) - linalg::mean(&control));

    Ok(EffectResult {
        query: query.ast.to_string(),
        kind: "ate".into(),
        estimates: [("ate".to_string(), ate)].into_iter().collect(),
        stderr,
        n_units: table.treatment.len(),
        covariates: table.covariate_names.clone(),
        embedding: crate::embed::EmbeddingSpec::mean(),
        naive_diff: naive,
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::fixtures::toy_bundle;
    use crate::lang::{bind_model, bind_query, parse_query};

    #[test]
    fn universal_join_counts_rows() {
        let bundle = toy_bundle();
        let model = bind_model(&Default::default(), &bundle.schema).unwrap();
        let query = bind_query(
            &parse_query("Score[S] <= Prestige[A] ?").unwrap(),
            &bundle.schema,
            &model,
        )
        .unwrap();
        let t = build_universal(&bundle, &query).unwrap();
        assert_eq!(t.treatment.len(), 5); // one row per authorship pair
        assert_eq!(t.covariate_names, vec!["Qualification@U0"]);
    }

    #[test]
    fn filter_restricts_join() {
        let bundle = toy_bundle();
        let model = bind_model(&Default::default(), &bundle.schema).unwrap();
        let query = bind_query(
            &parse_query("Score[S] <= Prestige[A] ? WHERE Submitted(S,C), Blind[C] = \"Single\"")
                .unwrap(),
            &bundle.schema,
            &model,
        )
        .unwrap();
        let t = build_universal(&bundle, &query).unwrap();
        assert_eq!(t.treatment.len(), 2); // Bob-s1, Eva-s1
    }

    #[test]
    fn empty_join_is_error() {
        let bundle = toy_bundle();
        let model = bind_model(&Default::default(), &bundle.schema).unwrap();
        let query = bind_query(
            &parse_query("Score[S] <= Prestige[A] ? WHERE Submitted(S,C), Blind[C] = \"Triple\"")
                .unwrap(),
            &bundle.schema,
            &model,
        )
        .unwrap();
        let err = build_universal(&bundle, &query).unwrap_err();
        assert!(matches!(err, CarlError::JoinEmpty(_)));
    }

    #[test]
    fn logistic_separates_simple_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 500;
        let x1: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y: Vec<f64> = x1
            .iter()
            .map(|&v| f64::from(rng.gen_bool(1.0 / (1.0 + (-2.0 * v).exp()))))
            .collect();
        let x = DMatrix::from_fn(n, 2, |r, c| if c == 0 { 1.0 } else { x1[r] });
        let beta = logistic_fit(&x, &y);
        assert!(beta[1] > 1.0, "slope = {}", beta[1]);
    }
}
