//! Conjunctive query evaluation over an instance.
//!
//! Left-deep nested-loop join with hash indexes keyed on the columns bound
//! so far; atoms are joined in ascending order of relation size. Variables
//! outside the requested free set are existentially quantified (projected
//! out with set semantics).

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::instance::{InstanceBundle, Tuple};
use crate::lang::{FilterAtom, PredAtom, Term};
use crate::value::Value;

pub type Binding = BTreeMap<String, String>;

/// A relation to join against: predicate tuples, or the keys of an
/// attribute map with the value pinned to a constant.
enum JoinRel<'a> {
    Skeleton(&'a BTreeSet<Tuple>),
    AttrKeys(Vec<&'a Tuple>),
}

impl JoinRel<'_> {
    fn len(&self) -> usize {
        match self {
            JoinRel::Skeleton(s) => s.len(),
            JoinRel::AttrKeys(v) => v.len(),
        }
    }

    fn iter(&self) -> Box<dyn Iterator<Item = &Tuple> + '_> {
        match self {
            JoinRel::Skeleton(s) => Box::new(s.iter()),
            JoinRel::AttrKeys(v) => Box::new(v.iter().copied()),
        }
    }
}

struct JoinAtom<'a> {
    args: &'a [Term],
    rel: JoinRel<'a>,
}

fn join<'a>(atoms: Vec<JoinAtom<'a>>, free_vars: &[String]) -> BTreeSet<Vec<String>> {
    let mut atoms = atoms;
    atoms.sort_by_key(|a| a.rel.len());

    let mut bindings: Vec<Binding> = vec![Binding::new()];
    for atom in &atoms {
        // Index the relation on the argument positions already bound (or
        // constant) under the current binding set; positions sharing a
        // repeated variable within the atom are checked tuple-wise below.
        let bound_positions: Vec<usize> = atom
            .args
            .iter()
            .enumerate()
            .filter_map(|(i, t)| match t {
                Term::Const(_) => Some(i),
                Term::Var(v) => bindings
                    .first()
                    .is_some_and(|b| b.contains_key(v))
                    .then_some(i),
            })
            .collect();
        let mut index: HashMap<Vec<&str>, Vec<&Tuple>> = HashMap::new();
        for tuple in atom.rel.iter() {
            let key: Vec<&str> = bound_positions.iter().map(|&i| tuple[i].as_str()).collect();
            index.entry(key).or_default().push(tuple);
        }

        let mut next: Vec<Binding> = Vec::new();
        for binding in &bindings {
            let key: Vec<&str> = bound_positions
                .iter()
                .map(|&i| match &atom.args[i] {
                    Term::Const(c) => c.as_str(),
                    Term::Var(v) => binding[v].as_str(),
                })
                .collect();
            let Some(candidates) = index.get(&key) else {
                continue;
            };
            'tuples: for tuple in candidates {
                let mut extended = binding.clone();
                for (term, constant) in atom.args.iter().zip(tuple.iter()) {
                    match term {
                        Term::Const(c) => {
                            if c != constant {
                                continue 'tuples;
                            }
                        }
                        Term::Var(v) => match extended.get(v) {
                            Some(existing) if existing != constant => continue 'tuples,
                            Some(_) => {}
                            None => {
                                extended.insert(v.clone(), constant.clone());
                            }
                        },
                    }
                }
                next.push(extended);
            }
        }
        bindings = next;
        if bindings.is_empty() {
            return BTreeSet::new();
        }
    }

    bindings
        .into_iter()
        .filter_map(|b| {
            free_vars
                .iter()
                .map(|v| b.get(v).cloned())
                .collect::<Option<Vec<_>>>()
        })
        .collect()
}

/// All substitutions of `free_vars` extendable to a full assignment
/// satisfying the conjunction; empty set when unsatisfiable.
pub fn eval_condition(
    bundle: &InstanceBundle,
    condition: &[PredAtom],
    free_vars: &[String],
) -> BTreeSet<Vec<String>> {
    static EMPTY: BTreeSet<Tuple> = BTreeSet::new();
    let atoms = condition
        .iter()
        .map(|a| JoinAtom {
            args: &a.args,
            rel: JoinRel::Skeleton(bundle.skeleton.get(&a.predicate).unwrap_or(&EMPTY)),
        })
        .collect();
    join(atoms, free_vars)
}

/// Like [`eval_condition`] but over a query filter, which may also contain
/// attribute equality comparisons.
pub fn eval_filter(
    bundle: &InstanceBundle,
    filter: &[FilterAtom],
    free_vars: &[String],
) -> BTreeSet<Vec<String>> {
    static EMPTY: BTreeSet<Tuple> = BTreeSet::new();
    let atoms = filter
        .iter()
        .map(|f| match f {
            FilterAtom::Pred(a) => JoinAtom {
                args: &a.args,
                rel: JoinRel::Skeleton(bundle.skeleton.get(&a.predicate).unwrap_or(&EMPTY)),
            },
            FilterAtom::AttrEq(a, literal) => {
                let keys = bundle
                    .attribute_values
                    .get(&a.attribute)
                    .map(|values| {
                        values
                            .iter()
                            .filter(|(_, v)| value_matches(v, literal))
                            .map(|(k, _)| k)
                            .collect()
                    })
                    .unwrap_or_default();
                JoinAtom {
                    args: &a.args,
                    rel: JoinRel::AttrKeys(keys),
                }
            }
        })
        .collect();
    join(atoms, free_vars)
}

fn value_matches(value: &Value, literal: &str) -> bool {
    match value {
        Value::Str(s) => s == literal,
        Value::Int(i) => literal.parse::<i64>() == Ok(*i),
        Value::Real(r) => literal.parse::<f64>() == Ok(*r),
    }
}
