//! Observed relational instance: the skeleton (grounded entities and
//! relationships) plus values for every observed attribute.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{CarlError, Result};
use crate::schema::{SchemaDef, ValueDomain};
use crate::value::Value;

pub type Tuple = Vec<String>;

/// Immutable after load; shared read-only across workers.
#[derive(Debug, Clone)]
pub struct InstanceBundle {
    pub schema: SchemaDef,
    /// predicate name -> set of constant tuples
    pub skeleton: BTreeMap<String, BTreeSet<Tuple>>,
    /// attribute name -> grounding tuple -> value (empty map for unobserved)
    pub attribute_values: BTreeMap<String, BTreeMap<Tuple, Value>>,
}

impl InstanceBundle {
    pub fn tuples(&self, predicate: &str) -> impl Iterator<Item = &Tuple> {
        self.skeleton.get(predicate).into_iter().flatten()
    }

    pub fn predicate_size(&self, predicate: &str) -> usize {
        self.skeleton.get(predicate).map_or(0, |s| s.len())
    }

    pub fn value(&self, attribute: &str, tuple: &[String]) -> Option<&Value> {
        self.attribute_values.get(attribute)?.get(tuple)
    }

    pub fn numeric_value(&self, attribute: &str, tuple: &[String]) -> Option<f64> {
        self.value(attribute, tuple)?.as_f64()
    }
}

/// Loads one CSV per predicate and per observed attribute from `data_root`.
pub fn load_instance(schema: &SchemaDef, data_root: &Path) -> Result<InstanceBundle> {
    let mut skeleton: BTreeMap<String, BTreeSet<Tuple>> = BTreeMap::new();
    for pred in &schema.predicates {
        let path = data_root.join(format!("{}.csv", pred.name));
        let rows = read_csv(&path, pred.arity())?;
        skeleton.insert(pred.name.clone(), rows.into_iter().collect());
    }

    // Relationship tuples may only cite constants present in their role
    // entities.
    for pred in schema.relationships() {
        for tuple in &skeleton[&pred.name] {
            for (role, constant) in pred.roles.iter().zip(tuple) {
                if !skeleton[role].contains(&vec![constant.clone()]) {
                    return Err(CarlError::Referential(format!(
                        "{}({}) cites unknown {} constant `{}`",
                        pred.name,
                        tuple.join(","),
                        role,
                        constant
                    )));
                }
            }
        }
    }

    let mut attribute_values: BTreeMap<String, BTreeMap<Tuple, Value>> = BTreeMap::new();
    for attr in &schema.attributes {
        if !attr.observed {
            attribute_values.insert(attr.name.clone(), BTreeMap::new());
            continue;
        }
        let arity = schema.attribute_arity(&attr.name).unwrap();
        let path = data_root.join(format!("{}.csv", attr.name));
        let rows = read_csv(&path, arity + 1)?;
        let mut values = BTreeMap::new();
        for row in rows {
            let (key, raw) = row.split_at(arity);
            let key = key.to_vec();
            if !skeleton[&attr.over].contains(&key) {
                return Err(CarlError::Referential(format!(
                    "{}[{}] keyed on tuple absent from {}'s skeleton",
                    attr.name,
                    key.join(","),
                    attr.over
                )));
            }
            let value = parse_value(&raw[0], &attr.domain).ok_or_else(|| {
                CarlError::Domain(format!(
                    "{}[{}] = `{}` outside domain {}",
                    attr.name,
                    key.join(","),
                    raw[0],
                    attr.domain
                ))
            })?;
            values.insert(key, value);
        }
        // Observed attributes must be total on the skeleton.
        for tuple in &skeleton[&attr.over] {
            if !values.contains_key(tuple) {
                return Err(CarlError::MissingValue(format!(
                    "{}[{}] undefined",
                    attr.name,
                    tuple.join(",")
                )));
            }
        }
        attribute_values.insert(attr.name.clone(), values);
    }

    Ok(InstanceBundle {
        schema: schema.clone(),
        skeleton,
        attribute_values,
    })
}

fn read_csv(path: &Path, width: usize) -> Result<Vec<Vec<String>>> {
    if !path.exists() {
        return Err(CarlError::MissingFile(path.display().to_string()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != width {
            return Err(CarlError::Domain(format!(
                "{}: expected {} columns, found {}",
                path.display(),
                width,
                record.len()
            )));
        }
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok(rows)
}

fn parse_value(raw: &str, domain: &ValueDomain) -> Option<Value> {
    match domain {
        ValueDomain::Binary => match raw {
            "0" => Some(Value::Int(0)),
            "1" => Some(Value::Int(1)),
            _ => None,
        },
        ValueDomain::Integer => raw.parse::<i64>().ok().map(Value::Int),
        ValueDomain::Real => raw
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Value::Real),
        ValueDomain::Categorical(levels) => levels
            .iter()
            .any(|l| l == raw)
            .then(|| Value::Str(raw.to_string())),
    }
}

/// One human-readable line per invariant violation; empty iff the bundle is
/// internally consistent.
pub fn validate_instance(bundle: &InstanceBundle) -> Vec<String> {
    let mut diags = Vec::new();
    for pred in bundle.schema.relationships() {
        for tuple in bundle.tuples(&pred.name) {
            for (role, constant) in pred.roles.iter().zip(tuple) {
                let known = bundle
                    .skeleton
                    .get(role)
                    .is_some_and(|s| s.contains(&vec![constant.clone()]));
                if !known {
                    diags.push(format!(
                        "ReferentialError at {}/({}): unknown {} constant `{}`",
                        pred.name,
                        tuple.join(","),
                        role,
                        constant
                    ));
                }
            }
        }
    }
    for attr in &bundle.schema.attributes {
        let values = match bundle.attribute_values.get(&attr.name) {
            Some(v) => v,
            None => continue,
        };
        for (key, value) in values {
            if !bundle
                .skeleton
                .get(&attr.over)
                .is_some_and(|s| s.contains(key))
            {
                diags.push(format!(
                    "ReferentialError at {}/({}): key absent from skeleton",
                    attr.name,
                    key.join(",")
                ));
            }
            if !value_in_domain(value, &attr.domain) {
                diags.push(format!(
                    "DomainError at {}/({}): `{}` outside {}",
                    attr.name,
                    key.join(","),
                    value,
                    attr.domain
                ));
            }
        }
        if attr.observed {
            for tuple in bundle.tuples(&attr.over) {
                if !values.contains_key(tuple) {
                    diags.push(format!(
                        "MissingValue at {}/({})",
                        attr.name,
                        tuple.join(",")
                    ));
                }
            }
        }
    }
    diags
}

fn value_in_domain(value: &Value, domain: &ValueDomain) -> bool {
    match (value, domain) {
        (Value::Int(i), ValueDomain::Binary) => *i == 0 || *i == 1,
        (Value::Int(_), ValueDomain::Integer) => true,
        (Value::Real(r), ValueDomain::Real) => r.is_finite(),
        (Value::Int(_), ValueDomain::Real) => true,
        (Value::Str(s), ValueDomain::Categorical(levels)) => levels.iter().any(|l| l == s),
        _ => false,
    }
}

#[cfg(test)]
pub mod fixtures {
    use super::*;
    use crate::schema::load_schema;

    pub const TOY_SCHEMA: &str = "\
entity Person
entity Submission
entity Conference
relationship Author(Person, Submission)
relationship Submitted(Submission, Conference)
attribute Prestige over Person domain binary
attribute Qualification over Person domain real
attribute Score over Submission domain real
attribute Blind over Conference domain categorical(Single, Double)
attribute Quality over Submission domain real unobserved
";

    /// The three-author, three-submission review instance used throughout
    /// the tests.
    pub fn toy_bundle() -> InstanceBundle {
        let schema = load_schema(TOY_SCHEMA).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_toy_csvs(dir.path());
        load_instance(&schema, dir.path()).unwrap()
    }

    pub fn write_toy_csvs(root: &Path) {
        let files: &[(&str, &str)] = &[
            ("Person.csv", "Person\nBob\nCarlos\nEva\n"),
            ("Submission.csv", "Submission\ns1\ns2\ns3\n"),
            ("Conference.csv", "Conference\nConfDB\nConfAI\n"),
            (
                "Author.csv",
                "Person,Submission\nBob,s1\nEva,s1\nEva,s2\nEva,s3\nCarlos,s3\n",
            ),
            (
                "Submitted.csv",
                "Submission,Conference\ns1,ConfDB\ns2,ConfAI\ns3,ConfAI\n",
            ),
            ("Prestige.csv", "Person,value\nBob,1\nCarlos,0\nEva,1\n"),
            (
                "Qualification.csv",
                "Person,value\nBob,50\nCarlos,20\nEva,2\n",
            ),
            ("Score.csv", "Submission,value\ns1,0.75\ns2,0.4\ns3,0.1\n"),
            (
                "Blind.csv",
                "Conference,value\nConfDB,Single\nConfAI,Double\n",
            ),
        ];
        for (name, content) in files {
            std::fs::write(root.join(name), content).unwrap();
        }
    }
}
