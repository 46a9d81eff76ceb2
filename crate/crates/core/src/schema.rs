//! Relational causal schema: entities, relationships, and attribute
//! functions (some of which may be unobserved).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CarlError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredicateKind {
    Entity,
    Relationship,
}

/// An entity or relationship predicate. Entities have exactly one role
/// (themselves); relationships list the entity predicate of each position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateDecl {
    pub name: String,
    pub kind: PredicateKind,
    pub roles: Vec<String>,
}

impl PredicateDecl {
    pub fn arity(&self) -> usize {
        self.roles.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ValueDomain {
    Binary,
    Real,
    Integer,
    Categorical(Vec<String>),
}

impl std::fmt::Display for ValueDomain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ValueDomain::Binary => write!(f, "binary"),
            ValueDomain::Real => write!(f, "real"),
            ValueDomain::Integer => write!(f, "integer"),
            ValueDomain::Categorical(levels) => {
                write!(f, "categorical({})", levels.join(","))
            }
        }
    }
}

/// An attribute function over one predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeDecl {
    pub name: String,
    pub over: String,
    pub domain: ValueDomain,
    pub observed: bool,
}

/// A validated schema: unique predicate and attribute names, all role and
/// `over` references resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaDef {
    pub predicates: Vec<PredicateDecl>,
    pub attributes: Vec<AttributeDecl>,
}

impl SchemaDef {
    pub fn new(predicates: Vec<PredicateDecl>, attributes: Vec<AttributeDecl>) -> Result<Self> {
        let schema = SchemaDef {
            predicates,
            attributes,
        };
        schema.validate()?;
        Ok(schema)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = BTreeMap::new();
        for p in &self.predicates {
            if seen.insert(p.name.clone(), ()).is_some() {
                return Err(CarlError::Schema(format!(
                    "duplicate predicate name `{}`",
                    p.name
                )));
            }
            match p.kind {
                PredicateKind::Entity => {
                    if p.roles.len() != 1 || p.roles[0] != p.name {
                        return Err(CarlError::Schema(format!(
                            "entity `{}` must have exactly one role (itself)",
                            p.name
                        )));
                    }
                }
                PredicateKind::Relationship => {
                    if p.roles.len() < 2 {
                        return Err(CarlError::Schema(format!(
                            "relationship `{}` must have arity >= 2",
                            p.name
                        )));
                    }
                }
            }
        }
        for p in &self.predicates {
            if p.kind == PredicateKind::Relationship {
                for role in &p.roles {
                    match self.predicate(role) {
                        Some(r) if r.kind == PredicateKind::Entity => {}
                        _ => {
                            return Err(CarlError::Schema(format!(
                                "relationship `{}` references undeclared entity `{}`",
                                p.name, role
                            )))
                        }
                    }
                }
            }
        }
        let mut seen_attr = BTreeMap::new();
        for a in &self.attributes {
            if seen_attr.insert(a.name.clone(), ()).is_some() {
                return Err(CarlError::Schema(format!(
                    "duplicate attribute name `{}`",
                    a.name
                )));
            }
            if self.predicate(&a.over).is_none() {
                return Err(CarlError::Schema(format!(
                    "attribute `{}` references undeclared predicate `{}`",
                    a.name, a.over
                )));
            }
        }
        Ok(())
    }

    pub fn predicate(&self, name: &str) -> Option<&PredicateDecl> {
        self.predicates.iter().find(|p| p.name == name)
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeDecl> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn entities(&self) -> impl Iterator<Item = &PredicateDecl> {
        self.predicates
            .iter()
            .filter(|p| p.kind == PredicateKind::Entity)
    }

    pub fn relationships(&self) -> impl Iterator<Item = &PredicateDecl> {
        self.predicates
            .iter()
            .filter(|p| p.kind == PredicateKind::Relationship)
    }

    /// Attribute arity = arity of the predicate it is declared over.
    pub fn attribute_arity(&self, name: &str) -> Option<usize> {
        let a = self.attribute(name)?;
        self.predicate(&a.over).map(|p| p.arity())
    }

    /// Renders a schema document that `load_schema` parses back to an
    /// identical `SchemaDef`.
    pub fn format(&self) -> String {
        let mut out = String::new();
        for p in &self.predicates {
            match p.kind {
                PredicateKind::Entity => out.push_str(&format!("entity {}\n", p.name)),
                PredicateKind::Relationship => out.push_str(&format!(
                    "relationship {}({})\n",
                    p.name,
                    p.roles.join(", ")
                )),
            }
        }
        for a in &self.attributes {
            out.push_str(&format!(
                "attribute {} over {} domain {}{}\n",
                a.name,
                a.over,
                a.domain,
                if a.observed { "" } else { " unobserved" }
            ));
        }
        out
    }
}

/// Parses a `.carlschema` document: one declaration per line, `#` comments.
pub fn load_schema(text: &str) -> Result<SchemaDef> {
    let mut predicates = Vec::new();
    let mut attributes = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| {
            CarlError::parse(
                crate::error::Pos {
                    line: lineno + 1,
                    col: 1,
                },
                msg,
            )
        };
        let (kw, rest) = match line.split_once(char::is_whitespace) {
            Some(x) => x,
            None => return Err(err(format!("malformed declaration `{line}`"))),
        };
        let rest = rest.trim();
        match kw {
            "entity" => {
                let name = rest.to_string();
                if !is_ident(&name) {
                    return Err(err(format!("bad entity name `{name}`")));
                }
                predicates.push(PredicateDecl {
                    kind: PredicateKind::Entity,
                    roles: vec![name.clone()],
                    name,
                });
            }
            "relationship" => {
                let open = rest
                    .find('(')
                    .ok_or_else(|| err("relationship missing role list".into()))?;
                if !rest.ends_with(')') {
                    return Err(err("relationship missing `)`".into()));
                }
                let name = rest[..open].trim().to_string();
                if !is_ident(&name) {
                    return Err(err(format!("bad relationship name `{name}`")));
                }
                let roles: Vec<String> = rest[open + 1..rest.len() - 1]
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .collect();
                if roles.iter().any(|r| !is_ident(r)) {
                    return Err(err(format!("bad role list in `{rest}`")));
                }
                predicates.push(PredicateDecl {
                    name,
                    kind: PredicateKind::Relationship,
                    roles,
                });
            }
            "attribute" => {
                // attribute <Name> over <Predicate> domain <dom> [unobserved]
                let mut s = rest;
                let (name, r) = take_word(s).ok_or_else(|| err("missing attribute name".into()))?;
                s = r;
                let (kw_over, r) = take_word(s).ok_or_else(|| err("missing `over`".into()))?;
                if kw_over != "over" {
                    return Err(err(format!("expected `over`, found `{kw_over}`")));
                }
                s = r;
                let (pred, r) = take_word(s).ok_or_else(|| err("missing predicate".into()))?;
                s = r;
                let (kw_dom, r) = take_word(s).ok_or_else(|| err("missing `domain`".into()))?;
                if kw_dom != "domain" {
                    return Err(err(format!("expected `domain`, found `{kw_dom}`")));
                }
                s = r.trim();
                let (domain_text, observed) = match s.strip_suffix("unobserved") {
                    Some(head) => (head.trim(), false),
                    None => (s, true),
                };
                let domain = parse_domain(domain_text)
                    .ok_or_else(|| err(format!("bad domain `{domain_text}`")))?;
                attributes.push(AttributeDecl {
                    name: name.to_string(),
                    over: pred.to_string(),
                    domain,
                    observed,
                });
            }
            other => return Err(err(format!("unknown declaration `{other}`"))),
        }
    }
    SchemaDef::new(predicates, attributes)
}

fn parse_domain(s: &str) -> Option<ValueDomain> {
    match s {
        "binary" => Some(ValueDomain::Binary),
        "real" => Some(ValueDomain::Real),
        "integer" => Some(ValueDomain::Integer),
        _ => {
            let body = s.strip_prefix("categorical(")?.strip_suffix(')')?;
            let levels: Vec<String> = body.split(',').map(|l| l.trim().to_string()).collect();
            if levels.is_empty() || levels.iter().any(|l| l.is_empty()) {
                return None;
            }
            Some(ValueDomain::Categorical(levels))
        }
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn take_word(s: &str) -> Option<(&str, &str)> {
    let s = s.trim_start();
    if s.is_empty() {
        return None;
    }
    match s.split_once(char::is_whitespace) {
        Some((w, rest)) => Some((w, rest)),
        None => Some((s, "")),
    }
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.chars().next().unwrap().is_ascii_alphabetic()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const REVIEWDATA: &str = "\
# ReviewData
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

    #[test]
    fn reviewdata_schema_parses() {
        let s = load_schema(REVIEWDATA).unwrap();
        assert_eq!(s.predicates.len(), 5);
        assert_eq!(s.attributes.len(), 5);
        assert_eq!(s.entities().count(), 3);
        assert!(!s.attribute("Quality").unwrap().observed);
        assert_eq!(
            s.predicate("Author").unwrap().roles,
            vec!["Person", "Submission"]
        );
    }

    #[test]
    fn minimal_schema() {
        let s = load_schema("entity E\nattribute A over E domain binary\n").unwrap();
        assert_eq!(s.predicates.len(), 1);
        assert_eq!(s.attributes.len(), 1);
    }

    #[test]
    fn dangling_role_rejected() {
        let err = load_schema("entity Person\nrelationship Author(Person, Submission)\n");
        assert!(matches!(err, Err(CarlError::Schema(_))));
    }

    #[test]
    fn duplicate_names_rejected() {
        assert!(load_schema("entity E\nentity E\n").is_err());
        assert!(load_schema(
            "entity E\nattribute A over E domain real\nattribute A over E domain real\n"
        )
        .is_err());
    }

    #[test]
    fn unary_relationship_rejected() {
        assert!(load_schema("entity E\nrelationship R(E)\n").is_err());
    }

    #[test]
    fn format_round_trips() {
        let s = load_schema(REVIEWDATA).unwrap();
        let s2 = load_schema(&s.format()).unwrap();
        assert_eq!(s, s2);
    }
}
