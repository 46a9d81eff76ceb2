//! Relational paths: alternating chains of entities and relationships over
//! the schema, used to connect treated and response units.

use std::collections::VecDeque;

use crate::schema::{PredicateKind, SchemaDef};

/// One traversal of a relationship between two of its roles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathStep {
    pub relationship: String,
    pub from_role: usize,
    pub to_role: usize,
}

/// `E_1 -R_1- E_2 ... -R_k- E_{k+1}`; `entities.len() == steps.len() + 1`.
/// A single entity with no steps is the trivial path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationalPath {
    pub entities: Vec<String>,
    pub steps: Vec<PathStep>,
}

impl RelationalPath {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

impl std::fmt::Display for RelationalPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.entities[0])?;
        for (step, entity) in self.steps.iter().zip(&self.entities[1..]) {
            write!(f, " -{}- {}", step.relationship, entity)?;
        }
        Ok(())
    }
}

/// Entities a predicate anchors: itself for an entity, its roles for a
/// relationship.
fn anchors(schema: &SchemaDef, predicate: &str) -> Vec<String> {
    match schema.predicate(predicate) {
        Some(p) if p.kind == PredicateKind::Entity => vec![p.name.clone()],
        Some(p) => {
            let mut roles = p.roles.clone();
            roles.dedup();
            roles
        }
        None => Vec::new(),
    }
}

/// All simple paths (no relationship predicate reused) of at most `max_len`
/// steps connecting the two attributes' predicates, shortest first, ties in
/// lexicographic step order. An empty result means the attributes are not
/// relationally connected within the bound.
pub fn find_relational_paths(
    schema: &SchemaDef,
    treatment_pred: &str,
    response_pred: &str,
    max_len: usize,
) -> Vec<RelationalPath> {
    let starts = anchors(schema, treatment_pred);
    let goals = anchors(schema, response_pred);
    if starts.is_empty() || goals.is_empty() {
        return Vec::new();
    }

    // (entity, roles[i]) -> (entity, roles[j]) for every ordered role pair.
    let mut moves: Vec<(String, PathStep, String)> = Vec::new();
    for rel in schema.relationships() {
        for (i, from) in rel.roles.iter().enumerate() {
            for (j, to) in rel.roles.iter().enumerate() {
                if i != j {
                    moves.push((
                        from.clone(),
                        PathStep {
                            relationship: rel.name.clone(),
                            from_role: i,
                            to_role: j,
                        },
                        to.clone(),
                    ));
                }
            }
        }
    }
    moves.sort_by(|a, b| {
        (&a.1.relationship, a.1.from_role, a.1.to_role).cmp(&(
            &b.1.relationship,
            b.1.from_role,
            b.1.to_role,
        ))
    });

    let mut out = Vec::new();
    let mut queue: VecDeque<RelationalPath> = starts
        .iter()
        .map(|e| RelationalPath {
            entities: vec![e.clone()],
            steps: Vec::new(),
        })
        .collect();

    while let Some(path) = queue.pop_front() {
        let here = path.entities.last().unwrap();
        if goals.contains(here) {
            out.push(path.clone());
        }
        if path.len() == max_len {
            continue;
        }
        for (from, step, to) in &moves {
            if from != here {
                continue;
            }
            if path
                .steps
                .iter()
                .any(|s| s.relationship == step.relationship)
            {
                continue;
            }
            let mut next = path.clone();
            next.steps.push(step.clone());
            next.entities.push(to.clone());
            queue.push_back(next);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::load_schema;

    fn toy_schema() -> SchemaDef {
        load_schema(crate::instance::fixtures::TOY_SCHEMA).unwrap()
    }

    #[test]
    fn person_to_submission_single_hop() {
        let schema = toy_schema();
        let paths = find_relational_paths(&schema, "Person", "Submission", 4);
        assert!(!paths.is_empty());
        let shortest = &paths[0];
        assert_eq!(shortest.entities, vec!["Person", "Submission"]);
        assert_eq!(shortest.steps[0].relationship, "Author");
    }

    #[test]
    fn identical_endpoints_trivial_path() {
        let schema = toy_schema();
        let paths = find_relational_paths(&schema, "Person", "Person", 4);
        assert_eq!(paths[0].len(), 0);
        assert_eq!(paths[0].entities, vec!["Person"]);
    }

    #[test]
    fn conference_to_person_needs_two_hops() {
        let schema = toy_schema();
        assert!(find_relational_paths(&schema, "Conference", "Person", 1).is_empty());
        let paths = find_relational_paths(&schema, "Conference", "Person", 4);
        assert_eq!(
            paths[0].entities,
            vec!["Conference", "Submission", "Person"]
        );
    }

    #[test]
    fn shortest_paths_come_first() {
        let schema = toy_schema();
        let paths = find_relational_paths(&schema, "Person", "Submission", 4);
        for pair in paths.windows(2) {
            assert!(pair[0].len() <= pair[1].len());
        }
    }

    #[test]
    fn self_relationship_traversed_once() {
        let schema = load_schema("entity Person\nrelationship Collab(Person, Person)\n").unwrap();
        let paths = find_relational_paths(&schema, "Person", "Person", 3);
        // trivial path plus the two role orientations of Collab
        assert_eq!(paths[0].len(), 0);
        assert!(paths.iter().any(|p| p.len() == 1));
        assert!(paths.iter().all(|p| p.len() <= 1));
    }
}
