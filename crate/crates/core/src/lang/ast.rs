//! Abstract syntax for rules, aggregate rules, and queries.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Pos;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Term {
    Var(String),
    Const(String),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Const(c) => write!(f, "\"{c}\""),
        }
    }
}

/// `Attr[t1, ..., tn]`
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttrAtom {
    pub attribute: String,
    pub args: Vec<Term>,
    #[serde(skip)]
    pub pos: Option<Pos>,
}

// Source position is diagnostic metadata, not part of atom identity.
impl PartialEq for AttrAtom {
    fn eq(&self, other: &Self) -> bool {
        self.attribute == other.attribute && self.args == other.args
    }
}

impl AttrAtom {
    pub fn new(attribute: impl Into<String>, args: Vec<Term>) -> Self {
        AttrAtom {
            attribute: attribute.into(),
            args,
            pos: None,
        }
    }

    /// For `AVG_Score` returns `(Avg, "Score")`.
    pub fn agg_prefix(&self) -> Option<(AggFunc, &str)> {
        let (prefix, base) = self.attribute.split_once('_')?;
        let agg = AggFunc::from_name(prefix)?;
        if base.is_empty() {
            return None;
        }
        Some((agg, base))
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(|t| match t {
            Term::Var(v) => Some(v.as_str()),
            Term::Const(_) => None,
        })
    }
}

impl fmt::Display for AttrAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[", self.attribute)?;
        for (i, t) in self.args.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{t}")?;
        }
        write!(f, "]")
    }
}

/// `Pred(t1, ..., tn)`
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredAtom {
    pub predicate: String,
    pub args: Vec<Term>,
    #[serde(skip)]
    pub pos: Option<Pos>,
}

impl PartialEq for PredAtom {
    fn eq(&self, other: &Self) -> bool {
        self.predicate == other.predicate && self.args == other.args
    }
}

impl PredAtom {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        PredAtom {
            predicate: predicate.into(),
            args,
            pos: None,
        }
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(|t| match t {
            Term::Var(v) => Some(v.as_str()),
            Term::Const(_) => None,
        })
    }
}

impl fmt::Display for PredAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.predicate)?;
        for (i, t) in self.args.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{t}")?;
        }
        write!(f, ")")
    }
}

/// `head <= body1, ..., bodyk WHERE cond`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleAst {
    pub head: AttrAtom,
    pub body: Vec<AttrAtom>,
    pub condition: Vec<PredAtom>,
}

impl RuleAst {
    /// Variables of head and body; each must also occur in the condition.
    pub fn rule_variables(&self) -> BTreeSet<&str> {
        self.head
            .variables()
            .chain(self.body.iter().flat_map(|a| a.variables()))
            .collect()
    }

    pub fn condition_variables(&self) -> BTreeSet<&str> {
        self.condition.iter().flat_map(|a| a.variables()).collect()
    }
}

impl fmt::Display for RuleAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} <= ", self.head)?;
        for (i, b) in self.body.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{b}")?;
        }
        write!(f, " WHERE ")?;
        for (i, c) in self.condition.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AggFunc {
    Avg,
    Sum,
    Count,
    Var,
    Median,
}

impl AggFunc {
    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_uppercase().as_str() {
            "AVG" => Some(AggFunc::Avg),
            "SUM" => Some(AggFunc::Sum),
            "COUNT" => Some(AggFunc::Count),
            "VAR" => Some(AggFunc::Var),
            "MEDIAN" => Some(AggFunc::Median),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Avg => "AVG",
            AggFunc::Sum => "SUM",
            AggFunc::Count => "COUNT",
            AggFunc::Var => "VAR",
            AggFunc::Median => "MEDIAN",
        }
    }

    pub fn apply(self, values: &[f64]) -> f64 {
        let n = values.len();
        match self {
            AggFunc::Count => n as f64,
            AggFunc::Sum => values.iter().sum(),
            AggFunc::Avg => {
                if n == 0 {
                    0.0
                } else {
                    values.iter().sum::<f64>() / n as f64
                }
            }
            AggFunc::Var => {
                if n == 0 {
                    return 0.0;
                }
                let mean = values.iter().sum::<f64>() / n as f64;
                values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64
            }
            AggFunc::Median => {
                if n == 0 {
                    return 0.0;
                }
                let mut sorted = values.to_vec();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                if n % 2 == 1 {
                    sorted[n / 2]
                } else {
                    (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
                }
            }
        }
    }
}

/// `AGG_A[W] <= A[X] WHERE Q(Z)`; the target keeps the full `AGG_`-prefixed
/// attribute name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggRuleAst {
    pub agg: AggFunc,
    pub target: AttrAtom,
    pub source: AttrAtom,
    pub condition: Vec<PredAtom>,
}

impl fmt::Display for AggRuleAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} <= {} WHERE ", self.target, self.source)?;
        for (i, c) in self.condition.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelAst {
    pub rules: Vec<RuleAst>,
    pub agg_rules: Vec<AggRuleAst>,
}

impl ModelAst {
    pub fn format(&self) -> String {
        let mut out = String::new();
        for r in &self.rules {
            out.push_str(&format!("{r}\n"));
        }
        for r in &self.agg_rules {
            out.push_str(&format!("{r}\n"));
        }
        out
    }
}

/// Peer-treatment condition from the `WHEN ... PEERS TREATED` clause.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CndAst {
    pub kind: CndKind,
    /// Percent for the `*Pct` kinds, count otherwise; unused for All/None.
    pub k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CndKind {
    LessThanPct,
    MoreThanPct,
    AtMost,
    AtLeast,
    Exactly,
    All,
    None,
}

impl fmt::Display for CndAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            CndKind::LessThanPct => write!(f, "LESS THAN {}%", self.k),
            CndKind::MoreThanPct => write!(f, "MORE THAN {}%", self.k),
            CndKind::AtMost => write!(f, "AT MOST {}", self.k),
            CndKind::AtLeast => write!(f, "AT LEAST {}", self.k),
            CndKind::Exactly => write!(f, "EXACTLY {}", self.k),
            CndKind::All => write!(f, "ALL"),
            CndKind::None => write!(f, "NONE"),
        }
    }
}

/// One conjunct of a query's `WHERE` filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FilterAtom {
    Pred(PredAtom),
    /// `Attr[args] = "literal"` (or a numeric literal).
    AttrEq(AttrAtom, String),
}

impl fmt::Display for FilterAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterAtom::Pred(p) => write!(f, "{p}"),
            FilterAtom::AttrEq(a, v) => write!(f, "{a} = \"{v}\""),
        }
    }
}

/// `response <= treatment ? [WHEN cnd PEERS TREATED] [WHERE filter]`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryAst {
    pub response: AttrAtom,
    pub treatment: AttrAtom,
    pub peer_condition: Option<CndAst>,
    pub where_filter: Vec<FilterAtom>,
}

impl fmt::Display for QueryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} <= {} ?", self.response, self.treatment)?;
        if let Some(cnd) = &self.peer_condition {
            write!(f, " WHEN {cnd} PEERS TREATED")?;
        }
        if !self.where_filter.is_empty() {
            write!(f, " WHERE ")?;
            for (i, a) in self.where_filter.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{a}")?;
            }
        }
        Ok(())
    }
}
