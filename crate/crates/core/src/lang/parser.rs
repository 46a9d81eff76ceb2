//! Recursive-descent parser for rule documents and query strings.

use crate::error::{CarlError, Pos, Result};

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};

struct Parser {
    tokens: Vec<Token>,
    at: usize,
}

impl Parser {
    fn new(text: &str) -> Result<Self> {
        Ok(Parser {
            tokens: tokenize(text)?,
            at: 0,
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.at).map(|t| &t.tok)
    }

    fn pos(&self) -> Pos {
        self.tokens
            .get(self.at)
            .or_else(|| self.tokens.last())
            .map(|t| t.pos)
            .unwrap_or(Pos { line: 1, col: 1 })
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.at).cloned();
        self.at += 1;
        t
    }

    fn expect(&mut self, want: &Tok) -> Result<Token> {
        match self.peek() {
            Some(t) if t == want => Ok(self.bump().unwrap()),
            Some(t) => Err(CarlError::parse(
                self.pos(),
                format!("expected {want}, found {t}"),
            )),
            None => Err(CarlError::parse(
                self.pos(),
                format!("expected {want}, found end of input"),
            )),
        }
    }

    /// Case-insensitive keyword check without consuming.
    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s.eq_ignore_ascii_case(kw))
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<()> {
        if self.at_keyword(kw) {
            self.bump();
            Ok(())
        } else {
            Err(CarlError::parse(
                self.pos(),
                format!(
                    "expected keyword `{kw}`, found {}",
                    self.peek()
                        .map_or("end of input".to_string(), |t| t.to_string())
                ),
            ))
        }
    }

    fn ident(&mut self) -> Result<(String, Pos)> {
        let pos = self.pos();
        match self.bump() {
            Some(Token {
                tok: Tok::Ident(s), ..
            }) => Ok((s, pos)),
            Some(t) => Err(CarlError::parse(
                pos,
                format!("expected identifier, found {}", t.tok),
            )),
            None => Err(CarlError::parse(
                pos,
                "expected identifier, found end of input",
            )),
        }
    }

    fn term(&mut self) -> Result<Term> {
        let pos = self.pos();
        match self.bump() {
            Some(Token {
                tok: Tok::Ident(s), ..
            }) => Ok(Term::Var(s)),
            Some(Token {
                tok: Tok::StrConst(s),
                ..
            }) => Ok(Term::Const(s)),
            Some(t) => Err(CarlError::parse(
                pos,
                format!("expected variable or constant, found {}", t.tok),
            )),
            None => Err(CarlError::parse(pos, "expected term, found end of input")),
        }
    }

    fn terms(&mut self, close: &Tok) -> Result<Vec<Term>> {
        let mut args = vec![self.term()?];
        while self.peek() == Some(&Tok::Comma) {
            self.bump();
            args.push(self.term()?);
        }
        self.expect(close)?;
        Ok(args)
    }

    fn attr_atom(&mut self) -> Result<AttrAtom> {
        let (name, pos) = self.ident()?;
        self.expect(&Tok::LBracket)?;
        let args = self.terms(&Tok::RBracket)?;
        Ok(AttrAtom {
            attribute: name,
            args,
            pos: Some(pos),
        })
    }

    fn pred_atom(&mut self) -> Result<PredAtom> {
        let (name, pos) = self.ident()?;
        self.expect(&Tok::LParen)?;
        let args = self.terms(&Tok::RParen)?;
        Ok(PredAtom {
            predicate: name,
            args,
            pos: Some(pos),
        })
    }

    fn condition(&mut self) -> Result<Vec<PredAtom>> {
        let mut atoms = vec![self.pred_atom()?];
        while self.peek() == Some(&Tok::Comma) {
            self.bump();
            atoms.push(self.pred_atom()?);
        }
        Ok(atoms)
    }

    /// One rule or aggregate rule; the head decides which.
    fn rule_line(&mut self, model: &mut ModelAst) -> Result<()> {
        let head = self.attr_atom()?;
        let head_pos = head.pos.unwrap_or(Pos { line: 1, col: 1 });
        self.expect(&Tok::Arrow)?;
        if let Some((agg, _)) = head.agg_prefix() {
            let source = self.attr_atom()?;
            self.expect_keyword("WHERE")?;
            let condition = self.condition()?;
            let rule = AggRuleAst {
                agg,
                target: head,
                source,
                condition,
            };
            check_agg_scope(&rule, head_pos)?;
            model.agg_rules.push(rule);
        } else {
            let mut body = vec![self.attr_atom()?];
            while self.peek() == Some(&Tok::Comma) {
                self.bump();
                body.push(self.attr_atom()?);
            }
            self.expect_keyword("WHERE")?;
            let condition = self.condition()?;
            let rule = RuleAst {
                head,
                body,
                condition,
            };
            check_rule_scope(&rule, head_pos)?;
            model.rules.push(rule);
        }
        Ok(())
    }

    fn number(&mut self) -> Result<f64> {
        let pos = self.pos();
        match self.bump() {
            Some(Token {
                tok: Tok::Number(n),
                ..
            }) => Ok(n),
            Some(t) => Err(CarlError::parse(
                pos,
                format!("expected number, found {}", t.tok),
            )),
            None => Err(CarlError::parse(pos, "expected number, found end of input")),
        }
    }

    /// `LESS|MORE THAN k%` (or `k/m`, normalized to percent),
    /// `AT MOST|LEAST k`, `EXACTLY k`, `ALL`, `NONE`.
    fn cnd(&mut self) -> Result<CndAst> {
        if self.at_keyword("ALL") {
            self.bump();
            return Ok(CndAst {
                kind: CndKind::All,
                k: 0.0,
            });
        }
        if self.at_keyword("NONE") {
            self.bump();
            return Ok(CndAst {
                kind: CndKind::None,
                k: 0.0,
            });
        }
        if self.at_keyword("LESS") || self.at_keyword("MORE") {
            let more = self.at_keyword("MORE");
            self.bump();
            self.expect_keyword("THAN")?;
            let k = self.percent_number()?;
            let kind = if more {
                CndKind::MoreThanPct
            } else {
                CndKind::LessThanPct
            };
            check_cnd(kind, k)?;
            return Ok(CndAst { kind, k });
        }
        if self.at_keyword("AT") {
            self.bump();
            let kind = if self.at_keyword("MOST") {
                CndKind::AtMost
            } else if self.at_keyword("LEAST") {
                CndKind::AtLeast
            } else {
                return Err(CarlError::parse(self.pos(), "expected `MOST` or `LEAST`"));
            };
            self.bump();
            let k = self.number()?;
            check_cnd(kind, k)?;
            return Ok(CndAst { kind, k });
        }
        if self.at_keyword("EXACTLY") {
            self.bump();
            let k = self.number()?;
            check_cnd(CndKind::Exactly, k)?;
            return Ok(CndAst {
                kind: CndKind::Exactly,
                k,
            });
        }
        Err(CarlError::parse(
            self.pos(),
            "expected a peer condition (LESS/MORE THAN, AT MOST/LEAST, EXACTLY, ALL, NONE)",
        ))
    }

    /// `k%` or the fraction form `a/b` (e.g. `1/3`), both yielding percent.
    fn percent_number(&mut self) -> Result<f64> {
        let first = self.number()?;
        match self.peek() {
            Some(Tok::Slash) => {
                self.bump();
                let pos = self.pos();
                let denom = self.number()?;
                if denom == 0.0 {
                    return Err(CarlError::parse(pos, "zero denominator in fraction"));
                }
                Ok(100.0 * first / denom)
            }
            Some(Tok::Percent) => {
                self.bump();
                Ok(first)
            }
            _ => Err(CarlError::parse(
                self.pos(),
                "expected `%` or `/` after the threshold number",
            )),
        }
    }

    fn filter_atom(&mut self) -> Result<FilterAtom> {
        // Lookahead one token past the identifier: `(` means predicate atom,
        // `[` means attribute comparison.
        let next = self.tokens.get(self.at + 1).map(|t| &t.tok);
        match next {
            Some(Tok::LParen) => Ok(FilterAtom::Pred(self.pred_atom()?)),
            Some(Tok::LBracket) => {
                let atom = self.attr_atom()?;
                self.expect(&Tok::Equals)?;
                let pos = self.pos();
                let value = match self.bump() {
                    Some(Token {
                        tok: Tok::StrConst(s),
                        ..
                    }) => s,
                    Some(Token {
                        tok: Tok::Number(n),
                        ..
                    }) => {
                        if n.fract() == 0.0 {
                            format!("{}", n as i64)
                        } else {
                            format!("{n}")
                        }
                    }
                    _ => {
                        return Err(CarlError::parse(
                            pos,
                            "expected a quoted string or number after `=`",
                        ))
                    }
                };
                Ok(FilterAtom::AttrEq(atom, value))
            }
            _ => Err(CarlError::parse(
                self.pos(),
                "expected a predicate atom or attribute comparison",
            )),
        }
    }
}

fn check_cnd(kind: CndKind, k: f64) -> Result<()> {
    match kind {
        CndKind::LessThanPct | CndKind::MoreThanPct => {
            if !(0.0..=100.0).contains(&k) {
                return Err(CarlError::Condition(format!(
                    "percent threshold {k} outside [0, 100]"
                )));
            }
        }
        CndKind::AtMost | CndKind::AtLeast | CndKind::Exactly => {
            if k < 0.0 || k.fract() != 0.0 {
                return Err(CarlError::Condition(format!(
                    "count threshold {k} must be a nonnegative integer"
                )));
            }
        }
        CndKind::All | CndKind::None => {}
    }
    Ok(())
}

fn check_rule_scope(rule: &RuleAst, pos: Pos) -> Result<()> {
    let cond_vars = rule.condition_variables();
    for v in rule.rule_variables() {
        if !cond_vars.contains(v) {
            return Err(CarlError::Scope(format!(
                "variable `{v}` at {pos} does not occur in the WHERE condition"
            )));
        }
    }
    Ok(())
}

fn check_agg_scope(rule: &AggRuleAst, pos: Pos) -> Result<()> {
    let cond_vars: std::collections::BTreeSet<&str> =
        rule.condition.iter().flat_map(|a| a.variables()).collect();
    for v in rule.target.variables().chain(rule.source.variables()) {
        if !cond_vars.contains(v) {
            return Err(CarlError::Scope(format!(
                "variable `{v}` at {pos} does not occur in the WHERE condition"
            )));
        }
    }
    Ok(())
}

/// Parses a rule document into its rules and aggregate rules.
pub fn parse_model(text: &str) -> Result<ModelAst> {
    let mut parser = Parser::new(text)?;
    let mut model = ModelAst::default();
    while parser.peek().is_some() {
        if parser.peek() == Some(&Tok::Newline) {
            parser.bump();
            continue;
        }
        parser.rule_line(&mut model)?;
        match parser.peek() {
            None | Some(Tok::Newline) => {}
            Some(t) => {
                return Err(CarlError::parse(
                    parser.pos(),
                    format!("unexpected {t} after rule"),
                ))
            }
        }
    }
    Ok(model)
}

/// Parses a single query string.
pub fn parse_query(text: &str) -> Result<QueryAst> {
    let mut parser = Parser::new(text)?;
    let response = parser.attr_atom()?;
    parser.expect(&Tok::Arrow)?;
    let treatment = parser.attr_atom()?;
    parser.expect(&Tok::Question)?;
    let mut peer_condition = None;
    if parser.at_keyword("WHEN") {
        parser.bump();
        let cnd = parser.cnd()?;
        parser.expect_keyword("PEERS")?;
        parser.expect_keyword("TREATED")?;
        peer_condition = Some(cnd);
    }
    let mut where_filter = Vec::new();
    if parser.at_keyword("WHERE") {
        parser.bump();
        where_filter.push(parser.filter_atom()?);
        while parser.peek() == Some(&Tok::Comma) {
            parser.bump();
            where_filter.push(parser.filter_atom()?);
        }
    }
    match parser.peek() {
        None | Some(Tok::Newline) => {}
        Some(t) => {
            return Err(CarlError::parse(
                parser.pos(),
                format!("unexpected {t} after query"),
            ))
        }
    }
    Ok(QueryAst {
        response,
        treatment,
        peer_condition,
        where_filter,
    })
}
