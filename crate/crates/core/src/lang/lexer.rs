//! Tokenizer for rule and query texts.
//!
//! Identifiers are case-sensitive; keywords are matched case-insensitively
//! by the parser. Constants are double-quoted strings. `#` starts a comment
//! running to end of line. Newlines are significant (one rule per line).

use crate::error::{CarlError, Pos, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    StrConst(String),
    Number(f64),
    Arrow,    // <=
    LBracket, // [
    RBracket, // ]
    LParen,   // (
    RParen,   // )
    Comma,
    Question,
    Percent,
    Slash,
    Equals,
    Newline,
}

impl std::fmt::Display for Tok {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::StrConst(s) => write!(f, "\"{s}\""),
            Tok::Number(n) => write!(f, "{n}"),
            Tok::Arrow => write!(f, "`<=`"),
            Tok::LBracket => write!(f, "`[`"),
            Tok::RBracket => write!(f, "`]`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Question => write!(f, "`?`"),
            Tok::Percent => write!(f, "`%`"),
            Tok::Slash => write!(f, "`/`"),
            Tok::Equals => write!(f, "`=`"),
            Tok::Newline => write!(f, "end of line"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

pub fn tokenize(text: &str) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = match line.find('#') {
            Some(i) => &line[..i],
            None => line,
        };
        let bytes: Vec<char> = line.chars().collect();
        let mut i = 0;
        let mut line_had_token = false;
        while i < bytes.len() {
            let c = bytes[i];
            let pos = Pos {
                line: lineno + 1,
                col: i + 1,
            };
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            line_had_token = true;
            match c {
                '<' => {
                    if bytes.get(i + 1) == Some(&'=') {
                        tokens.push(Token {
                            tok: Tok::Arrow,
                            pos,
                        });
                        i += 2;
                    } else {
                        return Err(CarlError::lex(pos, "expected `<=`"));
                    }
                }
                '[' => push_sym(&mut tokens, Tok::LBracket, pos, &mut i),
                ']' => push_sym(&mut tokens, Tok::RBracket, pos, &mut i),
                '(' => push_sym(&mut tokens, Tok::LParen, pos, &mut i),
                ')' => push_sym(&mut tokens, Tok::RParen, pos, &mut i),
                ',' => push_sym(&mut tokens, Tok::Comma, pos, &mut i),
                '?' => push_sym(&mut tokens, Tok::Question, pos, &mut i),
                '%' => push_sym(&mut tokens, Tok::Percent, pos, &mut i),
                '/' => push_sym(&mut tokens, Tok::Slash, pos, &mut i),
                '=' => push_sym(&mut tokens, Tok::Equals, pos, &mut i),
                '"' => {
                    let start = i + 1;
                    let mut j = start;
                    while j < bytes.len() && bytes[j] != '"' {
                        j += 1;
                    }
                    if j == bytes.len() {
                        return Err(CarlError::lex(pos, "unterminated string constant"));
                    }
                    tokens.push(Token {
                        tok: Tok::StrConst(bytes[start..j].iter().collect()),
                        pos,
                    });
                    i = j + 1;
                }
                c if c.is_ascii_digit()
                    || (c == '-' && matches!(bytes.get(i + 1), Some(d) if d.is_ascii_digit())) =>
                {
                    let start = i;
                    i += 1;
                    while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == '.') {
                        i += 1;
                    }
                    let raw: String = bytes[start..i].iter().collect();
                    let n: f64 = raw
                        .parse()
                        .map_err(|_| CarlError::lex(pos, format!("bad number `{raw}`")))?;
                    tokens.push(Token {
                        tok: Tok::Number(n),
                        pos,
                    });
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let start = i;
                    while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_') {
                        i += 1;
                    }
                    tokens.push(Token {
                        tok: Tok::Ident(bytes[start..i].iter().collect()),
                        pos,
                    });
                }
                other => {
                    return Err(CarlError::lex(
                        pos,
                        format!("unexpected character `{other}`"),
                    ))
                }
            }
        }
        if line_had_token {
            tokens.push(Token {
                tok: Tok::Newline,
                pos: Pos {
                    line: lineno + 1,
                    col: bytes.len() + 1,
                },
            });
        }
    }
    Ok(tokens)
}

fn push_sym(tokens: &mut Vec<Token>, tok: Tok, pos: Pos, i: &mut usize) {
    tokens.push(Token { tok, pos });
    *i += 1;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizes_rule() {
        let toks = tokenize("Score[S] <= Prestige[A] WHERE Author(A,S)").unwrap();
        assert_eq!(toks.len(), 17); // incl. trailing newline token
        assert!(matches!(toks[0].tok, Tok::Ident(ref s) if s == "Score"));
        assert!(matches!(toks[4].tok, Tok::Arrow));
    }

    #[test]
    fn comments_and_blank_lines_skipped() {
        let toks = tokenize("# nothing here\n\n").unwrap();
        assert!(toks.is_empty());
    }

    #[test]
    fn positions_are_tracked() {
        let toks = tokenize("A[X]\nB[Y]").unwrap();
        let b = toks
            .iter()
            .find(|t| matches!(t.tok, Tok::Ident(ref s) if s == "B"));
        assert_eq!(b.unwrap().pos.line, 2);
    }

    #[test]
    fn unterminated_string_is_lex_error() {
        let err = tokenize("Blind[C] = \"Single").unwrap_err();
        assert!(matches!(err, CarlError::Lex { .. }));
    }
}
