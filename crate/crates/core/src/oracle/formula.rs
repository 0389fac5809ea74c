//! Formulas over execution atoms `u_i`, cause atoms `h_i`, the error `e`,
//! with conjunction, negation, and the per-test modality `<k>`.
//!
//! Concrete syntax (1-based indices):
//!
//! ```text
//! phi  := phi "|" phi | phi "&" phi | "!" phi | "<" INT ">" phi | "(" phi ")" | atom
//! atom := "u"INT | "h"INT | "H"INT | "f"INT | "e" | "true" | "false"
//! ```
//!
//! `!` and `<k>` bind tightest, then `&`, then `|`; binary operators are left
//! associative. `a | b` desugars to `!(!a & !b)`, `Hi` to `hi & !hj ...` over
//! every other unit, and `fi` to `<1>hi | <2>hi | ...` over every test.

use std::fmt;

use super::OracleError;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    False,
    /// The unit with this index was executed.
    Executed(usize),
    /// The unit with this index was a cause of the error.
    Cause(usize),
    /// The error occurred.
    Error,
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    /// Evaluate the inner formula at the test with this index.
    At(usize, Box<Formula>),
}

impl Formula {
    pub fn negate(self) -> Formula {
        Formula::Not(Box::new(self))
    }

    pub fn and(self, rhs: Formula) -> Formula {
        Formula::And(Box::new(self), Box::new(rhs))
    }

    pub fn or(self, rhs: Formula) -> Formula {
        self.negate().and(rhs.negate()).negate()
    }

    pub fn at(test: usize, inner: Formula) -> Formula {
        Formula::At(test, Box::new(inner))
    }

    /// Left-folded conjunction; the empty conjunction is `true`.
    pub fn all(parts: impl IntoIterator<Item = Formula>) -> Formula {
        parts
            .into_iter()
            .reduce(Formula::and)
            .unwrap_or(Formula::True)
    }

    /// Left-folded disjunction; the empty disjunction is `false`.
    pub fn any(parts: impl IntoIterator<Item = Formula>) -> Formula {
        parts
            .into_iter()
            .reduce(Formula::or)
            .unwrap_or(Formula::False)
    }

    /// Unit `unit` was the only cause of the error.
    pub fn sole_cause(unit: usize, units: usize) -> Formula {
        Formula::all(
            std::iter::once(Formula::Cause(unit)).chain(
                (0..units)
                    .filter(|&j| j != unit)
                    .map(|j| Formula::Cause(j).negate()),
            ),
        )
    }

    /// Unit `unit` caused the error in some test.
    pub fn fault(unit: usize, tests: usize) -> Formula {
        Formula::any((0..tests).map(|k| Formula::at(k, Formula::Cause(unit))))
    }

    /// True when the formula uses neither cause atoms nor `<k>`.
    pub fn is_basic(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Executed(_) | Formula::Error => true,
            Formula::Cause(_) | Formula::At(..) => false,
            Formula::Not(f) => f.is_basic(),
            Formula::And(a, b) => a.is_basic() && b.is_basic(),
        }
    }

    /// Checks every index against the given dimensions.
    pub fn check(&self, units: usize, tests: usize) -> Result<(), OracleError> {
        match self {
            Formula::True | Formula::False | Formula::Error => Ok(()),
            Formula::Executed(i) | Formula::Cause(i) if *i >= units => {
                Err(OracleError::IndexOutOfRange {
                    what: format!("{self}"),
                    position: None,
                })
            }
            Formula::Executed(_) | Formula::Cause(_) => Ok(()),
            Formula::At(k, _) if *k >= tests => Err(OracleError::IndexOutOfRange {
                what: format!("<{}>", k + 1),
                position: None,
            }),
            Formula::At(_, f) | Formula::Not(f) => f.check(units, tests),
            Formula::And(a, b) => {
                a.check(units, tests)?;
                b.check(units, tests)
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => f.write_str("true"),
            Formula::False => f.write_str("false"),
            Formula::Executed(i) => write!(f, "u{}", i + 1),
            Formula::Cause(i) => write!(f, "h{}", i + 1),
            Formula::Error => f.write_str("e"),
            Formula::Not(inner) => match **inner {
                Formula::And(..) => write!(f, "!({inner})"),
                _ => write!(f, "!{inner}"),
            },
            Formula::And(a, b) => {
                write!(f, "{a} & ")?;
                match **b {
                    Formula::And(..) => write!(f, "({b})"),
                    _ => write!(f, "{b}"),
                }
            }
            Formula::At(k, inner) => match **inner {
                Formula::And(..) => write!(f, "<{}>({inner})", k + 1),
                _ => write!(f, "<{}>{inner}", k + 1),
            },
        }
    }
}

/// A probability query over formulas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Query {
    /// `P(phi)`: probability averaged over tests.
    Expected(Formula),
    /// `P_k(phi)`: probability at one test (0-based index here).
    AtTest(usize, Formula),
    /// `P(phi | psi)`.
    Conditional(Formula, Formula),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tok {
    LParen,
    RParen,
    Not,
    And,
    Or,
    At(usize),
    Atom(char, usize),
    True,
    False,
    Error,
}

struct Lexer<'a> {
    text: &'a str,
    pos: usize,
    offset: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(text: &'a str, offset: usize) -> Result<Vec<(usize, Tok)>, OracleError> {
        let mut lx = Lexer {
            text,
            pos: 0,
            offset,
        };
        let mut out = Vec::new();
        while let Some((p, t)) = lx.next_token()? {
            out.push((p + offset, t));
        }
        Ok(out)
    }

    fn err(&self, position: usize, message: impl Into<String>) -> OracleError {
        OracleError::Syntax {
            position: position + self.offset,
            message: message.into(),
        }
    }

    fn number(&mut self) -> Result<usize, OracleError> {
        let start = self.pos;
        let digits: String = self.text[start..]
            .chars()
            .take_while(|c| c.is_ascii_digit())
            .collect();
        if digits.is_empty() {
            return Err(self.err(start, "expected an index"));
        }
        self.pos += digits.len();
        digits
            .parse()
            .map_err(|_| self.err(start, format!("index {digits} too large")))
    }

    fn word(&mut self) -> &'a str {
        let start = self.pos;
        let len = self.text[start..]
            .chars()
            .take_while(|c| c.is_ascii_alphabetic())
            .count();
        self.pos += len;
        &self.text[start..start + len]
    }

    fn next_token(&mut self) -> Result<Option<(usize, Tok)>, OracleError> {
        let rest = &self.text[self.pos..];
        let skipped = rest.len() - rest.trim_start().len();
        self.pos += skipped;
        let start = self.pos;
        let Some(c) = self.text[start..].chars().next() else {
            return Ok(None);
        };
        let single = |tok| Some((start, tok));
        let tok = match c {
            '(' => single(Tok::LParen),
            ')' => single(Tok::RParen),
            '!' => single(Tok::Not),
            '&' => single(Tok::And),
            '|' => single(Tok::Or),
            '<' => {
                self.pos += 1;
                let n = self.number()?;
                if !self.text[self.pos..].starts_with('>') {
                    return Err(self.err(self.pos, "expected `>`"));
                }
                self.pos += 1;
                return Ok(Some((start, Tok::At(n))));
            }
            c if c.is_ascii_alphabetic() => {
                let word = self.word();
                let tok = match word {
                    "true" => Tok::True,
                    "false" => Tok::False,
                    "e" => Tok::Error,
                    "u" | "h" | "H" | "f" => {
                        let n = self.number()?;
                        Tok::Atom(word.chars().next().unwrap(), n)
                    }
                    other => return Err(self.err(start, format!("unknown atom {other:?}"))),
                };
                return Ok(Some((start, tok)));
            }
            other => return Err(self.err(start, format!("unexpected character {other:?}"))),
        };
        self.pos += c.len_utf8();
        Ok(tok)
    }
}

struct Parser<'a> {
    tokens: &'a [(usize, Tok)],
    at: usize,
    end: usize,
    units: usize,
    tests: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<Tok> {
        self.tokens.get(self.at).map(|&(_, t)| t)
    }

    fn position(&self) -> usize {
        self.tokens.get(self.at).map_or(self.end, |&(p, _)| p)
    }

    fn err(&self, message: impl Into<String>) -> OracleError {
        OracleError::Syntax {
            position: self.position(),
            message: message.into(),
        }
    }

    fn disjunction(&mut self) -> Result<Formula, OracleError> {
        let mut lhs = self.conjunction()?;
        while self.peek() == Some(Tok::Or) {
            self.at += 1;
            lhs = lhs.or(self.conjunction()?);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Formula, OracleError> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(Tok::And) {
            self.at += 1;
            lhs = lhs.and(self.unary()?);
        }
        Ok(lhs)
    }

    fn index(&self, n: usize, limit: usize, what: String) -> Result<usize, OracleError> {
        if n == 0 || n > limit {
            Err(OracleError::IndexOutOfRange {
                what,
                position: Some(self.position()),
            })
        } else {
            Ok(n - 1)
        }
    }

    fn unary(&mut self) -> Result<Formula, OracleError> {
        let Some(tok) = self.peek() else {
            return Err(self.err("unexpected end of formula"));
        };
        let f = match tok {
            Tok::Not => {
                self.at += 1;
                return Ok(self.unary()?.negate());
            }
            Tok::At(n) => {
                let k = self.index(n, self.tests, format!("<{n}>"))?;
                self.at += 1;
                return Ok(Formula::at(k, self.unary()?));
            }
            Tok::LParen => {
                self.at += 1;
                let inner = self.disjunction()?;
                if self.peek() != Some(Tok::RParen) {
                    return Err(self.err("expected `)`"));
                }
                inner
            }
            Tok::True => Formula::True,
            Tok::False => Formula::False,
            Tok::Error => Formula::Error,
            Tok::Atom(kind, n) => {
                let i = self.index(n, self.units, format!("{kind}{n}"))?;
                match kind {
                    'u' => Formula::Executed(i),
                    'h' => Formula::Cause(i),
                    'H' => Formula::sole_cause(i, self.units),
                    'f' => Formula::fault(i, self.tests),
                    _ => unreachable!("lexer only emits u, h, H, f"),
                }
            }
            Tok::RParen | Tok::And | Tok::Or => return Err(self.err("expected a formula")),
        };
        self.at += 1;
        Ok(f)
    }
}

fn parse_tokens(
    tokens: &[(usize, Tok)],
    end: usize,
    units: usize,
    tests: usize,
) -> Result<Formula, OracleError> {
    let mut p = Parser {
        tokens,
        at: 0,
        end,
        units,
        tests,
    };
    let f = p.disjunction()?;
    if p.at != tokens.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(f)
}

/// Parses a formula for a matrix with `units` units and `tests` tests.
pub fn parse_formula(text: &str, units: usize, tests: usize) -> Result<Formula, OracleError> {
    let tokens = Lexer::tokens(text, 0)?;
    parse_tokens(&tokens, text.len(), units, tests)
}

/// Parses `P(phi)`, `P_k(phi)` (also `P_<k>(phi)`), or `P(phi | psi)`.
///
/// In a conditional query the first `|` outside parentheses separates the
/// target from the condition; parenthesise a disjunctive target.
pub fn parse_query(text: &str, units: usize, tests: usize) -> Result<Query, OracleError> {
    let syntax = |position: usize, message: &str| OracleError::Syntax {
        position,
        message: message.into(),
    };
    let lead = text.len() - text.trim_start().len();
    let trimmed = text.trim();
    let Some(rest) = trimmed.strip_prefix('P') else {
        return Err(syntax(lead, "query must start with `P`"));
    };
    let mut pos = lead + 1;
    let mut at_test = None;
    let rest = if let Some(r) = rest.strip_prefix('_') {
        pos += 1;
        let r = r.strip_prefix('<').map_or(r, |r| {
            pos += 1;
            r
        });
        let digits: String = r.chars().take_while(|c| c.is_ascii_digit()).collect();
        let n: usize = digits
            .parse()
            .map_err(|_| syntax(pos, "expected a test index after `P_`"))?;
        if n == 0 || n > tests {
            return Err(OracleError::IndexOutOfRange {
                what: format!("P_{n}"),
                position: Some(pos),
            });
        }
        at_test = Some(n - 1);
        pos += digits.len();
        let r = &r[digits.len()..];
        r.strip_prefix('>').map_or(r, |r| {
            pos += 1;
            r
        })
    } else {
        rest
    };
    let Some(body) = rest.strip_prefix('(').and_then(|r| r.strip_suffix(')')) else {
        return Err(syntax(pos, "expected `(formula)`"));
    };
    pos += 1;

    let tokens = Lexer::tokens(body, pos)?;
    let end = pos + body.len();
    let mut depth = 0i32;
    let mut split = None;
    for (idx, &(_, tok)) in tokens.iter().enumerate() {
        match tok {
            Tok::LParen => depth += 1,
            Tok::RParen => depth -= 1,
            Tok::Or if depth == 0 => {
                split = Some(idx);
                break;
            }
            _ => {}
        }
    }
    match (at_test, split) {
        (Some(_), Some(idx)) => Err(syntax(
            tokens[idx].0,
            "conditional queries use `P(...)`; parenthesise disjunctions",
        )),
        (Some(k), None) => Ok(Query::AtTest(k, parse_tokens(&tokens, end, units, tests)?)),
        (None, None) => Ok(Query::Expected(parse_tokens(&tokens, end, units, tests)?)),
        (None, Some(idx)) => {
            let target = parse_tokens(&tokens[..idx], tokens[idx].0, units, tests)?;
            let given = parse_tokens(&tokens[idx + 1..], end, units, tests)?;
            Ok(Query::Conditional(target, given))
        }
    }
}
