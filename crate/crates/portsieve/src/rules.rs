//! Deterministic screening-rule language.
//!
//! Rules are boolean combinations of z-score threshold comparisons, e.g.
//!
//! ```text
//! (bm < -0.75 OR mom12m < -0.55 OR mve < -0.75) AND NOT (mom12m > 1.5)
//! ```
//!
//! Grammar: comparisons `ident op number` with `op` one of `< > <= >=`,
//! combined by case-insensitive `NOT` / `AND` / `OR` (that precedence,
//! binary operators left-associative) and parentheses. Thresholds are
//! plain decimal literals with an optional sign; scientific notation is
//! rejected. Rules arrive as data files and are never code.

use crate::data::AssetId;
use crate::dates::Month;
use crate::signals::{Action, SignalSet};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

/// Comparison operator in a rule leaf.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Gt,
    Le,
    Ge,
}

impl CmpOp {
    fn apply(self, value: f64, threshold: f64) -> bool {
        match self {
            CmpOp::Lt => value < threshold,
            CmpOp::Gt => value > threshold,
            CmpOp::Le => value <= threshold,
            CmpOp::Ge => value >= threshold,
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
        })
    }
}

/// Parsed rule expression.
#[derive(Debug, Clone, PartialEq)]
pub enum RuleExpr {
    Cmp {
        feature: String,
        op: CmpOp,
        threshold: f64,
    },
    And(Box<RuleExpr>, Box<RuleExpr>),
    Or(Box<RuleExpr>, Box<RuleExpr>),
    Not(Box<RuleExpr>),
}

impl RuleExpr {
    /// Feature identifiers referenced anywhere in the expression.
    pub fn features(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_features(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_features<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            RuleExpr::Cmp { feature, .. } => out.push(feature),
            RuleExpr::And(l, r) | RuleExpr::Or(l, r) => {
                l.collect_features(out);
                r.collect_features(out);
            }
            RuleExpr::Not(c) => c.collect_features(out),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            RuleExpr::Or(..) => 1,
            RuleExpr::And(..) => 2,
            RuleExpr::Not(..) => 3,
            RuleExpr::Cmp { .. } => 4,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let prec = self.precedence();
        let parens = prec < min;
        if parens {
            f.write_str("(")?;
        }
        match self {
            RuleExpr::Cmp {
                feature,
                op,
                threshold,
            } => write!(f, "{feature} {op} {threshold}")?,
            RuleExpr::And(l, r) => {
                l.fmt_prec(f, 2)?;
                f.write_str(" AND ")?;
                r.fmt_prec(f, 3)?;
            }
            RuleExpr::Or(l, r) => {
                l.fmt_prec(f, 1)?;
                f.write_str(" OR ")?;
                r.fmt_prec(f, 2)?;
            }
            RuleExpr::Not(c) => {
                f.write_str("NOT ")?;
                c.fmt_prec(f, 3)?;
            }
        }
        if parens {
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// Pretty-printer; `parse_rule(expr.to_string())` reproduces the tree.
impl fmt::Display for RuleExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RuleError {
    #[error("syntax error at position {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unknown token at position {pos}: `{token}`")]
    UnknownToken { pos: usize, token: String },
    #[error("feature `{feature}` missing from row{}", asset.as_ref().map(|a| format!(" for asset {a}")).unwrap_or_default())]
    MissingFeature {
        feature: String,
        asset: Option<AssetId>,
    },
    #[error("rule pair effective_from {from} is after effective_to {to}")]
    InvalidEffectiveRange { from: Month, to: Month },
    #[error("no rule effective at {0}")]
    NoEffectiveRule(Month),
    #[error("{count} rules effective at {date}; expected exactly one")]
    AmbiguousRules { date: Month, count: usize },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid rule file {path}: {message}")]
    File { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number(f64),
    Op(CmpOp),
    LParen,
    RParen,
    And,
    Or,
    Not,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokenize(text: &'a str) -> Result<Vec<(usize, Token)>, RuleError> {
        let mut lx = Lexer {
            src: text.as_bytes(),
            pos: 0,
        };
        let mut out = Vec::new();
        while let Some(tok) = lx.next_token()? {
            out.push(tok);
        }
        Ok(out)
    }

    fn next_token(&mut self) -> Result<Option<(usize, Token)>, RuleError> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos >= self.src.len() {
            return Ok(None);
        }
        let start = self.pos;
        let c = self.src[self.pos];
        let tok = match c {
            b'(' => {
                self.pos += 1;
                Token::LParen
            }
            b')' => {
                self.pos += 1;
                Token::RParen
            }
            b'<' | b'>' => {
                self.pos += 1;
                let eq = self.pos < self.src.len() && self.src[self.pos] == b'=';
                if eq {
                    self.pos += 1;
                }
                Token::Op(match (c, eq) {
                    (b'<', false) => CmpOp::Lt,
                    (b'<', true) => CmpOp::Le,
                    (b'>', false) => CmpOp::Gt,
                    (_, true) => CmpOp::Ge,
                    _ => unreachable!(),
                })
            }
            b'-' | b'.' | b'0'..=b'9' => self.lex_number(start)?,
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let word = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii slice");
                match word.to_ascii_uppercase().as_str() {
                    "AND" => Token::And,
                    "OR" => Token::Or,
                    "NOT" => Token::Not,
                    _ => Token::Ident(word.to_string()),
                }
            }
            other => {
                return Err(RuleError::UnknownToken {
                    pos: start + 1,
                    token: (other as char).to_string(),
                })
            }
        };
        Ok(Some((start + 1, tok)))
    }

    fn lex_number(&mut self, start: usize) -> Result<Token, RuleError> {
        if self.src[self.pos] == b'-' {
            self.pos += 1;
        }
        let mut digits = 0usize;
        let mut dots = 0usize;
        while self.pos < self.src.len() {
            match self.src[self.pos] {
                b'0'..=b'9' => {
                    digits += 1;
                    self.pos += 1;
                }
                b'.' => {
                    dots += 1;
                    self.pos += 1;
                }
                _ => break,
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii slice");
        // Letters glued to a literal would be scientific notation or a typo.
        if self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphabetic() || self.src[self.pos] == b'_')
        {
            return Err(RuleError::UnknownToken {
                pos: start + 1,
                token: format!("{text}{}", self.src[self.pos] as char),
            });
        }
        if digits == 0 || dots > 1 {
            return Err(RuleError::UnknownToken {
                pos: start + 1,
                token: text.to_string(),
            });
        }
        let value: f64 = text.parse().map_err(|_| RuleError::UnknownToken {
            pos: start + 1,
            token: text.to_string(),
        })?;
        Ok(Token::Number(value))
    }
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    idx: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&(usize, Token)> {
        self.tokens.get(self.idx)
    }

    fn bump(&mut self) -> Option<(usize, Token)> {
        let t = self.tokens.get(self.idx).cloned();
        if t.is_some() {
            self.idx += 1;
        }
        t
    }

    fn err_here(&self, message: impl Into<String>) -> RuleError {
        let pos = self.peek().map(|(p, _)| *p).unwrap_or(self.end);
        RuleError::Syntax {
            pos,
            message: message.into(),
        }
    }

    fn parse_or(&mut self) -> Result<RuleExpr, RuleError> {
        let mut left = self.parse_and()?;
        while matches!(self.peek(), Some((_, Token::Or))) {
            self.bump();
            let right = self.parse_and()?;
            left = RuleExpr::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn parse_and(&mut self) -> Result<RuleExpr, RuleError> {
        let mut left = self.parse_not()?;
        while matches!(self.peek(), Some((_, Token::And))) {
            self.bump();
            let right = self.parse_not()?;
            left = RuleExpr::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn parse_not(&mut self) -> Result<RuleExpr, RuleError> {
        if matches!(self.peek(), Some((_, Token::Not))) {
            self.bump();
            let child = self.parse_not()?;
            return Ok(RuleExpr::Not(Box::new(child)));
        }
        self.parse_primary()
    }

    fn parse_primary(&mut self) -> Result<RuleExpr, RuleError> {
        match self.bump() {
            Some((_, Token::LParen)) => {
                let inner = self.parse_or()?;
                match self.bump() {
                    Some((_, Token::RParen)) => Ok(inner),
                    Some((pos, _)) => Err(RuleError::Syntax {
                        pos,
                        message: "expected `)`".to_string(),
                    }),
                    None => Err(RuleError::Syntax {
                        pos: self.end,
                        message: "unclosed `(`".to_string(),
                    }),
                }
            }
            Some((_, Token::Ident(feature))) => {
                let op = match self.bump() {
                    Some((_, Token::Op(op))) => op,
                    Some((pos, _)) => {
                        return Err(RuleError::Syntax {
                            pos,
                            message: format!("expected comparison operator after `{feature}`"),
                        })
                    }
                    None => {
                        return Err(RuleError::Syntax {
                            pos: self.end,
                            message: format!("expected comparison operator after `{feature}`"),
                        })
                    }
                };
                let threshold = match self.bump() {
                    Some((_, Token::Number(v))) => v,
                    Some((pos, _)) => {
                        return Err(RuleError::Syntax {
                            pos,
                            message: "expected numeric threshold".to_string(),
                        })
                    }
                    None => {
                        return Err(RuleError::Syntax {
                            pos: self.end,
                            message: "expected numeric threshold".to_string(),
                        })
                    }
                };
                Ok(RuleExpr::Cmp {
                    feature,
                    op,
                    threshold,
                })
            }
            Some((pos, tok)) => Err(RuleError::Syntax {
                pos,
                message: format!("unexpected token {tok:?}"),
            }),
            None => Err(self.err_here("unexpected end of rule")),
        }
    }
}

/// Parse one rule expression. Whitespace-insensitive; operator keywords
/// are case-insensitive; precedence is NOT > AND > OR, left-associative.
pub fn parse_rule(text: &str) -> Result<RuleExpr, RuleError> {
    let tokens = Lexer::tokenize(text)?;
    let mut parser = Parser {
        tokens,
        idx: 0,
        end: text.len() + 1,
    };
    let expr = parser.parse_or()?;
    if let Some((pos, tok)) = parser.peek() {
        return Err(RuleError::Syntax {
            pos: *pos,
            message: format!("trailing input {tok:?}"),
        });
    }
    Ok(expr)
}

/// Evaluate `expr` on a feature row. Errors if the row lacks a referenced
/// feature; same inputs always produce the same output.
pub fn evaluate_rule(expr: &RuleExpr, row: &BTreeMap<String, f64>) -> Result<bool, RuleError> {
    match expr {
        RuleExpr::Cmp {
            feature,
            op,
            threshold,
        } => {
            let value = row.get(feature).ok_or_else(|| RuleError::MissingFeature {
                feature: feature.clone(),
                asset: None,
            })?;
            Ok(op.apply(*value, *threshold))
        }
        RuleExpr::And(l, r) => Ok(evaluate_rule(l, row)? && evaluate_rule(r, row)?),
        RuleExpr::Or(l, r) => Ok(evaluate_rule(l, row)? || evaluate_rule(r, row)?),
        RuleExpr::Not(c) => Ok(!evaluate_rule(c, row)?),
    }
}

/// A buy rule and a sell rule with an effectiveness span.
#[derive(Debug, Clone, PartialEq)]
pub struct RulePair {
    pub buy: RuleExpr,
    pub sell: RuleExpr,
    pub effective_from: Month,
    pub effective_to: Month,
}

impl RulePair {
    pub fn new(
        buy: RuleExpr,
        sell: RuleExpr,
        effective_from: Month,
        effective_to: Month,
    ) -> Result<RulePair, RuleError> {
        if effective_from > effective_to {
            return Err(RuleError::InvalidEffectiveRange {
                from: effective_from,
                to: effective_to,
            });
        }
        Ok(RulePair {
            buy,
            sell,
            effective_from,
            effective_to,
        })
    }

    pub fn effective_at(&self, date: Month) -> bool {
        self.effective_from <= date && date <= self.effective_to
    }
}

/// Classify one date's cross-section: buy if the buy rule fires, else sell
/// if the sell rule fires, else hold. Buy takes precedence on overlap; the
/// overlap count is logged as a warning.
pub fn apply_rules(
    rules: &RulePair,
    date: Month,
    cross_section: &BTreeMap<AssetId, BTreeMap<String, f64>>,
) -> Result<SignalSet, RuleError> {
    let mut set = SignalSet::new(date);
    let mut overlaps = 0usize;
    for (asset, row) in cross_section {
        let tag_asset = |e: RuleError| match e {
            RuleError::MissingFeature { feature, .. } => RuleError::MissingFeature {
                feature,
                asset: Some(asset.clone()),
            },
            other => other,
        };
        let buy = evaluate_rule(&rules.buy, row).map_err(tag_asset)?;
        let sell = evaluate_rule(&rules.sell, row).map_err(tag_asset)?;
        if buy && sell {
            overlaps += 1;
        }
        let action = if buy {
            Action::Buy
        } else if sell {
            Action::Sell
        } else {
            Action::Hold
        };
        set.set(asset.clone(), action);
    }
    if overlaps > 0 {
        log::warn!("{date}: {overlaps} assets satisfied both buy and sell rules; buy kept");
    }
    Ok(set)
}

#[derive(serde::Deserialize)]
struct RuleRecord {
    effective_from: Month,
    effective_to: Month,
    buy: String,
    sell: String,
}

/// Load a JSON rule schedule: an array of records with fields
/// `effective_from`, `effective_to`, `buy`, `sell` (rule text verbatim).
pub fn load_rule_schedule(path: impl AsRef<Path>) -> Result<Vec<RulePair>, RuleError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| RuleError::Io {
        path: display.clone(),
        source,
    })?;
    let records: Vec<RuleRecord> =
        serde_json::from_str(&text).map_err(|e| RuleError::File {
            path: display.clone(),
            message: e.to_string(),
        })?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let buy = parse_rule(&r.buy).map_err(|e| RuleError::File {
                path: display.clone(),
                message: format!("record {i}: buy rule: {e}"),
            })?;
            let sell = parse_rule(&r.sell).map_err(|e| RuleError::File {
                path: display.clone(),
                message: format!("record {i}: sell rule: {e}"),
            })?;
            RulePair::new(buy, sell, r.effective_from, r.effective_to)
        })
        .collect()
}

/// The unique rule pair effective at `date`; zero matches or more than one
/// are errors.
pub fn effective_rule(
    schedule: &[RulePair],
    date: Month,
) -> Result<&RulePair, RuleError> {
    let matches: Vec<&RulePair> = schedule.iter().filter(|r| r.effective_at(date)).collect();
    match matches.len() {
        0 => Err(RuleError::NoEffectiveRule(date)),
        1 => Ok(matches[0]),
        count => Err(RuleError::AmbiguousRules { date, count }),
    }
}
