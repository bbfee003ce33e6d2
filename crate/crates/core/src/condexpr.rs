//! Condition language over questionnaire answers.
//!
//! Conditions are boolean expressions evaluated under strong Kleene
//! three-valued logic, so a question nobody could answer propagates as
//! `unknown` instead of collapsing to false.
//!
//! ```text
//! expr     := or_expr
//! or_expr  := and_expr { "or" and_expr }
//! and_expr := unary { "and" unary }
//! unary    := "not" unary | atom
//! atom     := "(" expr ")" | "true" | "false"
//!           | "unknown(" ID ")" | "answered(" ID ")"
//!           | ID "==" literal
//! literal  := "yes" | "no" | quoted-string
//! ```

use alloc::borrow::ToOwned;
use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::ops::{BitAnd, BitOr, Not};
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

const MAX_DEPTH: usize = 128;

const KEYWORDS: [&str; 9] = [
    "and", "or", "not", "true", "false", "yes", "no", "unknown", "answered",
];

/// Identifier of a question, e.g. `A7` or `B1`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct QuestionId(String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid question id `{0}`")]
pub struct InvalidQuestionId(pub String);

impl QuestionId {
    pub fn new(id: impl Into<String>) -> Result<Self, InvalidQuestionId> {
        let id = id.into();
        if crate::is_identifier(&id) && !KEYWORDS.contains(&id.as_str()) {
            Ok(QuestionId(id))
        } else {
            Err(InvalidQuestionId(id))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for QuestionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for QuestionId {
    type Err = InvalidQuestionId;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        QuestionId::new(s)
    }
}

impl core::borrow::Borrow<str> for QuestionId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl<'de> Deserialize<'de> for QuestionId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        QuestionId::new(raw).map_err(serde::de::Error::custom)
    }
}

/// Kleene truth value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truth {
    Yes,
    No,
    Unknown,
}

impl Truth {
    pub const ALL: [Truth; 3] = [Truth::Yes, Truth::No, Truth::Unknown];

    pub fn and(self, other: Truth) -> Truth {
        match (self, other) {
            (Truth::No, _) | (_, Truth::No) => Truth::No,
            (Truth::Yes, Truth::Yes) => Truth::Yes,
            _ => Truth::Unknown,
        }
    }

    pub fn or(self, other: Truth) -> Truth {
        match (self, other) {
            (Truth::Yes, _) | (_, Truth::Yes) => Truth::Yes,
            (Truth::No, Truth::No) => Truth::No,
            _ => Truth::Unknown,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Truth::Yes => "yes",
            Truth::No => "no",
            Truth::Unknown => "unknown",
        }
    }
}

impl From<bool> for Truth {
    fn from(b: bool) -> Self {
        if b {
            Truth::Yes
        } else {
            Truth::No
        }
    }
}

impl Not for Truth {
    type Output = Truth;
    fn not(self) -> Truth {
        match self {
            Truth::Yes => Truth::No,
            Truth::No => Truth::Yes,
            Truth::Unknown => Truth::Unknown,
        }
    }
}

impl BitAnd for Truth {
    type Output = Truth;
    fn bitand(self, rhs: Truth) -> Truth {
        self.and(rhs)
    }
}

impl BitOr for Truth {
    type Output = Truth;
    fn bitor(self, rhs: Truth) -> Truth {
        self.or(rhs)
    }
}

impl fmt::Display for Truth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A recorded answer value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Answer {
    Yes,
    No,
    /// "Not found in the documentation" and similar non-answers.
    Unknown,
    Choice(String),
    Text(String),
}

impl Answer {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Answer::Yes | Answer::No => "yes/no",
            Answer::Unknown => "unknown",
            Answer::Choice(_) => "choice",
            Answer::Text(_) => "text",
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::Yes => f.write_str("yes"),
            Answer::No => f.write_str("no"),
            Answer::Unknown => f.write_str("unknown"),
            Answer::Choice(c) => f.write_str(c),
            Answer::Text(t) => f.write_str(t),
        }
    }
}

/// Partial map from question id to answer; absence means not yet answered.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnswerBindings(BTreeMap<QuestionId, Answer>);

impl AnswerBindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: &str) -> Option<&Answer> {
        self.0.get(id)
    }

    pub fn insert(&mut self, id: QuestionId, answer: Answer) -> Option<Answer> {
        self.0.insert(id, answer)
    }

    pub fn remove(&mut self, id: &str) -> Option<Answer> {
        self.0.remove(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.0.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&QuestionId, &Answer)> {
        self.0.iter()
    }

    /// True when `self` contains every binding of `other` unchanged.
    pub fn extends(&self, other: &AnswerBindings) -> bool {
        other.iter().all(|(k, v)| self.0.get(k) == Some(v))
    }
}

impl FromIterator<(QuestionId, Answer)> for AnswerBindings {
    fn from_iter<I: IntoIterator<Item = (QuestionId, Answer)>>(iter: I) -> Self {
        AnswerBindings(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Literal {
    Yes,
    No,
    Choice(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Yes => f.write_str("yes"),
            Literal::No => f.write_str("no"),
            Literal::Choice(token) => {
                f.write_str("\"")?;
                for ch in token.chars() {
                    if ch == '"' || ch == '\\' {
                        f.write_str("\\")?;
                    }
                    write!(f, "{ch}")?;
                }
                f.write_str("\"")
            }
        }
    }
}

/// Parsed condition.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    AnswerEquals(QuestionId, Literal),
    IsUnknown(QuestionId),
    IsAnswered(QuestionId),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Const(bool),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("question `{question}` is compared with {literal} but holds a {found} answer")]
    TypeMismatch {
        question: QuestionId,
        literal: String,
        found: &'static str,
    },
}

impl Expr {
    pub fn and(lhs: Expr, rhs: Expr) -> Expr {
        Expr::And(Box::new(lhs), Box::new(rhs))
    }

    pub fn or(lhs: Expr, rhs: Expr) -> Expr {
        Expr::Or(Box::new(lhs), Box::new(rhs))
    }

    pub fn negate(inner: Expr) -> Expr {
        Expr::Not(Box::new(inner))
    }

    pub fn equals(question: QuestionId, literal: Literal) -> Expr {
        Expr::AnswerEquals(question, literal)
    }

    /// Evaluate under strong Kleene semantics.
    pub fn evaluate(&self, bindings: &AnswerBindings) -> Result<Truth, EvalError> {
        Ok(match self {
            Expr::Const(b) => Truth::from(*b),
            Expr::AnswerEquals(q, literal) => match bindings.get(q.as_str()) {
                None | Some(Answer::Unknown) => Truth::Unknown,
                Some(answer) => Truth::from(literal_matches(q, literal, answer)?),
            },
            Expr::IsUnknown(q) => Truth::from(matches!(
                bindings.get(q.as_str()),
                None | Some(Answer::Unknown)
            )),
            Expr::IsAnswered(q) => Truth::from(bindings.contains(q.as_str())),
            Expr::Not(inner) => !inner.evaluate(bindings)?,
            // Both sides are evaluated so type errors surface regardless of order.
            Expr::And(l, r) => l.evaluate(bindings)? & r.evaluate(bindings)?,
            Expr::Or(l, r) => l.evaluate(bindings)? | r.evaluate(bindings)?,
        })
    }

    /// Every question id appearing in a leaf.
    pub fn referenced_questions(&self) -> BTreeSet<QuestionId> {
        let mut out = BTreeSet::new();
        self.visit_leaves(&mut |leaf| match leaf {
            Expr::AnswerEquals(q, _) | Expr::IsUnknown(q) | Expr::IsAnswered(q) => {
                out.insert(q.clone());
            }
            _ => {}
        });
        out
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        self.visit_leaves(&mut |leaf| out.push(leaf));
        out
    }

    fn visit_leaves<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        match self {
            Expr::Not(inner) => inner.visit_leaves(f),
            Expr::And(l, r) | Expr::Or(l, r) => {
                l.visit_leaves(f);
                r.visit_leaves(f);
            }
            leaf => f(leaf),
        }
    }

    /// Leaves whose truth values determined the overall result, with those values.
    ///
    /// For a conjunction that is `no` this is the conjuncts that are `no`; for
    /// one that is `unknown` the conjuncts that are `unknown`; dually for `or`.
    pub fn decisive_leaves(
        &self,
        bindings: &AnswerBindings,
    ) -> Result<Vec<(&Expr, Truth)>, EvalError> {
        let mut out = Vec::new();
        self.collect_decisive(bindings, &mut out)?;
        Ok(out)
    }

    fn collect_decisive<'a>(
        &'a self,
        bindings: &AnswerBindings,
        out: &mut Vec<(&'a Expr, Truth)>,
    ) -> Result<(), EvalError> {
        match self {
            Expr::Not(inner) => inner.collect_decisive(bindings, out),
            Expr::And(l, r) | Expr::Or(l, r) => {
                let total = self.evaluate(bindings)?;
                let short = if matches!(self, Expr::And(..)) {
                    Truth::No
                } else {
                    Truth::Yes
                };
                for side in [l, r] {
                    let value = side.evaluate(bindings)?;
                    let decisive = if total == short || total == Truth::Unknown {
                        value == total
                    } else {
                        true
                    };
                    if decisive {
                        side.collect_decisive(bindings, out)?;
                    }
                }
                Ok(())
            }
            leaf => {
                out.push((leaf, leaf.evaluate(bindings)?));
                Ok(())
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Or(..) => 1,
            Expr::And(..) => 2,
            Expr::Not(..) => 3,
            _ => 4,
        }
    }

    fn fmt_at(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        let parens = self.precedence() < min_prec;
        if parens {
            f.write_str("(")?;
        }
        match self {
            Expr::Const(true) => f.write_str("true")?,
            Expr::Const(false) => f.write_str("false")?,
            Expr::AnswerEquals(q, lit) => write!(f, "{q} == {lit}")?,
            Expr::IsUnknown(q) => write!(f, "unknown({q})")?,
            Expr::IsAnswered(q) => write!(f, "answered({q})")?,
            Expr::Not(inner) => {
                f.write_str("not ")?;
                inner.fmt_at(f, 3)?;
            }
            // Left-associative: the right operand binds one level tighter.
            Expr::And(l, r) => {
                l.fmt_at(f, 2)?;
                f.write_str(" and ")?;
                r.fmt_at(f, 3)?;
            }
            Expr::Or(l, r) => {
                l.fmt_at(f, 1)?;
                f.write_str(" or ")?;
                r.fmt_at(f, 2)?;
            }
        }
        if parens {
            f.write_str(")")?;
        }
        Ok(())
    }
}

fn literal_matches(q: &QuestionId, literal: &Literal, answer: &Answer) -> Result<bool, EvalError> {
    match (literal, answer) {
        (Literal::Yes, Answer::Yes) | (Literal::No, Answer::No) => Ok(true),
        (Literal::Yes, Answer::No) | (Literal::No, Answer::Yes) => Ok(false),
        (Literal::Choice(want), Answer::Choice(got)) => Ok(want == got),
        (_, found) => Err(EvalError::TypeMismatch {
            question: q.clone(),
            literal: literal.to_string(),
            found: found.kind_name(),
        }),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_at(f, 0)
    }
}

impl FromStr for Expr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("condition parse error at byte {offset}: expected {}, found {found}", .expected.join(" or "))]
pub struct ParseError {
    pub offset: usize,
    pub expected: Vec<&'static str>,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Keyword(&'static str),
    Str(String),
    LParen,
    RParen,
    EqEq,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(id) => alloc::format!("identifier `{id}`"),
            Tok::Keyword(k) => alloc::format!("`{k}`"),
            Tok::Str(_) => "quoted string".to_owned(),
            Tok::LParen => "`(`".to_owned(),
            Tok::RParen => "`)`".to_owned(),
            Tok::EqEq => "`==`".to_owned(),
            Tok::End => "end of input".to_owned(),
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn next_token(&mut self) -> Result<(usize, Tok), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&b) = bytes.get(start) else {
            return Ok((start, Tok::End));
        };
        let tok = match b {
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b'=' if bytes.get(start + 1) == Some(&b'=') => {
                self.pos += 2;
                Tok::EqEq
            }
            b'"' => {
                let mut value = String::new();
                let mut i = start + 1;
                loop {
                    match bytes.get(i) {
                        None => {
                            return Err(ParseError {
                                offset: i,
                                expected: alloc::vec!["closing `\"`"],
                                found: "end of input".to_owned(),
                            })
                        }
                        Some(b'"') => break,
                        Some(b'\\') if matches!(bytes.get(i + 1), Some(b'"' | b'\\')) => {
                            value.push(bytes[i + 1] as char);
                            i += 2;
                        }
                        Some(&c) if c.is_ascii() && !c.is_ascii_control() => {
                            value.push(c as char);
                            i += 1;
                        }
                        Some(_) => return Err(self.bad_char(i)),
                    }
                }
                self.pos = i + 1;
                Tok::Str(value)
            }
            c if c.is_ascii_alphabetic() => {
                let mut end = start + 1;
                while end < bytes.len()
                    && (bytes[end].is_ascii_alphanumeric()
                        || matches!(bytes[end], b'_' | b'.' | b'-'))
                {
                    end += 1;
                }
                self.pos = end;
                let word = &self.src[start..end];
                match KEYWORDS.iter().find(|k| **k == word) {
                    Some(k) => Tok::Keyword(k),
                    None => Tok::Ident(word.to_owned()),
                }
            }
            _ => return Err(self.bad_char(start)),
        };
        Ok((start, tok))
    }

    fn bad_char(&self, at: usize) -> ParseError {
        let found = self.src[at..]
            .chars()
            .next()
            .map(|c| alloc::format!("character {c:?}"))
            .unwrap_or_else(|| "end of input".to_owned());
        ParseError {
            offset: at,
            expected: alloc::vec!["ASCII token"],
            found,
        }
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    peeked: (usize, Tok),
    depth: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, ParseError> {
        let mut lexer = Lexer { src, pos: 0 };
        let peeked = lexer.next_token()?;
        Ok(Parser {
            lexer,
            peeked,
            depth: 0,
        })
    }

    fn bump(&mut self) -> Result<(usize, Tok), ParseError> {
        let next = self.lexer.next_token()?;
        Ok(core::mem::replace(&mut self.peeked, next))
    }

    fn error(&self, expected: Vec<&'static str>) -> ParseError {
        ParseError {
            offset: self.peeked.0,
            expected,
            found: self.peeked.1.describe(),
        }
    }

    fn is_keyword(&self, k: &str) -> bool {
        matches!(&self.peeked.1, Tok::Keyword(word) if *word == k)
    }

    fn expect(&mut self, tok: Tok, name: &'static str) -> Result<(), ParseError> {
        if self.peeked.1 == tok {
            self.bump()?;
            Ok(())
        } else {
            Err(self.error(alloc::vec![name]))
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(ParseError {
                offset: self.peeked.0,
                expected: alloc::vec!["shallower nesting"],
                found: "nesting deeper than 128 levels".to_owned(),
            });
        }
        Ok(())
    }

    fn or_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.and_expr()?;
        while self.is_keyword("or") {
            self.bump()?;
            lhs = Expr::or(lhs, self.and_expr()?);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while self.is_keyword("and") {
            self.bump()?;
            lhs = Expr::and(lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let out = if self.is_keyword("not") {
            self.bump()?;
            Expr::negate(self.unary()?)
        } else {
            self.atom()?
        };
        self.depth -= 1;
        Ok(out)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peeked.1.clone() {
            Tok::LParen => {
                self.bump()?;
                let inner = self.or_expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Keyword("true") => {
                self.bump()?;
                Ok(Expr::Const(true))
            }
            Tok::Keyword("false") => {
                self.bump()?;
                Ok(Expr::Const(false))
            }
            Tok::Keyword(k @ ("unknown" | "answered")) => {
                self.bump()?;
                self.expect(Tok::LParen, "`(`")?;
                let id = self.question_id()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(if k == "unknown" {
                    Expr::IsUnknown(id)
                } else {
                    Expr::IsAnswered(id)
                })
            }
            Tok::Ident(_) => {
                let id = self.question_id()?;
                self.expect(Tok::EqEq, "`==`")?;
                let literal = match self.peeked.1.clone() {
                    Tok::Keyword("yes") => Literal::Yes,
                    Tok::Keyword("no") => Literal::No,
                    Tok::Str(s) => Literal::Choice(s),
                    _ => return Err(self.error(alloc::vec!["`yes`", "`no`", "quoted string"])),
                };
                self.bump()?;
                Ok(Expr::AnswerEquals(id, literal))
            }
            _ => Err(self.error(alloc::vec![
                "`(`",
                "`not`",
                "`true`",
                "`false`",
                "`unknown(`",
                "`answered(`",
                "question id",
            ])),
        }
    }

    fn question_id(&mut self) -> Result<QuestionId, ParseError> {
        match self.peeked.1.clone() {
            Tok::Ident(id) => {
                self.bump()?;
                Ok(QuestionId(id))
            }
            _ => Err(self.error(alloc::vec!["question id"])),
        }
    }
}

/// Parse condition source text.
pub fn parse(source: &str) -> Result<Expr, ParseError> {
    let mut parser = Parser::new(source)?;
    let expr = parser.or_expr()?;
    if parser.peeked.1 != Tok::End {
        return Err(parser.error(alloc::vec!["`and`", "`or`", "end of input"]));
    }
    Ok(expr)
}
