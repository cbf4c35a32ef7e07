//! The per-record filter expression language.
//!
//! Grammar:
//! ```text
//! expr := or
//! or   := and ('||' and)*
//! and  := cmp ('&&' cmp)*
//! cmp  := '!' cmp | '(' expr ')' | term op term
//!       | 'accept' | 'reject' | 'true' | 'false'
//!       | 'if' '(' expr ')' 'then' expr 'else' expr
//! op   := '==' | '!=' | '<' | '<=' | '>' | '>='
//! ```
//! Terms are double-quoted interpolated strings, bare `{{name}}`
//! placeholders, or bare numbers. `==`/`!=` compares numerically when
//! either side is a bare number, byte-wise as strings otherwise; the
//! ordering operators always compare numerically.

use thiserror::Error;

use crate::bindings::Environment;
use crate::emitters::EscapeSet;
use crate::templates;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterDecision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumOp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
    Ne,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    /// Text with `{{name}}` placeholders, interpolated at evaluation.
    Interp(String),
    /// Bare numeric literal.
    Num(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum FilterExpr {
    StrEq(Term, Term),
    StrNe(Term, Term),
    NumCmp(NumOp, Term, Term),
    And(Box<FilterExpr>, Box<FilterExpr>),
    Or(Box<FilterExpr>, Box<FilterExpr>),
    Not(Box<FilterExpr>),
    ConstTrue,
    ConstFalse,
    Accept,
    Reject,
    IfThenElse(Box<FilterExpr>, Box<FilterExpr>, Box<FilterExpr>),
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("filter syntax error at byte {position}: expected {expected}")]
pub struct SyntaxError {
    pub position: usize,
    pub expected: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FilterError {
    #[error("`{term}` is not a number (value `{value}`)")]
    NotANumber { term: String, value: String },
    #[error("in filter term: {0}")]
    Interp(#[from] templates::RenderError),
    #[error("bad filter term `{0}`")]
    BadTerm(String),
}

/// Byte-wise string equality, the single primitive behind all the
/// string-equality filter forms.
pub fn string_compare(a: &str, b: &str) -> bool {
    a.as_bytes() == b.as_bytes()
}

/// Decimal real with optional sign, fraction, and exponent.
pub(crate) fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    let rest = s.strip_prefix(['+', '-']).unwrap_or(s);
    let (mantissa, exponent) = match rest.split_once(['e', 'E']) {
        Some((m, e)) => (m, Some(e)),
        None => (rest, None),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (mantissa, None),
    };
    let digits = |t: &str| !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit());
    let mantissa_ok = match frac_part {
        Some(f) => digits(int_part) && digits(f) || digits(int_part) && f.is_empty() || int_part.is_empty() && digits(f),
        None => digits(int_part),
    };
    if !mantissa_ok {
        return None;
    }
    if let Some(e) = exponent {
        let e = e.strip_prefix(['+', '-']).unwrap_or(e);
        if !digits(e) {
            return None;
        }
    }
    s.parse().ok()
}

pub fn parse_filter(src: &str) -> Result<FilterExpr, SyntaxError> {
    let mut parser = Parser { src, pos: 0 };
    let expr = parser.expr()?;
    parser.skip_ws();
    if parser.pos != src.len() {
        return Err(parser.err("end of input"));
    }
    Ok(expr)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, expected: &str) -> SyntaxError {
        SyntaxError {
            position: self.pos,
            expected: expected.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with([' ', '\t', '\n', '\r']) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn eat_keyword(&mut self, word: &str) -> bool {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        if rest.starts_with(word) {
            let after = &rest[word.len()..];
            if after
                .chars()
                .next()
                .is_none_or(|c| !c.is_ascii_alphanumeric() && c != '_')
            {
                self.pos += word.len();
                return true;
            }
        }
        false
    }

    fn expr(&mut self) -> Result<FilterExpr, SyntaxError> {
        let mut lhs = self.and_expr()?;
        while self.eat("||") {
            let rhs = self.and_expr()?;
            lhs = FilterExpr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<FilterExpr, SyntaxError> {
        let mut lhs = self.cmp_expr()?;
        while self.eat("&&") {
            let rhs = self.cmp_expr()?;
            lhs = FilterExpr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn cmp_expr(&mut self) -> Result<FilterExpr, SyntaxError> {
        self.skip_ws();
        if self.eat("!") && {
            // `!=` would have been part of a comparison; backtrack.
            if self.src[self.pos..].starts_with('=') {
                self.pos -= 1;
                false
            } else {
                true
            }
        } {
            return Ok(FilterExpr::Not(Box::new(self.cmp_expr()?)));
        }
        if self.eat_keyword("accept") {
            return Ok(FilterExpr::Accept);
        }
        if self.eat_keyword("reject") {
            return Ok(FilterExpr::Reject);
        }
        if self.eat_keyword("true") {
            return Ok(FilterExpr::ConstTrue);
        }
        if self.eat_keyword("false") {
            return Ok(FilterExpr::ConstFalse);
        }
        if self.eat_keyword("if") {
            if !self.eat("(") {
                return Err(self.err("`(`"));
            }
            let cond = self.expr()?;
            if !self.eat(")") {
                return Err(self.err("`)`"));
            }
            if !self.eat_keyword("then") {
                return Err(self.err("`then`"));
            }
            let then_branch = self.expr()?;
            if !self.eat_keyword("else") {
                return Err(self.err("`else`"));
            }
            let else_branch = self.expr()?;
            return Ok(FilterExpr::IfThenElse(
                Box::new(cond),
                Box::new(then_branch),
                Box::new(else_branch),
            ));
        }
        if self.eat("(") {
            let inner = self.expr()?;
            if !self.eat(")") {
                return Err(self.err("`)`"));
            }
            return Ok(inner);
        }
        let lhs = self.term()?;
        self.skip_ws();
        let op = if self.eat("==") {
            NumOp::Eq
        } else if self.eat("!=") {
            NumOp::Ne
        } else if self.eat("<=") {
            NumOp::Le
        } else if self.eat(">=") {
            NumOp::Ge
        } else if self.eat("<") {
            NumOp::Lt
        } else if self.eat(">") {
            NumOp::Gt
        } else {
            return Err(self.err("comparison operator"));
        };
        let rhs = self.term()?;
        let numeric = matches!(lhs, Term::Num(_)) || matches!(rhs, Term::Num(_));
        Ok(match op {
            NumOp::Eq if !numeric => FilterExpr::StrEq(lhs, rhs),
            NumOp::Ne if !numeric => FilterExpr::StrNe(lhs, rhs),
            op => FilterExpr::NumCmp(op, lhs, rhs),
        })
    }

    fn term(&mut self) -> Result<Term, SyntaxError> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        if let Some(after) = rest.strip_prefix('"') {
            let close = after.find('"').ok_or_else(|| self.err("closing `\"`"))?;
            let inner = &after[..close];
            self.pos += close + 2;
            return Ok(Term::Interp(inner.to_string()));
        }
        if rest.starts_with("{{") {
            let close = rest.find("}}").ok_or_else(|| self.err("`}}`"))?;
            let text = &rest[..close + 2];
            self.pos += text.len();
            return Ok(Term::Interp(text.to_string()));
        }
        let end = rest
            .find(|c: char| !(c.is_ascii_digit() || matches!(c, '+' | '-' | '.' | 'e' | 'E')))
            .unwrap_or(rest.len());
        if end > 0 {
            if let Some(value) = parse_number(&rest[..end]) {
                self.pos += end;
                return Ok(Term::Num(value));
            }
        }
        Err(self.err("term (quoted string, placeholder, or number)"))
    }
}

/// Intermediate evaluation value: a boolean, or a final decision that
/// short-circuits the rest of the expression.
enum Eval {
    Bool(bool),
    Final(FilterDecision),
}

fn interp(text: &str, env: &Environment) -> Result<String, FilterError> {
    let tpl = templates::parse_template(text)
        .map_err(|e| FilterError::BadTerm(format!("{text}: {e}")))?;
    Ok(templates::render(&tpl, env, &EscapeSet::none())?)
}

fn term_string(term: &Term, env: &Environment) -> Result<String, FilterError> {
    match term {
        Term::Interp(text) => interp(text, env),
        Term::Num(value) => Ok(value.to_string()),
    }
}

fn term_number(term: &Term, env: &Environment) -> Result<f64, FilterError> {
    match term {
        Term::Num(value) => Ok(*value),
        Term::Interp(text) => {
            let value = interp(text, env)?;
            parse_number(&value).ok_or_else(|| FilterError::NotANumber {
                term: text.clone(),
                value,
            })
        }
    }
}

fn eval(expr: &FilterExpr, env: &Environment) -> Result<Eval, FilterError> {
    Ok(match expr {
        FilterExpr::ConstTrue => Eval::Bool(true),
        FilterExpr::ConstFalse => Eval::Bool(false),
        FilterExpr::Accept => Eval::Final(FilterDecision::Accept),
        FilterExpr::Reject => Eval::Final(FilterDecision::Reject),
        FilterExpr::StrEq(a, b) => {
            Eval::Bool(string_compare(&term_string(a, env)?, &term_string(b, env)?))
        }
        FilterExpr::StrNe(a, b) => {
            Eval::Bool(!string_compare(&term_string(a, env)?, &term_string(b, env)?))
        }
        FilterExpr::NumCmp(op, a, b) => {
            let a = term_number(a, env)?;
            let b = term_number(b, env)?;
            Eval::Bool(match op {
                NumOp::Lt => a < b,
                NumOp::Le => a <= b,
                NumOp::Eq => a == b,
                NumOp::Ge => a >= b,
                NumOp::Gt => a > b,
                NumOp::Ne => a != b,
            })
        }
        FilterExpr::And(lhs, rhs) => match eval(lhs, env)? {
            Eval::Final(d) => Eval::Final(d),
            Eval::Bool(false) => Eval::Bool(false),
            Eval::Bool(true) => eval(rhs, env)?,
        },
        FilterExpr::Or(lhs, rhs) => match eval(lhs, env)? {
            Eval::Final(d) => Eval::Final(d),
            Eval::Bool(true) => Eval::Bool(true),
            Eval::Bool(false) => eval(rhs, env)?,
        },
        FilterExpr::Not(inner) => match eval(inner, env)? {
            Eval::Final(d) => Eval::Final(d),
            Eval::Bool(b) => Eval::Bool(!b),
        },
        FilterExpr::IfThenElse(cond, then_branch, else_branch) => match eval(cond, env)? {
            Eval::Final(d) => Eval::Final(d),
            Eval::Bool(true) => eval(then_branch, env)?,
            Eval::Bool(false) => eval(else_branch, env)?,
        },
    })
}

/// Evaluate a filter to a total accept/reject decision.
pub fn evaluate(expr: &FilterExpr, env: &Environment) -> Result<FilterDecision, FilterError> {
    Ok(match eval(expr, env)? {
        Eval::Final(d) => d,
        Eval::Bool(true) => FilterDecision::Accept,
        Eval::Bool(false) => FilterDecision::Reject,
    })
}
