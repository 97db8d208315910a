//! Java expression trees for guard conditions.
//!
//! Conditions are parsed into a small tree so that substitution respects
//! identifier boundaries and operator precedence. Anything the parser does
//! not model (lambdas, method references, switch expressions) is kept as
//! verbatim [`Expr::Opaque`] text.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::lexer::{self, Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Name(String),
    /// Literal or keyword primary (`this`, `null`, `true`, `42`, `"s"`).
    Literal(String),
    Unary {
        op: &'static str,
        operand: Box<Expr>,
    },
    Postfix {
        op: &'static str,
        operand: Box<Expr>,
    },
    Binary {
        op: &'static str,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Ternary {
        cond: Box<Expr>,
        then: Box<Expr>,
        otherwise: Box<Expr>,
    },
    InstanceOf {
        operand: Box<Expr>,
        ty: String,
    },
    Cast {
        ty: String,
        operand: Box<Expr>,
    },
    Call {
        receiver: Option<Box<Expr>>,
        name: String,
        args: Vec<Expr>,
    },
    Field {
        target: Box<Expr>,
        name: String,
    },
    Index {
        target: Box<Expr>,
        index: Box<Expr>,
    },
    New {
        ty: String,
        args: Vec<Expr>,
    },
    /// Explicit grouping introduced by substitution; always rendered with
    /// parentheses.
    Group(Box<Expr>),
    Opaque(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty expression")]
    Empty,
    #[error("unexpected token `{found}` at offset {offset}")]
    Unexpected { found: String, offset: usize },
    #[error("unexpected end of expression")]
    Eof,
    #[error(transparent)]
    Lex(#[from] lexer::LexError),
}

const ATOM: u8 = 16;
const POSTFIX: u8 = 15;
const UNARY: u8 = 14;
const TERNARY: u8 = 2;
const ASSIGN: u8 = 1;

/// (operator, precedence). Higher binds tighter.
const BINARY_OPS: &[(&str, u8)] = &[
    ("||", 3),
    ("&&", 4),
    ("|", 5),
    ("^", 6),
    ("&", 7),
    ("==", 8),
    ("!=", 8),
    ("<", 9),
    (">", 9),
    ("<=", 9),
    (">=", 9),
    ("<<", 10),
    (">>", 10),
    (">>>", 10),
    ("+", 11),
    ("-", 11),
    ("*", 12),
    ("/", 12),
    ("%", 12),
    ("=", ASSIGN),
    ("+=", ASSIGN),
    ("-=", ASSIGN),
    ("*=", ASSIGN),
    ("/=", ASSIGN),
    ("%=", ASSIGN),
    ("&=", ASSIGN),
    ("|=", ASSIGN),
    ("^=", ASSIGN),
    ("<<=", ASSIGN),
    (">>=", ASSIGN),
    (">>>=", ASSIGN),
];

const PRIMITIVES: &[&str] = &["int", "long", "short", "byte", "char", "boolean", "float", "double"];

fn binary_op(text: &str) -> Option<(&'static str, u8)> {
    BINARY_OPS.iter().find(|(op, _)| *op == text).copied()
}

fn unary_op(text: &str) -> Option<&'static str> {
    ["!", "-", "+", "~", "++", "--"].into_iter().find(|op| *op == text)
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        let tokens = lexer::tokenize(src)?;
        if tokens.is_empty() {
            return Err(ParseError::Empty);
        }
        let mut p = Parser { src, tokens, pos: 0 };
        let expr = p.expr(0)?;
        match p.peek() {
            None => Ok(expr),
            Some(t) => Err(ParseError::Unexpected { found: t.text.to_string(), offset: t.start }),
        }
    }

    /// Parses `src`, falling back to an opaque node when the text is not an
    /// expression this module models.
    pub fn parse_or_opaque(src: &str) -> Expr {
        Expr::parse(src).unwrap_or_else(|_| Expr::Opaque(src.trim().to_string()))
    }

    pub fn name(n: impl Into<String>) -> Expr {
        Expr::Name(n.into())
    }

    pub fn binary(op: &str, lhs: Expr, rhs: Expr) -> Expr {
        let (op, _) = binary_op(op).expect("known binary operator");
        Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Name(_)
            | Expr::Literal(_)
            | Expr::Call { .. }
            | Expr::Field { .. }
            | Expr::Index { .. }
            | Expr::New { .. }
            | Expr::Group(_) => ATOM,
            Expr::Postfix { .. } => POSTFIX,
            Expr::Unary { .. } | Expr::Cast { .. } => UNARY,
            Expr::Binary { op, .. } => binary_op(op).map_or(0, |(_, p)| p),
            Expr::InstanceOf { .. } => 9,
            Expr::Ternary { .. } => TERNARY,
            Expr::Opaque(text) => {
                if lexer::tokenize_lossy(text).len() <= 1 {
                    ATOM
                } else {
                    0
                }
            }
        }
    }

    pub fn is_atomic(&self) -> bool {
        self.precedence() == ATOM
    }

    /// True for `||`, ternaries, assignments and unparsed text, which need
    /// parentheses when used as an operand of `&&`.
    pub fn binds_looser_than_and(&self) -> bool {
        self.precedence() < 4
    }

    /// Logical negation. Negating an already negated expression yields the
    /// inner expression rather than a double negation.
    pub fn negate(&self) -> Expr {
        match self {
            Expr::Unary { op: "!", operand } => strip_group(operand).clone(),
            Expr::Group(inner) => inner.negate(),
            other => Expr::Unary { op: "!", operand: Box::new(other.clone()) },
        }
    }

    /// Replaces every free occurrence of each mapped name. Compound
    /// replacements placed under an operator are wrapped in a group so the
    /// substituted value keeps its own grouping.
    pub fn substitute(&self, map: &BTreeMap<String, Expr>) -> Expr {
        if map.is_empty() {
            return self.clone();
        }
        let top = self.subst(map, false);
        match top {
            Expr::Group(inner) if !matches!(self, Expr::Group(_)) => *inner,
            other => other,
        }
    }

    fn subst(&self, map: &BTreeMap<String, Expr>, operand: bool) -> Expr {
        let sub = |e: &Expr| Box::new(e.subst(map, true));
        match self {
            Expr::Name(n) => match map.get(n) {
                Some(rep) if operand && !rep.is_atomic() => Expr::Group(Box::new(rep.clone())),
                Some(rep) => rep.clone(),
                None => self.clone(),
            },
            Expr::Literal(_) => self.clone(),
            Expr::Unary { op, operand } => Expr::Unary { op, operand: sub(operand) },
            Expr::Postfix { op, operand } => Expr::Postfix { op, operand: sub(operand) },
            Expr::Binary { op, lhs, rhs } => {
                // only the value side of an assignment is substituted
                let lhs = if binary_op(op).map(|(_, p)| p) == Some(ASSIGN) { lhs.clone() } else { sub(lhs) };
                Expr::Binary { op, lhs, rhs: sub(rhs) }
            }
            Expr::Ternary { cond, then, otherwise } => Expr::Ternary { cond: sub(cond), then: sub(then), otherwise: sub(otherwise) },
            Expr::InstanceOf { operand, ty } => Expr::InstanceOf { operand: sub(operand), ty: ty.clone() },
            Expr::Cast { ty, operand } => Expr::Cast { ty: ty.clone(), operand: sub(operand) },
            Expr::Call { receiver, name, args } => Expr::Call {
                receiver: receiver.as_ref().map(|r| sub(r)),
                name: name.clone(),
                args: args.iter().map(|a| a.subst(map, false)).collect(),
            },
            Expr::Field { target, name } => Expr::Field { target: sub(target), name: name.clone() },
            Expr::Index { target, index } => Expr::Index { target: sub(target), index: Box::new(index.subst(map, false)) },
            Expr::New { ty, args } => Expr::New { ty: ty.clone(), args: args.iter().map(|a| a.subst(map, false)).collect() },
            Expr::Group(inner) => Expr::Group(Box::new(inner.subst(map, false))),
            Expr::Opaque(text) => Expr::Opaque(substitute_text(text, map)),
        }
    }

    /// Names read by the expression: variables, and the leftmost segment of
    /// qualified accesses. Method and field names are not included.
    pub fn free_names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_names(&mut out);
        out
    }

    fn collect_names(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Name(n) => {
                out.insert(n.clone());
            }
            Expr::Literal(_) => {}
            Expr::Unary { operand, .. } | Expr::Postfix { operand, .. } | Expr::InstanceOf { operand, .. } | Expr::Cast { operand, .. } => {
                operand.collect_names(out)
            }
            Expr::Binary { lhs, rhs, .. } => {
                lhs.collect_names(out);
                rhs.collect_names(out);
            }
            Expr::Ternary { cond, then, otherwise } => {
                cond.collect_names(out);
                then.collect_names(out);
                otherwise.collect_names(out);
            }
            Expr::Call { receiver, args, .. } => {
                if let Some(r) = receiver {
                    r.collect_names(out);
                }
                args.iter().for_each(|a| a.collect_names(out));
            }
            Expr::Field { target, .. } => target.collect_names(out),
            Expr::Index { target, index } => {
                target.collect_names(out);
                index.collect_names(out);
            }
            Expr::New { args, .. } => args.iter().for_each(|a| a.collect_names(out)),
            Expr::Group(inner) => inner.collect_names(out),
            Expr::Opaque(text) => {
                for (_, tok) in free_ident_tokens(text) {
                    out.insert(tok.to_string());
                }
            }
        }
    }

    pub fn evaluate(&self, env: &BTreeMap<String, Value>) -> Result<Value, EvalError> {
        eval(self, env)
    }
}

fn strip_group(e: &Expr) -> &Expr {
    match e {
        Expr::Group(inner) => strip_group(inner),
        other => other,
    }
}

/// Identifier tokens of `text` that denote variables: not preceded by `.` or
/// `::` and not directly followed by `(`.
fn free_ident_tokens(text: &str) -> Vec<(usize, &str)> {
    let toks = lexer::tokenize_lossy(text);
    // names bound as lambda parameters anywhere in the text
    let mut bound = BTreeSet::new();
    for (i, t) in toks.iter().enumerate() {
        if !t.is_op("->") || i == 0 {
            continue;
        }
        if toks[i - 1].kind == TokenKind::Ident {
            bound.insert(toks[i - 1].text);
        } else if toks[i - 1].is_op(")") {
            let mut j = i - 1;
            while j > 0 && !toks[j].is_op("(") {
                j -= 1;
                // the last identifier before `,` or `)` is the parameter name
                if toks[j].kind == TokenKind::Ident && (toks[j + 1].is_op(",") || toks[j + 1].is_op(")")) {
                    bound.insert(toks[j].text);
                }
            }
        }
    }
    let mut out = Vec::new();
    for (i, t) in toks.iter().enumerate() {
        if t.kind != TokenKind::Ident || matches!(t.text, "true" | "false" | "null") || bound.contains(t.text) {
            continue;
        }
        let after_dot = i > 0 && (toks[i - 1].is_op(".") || toks[i - 1].is_op("::"));
        let call = toks.get(i + 1).is_some_and(|n| n.is_op("("));
        if !after_dot && !call {
            out.push((t.start, t.text));
        }
    }
    out
}

fn substitute_text(text: &str, map: &BTreeMap<String, Expr>) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for (start, name) in free_ident_tokens(text) {
        if let Some(rep) = map.get(name) {
            out.push_str(&text[last..start]);
            if rep.is_atomic() {
                out.push_str(&rep.to_string());
            } else {
                out.push('(');
                out.push_str(&rep.to_string());
                out.push(')');
            }
            last = start + name.len();
        }
    }
    out.push_str(&text[last..]);
    out
}

struct Parser<'a> {
    src: &'a str,
    tokens: Vec<Token<'a>>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token<'a>> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, ahead: usize) -> Option<&Token<'a>> {
        self.tokens.get(self.pos + ahead)
    }

    fn next(&mut self) -> Result<Token<'a>, ParseError> {
        let t = self.tokens.get(self.pos).cloned().ok_or(ParseError::Eof)?;
        self.pos += 1;
        Ok(t)
    }

    fn eat(&mut self, op: &str) -> bool {
        if self.peek().is_some_and(|t| t.is_op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, op: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if t.is_op(op) => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(ParseError::Unexpected { found: t.text.to_string(), offset: t.start }),
            None => Err(ParseError::Eof),
        }
    }

    fn unexpected(&self) -> ParseError {
        match self.peek() {
            Some(t) => ParseError::Unexpected { found: t.text.to_string(), offset: t.start },
            None => ParseError::Eof,
        }
    }

    fn span_text(&self, from: usize, to: usize) -> String {
        let start = self.tokens[from].start;
        let end = self.tokens[to - 1].end();
        self.src[start..end].to_string()
    }

    /// Index one past the token that closes the bracket opened at `open`.
    fn matching(&self, open: usize) -> Option<usize> {
        let mut depth = 0i32;
        for (i, t) in self.tokens.iter().enumerate().skip(open) {
            if t.is_op("(") || t.is_op("[") || t.is_op("{") {
                depth += 1;
            } else if t.is_op(")") || t.is_op("]") || t.is_op("}") {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
        }
        None
    }

    fn at_lambda(&self) -> bool {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Ident => self.peek_at(1).is_some_and(|n| n.is_op("->")),
            Some(t) if t.is_op("(") => self.matching(self.pos).and_then(|end| self.tokens.get(end)).is_some_and(|n| n.is_op("->")),
            _ => false,
        }
    }

    /// Consumes tokens up to a top-level `,` or closing bracket.
    fn opaque_until_delimiter(&mut self) -> Result<Expr, ParseError> {
        let from = self.pos;
        let mut depth = 0i32;
        while let Some(t) = self.peek() {
            if t.is_op("(") || t.is_op("[") || t.is_op("{") {
                depth += 1;
            } else if t.is_op(")") || t.is_op("]") || t.is_op("}") {
                if depth == 0 {
                    break;
                }
                depth -= 1;
            } else if t.is_op(",") && depth == 0 {
                break;
            }
            self.pos += 1;
        }
        if self.pos == from {
            return Err(self.unexpected());
        }
        Ok(Expr::Opaque(self.span_text(from, self.pos)))
    }

    fn expr(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        if self.at_lambda() {
            return self.opaque_until_delimiter();
        }
        let mut lhs = self.unary()?;
        while let Some(tok) = self.peek() {
            if tok.is_op("?") {
                if min_prec > TERNARY {
                    break;
                }
                self.pos += 1;
                let then = self.expr(0)?;
                self.expect(":")?;
                let otherwise = self.expr(TERNARY)?;
                lhs = Expr::Ternary { cond: Box::new(lhs), then: Box::new(then), otherwise: Box::new(otherwise) };
                continue;
            }
            if tok.kind == TokenKind::Keyword && tok.text == "instanceof" {
                if min_prec > 9 {
                    break;
                }
                self.pos += 1;
                let ty = self.type_text(true)?;
                lhs = Expr::InstanceOf { operand: Box::new(lhs), ty };
                continue;
            }
            if tok.kind != TokenKind::Operator {
                break;
            }
            let Some((op, prec)) = binary_op(tok.text) else { break };
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let rhs = if prec == ASSIGN { self.expr(prec)? } else { self.expr(prec + 1)? };
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        let tok = self.peek().ok_or(ParseError::Eof)?;
        if tok.kind == TokenKind::Operator {
            if let Some(op) = unary_op(tok.text) {
                self.pos += 1;
                let operand = self.unary()?;
                return Ok(Expr::Unary { op, operand: Box::new(operand) });
            }
        }
        if tok.is_op("(") {
            if let Some(cast) = self.try_cast()? {
                return Ok(cast);
            }
        }
        let primary = self.primary()?;
        self.postfix(primary)
    }

    fn try_cast(&mut self) -> Result<Option<Expr>, ParseError> {
        let save = self.pos;
        self.pos += 1;
        let first_is_primitive = self.peek().is_some_and(|t| PRIMITIVES.contains(&t.text));
        let first_upper = self.peek().is_some_and(|t| t.kind == TokenKind::Ident && t.text.starts_with(|c: char| c.is_ascii_uppercase()));
        if !(first_is_primitive || first_upper) {
            self.pos = save;
            return Ok(None);
        }
        let Ok(ty) = self.type_text(false) else {
            self.pos = save;
            return Ok(None);
        };
        if !self.eat(")") {
            self.pos = save;
            return Ok(None);
        }
        let operand_follows = self.peek().is_some_and(|t| {
            matches!(t.kind, TokenKind::Ident | TokenKind::IntLit | TokenKind::FloatLit | TokenKind::StringLit | TokenKind::CharLit)
                || t.is_op("(")
                || t.is_op("!")
                || t.is_op("~")
                || (t.kind == TokenKind::Keyword && matches!(t.text, "this" | "new" | "super"))
                || (first_is_primitive && (t.is_op("-") || t.is_op("+")))
        });
        if !operand_follows {
            self.pos = save;
            return Ok(None);
        }
        let operand = self.unary()?;
        Ok(Some(Expr::Cast { ty, operand: Box::new(operand) }))
    }

    /// Reads a type: qualified name with optional generic arguments and
    /// array dimensions. With `pattern`, an optional binding name follows.
    fn type_text(&mut self, pattern: bool) -> Result<String, ParseError> {
        let from = self.pos;
        if self.peek().is_some_and(|t| t.text == "final") {
            self.pos += 1;
        }
        loop {
            let t = self.next()?;
            if !(t.kind == TokenKind::Ident || PRIMITIVES.contains(&t.text)) {
                return Err(ParseError::Unexpected { found: t.text.to_string(), offset: t.start });
            }
            if self.peek().is_some_and(|t| t.is_op("<")) {
                let mut depth = 0i32;
                while let Some(t) = self.peek() {
                    match t.text {
                        "<" => depth += 1,
                        ">" => depth -= 1,
                        ">>" => depth -= 2,
                        ">>>" => depth -= 3,
                        "?" | "," | "." | "extends" | "super" | "[" | "]" => {}
                        _ if t.kind == TokenKind::Ident || PRIMITIVES.contains(&t.text) => {}
                        _ => return Err(self.unexpected()),
                    }
                    self.pos += 1;
                    if depth <= 0 {
                        break;
                    }
                }
            }
            if self.peek().is_some_and(|t| t.is_op(".")) && self.peek_at(1).is_some_and(|t| t.kind == TokenKind::Ident) {
                self.pos += 1;
                continue;
            }
            break;
        }
        while self.peek().is_some_and(|t| t.is_op("[")) && self.peek_at(1).is_some_and(|t| t.is_op("]")) {
            self.pos += 2;
        }
        if pattern && self.peek().is_some_and(|t| t.kind == TokenKind::Ident && !matches!(t.text, "true" | "false" | "null")) {
            self.pos += 1;
        }
        Ok(self.span_text(from, self.pos))
    }

    fn args(&mut self) -> Result<Vec<Expr>, ParseError> {
        self.expect("(")?;
        let mut args = Vec::new();
        if self.eat(")") {
            return Ok(args);
        }
        loop {
            args.push(self.expr(0)?);
            if self.eat(")") {
                return Ok(args);
            }
            self.expect(",")?;
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let tok = self.next()?;
        match tok.kind {
            TokenKind::IntLit | TokenKind::FloatLit | TokenKind::StringLit | TokenKind::CharLit => Ok(Expr::Literal(tok.text.to_string())),
            TokenKind::Ident if matches!(tok.text, "true" | "false" | "null") => Ok(Expr::Literal(tok.text.to_string())),
            TokenKind::Ident => {
                if self.peek().is_some_and(|t| t.is_op("(")) {
                    let args = self.args()?;
                    Ok(Expr::Call { receiver: None, name: tok.text.to_string(), args })
                } else {
                    Ok(Expr::Name(tok.text.to_string()))
                }
            }
            TokenKind::Keyword => match tok.text {
                "this" | "super" => {
                    if self.peek().is_some_and(|t| t.is_op("(")) {
                        let args = self.args()?;
                        Ok(Expr::Call { receiver: None, name: tok.text.to_string(), args })
                    } else {
                        Ok(Expr::Literal(tok.text.to_string()))
                    }
                }
                "new" => {
                    let start = self.pos - 1;
                    let ty = self.type_text(false)?;
                    if self.peek().is_some_and(|t| t.is_op("(")) {
                        let args = self.args()?;
                        if self.peek().is_some_and(|t| t.is_op("{")) {
                            // anonymous class body
                            let end = self.matching(self.pos).ok_or(ParseError::Eof)?;
                            self.pos = end;
                            return Ok(Expr::Opaque(self.span_text(start, end)));
                        }
                        Ok(Expr::New { ty, args })
                    } else {
                        // array creation: keep verbatim
                        while self.peek().is_some_and(|t| t.is_op("[") || t.is_op("{")) {
                            self.pos = self.matching(self.pos).ok_or(ParseError::Eof)?;
                        }
                        Ok(Expr::Opaque(self.span_text(start, self.pos)))
                    }
                }
                p if PRIMITIVES.contains(&p) => Ok(Expr::Name(p.to_string())),
                _ => Err(ParseError::Unexpected { found: tok.text.to_string(), offset: tok.start }),
            },
            TokenKind::Separator if tok.text == "(" => {
                let inner = self.expr(0)?;
                self.expect(")")?;
                Ok(inner)
            }
            _ => Err(ParseError::Unexpected { found: tok.text.to_string(), offset: tok.start }),
        }
    }

    fn postfix(&mut self, mut expr: Expr) -> Result<Expr, ParseError> {
        while let Some(tok) = self.peek() {
            if tok.is_op(".") {
                self.pos += 1;
                if self.peek().is_some_and(|t| t.is_op("<")) {
                    // explicit type arguments on a method call
                    while let Some(t) = self.peek() {
                        let close = t.is_op(">");
                        self.pos += 1;
                        if close {
                            break;
                        }
                    }
                }
                let name = self.next()?;
                if !matches!(name.kind, TokenKind::Ident | TokenKind::Keyword) {
                    return Err(ParseError::Unexpected { found: name.text.to_string(), offset: name.start });
                }
                if self.peek().is_some_and(|t| t.is_op("(")) {
                    let args = self.args()?;
                    expr = Expr::Call { receiver: Some(Box::new(expr)), name: name.text.to_string(), args };
                } else {
                    expr = Expr::Field { target: Box::new(expr), name: name.text.to_string() };
                }
            } else if tok.is_op("[") {
                self.pos += 1;
                let index = self.expr(0)?;
                self.expect("]")?;
                expr = Expr::Index { target: Box::new(expr), index: Box::new(index) };
            } else if tok.is_op("++") || tok.is_op("--") {
                let op = if tok.text == "++" { "++" } else { "--" };
                self.pos += 1;
                expr = Expr::Postfix { op, operand: Box::new(expr) };
            } else if tok.is_op("::") {
                self.pos += 1;
                let member = self.next()?;
                expr = Expr::Opaque(format!("{expr}::{}", member.text));
            } else {
                break;
            }
        }
        Ok(expr)
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    if e.precedence() < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

fn write_args(f: &mut fmt::Formatter<'_>, args: &[Expr]) -> fmt::Result {
    f.write_str("(")?;
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{a}")?;
    }
    f.write_str(")")
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Name(s) | Expr::Literal(s) | Expr::Opaque(s) => f.write_str(s),
            Expr::Unary { op, operand } => {
                f.write_str(op)?;
                let inner = if operand.precedence() < UNARY { format!("({operand})") } else { operand.to_string() };
                if (inner.starts_with('-') && op.ends_with('-')) || (inner.starts_with('+') && op.ends_with('+')) {
                    f.write_str(" ")?;
                }
                f.write_str(&inner)
            }
            Expr::Postfix { op, operand } => {
                write_operand(f, operand, POSTFIX)?;
                f.write_str(op)
            }
            Expr::Binary { op, lhs, rhs } => {
                let prec = binary_op(op).map_or(0, |(_, p)| p);
                if prec == ASSIGN {
                    write_operand(f, lhs, prec + 1)?;
                    write!(f, " {op} ")?;
                    write_operand(f, rhs, prec)
                } else {
                    write_operand(f, lhs, prec)?;
                    write!(f, " {op} ")?;
                    write_operand(f, rhs, prec + 1)
                }
            }
            Expr::Ternary { cond, then, otherwise } => {
                write_operand(f, cond, TERNARY + 1)?;
                f.write_str(" ? ")?;
                write_operand(f, then, TERNARY + 1)?;
                f.write_str(" : ")?;
                write_operand(f, otherwise, TERNARY)
            }
            Expr::InstanceOf { operand, ty } => {
                write_operand(f, operand, 9)?;
                write!(f, " instanceof {ty}")
            }
            Expr::Cast { ty, operand } => {
                write!(f, "({ty}) ")?;
                write_operand(f, operand, UNARY)
            }
            Expr::Call { receiver, name, args } => {
                if let Some(r) = receiver {
                    write_operand(f, r, ATOM)?;
                    f.write_str(".")?;
                }
                f.write_str(name)?;
                write_args(f, args)
            }
            Expr::Field { target, name } => {
                write_operand(f, target, ATOM)?;
                write!(f, ".{name}")
            }
            Expr::Index { target, index } => {
                write_operand(f, target, ATOM)?;
                write!(f, "[{index}]")
            }
            Expr::New { ty, args } => {
                write!(f, "new {ty}")?;
                write_args(f, args)
            }
            Expr::Group(inner) => write!(f, "({inner})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Value {
    Int(i64),
    Bool(bool),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound name `{0}`")]
    UnboundName(String),
    #[error("unsupported construct `{0}`")]
    UnsupportedConstruct(String),
    #[error("type mismatch in `{0}`")]
    TypeMismatch(String),
    #[error("division by zero in `{0}`")]
    DivisionByZero(String),
}

fn parse_int_literal(text: &str) -> Option<i64> {
    let t = text.trim_end_matches(['l', 'L']).replace('_', "");
    if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        i64::from_str_radix(hex, 16).ok()
    } else if let Some(bin) = t.strip_prefix("0b").or_else(|| t.strip_prefix("0B")) {
        i64::from_str_radix(bin, 2).ok()
    } else {
        t.parse().ok()
    }
}

fn eval(e: &Expr, env: &BTreeMap<String, Value>) -> Result<Value, EvalError> {
    let unsupported = || EvalError::UnsupportedConstruct(e.to_string());
    let mismatch = || EvalError::TypeMismatch(e.to_string());
    let int = |x: &Expr| match eval(x, env)? {
        Value::Int(i) => Ok(i),
        Value::Bool(_) => Err(mismatch()),
    };
    let boolean = |x: &Expr| match eval(x, env)? {
        Value::Bool(b) => Ok(b),
        Value::Int(_) => Err(mismatch()),
    };
    match e {
        Expr::Name(n) => env.get(n).copied().ok_or_else(|| EvalError::UnboundName(n.clone())),
        Expr::Literal(text) => match text.as_str() {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            t => parse_int_literal(t).map(Value::Int).ok_or_else(unsupported),
        },
        Expr::Group(inner) => eval(inner, env),
        Expr::Unary { op, operand } => match *op {
            "!" => Ok(Value::Bool(!boolean(operand)?)),
            "-" => Ok(Value::Int(int(operand)?.wrapping_neg())),
            "+" => Ok(Value::Int(int(operand)?)),
            "~" => Ok(Value::Int(!int(operand)?)),
            _ => Err(unsupported()),
        },
        Expr::Binary { op, lhs, rhs } => match *op {
            "&&" => Ok(Value::Bool(boolean(lhs)? && boolean(rhs)?)),
            "||" => Ok(Value::Bool(boolean(lhs)? || boolean(rhs)?)),
            "==" | "!=" => {
                let eq = match (eval(lhs, env)?, eval(rhs, env)?) {
                    (Value::Int(a), Value::Int(b)) => a == b,
                    (Value::Bool(a), Value::Bool(b)) => a == b,
                    _ => return Err(mismatch()),
                };
                Ok(Value::Bool(if *op == "==" { eq } else { !eq }))
            }
            "<" => Ok(Value::Bool(int(lhs)? < int(rhs)?)),
            ">" => Ok(Value::Bool(int(lhs)? > int(rhs)?)),
            "<=" => Ok(Value::Bool(int(lhs)? <= int(rhs)?)),
            ">=" => Ok(Value::Bool(int(lhs)? >= int(rhs)?)),
            "&" | "|" | "^" => match (eval(lhs, env)?, eval(rhs, env)?) {
                (Value::Bool(a), Value::Bool(b)) => Ok(Value::Bool(match *op {
                    "&" => a & b,
                    "|" => a | b,
                    _ => a ^ b,
                })),
                (Value::Int(a), Value::Int(b)) => Ok(Value::Int(match *op {
                    "&" => a & b,
                    "|" => a | b,
                    _ => a ^ b,
                })),
                _ => Err(mismatch()),
            },
            "+" => Ok(Value::Int(int(lhs)?.wrapping_add(int(rhs)?))),
            "-" => Ok(Value::Int(int(lhs)?.wrapping_sub(int(rhs)?))),
            "*" => Ok(Value::Int(int(lhs)?.wrapping_mul(int(rhs)?))),
            "/" | "%" => {
                let (a, b) = (int(lhs)?, int(rhs)?);
                if b == 0 {
                    return Err(EvalError::DivisionByZero(e.to_string()));
                }
                Ok(Value::Int(if *op == "/" { a.wrapping_div(b) } else { a.wrapping_rem(b) }))
            }
            "<<" => Ok(Value::Int(int(lhs)?.wrapping_shl(int(rhs)? as u32))),
            ">>" => Ok(Value::Int(int(lhs)?.wrapping_shr(int(rhs)? as u32))),
            _ => Err(unsupported()),
        },
        Expr::Ternary { cond, then, otherwise } => {
            if boolean(cond)? {
                eval(then, env)
            } else {
                eval(otherwise, env)
            }
        }
        _ => Err(unsupported()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rt(src: &str) -> String {
        Expr::parse(src).unwrap().to_string()
    }

    fn map(pairs: &[(&str, &str)]) -> BTreeMap<String, Expr> {
        pairs.iter().map(|(k, v)| (k.to_string(), Expr::parse(v).unwrap())).collect()
    }

    #[test]
    fn render_normalizes_spacing_and_parens() {
        assert_eq!(rt("x>0"), "x > 0");
        assert_eq!(rt("((a+1))==0"), "a + 1 == 0");
        assert_eq!(rt("(a+b)*c"), "(a + b) * c");
        assert_eq!(rt("a-(b-c)"), "a - (b - c)");
        assert_eq!(rt("a-b-c"), "a - b - c");
        assert_eq!(rt("!(x>0)"), "!(x > 0)");
        assert_eq!(rt("a && (b || c)"), "a && (b || c)");
        assert_eq!(rt("- -x"), "- -x");
    }

    #[test]
    fn calls_fields_and_casts() {
        assert_eq!(rt("s.length()==0"), "s.length() == 0");
        assert_eq!(rt("this.items.size()>=max"), "this.items.size() >= max");
        assert_eq!(rt("(int) x > 3"), "(int) x > 3");
        assert_eq!(rt("(String) o"), "(String) o");
        assert_eq!(rt("o instanceof Foo f && f.ok"), "o instanceof Foo f && f.ok");
        assert_eq!(rt("arr[i+1] != null"), "arr[i + 1] != null");
        assert_eq!(rt("a ? b : c"), "a ? b : c");
        assert_eq!(rt("new Foo(a, b).bar()"), "new Foo(a, b).bar()");
        assert_eq!(rt("Foo.class"), "Foo.class");
    }

    #[test]
    fn lambdas_are_opaque() {
        let e = Expr::parse("list.stream().anyMatch(x -> x > limit)").unwrap();
        assert_eq!(e.to_string(), "list.stream().anyMatch(x -> x > limit)");
        assert_eq!(e.free_names(), ["limit", "list"].iter().map(|s| s.to_string()).collect());
    }

    #[test]
    fn substitution_wraps_compound_operands() {
        let e = Expr::parse("v == 0").unwrap();
        assert_eq!(e.substitute(&map(&[("v", "a + 1")])).to_string(), "(a + 1) == 0");
        let e = Expr::parse("t > 10").unwrap();
        assert_eq!(e.substitute(&map(&[("t", "a * 2")])).to_string(), "(a * 2) > 10");
        let e = Expr::parse("check(v)").unwrap();
        assert_eq!(e.substitute(&map(&[("v", "a + 1")])).to_string(), "check(a + 1)");
        let e = Expr::parse("flag").unwrap();
        assert_eq!(e.substitute(&map(&[("flag", "a > 1")])).to_string(), "a > 1");
        let e = Expr::parse("!flag").unwrap();
        assert_eq!(e.substitute(&map(&[("flag", "a > 1")])).to_string(), "!(a > 1)");
    }

    #[test]
    fn substitution_respects_identifier_boundaries() {
        let e = Expr::parse("val > value").unwrap();
        assert_eq!(e.substitute(&map(&[("val", "k")])).to_string(), "k > value");
        let e = Expr::parse("this.val > val.size()").unwrap();
        assert_eq!(e.substitute(&map(&[("val", "k")])).to_string(), "this.val > k.size()");
        let e = Expr::Opaque("items.stream().anyMatch(x -> x > val)".into());
        assert_eq!(e.substitute(&map(&[("val", "a + 1")])).to_string(), "items.stream().anyMatch(x -> x > (a + 1))");
    }

    #[test]
    fn negation_never_doubles() {
        let e = Expr::parse("x > 0").unwrap();
        assert_eq!(e.negate().to_string(), "!(x > 0)");
        assert_eq!(e.negate().negate(), e);
        let e = Expr::parse("!done").unwrap();
        assert_eq!(e.negate().to_string(), "done");
    }

    #[test]
    fn evaluation() {
        let env: BTreeMap<String, Value> = [("a".to_string(), Value::Int(-1)), ("b".to_string(), Value::Bool(true))].into();
        let ev = |s: &str| Expr::parse(s).unwrap().evaluate(&env);
        assert_eq!(ev("a + 1 == 0"), Ok(Value::Bool(true)));
        assert_eq!(ev("a * 2 > 10"), Ok(Value::Bool(false)));
        assert_eq!(ev("!b || a / 0 == 1"), Err(EvalError::DivisionByZero("a / 0".into())));
        assert_eq!(ev("b || a / 0 == 1"), Ok(Value::Bool(true)));
        assert_eq!(ev("-7 % 3"), Ok(Value::Int(-1)));
        assert_eq!(ev("c > 0"), Err(EvalError::UnboundName("c".into())));
        assert!(matches!(ev("s.length() > 0"), Err(EvalError::UnsupportedConstruct(_))));
    }

    #[test]
    fn parse_errors() {
        assert_eq!(Expr::parse(""), Err(ParseError::Empty));
        assert!(Expr::parse("a +").is_err());
        assert!(Expr::parse("a b").is_err());
        assert!(matches!(Expr::parse_or_opaque("switch (x) { default -> 1 }"), Expr::Opaque(_)));
    }
}
