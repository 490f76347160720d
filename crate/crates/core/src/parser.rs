//! Concrete syntax: lexer, surface AST, monomorphic type inference and
//! elaboration into [`crate::lang`] terms.
//!
//! Program files hold two programs separated by a line that is exactly
//! `|||`. Comments are `(* ... *)` and nest.

use crate::lang::{self, APat, Annotation, Const, Expr, Lambda, Loc, Op, Type, REF_TMP, WILDCARD};
use num_bigint::BigInt;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

/// Line and column, both 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("{pos}: syntax error: {msg}")]
    Syntax { pos: Pos, msg: String },
    #[error("{pos}: type error: {msg}")]
    Type { pos: Pos, msg: String },
    #[error("the two programs have different types: {left} vs {right}")]
    SidesDiffer { left: String, right: String },
    #[error("no line consisting of `|||` separates the two programs")]
    MissingSeparator,
    #[error("elaborated term is ill-typed: {0}")]
    Check(#[from] lang::TypeError),
}

fn syntax<T>(pos: Pos, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError::Syntax {
        pos,
        msg: msg.into(),
    })
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Int(BigInt),
    Ident(String),
    Fun,
    Let,
    Rec,
    In,
    Ref,
    If,
    Then,
    Else,
    True,
    False,
    Not,
    Mod,
    Bot,
    As,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Semi,
    Arrow,
    Eq,
    EqEq,
    Neq,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    AndAnd,
    OrOr,
    Bar,
    Bang,
    Assign,
    PlusPlus,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Int(i) => return write!(f, "`{i}`"),
            Tok::Ident(x) => return write!(f, "`{x}`"),
            Tok::Fun => "fun",
            Tok::Let => "let",
            Tok::Rec => "rec",
            Tok::In => "in",
            Tok::Ref => "ref",
            Tok::If => "if",
            Tok::Then => "then",
            Tok::Else => "else",
            Tok::True => "true",
            Tok::False => "false",
            Tok::Not => "not",
            Tok::Mod => "mod",
            Tok::Bot => "_bot_",
            Tok::As => "as",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Comma => ",",
            Tok::Semi => ";",
            Tok::Arrow => "->",
            Tok::Eq => "=",
            Tok::EqEq => "==",
            Tok::Neq => "<>",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::AndAnd => "&&",
            Tok::OrOr => "||",
            Tok::Bar => "|",
            Tok::Bang => "!",
            Tok::Assign => ":=",
            Tok::PlusPlus => "++",
            Tok::Eof => return write!(f, "end of input"),
        };
        write!(f, "`{s}`")
    }
}

fn keyword(word: &str) -> Option<Tok> {
    Some(match word {
        "fun" => Tok::Fun,
        "let" => Tok::Let,
        "rec" => Tok::Rec,
        "in" => Tok::In,
        "ref" => Tok::Ref,
        "if" => Tok::If,
        "then" => Tok::Then,
        "else" => Tok::Else,
        "true" => Tok::True,
        "false" => Tok::False,
        "not" => Tok::Not,
        "mod" => Tok::Mod,
        "_bot_" => Tok::Bot,
        "as" => Tok::As,
        _ => return None,
    })
}

fn lex(text: &str, first_line: usize) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = vec![];
    let (mut i, mut line, mut col) = (0usize, first_line, 1usize);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, n: usize| {
        for _ in 0..n {
            if chars[*i] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, 1);
            continue;
        }
        if c == '(' && chars.get(i + 1) == Some(&'*') {
            let mut depth = 0usize;
            loop {
                if i >= chars.len() {
                    return syntax(pos, "unterminated comment");
                }
                if chars[i] == '(' && chars.get(i + 1) == Some(&'*') {
                    depth += 1;
                    advance(&mut i, &mut line, &mut col, 2);
                } else if chars[i] == '*' && chars.get(i + 1) == Some(&')') {
                    depth -= 1;
                    advance(&mut i, &mut line, &mut col, 2);
                    if depth == 0 {
                        break;
                    }
                } else {
                    advance(&mut i, &mut line, &mut col, 1);
                }
            }
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                advance(&mut i, &mut line, &mut col, 1);
            }
            let digits: String = chars[start..i].iter().collect();
            out.push((Tok::Int(digits.parse().expect("digits")), pos));
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len()
                && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '\'')
            {
                advance(&mut i, &mut line, &mut col, 1);
            }
            let word: String = chars[start..i].iter().collect();
            out.push((keyword(&word).unwrap_or(Tok::Ident(word)), pos));
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let tok2 = match two.as_str() {
            "->" => Some(Tok::Arrow),
            "==" => Some(Tok::EqEq),
            "<>" | "!=" => Some(Tok::Neq),
            "<=" => Some(Tok::Le),
            ">=" => Some(Tok::Ge),
            "&&" => Some(Tok::AndAnd),
            "||" => Some(Tok::OrOr),
            ":=" => Some(Tok::Assign),
            "++" => Some(Tok::PlusPlus),
            _ => None,
        };
        if let Some(t) = tok2 {
            out.push((t, pos));
            advance(&mut i, &mut line, &mut col, 2);
            continue;
        }
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            ',' => Tok::Comma,
            ';' => Tok::Semi,
            '=' => Tok::Eq,
            '<' => Tok::Lt,
            '>' => Tok::Gt,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '|' => Tok::Bar,
            '!' => Tok::Bang,
            other => return syntax(pos, format!("unexpected character `{other}`")),
        };
        out.push((tok, pos));
        advance(&mut i, &mut line, &mut col, 1);
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

// ---------------------------------------------------------------------------
// Surface syntax

/// Function parameter forms.
#[derive(Clone, Debug, PartialEq)]
pub enum Param {
    Name(String),
    /// `()`: a parameter of type unit that is never used.
    Unit,
    Tuple(Vec<String>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum SPat {
    Name(String, Pos),
    Const(Const),
    Tuple(Vec<SPat>),
}

/// Annotation as written; names are resolved during elaboration.
#[derive(Clone, Debug, PartialEq)]
pub struct SAnnot {
    pub names: Vec<String>,
    pub locs: Vec<(String, Pos, SPat)>,
    pub formula: Box<SExpr>,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SExpr {
    pub kind: SKind,
    pub pos: Pos,
    /// Index into the inferred-type table.
    pub id: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SKind {
    Const(Const),
    Bot,
    Var(String),
    Fun {
        rec_name: Option<String>,
        param: Param,
        annot: Option<SAnnot>,
        body: Box<SExpr>,
    },
    App(Box<SExpr>, Box<SExpr>),
    Tuple(Vec<SExpr>),
    Op(Op, Vec<SExpr>),
    If(Box<SExpr>, Box<SExpr>, Option<Box<SExpr>>),
    Seq(Box<SExpr>, Box<SExpr>),
    Let(String, Box<SExpr>, Box<SExpr>),
    LetTuple(Vec<String>, Box<SExpr>, Box<SExpr>),
    Ref(String, Box<SExpr>, Box<SExpr>),
    Deref(String),
    Assign(String, Box<SExpr>),
    Incr(String),
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    next_id: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.at + 1).min(self.toks.len() - 1)].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Tok) -> Result<(), ParseError> {
        if self.eat(t) {
            Ok(())
        } else {
            syntax(self.pos(), format!("expected {t}, found {}", self.peek()))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(x) => {
                self.bump();
                Ok(x)
            }
            other => syntax(self.pos(), format!("expected an identifier, found {other}")),
        }
    }

    fn mk(&mut self, kind: SKind, pos: Pos) -> SExpr {
        self.next_id += 1;
        SExpr {
            kind,
            pos,
            id: self.next_id - 1,
        }
    }

    fn seq(&mut self) -> Result<SExpr, ParseError> {
        let first = self.stmt()?;
        if self.peek() == &Tok::Semi {
            let pos = self.pos();
            self.bump();
            let rest = self.seq()?;
            return Ok(self.mk(SKind::Seq(Box::new(first), Box::new(rest)), pos));
        }
        Ok(first)
    }

    fn starts_keyword_form(&self) -> bool {
        matches!(self.peek(), Tok::Fun | Tok::Let | Tok::Ref | Tok::If)
    }

    fn stmt(&mut self) -> Result<SExpr, ParseError> {
        let pos = self.pos();
        match self.peek() {
            Tok::Fun => {
                self.bump();
                let params = self.params()?;
                if params.is_empty() {
                    return syntax(
                        self.pos(),
                        format!("expected a parameter, found {}", self.peek()),
                    );
                }
                self.expect(&Tok::Arrow)?;
                let body = self.seq()?;
                Ok(self.curry(None, params, body, pos))
            }
            Tok::Let => self.let_form(),
            Tok::Ref => {
                self.bump();
                let name = self.ident()?;
                self.expect(&Tok::Eq)?;
                let init = self.stmt()?;
                self.expect(&Tok::In)?;
                let body = self.seq()?;
                Ok(self.mk(SKind::Ref(name, Box::new(init), Box::new(body)), pos))
            }
            Tok::If => {
                self.bump();
                let g = self.seq()?;
                self.expect(&Tok::Then)?;
                let t = self.stmt()?;
                let e = if self.eat(&Tok::Else) {
                    Some(Box::new(self.stmt()?))
                } else {
                    None
                };
                Ok(self.mk(SKind::If(Box::new(g), Box::new(t), e), pos))
            }
            Tok::Ident(x) if self.peek2() == &Tok::Assign => {
                let x = x.clone();
                self.bump();
                self.bump();
                let rhs = self.stmt()?;
                Ok(self.mk(SKind::Assign(x, Box::new(rhs)), pos))
            }
            _ => self.tuple(),
        }
    }

    /// Parameters, each optionally followed by an annotation.
    fn params(&mut self) -> Result<Vec<(Param, Option<SAnnot>)>, ParseError> {
        let mut out = vec![];
        loop {
            let p = match self.peek().clone() {
                Tok::Ident(x) => {
                    self.bump();
                    Param::Name(x)
                }
                Tok::LParen if self.peek2() == &Tok::RParen => {
                    self.bump();
                    self.bump();
                    Param::Unit
                }
                Tok::LParen => {
                    self.bump();
                    let mut xs = vec![self.ident()?];
                    while self.eat(&Tok::Comma) {
                        xs.push(self.ident()?);
                    }
                    self.expect(&Tok::RParen)?;
                    if xs.len() == 1 {
                        Param::Name(xs.pop().unwrap())
                    } else {
                        Param::Tuple(xs)
                    }
                }
                _ => break,
            };
            let annot = if self.peek() == &Tok::LBrace {
                Some(self.annotation()?)
            } else {
                None
            };
            out.push((p, annot));
        }
        Ok(out)
    }

    fn curry(
        &mut self,
        rec_name: Option<String>,
        params: Vec<(Param, Option<SAnnot>)>,
        body: SExpr,
        pos: Pos,
    ) -> SExpr {
        let mut body = body;
        for (i, (param, annot)) in params.into_iter().enumerate().rev() {
            let rec_name = if i == 0 { rec_name.clone() } else { None };
            body = self.mk(
                SKind::Fun {
                    rec_name,
                    param,
                    annot,
                    body: Box::new(body),
                },
                pos,
            );
        }
        body
    }

    fn let_form(&mut self) -> Result<SExpr, ParseError> {
        let pos = self.pos();
        self.expect(&Tok::Let)?;
        let is_rec = self.eat(&Tok::Rec);
        if !is_rec && self.peek() == &Tok::LParen && self.peek2() != &Tok::RParen {
            self.bump();
            let mut xs = vec![self.ident()?];
            while self.eat(&Tok::Comma) {
                xs.push(self.ident()?);
            }
            self.expect(&Tok::RParen)?;
            self.expect(&Tok::Eq)?;
            let rhs = self.seq()?;
            self.expect(&Tok::In)?;
            let body = self.seq()?;
            if xs.len() == 1 {
                let x = xs.pop().unwrap();
                return Ok(self.mk(SKind::Let(x, Box::new(rhs), Box::new(body)), pos));
            }
            return Ok(self.mk(SKind::LetTuple(xs, Box::new(rhs), Box::new(body)), pos));
        }
        let name_pos = self.pos();
        let name = self.ident()?;
        let mut params = self.params()?;
        self.expect(&Tok::Eq)?;
        let rhs = if params.is_empty() {
            if is_rec {
                return syntax(name_pos, "`let rec` needs a function parameter");
            }
            self.seq()?
        } else {
            if self.peek() == &Tok::LBrace {
                // `let f x = {A} -> body`
                let a = self.annotation()?;
                self.expect(&Tok::Arrow)?;
                let last = params.last_mut().unwrap();
                if last.1.is_some() {
                    return syntax(a.pos, "function already carries an annotation");
                }
                last.1 = Some(a);
            }
            let body = self.seq()?;
            self.curry(
                if is_rec { Some(name.clone()) } else { None },
                params,
                body,
                name_pos,
            )
        };
        self.expect(&Tok::In)?;
        let body = self.seq()?;
        Ok(self.mk(SKind::Let(name, Box::new(rhs), Box::new(body)), pos))
    }

    fn annotation(&mut self) -> Result<SAnnot, ParseError> {
        let pos = self.pos();
        self.expect(&Tok::LBrace)?;
        if self.eat(&Tok::RBrace) {
            let formula = self.mk(SKind::Const(Const::Bool(true)), pos);
            return Ok(SAnnot {
                names: vec![],
                locs: vec![],
                formula: Box::new(formula),
                pos,
            });
        }
        let mut names = vec![];
        if self.peek() != &Tok::Bar {
            names.push(self.ident()?);
            while self.eat(&Tok::Comma) {
                names.push(self.ident()?);
            }
        }
        self.expect(&Tok::Bar)?;
        let mut locs: Vec<(String, Pos, SPat)> = vec![];
        if self.peek() != &Tok::Bar {
            loop {
                let lpos = self.pos();
                let l = self.ident()?;
                self.expect(&Tok::As)?;
                let p = self.apat()?;
                if locs.iter().any(|(m, _, _)| m == &l) {
                    return syntax(
                        lpos,
                        format!("location `{l}` appears twice in the annotation"),
                    );
                }
                locs.push((l, lpos, p));
                if !(self.eat(&Tok::Comma) || self.eat(&Tok::Semi)) {
                    break;
                }
            }
        }
        self.expect(&Tok::Bar)?;
        let formula = self.or_expr()?;
        self.expect(&Tok::RBrace)?;
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return syntax(pos, format!("name `{n}` declared twice in the annotation"));
            }
        }
        let annot = SAnnot {
            names,
            locs,
            formula: Box::new(formula),
            pos,
        };
        check_annotation_names(&annot)?;
        Ok(annot)
    }

    fn apat(&mut self) -> Result<SPat, ParseError> {
        let pos = self.pos();
        match self.bump() {
            Tok::Ident(x) => Ok(SPat::Name(x, pos)),
            Tok::Int(i) => Ok(SPat::Const(Const::Int(i))),
            Tok::Minus => match self.bump() {
                Tok::Int(i) => Ok(SPat::Const(Const::Int(-i))),
                other => syntax(pos, format!("expected an integer after `-`, found {other}")),
            },
            Tok::True => Ok(SPat::Const(Const::Bool(true))),
            Tok::False => Ok(SPat::Const(Const::Bool(false))),
            Tok::LParen => {
                if self.eat(&Tok::RParen) {
                    return Ok(SPat::Const(Const::Unit));
                }
                let mut ps = vec![self.apat()?];
                while self.eat(&Tok::Comma) {
                    ps.push(self.apat()?);
                }
                self.expect(&Tok::RParen)?;
                Ok(if ps.len() == 1 {
                    ps.pop().unwrap()
                } else {
                    SPat::Tuple(ps)
                })
            }
            other => syntax(pos, format!("expected a pattern, found {other}")),
        }
    }

    fn tuple(&mut self) -> Result<SExpr, ParseError> {
        let pos = self.pos();
        let first = self.or_expr()?;
        if self.peek() != &Tok::Comma {
            return Ok(first);
        }
        let mut es = vec![first];
        while self.eat(&Tok::Comma) {
            es.push(self.or_expr()?);
        }
        Ok(self.mk(SKind::Tuple(es), pos))
    }

    fn binary(&mut self, op: Op, a: SExpr, b: SExpr, pos: Pos) -> SExpr {
        self.mk(SKind::Op(op, vec![a, b]), pos)
    }

    fn or_expr(&mut self) -> Result<SExpr, ParseError> {
        let mut lhs = self.and_expr()?;
        while self.peek() == &Tok::OrOr {
            let pos = self.pos();
            self.bump();
            let rhs = self.and_expr()?;
            lhs = self.binary(Op::Or, lhs, rhs, pos);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<SExpr, ParseError> {
        let mut lhs = self.cmp_expr()?;
        while self.peek() == &Tok::AndAnd {
            let pos = self.pos();
            self.bump();
            let rhs = self.cmp_expr()?;
            lhs = self.binary(Op::And, lhs, rhs, pos);
        }
        Ok(lhs)
    }

    fn cmp_expr(&mut self) -> Result<SExpr, ParseError> {
        let lhs = self.add_expr()?;
        let op = match self.peek() {
            Tok::Eq | Tok::EqEq => Op::Eq,
            Tok::Neq => Op::Neq,
            Tok::Lt => Op::Lt,
            Tok::Le => Op::Le,
            Tok::Gt => Op::Gt,
            Tok::Ge => Op::Ge,
            _ => return Ok(lhs),
        };
        let pos = self.pos();
        self.bump();
        let rhs = self.add_expr()?;
        Ok(self.binary(op, lhs, rhs, pos))
    }

    fn add_expr(&mut self) -> Result<SExpr, ParseError> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => Op::Add,
                Tok::Minus => Op::Sub,
                _ => return Ok(lhs),
            };
            let pos = self.pos();
            self.bump();
            let rhs = self.mul_expr()?;
            lhs = self.binary(op, lhs, rhs, pos);
        }
    }

    fn mul_expr(&mut self) -> Result<SExpr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => Op::Mul,
                Tok::Slash => Op::Div,
                Tok::Mod => Op::Mod,
                _ => return Ok(lhs),
            };
            let pos = self.pos();
            self.bump();
            let rhs = self.unary()?;
            lhs = self.binary(op, lhs, rhs, pos);
        }
    }

    fn unary(&mut self) -> Result<SExpr, ParseError> {
        let pos = self.pos();
        match self.peek() {
            Tok::Minus => {
                self.bump();
                let e = self.unary()?;
                if let SKind::Const(Const::Int(i)) = &e.kind {
                    return Ok(self.mk(SKind::Const(Const::Int(-i)), pos));
                }
                Ok(self.mk(SKind::Op(Op::Neg, vec![e]), pos))
            }
            Tok::Not => {
                self.bump();
                let e = self.unary()?;
                Ok(self.mk(SKind::Op(Op::Not, vec![e]), pos))
            }
            _ => self.app(),
        }
    }

    fn starts_atom(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Int(_)
                | Tok::Ident(_)
                | Tok::True
                | Tok::False
                | Tok::Bot
                | Tok::LParen
                | Tok::Bang
        )
    }

    fn app(&mut self) -> Result<SExpr, ParseError> {
        if self.starts_keyword_form() {
            return self.stmt();
        }
        let mut head = self.atom()?;
        while self.starts_atom() {
            let pos = self.pos();
            let arg = self.atom()?;
            head = self.mk(SKind::App(Box::new(head), Box::new(arg)), pos);
        }
        Ok(head)
    }

    fn atom(&mut self) -> Result<SExpr, ParseError> {
        let pos = self.pos();
        match self.bump() {
            Tok::Int(i) => Ok(self.mk(SKind::Const(Const::Int(i)), pos)),
            Tok::True => Ok(self.mk(SKind::Const(Const::Bool(true)), pos)),
            Tok::False => Ok(self.mk(SKind::Const(Const::Bool(false)), pos)),
            Tok::Bot => Ok(self.mk(SKind::Bot, pos)),
            Tok::Bang => {
                let x = self.ident()?;
                Ok(self.mk(SKind::Deref(x), pos))
            }
            Tok::Ident(x) => {
                if self.eat(&Tok::PlusPlus) {
                    return Ok(self.mk(SKind::Incr(x), pos));
                }
                Ok(self.mk(SKind::Var(x), pos))
            }
            Tok::LParen => {
                if self.eat(&Tok::RParen) {
                    return Ok(self.mk(SKind::Const(Const::Unit), pos));
                }
                let e = self.seq()?;
                self.expect(&Tok::RParen)?;
                Ok(e)
            }
            other => syntax(pos, format!("expected an expression, found {other}")),
        }
    }
}

fn check_annotation_names(a: &SAnnot) -> Result<(), ParseError> {
    fn pat(p: &SPat, names: &[String]) -> Result<(), ParseError> {
        match p {
            SPat::Name(x, pos) if !names.contains(x) => {
                syntax(*pos, format!("unknown annotation name `{x}`"))
            }
            SPat::Tuple(ps) => ps.iter().try_for_each(|q| pat(q, names)),
            _ => Ok(()),
        }
    }
    fn formula(e: &SExpr, names: &[String]) -> Result<(), ParseError> {
        match &e.kind {
            SKind::Var(x) if !names.contains(x) => {
                syntax(e.pos, format!("unknown annotation name `{x}`"))
            }
            SKind::Var(_) | SKind::Const(_) => Ok(()),
            SKind::Op(_, es) => es.iter().try_for_each(|a| formula(a, names)),
            _ => syntax(
                e.pos,
                "annotation formulas may only use names, constants and operators",
            ),
        }
    }
    for (_, _, p) in &a.locs {
        pat(p, &a.names)?;
    }
    formula(&a.formula, &a.names)
}

/// Parse one program.
pub fn parse_surface(text: &str) -> Result<SExpr, ParseError> {
    parse_surface_at(text, 1, 0).map(|(e, _)| e)
}

fn parse_surface_at(
    text: &str,
    first_line: usize,
    first_id: usize,
) -> Result<(SExpr, usize), ParseError> {
    let toks = lex(text, first_line)?;
    let mut p = Parser {
        toks,
        at: 0,
        next_id: first_id,
    };
    let e = p.seq()?;
    if p.peek() != &Tok::Eof {
        return syntax(
            p.pos(),
            format!("unexpected {} after the end of the program", p.peek()),
        );
    }
    Ok((e, p.next_id))
}

/// Parse an annotation `{...}` on its own; used by tests and tools.
pub fn parse_annotation(text: &str) -> Result<Annotation, ParseError> {
    let toks = lex(text, 1)?;
    let mut p = Parser {
        toks,
        at: 0,
        next_id: 0,
    };
    let a = p.annotation()?;
    if p.peek() != &Tok::Eof {
        return syntax(
            p.pos(),
            format!("unexpected {} after the annotation", p.peek()),
        );
    }
    let mut inf = Infer::default();
    let mut locs = vec![];
    for (l, _, _) in &a.locs {
        let t = inf.fresh();
        locs.push((l.clone(), t));
    }
    inf.locs = locs;
    let names = inf.annotation(&a)?;
    inf.finish_base()?;
    let names: Vec<Type> = names.iter().map(|t| inf.resolve(t)).collect();
    Ok(elab_annotation(&a, &names, &inf))
}

// ---------------------------------------------------------------------------
// Type inference

#[derive(Clone, Debug, PartialEq)]
enum Ty {
    Var(usize),
    Int,
    Bool,
    Unit,
    Arrow(Box<Ty>, Box<Ty>),
    Prod(Vec<Ty>),
}

#[derive(Default)]
struct Infer {
    subst: Vec<Option<Ty>>,
    node: BTreeMap<usize, Ty>,
    /// Parameter and result types of each function node.
    funs: BTreeMap<usize, (Ty, Ty)>,
    annots: BTreeMap<usize, Vec<Ty>>,
    vars: Vec<(String, Ty)>,
    locs: Vec<(String, Ty)>,
    base: Vec<(Ty, Pos)>,
    /// Types of discarded sequence operands; these default to unit.
    discarded: Vec<Ty>,
}

fn show(t: &Ty) -> String {
    match t {
        Ty::Var(_) => "'a".into(),
        Ty::Int => "int".into(),
        Ty::Bool => "bool".into(),
        Ty::Unit => "unit".into(),
        Ty::Arrow(a, b) => format!("({} -> {})", show(a), show(b)),
        Ty::Prod(ts) => format!("({})", ts.iter().map(show).collect::<Vec<_>>().join(" * ")),
    }
}

impl Infer {
    fn fresh(&mut self) -> Ty {
        self.subst.push(None);
        Ty::Var(self.subst.len() - 1)
    }

    fn shallow(&self, t: &Ty) -> Ty {
        let mut t = t.clone();
        while let Ty::Var(v) = t {
            match &self.subst[v] {
                Some(u) => t = u.clone(),
                None => break,
            }
        }
        t
    }

    fn deep(&self, t: &Ty) -> Ty {
        match self.shallow(t) {
            Ty::Arrow(a, b) => Ty::Arrow(Box::new(self.deep(&a)), Box::new(self.deep(&b))),
            Ty::Prod(ts) => Ty::Prod(ts.iter().map(|u| self.deep(u)).collect()),
            other => other,
        }
    }

    fn occurs(&self, v: usize, t: &Ty) -> bool {
        match self.shallow(t) {
            Ty::Var(w) => v == w,
            Ty::Arrow(a, b) => self.occurs(v, &a) || self.occurs(v, &b),
            Ty::Prod(ts) => ts.iter().any(|u| self.occurs(v, u)),
            _ => false,
        }
    }

    fn unify(&mut self, a: &Ty, b: &Ty, pos: Pos) -> Result<(), ParseError> {
        let (a, b) = (self.shallow(a), self.shallow(b));
        let fail = |me: &Infer| {
            Err(ParseError::Type {
                pos,
                msg: format!(
                    "cannot match {} with {}",
                    show(&me.deep(&a)),
                    show(&me.deep(&b))
                ),
            })
        };
        match (&a, &b) {
            (Ty::Var(x), Ty::Var(y)) if x == y => Ok(()),
            (Ty::Var(x), t) | (t, Ty::Var(x)) => {
                if self.occurs(*x, t) {
                    return fail(self);
                }
                self.subst[*x] = Some(t.clone());
                Ok(())
            }
            (Ty::Int, Ty::Int) | (Ty::Bool, Ty::Bool) | (Ty::Unit, Ty::Unit) => Ok(()),
            (Ty::Arrow(a1, b1), Ty::Arrow(a2, b2)) => {
                self.unify(a1, a2, pos)?;
                self.unify(b1, b2, pos)
            }
            (Ty::Prod(xs), Ty::Prod(ys)) if xs.len() == ys.len() => {
                for (x, y) in xs.clone().iter().zip(ys.clone().iter()) {
                    self.unify(x, y, pos)?;
                }
                Ok(())
            }
            _ => fail(self),
        }
    }

    fn lookup(&self, x: &str) -> Option<Ty> {
        self.vars
            .iter()
            .rev()
            .find(|(y, _)| y == x)
            .map(|(_, t)| t.clone())
    }

    fn loc(&self, l: &str, pos: Pos) -> Result<Ty, ParseError> {
        match self.locs.iter().rev().find(|(m, _)| m == l) {
            Some((_, t)) => Ok(t.clone()),
            None => Err(ParseError::Type {
                pos,
                msg: format!("unbound reference `{l}`"),
            }),
        }
    }

    fn bind_param(&mut self, p: &Param, t: &Ty, pos: Pos) -> Result<usize, ParseError> {
        match p {
            Param::Name(x) => {
                self.vars.push((x.clone(), t.clone()));
                Ok(1)
            }
            Param::Unit => {
                self.unify(t, &Ty::Unit, pos)?;
                Ok(0)
            }
            Param::Tuple(xs) => {
                let ts: Vec<Ty> = xs.iter().map(|_| self.fresh()).collect();
                self.unify(t, &Ty::Prod(ts.clone()), pos)?;
                for (x, u) in xs.iter().zip(ts) {
                    self.vars.push((x.clone(), u));
                }
                Ok(xs.len())
            }
        }
    }

    fn annotation(&mut self, a: &SAnnot) -> Result<Vec<Ty>, ParseError> {
        let names: Vec<Ty> = a.names.iter().map(|_| self.fresh()).collect();
        for t in &names {
            self.base.push((t.clone(), a.pos));
        }
        for (l, lpos, p) in &a.locs {
            let lt = self.loc(l, *lpos)?;
            let pt = self.pat(p, &a.names, &names);
            self.unify(&lt, &pt, *lpos)?;
        }
        let saved = std::mem::take(&mut self.vars);
        self.vars = a.names.iter().cloned().zip(names.iter().cloned()).collect();
        let ft = self.infer(&a.formula);
        self.vars = saved;
        let ft = ft?;
        self.unify(&ft, &Ty::Bool, a.formula.pos)?;
        Ok(names)
    }

    fn pat(&mut self, p: &SPat, names: &[String], tys: &[Ty]) -> Ty {
        match p {
            SPat::Name(x, _) => {
                tys[names.iter().position(|n| n == x).expect("checked name")].clone()
            }
            SPat::Const(c) => ty_of(&c.ty()),
            SPat::Tuple(ps) => Ty::Prod(ps.iter().map(|q| self.pat(q, names, tys)).collect()),
        }
    }

    fn infer(&mut self, e: &SExpr) -> Result<Ty, ParseError> {
        let t = self.infer_kind(e)?;
        self.node.insert(e.id, t.clone());
        Ok(t)
    }

    fn infer_kind(&mut self, e: &SExpr) -> Result<Ty, ParseError> {
        let pos = e.pos;
        Ok(match &e.kind {
            SKind::Const(c) => ty_of(&c.ty()),
            SKind::Bot => self.fresh(),
            SKind::Var(x) => match self.lookup(x) {
                Some(t) => t,
                None => {
                    return Err(ParseError::Type {
                        pos,
                        msg: format!("unbound variable `{x}`"),
                    })
                }
            },
            SKind::Fun {
                rec_name,
                param,
                annot,
                body,
            } => {
                let (pt, rt) = (self.fresh(), self.fresh());
                let ft = Ty::Arrow(Box::new(pt.clone()), Box::new(rt.clone()));
                if let Some(a) = annot {
                    let names = self.annotation(a)?;
                    self.annots.insert(e.id, names);
                }
                let depth = self.vars.len();
                if let Some(f) = rec_name {
                    self.vars.push((f.clone(), ft.clone()));
                }
                self.bind_param(param, &pt, pos)?;
                let bt = self.infer(body);
                self.vars.truncate(depth);
                self.unify(&bt?, &rt, body.pos)?;
                self.funs.insert(e.id, (pt, rt));
                ft
            }
            SKind::App(f, a) => {
                let ft = self.infer(f)?;
                let at = self.infer(a)?;
                let rt = self.fresh();
                self.unify(&ft, &Ty::Arrow(Box::new(at), Box::new(rt.clone())), pos)?;
                rt
            }
            SKind::Tuple(es) => {
                let mut ts = vec![];
                for a in es {
                    ts.push(self.infer(a)?);
                }
                Ty::Prod(ts)
            }
            SKind::Op(op, es) => {
                let mut ts = vec![];
                for a in es {
                    ts.push(self.infer(a)?);
                }
                match op {
                    Op::Eq | Op::Neq => {
                        self.unify(&ts[0], &ts[1], pos)?;
                        self.base.push((ts[0].clone(), pos));
                        Ty::Bool
                    }
                    Op::Lt | Op::Le | Op::Gt | Op::Ge => {
                        for (t, a) in ts.iter().zip(es) {
                            self.unify(t, &Ty::Int, a.pos)?;
                        }
                        Ty::Bool
                    }
                    Op::And | Op::Or | Op::Not => {
                        for (t, a) in ts.iter().zip(es) {
                            self.unify(t, &Ty::Bool, a.pos)?;
                        }
                        Ty::Bool
                    }
                    _ => {
                        for (t, a) in ts.iter().zip(es) {
                            self.unify(t, &Ty::Int, a.pos)?;
                        }
                        Ty::Int
                    }
                }
            }
            SKind::If(g, t, el) => {
                let gt = self.infer(g)?;
                self.unify(&gt, &Ty::Bool, g.pos)?;
                let tt = self.infer(t)?;
                match el {
                    Some(el) => {
                        let et = self.infer(el)?;
                        self.unify(&tt, &et, el.pos)?;
                    }
                    None => self.unify(&tt, &Ty::Unit, t.pos)?,
                }
                tt
            }
            SKind::Seq(a, b) => {
                let at = self.infer(a)?;
                self.discarded.push(at);
                self.infer(b)?
            }
            SKind::Let(x, rhs, body) => {
                let rt = self.infer(rhs)?;
                self.vars.push((x.clone(), rt));
                let bt = self.infer(body);
                self.vars.pop();
                bt?
            }
            SKind::LetTuple(xs, rhs, body) => {
                let rt = self.infer(rhs)?;
                let ts: Vec<Ty> = xs.iter().map(|_| self.fresh()).collect();
                self.unify(&rt, &Ty::Prod(ts.clone()), rhs.pos)?;
                let depth = self.vars.len();
                for (x, t) in xs.iter().zip(ts) {
                    self.vars.push((x.clone(), t));
                }
                let bt = self.infer(body);
                self.vars.truncate(depth);
                bt?
            }
            SKind::Ref(l, init, body) => {
                let it = self.infer(init)?;
                self.locs.push((l.clone(), it));
                let bt = self.infer(body);
                self.locs.pop();
                bt?
            }
            SKind::Deref(l) => self.loc(l, pos)?,
            SKind::Assign(l, rhs) => {
                let lt = self.loc(l, pos)?;
                let rt = self.infer(rhs)?;
                self.unify(&lt, &rt, rhs.pos)?;
                Ty::Unit
            }
            SKind::Incr(l) => {
                let lt = self.loc(l, pos)?;
                self.unify(&lt, &Ty::Int, pos)?;
                Ty::Unit
            }
        })
    }

    /// Check the base-type side conditions and apply defaults: discarded
    /// operands become unit, other open variables int.
    fn finish_base(&mut self) -> Result<(), ParseError> {
        for t in self.discarded.clone() {
            if let Ty::Var(v) = self.shallow(&t) {
                self.subst[v] = Some(Ty::Unit);
            }
        }
        for (t, pos) in self.base.clone() {
            match self.shallow(&t) {
                Ty::Var(v) => self.subst[v] = Some(Ty::Int),
                Ty::Arrow(..) | Ty::Prod(_) => {
                    return Err(ParseError::Type {
                        pos,
                        msg: format!("expected a base type, found {}", show(&self.deep(&t))),
                    })
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn resolve(&self, t: &Ty) -> Type {
        match self.shallow(t) {
            Ty::Var(_) | Ty::Int => Type::Int,
            Ty::Bool => Type::Bool,
            Ty::Unit => Type::Unit,
            Ty::Arrow(a, b) => Type::arrow(self.resolve(&a), self.resolve(&b)),
            Ty::Prod(ts) => Type::Product(ts.iter().map(|u| self.resolve(u)).collect()),
        }
    }

    fn node_ty(&self, e: &SExpr) -> Type {
        self.resolve(self.node.get(&e.id).expect("inferred node"))
    }
}

fn ty_of(t: &Type) -> Ty {
    match t {
        Type::Int => Ty::Int,
        Type::Bool => Ty::Bool,
        Type::Unit => Ty::Unit,
        Type::Arrow(a, b) => Ty::Arrow(Box::new(ty_of(a)), Box::new(ty_of(b))),
        Type::Product(ts) => Ty::Prod(ts.iter().map(ty_of).collect()),
    }
}

// ---------------------------------------------------------------------------
// Elaboration

fn elab_pat(p: &SPat, names: &[String]) -> APat {
    match p {
        SPat::Name(x, _) => APat::Name(names.iter().position(|n| n == x).expect("checked name")),
        SPat::Const(c) => APat::Const(c.clone()),
        SPat::Tuple(ps) => APat::Tuple(ps.iter().map(|q| elab_pat(q, names)).collect()),
    }
}

fn elab_annotation(a: &SAnnot, name_types: &[Type], inf: &Infer) -> Annotation {
    Annotation {
        names: a.names.clone(),
        name_types: name_types.to_vec(),
        locs: a
            .locs
            .iter()
            .map(|(l, _, p)| (Loc::Named(l.clone()), elab_pat(p, &a.names)))
            .collect(),
        formula: elab(&a.formula, inf),
    }
}

fn let_in(x: &str, xt: Type, body: Expr, bt: Type, rhs: Expr) -> Expr {
    if body == Expr::Var(x.to_string()) && x != WILDCARD {
        return rhs;
    }
    Expr::app(
        Expr::Lambda(Box::new(Lambda {
            rec_name: None,
            param: x.to_string(),
            param_ty: xt,
            ret_ty: bt,
            annot: None,
            body,
        })),
        rhs,
    )
}

/// Initialisers that are values once variables are substituted.
fn is_value_form(e: &Expr) -> bool {
    match e {
        Expr::Var(_) => true,
        Expr::Tuple(es) => es.iter().all(is_value_form),
        other => other.is_value(),
    }
}

fn elab(e: &SExpr, inf: &Infer) -> Expr {
    match &e.kind {
        SKind::Const(c) => Expr::Const(c.clone()),
        SKind::Bot => Expr::Bot,
        SKind::Var(x) => Expr::Var(x.clone()),
        SKind::Fun {
            rec_name,
            param,
            annot,
            body,
        } => {
            let (pt, rt) = inf.funs.get(&e.id).expect("inferred function");
            let (pt, rt) = (inf.resolve(pt), inf.resolve(rt));
            let annot = annot.as_ref().map(|a| {
                let tys: Vec<Type> = inf.annots[&e.id].iter().map(|t| inf.resolve(t)).collect();
                elab_annotation(a, &tys, inf)
            });
            let mut b = elab(body, inf);
            let param = match param {
                Param::Name(x) => x.clone(),
                Param::Unit => WILDCARD.to_string(),
                Param::Tuple(xs) => {
                    let p = "%arg".to_string();
                    b = Expr::LetTuple(xs.clone(), Box::new(Expr::Var(p.clone())), Box::new(b));
                    p
                }
            };
            Expr::Lambda(Box::new(Lambda {
                rec_name: rec_name.clone(),
                param,
                param_ty: pt,
                ret_ty: rt,
                annot,
                body: b,
            }))
        }
        SKind::App(f, a) => Expr::app(elab(f, inf), elab(a, inf)),
        SKind::Tuple(es) => Expr::Tuple(es.iter().map(|a| elab(a, inf)).collect()),
        SKind::Op(op, es) => Expr::Op(*op, es.iter().map(|a| elab(a, inf)).collect()),
        SKind::If(g, t, el) => Expr::cond(
            elab(g, inf),
            elab(t, inf),
            el.as_ref().map(|x| elab(x, inf)).unwrap_or_else(Expr::unit),
        ),
        SKind::Seq(a, b) => let_in(
            WILDCARD,
            inf.node_ty(a),
            elab(b, inf),
            inf.node_ty(b),
            elab(a, inf),
        ),
        SKind::Let(x, rhs, body) => let_in(
            x,
            inf.node_ty(rhs),
            elab(body, inf),
            inf.node_ty(body),
            elab(rhs, inf),
        ),
        SKind::LetTuple(xs, rhs, body) => Expr::LetTuple(
            xs.clone(),
            Box::new(elab(rhs, inf)),
            Box::new(elab(body, inf)),
        ),
        SKind::Ref(l, init, body) => {
            let i = elab(init, inf);
            let b = elab(body, inf);
            let loc = Loc::Named(l.clone());
            if is_value_form(&i) {
                Expr::NewRef(loc, Box::new(i), Box::new(b))
            } else {
                let inner = Expr::NewRef(loc, Box::new(Expr::Var(REF_TMP.into())), Box::new(b));
                let_in(REF_TMP, inf.node_ty(init), inner, inf.node_ty(body), i)
            }
        }
        SKind::Deref(l) => Expr::Deref(Loc::Named(l.clone())),
        SKind::Assign(l, rhs) => Expr::Assign(Loc::Named(l.clone()), Box::new(elab(rhs, inf))),
        SKind::Incr(l) => {
            let loc = Loc::Named(l.clone());
            Expr::Assign(
                loc.clone(),
                Box::new(Expr::op(Op::Add, vec![Expr::Deref(loc), Expr::int(1)])),
            )
        }
    }
}

// ---------------------------------------------------------------------------
// Entry points

/// The two programs under comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct ProgramPair {
    pub left: Expr,
    pub right: Expr,
    pub ty: Type,
    pub source_names: [String; 2],
}

/// Parse and elaborate a single closed program.
pub fn parse_program(text: &str) -> Result<(Expr, Type), ParseError> {
    let (s, _) = parse_surface_at(text, 1, 0)?;
    let mut inf = Infer::default();
    let t = inf.infer(&s)?;
    inf.finish_base()?;
    let e = elab(&s, &inf);
    let ty = inf.resolve(&t);
    lang::typecheck_against(&Default::default(), &Default::default(), &e, &ty)?;
    Ok((e, ty))
}

/// Split a program file on its first `|||` line.
pub fn split_pair(text: &str) -> Result<(&str, &str, usize), ParseError> {
    let mut offset = 0;
    for (n, line) in text.split_inclusive('\n').enumerate() {
        if line.trim_end() == "|||" {
            return Ok((&text[..offset], &text[offset + line.len()..], n + 2));
        }
        offset += line.len();
    }
    Err(ParseError::MissingSeparator)
}

/// Parse a two-program file. Both sides are inferred together so that
/// unconstrained types default the same way on each side.
pub fn parse_program_pair(text: &str) -> Result<ProgramPair, ParseError> {
    let (l, r, right_line) = split_pair(text)?;
    let (ls, next) = parse_surface_at(l, 1, 0)?;
    let (rs, _) = parse_surface_at(r, right_line, next)?;
    let mut inf = Infer::default();
    let lt = inf.infer(&ls)?;
    let rt = inf.infer(&rs)?;
    if inf.unify(&lt, &rt, rs.pos).is_err() {
        return Err(ParseError::SidesDiffer {
            left: show(&inf.deep(&lt)),
            right: show(&inf.deep(&rt)),
        });
    }
    inf.finish_base()?;
    let ty = inf.resolve(&lt);
    let left = elab(&ls, &inf);
    let right = elab(&rs, &inf);
    for e in [&left, &right] {
        lang::typecheck_against(&Default::default(), &Default::default(), e, &ty)?;
    }
    Ok(ProgramPair {
        left,
        right,
        ty,
        source_names: ["left".into(), "right".into()],
    })
}

/// What a corpus file claims about itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Expect {
    Eq,
    Ineq,
    /// Known to be out of reach; the checker must stay inconclusive.
    Inconclusive,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Header {
    pub expect: Option<Expect>,
    pub bound: Option<u32>,
}

/// Read `expect:` and `bound:` fields from the first comment of a file,
/// e.g. `(* expect: eq bound: 12 *)`.
pub fn parse_header(text: &str) -> Header {
    let mut h = Header::default();
    let Some(start) = text.find("(*") else {
        return h;
    };
    let end = text[start..]
        .find("*)")
        .map(|e| start + e)
        .unwrap_or(text.len());
    let words: Vec<&str> = text[start + 2..end].split_whitespace().collect();
    for w in words.windows(2) {
        match w[0] {
            "expect:" => {
                h.expect = match w[1] {
                    "eq" => Some(Expect::Eq),
                    "ineq" => Some(Expect::Ineq),
                    "inconclusive" => Some(Expect::Inconclusive),
                    _ => None,
                }
            }
            "bound:" => h.bound = w[1].parse().ok(),
            _ => {}
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meyer_sieber_pair() {
        let p = parse_program_pair("fun f -> ref x = 0 in f ()\n|||\nfun f -> f ()\n").unwrap();
        assert_eq!(
            p.ty,
            Type::arrow(Type::arrow(Type::Unit, Type::Int), Type::Int)
        );
        assert!(matches!(p.left, Expr::Lambda(_)));
    }

    #[test]
    fn trivial_pair() {
        let p = parse_program_pair("0\n|||\n0").unwrap();
        assert_eq!(p.left, Expr::int(0));
        assert_eq!(p.right, Expr::int(0));
    }

    #[test]
    fn malformed_right_side_reports_its_line() {
        match parse_program_pair("fun x -> x\n|||\nfun x") {
            Err(ParseError::Syntax { pos, .. }) => assert_eq!(pos.line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn annotation_examples() {
        let a = parse_annotation("{w | x as w | w mod 2 == 0}").unwrap();
        assert_eq!(a.names, vec!["w".to_string()]);
        assert_eq!(a.locs, vec![(Loc::Named("x".into()), APat::Name(0))]);
        assert_eq!(a.name_types, vec![Type::Int]);
        assert!(parse_annotation("{}").unwrap().is_empty());
        assert!(matches!(
            parse_annotation("{w | x as w, x as w | true}"),
            Err(ParseError::Syntax { .. })
        ));
        assert!(matches!(
            parse_annotation("{w | x as v | true}"),
            Err(ParseError::Syntax { .. })
        ));
    }

    #[test]
    fn conjunction_types() {
        let (_, t) = parse_program("fun xy -> let (x,y) = xy in if x then y else false").unwrap();
        assert_eq!(
            t,
            Type::arrow(Type::Product(vec![Type::Bool, Type::Bool]), Type::Bool)
        );
        let (_, t) = parse_program("fun f -> f (); 0").unwrap();
        assert_eq!(
            t,
            Type::arrow(Type::arrow(Type::Unit, Type::Unit), Type::Int)
        );
    }

    #[test]
    fn precedence() {
        let (e, _) = parse_program("1 + 2 * 3 = 7 && not false").unwrap();
        assert_eq!(
            e.to_string(),
            parse_program("((1 + (2 * 3)) = 7) && (not false)")
                .unwrap()
                .0
                .to_string()
        );
        let (e, _) = parse_program("ref x = 1 in x := !x - 1; !x").unwrap();
        match e {
            Expr::NewRef(_, _, body) => assert!(matches!(*body, Expr::App(..))),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn side_types_must_agree() {
        assert!(matches!(
            parse_program_pair("0\n|||\ntrue"),
            Err(ParseError::SidesDiffer { .. })
        ));
    }

    #[test]
    fn nested_comments() {
        let (e, _) = parse_program("(* a (* b *) c *) 5").unwrap();
        assert_eq!(e, Expr::int(5));
    }

    #[test]
    fn header_fields() {
        let h = parse_header("(* expect: eq bound: 12 *)\n0 ||| 0");
        assert_eq!(
            h,
            Header {
                expect: Some(Expect::Eq),
                bound: Some(12)
            }
        );
        assert_eq!(parse_header("0"), Header::default());
    }

    #[test]
    fn annotated_let_forms() {
        let src = "ref y = 0 in let set z = {wy | y as wy | wy >= 0} -> y := z in set";
        let (e, _) = parse_program(src).unwrap();
        let Expr::NewRef(_, _, body) = e else {
            panic!()
        };
        let Expr::Lambda(l) = *body else {
            panic!("{body}")
        };
        assert!(l.annot.is_some());
    }
}
