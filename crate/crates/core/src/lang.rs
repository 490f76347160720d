//! Abstract syntax of the object language.
//!
//! The language is a simply typed call-by-value lambda calculus with tuples,
//! base-type arithmetic and local references. Two extra value forms exist
//! only at run time: abstract function names (`Abs`), standing for functions
//! supplied by the environment, and symbolic constants (`Sym`), standing for
//! first-order values constrained by a symbolic environment.

use num_bigint::BigInt;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Types. Products always have at least two components.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Type {
    Bool,
    Int,
    Unit,
    Arrow(Box<Type>, Box<Type>),
    Product(Vec<Type>),
}

impl Type {
    pub fn arrow(dom: Type, cod: Type) -> Type {
        Type::Arrow(Box::new(dom), Box::new(cod))
    }

    pub fn is_base(&self) -> bool {
        matches!(self, Type::Bool | Type::Int | Type::Unit)
    }

    /// Domain and codomain of an arrow type.
    pub fn as_arrow(&self) -> Option<(&Type, &Type)> {
        match self {
            Type::Arrow(a, b) => Some((a, b)),
            _ => None,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, prec: u8) -> fmt::Result {
        match self {
            Type::Bool => write!(f, "bool"),
            Type::Int => write!(f, "int"),
            Type::Unit => write!(f, "unit"),
            Type::Arrow(a, b) => {
                if prec > 0 {
                    write!(f, "(")?;
                }
                a.fmt_prec(f, 1)?;
                write!(f, " -> ")?;
                b.fmt_prec(f, 0)?;
                if prec > 0 {
                    write!(f, ")")?;
                }
                Ok(())
            }
            Type::Product(ts) => {
                if prec > 1 {
                    write!(f, "(")?;
                }
                for (k, t) in ts.iter().enumerate() {
                    if k > 0 {
                        write!(f, " * ")?;
                    }
                    t.fmt_prec(f, 2)?;
                }
                if prec > 1 {
                    write!(f, ")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

/// Base-type literals. Integers are unbounded.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Const {
    Unit,
    Bool(bool),
    Int(BigInt),
}

impl Const {
    pub fn int(i: i64) -> Const {
        Const::Int(BigInt::from(i))
    }

    pub fn ty(&self) -> Type {
        match self {
            Const::Unit => Type::Unit,
            Const::Bool(_) => Type::Bool,
            Const::Int(_) => Type::Int,
        }
    }

    /// Default inhabitant of a base type, used to complete partial models.
    pub fn default_of(ty: &Type) -> Const {
        match ty {
            Type::Bool => Const::Bool(false),
            Type::Int => Const::int(0),
            _ => Const::Unit,
        }
    }
}

impl fmt::Display for Const {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Const::Unit => write!(f, "()"),
            Const::Bool(b) => write!(f, "{b}"),
            Const::Int(i) => write!(f, "{i}"),
        }
    }
}

/// Primitive operators. `Neg` and `Not` are unary, the rest binary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Neg,
    Eq,
    Neq,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Not,
}

impl Op {
    pub fn arity(self) -> usize {
        match self {
            Op::Neg | Op::Not => 1,
            _ => 2,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Op::Add => "+",
            Op::Sub | Op::Neg => "-",
            Op::Mul => "*",
            Op::Div => "/",
            Op::Mod => "mod",
            Op::Eq => "=",
            Op::Neq => "<>",
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Ge => ">=",
            Op::And => "&&",
            Op::Or => "||",
            Op::Not => "not",
        }
    }

    /// Evaluate on constants. `None` on division by zero or ill-typed input.
    /// Division and remainder are Euclidean, matching SMT-LIB `div`/`mod`.
    pub fn eval(self, args: &[Const]) -> Option<Const> {
        use num_traits::{Euclid, Zero};
        match (self, args) {
            (Op::Neg, [Const::Int(a)]) => Some(Const::Int(-a)),
            (Op::Not, [Const::Bool(a)]) => Some(Const::Bool(!a)),
            (Op::Eq, [a, b]) => Some(Const::Bool(a == b)),
            (Op::Neq, [a, b]) => Some(Const::Bool(a != b)),
            (Op::And, [Const::Bool(a), Const::Bool(b)]) => Some(Const::Bool(*a && *b)),
            (Op::Or, [Const::Bool(a), Const::Bool(b)]) => Some(Const::Bool(*a || *b)),
            (op, [Const::Int(a), Const::Int(b)]) => match op {
                Op::Add => Some(Const::Int(a + b)),
                Op::Sub => Some(Const::Int(a - b)),
                Op::Mul => Some(Const::Int(a * b)),
                Op::Div if b.is_zero() => None,
                Op::Mod if b.is_zero() => None,
                Op::Div => Some(Const::Int(a.div_euclid(b))),
                Op::Mod => Some(Const::Int(a.rem_euclid(b))),
                Op::Lt => Some(Const::Bool(a < b)),
                Op::Le => Some(Const::Bool(a <= b)),
                Op::Gt => Some(Const::Bool(a > b)),
                Op::Ge => Some(Const::Bool(a >= b)),
                _ => None,
            },
            _ => None,
        }
    }
}

/// A store location. `Named` locations are binders in source text; at run
/// time every `ref` allocates a fresh `Addr` and renames its body.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Loc {
    Named(String),
    Addr(u32),
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Loc::Named(n) => write!(f, "{n}"),
            Loc::Addr(a) => write!(f, "l#{a}"),
        }
    }
}

/// Abstract function name standing for an environment-supplied function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AbsName(pub u32);

impl fmt::Display for AbsName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "α{}", self.0)
    }
}

/// Symbolic constant of base type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymId(pub u32);

impl fmt::Display for SymId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "_k#{}", self.0)
    }
}

/// Pattern over annotation names used in `l as C` clauses.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum APat {
    /// Index into [`Annotation::names`].
    Name(usize),
    Const(Const),
    Tuple(Vec<APat>),
}

/// State-invariant annotation attached to a function. The empty annotation
/// only flags the function for re-entry pruning.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Annotation {
    pub names: Vec<String>,
    pub name_types: Vec<Type>,
    pub locs: Vec<(Loc, APat)>,
    /// Boolean formula whose free variables are `names`.
    pub formula: Expr,
}

impl Annotation {
    pub fn empty() -> Annotation {
        Annotation {
            names: vec![],
            name_types: vec![],
            locs: vec![],
            formula: Expr::Const(Const::Bool(true)),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty() && self.locs.is_empty()
    }
}

/// A (possibly recursive) function `λ[f] x. body`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lambda {
    pub rec_name: Option<String>,
    pub param: String,
    pub param_ty: Type,
    pub ret_ty: Type,
    pub annot: Option<Annotation>,
    pub body: Expr,
}

impl Lambda {
    pub fn ty(&self) -> Type {
        Type::arrow(self.param_ty.clone(), self.ret_ty.clone())
    }
}

/// Expressions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expr {
    Const(Const),
    Var(String),
    Lambda(Box<Lambda>),
    Tuple(Vec<Expr>),
    Op(Op, Vec<Expr>),
    App(Box<Expr>, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    NewRef(Loc, Box<Expr>, Box<Expr>),
    Deref(Loc),
    Assign(Loc, Box<Expr>),
    LetTuple(Vec<String>, Box<Expr>, Box<Expr>),
    Abs(AbsName, Type),
    Sym(SymId, Type),
    Bot,
}

/// Name used for wildcard binders; never substituted.
pub const WILDCARD: &str = "_";

impl Expr {
    pub fn int(i: i64) -> Expr {
        Expr::Const(Const::int(i))
    }
    pub fn boolean(b: bool) -> Expr {
        Expr::Const(Const::Bool(b))
    }
    pub fn unit() -> Expr {
        Expr::Const(Const::Unit)
    }
    pub fn var(x: &str) -> Expr {
        Expr::Var(x.to_string())
    }
    pub fn app(f: Expr, a: Expr) -> Expr {
        Expr::App(Box::new(f), Box::new(a))
    }
    pub fn op(op: Op, args: Vec<Expr>) -> Expr {
        Expr::Op(op, args)
    }
    pub fn lambda(param: &str, param_ty: Type, ret_ty: Type, body: Expr) -> Expr {
        Expr::Lambda(Box::new(Lambda {
            rec_name: None,
            param: param.to_string(),
            param_ty,
            ret_ty,
            annot: None,
            body,
        }))
    }
    pub fn cond(g: Expr, t: Expr, e: Expr) -> Expr {
        Expr::If(Box::new(g), Box::new(t), Box::new(e))
    }

    /// Syntactic value check.
    pub fn is_value(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Lambda(_) | Expr::Abs(..) | Expr::Sym(..) => true,
            Expr::Tuple(es) => es.iter().all(Expr::is_value),
            _ => false,
        }
    }

    /// Is this a base-type leaf (constant or symbolic constant)?
    pub fn is_base_value(&self) -> bool {
        matches!(self, Expr::Const(_) | Expr::Sym(..))
    }

    /// Type of a closed value, read from annotations. `None` for non-values.
    pub fn value_type(&self) -> Option<Type> {
        match self {
            Expr::Const(c) => Some(c.ty()),
            Expr::Lambda(l) => Some(l.ty()),
            Expr::Abs(_, t) | Expr::Sym(_, t) => Some(t.clone()),
            Expr::Tuple(es) => es
                .iter()
                .map(Expr::value_type)
                .collect::<Option<Vec<_>>>()
                .map(Type::Product),
            _ => None,
        }
    }

    /// Visit every immediate subexpression.
    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Const(_)
            | Expr::Var(_)
            | Expr::Deref(_)
            | Expr::Abs(..)
            | Expr::Sym(..)
            | Expr::Bot => {
                vec![]
            }
            Expr::Lambda(l) => vec![&l.body],
            Expr::Tuple(es) | Expr::Op(_, es) => es.iter().collect(),
            Expr::App(a, b) => vec![a, b],
            Expr::If(a, b, c) => vec![a, b, c],
            Expr::NewRef(_, a, b) | Expr::LetTuple(_, a, b) => vec![a, b],
            Expr::Assign(_, a) => vec![a],
        }
    }

    /// Number of AST nodes.
    pub fn size(&self) -> usize {
        1 + self.children().into_iter().map(Expr::size).sum::<usize>()
    }
}

/// Capture-avoiding substitution `e{v/x}`. `v` must be closed, so no
/// renaming is ever needed; binders of `x` stop the traversal.
pub fn subst(e: &Expr, x: &str, v: &Expr) -> Expr {
    if x == WILDCARD {
        return e.clone();
    }
    match e {
        Expr::Var(y) if y == x => v.clone(),
        Expr::Const(_)
        | Expr::Var(_)
        | Expr::Deref(_)
        | Expr::Abs(..)
        | Expr::Sym(..)
        | Expr::Bot => e.clone(),
        Expr::Lambda(l) => {
            if l.param == x || l.rec_name.as_deref() == Some(x) {
                e.clone()
            } else {
                let mut l2 = (**l).clone();
                l2.body = subst(&l.body, x, v);
                Expr::Lambda(Box::new(l2))
            }
        }
        Expr::Tuple(es) => Expr::Tuple(es.iter().map(|a| subst(a, x, v)).collect()),
        Expr::Op(op, es) => Expr::Op(*op, es.iter().map(|a| subst(a, x, v)).collect()),
        Expr::App(a, b) => Expr::app(subst(a, x, v), subst(b, x, v)),
        Expr::If(a, b, c) => Expr::cond(subst(a, x, v), subst(b, x, v), subst(c, x, v)),
        Expr::NewRef(l, a, b) => Expr::NewRef(
            l.clone(),
            Box::new(subst(a, x, v)),
            Box::new(subst(b, x, v)),
        ),
        Expr::Assign(l, a) => Expr::Assign(l.clone(), Box::new(subst(a, x, v))),
        Expr::LetTuple(xs, a, b) => {
            let b2 = if xs.iter().any(|y| y == x) {
                (**b).clone()
            } else {
                subst(b, x, v)
            };
            Expr::LetTuple(xs.clone(), Box::new(subst(a, x, v)), Box::new(b2))
        }
    }
}

/// Rename location `from` to `to`, respecting `ref` shadowing.
pub fn subst_loc(e: &Expr, from: &Loc, to: &Loc) -> Expr {
    let sl = |l: &Loc| if l == from { to.clone() } else { l.clone() };
    match e {
        Expr::Const(_) | Expr::Var(_) | Expr::Abs(..) | Expr::Sym(..) | Expr::Bot => e.clone(),
        Expr::Deref(l) => Expr::Deref(sl(l)),
        Expr::Assign(l, a) => Expr::Assign(sl(l), Box::new(subst_loc(a, from, to))),
        Expr::Lambda(lam) => {
            let mut l2 = (**lam).clone();
            if let Some(an) = &mut l2.annot {
                for (l, _) in an.locs.iter_mut() {
                    *l = sl(l);
                }
            }
            l2.body = subst_loc(&lam.body, from, to);
            Expr::Lambda(Box::new(l2))
        }
        Expr::Tuple(es) => Expr::Tuple(es.iter().map(|a| subst_loc(a, from, to)).collect()),
        Expr::Op(op, es) => Expr::Op(*op, es.iter().map(|a| subst_loc(a, from, to)).collect()),
        Expr::App(a, b) => Expr::app(subst_loc(a, from, to), subst_loc(b, from, to)),
        Expr::If(a, b, c) => Expr::cond(
            subst_loc(a, from, to),
            subst_loc(b, from, to),
            subst_loc(c, from, to),
        ),
        Expr::NewRef(l, a, b) => {
            let b2 = if l == from {
                (**b).clone()
            } else {
                subst_loc(b, from, to)
            };
            Expr::NewRef(l.clone(), Box::new(subst_loc(a, from, to)), Box::new(b2))
        }
        Expr::LetTuple(xs, a, b) => Expr::LetTuple(
            xs.clone(),
            Box::new(subst_loc(a, from, to)),
            Box::new(subst_loc(b, from, to)),
        ),
    }
}

/// Free locations, including those mentioned by invariant annotations.
pub fn free_locations(e: &Expr) -> BTreeSet<Loc> {
    let mut out = BTreeSet::new();
    collect_locs(e, &mut out);
    out
}

fn collect_locs(e: &Expr, out: &mut BTreeSet<Loc>) {
    match e {
        Expr::Deref(l) => {
            out.insert(l.clone());
        }
        Expr::Assign(l, a) => {
            out.insert(l.clone());
            collect_locs(a, out);
        }
        Expr::NewRef(l, a, b) => {
            collect_locs(a, out);
            let mut inner = BTreeSet::new();
            collect_locs(b, &mut inner);
            inner.remove(l);
            out.extend(inner);
        }
        Expr::Lambda(lam) => {
            if let Some(an) = &lam.annot {
                out.extend(an.locs.iter().map(|(l, _)| l.clone()));
            }
            collect_locs(&lam.body, out);
        }
        _ => {
            for c in e.children() {
                collect_locs(c, out);
            }
        }
    }
}

/// Abstract names occurring in `e`.
pub fn abstract_names(e: &Expr) -> BTreeSet<AbsName> {
    let mut out = BTreeSet::new();
    fn go(e: &Expr, out: &mut BTreeSet<AbsName>) {
        if let Expr::Abs(a, _) = e {
            out.insert(*a);
        }
        for c in e.children() {
            go(c, out);
        }
    }
    go(e, &mut out);
    out
}

/// Symbolic constants occurring in `e`, in left-to-right order of first
/// occurrence.
pub fn sym_consts(e: &Expr, out: &mut Vec<SymId>) {
    if let Expr::Sym(k, _) = e {
        if !out.contains(k) {
            out.push(*k);
        }
    }
    for c in e.children() {
        sym_consts(c, out);
    }
}

/// Typing error with the offending term.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TypeError {
    #[error("type mismatch in `{term}`: expected {expected}, found {found}")]
    Mismatch {
        term: String,
        expected: Type,
        found: Type,
    },
    #[error("unbound variable `{0}`")]
    UnboundVar(String),
    #[error("unbound location `{0}`")]
    UnboundLoc(String),
    #[error("cannot infer the type of `{0}` without an expected type")]
    CannotInfer(String),
    #[error("ill-formed term `{term}`: {reason}")]
    IllFormed { term: String, reason: String },
}

/// Variable typing Δ.
pub type TypeEnv = BTreeMap<String, Type>;
/// Store typing Σ.
pub type StoreTyping = BTreeMap<Loc, Type>;

/// Synthesize the type of `e` under Δ and Σ.
pub fn typecheck(delta: &TypeEnv, sigma: &StoreTyping, e: &Expr) -> Result<Type, TypeError> {
    tc(delta, sigma, e, None)
}

/// Check `e` against an expected type.
pub fn typecheck_against(
    delta: &TypeEnv,
    sigma: &StoreTyping,
    e: &Expr,
    ty: &Type,
) -> Result<(), TypeError> {
    tc(delta, sigma, e, Some(ty)).map(|_| ())
}

fn short(e: &Expr) -> String {
    let s = e.to_string();
    if s.chars().count() > 60 {
        let cut: String = s.chars().take(57).collect();
        format!("{cut}...")
    } else {
        s
    }
}

fn expect(e: &Expr, found: Type, expected: Option<&Type>) -> Result<Type, TypeError> {
    match expected {
        Some(t) if *t != found => Err(TypeError::Mismatch {
            term: short(e),
            expected: t.clone(),
            found,
        }),
        _ => Ok(found),
    }
}

fn tc(
    delta: &TypeEnv,
    sigma: &StoreTyping,
    e: &Expr,
    expected: Option<&Type>,
) -> Result<Type, TypeError> {
    match e {
        Expr::Bot => match expected {
            Some(t) => Ok(t.clone()),
            None => Err(TypeError::CannotInfer(short(e))),
        },
        Expr::Const(c) => expect(e, c.ty(), expected),
        Expr::Var(x) => {
            let t = delta
                .get(x)
                .cloned()
                .ok_or_else(|| TypeError::UnboundVar(x.clone()))?;
            expect(e, t, expected)
        }
        Expr::Abs(_, t) => {
            if t.as_arrow().is_none() {
                return Err(TypeError::IllFormed {
                    term: short(e),
                    reason: "abstract name of non-arrow type".into(),
                });
            }
            expect(e, t.clone(), expected)
        }
        Expr::Sym(_, t) => {
            if !t.is_base() {
                return Err(TypeError::IllFormed {
                    term: short(e),
                    reason: "symbolic constant of non-base type".into(),
                });
            }
            expect(e, t.clone(), expected)
        }
        Expr::Lambda(l) => {
            let mut d2 = delta.clone();
            if let Some(f) = &l.rec_name {
                d2.insert(f.clone(), l.ty());
            }
            if l.param != WILDCARD {
                d2.insert(l.param.clone(), l.param_ty.clone());
            }
            if let Some(an) = &l.annot {
                check_annotation(sigma, an)?;
            }
            tc(&d2, sigma, &l.body, Some(&l.ret_ty))?;
            expect(e, l.ty(), expected)
        }
        Expr::Tuple(es) => {
            if es.len() < 2 {
                return Err(TypeError::IllFormed {
                    term: short(e),
                    reason: "tuple with fewer than two components".into(),
                });
            }
            let comps = match expected {
                Some(Type::Product(ts)) if ts.len() == es.len() => Some(ts),
                _ => None,
            };
            let mut ts = Vec::new();
            for (k, a) in es.iter().enumerate() {
                ts.push(tc(delta, sigma, a, comps.map(|c| &c[k]))?);
            }
            expect(e, Type::Product(ts), expected)
        }
        Expr::Op(op, args) => {
            if args.len() != op.arity() {
                return Err(TypeError::IllFormed {
                    term: short(e),
                    reason: "wrong operator arity".into(),
                });
            }
            let t = match op {
                Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Mod | Op::Neg => {
                    for a in args {
                        tc(delta, sigma, a, Some(&Type::Int))?;
                    }
                    Type::Int
                }
                Op::Lt | Op::Le | Op::Gt | Op::Ge => {
                    for a in args {
                        tc(delta, sigma, a, Some(&Type::Int))?;
                    }
                    Type::Bool
                }
                Op::And | Op::Or | Op::Not => {
                    for a in args {
                        tc(delta, sigma, a, Some(&Type::Bool))?;
                    }
                    Type::Bool
                }
                Op::Eq | Op::Neq => {
                    let t0 = match tc(delta, sigma, &args[0], None) {
                        Ok(t) => t,
                        Err(TypeError::CannotInfer(_)) => tc(delta, sigma, &args[1], None)?,
                        Err(err) => return Err(err),
                    };
                    if !t0.is_base() {
                        return Err(TypeError::IllFormed {
                            term: short(e),
                            reason: "equality on non-base type".into(),
                        });
                    }
                    tc(delta, sigma, &args[0], Some(&t0))?;
                    tc(delta, sigma, &args[1], Some(&t0))?;
                    Type::Bool
                }
            };
            expect(e, t, expected)
        }
        Expr::App(f, a) => {
            let tf = tc(delta, sigma, f, None)?;
            let (dom, cod) = match &tf {
                Type::Arrow(d, c) => (d.as_ref().clone(), c.as_ref().clone()),
                other => {
                    return Err(TypeError::IllFormed {
                        term: short(e),
                        reason: format!("applying a value of type {other}"),
                    })
                }
            };
            tc(delta, sigma, a, Some(&dom))?;
            expect(e, cod, expected)
        }
        Expr::If(g, a, b) => {
            tc(delta, sigma, g, Some(&Type::Bool))?;
            if let Some(t) = expected {
                tc(delta, sigma, a, Some(t))?;
                tc(delta, sigma, b, Some(t))?;
                return Ok(t.clone());
            }
            match tc(delta, sigma, a, None) {
                Ok(t) => {
                    tc(delta, sigma, b, Some(&t))?;
                    Ok(t)
                }
                Err(TypeError::CannotInfer(_)) => {
                    let t = tc(delta, sigma, b, None)?;
                    tc(delta, sigma, a, Some(&t))?;
                    Ok(t)
                }
                Err(err) => Err(err),
            }
        }
        Expr::NewRef(l, init, body) => {
            let t = tc(delta, sigma, init, None)?;
            let mut s2 = sigma.clone();
            s2.insert(l.clone(), t);
            tc(delta, &s2, body, expected)
        }
        Expr::Deref(l) => {
            let t = sigma
                .get(l)
                .cloned()
                .ok_or_else(|| TypeError::UnboundLoc(l.to_string()))?;
            expect(e, t, expected)
        }
        Expr::Assign(l, a) => {
            let t = sigma
                .get(l)
                .cloned()
                .ok_or_else(|| TypeError::UnboundLoc(l.to_string()))?;
            tc(delta, sigma, a, Some(&t))?;
            expect(e, Type::Unit, expected)
        }
        Expr::LetTuple(xs, a, b) => {
            let ta = tc(delta, sigma, a, None)?;
            let comps = match &ta {
                Type::Product(ts) if ts.len() == xs.len() => ts.clone(),
                other => {
                    return Err(TypeError::IllFormed {
                        term: short(e),
                        reason: format!("destructuring {} names from {other}", xs.len()),
                    })
                }
            };
            let mut d2 = delta.clone();
            for (x, t) in xs.iter().zip(comps) {
                if x != WILDCARD {
                    d2.insert(x.clone(), t);
                }
            }
            tc(&d2, sigma, b, expected)
        }
    }
}

fn check_annotation(sigma: &StoreTyping, an: &Annotation) -> Result<(), TypeError> {
    let mut d = TypeEnv::new();
    for (n, t) in an.names.iter().zip(&an.name_types) {
        if !t.is_base() {
            return Err(TypeError::IllFormed {
                term: n.clone(),
                reason: "annotation name of non-base type".into(),
            });
        }
        d.insert(n.clone(), t.clone());
    }
    fn pat_ty(an: &Annotation, p: &APat) -> Type {
        match p {
            APat::Name(k) => an.name_types[*k].clone(),
            APat::Const(c) => c.ty(),
            APat::Tuple(ps) => Type::Product(ps.iter().map(|q| pat_ty(an, q)).collect()),
        }
    }
    for (l, p) in &an.locs {
        let t = sigma
            .get(l)
            .cloned()
            .ok_or_else(|| TypeError::UnboundLoc(l.to_string()))?;
        let pt = pat_ty(an, p);
        if t != pt {
            return Err(TypeError::Mismatch {
                term: format!("{l} as ..."),
                expected: t,
                found: pt,
            });
        }
    }
    tc(&d, sigma, &an.formula, Some(&Type::Bool)).map(|_| ())
}

// ----------------------------------------------------------------------------
// Printing in surface syntax. Every compound form is parenthesized, which keeps
// the printer simple and makes the output re-parse to the same tree.

/// Name of the temporary introduced when `ref x = e in b` has a non-value `e`.
pub const REF_TMP: &str = "%ref";

impl fmt::Display for APat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            APat::Name(k) => write!(f, "#{k}"),
            APat::Const(c) => write!(f, "{c}"),
            APat::Tuple(ps) => {
                write!(f, "(")?;
                for (k, p) in ps.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ")")
            }
        }
    }
}

fn fmt_apat(an: &Annotation, p: &APat, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match p {
        APat::Name(k) => write!(f, "{}", an.names[*k]),
        APat::Const(c) => fmt_const(c, f),
        APat::Tuple(ps) => {
            write!(f, "(")?;
            for (k, q) in ps.iter().enumerate() {
                if k > 0 {
                    write!(f, ", ")?;
                }
                fmt_apat(an, q, f)?;
            }
            write!(f, ")")
        }
    }
}

fn fmt_const(c: &Const, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match c {
        Const::Int(i) if i.sign() == num_bigint::Sign::Minus => write!(f, "({i})"),
        _ => write!(f, "{c}"),
    }
}

impl fmt::Display for Annotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() && self.formula == Expr::boolean(true) {
            return write!(f, "{{}}");
        }
        write!(f, "{{{} | ", self.names.join(", "))?;
        for (k, (l, p)) in self.locs.iter().enumerate() {
            if k > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{l} as ")?;
            fmt_apat(self, p, f)?;
        }
        write!(f, " | {}}}", self.formula)
    }
}

fn fmt_param(l: &Lambda, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if l.param == WILDCARD && l.param_ty == Type::Unit {
        write!(f, "()")
    } else {
        write!(f, "{}", l.param)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => fmt_const(c, f),
            Expr::Var(x) => write!(f, "{x}"),
            Expr::Abs(a, _) => write!(f, "{a}"),
            Expr::Sym(k, _) => write!(f, "{k}"),
            Expr::Bot => write!(f, "_bot_"),
            Expr::Deref(l) => write!(f, "!{l}"),
            Expr::Lambda(l) => {
                let annot = |f: &mut fmt::Formatter<'_>| -> fmt::Result {
                    if let Some(an) = &l.annot {
                        write!(f, " {an}")?;
                    }
                    Ok(())
                };
                match &l.rec_name {
                    Some(name) => {
                        write!(f, "(let rec {name} ")?;
                        fmt_param(l, f)?;
                        annot(f)?;
                        write!(f, " = {} in {name})", l.body)
                    }
                    None => {
                        write!(f, "(fun ")?;
                        fmt_param(l, f)?;
                        annot(f)?;
                        write!(f, " -> {})", l.body)
                    }
                }
            }
            Expr::Tuple(es) => {
                write!(f, "(")?;
                for (k, a) in es.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            Expr::Op(op, args) => match args.as_slice() {
                [a] => write!(f, "({} {a})", op.symbol()),
                [a, b] => write!(f, "({a} {} {b})", op.symbol()),
                _ => write!(f, "(<bad op>)"),
            },
            Expr::App(fun, arg) => {
                if let Expr::Lambda(l) = fun.as_ref() {
                    if l.rec_name.is_none() && l.annot.is_none() {
                        if l.param == WILDCARD {
                            return write!(f, "({arg}; {})", l.body);
                        }
                        if l.param == REF_TMP {
                            if let Expr::NewRef(loc, init, body) = &l.body {
                                if init.as_ref() == &Expr::var(REF_TMP) {
                                    return write!(f, "(ref {loc} = {arg} in {body})");
                                }
                            }
                        }
                        return write!(f, "(let {} = {arg} in {})", l.param, l.body);
                    }
                }
                write!(f, "({fun} {arg})")
            }
            Expr::If(g, a, b) => write!(f, "(if {g} then {a} else {b})"),
            Expr::NewRef(l, a, b) => write!(f, "(ref {l} = {a} in {b})"),
            Expr::Assign(l, a) => write!(f, "({l} := {a})"),
            Expr::LetTuple(xs, a, b) => write!(f, "(let ({}) = {a} in {b})", xs.join(", ")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subst_examples() {
        let e = Expr::op(Op::Add, vec![Expr::var("x"), Expr::int(1)]);
        assert_eq!(
            subst(&e, "x", &Expr::int(2)),
            Expr::op(Op::Add, vec![Expr::int(2), Expr::int(1)])
        );

        let id_z = Expr::lambda("z", Type::Int, Type::Int, Expr::var("z"));
        let lam_y = Expr::lambda(
            "y",
            Type::Int,
            Type::arrow(Type::Int, Type::Int),
            Expr::var("x"),
        );
        let expected = Expr::lambda(
            "y",
            Type::Int,
            Type::arrow(Type::Int, Type::Int),
            id_z.clone(),
        );
        assert_eq!(subst(&lam_y, "x", &id_z), expected);

        let shadow = Expr::lambda("x", Type::Int, Type::Int, Expr::var("x"));
        assert_eq!(subst(&shadow, "x", &Expr::int(5)), shadow);
    }

    #[test]
    fn free_locations_examples() {
        let l = Loc::Named("l".into());
        let k = Loc::Named("k".into());
        let e = Expr::Assign(
            l.clone(),
            Box::new(Expr::op(
                Op::Add,
                vec![Expr::Deref(k.clone()), Expr::int(1)],
            )),
        );
        assert_eq!(free_locations(&e), [l, k].into_iter().collect());
        let id = Expr::lambda("x", Type::Int, Type::Int, Expr::var("x"));
        assert!(free_locations(&id).is_empty());
    }

    #[test]
    fn abstract_names_example() {
        let t = Type::arrow(Type::Int, Type::Int);
        let e = Expr::lambda(
            "x",
            Type::Int,
            Type::Int,
            Expr::app(Expr::Abs(AbsName(0), t), Expr::var("x")),
        );
        assert_eq!(abstract_names(&e), [AbsName(0)].into_iter().collect());
    }

    #[test]
    fn euclidean_division() {
        assert_eq!(
            Op::Mod.eval(&[Const::int(-1), Const::int(2)]),
            Some(Const::int(1))
        );
        assert_eq!(
            Op::Div.eval(&[Const::int(-1), Const::int(2)]),
            Some(Const::int(-1))
        );
        assert_eq!(Op::Div.eval(&[Const::int(1), Const::int(0)]), None);
    }

    #[test]
    fn bot_checks_at_any_type() {
        let d = TypeEnv::new();
        let s = StoreTyping::new();
        assert!(typecheck(&d, &s, &Expr::Bot).is_err());
        assert!(typecheck_against(&d, &s, &Expr::Bot, &Type::Int).is_ok());
        let e = Expr::cond(Expr::boolean(true), Expr::Bot, Expr::int(1));
        assert_eq!(typecheck(&d, &s, &e), Ok(Type::Int));
    }
}
