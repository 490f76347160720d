//! The game between a program (proponent) and its context (opponent):
//! configurations, ultimate patterns and the moves each player can make.

use crate::constraints::{Solver, SymbolicEnv};
use crate::fresh::Fresh;
use crate::lang::{abstract_names, subst, AbsName, Const, Expr, SymId, Type};
use crate::semantics::{reduce_to_interaction, EvalCtx, Outcome, Store};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

/// A proponent continuation waiting for the opponent to return a value of
/// type `ty`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Cont {
    pub ctx: EvalCtx,
    pub ty: Type,
}

/// `⟨A; Γ; K; s; ê⟩`. `expr` is present exactly for proponent
/// configurations. The stack top is the last element.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LiveConfig {
    pub abs: BTreeMap<AbsName, Type>,
    pub gamma: BTreeMap<u32, Expr>,
    pub stack: Vec<Cont>,
    pub store: Store,
    pub expr: Option<Expr>,
    /// Next Γ index to hand out. Indices are never reused on a path, so
    /// records that mention an index cannot be confused by a later entry.
    pub next_index: u32,
}

impl LiveConfig {
    /// The starting proponent configuration `⟨·; ·; ·; ·; e⟩`.
    pub fn initial(e: Expr) -> LiveConfig {
        LiveConfig {
            abs: BTreeMap::new(),
            gamma: BTreeMap::new(),
            stack: vec![],
            store: Store::new(),
            expr: Some(e),
            next_index: 0,
        }
    }

    pub fn is_proponent(&self) -> bool {
        self.expr.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Config {
    Live(LiveConfig),
    Bottom,
}

/// Skeleton of an ultimate pattern. Proponent patterns use `Hole`, `Const`
/// and `Sym`; opponent patterns use `Abs`, `Sym` and the unit constant.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Skel {
    Hole(u32),
    Const(Const),
    Abs(AbsName),
    Sym(SymId),
    Tuple(Vec<Skel>),
}

impl fmt::Display for Skel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Skel::Hole(i) => write!(f, "_fn#{i}"),
            Skel::Const(c) => write!(f, "{c}"),
            Skel::Abs(a) => write!(f, "{a}"),
            Skel::Sym(k) => write!(f, "{k}"),
            Skel::Tuple(ps) => {
                write!(f, "(")?;
                for (n, p) in ps.iter().enumerate() {
                    if n > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl Skel {
    /// Leaves other than holes, left to right.
    pub fn leaves(&self) -> Vec<&Skel> {
        let mut out = vec![];
        fn go<'a>(s: &'a Skel, out: &mut Vec<&'a Skel>) {
            match s {
                Skel::Tuple(ps) => ps.iter().for_each(|p| go(p, out)),
                Skel::Hole(_) => {}
                other => out.push(other),
            }
        }
        go(self, &mut out);
        out
    }

    pub fn holes(&self) -> Vec<u32> {
        let mut out = vec![];
        fn go(s: &Skel, out: &mut Vec<u32>) {
            match s {
                Skel::Tuple(ps) => ps.iter().for_each(|p| go(p, out)),
                Skel::Hole(i) => out.push(*i),
                _ => {}
            }
        }
        go(self, &mut out);
        out
    }

    /// The base-value leaf as an expression.
    pub fn leaf_expr(&self) -> Option<Expr> {
        match self {
            Skel::Const(c) => Some(Expr::Const(c.clone())),
            Skel::Sym(k) => Some(Expr::Sym(*k, Type::Int)),
            _ => None,
        }
    }
}

/// Split a proponent value into a skeleton whose functions are replaced by
/// holes numbered from `*next`, and the functions themselves.
pub fn ulpatt_value(v: &Expr, next: &mut u32) -> (Skel, Vec<(u32, Expr)>) {
    let mut binds = vec![];
    let skel = ulpatt_value_into(v, next, &mut binds);
    (skel, binds)
}

fn ulpatt_value_into(v: &Expr, next: &mut u32, binds: &mut Vec<(u32, Expr)>) -> Skel {
    match v {
        Expr::Lambda(_) | Expr::Abs(..) => {
            let i = *next;
            *next += 1;
            binds.push((i, v.clone()));
            Skel::Hole(i)
        }
        Expr::Const(c) => Skel::Const(c.clone()),
        Expr::Sym(k, _) => Skel::Sym(*k),
        Expr::Tuple(vs) => Skel::Tuple(
            vs.iter()
                .map(|a| ulpatt_value_into(a, next, binds))
                .collect(),
        ),
        other => panic!("ulpatt of non-value {other}"),
    }
}

/// Rebuild a value from a skeleton. Symbolic leaves need their types, which
/// are looked up in `sym_types`; unknown ones default to int.
pub fn plug_skel(
    skel: &Skel,
    binds: &BTreeMap<u32, Expr>,
    sym_types: &BTreeMap<SymId, Type>,
) -> Expr {
    match skel {
        Skel::Hole(i) => binds[i].clone(),
        Skel::Const(c) => Expr::Const(c.clone()),
        Skel::Abs(a) => panic!("abstract name {a} in a proponent skeleton"),
        Skel::Sym(k) => Expr::Sym(*k, sym_types.get(k).cloned().unwrap_or(Type::Int)),
        Skel::Tuple(ps) => Expr::Tuple(ps.iter().map(|p| plug_skel(p, binds, sym_types)).collect()),
    }
}

/// The canonical opponent value of a type: fresh abstract names for
/// functions, fresh symbolic constants for integers and booleans.
#[derive(Clone, Debug, PartialEq)]
pub struct OpPattern {
    pub skel: Skel,
    pub value: Expr,
    pub syms: Vec<(SymId, Type)>,
    pub abs: Vec<(AbsName, Type)>,
}

pub fn ulpatt_type(ty: &Type, fresh: &Fresh) -> OpPattern {
    let mut p = OpPattern {
        skel: Skel::Const(Const::Unit),
        value: Expr::unit(),
        syms: vec![],
        abs: vec![],
    };
    let (skel, value) = pattern_of(ty, fresh, &mut p);
    p.skel = skel;
    p.value = value;
    p
}

fn pattern_of(ty: &Type, fresh: &Fresh, p: &mut OpPattern) -> (Skel, Expr) {
    match ty {
        // unit has one inhabitant; a symbolic constant would only add noise
        Type::Unit => (Skel::Const(Const::Unit), Expr::unit()),
        Type::Int | Type::Bool => {
            let k = fresh.sym();
            p.syms.push((k, ty.clone()));
            (Skel::Sym(k), Expr::Sym(k, ty.clone()))
        }
        Type::Arrow(..) => {
            let a = fresh.abs();
            p.abs.push((a, ty.clone()));
            (Skel::Abs(a), Expr::Abs(a, ty.clone()))
        }
        Type::Product(ts) => {
            let (ss, vs): (Vec<_>, Vec<_>) = ts.iter().map(|t| pattern_of(t, fresh, p)).unzip();
            (Skel::Tuple(ss), Expr::Tuple(vs))
        }
    }
}

/// Labels of the game. Proponent moves print with a leading underscore.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Move {
    PropApp { abs: AbsName, pat: Skel },
    PropRet { pat: Skel },
    OpApp { index: u32, pat: Skel },
    OpRet { pat: Skel },
    Term,
}

impl Move {
    pub fn is_proponent(&self) -> bool {
        matches!(self, Move::PropApp { .. } | Move::PropRet { .. })
    }

    pub fn pattern(&self) -> Option<&Skel> {
        match self {
            Move::PropApp { pat, .. }
            | Move::PropRet { pat }
            | Move::OpApp { pat, .. }
            | Move::OpRet { pat } => Some(pat),
            Move::Term => None,
        }
    }
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Move::PropApp { abs, pat } => write!(f, "_app({abs}, {pat})"),
            Move::PropRet { pat } => write!(f, "_ret({pat})"),
            Move::OpApp { index, pat } => write!(f, "app(g#{index}, {pat})"),
            Move::OpRet { pat } => write!(f, "ret({pat})"),
            Move::Term => write!(f, "TERM"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LtsError {
    #[error("no function at index {0}")]
    NoSuchIndex(u32),
    #[error("value at index {0} is not a function")]
    NotAFunction(u32),
    #[error("opponent return with an empty stack")]
    EmptyStack,
    #[error("opponent move from a proponent configuration")]
    NotOpponent,
}

/// What one symbolic branch of a proponent configuration does.
#[derive(Clone, Debug)]
pub enum PropResult {
    Moved {
        mv: Move,
        sigma: SymbolicEnv,
        config: LiveConfig,
    },
    /// The branch diverges (`_bot_` or division by zero).
    Stuck {
        sigma: SymbolicEnv,
    },
    FuelExhausted {
        sigma: SymbolicEnv,
    },
    Unknown {
        sigma: SymbolicEnv,
        why: String,
    },
}

/// Run the proponent until it returns or calls out, on every symbolic
/// branch.
pub fn proponent_moves(
    sigma: &SymbolicEnv,
    c: &LiveConfig,
    fuel: u64,
    solver: &mut Solver,
    fresh: &Fresh,
) -> Vec<PropResult> {
    let e = c.expr.as_ref().expect("proponent configuration");
    let mut out = vec![];
    for it in reduce_to_interaction(sigma, &c.store, e, fuel, solver, fresh) {
        let sigma = it.sigma;
        match it.outcome {
            Outcome::Value(v) => {
                let mut next = c.next_index;
                let (pat, binds) = ulpatt_value(&v, &mut next);
                let mut config = LiveConfig {
                    store: it.store,
                    expr: None,
                    next_index: next,
                    ..c.clone()
                };
                config.gamma.extend(binds);
                out.push(PropResult::Moved {
                    mv: Move::PropRet { pat },
                    sigma,
                    config,
                });
            }
            Outcome::Call {
                ctx,
                abs,
                abs_ty,
                arg,
            } => {
                let mut next = c.next_index;
                let (pat, binds) = ulpatt_value(&arg, &mut next);
                let ty = abs_ty
                    .as_arrow()
                    .map(|(_, r)| r.clone())
                    .expect("abstract name of arrow type");
                let mut config = LiveConfig {
                    store: it.store,
                    expr: None,
                    next_index: next,
                    ..c.clone()
                };
                config.gamma.extend(binds);
                config.stack.push(Cont { ctx, ty });
                out.push(PropResult::Moved {
                    mv: Move::PropApp { abs, pat },
                    sigma,
                    config,
                });
            }
            Outcome::StuckBot => out.push(PropResult::Stuck { sigma }),
            Outcome::FuelExhausted => out.push(PropResult::FuelExhausted { sigma }),
            Outcome::Unknown(why) => out.push(PropResult::Unknown { sigma, why }),
        }
    }
    out
}

/// Argument type of the function at index `i`.
pub fn arg_type(c: &LiveConfig, i: u32) -> Result<Type, LtsError> {
    let v = c.gamma.get(&i).ok_or(LtsError::NoSuchIndex(i))?;
    match v.value_type() {
        Some(Type::Arrow(a, _)) => Ok(*a),
        _ => Err(LtsError::NotAFunction(i)),
    }
}

/// Opponent applies `Γ(i)` to the pattern value. Lambdas are β-reduced at
/// once; abstract names are kept applied.
pub fn op_app(c: &LiveConfig, i: u32, pat: &OpPattern) -> Result<LiveConfig, LtsError> {
    if c.is_proponent() {
        return Err(LtsError::NotOpponent);
    }
    let f = c.gamma.get(&i).ok_or(LtsError::NoSuchIndex(i))?;
    let e = match f {
        Expr::Lambda(l) => {
            let mut body = subst(&l.body, &l.param, &pat.value);
            if let Some(name) = &l.rec_name {
                body = subst(&body, name, f);
            }
            body
        }
        Expr::Abs(..) => Expr::app(f.clone(), pat.value.clone()),
        _ => return Err(LtsError::NotAFunction(i)),
    };
    let mut out = c.clone();
    out.abs.extend(pat.abs.iter().cloned());
    out.expr = Some(e);
    Ok(out)
}

/// Opponent returns the pattern value to the top continuation.
pub fn op_ret(c: &LiveConfig, pat: &OpPattern) -> Result<LiveConfig, LtsError> {
    if c.is_proponent() {
        return Err(LtsError::NotOpponent);
    }
    let mut out = c.clone();
    let k = out.stack.pop().ok_or(LtsError::EmptyStack)?;
    out.abs.extend(pat.abs.iter().cloned());
    out.expr = Some(k.ctx.plug(pat.value.clone()));
    Ok(out)
}

fn declare(sigma: &SymbolicEnv, pat: &OpPattern) -> SymbolicEnv {
    let mut s = sigma.clone();
    for (k, t) in &pat.syms {
        s.declare(*k, t.clone());
    }
    s
}

/// Every opponent move: one application per Γ index, a return when the
/// stack is nonempty, and termination when it is empty.
pub fn opponent_moves(
    sigma: &SymbolicEnv,
    c: &LiveConfig,
    fresh: &Fresh,
) -> Vec<(Move, SymbolicEnv, Config)> {
    let mut out = vec![];
    for &i in c.gamma.keys() {
        let Ok(ty) = arg_type(c, i) else { continue };
        let pat = ulpatt_type(&ty, fresh);
        if let Ok(next) = op_app(c, i, &pat) {
            out.push((
                Move::OpApp {
                    index: i,
                    pat: pat.skel.clone(),
                },
                declare(sigma, &pat),
                Config::Live(next),
            ));
        }
    }
    match c.stack.last() {
        Some(k) => {
            let pat = ulpatt_type(&k.ty, fresh);
            if let Ok(next) = op_ret(c, &pat) {
                out.push((
                    Move::OpRet {
                        pat: pat.skel.clone(),
                    },
                    declare(sigma, &pat),
                    Config::Live(next),
                ));
            }
        }
        None => out.push((Move::Term, sigma.clone(), Config::Bottom)),
    }
    out
}

/// Free term variables of `e`.
pub fn free_vars(e: &Expr) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    fn go(e: &Expr, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match e {
            Expr::Var(x) => {
                if !bound.contains(x) {
                    out.insert(x.clone());
                }
            }
            Expr::Lambda(l) => {
                let n = bound.len();
                bound.push(l.param.clone());
                if let Some(f) = &l.rec_name {
                    bound.push(f.clone());
                }
                go(&l.body, bound, out);
                bound.truncate(n);
            }
            Expr::LetTuple(xs, a, b) => {
                go(a, bound, out);
                let n = bound.len();
                bound.extend(xs.iter().cloned());
                go(b, bound, out);
                bound.truncate(n);
            }
            _ => {
                for c in e.children() {
                    go(c, bound, out);
                }
            }
        }
    }
    go(e, &mut vec![], &mut out);
    out
}

/// Structural sanity of a configuration: closed terms, abstract names
/// accounted for in `A`, Γ holding functions only.
pub fn wellformed(c: &Config) -> bool {
    let Config::Live(c) = c else { return true };
    let mut terms: Vec<&Expr> = c.gamma.values().collect();
    terms.extend(c.store.values());
    if let Some(e) = &c.expr {
        terms.push(e);
    }
    let ctx_terms: Vec<&Expr> = c.stack.iter().flat_map(|k| k.ctx.exprs()).collect();
    let closed = terms.iter().all(|e| free_vars(e).is_empty());
    let names_ok = terms
        .iter()
        .chain(ctx_terms.iter())
        .all(|e| abstract_names(e).iter().all(|a| c.abs.contains_key(a)));
    let gamma_ok = c
        .gamma
        .values()
        .all(|v| matches!(v, Expr::Lambda(_) | Expr::Abs(..)));
    let index_ok = c.gamma.keys().all(|&i| i < c.next_index);
    closed && names_ok && gamma_ok && index_ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;

    #[test]
    fn ulpatt_of_pair() {
        let lam = parse_program("fun x -> x + 1").unwrap().0;
        let v = Expr::Tuple(vec![lam.clone(), Expr::int(5)]);
        let mut next = 3;
        let (skel, binds) = ulpatt_value(&v, &mut next);
        assert_eq!(
            skel,
            Skel::Tuple(vec![Skel::Hole(3), Skel::Const(Const::int(5))])
        );
        assert_eq!(binds, vec![(3, lam)]);
        assert_eq!(next, 4);
        let (skel, binds) = ulpatt_value(&Expr::int(7), &mut next);
        assert_eq!(skel, Skel::Const(Const::int(7)));
        assert!(binds.is_empty());
    }

    #[test]
    fn ulpatt_of_types() {
        let fresh = Fresh::new();
        let p = ulpatt_type(&Type::arrow(Type::Unit, Type::Unit), &fresh);
        assert!(matches!(p.skel, Skel::Abs(_)));
        let p = ulpatt_type(&Type::Int, &fresh);
        assert!(matches!(p.skel, Skel::Sym(_)));
        let t = Type::Product(vec![Type::Int, Type::arrow(Type::Unit, Type::Unit)]);
        let p = ulpatt_type(&t, &fresh);
        assert_eq!(p.syms.len(), 1);
        assert_eq!(p.abs.len(), 1);
        assert_eq!(p.value.value_type(), Some(t));
    }

    #[test]
    fn example_one_moves() {
        let fresh = Fresh::new();
        let mut solver = Solver::new("");
        let (g, _) = parse_program("fun f -> f (); 0").unwrap();
        let c = LiveConfig::initial(g);
        let sigma = SymbolicEnv::new();
        let r = proponent_moves(&sigma, &c, 100, &mut solver, &fresh);
        let PropResult::Moved { mv, config, .. } = &r[0] else {
            panic!()
        };
        assert_eq!(mv.to_string(), "_ret(_fn#0)");
        let moves = opponent_moves(&sigma, config, &fresh);
        assert_eq!(moves.len(), 2);
        assert!(matches!(moves[1].0, Move::Term));
        let Config::Live(p) = &moves[0].2 else {
            panic!()
        };
        let r = proponent_moves(&sigma, p, 100, &mut solver, &fresh);
        let PropResult::Moved { mv, config, .. } = &r[0] else {
            panic!()
        };
        assert!(matches!(
            mv,
            Move::PropApp {
                pat: Skel::Const(Const::Unit),
                ..
            }
        ));
        assert_eq!(config.stack.len(), 1);
        let moves = opponent_moves(&sigma, config, &fresh);
        let (Move::OpRet { .. }, _, Config::Live(back)) = &moves[1] else {
            panic!("{:?}", moves[1].0)
        };
        let r = proponent_moves(&sigma, back, 100, &mut solver, &fresh);
        let PropResult::Moved { mv, .. } = &r[0] else {
            panic!()
        };
        assert_eq!(mv.to_string(), "_ret(0)");
        assert!(wellformed(&Config::Live(back.clone())));
    }

    #[test]
    fn bot_is_silent() {
        let fresh = Fresh::new();
        let mut solver = Solver::new("");
        let c = LiveConfig::initial(Expr::Bot);
        let r = proponent_moves(&SymbolicEnv::new(), &c, 100, &mut solver, &fresh);
        assert!(matches!(r[..], [PropResult::Stuck { .. }]));
    }

    #[test]
    fn wellformedness() {
        let a = AbsName(0);
        let ty = Type::arrow(Type::Int, Type::Int);
        let body = Expr::app(Expr::Abs(a, ty.clone()), Expr::var("x"));
        let lam = Expr::lambda("x", Type::Int, Type::Int, body);
        let mut c = LiveConfig::initial(Expr::unit());
        c.expr = None;
        c.gamma.insert(0, lam);
        c.next_index = 1;
        assert!(!wellformed(&Config::Live(c.clone())));
        c.abs.insert(a, ty);
        assert!(wellformed(&Config::Live(c)));
        assert!(wellformed(&Config::Bottom));
    }
}
