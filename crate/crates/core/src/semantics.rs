//! Small-step reduction, concrete and symbolic.
//!
//! Terms are decomposed into an evaluation context and a redex, the redex is
//! contracted, and the result is plugged back. The symbolic step threads a
//! symbolic environment: arithmetic on symbolic arguments yields a fresh
//! constant, and a conditional on a symbolic guard splits into the
//! satisfiable branches.

use crate::constraints::{Atom, SatResult, Solver, SymExpr, SymbolicEnv};
use crate::fresh::Fresh;
use crate::lang::{subst, subst_loc, AbsName, Const, Expr, Loc, Op, SymId, Type};
use std::collections::BTreeMap;
use std::fmt;

/// Stores map allocated locations to closed values.
pub type Store = BTreeMap<Loc, Expr>;

/// One layer of an evaluation context.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Frame {
    Tuple {
        done: Vec<Expr>,
        rest: Vec<Expr>,
    },
    Op {
        op: Op,
        done: Vec<Expr>,
        rest: Vec<Expr>,
    },
    /// `• e`
    AppFn {
        arg: Expr,
    },
    /// `v •`
    AppArg {
        fun: Expr,
    },
    Assign {
        loc: Loc,
    },
    If {
        then: Expr,
        els: Expr,
    },
    LetTuple {
        binders: Vec<String>,
        body: Expr,
    },
}

/// Single-hole evaluation context, outermost frame first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EvalCtx {
    pub frames: Vec<Frame>,
}

/// Marker expression used to print the hole of a context.
const HOLE: &str = "•";

impl EvalCtx {
    pub fn hole() -> EvalCtx {
        EvalCtx::default()
    }

    pub fn is_hole(&self) -> bool {
        self.frames.is_empty()
    }

    /// E[e].
    pub fn plug(&self, e: Expr) -> Expr {
        let mut cur = e;
        for f in self.frames.iter().rev() {
            cur = match f {
                Frame::Tuple { done, rest } => {
                    let mut es = done.clone();
                    es.push(cur);
                    es.extend(rest.iter().cloned());
                    Expr::Tuple(es)
                }
                Frame::Op { op, done, rest } => {
                    let mut es = done.clone();
                    es.push(cur);
                    es.extend(rest.iter().cloned());
                    Expr::Op(*op, es)
                }
                Frame::AppFn { arg } => Expr::app(cur, arg.clone()),
                Frame::AppArg { fun } => Expr::app(fun.clone(), cur),
                Frame::Assign { loc } => Expr::Assign(loc.clone(), Box::new(cur)),
                Frame::If { then, els } => Expr::cond(cur, then.clone(), els.clone()),
                Frame::LetTuple { binders, body } => {
                    Expr::LetTuple(binders.clone(), Box::new(cur), Box::new(body.clone()))
                }
            };
        }
        cur
    }

    /// Every expression stored in the frames, for traversals.
    pub fn exprs(&self) -> Vec<&Expr> {
        let mut out = vec![];
        for f in &self.frames {
            match f {
                Frame::Tuple { done, rest } | Frame::Op { done, rest, .. } => {
                    out.extend(done.iter());
                    out.extend(rest.iter());
                }
                Frame::AppFn { arg } => out.push(arg),
                Frame::AppArg { fun } => out.push(fun),
                Frame::Assign { .. } => {}
                Frame::If { then, els } => {
                    out.push(then);
                    out.push(els);
                }
                Frame::LetTuple { body, .. } => out.push(body),
            }
        }
        out
    }

    /// Locations mentioned directly by frames (assignment targets).
    pub fn frame_locs(&self) -> Vec<&Loc> {
        self.frames
            .iter()
            .filter_map(|f| match f {
                Frame::Assign { loc } => Some(loc),
                _ => None,
            })
            .collect()
    }

    /// Apply `g` to every expression in the context.
    pub fn map_exprs(&self, g: &mut dyn FnMut(&Expr) -> Expr) -> EvalCtx {
        let frames = self
            .frames
            .iter()
            .map(|f| match f {
                Frame::Tuple { done, rest } => Frame::Tuple {
                    done: done.iter().map(&mut *g).collect(),
                    rest: rest.iter().map(&mut *g).collect(),
                },
                Frame::Op { op, done, rest } => Frame::Op {
                    op: *op,
                    done: done.iter().map(&mut *g).collect(),
                    rest: rest.iter().map(&mut *g).collect(),
                },
                Frame::AppFn { arg } => Frame::AppFn { arg: g(arg) },
                Frame::AppArg { fun } => Frame::AppArg { fun: g(fun) },
                Frame::Assign { loc } => Frame::Assign { loc: loc.clone() },
                Frame::If { then, els } => Frame::If {
                    then: g(then),
                    els: g(els),
                },
                Frame::LetTuple { binders, body } => Frame::LetTuple {
                    binders: binders.clone(),
                    body: g(body),
                },
            })
            .collect();
        EvalCtx { frames }
    }

    /// Rename locations in the context.
    pub fn map_locs(&self, g: &dyn Fn(&Loc) -> Loc, ge: &mut dyn FnMut(&Expr) -> Expr) -> EvalCtx {
        let mut c = self.map_exprs(ge);
        for f in c.frames.iter_mut() {
            if let Frame::Assign { loc } = f {
                *loc = g(loc);
            }
        }
        c
    }
}

impl fmt::Display for EvalCtx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.plug(Expr::Var(HOLE.into())))
    }
}

/// Result of decomposing a term.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decomp {
    AlreadyValue,
    StuckBot,
    Redex(EvalCtx, Expr),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SemanticsError {
    #[error("malformed term: {0}")]
    MalformedTerm(String),
    #[error("solver could not decide: {0}")]
    SolverUnknown(String),
}

/// Unique decomposition `e = E[r]` with `r` a redex, left to right.
pub fn decompose(e: &Expr) -> Result<Decomp, SemanticsError> {
    if e.is_value() {
        return Ok(Decomp::AlreadyValue);
    }
    let mut frames = vec![];
    let mut cur = e;
    loop {
        let next: Option<(Frame, &Expr)> = match cur {
            Expr::Bot => return Ok(Decomp::StuckBot),
            Expr::Var(x) => {
                return Err(SemanticsError::MalformedTerm(format!(
                    "free variable `{x}`"
                )))
            }
            Expr::Tuple(es) => {
                let i = es
                    .iter()
                    .position(|a| !a.is_value())
                    .expect("non-value tuple");
                Some((
                    Frame::Tuple {
                        done: es[..i].to_vec(),
                        rest: es[i + 1..].to_vec(),
                    },
                    &es[i],
                ))
            }
            Expr::Op(op, es) => match es.iter().position(|a| !a.is_value()) {
                Some(i) => Some((
                    Frame::Op {
                        op: *op,
                        done: es[..i].to_vec(),
                        rest: es[i + 1..].to_vec(),
                    },
                    &es[i],
                )),
                None => None,
            },
            Expr::App(f, a) => {
                if !f.is_value() {
                    Some((Frame::AppFn { arg: (**a).clone() }, f))
                } else if !a.is_value() {
                    Some((Frame::AppArg { fun: (**f).clone() }, a))
                } else {
                    None
                }
            }
            Expr::If(g, t, el) => {
                if g.is_value() {
                    None
                } else {
                    Some((
                        Frame::If {
                            then: (**t).clone(),
                            els: (**el).clone(),
                        },
                        g,
                    ))
                }
            }
            Expr::NewRef(_, init, _) => {
                if init.is_value() {
                    None
                } else {
                    return Err(SemanticsError::MalformedTerm(
                        "ref initializer is not a value".into(),
                    ));
                }
            }
            Expr::Deref(_) => None,
            Expr::Assign(l, a) => {
                if a.is_value() {
                    None
                } else {
                    Some((Frame::Assign { loc: l.clone() }, a))
                }
            }
            Expr::LetTuple(xs, a, b) => {
                if a.is_value() {
                    None
                } else {
                    Some((
                        Frame::LetTuple {
                            binders: xs.clone(),
                            body: (**b).clone(),
                        },
                        a,
                    ))
                }
            }
            Expr::Const(_) | Expr::Lambda(_) | Expr::Abs(..) | Expr::Sym(..) => {
                unreachable!("values are handled before descent")
            }
        };
        match next {
            Some((f, sub)) => {
                frames.push(f);
                cur = sub;
            }
            None => return Ok(Decomp::Redex(EvalCtx { frames }, cur.clone())),
        }
    }
}

/// Contract a redex that needs no solver. `None` for calls to abstract names
/// and for redexes with symbolic parts.
fn contract_concrete(
    s: &Store,
    r: &Expr,
    fresh: &Fresh,
) -> Result<Option<(Store, Expr)>, SemanticsError> {
    let out = match r {
        Expr::Op(op, args) => {
            let mut consts = vec![];
            for a in args {
                match a {
                    Expr::Const(c) => consts.push(c.clone()),
                    Expr::Sym(..) => return Ok(None),
                    other => {
                        return Err(SemanticsError::MalformedTerm(format!(
                            "operator applied to {other}"
                        )))
                    }
                }
            }
            // division by zero behaves as divergence
            let v = op.eval(&consts).map(Expr::Const).unwrap_or(Expr::Bot);
            (s.clone(), v)
        }
        Expr::App(f, v) => match f.as_ref() {
            Expr::Lambda(l) => {
                let mut body = subst(&l.body, &l.param, v);
                if let Some(name) = &l.rec_name {
                    body = subst(&body, name, f);
                }
                (s.clone(), body)
            }
            Expr::Abs(..) => return Ok(None),
            other => {
                return Err(SemanticsError::MalformedTerm(format!(
                    "applying non-function {other}"
                )))
            }
        },
        Expr::If(g, t, e) => match g.as_ref() {
            Expr::Const(Const::Bool(true)) => (s.clone(), (**t).clone()),
            Expr::Const(Const::Bool(false)) => (s.clone(), (**e).clone()),
            Expr::Sym(..) => return Ok(None),
            other => {
                return Err(SemanticsError::MalformedTerm(format!(
                    "non-boolean guard {other}"
                )))
            }
        },
        Expr::NewRef(l, v, body) => {
            let a = fresh.loc();
            let mut s2 = s.clone();
            s2.insert(a.clone(), (**v).clone());
            (s2, subst_loc(body, l, &a))
        }
        Expr::Deref(l) => match s.get(l) {
            Some(v) => (s.clone(), v.clone()),
            None => {
                return Err(SemanticsError::MalformedTerm(format!(
                    "dangling location {l}"
                )))
            }
        },
        Expr::Assign(l, v) => {
            if !s.contains_key(l) {
                return Err(SemanticsError::MalformedTerm(format!(
                    "dangling location {l}"
                )));
            }
            let mut s2 = s.clone();
            s2.insert(l.clone(), (**v).clone());
            (s2, Expr::unit())
        }
        Expr::LetTuple(xs, v, body) => match v.as_ref() {
            Expr::Tuple(vs) if vs.len() == xs.len() => {
                let mut b = (**body).clone();
                for (x, v) in xs.iter().zip(vs) {
                    b = subst(&b, x, v);
                }
                (s.clone(), b)
            }
            other => {
                return Err(SemanticsError::MalformedTerm(format!(
                    "destructuring {other}"
                )))
            }
        },
        other => {
            return Err(SemanticsError::MalformedTerm(format!(
                "not a redex: {other}"
            )))
        }
    };
    Ok(Some(out))
}

/// One concrete reduction step. `None` when `e` is a value, is stuck on
/// `_bot_`, or is a call to an abstract name.
pub fn step_concrete(
    s: &Store,
    e: &Expr,
    fresh: &Fresh,
) -> Result<Option<(Store, Expr)>, SemanticsError> {
    match decompose(e)? {
        Decomp::AlreadyValue | Decomp::StuckBot => Ok(None),
        Decomp::Redex(ctx, r) => {
            Ok(contract_concrete(s, &r, fresh)?.map(|(s2, r2)| (s2, ctx.plug(r2))))
        }
    }
}

fn op_result_type(op: Op) -> Type {
    match op {
        Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Mod | Op::Neg => Type::Int,
        _ => Type::Bool,
    }
}

/// One symbolic successor, or a branch the solver could not decide.
#[derive(Clone, Debug)]
pub enum SymStep {
    Next(SymbolicEnv, Store, Expr),
    Unknown(SymbolicEnv, String),
}

fn branch(solver: &mut Solver, sigma: SymbolicEnv, s: &Store, e: Expr, out: &mut Vec<SymStep>) {
    match solver.sat(&sigma) {
        SatResult::Sat(_) => out.push(SymStep::Next(sigma, s.clone(), e)),
        SatResult::Unsat => {}
        SatResult::Unknown(r) => out.push(SymStep::Unknown(sigma, r)),
    }
}

fn contract_symbolic(
    sigma: &SymbolicEnv,
    s: &Store,
    ctx: &EvalCtx,
    r: &Expr,
    solver: &mut Solver,
    fresh: &Fresh,
) -> Result<Vec<SymStep>, SemanticsError> {
    if let Some((s2, r2)) = contract_concrete(s, r, fresh)? {
        return Ok(vec![SymStep::Next(sigma.clone(), s2, ctx.plug(r2))]);
    }
    let mut out = vec![];
    match r {
        Expr::Op(op, args) => {
            let terms: Vec<SymExpr> = args
                .iter()
                .map(|a| SymExpr::from_value(a).expect("base value"))
                .collect();
            let fresh_result = |sig: SymbolicEnv, out: &mut Vec<SymStep>| {
                let k = fresh.sym();
                let ty = op_result_type(*op);
                let mut sig = sig;
                sig.declare(k, ty.clone());
                sig.push(Atom::eq(SymExpr::Sym(k), SymExpr::Op(*op, terms.clone())));
                out.push(SymStep::Next(sig, s.clone(), ctx.plug(Expr::Sym(k, ty))));
            };
            if matches!(op, Op::Div | Op::Mod) {
                match &args[1] {
                    Expr::Const(Const::Int(d)) if d == &num_bigint::BigInt::from(0) => {
                        out.push(SymStep::Next(sigma.clone(), s.clone(), ctx.plug(Expr::Bot)));
                    }
                    Expr::Const(_) => fresh_result(sigma.clone(), &mut out),
                    _ => {
                        let zero = SymExpr::Const(Const::int(0));
                        let is_zero = sigma.with(Atom::eq(terms[1].clone(), zero.clone()));
                        branch(solver, is_zero, s, ctx.plug(Expr::Bot), &mut out);
                        let nonzero = sigma.with(Atom::neq(terms[1].clone(), zero));
                        match solver.sat(&nonzero) {
                            SatResult::Sat(_) => fresh_result(nonzero, &mut out),
                            SatResult::Unsat => {}
                            SatResult::Unknown(why) => out.push(SymStep::Unknown(nonzero, why)),
                        }
                    }
                }
            } else {
                fresh_result(sigma.clone(), &mut out);
            }
        }
        Expr::If(g, t, e) => {
            let k = match g.as_ref() {
                Expr::Sym(k, _) => *k,
                other => return Err(SemanticsError::MalformedTerm(format!("guard {other}"))),
            };
            for (pol, arm) in [(true, t), (false, e)] {
                let sig = sigma.with(Atom::eq(SymExpr::Sym(k), SymExpr::Const(Const::Bool(pol))));
                branch(solver, sig, s, ctx.plug((**arm).clone()), &mut out);
            }
        }
        other => {
            return Err(SemanticsError::MalformedTerm(format!(
                "stuck redex {other}"
            )))
        }
    }
    Ok(out)
}

/// One symbolic step: all satisfiable successors.
pub fn step_symbolic(
    sigma: &SymbolicEnv,
    s: &Store,
    e: &Expr,
    solver: &mut Solver,
    fresh: &Fresh,
) -> Result<Vec<(SymbolicEnv, Store, Expr)>, SemanticsError> {
    match decompose(e)? {
        Decomp::AlreadyValue | Decomp::StuckBot => Ok(vec![]),
        Decomp::Redex(ctx, r) => {
            if let Expr::App(f, _) = &r {
                if matches!(f.as_ref(), Expr::Abs(..)) {
                    return Ok(vec![]);
                }
            }
            let mut out = vec![];
            for st in contract_symbolic(sigma, s, &ctx, &r, solver, fresh)? {
                match st {
                    SymStep::Next(a, b, c) => out.push((a, b, c)),
                    SymStep::Unknown(_, why) => return Err(SemanticsError::SolverUnknown(why)),
                }
            }
            Ok(out)
        }
    }
}

/// How a proponent computation stops.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Value(Expr),
    StuckBot,
    /// `E[α v]`: a call to an environment function.
    Call {
        ctx: EvalCtx,
        abs: AbsName,
        abs_ty: Type,
        arg: Expr,
    },
    FuelExhausted,
    Unknown(String),
}

/// One branch of [`reduce_to_interaction`].
#[derive(Clone, Debug)]
pub struct Interaction {
    pub sigma: SymbolicEnv,
    pub store: Store,
    pub outcome: Outcome,
}

/// Default τ-step budget per interaction segment, shared by all its
/// symbolic branches.
pub const DEFAULT_FUEL: u64 = 10_000;

/// Run internal steps until every branch reaches a value, `_bot_`, a call to
/// an abstract name, or runs out of fuel.
pub fn reduce_to_interaction(
    sigma: &SymbolicEnv,
    s: &Store,
    e: &Expr,
    fuel: u64,
    solver: &mut Solver,
    fresh: &Fresh,
) -> Vec<Interaction> {
    let mut out = vec![];
    let mut work = vec![(sigma.clone(), s.clone(), e.clone())];
    let mut left = fuel;
    while let Some((sig, st, cur)) = work.pop() {
        let d = match decompose(&cur) {
            Ok(d) => d,
            Err(err) => {
                out.push(Interaction {
                    sigma: sig,
                    store: st,
                    outcome: Outcome::Unknown(err.to_string()),
                });
                continue;
            }
        };
        match d {
            Decomp::AlreadyValue => out.push(Interaction {
                sigma: sig,
                store: st,
                outcome: Outcome::Value(cur),
            }),
            Decomp::StuckBot => out.push(Interaction {
                sigma: sig,
                store: st,
                outcome: Outcome::StuckBot,
            }),
            Decomp::Redex(ctx, r) => {
                if let Expr::App(f, a) = &r {
                    if let Expr::Abs(alpha, ty) = f.as_ref() {
                        let outcome = Outcome::Call {
                            ctx,
                            abs: *alpha,
                            abs_ty: ty.clone(),
                            arg: (**a).clone(),
                        };
                        out.push(Interaction {
                            sigma: sig,
                            store: st,
                            outcome,
                        });
                        continue;
                    }
                }
                if left == 0 {
                    out.push(Interaction {
                        sigma: sig,
                        store: st,
                        outcome: Outcome::FuelExhausted,
                    });
                    continue;
                }
                left -= 1;
                match contract_symbolic(&sig, &st, &ctx, &r, solver, fresh) {
                    Ok(steps) => {
                        // reversed so that the first branch is explored first
                        for stp in steps.into_iter().rev() {
                            match stp {
                                SymStep::Next(a, b, c) => work.push((a, b, c)),
                                SymStep::Unknown(a, why) => out.push(Interaction {
                                    sigma: a,
                                    store: st.clone(),
                                    outcome: Outcome::Unknown(why),
                                }),
                            }
                        }
                    }
                    Err(err) => out.push(Interaction {
                        sigma: sig,
                        store: st,
                        outcome: Outcome::Unknown(err.to_string()),
                    }),
                }
            }
        }
    }
    out
}

/// Symbolic constants occurring in a store, in key order.
pub fn store_syms(s: &Store) -> Vec<SymId> {
    let mut out = vec![];
    for v in s.values() {
        crate::lang::sym_consts(v, &mut out);
    }
    out
}
