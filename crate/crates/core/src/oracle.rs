//! Self-check of the symbolic semantics: random closed first-order programs
//! over two inputs are run symbolically once and concretely for every input
//! in a small range, and the two must agree branch for branch.
//!
//! The generator takes its randomness from a caller-supplied `choose`
//! function so that any RNG (or a property-testing strategy) can drive it.

use crate::constraints::{Assignment, Atom, SatResult, Solver, SymExpr, SymbolicEnv};
use crate::fresh::Fresh;
use crate::lang::{Const, Expr, Lambda, Loc, Op, SymId, Type};
use crate::semantics::{reduce_to_interaction, Outcome, Store, DEFAULT_FUEL};

/// The integer input.
pub const INT_INPUT: SymId = SymId(0);
/// The boolean input.
pub const BOOL_INPUT: SymId = SymId(1);

/// Source of random choices: `choose(n)` returns a number below `n`.
pub type Choose<'a> = &'a mut dyn FnMut(u32) -> u32;

struct Gen<'a, 'b> {
    choose: Choose<'a>,
    ints: Vec<String>,
    refs: Vec<Loc>,
    fresh: &'b mut u32,
}

impl Gen<'_, '_> {
    fn pick(&mut self, n: usize) -> usize {
        (self.choose)(n as u32) as usize % n
    }

    fn name(&mut self, prefix: &str) -> String {
        *self.fresh += 1;
        format!("{prefix}{}", self.fresh)
    }

    fn leaf_int(&mut self) -> Expr {
        let mut options = 3;
        options += usize::from(!self.ints.is_empty()) + usize::from(!self.refs.is_empty());
        match self.pick(options) {
            0 => Expr::int(self.pick(5) as i64 - 2),
            1 | 2 => Expr::Sym(INT_INPUT, Type::Int),
            3 if !self.ints.is_empty() => {
                let i = self.pick(self.ints.len());
                Expr::var(&self.ints[i].clone())
            }
            _ => {
                if self.refs.is_empty() {
                    Expr::int(1)
                } else {
                    let i = self.pick(self.refs.len());
                    Expr::Deref(self.refs[i].clone())
                }
            }
        }
    }

    fn int(&mut self, depth: u32) -> Expr {
        if depth == 0 {
            return self.leaf_int();
        }
        match self.pick(12) {
            0 | 1 => self.leaf_int(),
            2 => {
                let op = [Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Mod][self.pick(5)];
                Expr::op(op, vec![self.int(depth - 1), self.int(depth - 1)])
            }
            3 => Expr::op(
                [Op::Add, Op::Sub][self.pick(2)],
                vec![self.int(depth - 1), self.int(depth - 1)],
            ),
            4 => Expr::op(Op::Neg, vec![self.int(depth - 1)]),
            5 | 6 => Expr::cond(
                self.boolean(depth - 1),
                self.int(depth - 1),
                self.int(depth - 1),
            ),
            7 => {
                let rhs = self.int(depth - 1);
                let x = self.name("x");
                self.ints.push(x.clone());
                let body = self.int(depth - 1);
                self.ints.pop();
                Expr::app(Expr::lambda(&x, Type::Int, Type::Int, body), rhs)
            }
            8 => {
                let init = self.int(depth - 1);
                let l = Loc::Named(self.name("r"));
                self.refs.push(l.clone());
                let body = self.int(depth - 1);
                self.refs.pop();
                if init.is_value() {
                    Expr::NewRef(l, Box::new(init), Box::new(body))
                } else {
                    // initializers must be values, as after parsing
                    let v = self.name("v");
                    let inner = Expr::NewRef(l, Box::new(Expr::var(&v)), Box::new(body));
                    Expr::app(Expr::lambda(&v, Type::Int, Type::Int, inner), init)
                }
            }
            9 if !self.refs.is_empty() => {
                let i = self.pick(self.refs.len());
                let l = self.refs[i].clone();
                let assign = Expr::Assign(l, Box::new(self.int(depth - 1)));
                let rest = self.int(depth - 1);
                Expr::app(Expr::lambda("_", Type::Unit, Type::Int, rest), assign)
            }
            10 if self.pick(4) == 0 => Expr::Bot,
            _ => self.leaf_int(),
        }
    }

    fn boolean(&mut self, depth: u32) -> Expr {
        if depth == 0 {
            return match self.pick(3) {
                0 => Expr::boolean(self.pick(2) == 0),
                _ => Expr::Sym(BOOL_INPUT, Type::Bool),
            };
        }
        match self.pick(7) {
            0 => Expr::Sym(BOOL_INPUT, Type::Bool),
            1 | 2 => {
                let op = [Op::Eq, Op::Neq, Op::Lt, Op::Le, Op::Gt, Op::Ge][self.pick(6)];
                Expr::op(op, vec![self.int(depth - 1), self.int(depth - 1)])
            }
            3 => Expr::op(
                [Op::And, Op::Or][self.pick(2)],
                vec![self.boolean(depth - 1), self.boolean(depth - 1)],
            ),
            4 => Expr::op(Op::Not, vec![self.boolean(depth - 1)]),
            5 => Expr::cond(
                self.boolean(depth - 1),
                self.boolean(depth - 1),
                self.boolean(depth - 1),
            ),
            _ => Expr::op(
                Op::Eq,
                vec![self.boolean(depth - 1), self.boolean(depth - 1)],
            ),
        }
    }
}

/// A random closed program of type int or bool with at most `max_size`
/// nodes, reading [`INT_INPUT`] and [`BOOL_INPUT`].
pub fn random_program(choose: Choose<'_>, max_size: usize) -> Expr {
    let mut counter = 0;
    // retries shrink the depth so that a stubborn choice source still ends
    for attempt in 0.. {
        let depth = 4u32.saturating_sub(attempt / 8).max(1);
        let mut g = Gen {
            choose: &mut *choose,
            ints: vec![],
            refs: vec![],
            fresh: &mut counter,
        };
        let e = if g.pick(3) == 0 {
            g.boolean(depth)
        } else {
            g.int(depth)
        };
        if e.size() <= max_size || depth == 1 {
            return e;
        }
    }
    unreachable!()
}

/// Replace symbolic constants by their values.
pub fn instantiate(e: &Expr, m: &Assignment) -> Expr {
    let go = |a: &Expr| instantiate(a, m);
    let bx = |a: &Expr| Box::new(instantiate(a, m));
    match e {
        Expr::Sym(k, _) => m
            .get(k)
            .map(|c| Expr::Const(c.clone()))
            .unwrap_or_else(|| e.clone()),
        Expr::Const(_) | Expr::Var(_) | Expr::Deref(_) | Expr::Abs(..) | Expr::Bot => e.clone(),
        Expr::Lambda(l) => Expr::Lambda(Box::new(Lambda {
            body: go(&l.body),
            ..(**l).clone()
        })),
        Expr::Tuple(es) => Expr::Tuple(es.iter().map(go).collect()),
        Expr::Op(op, es) => Expr::Op(*op, es.iter().map(go).collect()),
        Expr::App(a, b) => Expr::App(bx(a), bx(b)),
        Expr::If(a, b, c) => Expr::If(bx(a), bx(b), bx(c)),
        Expr::NewRef(l, a, b) => Expr::NewRef(l.clone(), bx(a), bx(b)),
        Expr::Assign(l, a) => Expr::Assign(l.clone(), bx(a)),
        Expr::LetTuple(xs, a, b) => Expr::LetTuple(xs.clone(), bx(a), bx(b)),
    }
}

fn inputs() -> SymbolicEnv {
    let mut s = SymbolicEnv::new();
    s.declare(INT_INPUT, Type::Int);
    s.declare(BOOL_INPUT, Type::Bool);
    s
}

/// Run `e` symbolically and concretely for every integer input in `range`
/// and both booleans. Each concrete run must fall in exactly one symbolic
/// branch, with the same outcome. Returns the number of runs compared.
pub fn compare_with_concrete(
    e: &Expr,
    range: std::ops::RangeInclusive<i64>,
    solver: &mut Solver,
) -> Result<usize, String> {
    let fresh = Fresh::new();
    fresh.reserve_sym(BOOL_INPUT);
    let branches = reduce_to_interaction(&inputs(), &Store::new(), e, DEFAULT_FUEL, solver, &fresh);
    let mut runs = 0;
    for i in range {
        for b in [false, true] {
            let mut m = Assignment::new();
            m.insert(INT_INPUT, Const::int(i));
            m.insert(BOOL_INPUT, Const::Bool(b));
            let concrete = {
                let mut none = Solver::new("");
                let rs = reduce_to_interaction(
                    &SymbolicEnv::new(),
                    &Store::new(),
                    &instantiate(e, &m),
                    DEFAULT_FUEL,
                    &mut none,
                    &Fresh::new(),
                );
                match rs.as_slice() {
                    [one]
                        if !matches!(one.outcome, Outcome::Unknown(_) | Outcome::FuelExhausted) =>
                    {
                        one.outcome.clone()
                    }
                    _ => {
                        return Err(format!(
                            "concrete run of {e} at {i}, {b} did not finish with a value or ⊥"
                        ))
                    }
                }
            };
            let mut hits = vec![];
            for br in &branches {
                let sigma = br
                    .sigma
                    .with(Atom::eq(
                        SymExpr::Sym(INT_INPUT),
                        SymExpr::Const(Const::int(i)),
                    ))
                    .with(Atom::eq(
                        SymExpr::Sym(BOOL_INPUT),
                        SymExpr::Const(Const::Bool(b)),
                    ));
                match solver.sat(&sigma) {
                    SatResult::Sat(Some(model)) => hits.push((br, model)),
                    SatResult::Sat(None) | SatResult::Unknown(_) => {
                        return Err(format!("solver undecided on {sigma}"))
                    }
                    SatResult::Unsat => {}
                }
            }
            let [(br, model)] = hits.as_slice() else {
                return Err(format!(
                    "{e} at {i}, {b}: {} symbolic branches apply",
                    hits.len()
                ));
            };
            let symbolic = match &br.outcome {
                Outcome::Value(v) => Outcome::Value(instantiate(v, model)),
                other => other.clone(),
            };
            if symbolic != concrete {
                return Err(format!(
                    "{e} at {i}, {b}: symbolic {symbolic:?} but concrete {concrete:?}"
                ));
            }
            runs += 1;
        }
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_respects_size() {
        let mut state = 7u32;
        let mut choose = |n: u32| {
            state = state.wrapping_mul(1103515245).wrapping_add(12345);
            (state >> 8) % n
        };
        for _ in 0..50 {
            assert!(random_program(&mut choose, 30).size() <= 30);
        }
    }

    #[test]
    fn division_by_input_splits() {
        let e = Expr::op(Op::Div, vec![Expr::int(6), Expr::Sym(INT_INPUT, Type::Int)]);
        let mut solver = Solver::new(crate::constraints::DEFAULT_SOLVER);
        assert_eq!(compare_with_concrete(&e, -2..=2, &mut solver), Ok(10));
    }
}
