//! Property tests for the building blocks: patterns, decomposition, the
//! up-to rewrites, σ normalisation and the symbolic evaluator.

use ctxeq_core::constraints::{
    normalize_with_map, Atom, SatResult, Solver, SymExpr, SymbolicEnv, DEFAULT_SOLVER,
};
use ctxeq_core::lang::{subst_loc, Const, Expr, Lambda, Loc, Op, SymId, Type};
use ctxeq_core::lts::{plug_skel, ulpatt_value, LiveConfig};
use ctxeq_core::oracle::{compare_with_concrete, random_program};
use ctxeq_core::semantics::{decompose, Decomp};
use ctxeq_core::upto::{canonical_key, gc, reach, separate, PairNode, Side};
use proptest::prelude::*;
use std::collections::{BTreeMap, BTreeSet};

fn lam(body: Expr) -> Expr {
    Expr::lambda("x", Type::Int, Type::Int, body)
}

fn value() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-3i64..3).prop_map(Expr::int),
        any::<bool>().prop_map(Expr::boolean),
        Just(Expr::unit()),
        (0u32..4).prop_map(|k| Expr::Sym(SymId(k), Type::Int)),
        (4u32..6).prop_map(|k| Expr::Sym(SymId(k), Type::Bool)),
        (-3i64..3).prop_map(|i| lam(Expr::op(Op::Add, vec![Expr::var("x"), Expr::int(i)]))),
    ];
    leaf.prop_recursive(3, 16, 3, |inner| {
        prop::collection::vec(inner, 2..4).prop_map(Expr::Tuple)
    })
}

fn sym_types(e: &Expr, out: &mut BTreeMap<SymId, Type>) {
    if let Expr::Sym(k, t) = e {
        out.insert(*k, t.clone());
    }
    for c in e.children() {
        sym_types(c, out);
    }
}

/// A program from a fixed list of random numbers, cycling through it.
fn program_from(seed: &[u32]) -> Expr {
    let mut at = 0;
    let mut choose = |n: u32| {
        let r = seed[at % seed.len()] % n;
        at += 1;
        r
    };
    random_program(&mut choose, 30)
}

fn rename_syms(e: &Expr, m: &dyn Fn(SymId) -> SymId) -> Expr {
    match e {
        Expr::Sym(k, t) => Expr::Sym(m(*k), t.clone()),
        Expr::Lambda(l) => Expr::Lambda(Box::new(Lambda {
            body: rename_syms(&l.body, m),
            ..(**l).clone()
        })),
        Expr::Op(op, es) => Expr::Op(*op, es.iter().map(|a| rename_syms(a, m)).collect()),
        Expr::Tuple(es) => Expr::Tuple(es.iter().map(|a| rename_syms(a, m)).collect()),
        Expr::Assign(l, a) => Expr::Assign(l.clone(), Box::new(rename_syms(a, m))),
        Expr::App(a, b) => Expr::App(Box::new(rename_syms(a, m)), Box::new(rename_syms(b, m))),
        _ => e.clone(),
    }
}

/// An opponent configuration: up to four Γ functions reading or writing
/// locations among four addresses, whose contents may be symbolic.
fn opponent_config() -> impl Strategy<Value = LiveConfig> {
    let body = prop_oneof![
        (-2i64..2).prop_map(Expr::int),
        (0u32..4).prop_map(|a| Expr::Deref(Loc::Addr(a))),
        (0u32..4, 0u32..4).prop_map(|(a, b)| Expr::op(
            Op::Add,
            vec![Expr::Deref(Loc::Addr(a)), Expr::Deref(Loc::Addr(b))]
        )),
        (0u32..4).prop_map(|a| Expr::Assign(Loc::Addr(a), Box::new(Expr::var("x")))),
    ];
    let content = prop_oneof![
        (-2i64..2).prop_map(Expr::int),
        (0u32..3).prop_map(|k| Expr::Sym(SymId(k), Type::Int)),
        // a location holding a function that reads another one
        (0u32..4).prop_map(|a| lam(Expr::Deref(Loc::Addr(a)))),
    ];
    (
        prop::collection::vec(body, 0..5),
        prop::collection::btree_map(0u32..4, content, 0..5),
    )
        .prop_map(|(fs, st)| {
            let mut c = LiveConfig::initial(Expr::unit());
            c.expr = None;
            for (i, b) in fs.into_iter().enumerate() {
                c.gamma.insert(i as u32, lam(b));
            }
            c.next_index = c.gamma.len() as u32;
            c.store = st.into_iter().map(|(a, v)| (Loc::Addr(a), v)).collect();
            c
        })
}

fn sigma() -> impl Strategy<Value = SymbolicEnv> {
    let term = prop_oneof![
        (-2i64..3).prop_map(|i| SymExpr::Const(Const::int(i))),
        (0u32..4).prop_map(|k| SymExpr::Sym(SymId(k))),
    ];
    let expr = (term.clone(), term.clone(), 0..4usize).prop_map(|(a, b, o)| match o {
        0 => a,
        1 => SymExpr::Op(Op::Add, vec![a, b]),
        2 => SymExpr::Op(Op::Sub, vec![a, b]),
        _ => SymExpr::Op(Op::Mul, vec![a, SymExpr::Const(Const::int(2))]),
    });
    let atom = (expr.clone(), expr, 0..3usize).prop_map(|(a, b, r)| match r {
        0 => Atom::eq(a, b),
        1 => Atom::neq(a, b),
        _ => Atom::holds(SymExpr::Op(Op::Lt, vec![a, b])),
    });
    prop::collection::vec(atom, 0..5).prop_map(|atoms| {
        let mut s = SymbolicEnv::new();
        for k in 0..4 {
            s.declare(SymId(k), Type::Int);
        }
        for a in atoms {
            s.push(a);
        }
        s
    })
}

fn node(l: LiveConfig, r: LiveConfig, sigma: SymbolicEnv) -> PairNode {
    PairNode {
        sigma,
        sides: [Side::Live(l), Side::Live(r)],
        calls: vec![],
    }
}

fn rename_locs(c: &LiveConfig, perm: &[u32]) -> LiveConfig {
    // two-phase renaming through Named locations to avoid capture
    let mut out = c.clone();
    let apply = |e: &Expr, from: &dyn Fn(u32) -> Loc, to: &dyn Fn(u32) -> Loc| {
        (0..4u32).fold(e.clone(), |acc, a| subst_loc(&acc, &from(a), &to(a)))
    };
    let tmp = |a: u32| Loc::Named(format!("t{a}"));
    let addr = |a: u32| Loc::Addr(a);
    let fin = |a: u32| Loc::Addr(perm[a as usize]);
    let full = |e: &Expr| apply(&apply(e, &addr, &tmp), &tmp, &fin);
    out.gamma = c.gamma.iter().map(|(i, e)| (*i, full(e))).collect();
    out.store = c
        .store
        .iter()
        .map(|(l, v)| {
            let Loc::Addr(a) = l else { unreachable!() };
            (Loc::Addr(perm[*a as usize]), full(v))
        })
        .collect();
    out
}

fn locations_of(c: &LiveConfig) -> BTreeSet<Loc> {
    c.gamma
        .values()
        .flat_map(ctxeq_core::lang::free_locations)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn pattern_reconstruction(v in value(), start in 0u32..5) {
        let mut next = start;
        let (skel, binds) = ulpatt_value(&v, &mut next);
        let holes = skel.holes();
        prop_assert_eq!(holes.clone(), (start..next).collect::<Vec<_>>());
        let mut types = BTreeMap::new();
        sym_types(&v, &mut types);
        let binds: BTreeMap<u32, Expr> = binds.into_iter().collect();
        prop_assert_eq!(plug_skel(&skel, &binds, &types), v);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn decomposition_is_unique_split(seed in prop::collection::vec(any::<u32>(), 64)) {
        let e = program_from(&seed);
        match decompose(&e).unwrap() {
            Decomp::AlreadyValue => prop_assert!(e.is_value()),
            Decomp::StuckBot => prop_assert!(!e.is_value()),
            Decomp::Redex(ctx, r) => {
                prop_assert!(!r.is_value());
                prop_assert_eq!(ctx.plug(r), e);
            }
        }
    }

    #[test]
    fn key_ignores_names(
        l in opponent_config(),
        r in opponent_config(),
        s in sigma(),
        idx in Just((0u32..4).collect::<Vec<_>>()).prop_shuffle(),
        lp in Just((0u32..4).collect::<Vec<_>>()).prop_shuffle(),
        rp in Just((0u32..4).collect::<Vec<_>>()).prop_shuffle(),
        kp in Just((0u32..4).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        // both sides share the index set
        let n = l.gamma.len().min(r.gamma.len()) as u32;
        let trim = |mut c: LiveConfig| {
            c.gamma.retain(|i, _| *i < n);
            c.next_index = n;
            c
        };
        let (l, r) = (trim(l), trim(r));
        let before = canonical_key(&node(l.clone(), r.clone(), s.clone()));

        let syms = |k: SymId| SymId(kp[k.0 as usize]);
        let reindex = |c: &LiveConfig, perm: &[u32]| {
            let mut c = rename_locs(c, perm);
            // renumber indices among 10.. so the key sees different numbers
            c.gamma = c.gamma.iter().map(|(i, e)| (10 + idx[*i as usize], rename_syms(e, &syms))).collect();
            c.store = c.store.iter().map(|(k, v)| (k.clone(), rename_syms(v, &syms))).collect();
            c.next_index = 14;
            c
        };
        let mut s2 = SymbolicEnv::new();
        for k in 0..4 {
            s2.declare(SymId(k), Type::Int);
        }
        for a in &s.atoms {
            s2.push(a.rename(&syms));
        }
        let after = canonical_key(&node(reindex(&l, &lp), reindex(&r, &rp), s2));
        prop_assert_eq!(before, after);
    }

    #[test]
    fn gc_is_idempotent_and_keeps_reachable(c in opponent_config()) {
        let g = gc(&c);
        prop_assert_eq!(gc(&g), g.clone());
        let live = reach(&c.store, locations_of(&c));
        for l in &live {
            prop_assert_eq!(g.store.get(l), c.store.get(l));
        }
        prop_assert!(g.store.keys().all(|l| live.contains(l)));
        prop_assert_eq!(&g.gamma, &c.gamma);
    }

    #[test]
    fn separation_partitions(l in opponent_config(), r in opponent_config()) {
        let n = l.gamma.len().min(r.gamma.len()) as u32;
        let trim = |mut c: LiveConfig| {
            c.gamma.retain(|i, _| *i < n);
            c.next_index = n;
            gc(&c)
        };
        let node = node(trim(l), trim(r), SymbolicEnv::new());
        let blocks = separate(&node);
        let mut seen = BTreeSet::new();
        for b in &blocks {
            for i in b.node.indices() {
                prop_assert!(seen.insert(i), "index {} in two blocks", i);
            }
        }
        prop_assert_eq!(seen.into_iter().collect::<Vec<_>>(), node.indices());
        for side in 0..2 {
            let mut locs = BTreeSet::new();
            for b in &blocks {
                let c = b.node.sides[side].live().unwrap();
                for (l, v) in &c.store {
                    prop_assert!(locs.insert(l.clone()), "location {} in two blocks", l);
                    prop_assert_eq!(Some(v), node.sides[side].live().unwrap().store.get(l));
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    /// For satisfiable σ, normalisation keeps exactly the solutions on the
    /// live constants (checked on a grid of values).
    #[test]
    fn normalize_preserves_live_solutions(s in sigma(), nlive in 0usize..3) {
        let mut solver = Solver::new(DEFAULT_SOLVER);
        if !matches!(solver.sat(&s), SatResult::Sat(_)) {
            return Ok(());
        }
        let live: Vec<SymId> = (0..nlive as u32).map(SymId).collect();
        let (norm, map) = normalize_with_map(&s, &live);
        let grid: Vec<Vec<i64>> = match nlive {
            0 => vec![vec![]],
            1 => (-2..=2).map(|a| vec![a]).collect(),
            _ => (-1..=1).flat_map(|a| (-1..=1).map(move |b| vec![a, b])).collect(),
        };
        for point in grid {
            let pin = |env: &SymbolicEnv, rename: &dyn Fn(SymId) -> SymId| {
                let mut e = env.clone();
                for (k, v) in live.iter().zip(&point) {
                    let k = rename(*k);
                    e.declare(k, Type::Int);
                    e.push(Atom::eq(SymExpr::Sym(k), SymExpr::Const(Const::int(*v))));
                }
                e
            };
            let a = solver.sat(&pin(&s, &|k| k));
            let b = solver.sat(&pin(&norm, &|k| map[&k]));
            if matches!(a, SatResult::Unknown(_)) || matches!(b, SatResult::Unknown(_)) {
                continue;
            }
            prop_assert_eq!(a.is_sat(), b.is_sat(), "at {:?}: {} vs {}", point, s, norm);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn symbolic_runs_match_concrete(seed in prop::collection::vec(any::<u32>(), 64)) {
        let e = program_from(&seed);
        let mut solver = Solver::new(DEFAULT_SOLVER);
        let runs = compare_with_concrete(&e, -2..=2, &mut solver);
        prop_assert_eq!(runs, Ok(10));
    }
}
