//! Acceptance run over the bundled corpus and generated programs. Prints one
//! PASS/FAIL line per criterion and exits non-zero if any fails.

use ctxeq_cli::{bench, check_file, report_json, untimed_json, validate_report_json, BenchReport};
use ctxeq_core::constraints::{
    normalize_with_map, Atom, SatResult, Solver, SymExpr, SymbolicEnv, DEFAULT_SOLVER,
};
use ctxeq_core::engine::{check_equiv, replay, Options, Verdict};
use ctxeq_core::lang::{free_locations, subst_loc, Const, Expr, Loc, Op, SymId, Type};
use ctxeq_core::lts::{plug_skel, ulpatt_value, LiveConfig};
use ctxeq_core::oracle::{compare_with_concrete, random_program};
use ctxeq_core::parser::{parse_header, parse_program_pair};
use ctxeq_core::semantics::{decompose, Decomp, DEFAULT_FUEL};
use ctxeq_core::upto::{canonical_key, gc, reach, separate, PairNode, Side};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

/// Wall-clock limit per corpus file in criteria 1 and 2.
const PER_FILE_SECONDS: f64 = 10.0;
const MIN_INEQUIVALENCES: usize = 10;
const MAX_WITNESS_BOUND: u32 = 12;
const LIMITATION_BOUNDS: [u32; 2] = [6, 20];
const ORACLE_PROGRAMS: usize = 500;
const ORACLE_MAX_NODES: usize = 30;
const ORACLE_RANGE: std::ops::RangeInclusive<i64> = -2..=2;
const PATTERN_CASES: usize = 10_000;
const STRUCTURE_CASES: usize = 1_000;
const NORMALIZE_CASES: usize = 1_000;
const SEED: u64 = 0x5eed_c0de;

const EQ_FILES: [&str; 9] = [
    "conjunction",
    "sep",
    "meyer-sieber",
    "bohr-birkedal",
    "reentry",
    "swap",
    "meyer-sieber-e6",
    "landin",
    "cell-4",
];
const REQUIRED_TWINS: [&str; 4] = [
    "const-thunk",
    "counter-leak",
    "arg-order",
    "well-bracketing-violator",
];

type Outcome = Result<String, String>;
type Suite = fn(&mut StdRng) -> Result<(), String>;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn opts() -> Options {
    Options {
        timeout: Duration::from_secs(60),
        ..Options::default()
    }
}

fn stem(p: &Path) -> String {
    p.file_stem().unwrap().to_string_lossy().into_owned()
}

fn files(sub: &str) -> Vec<PathBuf> {
    ctxeq_cli::corpus_files(&root().join(sub)).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn criterion_1() -> Outcome {
    let mut proved = vec![];
    let mut slowest = 0.0f64;
    for name in EQ_FILES {
        let path = root().join("eq").join(format!("{name}.prog"));
        let r = check_file(&path, &opts(), None).map_err(|e| format!("{name}: {e}"))?;
        validate_report_json(&report_json(&r.report)).map_err(|e| format!("{name}: json {e}"))?;
        ensure(r.report.verdict == Verdict::Equivalent, || {
            format!("{name}: {}", r.report.verdict.name())
        })?;
        ensure(r.seconds < PER_FILE_SECONDS, || {
            format!("{name}: {:.1}s", r.seconds)
        })?;
        slowest = slowest.max(r.seconds);
        proved.push(name);
    }
    Ok(format!("{}/9 proved, slowest {slowest:.2}s", proved.len()))
}

fn criterion_2() -> Outcome {
    let mut found = vec![];
    for path in files("ineq") {
        let name = stem(&path);
        let r = check_file(&path, &opts(), None).map_err(|e| format!("{name}: {e}"))?;
        validate_report_json(&report_json(&r.report)).map_err(|e| format!("{name}: json {e}"))?;
        let Verdict::Inequivalent { trace, model } = &r.report.verdict else {
            return Err(format!("{name}: {}", r.report.verdict.name()));
        };
        let pair = parse_program_pair(&std::fs::read_to_string(&path).unwrap()).unwrap();
        ensure(replay(trace, model, &pair, DEFAULT_FUEL), || {
            format!("{name}: witness does not replay")
        })?;
        ensure(r.bound <= MAX_WITNESS_BOUND, || {
            format!("{name}: bound {}", r.bound)
        })?;
        ensure(r.seconds < PER_FILE_SECONDS, || {
            format!("{name}: {:.1}s", r.seconds)
        })?;
        found.push(name);
    }
    for twin in REQUIRED_TWINS {
        ensure(found.iter().any(|f| f == twin), || {
            format!("missing twin {twin}")
        })?;
    }
    ensure(found.len() >= MIN_INEQUIVALENCES, || {
        format!("only {} inequivalences", found.len())
    })?;
    Ok(format!(
        "{} inequivalences, all witnesses replayed",
        found.len()
    ))
}

fn criterion_3() -> Outcome {
    let path = root().join("limitations/well-bracketed.prog");
    let mut seen = vec![];
    for b in LIMITATION_BOUNDS {
        let r = check_file(&path, &opts(), Some(b)).map_err(|e| e.to_string())?;
        let Verdict::Inconclusive { reasons } = &r.report.verdict else {
            return Err(format!("bound {b}: {}", r.report.verdict.name()));
        };
        seen.push(format!(
            "bound {b}: {}",
            reasons
                .iter()
                .map(|r| r.to_string())
                .collect::<Vec<_>>()
                .join(",")
        ));
    }
    Ok(seen.join("; "))
}

fn verdict_of<'a>(r: &'a BenchReport, config: &str, file: &str) -> &'a str {
    let c = r.configs.iter().find(|c| c.name == config).expect("config");
    let f = c
        .files
        .iter()
        .find(|f| f.path.ends_with(&format!("/{file}.prog")))
        .expect("file");
    &f.verdict
}

fn criterion_4(first: &BenchReport) -> Outcome {
    for f in ["sep", "bohr-birkedal", "meyer-sieber"] {
        let v = verdict_of(first, "no-sep", f);
        ensure(v == "inconclusive", || format!("no-sep {f}: {v}"))?;
    }
    for f in ["meyer-sieber-e6", "cell-4"] {
        let v = verdict_of(first, "no-annot", f);
        ensure(v == "inconclusive", || format!("no-annot {f}: {v}"))?;
    }
    // a flip is any definite verdict that disagrees with another config
    let default = &first.configs[0];
    for file in &default.files {
        let mut definite = BTreeSet::new();
        for c in &first.configs {
            let f = c.files.iter().find(|g| g.path == file.path).unwrap();
            if f.verdict != "inconclusive" {
                definite.insert(f.verdict.clone());
            }
        }
        ensure(definite.len() <= 1, || {
            format!("{} flips: {definite:?}", file.path)
        })?;
    }
    ensure(first.false_verdicts == 0, || {
        format!("{} false verdicts", first.false_verdicts)
    })?;
    let counts: Vec<String> = first
        .configs
        .iter()
        .map(|c| format!("{} {}|{}", c.name, c.equivalences, c.inequivalences))
        .collect();
    Ok(counts.join(", "))
}

fn criterion_5() -> Outcome {
    let mut rng = StdRng::seed_from_u64(SEED);
    let mut solver = Solver::new(DEFAULT_SOLVER);
    let mut runs = 0;
    for n in 0..ORACLE_PROGRAMS {
        let e = random_program(&mut |k| rng.gen_range(0..k), ORACLE_MAX_NODES);
        ensure(e.size() <= ORACLE_MAX_NODES, || {
            format!("program {n} has {} nodes", e.size())
        })?;
        runs += compare_with_concrete(&e, ORACLE_RANGE, &mut solver)
            .map_err(|m| format!("program {n}: {m}"))?;
    }
    Ok(format!(
        "{ORACLE_PROGRAMS} programs, {runs} concrete runs, 0 mismatches"
    ))
}

// ---------------------------------------------------------------------------
// Structural suites

fn lam(body: Expr) -> Expr {
    Expr::lambda("x", Type::Int, Type::Int, body)
}

fn random_value(rng: &mut StdRng, depth: u32) -> Expr {
    match rng.gen_range(0..if depth == 0 { 6 } else { 8 }) {
        0 => Expr::int(rng.gen_range(-3..3)),
        1 => Expr::boolean(rng.gen()),
        2 => Expr::unit(),
        3 => Expr::Sym(SymId(rng.gen_range(0..4)), Type::Int),
        4 => Expr::Sym(SymId(rng.gen_range(4..6)), Type::Bool),
        5 => lam(Expr::op(
            Op::Add,
            vec![Expr::var("x"), Expr::int(rng.gen_range(-3..3))],
        )),
        _ => Expr::Tuple(
            (0..rng.gen_range(2..4))
                .map(|_| random_value(rng, depth - 1))
                .collect(),
        ),
    }
}

fn sym_types(e: &Expr, out: &mut BTreeMap<SymId, Type>) {
    if let Expr::Sym(k, t) = e {
        out.insert(*k, t.clone());
    }
    for c in e.children() {
        sym_types(c, out);
    }
}

fn random_config(rng: &mut StdRng, functions: usize) -> LiveConfig {
    let addr = |rng: &mut StdRng| Loc::Addr(rng.gen_range(0..4));
    let mut c = LiveConfig::initial(Expr::unit());
    c.expr = None;
    for i in 0..functions {
        let body = match rng.gen_range(0..4) {
            0 => Expr::int(rng.gen_range(-2..2)),
            1 => Expr::Deref(addr(rng)),
            2 => Expr::op(
                Op::Add,
                vec![Expr::Deref(addr(rng)), Expr::Deref(addr(rng))],
            ),
            _ => Expr::Assign(addr(rng), Box::new(Expr::var("x"))),
        };
        c.gamma.insert(i as u32, lam(body));
    }
    c.next_index = functions as u32;
    for a in 0..4 {
        if rng.gen_bool(0.6) {
            let v = match rng.gen_range(0..3) {
                0 => Expr::int(rng.gen_range(-2..2)),
                1 => Expr::Sym(SymId(rng.gen_range(0..3)), Type::Int),
                _ => lam(Expr::Deref(addr(rng))),
            };
            c.store.insert(Loc::Addr(a), v);
        }
    }
    c
}

fn random_sigma(rng: &mut StdRng) -> SymbolicEnv {
    fn term(rng: &mut StdRng) -> SymExpr {
        if rng.gen_bool(0.5) {
            SymExpr::Const(Const::int(rng.gen_range(-2..3)))
        } else {
            SymExpr::Sym(SymId(rng.gen_range(0..4)))
        }
    }
    fn expr(rng: &mut StdRng) -> SymExpr {
        let (a, b) = (term(rng), term(rng));
        match rng.gen_range(0..4) {
            0 => a,
            1 => SymExpr::Op(Op::Add, vec![a, b]),
            2 => SymExpr::Op(Op::Sub, vec![a, b]),
            _ => SymExpr::Op(Op::Mul, vec![a, SymExpr::Const(Const::int(2))]),
        }
    }
    let mut s = SymbolicEnv::new();
    for k in 0..4 {
        s.declare(SymId(k), Type::Int);
    }
    for _ in 0..rng.gen_range(0..5) {
        let (a, b) = (expr(rng), expr(rng));
        s.push(match rng.gen_range(0..3) {
            0 => Atom::eq(a, b),
            1 => Atom::neq(a, b),
            _ => Atom::holds(SymExpr::Op(Op::Lt, vec![a, b])),
        });
    }
    s
}

/// Rename addresses by `perm`, going through named locations to avoid
/// capture, and shift Γ indices by `idx`.
fn rename(c: &LiveConfig, perm: &[u32], idx: &[u32]) -> LiveConfig {
    let step = |e: &Expr, from: &dyn Fn(u32) -> Loc, to: &dyn Fn(u32) -> Loc| {
        (0..4u32).fold(e.clone(), |acc, a| subst_loc(&acc, &from(a), &to(a)))
    };
    let tmp = |a: u32| Loc::Named(format!("t{a}"));
    let full = |e: &Expr| {
        step(&step(e, &|a| Loc::Addr(a), &tmp), &tmp, &|a| {
            Loc::Addr(perm[a as usize])
        })
    };
    let mut out = c.clone();
    out.gamma = c
        .gamma
        .iter()
        .map(|(i, e)| (20 + idx[*i as usize], full(e)))
        .collect();
    out.next_index = 30;
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

fn pair(l: LiveConfig, r: LiveConfig, sigma: SymbolicEnv) -> PairNode {
    PairNode {
        sigma,
        sides: [Side::Live(l), Side::Live(r)],
        calls: vec![],
    }
}

fn suite_patterns(rng: &mut StdRng) -> Result<(), String> {
    for n in 0..PATTERN_CASES {
        let v = random_value(rng, 3);
        let start = rng.gen_range(0..5);
        let mut next = start;
        let (skel, binds) = ulpatt_value(&v, &mut next);
        ensure(skel.holes() == (start..next).collect::<Vec<_>>(), || {
            format!("case {n}: hole numbering")
        })?;
        let mut types = BTreeMap::new();
        sym_types(&v, &mut types);
        let binds: BTreeMap<u32, Expr> = binds.into_iter().collect();
        ensure(plug_skel(&skel, &binds, &types) == v, || {
            format!("case {n}: {v} not rebuilt")
        })?;
    }
    Ok(())
}

fn suite_decomposition(rng: &mut StdRng) -> Result<(), String> {
    for _ in 0..STRUCTURE_CASES {
        let e = random_program(&mut |k| rng.gen_range(0..k), ORACLE_MAX_NODES);
        match decompose(&e).map_err(|m| format!("{e}: {m}"))? {
            Decomp::AlreadyValue => ensure(e.is_value(), || format!("{e} is not a value"))?,
            Decomp::StuckBot => ensure(!e.is_value(), || format!("{e} is a value"))?,
            Decomp::Redex(ctx, r) => {
                ensure(ctx.plug(r) == e, || format!("{e} does not recompose"))?
            }
        }
    }
    Ok(())
}

fn suite_keys(rng: &mut StdRng) -> Result<(), String> {
    for _ in 0..STRUCTURE_CASES {
        let n = rng.gen_range(0..5);
        let (l, r, s) = (
            random_config(rng, n),
            random_config(rng, n),
            random_sigma(rng),
        );
        let mut idx: Vec<u32> = (0..n as u32).collect();
        idx.shuffle(rng);
        let mut lp: Vec<u32> = (0..4).collect();
        let mut rp = lp.clone();
        lp.shuffle(rng);
        rp.shuffle(rng);
        let before = canonical_key(&pair(l.clone(), r.clone(), s.clone()));
        let after = canonical_key(&pair(rename(&l, &lp, &idx), rename(&r, &rp, &idx), s));
        ensure(before == after, || {
            format!("key changed under renaming:\n{before}\n{after}")
        })?;
    }
    Ok(())
}

fn suite_gc(rng: &mut StdRng) -> Result<(), String> {
    for _ in 0..STRUCTURE_CASES {
        let n = rng.gen_range(0..5);
        let c = random_config(rng, n);
        let g = gc(&c);
        ensure(gc(&g) == g, || "gc is not idempotent".into())?;
        let roots: BTreeSet<Loc> = c.gamma.values().flat_map(free_locations).collect();
        let live = reach(&c.store, roots);
        ensure(
            live.iter().all(|l| g.store.get(l) == c.store.get(l)),
            || "gc dropped a reachable cell".into(),
        )?;
        ensure(g.store.keys().all(|l| live.contains(l)), || {
            "gc kept an unreachable cell".into()
        })?;
    }
    // collection is a proof technique, so a proof may need it; it must never
    // turn a definite verdict into the opposite one or hide a counterexample
    for path in files("eq").into_iter().chain(files("ineq")) {
        let text = std::fs::read_to_string(&path).unwrap();
        let p = parse_program_pair(&text).unwrap();
        let bound = parse_header(&text).bound.unwrap_or(opts().bound);
        let with = check_equiv(&p, &Options { bound, ..opts() }).verdict;
        let without = check_equiv(
            &p,
            &Options {
                bound,
                gc: false,
                ..opts()
            },
        )
        .verdict;
        let ineq = |v: &Verdict| matches!(v, Verdict::Inequivalent { .. });
        let flipped = (with == Verdict::Equivalent && ineq(&without))
            || (ineq(&with) != ineq(&without))
            || (without == Verdict::Equivalent && with != Verdict::Equivalent);
        ensure(!flipped, || {
            format!(
                "{}: {} vs {} without gc",
                stem(&path),
                with.name(),
                without.name()
            )
        })?;
    }
    Ok(())
}

fn suite_separation(rng: &mut StdRng) -> Result<(), String> {
    for _ in 0..STRUCTURE_CASES {
        let n = rng.gen_range(0..5);
        let node = pair(
            gc(&random_config(rng, n)),
            gc(&random_config(rng, n)),
            SymbolicEnv::new(),
        );
        let blocks = separate(&node);
        let mut seen = vec![];
        for b in &blocks {
            seen.extend(b.node.indices());
        }
        seen.sort();
        ensure(seen == node.indices(), || {
            "blocks do not partition Γ".into()
        })?;
        for side in 0..2 {
            let orig = node.sides[side].live().unwrap();
            let mut locs = BTreeSet::new();
            for b in &blocks {
                for (l, v) in &b.node.sides[side].live().unwrap().store {
                    ensure(locs.insert(l.clone()), || format!("{l} in two blocks"))?;
                    ensure(orig.store.get(l) == Some(v), || format!("{l} changed"))?;
                }
            }
        }
    }
    Ok(())
}

fn suite_normalize(rng: &mut StdRng) -> Result<(), String> {
    let mut solver = Solver::new(DEFAULT_SOLVER);
    for _ in 0..NORMALIZE_CASES {
        let s = random_sigma(rng);
        if !matches!(solver.sat(&s), SatResult::Sat(_)) {
            continue;
        }
        let live: Vec<SymId> = (0..rng.gen_range(0..3)).map(SymId).collect();
        let (norm, map) = normalize_with_map(&s, &live);
        let grid: Vec<Vec<i64>> = match live.len() {
            0 => vec![vec![]],
            1 => (-2..=2).map(|a| vec![a]).collect(),
            _ => (-1..=1)
                .flat_map(|a| (-1..=1).map(move |b| vec![a, b]))
                .collect(),
        };
        for point in grid {
            let pin = |env: &SymbolicEnv, f: &dyn Fn(SymId) -> SymId| {
                let mut e = env.clone();
                for (k, v) in live.iter().zip(&point) {
                    e.declare(f(*k), Type::Int);
                    e.push(Atom::eq(
                        SymExpr::Sym(f(*k)),
                        SymExpr::Const(Const::int(*v)),
                    ));
                }
                e
            };
            let a = solver.sat(&pin(&s, &|k| k));
            let b = solver.sat(&pin(&norm, &|k| map[&k]));
            if matches!(a, SatResult::Unknown(_)) || matches!(b, SatResult::Unknown(_)) {
                continue;
            }
            ensure(a.is_sat() == b.is_sat(), || {
                format!("{s} vs {norm} at {point:?}")
            })?;
        }
    }
    Ok(())
}

fn suite_replay(first: &BenchReport) -> Result<usize, String> {
    // every witness any configuration produces must replay
    let configs = ctxeq_cli::bench_configs(&opts());
    let mut replayed = 0;
    for path in files("ineq") {
        let text = std::fs::read_to_string(&path).unwrap();
        let p = parse_program_pair(&text).unwrap();
        let bound = parse_header(&text).bound.unwrap_or(opts().bound);
        for (name, o) in &configs {
            if let Verdict::Inequivalent { trace, model } =
                check_equiv(&p, &Options { bound, ..o.clone() }).verdict
            {
                ensure(replay(&trace, &model, &p, DEFAULT_FUEL), || {
                    format!("{} under {name}", stem(&path))
                })?;
                replayed += 1;
            }
        }
    }
    let expected: usize = first.configs.iter().map(|c| c.inequivalences).sum();
    ensure(replayed == expected, || {
        format!("{replayed} witnesses, bench saw {expected}")
    })?;
    Ok(replayed)
}

fn criterion_6(first: &BenchReport) -> Outcome {
    let mut rng = StdRng::seed_from_u64(SEED ^ 6);
    let suites: [(&str, Suite); 6] = [
        ("patterns", suite_patterns),
        ("decomposition", suite_decomposition),
        ("keys", suite_keys),
        ("gc", suite_gc),
        ("separation", suite_separation),
        ("normalize", suite_normalize),
    ];
    for (name, suite) in suites {
        suite(&mut rng).map_err(|m| format!("{name}: {m}"))?;
    }
    let replayed = suite_replay(first).map_err(|m| format!("replay: {m}"))?;
    Ok(format!("6 suites green, {replayed} witnesses replayed"))
}

fn criterion_7(first: &BenchReport) -> Outcome {
    let second = bench(&root(), &opts(), None, 1).map_err(|e| e.to_string())?;
    let (a, b) = (untimed_json(first), untimed_json(&second));
    ensure(a == b, || "bench reports differ".into())?;
    Ok(format!("{} bytes identical", a.len()))
}

fn run(n: u32, title: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default())
    });
    let secs = start.elapsed().as_secs_f64();
    match &res {
        Ok(d) => println!("criterion {n}: PASS  {title} ({d}) [{secs:.1}s]"),
        Err(d) => println!("criterion {n}: FAIL  {title} ({d}) [{secs:.1}s]"),
    }
    res.is_ok()
}

fn main() {
    let mut ok = true;
    ok &= run(1, "equivalence suite", criterion_1);
    ok &= run(2, "inequivalence suite", criterion_2);
    ok &= run(3, "well-bracketed state stays inconclusive", criterion_3);
    let first = bench(&root(), &opts(), None, 1);
    let first = match first {
        Ok(r) => Some(r),
        Err(e) => {
            println!("bench failed: {e}");
            None
        }
    };
    let first = first.as_ref();
    let with = |f: fn(&BenchReport) -> Outcome| {
        move || {
            first
                .ok_or_else(|| "no bench report".to_string())
                .and_then(f)
        }
    };
    ok &= run(4, "ablation monotonicity", with(criterion_4));
    ok &= run(5, "symbolic semantics against concrete runs", criterion_5);
    ok &= run(6, "structural suites", with(criterion_6));
    ok &= run(7, "bench determinism", with(criterion_7));
    if !ok {
        std::process::exit(1);
    }
}
