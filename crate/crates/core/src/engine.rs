//! Bounded synchronised exploration of the pair game.
//!
//! The search is depth first. Proponent nodes run both sides and pair their
//! moves; opponent nodes go through garbage collection, duplicate
//! contraction, separation and memoisation before enumerating moves. A side
//! that cannot match the other is marked ⊥ and the live side is driven
//! towards termination; reaching it yields a witness, which is confirmed by
//! concrete replay before it is reported.
//!
//! When the up-to search ends inconclusive, a second exact search (gc,
//! contraction and memoisation only) is run so that witnesses hidden by
//! abstraction can still be found.

use crate::constraints::{
    Assignment, Atom, SatResult, Solver, SymExpr, SymbolicEnv, DEFAULT_SOLVER,
};
use crate::fresh::Fresh;
use crate::lang::{AbsName, Annotation, Const, Expr, Op, SymId, Type};
use crate::lts::{
    self, arg_type, op_app, op_ret, proponent_moves, LiveConfig, Move, OpPattern, PropResult, Skel,
};
use crate::parser::ProgramPair;
use crate::semantics::DEFAULT_FUEL;
use crate::upto::{self, CallRec, PairNode, Side, Snapshot};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::time::{Duration, Instant};

/// Search options.
#[derive(Clone, Debug)]
pub struct Options {
    /// Function calls (both directions) allowed per path.
    pub bound: u32,
    pub timeout: Duration,
    /// τ-steps per proponent segment.
    pub fuel: u64,
    pub separation: bool,
    pub annotations: bool,
    pub reentry: bool,
    /// Garbage collection and duplicate contraction.
    pub gc: bool,
    pub solver_cmd: String,
    pub explain: bool,
    /// Opponent nodes per search phase; `None` for no limit.
    pub max_nodes: Option<u64>,
}

impl Default for Options {
    fn default() -> Options {
        Options {
            bound: 6,
            timeout: Duration::from_secs(150),
            fuel: DEFAULT_FUEL,
            separation: true,
            annotations: true,
            reentry: true,
            gc: true,
            solver_cmd: DEFAULT_SOLVER.to_string(),
            explain: false,
            max_nodes: None,
        }
    }
}

impl Options {
    /// Apply the dependencies between toggles: no annotations means no
    /// re-entry.
    pub fn normalized(mut self) -> Options {
        if !self.annotations {
            self.reentry = false;
        }
        self
    }

    /// Everything beyond plain memoisation off.
    pub fn without_upto(mut self) -> Options {
        self.separation = false;
        self.annotations = false;
        self.reentry = false;
        self.gc = false;
        self
    }
}

/// Why a run was inconclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Reason {
    BoundExhausted,
    FuelExhausted,
    SolverUnknown,
    ReentryViolated,
    InvariantFailed,
    UnconfirmedWitness,
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Reason::BoundExhausted => "bound-exhausted",
            Reason::FuelExhausted => "fuel-exhausted",
            Reason::SolverUnknown => "solver-unknown",
            Reason::ReentryViolated => "reentry-violated",
            Reason::InvariantFailed => "invariant-failed",
            Reason::UnconfirmedWitness => "unconfirmed-witness",
        };
        f.write_str(s)
    }
}

/// Which sides perform a trace step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tag {
    Both,
    Left,
    Right,
}

impl Tag {
    fn of_side(side: usize) -> Tag {
        if side == 0 {
            Tag::Left
        } else {
            Tag::Right
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tag::Both => "both",
            Tag::Left => "left",
            Tag::Right => "right",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceStep {
    pub mv: Move,
    pub side: Tag,
    /// Atoms added to σ by this step.
    pub delta: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace(pub Vec<TraceStep>);

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            write!(f, "{}", s.mv)?;
            if s.side != Tag::Both {
                write!(f, "    [{} only]", s.side)?;
            }
            if !s.delta.is_empty() {
                write!(f, "    {{{}}}", s.delta.join(" && "))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Stats {
    /// Opponent nodes visited.
    pub nodes: u64,
    pub memo_hits: u64,
    pub solver_queries: u64,
    /// Longest trace explored.
    pub max_depth: usize,
    pub sep_splits: u64,
    pub reentry_skips: u64,
    pub inv_applied: u64,
    pub inv_failed: u64,
    /// Phases run (1 or 2).
    pub phases: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Equivalent,
    Inequivalent { trace: Trace, model: Assignment },
    Inconclusive { reasons: BTreeSet<Reason> },
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Equivalent => "equivalent",
            Verdict::Inequivalent { .. } => "inequivalent",
            Verdict::Inconclusive { .. } => "inconclusive",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Report {
    pub verdict: Verdict,
    pub stats: Stats,
    /// Technique log, filled when `explain` is set.
    pub explain: Vec<String>,
}

/// Decide the pair up to the bound.
pub fn check_equiv(pair: &ProgramPair, opts: &Options) -> Report {
    let opts = opts.clone().normalized();
    let deadline = Instant::now() + opts.timeout;
    let mut solver = Solver::new(&opts.solver_cmd);
    let mut log = vec![];
    let mut stats = Stats::default();
    let first = Search::new(pair, &opts, deadline, &mut solver).run();
    stats.phases = 1;
    merge(&mut stats, &first.stats);
    log.extend(first.log);
    if let Some((trace, model)) = first.confirmed {
        stats.solver_queries = solver.stats.queries;
        return Report {
            verdict: Verdict::Inequivalent { trace, model },
            stats,
            explain: log,
        };
    }
    let mut reasons = first.reasons;
    if reasons.is_empty() {
        stats.solver_queries = solver.stats.queries;
        return Report {
            verdict: Verdict::Equivalent,
            stats,
            explain: log,
        };
    }
    if opts.separation || opts.annotations || opts.reentry {
        let exact = Options {
            separation: false,
            annotations: false,
            reentry: false,
            ..opts.clone()
        };
        if opts.explain {
            log.push("PHASE exact search".to_string());
        }
        let second = Search::new(pair, &exact, deadline, &mut solver).run();
        stats.phases = 2;
        merge(&mut stats, &second.stats);
        log.extend(second.log);
        if let Some((trace, model)) = second.confirmed {
            stats.solver_queries = solver.stats.queries;
            return Report {
                verdict: Verdict::Inequivalent { trace, model },
                stats,
                explain: log,
            };
        }
        if second.reasons.is_empty() {
            stats.solver_queries = solver.stats.queries;
            return Report {
                verdict: Verdict::Equivalent,
                stats,
                explain: log,
            };
        }
        reasons.extend(second.reasons);
    }
    stats.solver_queries = solver.stats.queries;
    Report {
        verdict: Verdict::Inconclusive { reasons },
        stats,
        explain: log,
    }
}

fn merge(into: &mut Stats, s: &Stats) {
    into.nodes += s.nodes;
    into.memo_hits += s.memo_hits;
    into.max_depth = into.max_depth.max(s.max_depth);
    into.sep_splits += s.sep_splits;
    into.reentry_skips += s.reentry_skips;
    into.inv_applied += s.inv_applied;
    into.inv_failed += s.inv_failed;
}

/// Whether the search continues after a subtree.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Flow {
    Go,
    Stop,
}

struct PhaseResult {
    confirmed: Option<(Trace, Assignment)>,
    reasons: BTreeSet<Reason>,
    stats: Stats,
    log: Vec<String>,
}

struct Search<'a> {
    pair: &'a ProgramPair,
    opts: &'a Options,
    deadline: Instant,
    solver: &'a mut Solver,
    fresh: Fresh,
    trace: Vec<TraceStep>,
    /// Keys of opponent nodes on the current path.
    active: HashMap<String, u32>,
    /// Keys whose subtree closed cleanly, with the bound used.
    done: HashMap<String, u32>,
    reasons: BTreeSet<Reason>,
    /// Bumped whenever a path ends without closing.
    dirty: u64,
    skip_used: bool,
    reentry_failed: bool,
    /// An invariant failed somewhere on the current path.
    inv_failed_on_path: bool,
    confirmed: Option<(Trace, Assignment)>,
    stats: Stats,
    log: Vec<String>,
}

impl<'a> Search<'a> {
    fn new(
        pair: &'a ProgramPair,
        opts: &'a Options,
        deadline: Instant,
        solver: &'a mut Solver,
    ) -> Search<'a> {
        Search {
            pair,
            opts,
            deadline,
            solver,
            fresh: Fresh::new(),
            trace: vec![],
            active: HashMap::new(),
            done: HashMap::new(),
            reasons: BTreeSet::new(),
            dirty: 0,
            skip_used: false,
            reentry_failed: false,
            inv_failed_on_path: false,
            confirmed: None,
            stats: Stats::default(),
            log: vec![],
        }
    }

    fn run(mut self) -> PhaseResult {
        for e in [&self.pair.left, &self.pair.right] {
            reserve_names(&self.fresh, e);
        }
        let root = PairNode {
            sigma: SymbolicEnv::new(),
            sides: [
                Side::Live(LiveConfig::initial(self.pair.left.clone())),
                Side::Live(LiveConfig::initial(self.pair.right.clone())),
            ],
            calls: vec![],
        };
        let bound = self.opts.bound;
        let _ = self.proponent(root, bound);
        if self.reentry_failed && self.skip_used {
            self.reasons.insert(Reason::ReentryViolated);
        }
        PhaseResult {
            confirmed: self.confirmed,
            reasons: self.reasons,
            stats: self.stats,
            log: self.log,
        }
    }

    fn explain(&mut self, line: String) {
        if self.opts.explain {
            self.log.push(line);
        }
    }

    fn give_up(&mut self, r: Reason) {
        self.dirty += 1;
        self.reasons.insert(r);
        if r == Reason::BoundExhausted && self.inv_failed_on_path {
            self.reasons.insert(Reason::InvariantFailed);
        }
    }

    fn push_step(&mut self, mv: Move, side: Tag, before: &SymbolicEnv, after: &SymbolicEnv) {
        let delta = after
            .atoms
            .iter()
            .filter(|a| !before.atoms.contains(a))
            .map(|a| a.to_string())
            .collect();
        self.trace.push(TraceStep { mv, side, delta });
        self.stats.max_depth = self.stats.max_depth.max(self.trace.len());
    }

    fn sat(&mut self, sigma: &SymbolicEnv) -> Option<bool> {
        match self.solver.sat(sigma) {
            SatResult::Sat(_) => Some(true),
            SatResult::Unsat => Some(false),
            SatResult::Unknown(_) => None,
        }
    }

    // -- proponent -------------------------------------------------------

    fn proponent(&mut self, n: PairNode, bound: u32) -> Flow {
        let fuel = self.opts.fuel;
        let mut results: [Option<Vec<PropResult>>; 2] = [None, None];
        for (side, s) in n.sides.iter().enumerate() {
            if let Side::Live(c) = s {
                results[side] = Some(proponent_moves(&n.sigma, c, fuel, self.solver, &self.fresh));
            }
        }
        // a segment that ran out of fuel on some branch is abandoned as a
        // whole: its sibling branches are typically many and the node is
        // inconclusive anyway
        if results
            .iter()
            .flatten()
            .flatten()
            .any(|r| matches!(r, PropResult::FuelExhausted { .. }))
        {
            self.give_up(Reason::FuelExhausted);
            return Flow::Go;
        }
        match results {
            [Some(l), Some(r)] => {
                for a in &l {
                    for b in &r {
                        if self.prop_pair(&n, a, b, bound) == Flow::Stop {
                            return Flow::Stop;
                        }
                    }
                }
                Flow::Go
            }
            [Some(rs), None] | [None, Some(rs)] => {
                let side = if n.sides[0].live().is_some() { 0 } else { 1 };
                for r in &rs {
                    let flow = match r {
                        PropResult::Moved { mv, sigma, config } => self.prop_continue(
                            &n,
                            [(side, config.clone())].into(),
                            mv.clone(),
                            Tag::of_side(side),
                            sigma.clone(),
                            bound,
                        ),
                        PropResult::Stuck { .. } => Flow::Go,
                        PropResult::FuelExhausted { .. } => {
                            self.give_up(Reason::FuelExhausted);
                            Flow::Go
                        }
                        PropResult::Unknown { .. } => {
                            self.give_up(Reason::SolverUnknown);
                            Flow::Go
                        }
                    };
                    if flow == Flow::Stop {
                        return Flow::Stop;
                    }
                }
                Flow::Go
            }
            [None, None] => unreachable!("a pair node has a live side"),
        }
    }

    /// One combination of a left and a right branch.
    fn prop_pair(&mut self, n: &PairNode, a: &PropResult, b: &PropResult, bound: u32) -> Flow {
        let sa = prop_sigma(a);
        let sb = prop_sigma(b);
        let base = n.sigma.atoms.len();
        let sigma = sa.conj(sb);
        if sa.atoms.len() > base && sb.atoms.len() > base {
            match self.sat(&sigma) {
                Some(true) => {}
                Some(false) => return Flow::Go,
                None => {
                    self.give_up(Reason::SolverUnknown);
                    return Flow::Go;
                }
            }
        }
        use PropResult::*;
        match (a, b) {
            (FuelExhausted { .. }, _) | (_, FuelExhausted { .. }) => {
                self.give_up(Reason::FuelExhausted);
                Flow::Go
            }
            (Unknown { .. }, _) | (_, Unknown { .. }) => {
                self.give_up(Reason::SolverUnknown);
                Flow::Go
            }
            (Stuck { .. }, Stuck { .. }) => Flow::Go,
            (Moved { mv, config, .. }, Stuck { .. }) => self.lone(n, 0, mv, config, &sigma, bound),
            (Stuck { .. }, Moved { mv, config, .. }) => self.lone(n, 1, mv, config, &sigma, bound),
            (
                Moved {
                    mv: ma, config: ca, ..
                },
                Moved {
                    mv: mb, config: cb, ..
                },
            ) => {
                let Some(leaves) = match_moves(ma, mb) else {
                    if self.lone(n, 0, ma, ca, &sigma, bound) == Flow::Stop {
                        return Flow::Stop;
                    }
                    return self.lone(n, 1, mb, cb, &sigma, bound);
                };
                let differing: Vec<(SymExpr, SymExpr)> =
                    leaves.into_iter().filter(|(x, y)| x != y).collect();
                let const_clash = differing
                    .iter()
                    .any(|(x, y)| matches!((x, y), (SymExpr::Const(_), SymExpr::Const(_))));
                if !const_clash {
                    let mut matched = sigma.clone();
                    for (x, y) in &differing {
                        matched.push(Atom::eq(x.clone(), y.clone()));
                    }
                    let ok = if differing.is_empty() {
                        Some(true)
                    } else {
                        self.sat(&matched)
                    };
                    match ok {
                        Some(true) => {
                            let configs = [(0, ca.clone()), (1, cb.clone())].into();
                            if self.prop_continue(n, configs, ma.clone(), Tag::Both, matched, bound)
                                == Flow::Stop
                            {
                                return Flow::Stop;
                            }
                        }
                        Some(false) => {}
                        None => self.give_up(Reason::SolverUnknown),
                    }
                }
                if differing.is_empty() {
                    return Flow::Go;
                }
                let mismatch = if const_clash {
                    sigma.clone()
                } else {
                    let ne = differing
                        .iter()
                        .map(|(x, y)| SymExpr::Op(Op::Neq, vec![x.clone(), y.clone()]))
                        .reduce(|p, q| SymExpr::Op(Op::Or, vec![p, q]))
                        .expect("nonempty");
                    let m = sigma.with(Atom::holds(ne));
                    match self.sat(&m) {
                        Some(true) => m,
                        Some(false) => return Flow::Go,
                        None => {
                            self.give_up(Reason::SolverUnknown);
                            return Flow::Go;
                        }
                    }
                };
                if self.lone(n, 0, ma, ca, &mismatch, bound) == Flow::Stop {
                    return Flow::Stop;
                }
                self.lone(n, 1, mb, cb, &mismatch, bound)
            }
        }
    }

    /// Continue with `side` alone, the other side becoming ⊥.
    fn lone(
        &mut self,
        n: &PairNode,
        side: usize,
        mv: &Move,
        c: &LiveConfig,
        sigma: &SymbolicEnv,
        bound: u32,
    ) -> Flow {
        let mut m = n.clone();
        m.sides[1 - side] = Side::Bottom;
        self.prop_continue(
            &m,
            [(side, c.clone())].into(),
            mv.clone(),
            Tag::of_side(side),
            sigma.clone(),
            bound,
        )
    }

    /// Install the moved configurations and go to the opponent node.
    fn prop_continue(
        &mut self,
        n: &PairNode,
        configs: BTreeMap<usize, LiveConfig>,
        mv: Move,
        tag: Tag,
        sigma: SymbolicEnv,
        bound: u32,
    ) -> Flow {
        let mut bound = bound;
        if matches!(mv, Move::PropApp { .. }) {
            if bound == 0 {
                self.give_up(Reason::BoundExhausted);
                return Flow::Go;
            }
            bound -= 1;
        }
        let mut m = PairNode {
            sigma,
            sides: [Side::Bottom, Side::Bottom],
            calls: n.calls.clone(),
        };
        for (side, c) in configs {
            m.sides[side] = Side::Live(c);
        }
        self.push_step(mv.clone(), tag, &n.sigma, &m.sigma);
        let saved_inv = self.inv_failed_on_path;
        let flow = self.after_prop(m, &mv, bound);
        self.inv_failed_on_path = saved_inv;
        self.trace.pop();
        flow
    }

    fn after_prop(&mut self, mut m: PairNode, mv: &Move, bound: u32) -> Flow {
        let height = m.stack_height();
        match mv {
            Move::PropRet { .. } => {
                if let Some(rec) = m.calls.pop_if(|r| r.depth == height) {
                    if self.opts.annotations && rec.annotated() {
                        m = self.invariant(m, rec.index, &rec.annots);
                    }
                    if let Some(snap) = &rec.snapshot {
                        if !self.reentry_holds(snap, &m) {
                            self.reentry_failed = true;
                            self.explain(format!("REENTRY violated {}", rec.index));
                        }
                    }
                }
            }
            Move::PropApp { .. } if self.opts.annotations => {
                if let Some(rec) = m.calls.last().filter(|r| r.annotated()).cloned() {
                    m = self.invariant(m, rec.index, &rec.annots);
                }
            }
            _ => {}
        }
        self.opponent(m, bound)
    }

    fn reentry_holds(&mut self, snap: &Snapshot, m: &PairNode) -> bool {
        let m = if self.opts.gc {
            upto::gc_node(m)
        } else {
            m.clone()
        };
        upto::reentry_unchanged(snap, &m)
    }

    /// Apply an invariant; on failure the node is returned unchanged.
    fn invariant(&mut self, m: PairNode, index: u32, annots: &[Option<Annotation>; 2]) -> PairNode {
        match upto::apply_invariant(&m, annots, self.solver, &self.fresh) {
            Ok(applied) => {
                self.stats.inv_applied += 1;
                self.explain(format!("INV applied {index}"));
                applied.node
            }
            Err(why) => {
                self.stats.inv_failed += 1;
                self.inv_failed_on_path = true;
                self.explain(format!("INV failed {index}: {why}"));
                m
            }
        }
    }

    // -- opponent --------------------------------------------------------

    fn opponent(&mut self, n: PairNode, bound: u32) -> Flow {
        if Instant::now() > self.deadline
            || self.opts.max_nodes.is_some_and(|m| self.stats.nodes >= m)
        {
            self.give_up(Reason::BoundExhausted);
            return Flow::Stop;
        }
        self.stats.nodes += 1;
        if let (Side::Live(l), Side::Live(r)) = (&n.sides[0], &n.sides[1]) {
            assert_eq!(l.stack.len(), r.stack.len(), "stack heights diverged");
        }
        let mut n = n;
        if self.opts.gc {
            n = upto::gc_node(&n);
            n = upto::dedup(&n).0;
        }
        if n.bottom_mode() && n.stack_height() == 0 {
            let side = if n.sides[0].live().is_some() { 0 } else { 1 };
            return self.witness(&n, side);
        }
        if self.opts.separation {
            let blocks = upto::separate(&n);
            if blocks.len() > 1 {
                self.stats.sep_splits += 1;
                self.explain(format!("SEP split {} blocks", blocks.len()));
                let bottom = n.bottom_mode();
                for b in blocks {
                    if bottom && !b.focus {
                        continue;
                    }
                    if self.memoized(b.node, bound) == Flow::Stop {
                        return Flow::Stop;
                    }
                }
                return Flow::Go;
            }
        }
        self.memoized(n, bound)
    }

    fn memoized(&mut self, n: PairNode, bound: u32) -> Flow {
        let key = upto::canonical_key(&n);
        if self.active.contains_key(&key) || self.done.get(&key).is_some_and(|&b| b >= bound) {
            self.stats.memo_hits += 1;
            let digest = upto::key_digest(&key);
            self.explain(format!("MEMO hit {digest}"));
            return Flow::Go;
        }
        self.active.insert(key.clone(), bound);
        let dirty = self.dirty;
        let flow = self.opp_moves(n, bound);
        self.active.remove(&key);
        if flow == Flow::Go && self.dirty == dirty {
            let e = self.done.entry(key).or_insert(bound);
            *e = (*e).max(bound);
        }
        flow
    }

    fn opp_moves(&mut self, n: PairNode, bound: u32) -> Flow {
        let live: Vec<usize> = n.live_sides().map(|(s, _)| s).collect();
        let height = n.stack_height();
        for i in n.indices() {
            let annots =
                [0, 1].map(|s| n.sides[s].live().and_then(|c| annotation_of(&c.gamma[&i])));
            let annotated = annots.iter().any(Option::is_some);
            if self.opts.reentry && annotated && n.calls.iter().any(|r| r.index == i) {
                self.stats.reentry_skips += 1;
                self.skip_used = true;
                self.explain(format!("REENTRY skip {i}"));
                continue;
            }
            if bound == 0 {
                self.give_up(Reason::BoundExhausted);
                continue;
            }
            let saved_inv = self.inv_failed_on_path;
            let mut node = n.clone();
            if self.opts.annotations && annotated {
                node = self.invariant(node, i, &annots);
            }
            let ty = arg_type(node.some_live(), i).expect("Γ holds functions");
            let pat = lts::ulpatt_type(&ty, &self.fresh);
            let mut next = node.clone();
            declare_pattern(&mut next.sigma, &pat);
            for &s in &live {
                let c = node.sides[s].live().expect("live");
                next.sides[s] = Side::Live(op_app(c, i, &pat).expect("well-formed application"));
            }
            let flagged = self.opts.reentry && annotated;
            let snapshot = flagged.then(|| {
                let base = if self.opts.gc {
                    upto::gc_node(&node)
                } else {
                    node.clone()
                };
                Box::new(upto::snapshot(&base))
            });
            next.calls.push(CallRec {
                index: i,
                depth: height,
                annots,
                flagged,
                snapshot,
            });
            let tag = if live.len() == 2 {
                Tag::Both
            } else {
                Tag::of_side(live[0])
            };
            self.push_step(
                Move::OpApp {
                    index: i,
                    pat: pat.skel.clone(),
                },
                tag,
                &n.sigma,
                &next.sigma,
            );
            let flow = self.proponent(next, bound - 1);
            self.trace.pop();
            self.inv_failed_on_path = saved_inv;
            if flow == Flow::Stop {
                return Flow::Stop;
            }
        }
        if height > 0 {
            let ty = n
                .some_live()
                .stack
                .last()
                .expect("nonempty stack")
                .ty
                .clone();
            let pat = lts::ulpatt_type(&ty, &self.fresh);
            let mut next = n.clone();
            declare_pattern(&mut next.sigma, &pat);
            for &s in &live {
                let c = n.sides[s].live().expect("live");
                next.sides[s] = Side::Live(op_ret(c, &pat).expect("nonempty stack"));
            }
            let tag = if live.len() == 2 {
                Tag::Both
            } else {
                Tag::of_side(live[0])
            };
            self.push_step(
                Move::OpRet {
                    pat: pat.skel.clone(),
                },
                tag,
                &n.sigma,
                &next.sigma,
            );
            let flow = self.proponent(next, bound);
            self.trace.pop();
            if flow == Flow::Stop {
                return Flow::Stop;
            }
        }
        // with both sides live and empty stacks, termination matches
        Flow::Go
    }

    fn witness(&mut self, n: &PairNode, side: usize) -> Flow {
        self.push_step(Move::Term, Tag::of_side(side), &n.sigma, &n.sigma);
        let trace = Trace(self.trace.clone());
        self.trace.pop();
        let model = match self.solver.sat(&n.sigma) {
            SatResult::Sat(Some(m)) => m,
            SatResult::Sat(None) | SatResult::Unknown(_) => {
                self.give_up(Reason::SolverUnknown);
                return Flow::Go;
            }
            SatResult::Unsat => return Flow::Go,
        };
        if replay(&trace, &model, self.pair, self.opts.fuel) {
            self.confirmed = Some((trace, model));
        } else {
            self.explain("WITNESS unconfirmed".to_string());
            self.give_up(Reason::UnconfirmedWitness);
        }
        Flow::Stop
    }
}

fn prop_sigma(r: &PropResult) -> &SymbolicEnv {
    match r {
        PropResult::Moved { sigma, .. }
        | PropResult::Stuck { sigma }
        | PropResult::FuelExhausted { sigma }
        | PropResult::Unknown { sigma, .. } => sigma,
    }
}

fn annotation_of(v: &Expr) -> Option<Annotation> {
    match v {
        Expr::Lambda(l) => l.annot.clone(),
        _ => None,
    }
}

fn declare_pattern(sigma: &mut SymbolicEnv, pat: &OpPattern) {
    for (k, t) in &pat.syms {
        sigma.declare(*k, t.clone());
    }
}

fn leaf(s: &Skel) -> Option<SymExpr> {
    match s {
        Skel::Const(c) => Some(SymExpr::Const(c.clone())),
        Skel::Sym(k) => Some(SymExpr::Sym(*k)),
        _ => None,
    }
}

fn match_skel(a: &Skel, b: &Skel, out: &mut Vec<(SymExpr, SymExpr)>) -> bool {
    match (a, b) {
        (Skel::Hole(i), Skel::Hole(j)) => i == j,
        (Skel::Tuple(xs), Skel::Tuple(ys)) => {
            xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| match_skel(x, y, out))
        }
        (Skel::Abs(x), Skel::Abs(y)) => x == y,
        _ => match (leaf(a), leaf(b)) {
            (Some(x), Some(y)) => {
                out.push((x, y));
                true
            }
            _ => false,
        },
    }
}

/// Leaf pairs of two proponent moves with the same skeleton.
fn match_moves(a: &Move, b: &Move) -> Option<Vec<(SymExpr, SymExpr)>> {
    let mut out = vec![];
    let ok = match (a, b) {
        (Move::PropRet { pat: p }, Move::PropRet { pat: q }) => match_skel(p, q, &mut out),
        (Move::PropApp { abs: x, pat: p }, Move::PropApp { abs: y, pat: q }) => {
            x == y && match_skel(p, q, &mut out)
        }
        _ => false,
    };
    ok.then_some(out)
}

/// Keep fresh names above those written in the programs.
fn reserve_names(fresh: &Fresh, e: &Expr) {
    for a in crate::lang::abstract_names(e) {
        fresh.reserve_abs(a);
    }
    let mut ks = vec![];
    crate::lang::sym_consts(e, &mut ks);
    for k in ks {
        fresh.reserve_sym(k);
    }
}

// ---------------------------------------------------------------------------
// Replay

fn instantiate_skel(s: &Skel, model: &Assignment) -> Skel {
    match s {
        Skel::Sym(k) => Skel::Const(model.get(k).cloned().unwrap_or(Const::Int(0.into()))),
        Skel::Tuple(ps) => Skel::Tuple(ps.iter().map(|p| instantiate_skel(p, model)).collect()),
        other => other.clone(),
    }
}

fn instantiate_move(m: &Move, model: &Assignment) -> Move {
    match m {
        Move::PropApp { abs, pat } => Move::PropApp {
            abs: *abs,
            pat: instantiate_skel(pat, model),
        },
        Move::PropRet { pat } => Move::PropRet {
            pat: instantiate_skel(pat, model),
        },
        Move::OpApp { index, pat } => Move::OpApp {
            index: *index,
            pat: instantiate_skel(pat, model),
        },
        Move::OpRet { pat } => Move::OpRet {
            pat: instantiate_skel(pat, model),
        },
        Move::Term => Move::Term,
    }
}

/// Concrete opponent value for a pattern skeleton at a type.
fn concrete_pattern(skel: &Skel, ty: &Type, model: &Assignment) -> Option<OpPattern> {
    fn go(s: &Skel, ty: &Type, model: &Assignment, abs: &mut Vec<(AbsName, Type)>) -> Option<Expr> {
        match (s, ty) {
            (Skel::Const(c), _) => Some(Expr::Const(c.clone())),
            (Skel::Sym(k), Type::Int | Type::Bool) => Some(Expr::Const(
                model
                    .get(k)
                    .cloned()
                    .unwrap_or_else(|| Const::default_of(ty)),
            )),
            (Skel::Abs(a), Type::Arrow(..)) => {
                abs.push((*a, ty.clone()));
                Some(Expr::Abs(*a, ty.clone()))
            }
            (Skel::Tuple(ss), Type::Product(ts)) if ss.len() == ts.len() => {
                let vs = ss
                    .iter()
                    .zip(ts)
                    .map(|(s, t)| go(s, t, model, abs))
                    .collect::<Option<Vec<_>>>()?;
                Some(Expr::Tuple(vs))
            }
            _ => None,
        }
    }
    let mut abs = vec![];
    let value = go(skel, ty, model, &mut abs)?;
    Some(OpPattern {
        skel: skel.clone(),
        value,
        syms: vec![],
        abs,
    })
}

/// One concrete proponent segment: the move made, `None` when the program
/// diverges (is stuck), or `Err` when fuel ran out.
fn concrete_prop(
    c: &LiveConfig,
    fuel: u64,
    solver: &mut Solver,
    fresh: &Fresh,
) -> Result<Option<(Move, LiveConfig)>, ()> {
    let rs = proponent_moves(&SymbolicEnv::new(), c, fuel, solver, fresh);
    match rs.as_slice() {
        [PropResult::Moved { mv, config, .. }] => Ok(Some((mv.clone(), config.clone()))),
        [PropResult::Stuck { .. }] => Ok(None),
        _ => Err(()),
    }
}

/// Check a witness concretely: with the model's values, the surviving side
/// performs every step and terminates, and at the point where the trace
/// leaves the other side, that side makes a different move or diverges.
pub fn replay(trace: &Trace, model: &Assignment, pair: &ProgramPair, fuel: u64) -> bool {
    let mut solver = Solver::new("");
    let fresh = Fresh::new();
    reserve_names(&fresh, &pair.left);
    reserve_names(&fresh, &pair.right);
    for s in &trace.0 {
        if let Some(p) = s.mv.pattern() {
            reserve_skel(&fresh, p);
        }
    }
    let mut sides: [Option<LiveConfig>; 2] = [
        Some(LiveConfig::initial(pair.left.clone())),
        Some(LiveConfig::initial(pair.right.clone())),
    ];
    let Some(last) = trace.0.last() else {
        return false;
    };
    if last.mv != Move::Term || last.side == Tag::Both {
        return false;
    }
    for step in &trace.0 {
        let expected = instantiate_move(&step.mv, model);
        let who: Vec<usize> = match step.side {
            Tag::Both => vec![0, 1],
            Tag::Left => vec![0],
            Tag::Right => vec![1],
        };
        if step.side != Tag::Both {
            let other = 1 - who[0];
            if let Some(c) = sides[other].take() {
                // first step on one side only: the other side must not match
                if !step.mv.is_proponent() {
                    return false;
                }
                match concrete_prop(&c, fuel, &mut solver, &fresh) {
                    Ok(Some((mv, _))) if mv == expected => return false,
                    Ok(_) => {}
                    Err(()) => return false,
                }
            }
        }
        for s in who {
            let Some(c) = sides[s].take() else {
                return false;
            };
            let next = if step.mv.is_proponent() {
                match concrete_prop(&c, fuel, &mut solver, &fresh) {
                    Ok(Some((mv, next))) if mv == expected => next,
                    _ => return false,
                }
            } else {
                match &step.mv {
                    Move::OpApp { index, pat } => {
                        let Ok(ty) = arg_type(&c, *index) else {
                            return false;
                        };
                        let Some(p) = concrete_pattern(pat, &ty, model) else {
                            return false;
                        };
                        match op_app(&c, *index, &p) {
                            Ok(n) => n,
                            Err(_) => return false,
                        }
                    }
                    Move::OpRet { pat } => {
                        let Some(k) = c.stack.last() else {
                            return false;
                        };
                        let Some(p) = concrete_pattern(pat, &k.ty, model) else {
                            return false;
                        };
                        match op_ret(&c, &p) {
                            Ok(n) => n,
                            Err(_) => return false,
                        }
                    }
                    Move::Term => {
                        if !c.stack.is_empty() || c.is_proponent() {
                            return false;
                        }
                        c
                    }
                    _ => unreachable!(),
                }
            };
            sides[s] = Some(next);
        }
    }
    true
}

fn reserve_skel(fresh: &Fresh, s: &Skel) {
    match s {
        Skel::Abs(a) => fresh.reserve_abs(*a),
        Skel::Sym(k) => fresh.reserve_sym(*k),
        Skel::Tuple(ps) => ps.iter().for_each(|p| reserve_skel(fresh, p)),
        _ => {}
    }
}

/// Render a model as `_k#n = v` pairs.
pub fn model_entries(m: &Assignment) -> Vec<(String, String)> {
    m.iter()
        .map(|(k, v): (&SymId, &Const)| (k.to_string(), v.to_string()))
        .collect()
}
