//! Up-to techniques as rewrites of configuration pairs: garbage collection,
//! weakening, duplicate contraction, separation, canonical keys (up to
//! permutation and σ-normalisation), state invariants and the re-entry
//! snapshot check.

use crate::constraints::{normalize_with_map, Atom, Solver, SymExpr, SymbolicEnv};
use crate::fresh::Fresh;
use crate::lang::{
    abstract_names, free_locations, APat, AbsName, Annotation, Const, Expr, Loc, SymId, Type,
};
use crate::lts::{Cont, LiveConfig};
use crate::semantics::Store;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

/// One side of a pair: a live configuration or the ⊥ sink.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Side {
    Live(LiveConfig),
    Bottom,
}

impl Side {
    pub fn live(&self) -> Option<&LiveConfig> {
        match self {
            Side::Live(c) => Some(c),
            Side::Bottom => None,
        }
    }

    pub fn live_mut(&mut self) -> Option<&mut LiveConfig> {
        match self {
            Side::Live(c) => Some(c),
            Side::Bottom => None,
        }
    }
}

/// State of the two sides when an opponent call started, kept for the
/// re-entry check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Snapshot {
    pub sides: [Option<(BTreeMap<u32, Expr>, Store)>; 2],
    pub sigma: SymbolicEnv,
}

/// An opponent call on Γ index `index` that has not returned yet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CallRec {
    pub index: u32,
    /// Stack height when the call was made.
    pub depth: usize,
    pub annots: [Option<Annotation>; 2],
    /// Nested calls on this index may be skipped.
    pub flagged: bool,
    pub snapshot: Option<Box<Snapshot>>,
}

impl CallRec {
    pub fn annotated(&self) -> bool {
        self.annots.iter().any(|a| a.is_some())
    }
}

/// A related pair of configurations under a shared σ.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairNode {
    pub sigma: SymbolicEnv,
    pub sides: [Side; 2],
    pub calls: Vec<CallRec>,
}

impl PairNode {
    pub fn live_sides(&self) -> impl Iterator<Item = (usize, &LiveConfig)> {
        self.sides
            .iter()
            .enumerate()
            .filter_map(|(n, s)| s.live().map(|c| (n, c)))
    }

    /// Any live side; there is always at least one.
    pub fn some_live(&self) -> &LiveConfig {
        self.live_sides().next().expect("a live side").1
    }

    pub fn bottom_mode(&self) -> bool {
        self.sides.iter().any(|s| matches!(s, Side::Bottom))
    }

    pub fn indices(&self) -> Vec<u32> {
        self.some_live().gamma.keys().copied().collect()
    }

    pub fn stack_height(&self) -> usize {
        self.some_live().stack.len()
    }
}

/// Locations reachable from `roots` through the store.
pub fn reach(store: &Store, roots: impl IntoIterator<Item = Loc>) -> BTreeSet<Loc> {
    let mut seen = BTreeSet::new();
    let mut work: Vec<Loc> = roots.into_iter().collect();
    while let Some(l) = work.pop() {
        if !seen.insert(l.clone()) {
            continue;
        }
        if let Some(v) = store.get(&l) {
            work.extend(free_locations(v));
        }
    }
    seen
}

fn cont_locs(k: &Cont) -> BTreeSet<Loc> {
    let mut out: BTreeSet<Loc> = k.ctx.frame_locs().into_iter().cloned().collect();
    for e in k.ctx.exprs() {
        out.extend(free_locations(e));
    }
    out
}

/// Drop unreachable store entries and unused abstract names.
pub fn gc(c: &LiveConfig) -> LiveConfig {
    let mut roots = BTreeSet::new();
    for v in c.gamma.values() {
        roots.extend(free_locations(v));
    }
    for k in &c.stack {
        roots.extend(cont_locs(k));
    }
    if let Some(e) = &c.expr {
        roots.extend(free_locations(e));
    }
    let live = reach(&c.store, roots);
    let store: Store = c
        .store
        .iter()
        .filter(|(l, _)| live.contains(*l))
        .map(|(l, v)| (l.clone(), v.clone()))
        .collect();
    let mut names = BTreeSet::new();
    let mut terms: Vec<&Expr> = c.gamma.values().chain(store.values()).collect();
    terms.extend(c.stack.iter().flat_map(|k| k.ctx.exprs()));
    if let Some(e) = &c.expr {
        terms.push(e);
    }
    for t in terms {
        names.extend(abstract_names(t));
    }
    let abs = c
        .abs
        .iter()
        .filter(|(a, _)| names.contains(*a))
        .map(|(a, t)| (*a, t.clone()))
        .collect();
    LiveConfig {
        abs,
        store,
        ..c.clone()
    }
}

pub fn gc_node(n: &PairNode) -> PairNode {
    let mut out = n.clone();
    for s in out.sides.iter_mut() {
        if let Side::Live(c) = s {
            *c = gc(c);
        }
    }
    out
}

/// Remove the given Γ indices from both sides.
pub fn weaken(n: &PairNode, drop: &BTreeSet<u32>) -> PairNode {
    let mut out = n.clone();
    for s in out.sides.iter_mut() {
        if let Side::Live(c) = s {
            c.gamma.retain(|i, _| !drop.contains(i));
        }
    }
    out
}

/// Contract Γ entries that repeat an earlier entry on every live side.
/// Returns the node and the `(removed, kept)` index pairs.
pub fn dedup(n: &PairNode) -> (PairNode, Vec<(u32, u32)>) {
    let idx = n.indices();
    let mut renames = vec![];
    let mut kept: Vec<u32> = vec![];
    for &j in &idx {
        let same = kept.iter().copied().find(|&i| {
            n.live_sides()
                .all(|(_, c)| c.gamma.get(&i) == c.gamma.get(&j))
        });
        match same {
            Some(i) => renames.push((j, i)),
            None => kept.push(j),
        }
    }
    if renames.is_empty() {
        return (n.clone(), renames);
    }
    let drop: BTreeSet<u32> = renames.iter().map(|(j, _)| *j).collect();
    let mut out = weaken(n, &drop);
    for c in out.calls.iter_mut() {
        if let Some((_, i)) = renames.iter().find(|(j, _)| *j == c.index) {
            c.index = *i;
        }
    }
    (out, renames)
}

/// One block produced by [`separate`].
#[derive(Clone, Debug)]
pub struct Block {
    pub node: PairNode,
    /// Holds the stack (and the pending calls).
    pub focus: bool,
}

/// Split an opponent node into store-disjoint blocks. Items are the Γ
/// indices plus the whole stack as one item; two items share a block when
/// their location footprints meet on either side. The stack block is the
/// focus; every other block has an empty stack.
pub fn separate(n: &PairNode) -> Vec<Block> {
    let idx = n.indices();
    let has_stack = n.stack_height() > 0;
    let items = idx.len() + usize::from(has_stack);
    let mut parent: Vec<usize> = (0..items).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let nx = p[y];
            p[y] = r;
            y = nx;
        }
        r
    }
    let mut footprints: Vec<[BTreeSet<Loc>; 2]> = vec![Default::default(); items];
    for (side, c) in n.live_sides() {
        let mut owner: BTreeMap<Loc, usize> = BTreeMap::new();
        for item in 0..items {
            let roots = if item < idx.len() {
                free_locations(&c.gamma[&idx[item]])
            } else {
                c.stack.iter().flat_map(cont_locs).collect()
            };
            let fp = reach(&c.store, roots);
            for l in &fp {
                match owner.get(l) {
                    Some(&o) => {
                        let (a, b) = (find(&mut parent, o), find(&mut parent, item));
                        parent[a.max(b)] = a.min(b);
                    }
                    None => {
                        owner.insert(l.clone(), item);
                    }
                }
            }
            footprints[item][side] = fp;
        }
    }
    let roots: Vec<usize> = (0..items).map(|i| find(&mut parent, i)).collect();
    let mut groups: Vec<usize> = roots.clone();
    groups.sort();
    groups.dedup();
    if groups.len() <= 1 {
        return vec![Block {
            node: n.clone(),
            focus: has_stack,
        }];
    }
    let mut out = vec![];
    for g in groups {
        let members: Vec<usize> = (0..items).filter(|&i| roots[i] == g).collect();
        let focus = has_stack && members.contains(&idx.len());
        let keep: BTreeSet<u32> = members
            .iter()
            .filter(|&&i| i < idx.len())
            .map(|&i| idx[i])
            .collect();
        let mut node = n.clone();
        for (side, s) in node.sides.iter_mut().enumerate() {
            if let Side::Live(c) = s {
                c.gamma.retain(|i, _| keep.contains(i));
                let fp: BTreeSet<&Loc> = members
                    .iter()
                    .flat_map(|&m| footprints[m][side].iter())
                    .collect();
                c.store.retain(|l, _| fp.contains(l));
                if !focus {
                    c.stack.clear();
                }
            }
        }
        if !focus {
            node.calls.clear();
        }
        out.push(Block {
            node: gc_node(&node),
            focus,
        });
    }
    out
}

// ---------------------------------------------------------------------------
// Canonical keys

const HOLE_MARK: &str = "%hole";

#[derive(Default, Clone)]
struct Canon {
    anonymous: bool,
    locs: [BTreeMap<Loc, usize>; 2],
    loc_order: [Vec<Loc>; 2],
    abs: BTreeMap<AbsName, usize>,
    syms: BTreeMap<SymId, usize>,
    sym_order: Vec<SymId>,
    idx: BTreeMap<u32, usize>,
    out: String,
}

impl Canon {
    fn loc(&mut self, side: usize, l: &Loc) {
        if self.anonymous {
            self.out.push_str("l_");
            return;
        }
        let n = self.locs[side].len();
        let id = *self.locs[side].entry(l.clone()).or_insert_with(|| {
            self.loc_order[side].push(l.clone());
            n
        });
        let _ = write!(self.out, "l{id}");
    }

    fn sym(&mut self, k: SymId) {
        if self.anonymous {
            self.out.push_str("k_");
            return;
        }
        let n = self.syms.len();
        let id = *self.syms.entry(k).or_insert_with(|| {
            self.sym_order.push(k);
            n
        });
        let _ = write!(self.out, "{}", SymId(id as u32));
    }

    fn abs(&mut self, a: AbsName) {
        if self.anonymous {
            self.out.push_str("a_");
            return;
        }
        let n = self.abs.len();
        let id = *self.abs.entry(a).or_insert(n);
        let _ = write!(self.out, "a{id}");
    }

    fn apat(&mut self, p: &APat) {
        match p {
            APat::Name(i) => {
                let _ = write!(self.out, "n{i}");
            }
            APat::Const(c) => {
                let _ = write!(self.out, "{c}");
            }
            APat::Tuple(ps) => {
                self.out.push('(');
                for q in ps {
                    self.apat(q);
                    self.out.push(',');
                }
                self.out.push(')');
            }
        }
    }

    fn expr(&mut self, side: usize, e: &Expr) {
        match e {
            Expr::Const(c) => {
                let _ = write!(self.out, "{c}");
            }
            Expr::Var(x) => {
                let _ = write!(self.out, "${x}");
            }
            Expr::Lambda(l) => {
                let _ = write!(
                    self.out,
                    "(fun {:?} {} {} {}",
                    l.rec_name, l.param, l.param_ty, l.ret_ty
                );
                if let Some(a) = &l.annot {
                    let _ = write!(self.out, " {{{:?} {:?} ", a.names, a.name_types);
                    for (loc, p) in &a.locs {
                        self.loc(side, loc);
                        self.out.push_str(" as ");
                        self.apat(p);
                        self.out.push(';');
                    }
                    self.expr(side, &a.formula);
                    self.out.push('}');
                }
                self.out.push(' ');
                self.expr(side, &l.body);
                self.out.push(')');
            }
            Expr::Tuple(es) => self.list("tup", side, es),
            Expr::Op(op, es) => self.list(op.symbol(), side, es),
            Expr::App(a, b) => self.list("app", side, &[(**a).clone(), (**b).clone()]),
            Expr::If(a, b, c) => {
                self.list("if", side, &[(**a).clone(), (**b).clone(), (**c).clone()])
            }
            Expr::NewRef(l, a, b) => {
                // the binder is a name local to the term, kept verbatim
                let _ = write!(self.out, "(ref {l} ");
                self.expr(side, a);
                self.out.push(' ');
                self.expr(side, b);
                self.out.push(')');
            }
            Expr::Deref(l) => {
                self.out.push('!');
                self.loc(side, l);
            }
            Expr::Assign(l, a) => {
                self.out.push_str("(:= ");
                self.loc(side, l);
                self.out.push(' ');
                self.expr(side, a);
                self.out.push(')');
            }
            Expr::LetTuple(xs, a, b) => {
                let _ = write!(self.out, "(let {xs:?} ");
                self.expr(side, a);
                self.out.push(' ');
                self.expr(side, b);
                self.out.push(')');
            }
            Expr::Abs(a, t) => {
                self.abs(*a);
                let _ = write!(self.out, ":{t}");
            }
            Expr::Sym(k, t) => {
                self.sym(*k);
                let _ = write!(self.out, ":{t}");
            }
            Expr::Bot => self.out.push_str("_bot_"),
        }
    }

    fn list(&mut self, head: &str, side: usize, es: &[Expr]) {
        let _ = write!(self.out, "({head}");
        for a in es {
            self.out.push(' ');
            self.expr(side, a);
        }
        self.out.push(')');
    }
}

fn value_shape(n: &PairNode, i: u32) -> String {
    let mut c = Canon {
        anonymous: true,
        ..Default::default()
    };
    for (side, s) in n.sides.iter().enumerate() {
        if let Side::Live(cfg) = s {
            c.expr(side, &cfg.gamma[&i]);
        }
        c.out.push('|');
    }
    c.out
}

fn key_with_order(n: &PairNode, order: &[u32]) -> String {
    let mut c = Canon::default();
    for (pos, i) in order.iter().enumerate() {
        c.idx.insert(*i, pos);
    }
    for (side, s) in n.sides.iter().enumerate() {
        let Side::Live(cfg) = s else {
            c.out.push_str("BOT;");
            continue;
        };
        c.out.push_str("G[");
        for i in order {
            c.expr(side, &cfg.gamma[i]);
            c.out.push(',');
        }
        c.out.push_str("]K[");
        for k in &cfg.stack {
            let _ = write!(c.out, "{}:", k.ty);
            c.expr(side, &k.ctx.plug(Expr::Var(HOLE_MARK.into())));
            c.out.push(',');
        }
        c.out.push(']');
        if let Some(e) = &cfg.expr {
            c.out.push_str("E[");
            c.expr(side, e);
            c.out.push(']');
        }
        c.out.push(';');
    }
    for (side, s) in n.sides.iter().enumerate() {
        let Side::Live(cfg) = s else { continue };
        c.out.push_str("S[");
        let mut k = 0;
        while k < c.loc_order[side].len() {
            let l = c.loc_order[side][k].clone();
            let _ = write!(c.out, "l{k}=");
            match cfg.store.get(&l) {
                Some(v) => c.expr(side, v),
                None => c.out.push('?'),
            }
            c.out.push(',');
            k += 1;
        }
        c.out.push(']');
    }
    c.out.push_str("C[");
    for r in &n.calls {
        match c.idx.get(&r.index) {
            Some(p) => {
                let _ = write!(c.out, "{p}");
            }
            None => c.out.push('x'),
        }
        let _ = write!(c.out, "@{}{},", r.depth, if r.flagged { "!" } else { "" });
    }
    c.out.push_str("]P[");
    let (norm, _) = normalize_with_map(&n.sigma, &c.sym_order);
    let mut atoms: Vec<String> = norm.atoms.iter().map(|a| a.to_string()).collect();
    atoms.sort();
    c.out.push_str(&atoms.join(" & "));
    c.out.push(']');
    c.out
}

/// Largest number of index orderings tried when shapes tie.
const MAX_TIE_ORDERS: usize = 24;

/// Serialisation of a node that is invariant under renaming of locations
/// (per side), abstract names, symbolic constants and Γ indices, after
/// garbage collection and σ-normalisation.
pub fn canonical_key(n: &PairNode) -> String {
    let n = gc_node(n);
    let mut shaped: Vec<(String, u32)> = n
        .indices()
        .into_iter()
        .map(|i| (value_shape(&n, i), i))
        .collect();
    shaped.sort();
    let mut groups: Vec<Vec<u32>> = vec![];
    for (k, (shape, i)) in shaped.iter().enumerate() {
        if k > 0 && shaped[k - 1].0 == *shape {
            groups.last_mut().unwrap().push(*i);
        } else {
            groups.push(vec![*i]);
        }
    }
    let orders = tie_orders(&groups);
    orders
        .iter()
        .map(|o| key_with_order(&n, o))
        .min()
        .unwrap_or_default()
}

fn permutations(xs: &[u32]) -> Vec<Vec<u32>> {
    if xs.len() <= 1 {
        return vec![xs.to_vec()];
    }
    let mut out = vec![];
    for k in 0..xs.len() {
        let mut rest = xs.to_vec();
        let x = rest.remove(k);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

fn tie_orders(groups: &[Vec<u32>]) -> Vec<Vec<u32>> {
    let mut count = 1usize;
    for g in groups {
        count = count.saturating_mul((1..=g.len()).product::<usize>());
    }
    if count > MAX_TIE_ORDERS {
        return vec![groups.concat()];
    }
    let mut orders: Vec<Vec<u32>> = vec![vec![]];
    for g in groups {
        let perms = permutations(g);
        let mut next = vec![];
        for o in &orders {
            for p in &perms {
                let mut o2 = o.clone();
                o2.extend(p);
                next.push(o2);
            }
        }
        orders = next;
    }
    orders
}

/// Short stable digest of a key for diagnostics.
pub fn key_digest(key: &str) -> String {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    key.hash(&mut h);
    format!("{:016x}", h.finish())
}

// ---------------------------------------------------------------------------
// Re-entry

pub fn snapshot(n: &PairNode) -> Snapshot {
    let side = |s: &Side| s.live().map(|c| (c.gamma.clone(), c.store.clone()));
    Snapshot {
        sides: [side(&n.sides[0]), side(&n.sides[1])],
        sigma: n.sigma.clone(),
    }
}

/// Did the call that produced `snap` leave Γ and the reachable store as it
/// found them (up to renaming and garbage)? Γ may only have shrunk.
pub fn reentry_unchanged(snap: &Snapshot, n: &PairNode) -> bool {
    let dom: BTreeSet<u32> = n.indices().into_iter().collect();
    let mut before = n.clone();
    let mut after = n.clone();
    before.sigma = snap.sigma.clone();
    before.calls.clear();
    after.calls.clear();
    for side in 0..2 {
        match (
            &snap.sides[side],
            &mut before.sides[side],
            &mut after.sides[side],
        ) {
            (Some((g, s)), Side::Live(b), Side::Live(a)) => {
                if !dom.iter().all(|i| g.contains_key(i)) {
                    return false;
                }
                b.gamma = g
                    .iter()
                    .filter(|(i, _)| dom.contains(i))
                    .map(|(i, v)| (*i, v.clone()))
                    .collect();
                b.store = s.clone();
                b.stack.clear();
                b.expr = None;
                a.stack.clear();
                a.expr = None;
            }
            (None, Side::Bottom, Side::Bottom) => {}
            _ => return false,
        }
    }
    canonical_key(&before) == canonical_key(&after)
}

// ---------------------------------------------------------------------------
// State invariants

/// Translate an annotation formula to a solver term.
pub fn formula_term(e: &Expr, names: &[String], fill: &[SymExpr]) -> Option<SymExpr> {
    match e {
        Expr::Const(c) => Some(SymExpr::Const(c.clone())),
        Expr::Var(x) => names.iter().position(|n| n == x).map(|i| fill[i].clone()),
        Expr::Op(op, es) => {
            let args = es
                .iter()
                .map(|a| formula_term(a, names, fill))
                .collect::<Option<Vec<_>>>()?;
            Some(SymExpr::Op(*op, args))
        }
        _ => None,
    }
}

fn match_pat(p: &APat, v: &Expr, binds: &mut [Option<Expr>]) -> Result<(), String> {
    match (p, v) {
        (APat::Name(j), Expr::Const(_) | Expr::Sym(..)) => match &binds[*j] {
            Some(w) if w != v => Err(format!("conflicting values {w} and {v} for one name")),
            _ => {
                binds[*j] = Some(v.clone());
                Ok(())
            }
        },
        (APat::Const(c), Expr::Const(d)) if c == d => Ok(()),
        (APat::Tuple(ps), Expr::Tuple(vs)) if ps.len() == vs.len() => ps
            .iter()
            .zip(vs)
            .try_for_each(|(q, w)| match_pat(q, w, binds)),
        _ => Err(format!("value {v} does not fit the pattern")),
    }
}

fn instantiate(p: &APat, vals: &[Expr]) -> Expr {
    match p {
        APat::Name(j) => vals[*j].clone(),
        APat::Const(c) => Expr::Const(c.clone()),
        APat::Tuple(ps) => Expr::Tuple(ps.iter().map(|q| instantiate(q, vals)).collect()),
    }
}

/// Result of a successful invariant application.
#[derive(Debug)]
pub struct Applied {
    pub node: PairNode,
    /// Store contents were replaced by symbolic ones.
    pub abstracted: bool,
}

/// Match annotated locations against their patterns, check the formula
/// under σ (tautology) and, if it holds, replace the matched contents by
/// symbolic constants constrained only by the formula (abstraction).
/// Annotations of the two sides share names by position.
pub fn apply_invariant(
    n: &PairNode,
    annots: &[Option<Annotation>; 2],
    solver: &mut Solver,
    fresh: &Fresh,
) -> Result<Applied, String> {
    let width = annots
        .iter()
        .flatten()
        .map(|a| a.names.len())
        .max()
        .unwrap_or(0);
    let mut types: Vec<Option<Type>> = vec![None; width];
    for a in annots.iter().flatten() {
        for (j, t) in a.name_types.iter().enumerate() {
            match &types[j] {
                Some(u) if u != t => return Err(format!("name {j} has types {u} and {t}")),
                _ => types[j] = Some(t.clone()),
            }
        }
    }
    let mut binds: Vec<Option<Expr>> = vec![None; width];
    for (side, a) in annots.iter().enumerate() {
        let (Some(a), Side::Live(c)) = (a, &n.sides[side]) else {
            continue;
        };
        for (l, p) in &a.locs {
            let v = c
                .store
                .get(l)
                .ok_or_else(|| format!("location {l} is not allocated"))?;
            match_pat(p, v, &mut binds)?;
        }
    }
    let has_locs = annots.iter().flatten().any(|a| !a.locs.is_empty());
    let mut sigma = n.sigma.clone();
    // names no location determines range over all values
    let fillers: Vec<Expr> = binds
        .iter()
        .zip(&types)
        .map(|(b, t)| {
            b.clone().unwrap_or_else(|| {
                let k = fresh.sym();
                let t = t.clone().unwrap_or(Type::Int);
                sigma.declare(k, t.clone());
                Expr::Sym(k, t)
            })
        })
        .collect();
    let phi = |vals: &[Expr]| -> Result<SymExpr, String> {
        let fill: Vec<SymExpr> = vals
            .iter()
            .map(|v| SymExpr::from_value(v).expect("base filler"))
            .collect();
        let mut terms = vec![];
        for a in annots.iter().flatten() {
            let t = formula_term(&a.formula, &a.names, &fill[..a.names.len()])
                .ok_or_else(|| "formula is not first-order".to_string())?;
            terms.push(t);
        }
        Ok(terms
            .into_iter()
            .reduce(|x, y| SymExpr::Op(crate::lang::Op::And, vec![x, y]))
            .unwrap_or_else(SymExpr::tt))
    };
    let check = phi(&fillers)?;
    if check != SymExpr::tt() {
        match solver.entails(&sigma, &check) {
            Some(true) => {}
            Some(false) => return Err("the invariant does not hold here".into()),
            None => return Err("the solver could not decide the invariant".into()),
        }
    }
    if !has_locs {
        return Ok(Applied {
            node: n.clone(),
            abstracted: false,
        });
    }
    let mut abstract_vals = vec![];
    for (j, v) in fillers.iter().enumerate() {
        let t = types[j].clone().unwrap_or(Type::Int);
        match v {
            Expr::Sym(k, _) if binds[j].is_some() => {
                sigma.forget(*k);
                abstract_vals.push(v.clone());
            }
            Expr::Sym(..) => abstract_vals.push(v.clone()),
            _ => {
                let k = fresh.sym();
                sigma.declare(k, t.clone());
                abstract_vals.push(Expr::Sym(k, t));
            }
        }
    }
    let inv = phi(&abstract_vals)?;
    if inv != SymExpr::tt() {
        sigma.push(Atom::holds(inv));
    }
    let mut out = n.clone();
    out.sigma = sigma;
    for (side, a) in annots.iter().enumerate() {
        let (Some(a), Side::Live(c)) = (a, &mut out.sides[side]) else {
            continue;
        };
        for (l, p) in &a.locs {
            c.store.insert(l.clone(), instantiate(p, &abstract_vals));
        }
    }
    Ok(Applied {
        node: out,
        abstracted: true,
    })
}

/// Constants are kept out of store patterns only as leaves; expose the
/// matcher for tests.
pub fn match_location(p: &APat, v: &Expr, width: usize) -> Result<Vec<Option<Expr>>, String> {
    let mut b = vec![None; width];
    match_pat(p, v, &mut b)?;
    Ok(b)
}

/// Helper for tests and tools: a unit constant.
pub fn unit() -> Expr {
    Expr::Const(Const::Unit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::Op;

    fn cfg() -> LiveConfig {
        let mut c = LiveConfig::initial(Expr::unit());
        c.expr = None;
        c
    }

    fn node(l: LiveConfig, r: LiveConfig) -> PairNode {
        PairNode {
            sigma: SymbolicEnv::new(),
            sides: [Side::Live(l), Side::Live(r)],
            calls: vec![],
        }
    }

    fn lam(body: Expr) -> Expr {
        Expr::lambda("x", Type::Int, Type::Int, body)
    }

    #[test]
    fn gc_drops_unreachable() {
        let mut c = cfg();
        c.gamma.insert(0, lam(Expr::int(0)));
        c.next_index = 1;
        c.store.insert(Loc::Addr(0), Expr::int(5));
        c.abs.insert(AbsName(0), Type::arrow(Type::Int, Type::Int));
        let g = gc(&c);
        assert!(g.store.is_empty() && g.abs.is_empty());
        assert_eq!(gc(&g), g);
        let mut d = cfg();
        d.gamma.insert(0, lam(Expr::Deref(Loc::Addr(0))));
        d.store.insert(Loc::Addr(0), Expr::int(5));
        assert_eq!(gc(&d), d);
    }

    #[test]
    fn key_ignores_index_and_location_names() {
        let mut a = cfg();
        a.gamma.insert(0, lam(Expr::Deref(Loc::Addr(3))));
        a.gamma.insert(1, lam(Expr::int(1)));
        a.store.insert(Loc::Addr(3), Expr::int(0));
        let mut b = cfg();
        b.gamma.insert(1, lam(Expr::Deref(Loc::Addr(9))));
        b.gamma.insert(0, lam(Expr::int(1)));
        b.store.insert(Loc::Addr(9), Expr::int(0));
        assert_eq!(
            canonical_key(&node(a.clone(), a.clone())),
            canonical_key(&node(b.clone(), b))
        );
        let mut c = a.clone();
        c.store.insert(Loc::Addr(3), Expr::int(1));
        assert_ne!(
            canonical_key(&node(a.clone(), a.clone())),
            canonical_key(&node(c.clone(), c))
        );
    }

    #[test]
    fn separation_splits_disjoint_footprints() {
        let mut l = cfg();
        l.gamma.insert(0, lam(Expr::Deref(Loc::Addr(0))));
        l.gamma.insert(1, lam(Expr::Deref(Loc::Addr(1))));
        l.store.insert(Loc::Addr(0), Expr::int(0));
        l.store.insert(Loc::Addr(1), Expr::int(0));
        let mut r = l.clone();
        assert_eq!(separate(&node(l.clone(), r.clone())).len(), 2);
        // sharing a location on one side joins the items
        r.gamma.insert(1, lam(Expr::Deref(Loc::Addr(0))));
        assert_eq!(separate(&node(l, r)).len(), 1);
    }

    #[test]
    fn dedup_contracts_repeats() {
        let mut c = cfg();
        c.gamma.insert(0, lam(Expr::int(0)));
        c.gamma.insert(1, lam(Expr::int(0)));
        let (n, ren) = dedup(&node(c.clone(), c));
        assert_eq!(ren, vec![(1, 0)]);
        assert_eq!(n.indices(), vec![0]);
    }

    #[test]
    fn invariant_abstracts_concrete_value() {
        // {w | x as w | w mod 2 == 0} with x = 0
        let x = Loc::Addr(0);
        let formula = Expr::op(
            Op::Eq,
            vec![
                Expr::op(Op::Mod, vec![Expr::var("w"), Expr::int(2)]),
                Expr::int(0),
            ],
        );
        let an = Annotation {
            names: vec!["w".into()],
            name_types: vec![Type::Int],
            locs: vec![(x.clone(), APat::Name(0))],
            formula,
        };
        let mut l = cfg();
        l.store.insert(x.clone(), Expr::int(0));
        let n = node(l, cfg());
        let mut solver = Solver::new("");
        let fresh = Fresh::new();
        let out = apply_invariant(&n, &[Some(an.clone()), None], &mut solver, &fresh).unwrap();
        assert!(out.abstracted);
        let Side::Live(c) = &out.node.sides[0] else {
            panic!()
        };
        assert!(matches!(c.store[&x], Expr::Sym(..)));
        assert_eq!(out.node.sigma.atoms.len(), 1);
        // x = 1 violates the invariant
        let mut l = cfg();
        l.store.insert(x, Expr::int(1));
        assert!(apply_invariant(&node(l, cfg()), &[Some(an), None], &mut solver, &fresh).is_err());
    }
}
