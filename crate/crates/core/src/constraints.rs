//! Symbolic environments and the solver client.
//!
//! A symbolic environment is a conjunction of (dis)equalities over symbolic
//! constants. Satisfiability is first attempted by forward propagation of
//! defining equalities; anything left open goes to an external SMT-LIB v2
//! solver spoken to over a pipe with incremental push/pop.

use crate::lang::{Const, Expr, Op, SymId, Type};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

/// First-order term over constants and symbolic constants.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SymExpr {
    Const(Const),
    Sym(SymId),
    Op(Op, Vec<SymExpr>),
}

impl SymExpr {
    pub fn tt() -> SymExpr {
        SymExpr::Const(Const::Bool(true))
    }

    /// Convert a base value (`Const` or `Sym`) to a term.
    pub fn from_value(e: &Expr) -> Option<SymExpr> {
        match e {
            Expr::Const(c) => Some(SymExpr::Const(c.clone())),
            Expr::Sym(k, _) => Some(SymExpr::Sym(*k)),
            _ => None,
        }
    }

    pub fn syms(&self, out: &mut Vec<SymId>) {
        match self {
            SymExpr::Const(_) => {}
            SymExpr::Sym(k) => {
                if !out.contains(k) {
                    out.push(*k)
                }
            }
            SymExpr::Op(_, args) => args.iter().for_each(|a| a.syms(out)),
        }
    }

    pub fn mentions(&self, k: SymId) -> bool {
        match self {
            SymExpr::Const(_) => false,
            SymExpr::Sym(j) => *j == k,
            SymExpr::Op(_, args) => args.iter().any(|a| a.mentions(k)),
        }
    }

    pub fn eval(&self, m: &BTreeMap<SymId, Const>) -> Option<Const> {
        match self {
            SymExpr::Const(c) => Some(c.clone()),
            SymExpr::Sym(k) => m.get(k).cloned(),
            SymExpr::Op(op, args) => {
                let vals = args.iter().map(|a| a.eval(m)).collect::<Option<Vec<_>>>()?;
                op.eval(&vals)
            }
        }
    }

    /// Replace `k` by `by`.
    pub fn subst(&self, k: SymId, by: &SymExpr) -> SymExpr {
        match self {
            SymExpr::Sym(j) if *j == k => by.clone(),
            SymExpr::Const(_) | SymExpr::Sym(_) => self.clone(),
            SymExpr::Op(op, args) => {
                SymExpr::Op(*op, args.iter().map(|a| a.subst(k, by)).collect())
            }
        }
    }

    pub fn rename(&self, map: &dyn Fn(SymId) -> SymId) -> SymExpr {
        match self {
            SymExpr::Const(c) => SymExpr::Const(c.clone()),
            SymExpr::Sym(k) => SymExpr::Sym(map(*k)),
            SymExpr::Op(op, args) => SymExpr::Op(*op, args.iter().map(|a| a.rename(map)).collect()),
        }
    }

    fn is_nonlinear(&self) -> bool {
        match self {
            SymExpr::Const(_) | SymExpr::Sym(_) => false,
            SymExpr::Op(op, args) => {
                let has_sym = |a: &SymExpr| {
                    let mut v = vec![];
                    a.syms(&mut v);
                    !v.is_empty()
                };
                let here = match op {
                    Op::Mul => args.iter().filter(|a| has_sym(a)).count() > 1,
                    Op::Div | Op::Mod => has_sym(&args[1]),
                    _ => false,
                };
                here || args.iter().any(SymExpr::is_nonlinear)
            }
        }
    }

    fn write_smt(&self, out: &mut String, name: &dyn Fn(SymId) -> String) {
        match self {
            SymExpr::Const(Const::Int(i)) => {
                if i.sign() == num_bigint::Sign::Minus {
                    out.push_str(&format!("(- {})", -i));
                } else {
                    out.push_str(&i.to_string());
                }
            }
            SymExpr::Const(Const::Bool(b)) => out.push_str(if *b { "true" } else { "false" }),
            // unit never reaches the solver: unit equalities are decided concretely
            SymExpr::Const(Const::Unit) => out.push_str("true"),
            SymExpr::Sym(k) => out.push_str(&name(*k)),
            SymExpr::Op(op, args) => {
                let head = match op {
                    Op::Add => "+",
                    Op::Sub | Op::Neg => "-",
                    Op::Mul => "*",
                    Op::Div => "div",
                    Op::Mod => "mod",
                    Op::Eq => "=",
                    Op::Neq => {
                        out.push_str("(not (= ");
                        args[0].write_smt(out, name);
                        out.push(' ');
                        args[1].write_smt(out, name);
                        out.push_str("))");
                        return;
                    }
                    Op::Lt => "<",
                    Op::Le => "<=",
                    Op::Gt => ">",
                    Op::Ge => ">=",
                    Op::And => "and",
                    Op::Or => "or",
                    Op::Not => "not",
                };
                out.push('(');
                out.push_str(head);
                for a in args {
                    out.push(' ');
                    a.write_smt(out, name);
                }
                out.push(')');
            }
        }
    }
}

impl fmt::Display for SymExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymExpr::Const(c) => write!(f, "{c}"),
            SymExpr::Sym(k) => write!(f, "{k}"),
            SymExpr::Op(op, args) => match args.as_slice() {
                [a] => write!(f, "({} {a})", op.symbol()),
                [a, b] => write!(f, "({a} {} {b})", op.symbol()),
                _ => write!(f, "(?)"),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rel {
    Eq,
    Neq,
}

/// One conjunct `lhs ⋈ rhs`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub rel: Rel,
    pub lhs: SymExpr,
    pub rhs: SymExpr,
}

impl Atom {
    pub fn eq(lhs: SymExpr, rhs: SymExpr) -> Atom {
        Atom {
            rel: Rel::Eq,
            lhs,
            rhs,
        }
    }
    pub fn neq(lhs: SymExpr, rhs: SymExpr) -> Atom {
        Atom {
            rel: Rel::Neq,
            lhs,
            rhs,
        }
    }
    /// The boolean term `phi` holds.
    pub fn holds(phi: SymExpr) -> Atom {
        Atom::eq(phi, SymExpr::tt())
    }

    pub fn syms(&self, out: &mut Vec<SymId>) {
        self.lhs.syms(out);
        self.rhs.syms(out);
    }

    pub fn mentions(&self, k: SymId) -> bool {
        self.lhs.mentions(k) || self.rhs.mentions(k)
    }

    pub fn eval(&self, m: &BTreeMap<SymId, Const>) -> Option<bool> {
        let a = self.lhs.eval(m)?;
        let b = self.rhs.eval(m)?;
        Some(match self.rel {
            Rel::Eq => a == b,
            Rel::Neq => a != b,
        })
    }

    pub fn rename(&self, map: &dyn Fn(SymId) -> SymId) -> Atom {
        Atom {
            rel: self.rel,
            lhs: self.lhs.rename(map),
            rhs: self.rhs.rename(map),
        }
    }

    fn write_smt(&self, out: &mut String, name: &dyn Fn(SymId) -> String) {
        let mut body = String::new();
        body.push_str("(= ");
        self.lhs.write_smt(&mut body, name);
        body.push(' ');
        self.rhs.write_smt(&mut body, name);
        body.push(')');
        match self.rel {
            Rel::Eq => out.push_str(&body),
            Rel::Neq => {
                out.push_str("(not ");
                out.push_str(&body);
                out.push(')');
            }
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = match self.rel {
            Rel::Eq => "=",
            Rel::Neq => "<>",
        };
        write!(f, "{} {r} {}", self.lhs, self.rhs)
    }
}

/// Assignment of constants to symbolic constants.
pub type Assignment = BTreeMap<SymId, Const>;

/// The symbolic environment σ: declared constants and an ordered conjunction.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SymbolicEnv {
    pub decls: BTreeMap<SymId, Type>,
    pub atoms: Vec<Atom>,
}

impl SymbolicEnv {
    pub fn new() -> SymbolicEnv {
        SymbolicEnv::default()
    }

    pub fn declare(&mut self, k: SymId, ty: Type) {
        self.decls.insert(k, ty);
    }

    pub fn push(&mut self, a: Atom) {
        if !self.atoms.contains(&a) {
            self.atoms.push(a);
        }
    }

    pub fn with(&self, a: Atom) -> SymbolicEnv {
        let mut s = self.clone();
        s.push(a);
        s
    }

    /// Conjoin another environment (typically a sibling extension of a
    /// common prefix).
    pub fn conj(&self, other: &SymbolicEnv) -> SymbolicEnv {
        let mut s = self.clone();
        for (k, t) in &other.decls {
            s.decls.insert(*k, t.clone());
        }
        for a in &other.atoms {
            s.push(a.clone());
        }
        s
    }

    pub fn is_top(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Drop every atom mentioning `k`. This only weakens σ.
    pub fn forget(&mut self, k: SymId) {
        self.atoms.retain(|a| !a.mentions(k));
    }

    /// Does the assignment satisfy every atom?
    pub fn satisfied_by(&self, m: &Assignment) -> bool {
        self.atoms.iter().all(|a| a.eval(m) == Some(true))
    }

    /// Symbolic constants mentioned by atoms, in order of first occurrence.
    pub fn atom_syms(&self) -> Vec<SymId> {
        let mut out = vec![];
        for a in &self.atoms {
            a.syms(&mut out);
        }
        out
    }
}

impl fmt::Display for SymbolicEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.atoms.is_empty() {
            return write!(f, "true");
        }
        for (k, a) in self.atoms.iter().enumerate() {
            if k > 0 {
                write!(f, " /\\ ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

/// Restrict σ to the atoms reachable from `live` through shared constants and
/// rename canonically: `live` first, in the given order, then the remaining
/// constants by first occurrence. Ground atoms are dropped when true and kept
/// when false. Returns the renaming alongside the result.
pub fn normalize_with_map(
    sigma: &SymbolicEnv,
    live: &[SymId],
) -> (SymbolicEnv, BTreeMap<SymId, SymId>) {
    let eliminated = eliminate_definitions(sigma, live);
    let sigma = &eliminated;
    let mut reach: BTreeSet<SymId> = live.iter().copied().collect();
    let mut keep = vec![false; sigma.atoms.len()];
    loop {
        let mut changed = false;
        for (i, a) in sigma.atoms.iter().enumerate() {
            if keep[i] {
                continue;
            }
            let mut ks = vec![];
            a.syms(&mut ks);
            let hit = if ks.is_empty() {
                a.eval(&Assignment::new()) != Some(true)
            } else {
                ks.iter().any(|k| reach.contains(k))
            };
            if hit {
                keep[i] = true;
                changed = true;
                reach.extend(ks);
            }
        }
        if !changed {
            break;
        }
    }
    let mut map = BTreeMap::new();
    let mut next = 0u32;
    let mut assign = |k: SymId, map: &mut BTreeMap<SymId, SymId>| {
        if let std::collections::btree_map::Entry::Vacant(v) = map.entry(k) {
            v.insert(SymId(next));
            next += 1;
        }
    };
    for k in live {
        assign(*k, &mut map);
    }
    for (i, a) in sigma.atoms.iter().enumerate() {
        if keep[i] {
            let mut ks = vec![];
            a.syms(&mut ks);
            for k in ks {
                assign(k, &mut map);
            }
        }
    }
    let mut out = SymbolicEnv::new();
    for (old, new) in &map {
        let ty = sigma.decls.get(old).cloned().unwrap_or(Type::Int);
        out.declare(*new, ty);
    }
    let m = |k: SymId| map.get(&k).copied().unwrap_or(k);
    for (i, a) in sigma.atoms.iter().enumerate() {
        if keep[i] {
            out.push(a.rename(&m));
        }
    }
    (out, map)
}

/// Substitute away constants outside `live` that have a defining equality
/// `k = e`, and drop atoms that became trivially true. The models restricted
/// to `live` are unchanged.
pub fn eliminate_definitions(sigma: &SymbolicEnv, live: &[SymId]) -> SymbolicEnv {
    let mut atoms = sigma.atoms.clone();
    loop {
        let found = atoms.iter().enumerate().find_map(|(i, a)| {
            if a.rel != Rel::Eq {
                return None;
            }
            [(&a.lhs, &a.rhs), (&a.rhs, &a.lhs)]
                .into_iter()
                .find_map(|(x, y)| match x {
                    SymExpr::Sym(k) if !live.contains(k) && !y.mentions(*k) => {
                        Some((i, *k, y.clone()))
                    }
                    _ => None,
                })
        });
        let Some((i, k, by)) = found else { break };
        atoms.remove(i);
        for b in atoms.iter_mut() {
            *b = Atom {
                rel: b.rel,
                lhs: b.lhs.subst(k, &by),
                rhs: b.rhs.subst(k, &by),
            };
        }
    }
    let mut out = SymbolicEnv {
        decls: sigma.decls.clone(),
        atoms: vec![],
    };
    for a in atoms {
        if a.rel == Rel::Eq && a.lhs == a.rhs {
            continue;
        }
        out.push(a);
    }
    out
}

/// See [`normalize_with_map`].
pub fn normalize(sigma: &SymbolicEnv, live: &[SymId]) -> SymbolicEnv {
    normalize_with_map(sigma, live).0
}

/// Outcome of a satisfiability query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SatResult {
    Sat(Option<Assignment>),
    Unsat,
    Unknown(String),
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }
}

/// Counters for solver usage.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SolverStats {
    /// Every call to [`Solver::sat`].
    pub queries: u64,
    /// Queries that reached the external process.
    pub backend_calls: u64,
    pub cache_hits: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("failed to start solver `{cmd}`: {source}")]
    Spawn { cmd: String, source: std::io::Error },
    #[error("solver i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("solver protocol: {0}")]
    Protocol(String),
}

#[derive(Clone, Debug)]
enum Cached {
    Sat(Vec<Option<Const>>),
    Unsat,
    Unknown(String),
}

struct Process {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

impl Process {
    fn spawn(cmd: &[String], logic: &str) -> Result<Process, SolverError> {
        let mut child = Command::new(&cmd[0])
            .args(&cmd[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|source| SolverError::Spawn {
                cmd: cmd.join(" "),
                source,
            })?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut p = Process {
            child,
            stdin,
            stdout,
        };
        let mut preamble = String::from("(set-option :produce-models true)\n");
        let is_z3 = std::path::Path::new(&cmd[0])
            .file_name()
            .map(|n| n == "z3")
            .unwrap_or(false);
        if is_z3 {
            preamble.push_str("(set-option :timeout 20000)\n");
        }
        preamble.push_str(&format!("(set-logic {logic})\n"));
        p.stdin.write_all(preamble.as_bytes())?;
        p.stdin.flush()?;
        Ok(p)
    }

    /// Send one query and read `sat`/`unsat`/`unknown`, then the model.
    fn query(&mut self, text: &str) -> Result<(String, Option<Sexp>, Option<String>), SolverError> {
        self.stdin.write_all(b"(push 1)\n")?;
        self.stdin.write_all(text.as_bytes())?;
        self.stdin.write_all(b"(check-sat)\n")?;
        self.stdin.flush()?;
        let mut error = None;
        let answer = loop {
            let line = self.read_form()?;
            let t = line.trim();
            if t.starts_with("(error") {
                error = Some(t.to_string());
                continue;
            }
            if t == "sat" || t == "unsat" || t == "unknown" {
                break t.to_string();
            }
            if t.is_empty() {
                continue;
            }
            error = Some(format!("unexpected solver output: {t}"));
        };
        let mut model = None;
        if answer == "sat" && error.is_none() {
            self.stdin.write_all(b"(get-model)\n")?;
            self.stdin.flush()?;
            let text = self.read_form()?;
            model = Some(parse_sexp(&text).map_err(SolverError::Protocol)?);
        }
        self.stdin.write_all(b"(pop 1)\n")?;
        self.stdin.flush()?;
        Ok((answer, model, error))
    }

    /// Read one complete response: a bare word or a balanced s-expression.
    fn read_form(&mut self) -> Result<String, SolverError> {
        let mut acc = String::new();
        let mut depth: i64 = 0;
        loop {
            let mut line = String::new();
            let n = self.stdout.read_line(&mut line)?;
            if n == 0 {
                return Err(SolverError::Protocol("solver closed its output".into()));
            }
            let mut in_str = false;
            for ch in line.chars() {
                match ch {
                    '"' => in_str = !in_str,
                    '(' if !in_str => depth += 1,
                    ')' if !in_str => depth -= 1,
                    _ => {}
                }
            }
            acc.push_str(&line);
            if depth <= 0 && !acc.trim().is_empty() {
                return Ok(acc);
            }
        }
    }
}

impl Drop for Process {
    fn drop(&mut self) {
        let _ = self.stdin.write_all(b"(exit)\n");
        let _ = self.stdin.flush();
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Minimal s-expression for reading models.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

/// Parse a single s-expression.
pub fn parse_sexp(text: &str) -> Result<Sexp, String> {
    let mut toks = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            '(' | ')' => {
                toks.push(c.to_string());
                chars.next();
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            '"' | '|' => {
                let close = c;
                let mut s = String::new();
                s.push(c);
                chars.next();
                for d in chars.by_ref() {
                    s.push(d);
                    if d == close {
                        break;
                    }
                }
                toks.push(s);
            }
            _ => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if d == '(' || d == ')' || d.is_whitespace() {
                        break;
                    }
                    s.push(d);
                    chars.next();
                }
                toks.push(s);
            }
        }
    }
    let mut pos = 0;
    let e = read_sexp(&toks, &mut pos)?;
    Ok(e)
}

fn read_sexp(toks: &[String], pos: &mut usize) -> Result<Sexp, String> {
    let t = toks.get(*pos).ok_or("unexpected end of s-expression")?;
    *pos += 1;
    match t.as_str() {
        "(" => {
            let mut items = vec![];
            loop {
                match toks.get(*pos).map(String::as_str) {
                    Some(")") => {
                        *pos += 1;
                        return Ok(Sexp::List(items));
                    }
                    Some(_) => items.push(read_sexp(toks, pos)?),
                    None => return Err("unbalanced s-expression".into()),
                }
            }
        }
        ")" => Err("unexpected `)`".into()),
        _ => Ok(Sexp::Atom(t.clone())),
    }
}

fn sexp_const(e: &Sexp) -> Option<Const> {
    match e {
        Sexp::Atom(a) if a == "true" => Some(Const::Bool(true)),
        Sexp::Atom(a) if a == "false" => Some(Const::Bool(false)),
        Sexp::Atom(a) => a.parse::<num_bigint::BigInt>().ok().map(Const::Int),
        Sexp::List(xs) => match xs.as_slice() {
            [Sexp::Atom(m), inner] if m == "-" => match sexp_const(inner)? {
                Const::Int(i) => Some(Const::Int(-i)),
                _ => None,
            },
            _ => None,
        },
    }
}

/// Collect `(define-fun name () Sort value)` entries from a model.
pub fn model_entries(model: &Sexp) -> Vec<(String, Const)> {
    let mut out = vec![];
    fn go(e: &Sexp, out: &mut Vec<(String, Const)>) {
        if let Sexp::List(xs) = e {
            if let [Sexp::Atom(d), Sexp::Atom(name), Sexp::List(args), _sort, value] = xs.as_slice()
            {
                if d == "define-fun" && args.is_empty() {
                    if let Some(c) = sexp_const(value) {
                        out.push((name.clone(), c));
                    }
                    return;
                }
            }
            for x in xs {
                go(x, out);
            }
        }
    }
    go(model, &mut out);
    out
}

/// Solver front end: fast propagation, a query cache, and lazily started
/// backend processes (one for linear, one for nonlinear arithmetic).
pub struct Solver {
    cmd: Vec<String>,
    linear: Option<Process>,
    nonlinear: Option<Process>,
    broken: Option<String>,
    cache: HashMap<String, Cached>,
    pub stats: SolverStats,
}

impl fmt::Debug for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Solver")
            .field("cmd", &self.cmd)
            .field("stats", &self.stats)
            .finish()
    }
}

/// Default backend command.
pub const DEFAULT_SOLVER: &str = "z3 -in";

impl Solver {
    /// A solver using the given command line, e.g. `z3 -in`. An empty
    /// command disables the backend: open queries answer `Unknown`.
    pub fn new(cmd: &str) -> Solver {
        Solver {
            cmd: cmd.split_whitespace().map(str::to_string).collect(),
            linear: None,
            nonlinear: None,
            broken: None,
            cache: HashMap::new(),
            stats: SolverStats::default(),
        }
    }

    /// Decide σ.
    pub fn sat(&mut self, sigma: &SymbolicEnv) -> SatResult {
        self.stats.queries += 1;
        // forward propagation of defining equalities
        let mut m = Assignment::new();
        loop {
            let mut changed = false;
            for a in &sigma.atoms {
                if a.rel != Rel::Eq {
                    continue;
                }
                for (x, y) in [(&a.lhs, &a.rhs), (&a.rhs, &a.lhs)] {
                    if let SymExpr::Sym(k) = x {
                        if !m.contains_key(k) {
                            if let Some(v) = y.eval(&m) {
                                m.insert(*k, v);
                                changed = true;
                            }
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        for a in &sigma.atoms {
            if a.eval(&m) == Some(false) {
                return SatResult::Unsat;
            }
        }
        let mut full = m.clone();
        for k in sigma.atom_syms() {
            full.entry(k)
                .or_insert_with(|| Const::default_of(sigma.decls.get(&k).unwrap_or(&Type::Int)));
        }
        for (k, t) in &sigma.decls {
            full.entry(*k).or_insert_with(|| Const::default_of(t));
        }
        if sigma.satisfied_by(&full) {
            return SatResult::Sat(Some(full));
        }
        self.backend_sat(sigma)
    }

    fn backend_sat(&mut self, sigma: &SymbolicEnv) -> SatResult {
        let order = sigma.atom_syms();
        let index: HashMap<SymId, usize> = order.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        let name = |k: SymId| format!("k{}", index[&k]);
        let mut text = String::new();
        for k in &order {
            let sort = match sigma.decls.get(k) {
                Some(Type::Bool) => "Bool",
                _ => "Int",
            };
            text.push_str(&format!("(declare-const {} {sort})\n", name(*k)));
        }
        let mut nonlinear = false;
        for a in &sigma.atoms {
            nonlinear |= a.lhs.is_nonlinear() || a.rhs.is_nonlinear();
            text.push_str("(assert ");
            a.write_smt(&mut text, &name);
            text.push_str(")\n");
        }
        let cached = match self.cache.get(&text) {
            Some(c) => {
                self.stats.cache_hits += 1;
                c.clone()
            }
            None => {
                let c = self.run_backend(&text, nonlinear, order.len());
                self.cache.insert(text, c.clone());
                c
            }
        };
        match cached {
            Cached::Unsat => SatResult::Unsat,
            Cached::Unknown(r) => SatResult::Unknown(r),
            Cached::Sat(vals) => {
                let mut m = Assignment::new();
                for (k, v) in order.iter().zip(vals) {
                    if let Some(v) = v {
                        m.insert(*k, v);
                    }
                }
                for (k, t) in &sigma.decls {
                    m.entry(*k).or_insert_with(|| Const::default_of(t));
                }
                if sigma.satisfied_by(&m) {
                    SatResult::Sat(Some(m))
                } else {
                    SatResult::Sat(None)
                }
            }
        }
    }

    fn run_backend(&mut self, text: &str, nonlinear: bool, n: usize) -> Cached {
        if self.cmd.is_empty() {
            return Cached::Unknown("no solver backend configured".into());
        }
        if let Some(r) = &self.broken {
            return Cached::Unknown(r.clone());
        }
        self.stats.backend_calls += 1;
        let slot = if nonlinear {
            &mut self.nonlinear
        } else {
            &mut self.linear
        };
        if slot.is_none() {
            let logic = if nonlinear { "QF_NIA" } else { "QF_LIA" };
            match Process::spawn(&self.cmd, logic) {
                Ok(p) => *slot = Some(p),
                Err(err) => {
                    let r = err.to_string();
                    self.broken = Some(r.clone());
                    return Cached::Unknown(r);
                }
            }
        }
        let proc_ = slot.as_mut().expect("process started");
        match proc_.query(text) {
            Ok((_, _, Some(err))) => Cached::Unknown(err),
            Ok((ans, model, None)) => match ans.as_str() {
                "unsat" => Cached::Unsat,
                "sat" => {
                    let mut vals = vec![None; n];
                    if let Some(model) = model {
                        for (name, c) in model_entries(&model) {
                            if let Some(i) =
                                name.strip_prefix('k').and_then(|s| s.parse::<usize>().ok())
                            {
                                if i < n {
                                    vals[i] = Some(c);
                                }
                            }
                        }
                    }
                    Cached::Sat(vals)
                }
                other => Cached::Unknown(format!("solver answered {other}")),
            },
            Err(err) => {
                *slot = None;
                let r = err.to_string();
                self.broken = Some(r.clone());
                Cached::Unknown(r)
            }
        }
    }

    /// Does σ entail φ? Both σ ∧ φ must be satisfiable and σ ∧ ¬φ not.
    /// `None` when the solver cannot decide.
    pub fn entails(&mut self, sigma: &SymbolicEnv, phi: &SymExpr) -> Option<bool> {
        match self.sat(&sigma.with(Atom::holds(phi.clone()))) {
            SatResult::Unsat => return Some(false),
            SatResult::Unknown(_) => return None,
            SatResult::Sat(_) => {}
        }
        match self.sat(&sigma.with(Atom::eq(phi.clone(), SymExpr::Const(Const::Bool(false))))) {
            SatResult::Unsat => Some(true),
            SatResult::Sat(_) => Some(false),
            SatResult::Unknown(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(i: u32) -> SymExpr {
        SymExpr::Sym(SymId(i))
    }
    fn int(i: i64) -> SymExpr {
        SymExpr::Const(Const::int(i))
    }

    #[test]
    fn normalize_example() {
        let mut s = SymbolicEnv::new();
        for i in 1..=3 {
            s.declare(SymId(i), Type::Int);
        }
        s.push(Atom::eq(k(1), int(5)));
        s.push(Atom::eq(k(2), SymExpr::Op(Op::Add, vec![k(3), int(1)])));
        let n = normalize(&s, &[SymId(2), SymId(3)]);
        assert_eq!(
            n.atoms,
            vec![Atom::eq(k(0), SymExpr::Op(Op::Add, vec![k(1), int(1)]))]
        );
        assert_eq!(normalize(&SymbolicEnv::new(), &[]), SymbolicEnv::new());
    }

    #[test]
    fn fast_path_decides_simple_cases() {
        let mut solver = Solver::new("");
        assert!(solver.sat(&SymbolicEnv::new()).is_sat());
        let mut s = SymbolicEnv::new();
        s.declare(SymId(0), Type::Int);
        s.push(Atom::eq(k(0), int(3)));
        s.push(Atom::neq(k(0), int(3)));
        assert_eq!(solver.sat(&s), SatResult::Unsat);

        let mut s = SymbolicEnv::new();
        s.declare(SymId(0), Type::Int);
        s.push(Atom::eq(k(0), SymExpr::Op(Op::Add, vec![int(1), int(2)])));
        s.push(Atom::holds(SymExpr::Op(Op::Ge, vec![k(0), int(3)])));
        let mut m = Assignment::new();
        m.insert(SymId(0), Const::int(3));
        assert_eq!(solver.sat(&s), SatResult::Sat(Some(m)));
        assert_eq!(solver.stats.backend_calls, 0);
    }

    #[test]
    fn sexp_models() {
        let text = "(\n  (define-fun k1 () Int\n    (- 5))\n  (define-fun k0 () Bool\n    true)\n)";
        let e = parse_sexp(text).unwrap();
        assert_eq!(
            model_entries(&e),
            vec![
                ("k1".to_string(), Const::int(-5)),
                ("k0".to_string(), Const::Bool(true))
            ]
        );
    }
}
