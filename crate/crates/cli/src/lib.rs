//! Front end for the checker: running single files, the corpus benchmark
//! with its five technique configurations, and the JSON report format.

use ctxeq_core::engine::{check_equiv, model_entries, Options, Reason, Report, Stats, Verdict};
use ctxeq_core::parser::{parse_header, parse_program_pair, Expect, ParseError};
use serde::Serialize;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
}

/// Exit codes of `check`.
pub const EXIT_EQUIVALENT: i32 = 0;
pub const EXIT_INEQUIVALENT: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_ERROR: i32 = 3;

pub fn exit_code(v: &Verdict) -> i32 {
    match v {
        Verdict::Equivalent => EXIT_EQUIVALENT,
        Verdict::Inequivalent { .. } => EXIT_INEQUIVALENT,
        Verdict::Inconclusive { .. } => EXIT_INCONCLUSIVE,
    }
}

#[derive(Debug)]
pub struct FileResult {
    pub path: PathBuf,
    pub expected: Option<Expect>,
    pub bound: u32,
    pub report: Report,
    pub seconds: f64,
}

/// Check one file. `bound` overrides the header bound when given.
pub fn check_file(path: &Path, opts: &Options, bound: Option<u32>) -> Result<FileResult, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let header = parse_header(&text);
    let pair = parse_program_pair(&text).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    let bound = bound.or(header.bound).unwrap_or(opts.bound);
    let opts = Options {
        bound,
        ..opts.clone()
    };
    let start = Instant::now();
    let report = check_equiv(&pair, &opts);
    Ok(FileResult {
        path: path.to_path_buf(),
        expected: header.expect,
        bound,
        report,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn reasons_json(reasons: &std::collections::BTreeSet<Reason>) -> Value {
    Value::Array(
        reasons
            .iter()
            .map(|r| Value::String(r.to_string()))
            .collect(),
    )
}

pub fn stats_json(s: &Stats) -> Value {
    json!({
        "nodes": s.nodes,
        "memo_hits": s.memo_hits,
        "solver_queries": s.solver_queries,
        "max_depth": s.max_depth,
        "sep_splits": s.sep_splits,
        "reentry_skips": s.reentry_skips,
        "inv_applied": s.inv_applied,
        "inv_failed": s.inv_failed,
        "phases": s.phases,
    })
}

/// The single-object report of `check --json`.
pub fn report_json(r: &Report) -> Value {
    let mut obj = serde_json::Map::new();
    obj.insert("verdict".into(), Value::String(r.verdict.name().into()));
    match &r.verdict {
        Verdict::Inequivalent { trace, model } => {
            let steps = trace
                .0
                .iter()
                .map(|s| json!({"move": s.mv.to_string(), "side": s.side.to_string(), "constraints": s.delta}))
                .collect();
            obj.insert("trace".into(), Value::Array(steps));
            let m = model_entries(model)
                .into_iter()
                .map(|(k, v)| (k, Value::String(v)))
                .collect();
            obj.insert("model".into(), Value::Object(m));
        }
        Verdict::Inconclusive { reasons } => {
            obj.insert("reasons".into(), reasons_json(reasons));
        }
        Verdict::Equivalent => {}
    }
    obj.insert("stats".into(), stats_json(&r.stats));
    Value::Object(obj)
}

/// Check the shape of a `check --json` object.
pub fn validate_report_json(v: &Value) -> Result<(), String> {
    let obj = v.as_object().ok_or("report is not an object")?;
    let verdict = obj
        .get("verdict")
        .and_then(Value::as_str)
        .ok_or("missing verdict")?;
    let stats = obj
        .get("stats")
        .and_then(Value::as_object)
        .ok_or("missing stats")?;
    for k in ["nodes", "memo_hits", "solver_queries", "max_depth"] {
        stats
            .get(k)
            .and_then(Value::as_u64)
            .ok_or(format!("stats.{k} missing"))?;
    }
    match verdict {
        "equivalent" => {
            if obj.contains_key("trace") || obj.contains_key("reasons") {
                return Err("equivalent report with trace or reasons".into());
            }
        }
        "inequivalent" => {
            let trace = obj
                .get("trace")
                .and_then(Value::as_array)
                .ok_or("missing trace")?;
            if trace.is_empty() {
                return Err("empty trace".into());
            }
            for s in trace {
                s.get("move")
                    .and_then(Value::as_str)
                    .ok_or("trace step without move")?;
                s.get("side")
                    .and_then(Value::as_str)
                    .ok_or("trace step without side")?;
                s.get("constraints")
                    .and_then(Value::as_array)
                    .ok_or("trace step without constraints")?;
            }
            obj.get("model")
                .and_then(Value::as_object)
                .ok_or("missing model")?;
        }
        "inconclusive" => {
            let rs = obj
                .get("reasons")
                .and_then(Value::as_array)
                .ok_or("missing reasons")?;
            if rs.is_empty() {
                return Err("inconclusive without reasons".into());
            }
        }
        other => return Err(format!("unknown verdict {other}")),
    }
    Ok(())
}

/// Human-readable report of `check`.
pub fn render_report(r: &Report) -> String {
    let mut out = String::new();
    match &r.verdict {
        Verdict::Equivalent => out.push_str("equivalent\n"),
        Verdict::Inequivalent { trace, model } => {
            out.push_str("inequivalent\nwitness:\n");
            for line in trace.to_string().lines() {
                out.push_str("  ");
                out.push_str(line);
                out.push('\n');
            }
            if !model.is_empty() {
                let m: Vec<String> = model_entries(model)
                    .into_iter()
                    .map(|(k, v)| format!("{k} = {v}"))
                    .collect();
                out.push_str(&format!("model: {}\n", m.join(", ")));
            }
        }
        Verdict::Inconclusive { reasons } => {
            let rs: Vec<String> = reasons.iter().map(Reason::to_string).collect();
            out.push_str(&format!("inconclusive ({})\n", rs.join(", ")));
        }
    }
    let s = &r.stats;
    out.push_str(&format!(
        "nodes {}  memo hits {}  solver queries {}  max depth {}  splits {}  re-entry skips {}  invariants {}/{}\n",
        s.nodes,
        s.memo_hits,
        s.solver_queries,
        s.max_depth,
        s.sep_splits,
        s.reentry_skips,
        s.inv_applied,
        s.inv_applied + s.inv_failed
    ));
    out
}

/// The five technique configurations of the benchmark table.
pub fn bench_configs(base: &Options) -> Vec<(&'static str, Options)> {
    vec![
        ("default", base.clone()),
        (
            "no-sep",
            Options {
                separation: false,
                ..base.clone()
            },
        ),
        (
            "no-annot",
            Options {
                annotations: false,
                reentry: false,
                ..base.clone()
            },
        ),
        (
            "no-reentry",
            Options {
                reentry: false,
                ..base.clone()
            },
        ),
        ("no-upto", base.clone().without_upto()),
    ]
}

/// Corpus files under `dir`, sorted.
pub fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut out = vec![];
    let mut work = vec![dir.to_path_buf()];
    while let Some(d) = work.pop() {
        let entries = std::fs::read_dir(&d).map_err(|source| CliError::Io {
            path: d.clone(),
            source,
        })?;
        for e in entries {
            let p = e
                .map_err(|source| CliError::Io {
                    path: d.clone(),
                    source,
                })?
                .path();
            if p.is_dir() {
                work.push(p);
            } else if p.extension().is_some_and(|x| x == "prog") {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchFile {
    pub path: String,
    pub expected: Option<String>,
    pub verdict: String,
    pub reasons: Vec<String>,
    pub error: Option<String>,
    pub bound: Option<u32>,
    pub nodes: u64,
    pub memo_hits: u64,
    /// A verdict contradicting the expectation.
    pub false_verdict: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchConfig {
    pub name: String,
    pub equivalences: usize,
    pub inequivalences: usize,
    pub seconds: f64,
    pub files: Vec<BenchFile>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub configs: Vec<BenchConfig>,
    pub false_verdicts: usize,
}

fn expect_name(e: Expect) -> &'static str {
    match e {
        Expect::Eq => "eq",
        Expect::Ineq => "ineq",
        Expect::Inconclusive => "inconclusive",
    }
}

fn is_false(expected: Option<Expect>, v: &Verdict) -> bool {
    matches!(
        (expected, v),
        (
            Some(Expect::Eq) | Some(Expect::Inconclusive),
            Verdict::Inequivalent { .. }
        ) | (Some(Expect::Ineq), Verdict::Equivalent)
    )
}

fn bench_file(path: &Path, opts: &Options, bound: Option<u32>) -> BenchFile {
    let shown = path.display().to_string();
    match check_file(path, opts, bound) {
        Ok(r) => {
            let reasons = match &r.report.verdict {
                Verdict::Inconclusive { reasons } => {
                    reasons.iter().map(Reason::to_string).collect()
                }
                _ => vec![],
            };
            BenchFile {
                path: shown,
                expected: r.expected.map(|e| expect_name(e).to_string()),
                verdict: r.report.verdict.name().to_string(),
                reasons,
                error: None,
                bound: Some(r.bound),
                nodes: r.report.stats.nodes,
                memo_hits: r.report.stats.memo_hits,
                false_verdict: is_false(r.expected, &r.report.verdict),
                seconds: r.seconds,
            }
        }
        Err(e) => BenchFile {
            path: shown,
            expected: None,
            verdict: "error".into(),
            reasons: vec![],
            error: Some(e.to_string()),
            bound: None,
            nodes: 0,
            memo_hits: 0,
            false_verdict: false,
            seconds: 0.0,
        },
    }
}

/// Run `f` over `items` on up to `jobs` threads, keeping the input order.
fn par_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.max(1).min(items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                out.lock().expect("result lock")[i] = Some(r);
            });
        }
    });
    out.into_inner()
        .expect("result lock")
        .into_iter()
        .map(|r| r.expect("every item ran"))
        .collect()
}

/// Run the corpus under every configuration.
pub fn bench(
    dir: &Path,
    base: &Options,
    bound: Option<u32>,
    jobs: usize,
) -> Result<BenchReport, CliError> {
    let files = corpus_files(dir)?;
    let mut configs = vec![];
    let mut false_verdicts = 0;
    for (name, opts) in bench_configs(base) {
        let start = Instant::now();
        let results = par_map(&files, jobs, |p| bench_file(p, &opts, bound));
        let seconds = start.elapsed().as_secs_f64();
        false_verdicts += results.iter().filter(|f| f.false_verdict).count();
        configs.push(BenchConfig {
            name: name.to_string(),
            equivalences: results.iter().filter(|f| f.verdict == "equivalent").count(),
            inequivalences: results
                .iter()
                .filter(|f| f.verdict == "inequivalent")
                .count(),
            seconds,
            files: results,
        });
    }
    Ok(BenchReport {
        configs,
        false_verdicts,
    })
}

/// `a | b [c]` per configuration: equivalences proved, inequivalences found
/// and total seconds.
pub fn render_table(r: &BenchReport) -> String {
    let mut out = String::new();
    for c in &r.configs {
        out.push_str(&format!(
            "{:<11} {} | {} [{:.1}s]\n",
            c.name, c.equivalences, c.inequivalences, c.seconds
        ));
    }
    for c in &r.configs {
        for f in c
            .files
            .iter()
            .filter(|f| f.false_verdict || f.error.is_some())
        {
            let what = f
                .error
                .clone()
                .unwrap_or_else(|| format!("expected {:?}, got {}", f.expected, f.verdict));
            out.push_str(&format!("{}: {}: {}\n", c.name, f.path, what));
        }
    }
    out
}

/// The bench report as JSON with every timing field zeroed, for comparing
/// runs.
pub fn untimed_json(r: &BenchReport) -> String {
    let mut r = r.clone();
    for c in r.configs.iter_mut() {
        c.seconds = 0.0;
        for f in c.files.iter_mut() {
            f.seconds = 0.0;
        }
    }
    serde_json::to_string_pretty(&r).expect("serializable report")
}
