use clap::{Args, Parser, Subcommand};
use ctxeq_cli::{
    bench, check_file, exit_code, render_report, render_table, report_json, EXIT_ERROR,
};
use ctxeq_core::engine::Options;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

/// Bounded checker for contextual equivalence of higher-order programs with
/// local state.
#[derive(Parser)]
#[command(name = "ctxeq", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the two programs of a file separated by a `|||` line.
    Check {
        file: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Run every `.prog` file under a directory in the five configurations.
    Bench {
        dir: PathBuf,
        #[command(flatten)]
        flags: Flags,
        /// Files checked in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Args)]
struct Flags {
    /// Function calls per path (default: file header, else 6).
    #[arg(long)]
    bound: Option<u32>,
    /// Seconds per file.
    #[arg(long, default_value_t = 150)]
    timeout: u64,
    #[arg(long)]
    no_sep: bool,
    /// Ignore invariant annotations (also disables re-entry).
    #[arg(long)]
    no_annot: bool,
    #[arg(long)]
    no_reentry: bool,
    /// Disable every up-to technique.
    #[arg(long)]
    no_upto: bool,
    /// SMT solver command line.
    #[arg(long, default_value = ctxeq_core::constraints::DEFAULT_SOLVER)]
    solver: String,
    /// Log each technique application to stderr.
    #[arg(long)]
    explain: bool,
    #[arg(long)]
    json: bool,
}

impl Flags {
    fn options(&self) -> Options {
        let mut o = Options {
            timeout: Duration::from_secs(self.timeout),
            separation: !self.no_sep,
            annotations: !self.no_annot,
            reentry: !self.no_reentry,
            solver_cmd: self.solver.clone(),
            explain: self.explain,
            ..Options::default()
        };
        if self.no_upto {
            o = o.without_upto();
        }
        o.normalized()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Check { file, flags } => {
            let opts = flags.options();
            match check_file(&file, &opts, flags.bound) {
                Ok(r) => {
                    for line in &r.report.explain {
                        eprintln!("{line}");
                    }
                    if flags.json {
                        println!("{}", report_json(&r.report));
                    } else {
                        print!("{}", render_report(&r.report));
                    }
                    ExitCode::from(exit_code(&r.report.verdict) as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_ERROR as u8)
                }
            }
        }
        Cmd::Bench { dir, flags, jobs } => {
            let opts = Options {
                explain: false,
                ..flags.options()
            };
            match bench(&dir, &opts, flags.bound, jobs) {
                Ok(r) => {
                    if flags.json {
                        println!(
                            "{}",
                            serde_json::to_string_pretty(&r).expect("serializable report")
                        );
                    } else {
                        print!("{}", render_table(&r));
                    }
                    if r.false_verdicts > 0 {
                        ExitCode::from(1)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_ERROR as u8)
                }
            }
        }
    }
}
