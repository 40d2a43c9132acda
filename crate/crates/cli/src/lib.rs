//! Command-line front end of `brwlab`.
//!
//! [`run`] parses arguments, executes a command on a dedicated thread pool
//! and returns the bytes for stdout and stderr with the exit code, so the
//! binary is a thin wrapper and tests can drive commands in-process.

pub mod args;
pub mod config;
mod exact;
mod simulate;
mod verify;

use std::ffi::OsString;
use std::path::Path;
use std::time::Instant;

use brwlab_core::{Error, Result};
use clap::Parser;
use serde::Serialize;
use serde_json::Value;

use crate::args::{Cli, Command, Opts};
use crate::config::RunConfig;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
}

/// What a command found, before it is wrapped in a report.
#[derive(Debug, Default)]
pub struct Findings {
    pub results: Vec<Value>,
    pub violations: Vec<Value>,
    pub summary: Option<Value>,
}

#[derive(Serialize)]
struct Timing {
    elapsed_ms: f64,
}

#[derive(Serialize)]
struct Report<'a> {
    schema_version: u32,
    command: &'a str,
    config: &'a RunConfig,
    results: &'a [Value],
    #[serde(skip_serializing_if = "Option::is_none")]
    summary: Option<&'a Value>,
    violations: &'a [Value],
    timing: Option<Timing>,
}

fn render(command: &str, cfg: &RunConfig, findings: &Findings, started: Option<Instant>) -> String {
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command,
        config: cfg,
        results: &findings.results,
        summary: findings.summary.as_ref(),
        violations: &findings.violations,
        timing: started.map(|s| Timing {
            elapsed_ms: s.elapsed().as_secs_f64() * 1e3,
        }),
    };
    let mut text = serde_json::to_string_pretty(&report).expect("reports serialize");
    text.push('\n');
    text
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents)
        .map_err(|e| Error::Resource(format!("cannot write {}: {e}", path.display())))
}

fn label<T: clap::ValueEnum>(v: &T) -> String {
    v.to_possible_value()
        .map(|p| p.get_name().to_owned())
        .unwrap_or_default()
}

fn opts_of(command: &Command) -> &Opts {
    match command {
        Command::Verify { opts, .. }
        | Command::Simulate { opts, .. }
        | Command::Exact { opts, .. } => opts,
    }
}

/// Executes a parsed command; returns stdout text and whether a violation
/// was found.
fn execute(command: &Command) -> Result<(String, bool)> {
    let opts = opts_of(command);
    let started = opts.timing.then(Instant::now);
    let mut cfg = RunConfig::from_opts(opts);
    match command {
        Command::Verify { target, .. } => {
            let name = format!("verify {}", label(target));
            let findings = verify::run(*target, opts, &mut cfg)?;
            let text = render(&name, &cfg, &findings, started);
            let violated = !findings.violations.is_empty();
            match &opts.out {
                Some(path) => write_file(path, &text).map(|()| (String::new(), violated)),
                None => Ok((text, violated)),
            }
        }
        Command::Simulate { process, .. } => {
            let name = format!("simulate {}", label(process));
            let out = simulate::run(*process, opts, &mut cfg)?;
            match &opts.out {
                Some(dir) => {
                    std::fs::create_dir_all(dir).map_err(|e| {
                        Error::Resource(format!("cannot create {}: {e}", dir.display()))
                    })?;
                    write_file(&dir.join("trajectories.jsonl"), &out.trajectories)?;
                    write_file(&dir.join("summary.csv"), &out.summary_csv)?;
                    write_file(
                        &dir.join("report.json"),
                        &render(&name, &cfg, &out.findings, started),
                    )?;
                    Ok((String::new(), false))
                }
                None => Ok((out.trajectories, false)),
            }
        }
        Command::Exact { what, .. } => {
            let csv = exact::run(*what, opts)?;
            match &opts.out {
                Some(path) => write_file(path, &csv).map(|()| (String::new(), false)),
                None => Ok((csv, false)),
            }
        }
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Usage(_) => EXIT_USAGE,
        Error::Resource(_) => EXIT_RESOURCE,
        Error::InvariantViolation(_) => EXIT_VIOLATION,
    }
}

/// Runs `brwlab` with the given argument vector (program name first).
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string().into_bytes();
            return if e.use_stderr() {
                Outcome {
                    code: EXIT_USAGE,
                    stdout: Vec::new(),
                    stderr: text,
                }
            } else {
                Outcome {
                    code: EXIT_PASS,
                    stdout: text,
                    stderr: Vec::new(),
                }
            };
        }
    };
    let workers = opts_of(&cli.command).workers;
    if workers == Some(0) {
        return failure(&Error::Usage("--workers must be positive".into()));
    }
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
    {
        Ok(pool) => pool,
        Err(e) => return failure(&Error::Resource(format!("cannot start workers: {e}"))),
    };
    match pool.install(|| execute(&cli.command)) {
        Ok((stdout, violated)) => Outcome {
            code: if violated { EXIT_VIOLATION } else { EXIT_PASS },
            stdout: stdout.into_bytes(),
            stderr: Vec::new(),
        },
        Err(e) => failure(&e),
    }
}

fn failure(err: &Error) -> Outcome {
    Outcome {
        code: exit_code(err),
        stdout: Vec::new(),
        stderr: format!("brwlab: {err}\n").into_bytes(),
    }
}
