use std::collections::BTreeMap;
use std::fmt::Write as _;

use brwlab_core::brw_sim::trajectory_jsonl;
use brwlab_core::lattice::build_trapezoid;
use brwlab_core::percolation::simulate_embedded;
use brwlab_core::stats_mc::stream;
use brwlab_core::{ProcessParams, RandomStreamSpec, Result, Simulator, Site};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::args::{Mode, Opts, Process};
use crate::config::{self, required, usage, RunConfig};
use crate::Findings;

/// Files produced by a simulation.
pub struct SimOutput {
    pub trajectories: String,
    pub summary_csv: String,
    pub findings: Findings,
}

pub fn run(process: Process, opts: &Opts, cfg: &mut RunConfig) -> Result<SimOutput> {
    cfg.mode = Some(config::resolve_mode(opts, Mode::Mc, &[Mode::Mc])?);
    let p = config::single_probability(opts)?;
    let reps = opts.reps.unwrap_or(1);
    if reps == 0 {
        return Err(usage("--reps must be positive"));
    }
    cfg.p = vec![p];
    cfg.reps = Some(reps);
    match process {
        Process::Brw => brw(p, reps, opts, cfg),
        Process::Embedded => embedded(p, reps, opts, cfg),
    }
}

/// Per-time totals: `time,reps,mean_total,sd_total,extinct_fraction`.
fn summary_csv(totals: &[Vec<u64>]) -> String {
    let mut out = String::from("time,reps,mean_total,sd_total,extinct_fraction\n");
    let horizon = totals.iter().map(Vec::len).max().unwrap_or(0);
    for time in 0..horizon {
        let column: Vec<f64> = totals
            .iter()
            .map(|row| row.get(time).copied().unwrap_or(0) as f64)
            .collect();
        let n = column.len() as f64;
        let mean = column.iter().sum::<f64>() / n;
        let sd = if column.len() > 1 {
            (column.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let extinct = column.iter().filter(|&&x| x == 0.0).count() as f64 / n;
        let _ = writeln!(out, "{time},{},{mean},{sd},{extinct}", column.len());
    }
    out
}

fn brw(p: f64, reps: u64, opts: &Opts, cfg: &mut RunConfig) -> Result<SimOutput> {
    let t = required(opts.t, "t")?;
    let start = match opts.start {
        Some(y) if opts.d == 1 => Site::line(y),
        Some(_) => return Err(usage("--start is only available with --d 1")),
        None => Site::origin(opts.d),
    };
    cfg.t = Some(t);
    cfg.start = opts.start;
    let sim = Simulator::new(ProcessParams::new(p, opts.d)?);
    let runs = (0..reps)
        .into_par_iter()
        .map(|r| sim.simulate(&start, t, &mut stream(RandomStreamSpec::new(opts.seed, r))))
        .collect::<Result<Vec<_>>>()?;
    let mut trajectories = String::new();
    for (r, traj) in runs.iter().enumerate() {
        trajectories.push_str(&trajectory_jsonl(r as u64, traj));
    }
    let totals: Vec<Vec<u64>> = runs
        .iter()
        .map(|traj| traj.iter().map(|pop| pop.total()).collect())
        .collect();
    let mut findings = Findings::default();
    findings.results.push(final_summary(&totals));
    Ok(SimOutput {
        trajectories,
        summary_csv: summary_csv(&totals),
        findings,
    })
}

fn final_summary(totals: &[Vec<u64>]) -> serde_json::Value {
    let finals: Vec<u64> = totals
        .iter()
        .map(|row| row.last().copied().unwrap_or(0))
        .collect();
    let n = finals.len().max(1) as f64;
    json!({
        "runs": finals.len(),
        "mean_final_total": finals.iter().sum::<u64>() as f64 / n,
        "extinct_fraction": finals.iter().filter(|&&x| x == 0).count() as f64 / n,
    })
}

#[derive(Serialize)]
struct EmbeddedLine<'a> {
    rep: u64,
    config: &'a str,
    time: u32,
    counts: Vec<(i64, u64)>,
}

fn embedded(p: f64, reps: u64, opts: &Opts, cfg: &mut RunConfig) -> Result<SimOutput> {
    let n = required(opts.n, "n")?;
    let source = config::parse_source(opts.source.as_deref())?;
    let trap = build_trapezoid(n)?;
    if !trap.contains(source) {
        return Err(usage(format!("source {source} is not a point of T_{n}")));
    }
    cfg.n = Some(n);
    cfg.source = Some(source);
    let runs = (0..reps)
        .into_par_iter()
        .map(|r| {
            simulate_embedded(
                &trap,
                source,
                p,
                &mut stream(RandomStreamSpec::new(opts.seed, r)),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut trajectories = String::new();
    for (r, run) in runs.iter().enumerate() {
        let hex = run.config.to_hex();
        for (j, level) in run.trajectory.iter().enumerate() {
            let line = EmbeddedLine {
                rep: r as u64,
                config: &hex,
                time: source.k + j as u32,
                counts: level.iter().map(|(&y, &c)| (y, c)).collect(),
            };
            trajectories.push_str(&serde_json::to_string(&line).expect("plain data serializes"));
            trajectories.push('\n');
        }
    }
    let totals: Vec<Vec<u64>> = runs
        .iter()
        .map(|run| {
            run.trajectory
                .iter()
                .map(|l: &BTreeMap<i64, u64>| l.values().sum())
                .collect()
        })
        .collect();
    let mut findings = Findings::default();
    findings.results.push(final_summary(&totals));
    Ok(SimOutput {
        trajectories,
        summary_csv: summary_csv(&totals),
        findings,
    })
}
