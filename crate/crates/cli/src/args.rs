use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Branching random walk and oriented percolation laboratory.
///
/// Every command writes a JSON report (or a CSV table for `exact`) and exits
/// with 0 when all checks pass, 1 when a violation is found, 2 on a usage
/// error and 3 when a resource cap is exceeded.
#[derive(Debug, Parser)]
#[command(name = "brwlab", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a monotonicity, symmetry or coupling statement.
    Verify {
        target: Target,
        #[command(flatten)]
        opts: Opts,
    },
    /// Simulate a process and dump trajectories and summary statistics.
    Simulate {
        process: Process,
        #[command(flatten)]
        opts: Opts,
    },
    /// Print an exact count distribution as CSV.
    Exact {
        what: What,
        #[command(flatten)]
        opts: Opts,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Target {
    /// Nearest feasible sites: the one closer to the origin dominates.
    #[value(name = "proposition")]
    Proposition,
    /// Every pair ordered by the coordinate-wise modulus preorder.
    #[value(name = "criterion")]
    Criterion,
    /// Counts on C in {0,1,..} from -1 equal visit-constrained counts from +1.
    #[value(name = "A", alias = "a")]
    A,
    /// Visit-constrained counts from +1 and -1 coincide.
    #[value(name = "Aprime", alias = "aprime")]
    Aprime,
    /// Percolation paths through (0,m) from (1,0) and (-1,0) coincide in law.
    #[value(name = "B", alias = "b")]
    B,
    /// Embedded process counts equal open-path counts.
    #[value(name = "embed")]
    Embed,
    /// Mirror coupling of the walks from -1 and +1.
    #[value(name = "coupling")]
    Coupling,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Process {
    Brw,
    Embedded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum What {
    Pmf,
    Visited,
    Joint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exact,
    Mc,
    Exhaustive,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CdfTables {
    None,
    /// Only for pairs at the final time and for violations.
    #[default]
    Final,
    All,
}

#[derive(Clone, Debug, Default, Args)]
pub struct Opts {
    /// Birth / bond-open probability.
    #[arg(long)]
    pub p: Option<f64>,
    /// Grid of probabilities `START:STOP:STEP`, inclusive of STOP
    /// (e.g. `0.05:0.95:0.05` is 0.05, 0.10, ..., 0.95).
    #[arg(long, value_name = "START:STOP:STEP")]
    pub p_grid: Option<String>,
    /// Time horizon of the walk.
    #[arg(long)]
    pub t: Option<u32>,
    /// Percolation horizon (trapezoid T_n).
    #[arg(long)]
    pub n: Option<u32>,
    /// Dissection time for statement B; all of 1..=n when omitted.
    #[arg(long)]
    pub m: Option<u32>,
    /// Lattice dimension.
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    /// Target site, comma-separated coordinates.
    #[arg(long, allow_hyphen_values = true)]
    pub z: Option<String>,
    /// Starting site on Z.
    #[arg(long, allow_hyphen_values = true)]
    pub start: Option<i64>,
    /// Ordered subset C of {0,1,2,...}, comma-separated.
    #[arg(long)]
    pub subset: Option<String>,
    /// Percolation source point `y,k`.
    #[arg(long, allow_hyphen_values = true)]
    pub source: Option<String>,
    /// Count only lineages that occupied site 0.
    #[arg(long)]
    pub require_visit: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Monte Carlo replicates (per arm, per probability).
    #[arg(long)]
    pub reps: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Tolerance of exact comparisons.
    #[arg(long)]
    #[arg(allow_hyphen_values = true)]
    pub tol: Option<f64>,
    /// Significance level of chi-square tests.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Bootstrap band level of Monte Carlo dominance checks.
    #[arg(long)]
    pub band: Option<f64>,
    /// Bootstrap resamples of Monte Carlo dominance checks.
    #[arg(long)]
    pub resamples: Option<usize>,
    /// Enumeration budget (number of configurations) for exhaustive sweeps.
    #[arg(long)]
    pub budget: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Which CDF tables to embed in monotonicity reports.
    #[arg(long, value_enum, default_value_t = CdfTables::Final)]
    pub cdf_tables: CdfTables,
    /// Output file (reports, tables) or directory (simulate).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Record wall-clock time in the report (makes it non-reproducible).
    #[arg(long)]
    pub timing: bool,
}
