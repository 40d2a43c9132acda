use std::collections::BTreeSet;

use brwlab_core::brw_sim::check_coupling;
use brwlab_core::exact_dist::{
    comparison_pairs, equality_gap, order_pair, verify_monotonicity_exact, ExactEngine, PairCheck,
};
use brwlab_core::lattice::{build_trapezoid, is_feasible};
use brwlab_core::percolation::{
    enumerate_verify_b, sampled_verify_b, simulate_embedded, DEFAULT_ENUMERATION_BUDGET,
};
use brwlab_core::stats_mc::{
    bonferroni, chi_square_equality, derive_seed, dominance_check, stream, BandSpec, Stream,
};
use brwlab_core::{
    EmpiricalDist, Error, MonotonicityMode, ProcessParams, RandomStreamSpec, Relation, Result,
    Simulator, Site, TestResult,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{CdfTables, Mode, Opts, Target};
use crate::config::{self, required, usage, RunConfig};
use crate::Findings;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_ALPHA: f64 = 1e-3;
pub const DEFAULT_BAND: f64 = 0.99;
pub const DEFAULT_RESAMPLES: usize = 1000;
pub const DEFAULT_REPS: u64 = 10_000;
pub const DEFAULT_EMBED_HORIZON: u32 = 20;
/// Largest subset enumerated for statement A when `--subset` is absent.
const AUTO_SUBSET_SIZE: usize = 2;

// Labels separating the random streams of different arms.
const ARM_PRIMARY: u64 = 0;
const ARM_DIRECT: u64 = 1;
const ARM_BOOTSTRAP: u64 = 2;

pub fn run(target: Target, opts: &Opts, cfg: &mut RunConfig) -> Result<Findings> {
    match target {
        Target::Proposition => monotonicity(MonotonicityMode::Duads, opts, cfg),
        Target::Criterion => monotonicity(MonotonicityMode::FullPreorder, opts, cfg),
        Target::A => statement_a(opts, cfg),
        Target::Aprime => statement_a_prime(opts, cfg),
        Target::B => statement_b(opts, cfg),
        Target::Embed => embed(opts, cfg),
        Target::Coupling => coupling(opts, cfg),
    }
}

fn arm_seed(seed: u64, p_index: usize, arm: u64) -> u64 {
    derive_seed(derive_seed(seed, p_index as u64), arm)
}

/// Runs `reps` replicates in parallel and tallies each output column.
///
/// Replicate `r` draws from `stream(seed, r)`, and tallies commute, so the
/// result does not depend on the worker count.
fn sample_columns<F>(reps: u64, seed: u64, width: usize, f: F) -> Result<Vec<EmpiricalDist>>
where
    F: Fn(&mut Stream) -> Result<Vec<u64>> + Sync,
{
    let empty = || vec![EmpiricalDist::new(); width];
    (0..reps)
        .into_par_iter()
        .map(|r| f(&mut stream(RandomStreamSpec::new(seed, r))))
        .try_fold(empty, |mut acc, row| {
            for (dist, v) in acc.iter_mut().zip(row?) {
                dist.push(v);
            }
            Ok::<_, Error>(acc)
        })
        .try_reduce(empty, |mut a, b| {
            for (x, y) in a.iter_mut().zip(&b) {
                x.merge(y);
            }
            Ok(a)
        })
}

fn tolerance(opts: &Opts, cfg: &mut RunConfig) -> Result<f64> {
    let tol = opts.tol.unwrap_or(DEFAULT_TOL);
    if tol.is_nan() || tol < 0.0 {
        return Err(usage(format!("--tol {tol} must be non-negative")));
    }
    cfg.tol = Some(tol);
    Ok(tol)
}

fn mc_settings(opts: &Opts, cfg: &mut RunConfig) -> Result<(u64, f64)> {
    let reps = opts.reps.unwrap_or(DEFAULT_REPS);
    let alpha = opts.alpha.unwrap_or(DEFAULT_ALPHA);
    if reps == 0 || !(0.0 < alpha && alpha < 1.0) {
        return Err(usage("need --reps > 0 and 0 < --alpha < 1"));
    }
    cfg.reps = Some(reps);
    cfg.alpha = Some(alpha);
    Ok((reps, alpha))
}

fn rejected(test: &TestResult) -> bool {
    test.reject && !test.inconclusive
}

#[derive(Serialize)]
struct MonotonicityEntry {
    p: f64,
    pairs_checked: usize,
    incomparable_skipped: usize,
    max_truncated_mass: f64,
    max_dominance_gap: f64,
    max_equality_gap: f64,
    checks: Vec<Value>,
}

fn check_value(c: &PairCheck, tables: bool) -> Value {
    let mut v = json!({
        "t": c.t,
        "near": c.near,
        "far": c.far,
        "relation": c.relation,
        "gap": c.gap,
        "passed": c.passed,
    });
    if tables {
        v["cdf_near"] = json!(c.cdf_near);
        v["cdf_far"] = json!(c.cdf_far);
    }
    v
}

fn monotonicity(mode: MonotonicityMode, opts: &Opts, cfg: &mut RunConfig) -> Result<Findings> {
    let run_mode = config::resolve_mode(opts, Mode::Exact, &[Mode::Exact, Mode::Mc])?;
    let t = required(opts.t, "t")?;
    let grid = config::probabilities(opts)?;
    for &p in &grid {
        ProcessParams::new(p, opts.d)?;
    }
    cfg.mode = Some(run_mode);
    cfg.t = Some(t);
    cfg.p = grid.clone();
    match run_mode {
        Mode::Mc => monotonicity_mc(mode, t, &grid, opts, cfg),
        _ => monotonicity_exact(mode, t, &grid, opts, cfg),
    }
}

fn monotonicity_exact(
    mode: MonotonicityMode,
    t: u32,
    grid: &[f64],
    opts: &Opts,
    cfg: &mut RunConfig,
) -> Result<Findings> {
    let tol = tolerance(opts, cfg)?;
    cfg.cdf_tables = Some(opts.cdf_tables);
    let reports = grid
        .par_iter()
        .map(|&p| verify_monotonicity_exact(t, ProcessParams::new(p, opts.d)?, mode, tol))
        .collect::<Result<Vec<_>>>()?;
    let mut findings = Findings::default();
    for (report, &p) in reports.iter().zip(grid) {
        let max_of = |rel: Relation| {
            report
                .checks
                .iter()
                .filter(|c| c.relation == rel)
                .map(|c| c.gap)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let checks = report
            .checks
            .iter()
            .map(|c| {
                let tables = match opts.cdf_tables {
                    CdfTables::None => false,
                    CdfTables::Final => c.t == t || !c.passed,
                    CdfTables::All => true,
                };
                check_value(c, tables)
            })
            .collect();
        for c in report.violations() {
            let mut v = check_value(c, true);
            v["p"] = json!(p);
            findings.violations.push(v);
        }
        findings.results.push(json!(MonotonicityEntry {
            p,
            pairs_checked: report.pairs_checked,
            incomparable_skipped: report.incomparable_skipped,
            max_truncated_mass: report.max_truncated_mass,
            max_dominance_gap: max_of(Relation::Dominates),
            max_equality_gap: max_of(Relation::Equal),
            checks,
        }));
    }
    Ok(findings)
}

/// Monte Carlo version at the final time `t`: dominance pairs get a
/// bootstrap band check, equal-moduli pairs a Bonferroni-adjusted
/// chi-square equality test.
fn monotonicity_mc(
    mode: MonotonicityMode,
    t: u32,
    grid: &[f64],
    opts: &Opts,
    cfg: &mut RunConfig,
) -> Result<Findings> {
    let (reps, alpha) = mc_settings(opts, cfg)?;
    let band = opts.band.unwrap_or(DEFAULT_BAND);
    let resamples = opts.resamples.unwrap_or(DEFAULT_RESAMPLES);
    if !(0.0 < band && band < 1.0) || resamples == 0 {
        return Err(usage("need 0 < --band < 1 and --resamples > 0"));
    }
    cfg.band = Some(band);
    cfg.resamples = Some(resamples);

    let mut pairs = Vec::new();
    let mut skipped = 0;
    for (z, w) in comparison_pairs(t, opts.d, mode) {
        match order_pair(&z, &w)? {
            Some(pair) => pairs.push(pair),
            None => skipped += 1,
        }
    }
    let sites: Vec<Site> = pairs
        .iter()
        .flat_map(|(a, b, _)| [a.clone(), b.clone()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let column = |s: &Site| sites.binary_search(s).expect("pair sites are tabulated");
    let equal_tests = pairs
        .iter()
        .filter(|(_, _, r)| *r == Relation::Equal)
        .count();
    let equal_alpha = bonferroni(alpha, equal_tests);

    let mut findings = Findings::default();
    let mut total_tests = 0;
    let mut min_p: f64 = 1.0;
    for (pi, &p) in grid.iter().enumerate() {
        let sim = Simulator::new(ProcessParams::new(p, opts.d)?);
        let origin = Site::origin(opts.d);
        let dists = sample_columns(
            reps,
            arm_seed(opts.seed, pi, ARM_PRIMARY),
            sites.len(),
            |rng| {
                let pop = sim.simulate_final(&origin, t, rng)?;
                Ok(sites.iter().map(|s| pop.count_at(s)).collect())
            },
        )?;
        let boot_seed = arm_seed(opts.seed, pi, ARM_BOOTSTRAP);
        let mut checks = Vec::new();
        for (k, (near, far, relation)) in pairs.iter().enumerate() {
            let (a, b) = (&dists[column(near)], &dists[column(far)]);
            let test = match relation {
                Relation::Dominates => dominance_check(
                    a,
                    b,
                    BandSpec {
                        level: band,
                        resamples,
                        seed: derive_seed(boot_seed, k as u64),
                    },
                ),
                Relation::Equal => chi_square_equality(a, b, equal_alpha),
            };
            total_tests += 1;
            if let Some(pv) = test.p_value {
                min_p = min_p.min(pv);
            }
            let entry = json!({
                "t": t,
                "near": near,
                "far": far,
                "relation": relation,
                "mean_near": a.mean(),
                "mean_far": b.mean(),
                "test": test,
            });
            if rejected(&test) {
                let mut v = entry.clone();
                v["p"] = json!(p);
                findings.violations.push(v);
            }
            checks.push(entry);
        }
        findings.results.push(json!({
            "p": p,
            "reps": reps,
            "pairs_checked": pairs.len(),
            "incomparable_skipped": skipped,
            "checks": checks,
        }));
    }
    findings.summary = Some(json!({
        "tests": total_tests,
        "min_p_value": min_p,
        "bonferroni_family_p_value": (min_p * total_tests as f64).min(1.0),
        "equality_alpha_per_test": equal_alpha,
    }));
    Ok(findings)
}

fn ensure_line(opts: &Opts) -> Result<()> {
    if opts.d != 1 {
        return Err(usage("this statement lives on Z: use --d 1"));
    }
    Ok(())
}

/// Subsets of `{0, ..., t}` with at most `AUTO_SUBSET_SIZE` elements.
fn auto_subsets(t: u32) -> Vec<Vec<i64>> {
    let top = i64::from(t);
    let mut out: Vec<Vec<i64>> = (0..=top).map(|a| vec![a]).collect();
    if AUTO_SUBSET_SIZE >= 2 {
        for a in 0..=top {
            for b in a + 1..=top {
                out.push(vec![a, b]);
            }
        }
    }
    out
}

fn statement_a(opts: &Opts, cfg: &mut RunConfig) -> Result<Findings> {
    ensure_line(opts)?;
    let run_mode = config::resolve_mode(opts, Mode::Exact, &[Mode::Exact, Mode::Mc])?;
    let t = required(opts.t, "t")?;
    let grid = config::probabilities(opts)?;
    let subset = opts
        .subset
        .as_deref()
        .map(config::parse_subset)
        .transpose()?;
    if let Some(c) = &subset {
        if c.is_empty() || c.iter().any(|&x| x < 0) {
            return Err(usage("--subset must list sites in {0, 1, 2, ...}"));
        }
    }
    cfg.mode = Some(run_mode);
    cfg.t = Some(t);
    cfg.p = grid.clone();
    cfg.subset = subset.clone();
    if run_mode == Mode::Mc {
        return statement_a_mc(t, &grid, subset, opts, cfg);
    }
    let tol = tolerance(opts, cfg)?;
    let per_p = grid
        .par_iter()
        .map(|&p| {
            let mut engine = ExactEngine::new(ProcessParams::new(p, 1)?);
            let mut checks = Vec::new();
            for s in 0..=t {
                let subsets = match &subset {
                    Some(c) => vec![c.clone()],
                    None => auto_subsets(s),
                };
                for c in subsets {
                    let minus = engine.joint_pmf_on_subset(s, -1, &c, false)?;
                    let plus = engine.joint_pmf_on_subset(s, 1, &c, true)?;
                    checks.push((s, c, equality_gap(&minus, &plus)?));
                }
            }
            Ok((p, checks))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut findings = Findings::default();
    for (p, checks) in per_p {
        let max_gap = checks.iter().map(|c| c.2).fold(0.0, f64::max);
        for (s, c, gap) in &checks {
            if *gap > tol {
                findings
                    .violations
                    .push(json!({"p": p, "t": s, "subset": c, "gap": gap}));
            }
        }
        findings
            .results
            .push(json!({"p": p, "checks": checks.len(), "max_gap": max_gap}));
    }
    Ok(findings)
}

/// Counts on `C` from `-1` against visit-constrained counts from `+1`, one
/// Bonferroni-adjusted chi-square test per site of `C`.
fn statement_a_mc(
    t: u32,
    grid: &[f64],
    subset: Option<Vec<i64>>,
    opts: &Opts,
    cfg: &mut RunConfig,
) -> Result<Findings> {
    let (reps, alpha) = mc_settings(opts, cfg)?;
    let sites: Vec<i64> = subset.unwrap_or_else(|| (0..=i64::from(t)).collect());
    let mut findings = Findings::default();
    for (pi, &p) in grid.iter().enumerate() {
        let sim = Simulator::new(ProcessParams::new(p, 1)?);
        let arm = |start: i64, arm: u64| {
            sample_columns(reps, arm_seed(opts.seed, pi, arm), sites.len(), |rng| {
                let last = sim
                    .simulate_tagged(start, t, rng)?
                    .pop()
                    .expect("non-empty trajectory");
                Ok(sites
                    .iter()
                    .map(|&z| {
                        last.particles
                            .iter()
                            .filter(|q| q.site == z && (start < 0 || q.visited_zero))
                            .count() as u64
                    })
                    .collect())
            })
        };
        let minus = arm(-1, ARM_PRIMARY)?;
        let plus = arm(1, ARM_DIRECT)?;
        let per_test = bonferroni(alpha, sites.len());
        let tests = two_arm_tests(&sites, &minus, &plus, per_test, p, &mut findings);
        findings
            .results
            .push(json!({"p": p, "t": t, "reps": reps, "tests": tests}));
    }
    Ok(findings)
}

fn two_arm_tests(
    sites: &[i64],
    a: &[EmpiricalDist],
    b: &[EmpiricalDist],
    alpha: f64,
    p: f64,
    findings: &mut Findings,
) -> Vec<Value> {
    sites
        .iter()
        .zip(a.iter().zip(b))
        .map(|(z, (x, y))| {
            let test = chi_square_equality(x, y, alpha);
            let entry = json!({"z": z, "mean_a": x.mean(), "mean_b": y.mean(), "test": test});
            if rejected(&test) {
                let mut v = entry.clone();
                v["p"] = json!(p);
                findings.violations.push(v);
            }
            entry
        })
        .collect()
}

fn statement_a_prime(opts: &Opts, cfg: &mut RunConfig) -> Result<Findings> {
    ensure_line(opts)?;
    let run_mode = config::resolve_mode(opts, Mode::Exact, &[Mode::Exact, Mode::Mc])?;
    let t = required(opts.t, "t")?;
    let grid = config::probabilities(opts)?;
    let z = opts
        .z
        .as_deref()
        .map(|s| config::parse_site(s, 1).map(|s| s.coords()[0]))
        .transpose()?;
    cfg.mode = Some(run_mode);
    cfg.t = Some(t);
    cfg.p = grid.clone();
    cfg.z = z.map(Site::line);
    let sites_at = |s: u32| -> Vec<i64> {
        match z {
            Some(z) => vec![z],
            None => (-i64::from(s) - 1..=i64::from(s) + 1).collect(),
        }
    };
    if run_mode == Mode::Mc {
        let (reps, alpha) = mc_settings(opts, cfg)?;
        let sites = sites_at(t);
        let mut findings = Findings::default();
        for (pi, &p) in grid.iter().enumerate() {
            let sim = Simulator::new(ProcessParams::new(p, 1)?);
            let arm = |start: i64, arm: u64| {
                sample_columns(reps, arm_seed(opts.seed, pi, arm), sites.len(), |rng| {
                    let last = sim
                        .simulate_tagged(start, t, rng)?
                        .pop()
                        .expect("non-empty");
                    Ok(sites
                        .iter()
                        .map(|&z| {
                            last.particles
                                .iter()
                                .filter(|q| q.site == z && q.visited_zero)
                                .count() as u64
                        })
                        .collect())
                })
            };
            let plus = arm(1, ARM_PRIMARY)?;
            let minus = arm(-1, ARM_DIRECT)?;
            let per_test = bonferroni(alpha, sites.len());
            let tests = two_arm_tests(&sites, &plus, &minus, per_test, p, &mut findings);
            findings
                .results
                .push(json!({"p": p, "t": t, "reps": reps, "tests": tests}));
        }
        return Ok(findings);
    }
    let tol = tolerance(opts, cfg)?;
    let per_p = grid
        .par_iter()
        .map(|&p| {
            let mut engine = ExactEngine::new(ProcessParams::new(p, 1)?);
            let mut checks = Vec::new();
            for s in 0..=t {
                for y in sites_at(s) {
                    let plus = engine.visited_pmf(s, 1, y, true)?;
                    let minus = engine.visited_pmf(s, -1, y, true)?;
                    checks.push((s, y, equality_gap(&plus, &minus)?));
                }
            }
            Ok((p, checks))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut findings = Findings::default();
    for (p, checks) in per_p {
        let max_gap = checks.iter().map(|c| c.2).fold(0.0, f64::max);
        for (s, y, gap) in &checks {
            if *gap > tol {
                findings
                    .violations
                    .push(json!({"p": p, "t": s, "z": y, "gap": gap}));
            }
        }
        findings
            .results
            .push(json!({"p": p, "checks": checks.len(), "max_gap": max_gap}));
    }
    Ok(findings)
}

fn dissection_times(opts: &Opts, n: u32) -> Result<Vec<u32>> {
    match opts.m {
        Some(m) if (1..=n).contains(&m) => Ok(vec![m]),
        Some(m) => Err(usage(format!("--m {m} outside 1..={n}"))),
        None => Ok((1..=n).collect()),
    }
}

fn statement_b(opts: &Opts, cfg: &mut RunConfig) -> Result<Findings> {
    let run_mode = config::resolve_mode(opts, Mode::Exhaustive, &[Mode::Exhaustive, Mode::Mc])?;
    let n = required(opts.n, "n")?;
    if n == 0 {
        return Err(usage("--n must be positive"));
    }
    let ms = dissection_times(opts, n)?;
    cfg.mode = Some(run_mode);
    cfg.n = Some(n);
    cfg.m = ms.clone();
    let mut findings = Findings::default();
    let mut push = |report: brwlab_core::BReport, p: Option<f64>| {
        for v in &report.violations {
            let mut v = json!(v);
            v["m"] = json!(report.m);
            if let Some(p) = p {
                v["p"] = json!(p);
            }
            findings.violations.push(v);
        }
        let mut entry = json!(report);
        if let Some(p) = p {
            entry["p"] = json!(p);
        }
        findings.results.push(entry);
    };
    if run_mode == Mode::Mc {
        let grid = config::probabilities(opts)?;
        let reps = opts.reps.unwrap_or(DEFAULT_REPS);
        cfg.p = grid.clone();
        cfg.reps = Some(reps);
        for (pi, &p) in grid.iter().enumerate() {
            for &m in &ms {
                let seed = derive_seed(arm_seed(opts.seed, pi, ARM_PRIMARY), u64::from(m));
                push(sampled_verify_b(n, m, p, reps, seed)?, Some(p));
            }
        }
    } else {
        let budget = opts.budget.unwrap_or(DEFAULT_ENUMERATION_BUDGET);
        cfg.budget = Some(budget);
        for &m in &ms {
            push(enumerate_verify_b(n, m, budget)?, None);
        }
    }
    Ok(findings)
}

fn embed(opts: &Opts, cfg: &mut RunConfig) -> Result<Findings> {
    let run_mode = config::resolve_mode(opts, Mode::Mc, &[Mode::Mc])?;
    let n = opts.n.unwrap_or(DEFAULT_EMBED_HORIZON);
    let grid = config::probabilities(opts)?;
    let source = config::parse_source(opts.source.as_deref())?;
    let trap = build_trapezoid(n)?;
    if !trap.contains(source) {
        return Err(usage(format!("source {source} is not a point of T_{n}")));
    }
    let reps = opts.reps.unwrap_or(DEFAULT_REPS);
    if reps == 0 {
        return Err(usage("--reps must be positive"));
    }
    cfg.mode = Some(run_mode);
    cfg.n = Some(n);
    cfg.p = grid.clone();
    cfg.source = Some(source);
    cfg.reps = Some(reps);
    let mut findings = Findings::default();
    for (pi, &p) in grid.iter().enumerate() {
        let seed = arm_seed(opts.seed, pi, ARM_PRIMARY);
        let runs = (0..reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream(RandomStreamSpec::new(seed, r));
                match simulate_embedded(&trap, source, p, &mut rng) {
                    Ok(run) => Ok((run.trajectory.last().map_or(0, |l| l.values().sum()), None)),
                    Err(Error::InvariantViolation(msg)) => Ok((0, Some(msg))),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<(u64, Option<String>)>>>()?;
        let mut mismatches = 0;
        for (r, (_, msg)) in runs.iter().enumerate() {
            if let Some(msg) = msg {
                mismatches += 1;
                findings
                    .violations
                    .push(json!({"p": p, "rep": r, "detail": msg}));
            }
        }
        let survivors = runs.iter().filter(|(top, _)| *top > 0).count();
        let mean_top = runs.iter().map(|(top, _)| *top as f64).sum::<f64>() / reps.max(1) as f64;
        findings.results.push(json!({
            "p": p,
            "runs": reps,
            "mismatches": mismatches,
            "mean_top_count": mean_top,
            "survival_fraction": survivors as f64 / reps.max(1) as f64,
        }));
    }
    Ok(findings)
}

/// Statistics of a `+1` population that the marginal-law test compares.
///
/// Site counts are only tested where the site is reachable at that time.
fn marginal_stats(t: u32) -> Vec<(u32, &'static str, Option<i64>)> {
    let mut out = Vec::new();
    for s in t.saturating_sub(1).max(1)..=t {
        out.push((s, "total", None));
        for z in [0, 1] {
            if is_feasible(&Site::line(z), s, &Site::line(1)) {
                out.push((s, if z == 0 { "at_0" } else { "at_1" }, Some(z)));
            }
        }
    }
    out
}

fn coupling(opts: &Opts, cfg: &mut RunConfig) -> Result<Findings> {
    ensure_line(opts)?;
    let run_mode = config::resolve_mode(opts, Mode::Mc, &[Mode::Mc])?;
    let t = required(opts.t, "t")?;
    let grid = config::probabilities(opts)?;
    cfg.mode = Some(run_mode);
    cfg.t = Some(t);
    cfg.p = grid.clone();
    let (reps, alpha) = mc_settings(opts, cfg)?;
    let stats = marginal_stats(t);
    let mut findings = Findings::default();
    for (pi, &p) in grid.iter().enumerate() {
        let sim = Simulator::new(ProcessParams::new(p, 1)?);
        let seed = arm_seed(opts.seed, pi, ARM_PRIMARY);
        let runs = (0..reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream(RandomStreamSpec::new(seed, r));
                let run = sim.coupled_simulate(t, &mut rng)?;
                let failure = match check_coupling(&run) {
                    Ok(()) => None,
                    Err(Error::InvariantViolation(msg)) => Some(msg),
                    Err(e) => return Err(e),
                };
                let row = stats
                    .iter()
                    .map(|&(s, _, z)| {
                        let pop = &run.plus[s as usize];
                        z.map_or(pop.total(), |z| pop.count_at(z))
                    })
                    .collect::<Vec<u64>>();
                Ok((failure, row))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut coupled = vec![EmpiricalDist::new(); stats.len()];
        let mut failures = 0;
        for (r, (failure, row)) in runs.into_iter().enumerate() {
            if let Some(msg) = failure {
                failures += 1;
                findings
                    .violations
                    .push(json!({"p": p, "rep": r, "detail": msg}));
            }
            for (dist, v) in coupled.iter_mut().zip(row) {
                dist.push(v);
            }
        }
        let start = Site::line(1);
        let direct = sample_columns(
            reps,
            arm_seed(opts.seed, pi, ARM_DIRECT),
            stats.len(),
            |rng| {
                let traj = sim.simulate(&start, t, rng)?;
                Ok(stats
                    .iter()
                    .map(|&(s, _, z)| {
                        let pop = &traj[s as usize];
                        z.map_or(pop.total(), |z| pop.count_at(&Site::line(z)))
                    })
                    .collect())
            },
        )?;
        let mut marginal = Vec::new();
        for ((&(s, name, _), a), b) in stats.iter().zip(&coupled).zip(&direct) {
            let test = chi_square_equality(a, b, alpha);
            let entry = json!({
                "time": s,
                "statistic": name,
                "mean_coupled": a.mean(),
                "mean_direct": b.mean(),
                "test": test,
            });
            if rejected(&test) {
                let mut v = entry.clone();
                v["p"] = json!(p);
                findings.violations.push(v);
            }
            marginal.push(entry);
        }
        findings.results.push(json!({
            "p": p,
            "t": t,
            "runs": reps,
            "pathwise_failures": failures,
            "marginal": marginal,
        }));
    }
    Ok(findings)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auto_subsets_cover_singletons_and_pairs() {
        assert_eq!(auto_subsets(0), vec![vec![0]]);
        assert_eq!(auto_subsets(2).len(), 3 + 3);
    }

    #[test]
    fn marginal_stats_respect_parity() {
        let names: Vec<_> = marginal_stats(12).iter().map(|s| (s.0, s.1)).collect();
        assert_eq!(
            names,
            vec![(11, "total"), (11, "at_0"), (12, "total"), (12, "at_1")]
        );
        assert_eq!(marginal_stats(1).len(), 2);
    }

    #[test]
    fn sample_columns_is_reproducible() {
        let sim = Simulator::new(ProcessParams::new(0.5, 1).unwrap());
        let origin = Site::origin(1);
        let f = |rng: &mut Stream| Ok(vec![sim.simulate_final(&origin, 4, rng)?.total()]);
        let a = sample_columns(500, 7, 1, f).unwrap();
        let b = sample_columns(500, 7, 1, f).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].len(), 500);
    }
}
