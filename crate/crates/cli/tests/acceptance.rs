//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p brwlab-cli --test acceptance`.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use brwlab_core::exact_dist::{
    equality_gap, verify_monotonicity_exact, ExactEngine, MonotonicityMode, ProcessParams,
};
use brwlab_core::lattice::{feasible_sites, Site};
use brwlab_core::oracle;
use brwlab_core::percolation::enumerate_verify_b;
use serde_json::Value;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

const TOL: f64 = 1e-12;
/// Relative rounding allowance when p has a long binary expansion: both
/// routes are exact polynomials in p evaluated in floating point.
const ROUNDING: f64 = 32.0 * f64::EPSILON;

fn grid() -> Vec<f64> {
    (1..=19).map(|i| f64::from(i) * 5.0 / 100.0).collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || {
        format!("took {elapsed:.1?}, limit {limit:?}")
    })
}

fn cli(args: &[&str]) -> Result<Value, String> {
    let out = brwlab_cli::run(std::iter::once("brwlab").chain(args.iter().copied()));
    let report: Value = serde_json::from_slice(&out.stdout).map_err(|e| {
        format!(
            "{args:?}: bad report ({e}); stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        )
    })?;
    let violations = report["violations"].as_array().map_or(0, Vec::len);
    ensure(out.code == 0 && violations == 0, || {
        format!(
            "{args:?}: exit {} with {violations} violations: {}",
            out.code, report["violations"]
        )
    })?;
    Ok(report)
}

fn monotonicity(mode: MonotonicityMode, d: usize, t_max: u32) -> Result<(usize, f64), String> {
    let mut pairs = 0;
    let mut worst: f64 = 0.0;
    for p in grid() {
        let report = verify_monotonicity_exact(t_max, ProcessParams::new(p, d).unwrap(), mode, TOL)
            .map_err(|e| e.to_string())?;
        if let Some(c) = report.violations().next() {
            return Err(format!(
                "p={p} t={} {} vs {}: gap {:e}",
                c.t, c.near, c.far, c.gap
            ));
        }
        pairs += report.pairs_checked;
        worst = report.checks.iter().map(|c| c.gap).fold(worst, f64::max);
    }
    Ok((pairs, worst))
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let (pairs, worst) = monotonicity(MonotonicityMode::Duads, 1, 10)?;
    for p in grid() {
        let mut engine = ExactEngine::new(ProcessParams::new(p, 1).unwrap());
        for t in (1..=9).step_by(2) {
            let minus = engine.descendant_pmf(t, &Site::line(-1)).unwrap();
            let plus = engine.descendant_pmf(t, &Site::line(1)).unwrap();
            ensure(minus == plus, || {
                format!("p={p} t={t}: laws at -1 and +1 differ")
            })?;
        }
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "{pairs} duads, max gap {worst:e}, (-1,+1) bit-identical, {:.1?}",
        start.elapsed()
    ))
}

fn criterion_2() -> Check {
    let start = Instant::now();
    let (pairs, worst) = monotonicity(MonotonicityMode::FullPreorder, 1, 10)?;
    within(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!(
        "{pairs} pairs, max gap {worst:e}, {:.1?}",
        start.elapsed()
    ))
}

fn criterion_3() -> Check {
    let mut checks = 0;
    let mut worst: f64 = 0.0;
    for p in grid() {
        let mut engine = ExactEngine::new(ProcessParams::new(p, 1).unwrap());
        for t in 0..=8u32 {
            for z in -i64::from(t) - 1..=i64::from(t) + 1 {
                let plus = engine.visited_pmf(t, 1, z, true).unwrap();
                let minus = engine.visited_pmf(t, -1, z, true).unwrap();
                let gap = equality_gap(&plus, &minus).unwrap();
                ensure(gap <= TOL, || {
                    format!("visited p={p} t={t} z={z}: gap {gap:e}")
                })?;
                worst = worst.max(gap);
                checks += 1;
            }
        }
        for t in 0..=6u32 {
            let top = i64::from(t);
            let mut subsets: Vec<Vec<i64>> = (0..=top).map(|a| vec![a]).collect();
            for a in 0..=top {
                subsets.extend((a + 1..=top).map(|b| vec![a, b]));
            }
            for c in subsets {
                let minus = engine.joint_pmf_on_subset(t, -1, &c, false).unwrap();
                let plus = engine.joint_pmf_on_subset(t, 1, &c, true).unwrap();
                let gap = equality_gap(&minus, &plus).unwrap();
                ensure(gap <= TOL, || {
                    format!("joint p={p} t={t} C={c:?}: gap {gap:e}")
                })?;
                worst = worst.max(gap);
                checks += 1;
            }
        }
    }
    Ok(format!("{checks} comparisons, max gap {worst:e}"))
}

fn criterion_4() -> Check {
    let report = cli(&[
        "verify",
        "coupling",
        "--p-grid",
        "0.2:0.8:0.3",
        "--t",
        "12",
        "--reps",
        "100000",
        "--seed",
        "4",
    ])?;
    let results = report["results"].as_array().unwrap();
    ensure(results.len() == 3, || "expected three probabilities".into())?;
    let mut tests = 0;
    let mut min_p: f64 = 1.0;
    for r in results {
        ensure(r["pathwise_failures"] == 0 && r["runs"] == 100_000, || {
            format!("bad run summary {r}")
        })?;
        for m in r["marginal"].as_array().unwrap() {
            tests += 1;
            min_p = min_p.min(m["test"]["p_value"].as_f64().unwrap_or(1.0));
            ensure(m["test"]["reject"] == false, || {
                format!("marginal rejected: {m}")
            })?;
        }
    }
    Ok(format!(
        "3 x 100000 coupled runs pathwise exact, {tests} marginal tests, min p {min_p:.3}"
    ))
}

fn criterion_5() -> Check {
    let start = Instant::now();
    for (n, expected) in [(1, 16u64), (2, 1024)] {
        for m in 1..=n {
            let r = enumerate_verify_b(n, m, 1 << 20).map_err(|e| e.to_string())?;
            ensure(r.passed() && r.configs_checked == expected, || {
                format!("n={n} m={m}: {r:?}")
            })?;
        }
    }
    let mut strata = 0;
    for m in 1..=3 {
        let r = enumerate_verify_b(3, m, 1 << 20).map_err(|e| e.to_string())?;
        ensure(r.configs_checked == 1 << 18, || {
            format!("m={m}: {} configs", r.configs_checked)
        })?;
        ensure(r.passed() && r.strata.iter().all(|s| s.matched), || {
            format!(
                "m={m}: {} violations, first {:?}",
                r.violation_count,
                r.violations.first()
            )
        })?;
        strata += r.strata.len();
    }
    within(start.elapsed(), Duration::from_secs(300))?;
    Ok(format!(
        "n=3 x m=1..3: 3 x 262144 configs, {strata} strata matched, {:.1?}",
        start.elapsed()
    ))
}

fn criterion_6() -> Check {
    let report = cli(&[
        "verify",
        "embed",
        "--n",
        "20",
        "--p-grid",
        "0.3:0.6:0.3",
        "--reps",
        "10000",
        "--seed",
        "6",
    ])?;
    for r in report["results"].as_array().unwrap() {
        ensure(r["mismatches"] == 0 && r["runs"] == 10_000, || {
            format!("bad summary {r}")
        })?;
    }
    Ok("2 x 10000 runs at n=20, counts equal path counts".into())
}

fn criterion_7() -> Check {
    let (pairs, worst) = monotonicity(MonotonicityMode::Duads, 2, 4)?;
    let report = cli(&[
        "verify",
        "proposition",
        "--mode",
        "mc",
        "--d",
        "2",
        "--t",
        "6",
        "--p-grid",
        "0.3:0.6:0.3",
        "--reps",
        "100000",
        "--seed",
        "7",
    ])?;
    let mut dominance = 0;
    for r in report["results"].as_array().unwrap() {
        for c in r["checks"].as_array().unwrap() {
            if c["relation"] == "dominates" {
                dominance += 1;
                ensure(c["test"]["reject"] == false, || {
                    format!("band exceeded: {c}")
                })?;
            }
        }
    }
    Ok(format!("exact: {pairs} duads (t<=4), max gap {worst:e}; mc: {dominance} dominance checks inside 99% bands"))
}

fn criterion_8() -> Check {
    let mut compared = 0;
    let mut worst: f64 = 0.0;
    let mut compare = |got: &[f64], want: &[f64], p: f64, what: String| -> Result<(), String> {
        let dyadic = [0.25, 0.5, 0.75].contains(&p);
        for k in 0..got.len().max(want.len()) {
            let a = got.get(k).copied().unwrap_or(0.0);
            let b = want.get(k).copied().unwrap_or(0.0);
            worst = worst.max((a - b).abs());
            ensure(
                if dyadic {
                    a == b
                } else {
                    (a - b).abs() <= ROUNDING * a.abs().max(b.abs())
                },
                || format!("{what}: mass at {k}: {a} vs {b}"),
            )?;
        }
        compared += 1;
        Ok(())
    };
    for p in [0.25, 0.5, 0.75, 0.3, 0.9] {
        let mut line = ExactEngine::new(ProcessParams::new(p, 1).unwrap());
        for t in 0..=3 {
            for z in -4..=4 {
                let got = line.descendant_pmf(t, &Site::line(z)).unwrap();
                compare(
                    got.masses(),
                    &oracle::count_pmf(&[0], &[z], t, p, false),
                    p,
                    format!("p={p} t={t} z={z}"),
                )?;
                for start in [-1, 1] {
                    let got = line.visited_pmf(t, start, z, true).unwrap();
                    let want = oracle::count_pmf(&[start], &[z], t, p, true);
                    compare(
                        got.masses(),
                        &want,
                        p,
                        format!("visited p={p} t={t} x={start} z={z}"),
                    )?;
                }
            }
            for c in [vec![0], vec![1], vec![0, 1], vec![1, 3], vec![0, 2]] {
                for (start, visit) in [(-1, false), (1, true), (1, false)] {
                    let got = line.joint_pmf_on_subset(t, start, &c, visit).unwrap();
                    let want = oracle::joint_pmf(start, &c, t, p, visit);
                    let keys: std::collections::BTreeSet<_> =
                        got.masses().keys().chain(want.keys()).collect();
                    let a: Vec<f64> = keys.iter().map(|k| got.prob(k)).collect();
                    let b: Vec<f64> = keys
                        .iter()
                        .map(|k| want.get(*k).copied().unwrap_or(0.0))
                        .collect();
                    compare(&a, &b, p, format!("joint p={p} t={t} C={c:?} x={start}"))?;
                }
            }
        }
        let mut plane = ExactEngine::new(ProcessParams::new(p, 2).unwrap());
        for t in 0..=2 {
            for z in feasible_sites(t, &Site::origin(2)) {
                let got = plane.descendant_pmf(t, &z).unwrap();
                compare(
                    got.masses(),
                    &oracle::count_pmf(&[0, 0], z.coords(), t, p, false),
                    p,
                    format!("p={p} t={t} z={z}"),
                )?;
            }
        }
    }
    Ok(format!(
        "{compared} laws, dyadic p bit-exact, others max deviation {worst:e}"
    ))
}

fn run_binary(args: &[&str]) -> Result<(i32, Vec<u8>), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_brwlab"))
        .args(args)
        .output()
        .map_err(|e| format!("cannot run brwlab: {e}"))?;
    Ok((out.status.code().unwrap_or(-1), out.stdout))
}

fn criterion_9() -> Check {
    let commands: [&[&str]; 7] = [
        &[
            "verify",
            "proposition",
            "--mode",
            "mc",
            "--t",
            "5",
            "--p-grid",
            "0.4:0.6:0.2",
            "--reps",
            "4000",
            "--resamples",
            "200",
        ],
        &[
            "verify", "coupling", "--t", "8", "--p", "0.6", "--reps", "3000",
        ],
        &[
            "verify", "Aprime", "--mode", "mc", "--t", "6", "--p", "0.7", "--reps", "3000",
        ],
        &[
            "verify", "B", "--mode", "mc", "--n", "6", "--p", "0.5", "--reps", "3000",
        ],
        &[
            "verify", "embed", "--n", "12", "--p", "0.6", "--reps", "2000",
        ],
        &[
            "simulate", "brw", "--d", "2", "--t", "5", "--p", "0.4", "--reps", "50",
        ],
        &[
            "simulate", "embedded", "--n", "8", "--p", "0.7", "--reps", "50",
        ],
    ];
    for args in commands {
        let mut outputs = Vec::new();
        for workers in ["1", "8"] {
            let mut full = args.to_vec();
            full.extend(["--seed", "99", "--workers", workers]);
            outputs.push(run_binary(&full)?);
        }
        ensure(!outputs[0].1.is_empty(), || {
            format!("{args:?}: empty output")
        })?;
        ensure(outputs[0] == outputs[1], || {
            format!("{args:?}: output differs between 1 and 8 workers")
        })?;
    }
    let dirs = ["workers-1", "workers-8"].map(|w| {
        std::env::temp_dir().join(format!("brwlab-acceptance-{}-{w}", std::process::id()))
    });
    for (dir, workers) in dirs.iter().zip(["1", "8"]) {
        let dir = dir.to_str().unwrap();
        run_binary(&[
            "simulate",
            "brw",
            "--t",
            "6",
            "--p",
            "0.6",
            "--reps",
            "40",
            "--seed",
            "3",
            "--workers",
            workers,
            "--out",
            dir,
        ])?;
    }
    for file in ["trajectories.jsonl", "summary.csv", "report.json"] {
        let read = |d: &Path| std::fs::read(d.join(file)).map_err(|e| format!("{file}: {e}"));
        ensure(read(&dirs[0])? == read(&dirs[1])?, || {
            format!("{file} differs between 1 and 8 workers")
        })?;
    }
    for d in &dirs {
        let _ = std::fs::remove_dir_all(d);
    }
    Ok(format!(
        "{} commands byte-identical at 1 and 8 workers",
        commands.len() + 1
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("exact duads on Z", criterion_1),
        ("exact full preorder on Z", criterion_2),
        ("statements A and A' exact", criterion_3),
        ("mirror coupling", criterion_4),
        ("statement B exhaustive", criterion_5),
        ("embedded equivalence", criterion_6),
        ("Z^2 extension", criterion_7),
        ("oracle cross-check", criterion_8),
        ("determinism across workers", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
