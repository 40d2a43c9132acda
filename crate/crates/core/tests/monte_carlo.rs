//! Statistical checks of the simulators and of the tests themselves.

use brwlab_core::brw_sim::Simulator;
use brwlab_core::exact_dist::{ExactEngine, ProcessParams};
use brwlab_core::lattice::{build_trapezoid, feasible_sites, Site};
use brwlab_core::percolation::sample_config;
use brwlab_core::stats_mc::{
    chi_square_equality, chi_square_fit, dominance_check, stream, BandSpec, EmpiricalDist,
    RandomStreamSpec,
};
use rand::Rng;
use rayon::prelude::*;

const RUNS: u64 = 100_000;

#[test]
fn critical_mean_total_is_one() {
    let sim = Simulator::new(ProcessParams::new(0.5, 1).unwrap());
    let totals: Vec<f64> = (0..RUNS)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(RandomStreamSpec::new(101, r));
            sim.simulate_final(&Site::line(0), 10, &mut rng)
                .unwrap()
                .total() as f64
        })
        .collect();
    let n = totals.len() as f64;
    let mean = totals.iter().sum::<f64>() / n;
    let var = totals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean} se {se}");
}

#[test]
fn simulated_counts_fit_exact_laws() {
    for (label, p) in [(0u64, 0.2), (1, 0.5), (2, 0.8)] {
        let sim = Simulator::new(ProcessParams::new(p, 1).unwrap());
        let mut exact = ExactEngine::new(sim.params());
        // per (t, z) histogram, z in -2..=2
        let hists: Vec<Vec<EmpiricalDist>> = (0..RUNS)
            .into_par_iter()
            .fold(
                || vec![vec![EmpiricalDist::new(); 5]; 9],
                |mut acc, r| {
                    let mut rng = stream(RandomStreamSpec::new(200 + label, r));
                    let traj = sim.simulate(&Site::line(0), 8, &mut rng).unwrap();
                    for (t, pop) in traj.iter().enumerate() {
                        for z in -2..=2i64 {
                            acc[t][(z + 2) as usize].push(pop.count_at(&Site::line(z)));
                        }
                    }
                    acc
                },
            )
            .reduce_with(|mut a, b| {
                for (ra, rb) in a.iter_mut().zip(b) {
                    for (x, y) in ra.iter_mut().zip(rb) {
                        x.merge(&y);
                    }
                }
                a
            })
            .unwrap();
        for t in 1..=8u32 {
            for z in feasible_sites(t, &Site::line(0))
                .into_iter()
                .filter(|z| z.norm1() <= 2)
            {
                let law = exact.descendant_pmf(t, &z).unwrap();
                let sample = &hists[t as usize][(z.coords()[0] + 2) as usize];
                let r = chi_square_fit(sample, &law, 1e-3);
                assert!(!r.reject, "p={p} t={t} z={z}: {r:?}");
            }
        }
    }
}

#[test]
fn open_bond_count_is_binomial_mean() {
    let trap = build_trapezoid(3).unwrap();
    let counts: Vec<f64> = (0..RUNS)
        .map(|r| {
            let mut rng = stream(RandomStreamSpec::new(300, r));
            sample_config(&trap, 0.5, &mut rng).open_count() as f64
        })
        .collect();
    let mean = counts.iter().sum::<f64>() / RUNS as f64;
    let se = (18.0 * 0.25 / RUNS as f64).sqrt();
    assert!((mean - 9.0).abs() < 3.0 * se, "mean {mean}");
}

fn bernoulli_sample(seed: u64, idx: u64, n: u64, p: f64) -> EmpiricalDist {
    let mut rng = stream(RandomStreamSpec::new(seed, idx));
    EmpiricalDist::from_samples((0..n).map(|_| u64::from(rng.random_bool(p))))
}

#[test]
fn chi_square_rarely_rejects_equal_bernoullis() {
    let rejected = (0..100u64)
        .into_par_iter()
        .filter(|&i| {
            let a = bernoulli_sample(400, 2 * i, RUNS, 0.25);
            let b = bernoulli_sample(400, 2 * i + 1, RUNS, 0.25);
            chi_square_equality(&a, &b, 1e-3).reject
        })
        .count();
    assert!(rejected <= 1, "{rejected} of 100 rejected");
}

#[test]
fn chi_square_rejection_rate_is_calibrated() {
    let alpha = 0.01;
    let rejected = (0..1000u64)
        .into_par_iter()
        .filter(|&i| {
            let draw = |idx| {
                let mut rng = stream(RandomStreamSpec::new(500, idx));
                EmpiricalDist::from_samples(
                    (0..2000).map(|_| (0..6).filter(|_| rng.random_bool(0.3)).count() as u64),
                )
            };
            chi_square_equality(&draw(2 * i), &draw(2 * i + 1), alpha).reject
        })
        .count();
    let rate = rejected as f64 / 1000.0;
    assert!(
        (alpha / 3.0..=3.0 * alpha).contains(&rate),
        "rejection rate {rate}"
    );
}

#[test]
fn dominance_of_binomial_over_bernoulli_is_not_flagged() {
    let mut rng = stream(RandomStreamSpec::new(600, 0));
    let bin = EmpiricalDist::from_samples(
        (0..RUNS).map(|_| u64::from(rng.random_bool(0.25)) + u64::from(rng.random_bool(0.25))),
    );
    let bern = EmpiricalDist::from_samples((0..RUNS).map(|_| u64::from(rng.random_bool(0.25))));
    let band = BandSpec {
        seed: 601,
        ..BandSpec::default()
    };
    assert!(!dominance_check(&bin, &bern, band).reject);
    assert!(dominance_check(&bern, &bin, band).reject);
}

#[test]
fn neighbouring_streams_are_uncorrelated() {
    let draw = |idx| -> Vec<f64> {
        let mut rng = stream(RandomStreamSpec::new(700, idx));
        (0..RUNS).map(|_| rng.random::<f64>()).collect()
    };
    let (x, y) = (draw(0), draw(1));
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r = cov / (vx * vy).sqrt();
    assert!(r.abs() < 0.01, "correlation {r}");
}
