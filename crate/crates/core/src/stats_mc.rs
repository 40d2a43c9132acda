//! Monte Carlo statistics: reproducible random streams, empirical count
//! distributions, two-sample chi-square, goodness of fit against an exact
//! law, and a one-sided ECDF dominance check calibrated by bootstrap.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::exact_dist::Pmf;

/// Identifies one replicate's random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomStreamSpec {
    pub master_seed: u64,
    pub replicate_index: u64,
}

impl RandomStreamSpec {
    pub fn new(master_seed: u64, replicate_index: u64) -> Self {
        RandomStreamSpec {
            master_seed,
            replicate_index,
        }
    }
}

pub type Stream = ChaCha8Rng;

/// ChaCha8 keyed by `master_seed` (expanded with `SeedableRng::seed_from_u64`)
/// and positioned on stream number `replicate_index`, word 0.
///
/// Distinct replicate indices select disjoint ChaCha streams under the same
/// key, so replicates are independent and can run in any order.
pub fn stream(spec: RandomStreamSpec) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.master_seed);
    rng.set_stream(spec.replicate_index);
    rng
}

/// Derives an independent master seed for a labelled sub-experiment
/// (SplitMix64 finalizer over `seed ^ label`).
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut z = seed ^ label.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Exact `Binomial(n, p)` draw with the degenerate cases short-circuited.
pub fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p)
            .expect("p checked to lie in (0, 1)")
            .sample(rng)
    }
}

/// Histogram of non-negative integer observations.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmpiricalDist {
    counts: BTreeMap<u64, u64>,
    n: u64,
}

impl EmpiricalDist {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_samples(samples: impl IntoIterator<Item = u64>) -> Self {
        let mut d = Self::new();
        for s in samples {
            d.push(s);
        }
        d
    }

    pub fn push(&mut self, value: u64) {
        self.push_n(value, 1);
    }

    pub fn push_n(&mut self, value: u64, times: u64) {
        if times > 0 {
            *self.counts.entry(value).or_insert(0) += times;
            self.n += times;
        }
    }

    pub fn merge(&mut self, other: &EmpiricalDist) {
        for (&v, &c) in &other.counts {
            self.push_n(v, c);
        }
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn counts(&self) -> &BTreeMap<u64, u64> {
        &self.counts
    }

    pub fn occurrences(&self, value: u64) -> u64 {
        self.counts.get(&value).copied().unwrap_or(0)
    }

    pub fn mean(&self) -> f64 {
        let s: f64 = self.counts.iter().map(|(&v, &c)| v as f64 * c as f64).sum();
        s / self.n as f64
    }

    /// `P(X <= x)` under the empirical law.
    pub fn ecdf(&self, x: u64) -> f64 {
        let below: u64 = self.counts.range(..=x).map(|(_, c)| c).sum();
        below as f64 / self.n as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    ChiSquareEquality,
    ChiSquareFit,
    Dominance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub kind: TestKind,
    pub statistic: f64,
    pub dof: Option<usize>,
    pub p_value: Option<f64>,
    /// Significance level (chi-square) or `1 - band level` (dominance).
    pub alpha: f64,
    pub reject: bool,
    /// Too little spread to test (fewer than two pooled bins).
    pub inconclusive: bool,
    /// Upper edge of the bootstrap band, for dominance checks.
    pub band: Option<f64>,
}

/// Minimum expected count per pooled bin.
pub const MIN_EXPECTED: f64 = 5.0;

/// Groups sorted cells into bins whose expected counts all reach
/// [`MIN_EXPECTED`]; a short remainder joins the last full bin.
fn pool_bins(cells: &[(Vec<f64>, Vec<f64>)]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut bins: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut cur: Option<(Vec<f64>, Vec<f64>)> = None;
    for (obs, exp) in cells {
        let c = cur.get_or_insert_with(|| (vec![0.0; obs.len()], vec![0.0; exp.len()]));
        for (a, b) in c.0.iter_mut().zip(obs) {
            *a += b;
        }
        for (a, b) in c.1.iter_mut().zip(exp) {
            *a += b;
        }
        if c.1.iter().all(|&e| e >= MIN_EXPECTED) {
            bins.push(cur.take().unwrap());
        }
    }
    if let Some(rest) = cur {
        match bins.last_mut() {
            Some(last) => {
                for (a, b) in last.0.iter_mut().zip(&rest.0) {
                    *a += b;
                }
                for (a, b) in last.1.iter_mut().zip(&rest.1) {
                    *a += b;
                }
            }
            None => bins.push(rest),
        }
    }
    bins
}

fn chi_square_result(
    kind: TestKind,
    bins: &[(Vec<f64>, Vec<f64>)],
    dof_loss: usize,
    alpha: f64,
) -> TestResult {
    if bins.len() < 2 {
        return TestResult {
            kind,
            statistic: 0.0,
            dof: None,
            p_value: None,
            alpha,
            reject: false,
            inconclusive: true,
            band: None,
        };
    }
    let statistic: f64 = bins
        .iter()
        .flat_map(|(obs, exp)| obs.iter().zip(exp))
        .filter(|(_, e)| **e > 0.0)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = bins.len() - dof_loss;
    let p_value = ChiSquared::new(dof as f64).expect("dof >= 1").sf(statistic);
    TestResult {
        kind,
        statistic,
        dof: Some(dof),
        p_value: Some(p_value),
        alpha,
        reject: p_value < alpha,
        inconclusive: false,
        band: None,
    }
}

/// Two-sample chi-square test of equal laws.
pub fn chi_square_equality(a: &EmpiricalDist, b: &EmpiricalDist, alpha: f64) -> TestResult {
    assert!(!a.is_empty() && !b.is_empty(), "chi-square needs samples");
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let total = na + nb;
    let mut values: Vec<u64> = a.counts.keys().chain(b.counts.keys()).copied().collect();
    values.sort_unstable();
    values.dedup();
    let cells: Vec<_> = values
        .iter()
        .map(|&v| {
            let (oa, ob) = (a.occurrences(v) as f64, b.occurrences(v) as f64);
            let pooled = oa + ob;
            (vec![oa, ob], vec![na * pooled / total, nb * pooled / total])
        })
        .collect();
    chi_square_result(TestKind::ChiSquareEquality, &pool_bins(&cells), 1, alpha)
}

/// Chi-square goodness of fit of a sample against an exact law.
///
/// The last pooled bin absorbs every value beyond the law's retained support
/// together with its truncated mass.
pub fn chi_square_fit(sample: &EmpiricalDist, law: &Pmf, alpha: f64) -> TestResult {
    assert!(!sample.is_empty(), "chi-square needs samples");
    let n = sample.len() as f64;
    let len = law.support_len();
    let mut cells: Vec<_> = (0..len)
        .map(|k| {
            (
                vec![sample.occurrences(k as u64) as f64],
                vec![n * law.prob(k)],
            )
        })
        .collect();
    let beyond: u64 = sample.counts.range(len as u64..).map(|(_, c)| c).sum();
    if let Some(last) = cells.last_mut() {
        last.0[0] += beyond as f64;
        last.1[0] += n * law.truncated_mass();
    }
    chi_square_result(TestKind::ChiSquareFit, &pool_bins(&cells), 1, alpha)
}

/// Bootstrap settings for [`dominance_check`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub level: f64,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for BandSpec {
    fn default() -> Self {
        BandSpec {
            level: 0.99,
            resamples: 1000,
            seed: 0,
        }
    }
}

fn max_ecdf_gap(a: &EmpiricalDist, b: &EmpiricalDist) -> f64 {
    let mut values: Vec<u64> = a.counts.keys().chain(b.counts.keys()).copied().collect();
    values.sort_unstable();
    values.dedup();
    let (na, nb) = (a.n as f64, b.n as f64);
    let (mut ca, mut cb) = (0u64, 0u64);
    let mut best = f64::NEG_INFINITY;
    for v in values {
        ca += a.occurrences(v);
        cb += b.occurrences(v);
        best = best.max(ca as f64 / na - cb as f64 / nb);
    }
    best
}

/// Resample of size `n` from the pooled histogram, drawn as a multinomial by
/// sequential conditional binomials.
fn multinomial_resample<R: Rng>(
    pool: &[(u64, u64)],
    pool_n: u64,
    n: u64,
    rng: &mut R,
) -> EmpiricalDist {
    let mut out = EmpiricalDist::new();
    let (mut left_n, mut left_mass) = (n, pool_n);
    for &(value, weight) in pool {
        if left_n == 0 {
            break;
        }
        let k = binomial(left_n, weight as f64 / left_mass as f64, rng);
        out.push_n(value, k);
        left_n -= k;
        left_mass -= weight;
    }
    out
}

/// One-sided check that `a` stochastically dominates `b`.
///
/// The statistic is `max_x (ECDF_a(x) - ECDF_b(x))`. Its null distribution at
/// the boundary of the hypothesis (equal laws) is bootstrapped by resampling
/// both arms from the pooled sample; a violation is reported only when the
/// statistic exceeds the `band.level` quantile of the bootstrap replicates.
/// Replicate `r` uses `stream(band.seed, r)`, so the result does not depend
/// on the thread count.
pub fn dominance_check(a: &EmpiricalDist, b: &EmpiricalDist, band: BandSpec) -> TestResult {
    assert!(
        !a.is_empty() && !b.is_empty(),
        "dominance check needs samples"
    );
    let statistic = max_ecdf_gap(a, b);
    let mut pooled = a.clone();
    pooled.merge(b);
    let pool: Vec<(u64, u64)> = pooled.counts.iter().map(|(&v, &c)| (v, c)).collect();
    let mut replicates: Vec<f64> = (0..band.resamples as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(RandomStreamSpec::new(band.seed, r));
            let ra = multinomial_resample(&pool, pooled.n, a.n, &mut rng);
            let rb = multinomial_resample(&pool, pooled.n, b.n, &mut rng);
            max_ecdf_gap(&ra, &rb)
        })
        .collect();
    replicates.sort_by(f64::total_cmp);
    let idx = ((band.level * replicates.len() as f64).ceil() as usize)
        .clamp(1, replicates.len().max(1))
        - 1;
    let edge = replicates.get(idx).copied().unwrap_or(0.0);
    let exceed = replicates.iter().filter(|&&r| r >= statistic).count();
    TestResult {
        kind: TestKind::Dominance,
        statistic,
        dof: None,
        p_value: Some((exceed + 1) as f64 / (replicates.len() + 1) as f64),
        alpha: 1.0 - band.level,
        reject: statistic > edge + 1e-12,
        inconclusive: false,
        band: Some(edge),
    }
}

/// Per-test significance keeping the family-wise error at `family_alpha`.
pub fn bonferroni(family_alpha: f64, tests: usize) -> f64 {
    family_alpha / tests.max(1) as f64
}
