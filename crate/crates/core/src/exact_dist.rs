//! Exact distributions of particle counts by recursive convolution.
//!
//! A particle at the origin at time 0 has, at time `t`, a number of
//! descendants at displacement `z` whose law `D_t(z)` satisfies
//!
//! ```text
//! D_0(z) = delta_{[z = 0]}
//! D_t(z) = conv over neighbours e of  mix_p( D_{t-1}(z - e) )
//! ```
//!
//! where `mix_p(a) = p * a + (1 - p) * delta_0` accounts for the child in
//! direction `e` being born or not. The visit-constrained and joint laws use
//! the same recursion over typed states `(site, visited)`.
//!
//! Tail mass is trimmed when it is negligible (at most the configured cap per
//! operation), recorded in `truncated_mass`, and never renormalized away.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{resource, usage, Result};
use crate::lattice::{feasible_sites, modulus_leq, Site};

/// Default per-operation truncation cap.
pub const DEFAULT_TRUNCATION: f64 = 1e-15;

const NORMALIZATION_SLACK: f64 = 1e-12;

/// Birth probability and lattice dimension of the branching random walk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessParams {
    pub p: f64,
    pub d: usize,
}

impl ProcessParams {
    pub fn new(p: f64, d: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(usage(format!("birth probability {p} outside [0, 1]")));
        }
        if d == 0 {
            return Err(usage("dimension must be at least 1"));
        }
        Ok(ProcessParams { p, d })
    }
}

/// Probability mass function over counts `0, 1, 2, ...`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pmf {
    mass: Vec<f64>,
    truncated_mass: f64,
}

impl Pmf {
    /// Point mass at `k`.
    pub fn delta(k: usize) -> Self {
        let mut mass = vec![0.0; k + 1];
        mass[k] = 1.0;
        Pmf {
            mass,
            truncated_mass: 0.0,
        }
    }

    pub fn from_masses(mass: Vec<f64>) -> Result<Self> {
        Self::with_truncation(mass, 0.0)
    }

    pub fn with_truncation(mass: Vec<f64>, truncated_mass: f64) -> Result<Self> {
        let bad = |m: f64| m.is_nan() || m < 0.0;
        if mass.iter().any(|&m| bad(m)) || bad(truncated_mass) {
            return Err(usage("probabilities must be non-negative"));
        }
        let total: f64 = mass.iter().sum::<f64>() + truncated_mass;
        if (total - 1.0).abs() > NORMALIZATION_SLACK {
            return Err(usage(format!("mass sums to {total}, not 1")));
        }
        let mut pmf = Pmf {
            mass,
            truncated_mass,
        };
        pmf.trim_zeros();
        Ok(pmf)
    }

    /// Bernoulli(p) on `{0, 1}`.
    pub fn bernoulli(p: f64) -> Self {
        Pmf {
            mass: vec![1.0 - p, p],
            truncated_mass: 0.0,
        }
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.mass.get(k).copied().unwrap_or(0.0)
    }

    pub fn truncated_mass(&self) -> f64 {
        self.truncated_mass
    }

    /// Largest count carrying retained mass, plus one.
    pub fn support_len(&self) -> usize {
        self.mass.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.mass
            .iter()
            .enumerate()
            .map(|(k, m)| k as f64 * m)
            .sum()
    }

    /// `CDF(x)` for `x = 0 .. len - 1`, padded with the final value.
    pub fn cdf(&self, len: usize) -> Vec<f64> {
        let mut acc = 0.0;
        (0..len.max(1))
            .map(|k| {
                acc += self.prob(k);
                acc
            })
            .collect()
    }

    fn trim_zeros(&mut self) {
        while self.mass.len() > 1 && self.mass.last() == Some(&0.0) {
            self.mass.pop();
        }
        if self.mass.is_empty() {
            self.mass.push(0.0);
        }
    }

    /// Drops trailing entries while the dropped total stays within `cap`.
    fn trim_tail(&mut self, cap: f64) {
        self.trim_zeros();
        let mut dropped = 0.0;
        while self.mass.len() > 1 {
            let last = *self.mass.last().unwrap();
            if dropped + last > cap {
                break;
            }
            dropped += last;
            self.mass.pop();
        }
        self.truncated_mass += dropped;
        self.trim_zeros();
    }
}

fn format_prob(x: f64) -> String {
    format!("{x:?}")
}

impl Pmf {
    /// `value,probability` rows with a `# truncated_mass,<x>` footer, LF endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("value,probability\n");
        for (k, m) in self.mass.iter().enumerate() {
            if *m != 0.0 {
                out.push_str(&format!("{k},{}\n", format_prob(*m)));
            }
        }
        out.push_str(&format!(
            "# truncated_mass,{}\n",
            format_prob(self.truncated_mass)
        ));
        out
    }
}

/// Law of `X + Y` for independent `X ~ a`, `Y ~ b`, trimmed at [`DEFAULT_TRUNCATION`].
pub fn convolve(a: &Pmf, b: &Pmf) -> Pmf {
    convolve_capped(a, b, DEFAULT_TRUNCATION)
}

pub fn convolve_capped(a: &Pmf, b: &Pmf, cap: f64) -> Pmf {
    let mut mass = vec![0.0; a.mass.len() + b.mass.len() - 1];
    for (i, &x) in a.mass.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.mass.iter().enumerate() {
            mass[i + j] += x * y;
        }
    }
    let (ta, tb) = (a.truncated_mass, b.truncated_mass);
    let mut out = Pmf {
        mass,
        truncated_mass: ta + tb - ta * tb,
    };
    out.trim_tail(cap);
    out
}

/// Convolution of all `factors`, taken in an order fixed by their content
/// so that permuted factor lists give bit-identical results.
pub fn convolve_all(mut factors: Vec<Pmf>, cap: f64) -> Pmf {
    factors.sort_by(|a, b| {
        a.mass
            .len()
            .cmp(&b.mass.len())
            .then_with(|| {
                a.mass
                    .iter()
                    .zip(&b.mass)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .then_with(|| a.truncated_mass.total_cmp(&b.truncated_mass))
    });
    let mut iter = factors.into_iter();
    let Some(first) = iter.next() else {
        return Pmf::delta(0);
    };
    iter.fold(first, |acc, f| convolve_capped(&acc, &f, cap))
}

/// `p * a + (1 - p) * delta_0`.
pub fn bernoulli_mix(a: &Pmf, p: f64) -> Pmf {
    let mut mass: Vec<f64> = a.mass.iter().map(|m| p * m).collect();
    mass[0] += 1.0 - p;
    let mut out = Pmf {
        mass,
        truncated_mass: p * a.truncated_mass,
    };
    out.trim_zeros();
    out
}

/// Joint law of the count vector on an ordered set of sites of `Z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointPmf {
    sites: Vec<i64>,
    mass: BTreeMap<Vec<u32>, f64>,
    truncated_mass: f64,
}

impl JointPmf {
    pub fn delta(sites: Vec<i64>, counts: Vec<u32>) -> Self {
        debug_assert_eq!(sites.len(), counts.len());
        JointPmf {
            sites,
            mass: BTreeMap::from([(counts, 1.0)]),
            truncated_mass: 0.0,
        }
    }

    pub fn sites(&self) -> &[i64] {
        &self.sites
    }

    pub fn masses(&self) -> &BTreeMap<Vec<u32>, f64> {
        &self.mass
    }

    pub fn prob(&self, counts: &[u32]) -> f64 {
        self.mass.get(counts).copied().unwrap_or(0.0)
    }

    pub fn truncated_mass(&self) -> f64 {
        self.truncated_mass
    }

    /// Marginal law of the `i`-th coordinate.
    pub fn marginal(&self, i: usize) -> Pmf {
        let len = self
            .mass
            .keys()
            .map(|k| k[i] as usize + 1)
            .max()
            .unwrap_or(1);
        let mut mass = vec![0.0; len];
        for (k, m) in &self.mass {
            mass[k[i] as usize] += m;
        }
        let mut pmf = Pmf {
            mass,
            truncated_mass: self.truncated_mass,
        };
        pmf.trim_zeros();
        pmf
    }

    fn convolve(&self, other: &JointPmf, cap: f64) -> JointPmf {
        let mut mass = BTreeMap::new();
        for (ka, pa) in &self.mass {
            for (kb, pb) in &other.mass {
                let key: Vec<u32> = ka.iter().zip(kb).map(|(x, y)| x + y).collect();
                *mass.entry(key).or_insert(0.0) += pa * pb;
            }
        }
        let (ta, tb) = (self.truncated_mass, other.truncated_mass);
        let mut out = JointPmf {
            sites: self.sites.clone(),
            mass,
            truncated_mass: ta + tb - ta * tb,
        };
        out.trim(cap);
        out
    }

    fn mix(&self, p: f64) -> JointPmf {
        let mut mass: BTreeMap<Vec<u32>, f64> =
            self.mass.iter().map(|(k, m)| (k.clone(), p * m)).collect();
        *mass.entry(vec![0; self.sites.len()]).or_insert(0.0) += 1.0 - p;
        mass.retain(|_, m| *m != 0.0);
        JointPmf {
            sites: self.sites.clone(),
            mass,
            truncated_mass: p * self.truncated_mass,
        }
    }

    /// Drops the lightest entries while the dropped total stays within `cap`.
    fn trim(&mut self, cap: f64) {
        self.mass.retain(|_, m| *m != 0.0);
        let mut light: Vec<(f64, Vec<u32>)> = self
            .mass
            .iter()
            .filter(|(_, m)| **m <= cap)
            .map(|(k, m)| (*m, k.clone()))
            .collect();
        light.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        let mut dropped = 0.0;
        for (m, k) in light {
            if dropped + m > cap || self.mass.len() == 1 {
                break;
            }
            dropped += m;
            self.mass.remove(&k);
        }
        self.truncated_mass += dropped;
    }
}

impl JointPmf {
    /// One `n@<site>` column per site, then `probability`.
    pub fn to_csv(&self) -> String {
        let mut header: Vec<String> = self.sites.iter().map(|c| format!("n@{c}")).collect();
        header.push("probability".into());
        let mut out = header.join(",") + "\n";
        for (k, m) in &self.mass {
            let row: Vec<String> = k.iter().map(u32::to_string).collect();
            out.push_str(&format!("{},{}\n", row.join(","), format_prob(*m)));
        }
        out.push_str(&format!(
            "# truncated_mass,{}\n",
            format_prob(self.truncated_mass)
        ));
        out
    }
}

/// Common view of [`Pmf`] and [`JointPmf`] for equality checks.
pub trait MassFunction {
    fn arity(&self) -> usize;
    fn truncated(&self) -> f64;
    /// Largest pointwise difference in retained mass.
    fn sup_distance(&self, other: &Self) -> f64;
}

impl MassFunction for Pmf {
    fn arity(&self) -> usize {
        1
    }

    fn truncated(&self) -> f64 {
        self.truncated_mass
    }

    fn sup_distance(&self, other: &Self) -> f64 {
        let len = self.mass.len().max(other.mass.len());
        (0..len)
            .map(|k| (self.prob(k) - other.prob(k)).abs())
            .fold(0.0, f64::max)
    }
}

impl MassFunction for JointPmf {
    fn arity(&self) -> usize {
        self.sites.len()
    }

    fn truncated(&self) -> f64 {
        self.truncated_mass
    }

    fn sup_distance(&self, other: &Self) -> f64 {
        self.mass
            .keys()
            .chain(other.mass.keys())
            .map(|k| (self.prob(k) - other.prob(k)).abs())
            .fold(0.0, f64::max)
    }
}

/// Distributional equality within `tol`.
///
/// The larger of the two truncated masses is charged against the tolerance,
/// since dropped tails may hide a difference of that size.
pub fn pmf_equal<M: MassFunction>(a: &M, b: &M, tol: f64) -> Result<bool> {
    Ok(equality_gap(a, b)? <= tol)
}

/// Sup-norm distance plus the unaccounted (truncated) mass.
pub fn equality_gap<M: MassFunction>(a: &M, b: &M) -> Result<f64> {
    if a.arity() != b.arity() {
        return Err(usage(format!(
            "arity mismatch: {} vs {}",
            a.arity(),
            b.arity()
        )));
    }
    Ok(a.sup_distance(b) + a.truncated().max(b.truncated()))
}

/// `max_x (CDF_a(x) - CDF_b(x))`; non-positive when `a` dominates `b`.
pub fn dominance_gap(a: &Pmf, b: &Pmf) -> f64 {
    let len = a.support_len().max(b.support_len());
    a.cdf(len)
        .iter()
        .zip(b.cdf(len))
        .map(|(x, y)| x - y)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// First-order stochastic dominance of `a` over `b`: `CDF_a <= CDF_b + tol`.
pub fn dominates(a: &Pmf, b: &Pmf, tol: f64) -> bool {
    dominance_gap(a, b) <= tol
}

/// Resource limits for the exact engine.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactCaps {
    pub max_time: u32,
    pub max_support: usize,
    pub truncation: f64,
    /// Largest subset accepted by [`ExactEngine::joint_pmf_on_subset`].
    pub max_subset: usize,
}

impl Default for ExactCaps {
    fn default() -> Self {
        ExactCaps {
            max_time: 64,
            max_support: 1 << 20,
            truncation: DEFAULT_TRUNCATION,
            max_subset: 2,
        }
    }
}

/// Memoizing evaluator of the count recursions for one parameter set.
///
/// Tables are owned by the engine; share work across threads by giving each
/// worker its own engine.
#[derive(Debug)]
pub struct ExactEngine {
    params: ProcessParams,
    caps: ExactCaps,
    descendant: HashMap<(u32, Site), Pmf>,
    // (t, site, target) for lineages that have not yet touched 0
    unvisited: HashMap<(u32, i64, i64), Pmf>,
}

impl ExactEngine {
    pub fn new(params: ProcessParams) -> Self {
        Self::with_caps(params, ExactCaps::default())
    }

    pub fn with_caps(params: ProcessParams, caps: ExactCaps) -> Self {
        ExactEngine {
            params,
            caps,
            descendant: HashMap::new(),
            unvisited: HashMap::new(),
        }
    }

    pub fn params(&self) -> ProcessParams {
        self.params
    }

    pub fn caps(&self) -> ExactCaps {
        self.caps
    }

    fn check_time(&self, t: u32) -> Result<()> {
        if t > self.caps.max_time {
            return Err(resource(format!(
                "time {t} exceeds cap {}",
                self.caps.max_time
            )));
        }
        Ok(())
    }

    fn check_support(&self, pmf: &Pmf) -> Result<()> {
        if pmf.support_len() > self.caps.max_support {
            return Err(resource(format!(
                "support {} exceeds cap {}",
                pmf.support_len(),
                self.caps.max_support
            )));
        }
        Ok(())
    }

    fn require_line(&self) -> Result<()> {
        if self.params.d != 1 {
            return Err(usage("visit-constrained laws are defined on Z only"));
        }
        Ok(())
    }

    /// Law of the number of time-`t` descendants at displacement `z` of one
    /// particle at the origin.
    pub fn descendant_pmf(&mut self, t: u32, z: &Site) -> Result<Pmf> {
        if z.dim() != self.params.d {
            return Err(usage(format!(
                "site {z} does not have dimension {}",
                self.params.d
            )));
        }
        self.check_time(t)?;
        self.descendant_rec(t, z)
    }

    fn descendant_rec(&mut self, t: u32, z: &Site) -> Result<Pmf> {
        if t == 0 {
            return Ok(Pmf::delta(usize::from(z.is_origin())));
        }
        if z.norm1() > i64::from(t) || (z.norm1() + i64::from(t)) % 2 != 0 {
            return Ok(Pmf::delta(0));
        }
        if let Some(hit) = self.descendant.get(&(t, z.clone())) {
            return Ok(hit.clone());
        }
        let mut factors = Vec::with_capacity(2 * z.dim());
        for axis in 0..z.dim() {
            for step in [-1, 1] {
                let child = self.descendant_rec(t - 1, &z.offset(axis, -step))?;
                factors.push(bernoulli_mix(&child, self.params.p));
            }
        }
        let acc = convolve_all(factors, self.caps.truncation);
        self.check_support(&acc)?;
        self.descendant.insert((t, z.clone()), acc.clone());
        Ok(acc)
    }

    /// Law of the time-`t` count at `z` of descendants of a particle at
    /// `start`, restricted (when `require_visit`) to lineages that occupied
    /// site 0 at some time `<= t`.
    pub fn visited_pmf(&mut self, t: u32, start: i64, z: i64, require_visit: bool) -> Result<Pmf> {
        self.require_line()?;
        self.check_time(t)?;
        if require_visit {
            self.visited_rec(t, start, z)
        } else {
            self.descendant_rec(t, &Site::line(z - start))
        }
    }

    fn visited_rec(&mut self, t: u32, x: i64, z: i64) -> Result<Pmf> {
        if x == 0 {
            // flagged lineages are unconstrained from here on
            return self.descendant_rec(t, &Site::line(z - x));
        }
        if t == 0 {
            return Ok(Pmf::delta(0));
        }
        if let Some(hit) = self.unvisited.get(&(t, x, z)) {
            return Ok(hit.clone());
        }
        let mut factors = Vec::with_capacity(2);
        for step in [-1, 1] {
            let child = self.visited_rec(t - 1, x + step, z)?;
            factors.push(bernoulli_mix(&child, self.params.p));
        }
        let acc = convolve_all(factors, self.caps.truncation);
        self.check_support(&acc)?;
        self.unvisited.insert((t, x, z), acc.clone());
        Ok(acc)
    }

    /// Joint law of the time-`t` counts on the ordered subset `subset`.
    pub fn joint_pmf_on_subset(
        &mut self,
        t: u32,
        start: i64,
        subset: &[i64],
        require_visit: bool,
    ) -> Result<JointPmf> {
        self.require_line()?;
        self.check_time(t)?;
        if subset.is_empty() || subset.len() > self.caps.max_subset {
            return Err(usage(format!(
                "subset size {} outside 1..={}",
                subset.len(),
                self.caps.max_subset
            )));
        }
        if subset.iter().any(|&c| c < 0) {
            return Err(usage("subset must lie in {0, 1, 2, ...}"));
        }
        let mut memo = HashMap::new();
        self.joint_rec(t, start, !require_visit, subset, &mut memo)
    }

    fn joint_rec(
        &self,
        t: u32,
        x: i64,
        flagged: bool,
        subset: &[i64],
        memo: &mut HashMap<(u32, i64, bool), JointPmf>,
    ) -> Result<JointPmf> {
        let flagged = flagged || x == 0;
        if t == 0 {
            let counts = subset
                .iter()
                .map(|&c| u32::from(flagged && c == x))
                .collect();
            return Ok(JointPmf::delta(subset.to_vec(), counts));
        }
        if let Some(hit) = memo.get(&(t, x, flagged)) {
            return Ok(hit.clone());
        }
        let mut acc = JointPmf::delta(subset.to_vec(), vec![0; subset.len()]);
        for step in [-1, 1] {
            let child = self.joint_rec(t - 1, x + step, flagged, subset, memo)?;
            acc = acc.convolve(&child.mix(self.params.p), self.caps.truncation);
        }
        if acc.mass.len() > self.caps.max_support {
            return Err(resource(format!(
                "joint support {} exceeds cap {}",
                acc.mass.len(),
                self.caps.max_support
            )));
        }
        memo.insert((t, x, flagged), acc.clone());
        Ok(acc)
    }
}

pub fn descendant_pmf(t: u32, z: &Site, params: ProcessParams) -> Result<Pmf> {
    ExactEngine::new(params).descendant_pmf(t, z)
}

pub fn visited_pmf(
    t: u32,
    start: i64,
    z: i64,
    require_visit: bool,
    params: ProcessParams,
) -> Result<Pmf> {
    ExactEngine::new(params).visited_pmf(t, start, z, require_visit)
}

pub fn joint_pmf_on_subset(
    t: u32,
    start: i64,
    subset: &[i64],
    require_visit: bool,
    params: ProcessParams,
) -> Result<JointPmf> {
    ExactEngine::new(params).joint_pmf_on_subset(t, start, subset, require_visit)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonotonicityMode {
    /// Pairs of feasible sites at L1 distance 2.
    Duads,
    /// Every pair of feasible sites ordered by the modulus preorder.
    FullPreorder,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `near` must stochastically dominate `far`.
    Dominates,
    /// Equal moduli: the two laws must coincide.
    Equal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairCheck {
    pub t: u32,
    pub near: Site,
    pub far: Site,
    pub relation: Relation,
    /// `max_x (CDF_near - CDF_far)` for dominance, equality gap otherwise.
    pub gap: f64,
    pub passed: bool,
    pub cdf_near: Vec<f64>,
    pub cdf_far: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub params: ProcessParams,
    pub t_max: u32,
    pub mode: MonotonicityMode,
    pub tol: f64,
    pub pairs_checked: usize,
    /// Duads whose sites are incomparable in the modulus preorder (d >= 2).
    pub incomparable_skipped: usize,
    pub max_truncated_mass: f64,
    pub checks: Vec<PairCheck>,
}

impl MonotonicityReport {
    pub fn violations(&self) -> impl Iterator<Item = &PairCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Sorts a pair into (near, far, relation) by the modulus preorder, or
/// `None` when incomparable.
pub fn order_pair(z: &Site, w: &Site) -> Result<Option<(Site, Site, Relation)>> {
    let zw = modulus_leq(z, w)?;
    let wz = modulus_leq(w, z)?;
    Ok(match (zw, wz) {
        (true, true) => Some((z.clone(), w.clone(), Relation::Equal)),
        (true, false) => Some((z.clone(), w.clone(), Relation::Dominates)),
        (false, true) => Some((w.clone(), z.clone(), Relation::Dominates)),
        (false, false) => None,
    })
}

/// Pairs of sites compared at time `t`: unordered, lexicographically sorted.
pub fn comparison_pairs(t: u32, d: usize, mode: MonotonicityMode) -> Vec<(Site, Site)> {
    let sites = feasible_sites(t, &Site::origin(d));
    let mut pairs = Vec::new();
    for (i, z) in sites.iter().enumerate() {
        for w in &sites[i + 1..] {
            let keep = match mode {
                MonotonicityMode::Duads => z.l1_distance(w) == 2,
                MonotonicityMode::FullPreorder => true,
            };
            if keep {
                pairs.push((z.clone(), w.clone()));
            }
        }
    }
    pairs
}

/// Checks the modulus-monotonicity of the count laws for every `t <= t_max`.
///
/// Dominance pairs pass when `CDF_near <= CDF_far + tol`; equal-moduli pairs
/// pass when their equality gap is at most `tol`.
pub fn verify_monotonicity_exact(
    t_max: u32,
    params: ProcessParams,
    mode: MonotonicityMode,
    tol: f64,
) -> Result<MonotonicityReport> {
    if !(1..=2).contains(&params.d) {
        return Err(usage(format!(
            "exact monotonicity supports d in {{1, 2}}, got {}",
            params.d
        )));
    }
    let mut engine = ExactEngine::new(params);
    engine.check_time(t_max)?;
    let mut checks = Vec::new();
    let mut skipped = 0;
    let mut max_truncated: f64 = 0.0;
    for t in 0..=t_max {
        for (z, w) in comparison_pairs(t, params.d, mode) {
            let Some((near, far, relation)) = order_pair(&z, &w)? else {
                skipped += 1;
                continue;
            };
            let a = engine.descendant_pmf(t, &near)?;
            let b = engine.descendant_pmf(t, &far)?;
            max_truncated = max_truncated
                .max(a.truncated_mass())
                .max(b.truncated_mass());
            let gap = match relation {
                Relation::Dominates => dominance_gap(&a, &b),
                Relation::Equal => equality_gap(&a, &b)?,
            };
            let len = a.support_len().max(b.support_len());
            checks.push(PairCheck {
                t,
                near,
                far,
                relation,
                gap,
                passed: gap <= tol,
                cdf_near: a.cdf(len),
                cdf_far: b.cdf(len),
            });
        }
    }
    Ok(MonotonicityReport {
        params,
        t_max,
        mode,
        tol,
        pairs_checked: checks.len(),
        incomparable_skipped: skipped,
        max_truncated_mass: max_truncated,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p: f64) -> ProcessParams {
        ProcessParams::new(p, 1).unwrap()
    }

    #[test]
    fn symmetric_sites_are_bit_identical() {
        let mut e1 = ExactEngine::new(params(0.35));
        for t in 1..=10 {
            let z = i64::from(t % 2);
            for y in [z + 1, z + 3] {
                let a = e1.descendant_pmf(t, &Site::line(y)).unwrap();
                let b = e1.descendant_pmf(t, &Site::line(-y)).unwrap();
                assert_eq!(a, b, "t={t} y={y}");
            }
        }
        let mut e2 = ExactEngine::new(ProcessParams::new(0.6, 2).unwrap());
        let a = e2.descendant_pmf(5, &Site::new([1, 2])).unwrap();
        for w in [[-1, 2], [2, -1], [-2, -1]] {
            assert_eq!(a, e2.descendant_pmf(5, &Site::new(w)).unwrap());
        }
    }

    #[test]
    fn convolve_all_ignores_factor_order() {
        let f = [pmf(&[0.3, 0.7]), pmf(&[0.1, 0.2, 0.7]), pmf(&[0.9, 0.1])];
        let a = convolve_all(f.to_vec(), DEFAULT_TRUNCATION);
        let b = convolve_all(f.iter().rev().cloned().collect(), DEFAULT_TRUNCATION);
        assert_eq!(a, b);
        assert_eq!(convolve_all(Vec::new(), DEFAULT_TRUNCATION), Pmf::delta(0));
    }

    fn pmf(m: &[f64]) -> Pmf {
        Pmf::from_masses(m.to_vec()).unwrap()
    }

    #[test]
    fn convolution_examples() {
        let a = pmf(&[0.2, 0.3, 0.5]);
        assert_eq!(convolve(&Pmf::delta(0), &a), a);
        assert_eq!(
            convolve(&Pmf::bernoulli(0.5), &Pmf::bernoulli(0.5)).masses(),
            &[0.25, 0.5, 0.25]
        );
        assert_eq!(convolve(&Pmf::delta(1), &Pmf::delta(1)), Pmf::delta(2));
    }

    #[test]
    fn mix_examples() {
        assert_eq!(bernoulli_mix(&Pmf::delta(1), 0.5).masses(), &[0.5, 0.5]);
        let a = pmf(&[0.1, 0.6, 0.3]);
        assert_eq!(bernoulli_mix(&a, 0.0), Pmf::delta(0));
        assert_eq!(bernoulli_mix(&a, 1.0), a);
    }

    #[test]
    fn invalid_pmfs_rejected() {
        assert!(Pmf::from_masses(vec![0.5, 0.4]).is_err());
        assert!(Pmf::from_masses(vec![1.5, -0.5]).is_err());
        assert!(ProcessParams::new(1.2, 1).is_err());
        assert!(ProcessParams::new(0.5, 0).is_err());
    }

    #[test]
    fn truncation_is_recorded_not_renormalized() {
        let a = pmf(&[0.5, 0.5 - 1e-16, 1e-16]);
        let c = convolve(&a, &a);
        assert!(c.truncated_mass() > 0.0);
        assert!(c.truncated_mass() <= DEFAULT_TRUNCATION);
        assert!((c.total_mass() + c.truncated_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn descendant_examples() {
        let p = params(0.5);
        assert_eq!(descendant_pmf(0, &Site::line(0), p).unwrap(), Pmf::delta(1));
        assert_eq!(
            descendant_pmf(1, &Site::line(-1), p).unwrap().masses(),
            &[0.5, 0.5]
        );
        assert_eq!(
            descendant_pmf(2, &Site::line(0), p).unwrap().masses(),
            &[0.5625, 0.375, 0.0625]
        );
        assert_eq!(
            descendant_pmf(2, &Site::line(2), p).unwrap().masses(),
            &[0.75, 0.25]
        );
        assert_eq!(descendant_pmf(3, &Site::line(0), p).unwrap(), Pmf::delta(0));
    }

    #[test]
    fn visited_examples() {
        let p = params(0.5);
        assert_eq!(visited_pmf(0, 1, 1, true, p).unwrap(), Pmf::delta(0));
        assert_eq!(
            visited_pmf(2, 1, 1, true, p).unwrap().masses(),
            &[0.75, 0.25]
        );
        assert_eq!(
            visited_pmf(2, -1, 1, true, p).unwrap().masses(),
            &[0.75, 0.25]
        );
        // a particle sitting on 0 counts as having visited it
        assert_eq!(visited_pmf(1, 1, 0, true, p).unwrap().masses(), &[0.5, 0.5]);
        assert!(matches!(
            visited_pmf(1, 1, 0, true, ProcessParams::new(0.5, 2).unwrap()),
            Err(crate::Error::Usage(_))
        ));
    }

    #[test]
    fn joint_examples() {
        let p = params(0.5);
        let j = joint_pmf_on_subset(0, -1, &[0], false, p).unwrap();
        assert_eq!(j.prob(&[0]), 1.0);
        let j = joint_pmf_on_subset(1, -1, &[0], false, p).unwrap();
        assert_eq!(j.prob(&[0]), 0.5);
        assert_eq!(j.prob(&[1]), 0.5);
        let lhs = joint_pmf_on_subset(2, -1, &[1, 3], false, p).unwrap();
        let rhs = joint_pmf_on_subset(2, 1, &[1, 3], true, p).unwrap();
        assert!(pmf_equal(&lhs, &rhs, 0.0).unwrap());
        assert_eq!(lhs.marginal(0).masses(), &[0.75, 0.25]);
        assert!(joint_pmf_on_subset(2, -1, &[0, 1, 2], false, p).is_err());
        assert!(joint_pmf_on_subset(2, -1, &[-1], false, p).is_err());
    }

    #[test]
    fn dominance_examples() {
        let bin = pmf(&[0.5625, 0.375, 0.0625]);
        let bern = pmf(&[0.75, 0.25]);
        assert!(dominates(&bin, &bern, 0.0));
        assert!(!dominates(&bern, &bin, 0.0));
        assert!(dominates(&bin, &bin, 0.0));
        assert!(!dominates(&Pmf::delta(0), &Pmf::delta(1), 0.0));
        assert!(dominates(&Pmf::delta(1), &Pmf::delta(0), 0.0));
    }

    #[test]
    fn csv_tables() {
        let d = descendant_pmf(2, &Site::line(0), params(0.5)).unwrap();
        assert_eq!(
            d.to_csv(),
            "value,probability\n0,0.5625\n1,0.375\n2,0.0625\n# truncated_mass,0.0\n"
        );
        assert_eq!(
            Pmf::delta(1).to_csv(),
            "value,probability\n1,1.0\n# truncated_mass,0.0\n"
        );
        let j = joint_pmf_on_subset(1, -1, &[0], false, params(0.5)).unwrap();
        assert_eq!(
            j.to_csv(),
            "n@0,probability\n0,0.5\n1,0.5\n# truncated_mass,0.0\n"
        );
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(serde_json::from_str::<Pmf>(&json).unwrap(), d);
    }

    #[test]
    fn equality_examples() {
        let a = pmf(&[0.3, 0.7]);
        assert!(pmf_equal(&a, &a, 0.0).unwrap());
        assert!(!pmf_equal(&Pmf::delta(0), &Pmf::delta(1), 1e-12).unwrap());
        let j1 = JointPmf::delta(vec![0], vec![1]);
        let j2 = JointPmf::delta(vec![0, 1], vec![1, 0]);
        assert!(pmf_equal(&j1, &j2, 1.0).is_err());
    }

    #[test]
    fn monotonicity_small_cases() {
        let r = verify_monotonicity_exact(2, params(0.5), MonotonicityMode::Duads, 1e-12).unwrap();
        assert!(r.passed());
        assert!(r.checks.iter().any(|c| c.t == 2
            && c.near == Site::line(0)
            && c.far == Site::line(2)
            && c.relation == Relation::Dominates));
        let eq = r.checks.iter().find(|c| c.t == 1).expect("duad at t=1");
        assert_eq!(eq.relation, Relation::Equal);
        assert_eq!(eq.gap, 0.0);

        let r = verify_monotonicity_exact(1, params(0.3), MonotonicityMode::FullPreorder, 1e-12)
            .unwrap();
        assert!(r.passed());
        assert_eq!(r.pairs_checked, 1);

        let r2 = verify_monotonicity_exact(
            2,
            ProcessParams::new(0.5, 2).unwrap(),
            MonotonicityMode::Duads,
            1e-12,
        )
        .unwrap();
        assert!(r2.passed());
        assert!(verify_monotonicity_exact(
            2,
            ProcessParams::new(0.5, 3).unwrap(),
            MonotonicityMode::Duads,
            1e-12
        )
        .is_err());
    }

    #[test]
    fn caps_are_enforced() {
        let caps = ExactCaps {
            max_time: 3,
            ..ExactCaps::default()
        };
        let mut e = ExactEngine::with_caps(params(0.5), caps);
        assert!(matches!(
            e.descendant_pmf(4, &Site::line(0)),
            Err(crate::Error::Resource(_))
        ));
        let caps = ExactCaps {
            max_support: 2,
            ..ExactCaps::default()
        };
        let mut e = ExactEngine::with_caps(params(0.5), caps);
        assert!(matches!(
            e.descendant_pmf(4, &Site::line(0)),
            Err(crate::Error::Resource(_))
        ));
    }
}
