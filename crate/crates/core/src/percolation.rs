//! Oriented bond percolation on the trapezoid `T_n`.
//!
//! Open-path counts from a source point obey
//! `C(y, k + 1) = C(y - 1, k) [open] + C(y + 1, k) [open]`, which is also the
//! update rule of the embedded particle system where every particle on a
//! site shares one birth indicator per direction.
//!
//! [`rotate`] swaps each bond at or below level `m` with its mirror image.
//! It is an involution preserving the number of open bonds, hence measure
//! preserving for every `p`, and it carries paths from `(1, 0)` through
//! `(0, m)` onto paths from `(-1, 0)` through `(0, m)`. [`enumerate_verify_b`]
//! checks all of this on every configuration of a small trapezoid.

use std::collections::BTreeMap;

use bitvec::prelude::*;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{resource, usage, Error, Result};
use crate::lattice::{SpaceTimePoint, Trapezoid};

/// Open/closed state of every bond of a trapezoid, in canonical bond order.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BondConfig {
    horizon: u32,
    open: BitVec<u64, Lsb0>,
}

impl std::fmt::Debug for BondConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BondConfig(n={}, {})", self.horizon, self.to_hex())
    }
}

impl BondConfig {
    pub fn closed(trap: &Trapezoid) -> Self {
        BondConfig {
            horizon: trap.horizon(),
            open: bitvec![u64, Lsb0; 0; trap.bond_count()],
        }
    }

    pub fn all_open(trap: &Trapezoid) -> Self {
        BondConfig {
            horizon: trap.horizon(),
            open: bitvec![u64, Lsb0; 1; trap.bond_count()],
        }
    }

    /// Configuration whose bond `i` is open iff bit `i` of `index` is set.
    pub fn from_index(trap: &Trapezoid, index: u64) -> Result<Self> {
        let b = trap.bond_count();
        if b < 64 && index >> b != 0 {
            return Err(usage(format!("index {index:#x} has more than {b} bits")));
        }
        let mut cfg = Self::closed(trap);
        for i in 0..b.min(64) {
            cfg.open.set(i, index >> i & 1 == 1);
        }
        Ok(cfg)
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.open.len()
    }

    pub fn is_empty(&self) -> bool {
        self.open.is_empty()
    }

    pub fn is_open(&self, idx: usize) -> bool {
        self.open[idx]
    }

    pub fn set(&mut self, idx: usize, open: bool) {
        self.open.set(idx, open);
    }

    pub fn open_count(&self) -> usize {
        self.open.count_ones()
    }

    /// Big-endian hex of the integer whose bit `i` is bond `i`.
    pub fn to_hex(&self) -> String {
        let digits = self.open.len().div_ceil(4).max(1);
        (0..digits)
            .rev()
            .map(|d| {
                let nibble = (0..4)
                    .filter(|b| self.open.get(4 * d + b).is_some_and(|bit| *bit))
                    .fold(0u32, |acc, b| acc | 1 << b);
                char::from_digit(nibble, 16).unwrap()
            })
            .collect()
    }

    pub fn from_hex(trap: &Trapezoid, hex: &str) -> Result<Self> {
        let mut cfg = Self::closed(trap);
        for (d, c) in hex.trim().chars().rev().enumerate() {
            let nibble = c
                .to_digit(16)
                .ok_or_else(|| usage(format!("bad hex digit {c:?}")))?;
            for b in 0..4 {
                if nibble >> b & 1 == 1 {
                    let idx = 4 * d + b;
                    if idx >= cfg.len() {
                        return Err(usage(format!("hex {hex} has more than {} bits", cfg.len())));
                    }
                    cfg.open.set(idx, true);
                }
            }
        }
        Ok(cfg)
    }

    fn check(&self, trap: &Trapezoid) -> Result<()> {
        if self.horizon != trap.horizon() || self.open.len() != trap.bond_count() {
            return Err(usage(format!(
                "configuration for T_{} does not fit T_{}",
                self.horizon,
                trap.horizon()
            )));
        }
        Ok(())
    }
}

/// Each bond open independently with probability `p`, drawn in canonical order.
pub fn sample_config<R: Rng>(trap: &Trapezoid, p: f64, rng: &mut R) -> BondConfig {
    let mut cfg = BondConfig::closed(trap);
    for i in 0..trap.bond_count() {
        cfg.open.set(i, rng.random_bool(p));
    }
    cfg
}

/// Open-path counts from a source to every point of the trapezoid.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathCountVector {
    /// `levels[k][i]` is the count at the `i`-th point of level `k`.
    levels: Vec<Vec<u64>>,
}

impl PathCountVector {
    fn zeros(horizon: u32) -> Self {
        PathCountVector {
            levels: (0..=horizon)
                .map(|k| vec![0; Trapezoid::level_len(k)])
                .collect(),
        }
    }

    pub fn get(&self, pt: SpaceTimePoint) -> u64 {
        let shifted = pt.y + 1 + i64::from(pt.k);
        if shifted < 0 || shifted % 2 != 0 {
            return 0;
        }
        self.levels
            .get(pt.k as usize)
            .and_then(|l| l.get((shifted / 2) as usize))
            .copied()
            .unwrap_or(0)
    }

    /// Counts on level `k`, left to right.
    pub fn level(&self, k: u32) -> &[u64] {
        &self.levels[k as usize]
    }

    pub fn top(&self) -> &[u64] {
        self.levels.last().expect("at least one level")
    }

    pub fn is_zero(&self) -> bool {
        self.levels.iter().flatten().all(|&c| c == 0)
    }
}

fn propagate(trap: &Trapezoid, cfg: &BondConfig, counts: &mut PathCountVector, from_level: u32) {
    for k in from_level..trap.horizon() {
        let (lower, upper) = counts.levels.split_at_mut(k as usize + 1);
        let (src, dst) = (&lower[k as usize], &mut upper[0]);
        dst.iter_mut().for_each(|c| *c = 0);
        for (pos, &c) in src.iter().enumerate() {
            if c == 0 {
                continue;
            }
            // left child of position pos is dst[pos], right child dst[pos + 1]
            if cfg.open[Trapezoid::bond_index_at(k, pos, false)] {
                dst[pos] += c;
            }
            if cfg.open[Trapezoid::bond_index_at(k, pos, true)] {
                dst[pos + 1] += c;
            }
        }
    }
}

pub fn count_paths(
    trap: &Trapezoid,
    cfg: &BondConfig,
    source: SpaceTimePoint,
) -> Result<PathCountVector> {
    cfg.check(trap)?;
    let pos = trap
        .level_position(source)
        .ok_or_else(|| usage(format!("source {source} is outside T_{}", trap.horizon())))?;
    let mut counts = PathCountVector::zeros(trap.horizon());
    counts.levels[source.k as usize][pos] = 1;
    propagate(trap, cfg, &mut counts, source.k);
    Ok(counts)
}

/// Counts of open paths from `source` that pass through `via = (0, m)`.
///
/// A `via` with the wrong parity is not a lattice point, so no path passes
/// through it and the result is identically zero.
pub fn count_paths_via(
    trap: &Trapezoid,
    cfg: &BondConfig,
    source: SpaceTimePoint,
    via: SpaceTimePoint,
) -> Result<PathCountVector> {
    if via.y != 0 || via.k > trap.horizon() {
        return Err(usage(format!(
            "via point {via} must be (0, m) with m <= {}",
            trap.horizon()
        )));
    }
    let to_via = count_paths(trap, cfg, source)?;
    if !trap.contains(via) {
        return Ok(PathCountVector::zeros(trap.horizon()));
    }
    let mut out = count_paths(trap, cfg, via)?;
    let factor = to_via.get(via);
    for c in out.levels.iter_mut().flatten() {
        *c *= factor;
    }
    Ok(out)
}

/// Swaps the state of every bond whose upper endpoint has time `<= m` with
/// that of its mirror bond.
pub fn rotate(trap: &Trapezoid, cfg: &BondConfig, m: u32) -> Result<BondConfig> {
    cfg.check(trap)?;
    if m > trap.horizon() {
        return Err(usage(format!("m = {m} exceeds horizon {}", trap.horizon())));
    }
    let mut out = cfg.clone();
    for idx in 0..Trapezoid::level_offset(m) {
        let mirror = trap.mirror_index(idx);
        if idx < mirror {
            let (a, b) = (cfg.open[idx], cfg.open[mirror]);
            out.open.set(idx, b);
            out.open.set(mirror, a);
        }
    }
    Ok(out)
}

/// One generation of the embedded process: all particles on site `y` share
/// the indicator `open(y, right)` for each direction.
pub fn embedded_step(
    counts: &BTreeMap<i64, u64>,
    open: impl Fn(i64, bool) -> bool,
) -> BTreeMap<i64, u64> {
    let mut next = BTreeMap::new();
    for (&y, &n) in counts {
        if n == 0 {
            continue;
        }
        for right in [false, true] {
            if open(y, right) {
                *next.entry(if right { y + 1 } else { y - 1 }).or_insert(0) += n;
            }
        }
    }
    next
}

/// Embedded process run on a fixed configuration from `source` up to the
/// horizon. `trajectory[j]` is the occupation at time `source.k + j`.
pub fn embedded_trajectory(
    trap: &Trapezoid,
    cfg: &BondConfig,
    source: SpaceTimePoint,
) -> Result<Vec<BTreeMap<i64, u64>>> {
    cfg.check(trap)?;
    if !trap.contains(source) {
        return Err(usage(format!(
            "source {source} is outside T_{}",
            trap.horizon()
        )));
    }
    let mut traj = vec![BTreeMap::from([(source.y, 1)])];
    for k in source.k..trap.horizon() {
        let next = embedded_step(traj.last().unwrap(), |y, right| {
            let pos = trap
                .level_position(SpaceTimePoint::new(y, k))
                .expect("embedded particles stay inside the trapezoid");
            cfg.open[Trapezoid::bond_index_at(k, pos, right)]
        });
        traj.push(next);
    }
    Ok(traj)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmbeddedRun {
    pub config: BondConfig,
    pub trajectory: Vec<BTreeMap<i64, u64>>,
}

/// Compares particle counts with open-path counts level by level.
pub fn check_embedded_equivalence(
    trap: &Trapezoid,
    run: &EmbeddedRun,
    source: SpaceTimePoint,
) -> Result<()> {
    let paths = count_paths(trap, &run.config, source)?;
    for (j, occupation) in run.trajectory.iter().enumerate() {
        let k = source.k + j as u32;
        for (i, &c) in paths.level(k).iter().enumerate() {
            let y = -1 - i64::from(k) + 2 * i as i64;
            let n = occupation.get(&y).copied().unwrap_or(0);
            if n != c {
                return Err(Error::InvariantViolation(format!(
                    "embedded count {n} != path count {c} at ({y},{k}) for config {}",
                    run.config.to_hex()
                )));
            }
        }
    }
    Ok(())
}

/// Samples a configuration, runs the embedded process on it, and asserts
/// that particle counts equal open-path counts.
pub fn simulate_embedded<R: Rng>(
    trap: &Trapezoid,
    source: SpaceTimePoint,
    p: f64,
    rng: &mut R,
) -> Result<EmbeddedRun> {
    if !(0.0..=1.0).contains(&p) {
        return Err(usage(format!("p = {p} outside [0, 1]")));
    }
    let config = sample_config(trap, p, rng);
    let trajectory = embedded_trajectory(trap, &config, source)?;
    let run = EmbeddedRun { config, trajectory };
    check_embedded_equivalence(trap, &run, source)?;
    Ok(run)
}

/// A failed check on one configuration, or a stratum mismatch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum BViolation {
    Involution { config: String },
    BondCount { config: String },
    Transport { config: String },
    Reflection { config: String },
    Stratum { open_count: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stratum {
    pub open_count: usize,
    pub configs: u64,
    pub multiset_hash: String,
    pub matched: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BReport {
    pub n: u32,
    pub m: u32,
    pub bond_count: usize,
    pub configs_checked: u64,
    /// Whether `(0, m)` is a point of the lattice; if not, every transport
    /// vector is zero.
    pub via_on_lattice: bool,
    pub violation_count: u64,
    /// First violations in configuration order.
    pub violations: Vec<BViolation>,
    pub strata: Vec<Stratum>,
}

impl BReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }
}

/// Largest configuration count swept by default (`n <= 3`).
pub const DEFAULT_ENUMERATION_BUDGET: u64 = 1 << 20;

const MAX_LISTED_VIOLATIONS: usize = 64;
const CHUNK: u64 = 1 << 12;

type Multiset = BTreeMap<Vec<u64>, u64>;

#[derive(Default)]
struct Partial {
    violation_count: u64,
    violations: Vec<BViolation>,
    // per open count: (configs, transport multiset from (1,0), from (-1,0))
    strata: BTreeMap<usize, (u64, Multiset, Multiset)>,
}

impl Partial {
    fn flag(&mut self, v: BViolation) {
        self.violation_count += 1;
        if self.violations.len() < MAX_LISTED_VIOLATIONS {
            self.violations.push(v);
        }
    }

    fn absorb(&mut self, other: Partial) {
        self.violation_count += other.violation_count;
        for v in other.violations {
            if self.violations.len() < MAX_LISTED_VIOLATIONS {
                self.violations.push(v);
            }
        }
        for (o, (configs, plus, minus)) in other.strata {
            let e = self.strata.entry(o).or_default();
            e.0 += configs;
            for (k, c) in plus {
                *e.1.entry(k).or_insert(0) += c;
            }
            for (k, c) in minus {
                *e.2.entry(k).or_insert(0) += c;
            }
        }
    }
}

/// Per-configuration checks; returns the transport vectors from `(1, 0)`
/// and `(-1, 0)` on `cfg` for stratification.
fn check_config(
    trap: &Trapezoid,
    cfg: &BondConfig,
    m: u32,
    out: &mut Partial,
) -> Result<(Vec<u64>, Vec<u64>)> {
    let n = trap.horizon();
    let right = SpaceTimePoint::new(1, 0);
    let left = SpaceTimePoint::new(-1, 0);
    let via = SpaceTimePoint::new(0, m);
    let rotated = rotate(trap, cfg, m)?;
    if rotate(trap, &rotated, m)? != *cfg {
        out.flag(BViolation::Involution {
            config: cfg.to_hex(),
        });
    }
    if rotated.open_count() != cfg.open_count() {
        out.flag(BViolation::BondCount {
            config: cfg.to_hex(),
        });
    }
    let plus = count_paths_via(trap, cfg, right, via)?;
    if plus != count_paths_via(trap, &rotated, left, via)? {
        out.flag(BViolation::Transport {
            config: cfg.to_hex(),
        });
    }
    let reflected = rotate(trap, cfg, n)?;
    let from_right = count_paths(trap, cfg, right)?;
    let from_left = count_paths(trap, &reflected, left)?;
    let mut mirrored_top = from_left.top().to_vec();
    mirrored_top.reverse();
    if from_right.top() != mirrored_top.as_slice() {
        out.flag(BViolation::Reflection {
            config: cfg.to_hex(),
        });
    }
    let minus = count_paths_via(trap, cfg, left, via)?;
    Ok((plus.top().to_vec(), minus.top().to_vec()))
}

fn multiset_hash(ms: &Multiset) -> String {
    let mut h = Sha256::new();
    for (v, c) in ms {
        let row: Vec<String> = v.iter().map(u64::to_string).collect();
        h.update(format!("{}:{c}\n", row.join(",")).as_bytes());
    }
    h.finalize()[..16]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Sweeps every bond configuration of `T_n` and checks, per configuration,
/// that rotation at level `m` is an involution, preserves the open-bond
/// count, transports paths from `(1, 0)` via `(0, m)` onto paths from
/// `(-1, 0)` via `(0, m)`, and that full reflection mirrors path counts.
/// Transport vectors are then compared as multisets within each open-count
/// stratum, which gives equality in law for every `p` at once.
///
/// Configurations are visited in integer order in fixed-size chunks, so the
/// report is identical for any number of worker threads.
pub fn enumerate_verify_b(n: u32, m: u32, budget: u64) -> Result<BReport> {
    let trap = crate::lattice::build_trapezoid(n)?;
    if m > n {
        return Err(usage(format!("m = {m} exceeds n = {n}")));
    }
    let bonds = trap.bond_count();
    if bonds >= 63 || 1u64 << bonds > budget {
        return Err(resource(format!(
            "2^{bonds} configurations exceed the enumeration budget {budget}"
        )));
    }
    let total = 1u64 << bonds;
    let chunks: Vec<Result<Partial>> = (0..total.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut part = Partial::default();
            for idx in chunk * CHUNK..((chunk + 1) * CHUNK).min(total) {
                let cfg = BondConfig::from_index(&trap, idx)?;
                let (plus, minus) = check_config(&trap, &cfg, m, &mut part)?;
                let e = part.strata.entry(cfg.open_count()).or_default();
                e.0 += 1;
                *e.1.entry(plus).or_insert(0) += 1;
                *e.2.entry(minus).or_insert(0) += 1;
            }
            Ok(part)
        })
        .collect();
    let mut merged = Partial::default();
    for part in chunks {
        merged.absorb(part?);
    }
    let mut strata = Vec::new();
    let mut mismatched = Vec::new();
    for (open_count, (configs, plus, minus)) in &merged.strata {
        let matched = plus == minus;
        if !matched {
            mismatched.push(*open_count);
        }
        strata.push(Stratum {
            open_count: *open_count,
            configs: *configs,
            multiset_hash: multiset_hash(plus),
            matched,
        });
    }
    for open_count in mismatched {
        merged.flag(BViolation::Stratum { open_count });
    }
    Ok(BReport {
        n,
        m,
        bond_count: bonds,
        configs_checked: total,
        via_on_lattice: trap.contains(SpaceTimePoint::new(0, m)),
        violation_count: merged.violation_count,
        violations: merged.violations,
        strata,
    })
}

/// Per-configuration checks of [`enumerate_verify_b`] on `samples` random
/// configurations of `T_n` (no stratification), for horizons too large to
/// enumerate. Sample `i` uses `stream(seed, i)`.
pub fn sampled_verify_b(n: u32, m: u32, p: f64, samples: u64, seed: u64) -> Result<BReport> {
    let trap = crate::lattice::build_trapezoid(n)?;
    if m > n {
        return Err(usage(format!("m = {m} exceeds n = {n}")));
    }
    let parts: Vec<Result<Partial>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = crate::stats_mc::stream(crate::stats_mc::RandomStreamSpec::new(seed, i));
            let cfg = sample_config(&trap, p, &mut rng);
            let mut part = Partial::default();
            check_config(&trap, &cfg, m, &mut part)?;
            Ok(part)
        })
        .collect();
    let mut merged = Partial::default();
    for part in parts {
        merged.absorb(part?);
    }
    Ok(BReport {
        n,
        m,
        bond_count: trap.bond_count(),
        configs_checked: samples,
        via_on_lattice: trap.contains(SpaceTimePoint::new(0, m)),
        violation_count: merged.violation_count,
        violations: merged.violations,
        strata: Vec::new(),
    })
}
