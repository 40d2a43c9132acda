//! Brute-force genealogy enumeration, used only as a test oracle.
//!
//! Every potential particle of the first `t` generations owns one birth bit
//! (there are `B = 2d + (2d)^2 + ... + (2d)^t` of them) and exists when its
//! own bit and all ancestor bits are set. All `2^B` assignments are
//! enumerated and outcomes are tallied as integer counts per number of set
//! bits, so each mass is a polynomial in `p` evaluated once. Nothing here
//! shares code with the convolution engine.

use std::collections::BTreeMap;

/// A particle alive at the final time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Leaf {
    pub site: Vec<i64>,
    pub visited_zero: bool,
}

/// Hard limit on the number of enumerated birth bits.
pub const MAX_BITS: u32 = 24;

/// Calls `visit(leaves, ones)` for every birth-bit assignment, where `ones`
/// is the number of set bits; returns the total bit count `B`.
pub fn enumerate<F: FnMut(&[Leaf], u32)>(start: &[i64], t: u32, mut visit: F) -> u32 {
    let d = start.len();
    let branching = 2 * d as u64;
    let bits: u64 = (1..=t).map(|s| branching.pow(s)).sum();
    assert!(
        bits <= u64::from(MAX_BITS),
        "{bits} birth bits is too many to enumerate"
    );
    let at_zero = |s: &[i64]| s.iter().all(|&c| c == 0);
    for mask in 0u64..1 << bits {
        // generation s occupies bits [offset, offset + branching^s)
        let mut alive: Vec<Option<Leaf>> = vec![Some(Leaf {
            site: start.to_vec(),
            visited_zero: at_zero(start),
        })];
        let mut offset = 0u64;
        for _ in 0..t {
            let mut next = Vec::with_capacity(alive.len() * branching as usize);
            for (i, parent) in alive.iter().enumerate() {
                for dir in 0..branching {
                    let bit = offset + i as u64 * branching + dir;
                    let child = parent.as_ref().filter(|_| mask >> bit & 1 == 1).map(|q| {
                        let mut site = q.site.clone();
                        let axis = (dir / 2) as usize;
                        site[axis] += if dir % 2 == 0 { -1 } else { 1 };
                        let visited_zero = q.visited_zero || at_zero(&site);
                        Leaf { site, visited_zero }
                    });
                    next.push(child);
                }
            }
            offset += alive.len() as u64 * branching;
            alive = next;
        }
        let leaves: Vec<Leaf> = alive.into_iter().flatten().collect();
        visit(&leaves, mask.count_ones());
    }
    bits as u32
}

/// Outcome histogram as exact integer counts per number of set bits,
/// evaluated at `p` only at the end: `sum_k N_k p^k (1 - p)^(B - k)`.
fn evaluate<K: Ord>(hist: BTreeMap<K, Vec<u64>>, bits: u32, p: f64) -> BTreeMap<K, f64> {
    hist.into_iter()
        .map(|(key, by_ones)| {
            let mass = by_ones
                .iter()
                .enumerate()
                .map(|(k, &n)| {
                    n as f64 * p.powi(k as i32) * (1.0 - p).powi((bits as usize - k) as i32)
                })
                .sum();
            (key, mass)
        })
        .collect()
}

fn tally<K: Ord>(hist: &mut BTreeMap<K, Vec<u64>>, key: K, ones: u32, bits: u64) {
    hist.entry(key)
        .or_insert_with(|| vec![0; bits as usize + 1])[ones as usize] += 1;
}

fn bit_count(dim: usize, t: u32) -> u64 {
    (1..=t).map(|s| (2 * dim as u64).pow(s)).sum()
}

/// Law of the count at `z` from one particle at `start`, as dense masses.
pub fn count_pmf(start: &[i64], z: &[i64], t: u32, p: f64, require_visit: bool) -> Vec<f64> {
    let total_bits = bit_count(start.len(), t);
    let mut hist = BTreeMap::new();
    let bits = enumerate(start, t, |leaves, ones| {
        let n = leaves
            .iter()
            .filter(|q| q.site == z && (q.visited_zero || !require_visit))
            .count();
        tally(&mut hist, n, ones, total_bits);
    });
    let masses = evaluate(hist, bits, p);
    let len = masses.keys().max().map_or(1, |m| m + 1);
    let mut out = vec![0.0; len];
    for (k, m) in masses {
        out[k] = m;
    }
    out
}

/// Joint law of the counts on `subset` (sites of `Z`).
pub fn joint_pmf(
    start: i64,
    subset: &[i64],
    t: u32,
    p: f64,
    require_visit: bool,
) -> BTreeMap<Vec<u32>, f64> {
    let total_bits = bit_count(1, t);
    let mut hist = BTreeMap::new();
    let bits = enumerate(&[start], t, |leaves, ones| {
        let key: Vec<u32> = subset
            .iter()
            .map(|&c| {
                leaves
                    .iter()
                    .filter(|q| q.site[0] == c && (q.visited_zero || !require_visit))
                    .count() as u32
            })
            .collect();
        tally(&mut hist, key, ones, total_bits);
    });
    evaluate(hist, bits, p)
}
