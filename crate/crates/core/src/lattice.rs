//! Lattice geometry.
//!
//! Sites of `Z^d`, the coordinate-wise modulus preorder, parity feasibility,
//! and the oriented space-time lattice used by the percolation side: points
//! `(y, k)` with bonds to `(y - 1, k + 1)` and `(y + 1, k + 1)`, the finite
//! trapezoid `T_n` rooted at `(-1, 0)` and `(1, 0)`, and reflection about the
//! axis `y = 0`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{usage, Error, Result};

/// A point of `Z^d`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Site(SmallVec<[i64; 2]>);

impl Site {
    pub fn new(coords: impl IntoIterator<Item = i64>) -> Self {
        Site(coords.into_iter().collect())
    }

    pub fn origin(dim: usize) -> Self {
        Site(smallvec::smallvec![0; dim])
    }

    /// Shorthand for a site of `Z`.
    pub fn line(y: i64) -> Self {
        Site(smallvec::smallvec![y])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    /// L1 norm.
    pub fn norm1(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).sum()
    }

    pub fn l1_distance(&self, other: &Site) -> i64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    pub fn is_origin(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn offset(&self, axis: usize, delta: i64) -> Site {
        let mut out = self.clone();
        out.0[axis] += delta;
        out
    }

    pub fn add(&self, other: &Site) -> Site {
        Site(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Site) -> Site {
        Site(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn negate(&self) -> Site {
        Site(self.0.iter().map(|c| -c).collect())
    }

    /// Flips the sign of one coordinate.
    pub fn reflect(&self, axis: usize) -> Site {
        let mut out = self.clone();
        out.0[axis] = -out.0[axis];
        out
    }

    /// The `2d` nearest neighbours, ordered axis by axis, `-1` before `+1`.
    pub fn neighbors(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.dim()).flat_map(move |axis| [self.offset(axis, -1), self.offset(axis, 1)])
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|c| c.to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

impl FromStr for Site {
    type Err = Error;

    /// Parses comma-separated integers, e.g. `-1` or `2,0`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().trim_start_matches('[').trim_end_matches(']');
        if s.is_empty() {
            return Err(usage("empty site"));
        }
        s.split(',')
            .map(|part| {
                part.trim()
                    .parse::<i64>()
                    .map_err(|e| usage(format!("bad site coordinate {part:?}: {e}")))
            })
            .collect::<Result<SmallVec<_>>>()
            .map(Site)
    }
}

/// Coordinate-wise modulus preorder: `|z_i| <= |w_i|` for every `i`.
pub fn modulus_leq(z: &Site, w: &Site) -> Result<bool> {
    if z.dim() != w.dim() {
        return Err(usage(format!(
            "dimension mismatch: {} vs {}",
            z.dim(),
            w.dim()
        )));
    }
    Ok(z.0.iter().zip(&w.0).all(|(a, b)| a.abs() <= b.abs()))
}

/// Whether `z` can be occupied at time `t` by descendants of a single particle
/// placed at `start` at time 0.
pub fn is_feasible(z: &Site, t: u32, start: &Site) -> bool {
    if z.dim() != start.dim() {
        return false;
    }
    let dist = z.l1_distance(start);
    dist <= i64::from(t) && (dist - i64::from(t)).rem_euclid(2) == 0
}

/// All sites feasible at time `t` from `start`, in lexicographic order.
pub fn feasible_sites(t: u32, start: &Site) -> Vec<Site> {
    let dim = start.dim();
    let r = i64::from(t);
    let mut out = Vec::new();
    let mut cur = vec![-r; dim];
    loop {
        let offset = Site::new(cur.iter().copied());
        let z = start.add(&offset);
        if is_feasible(&z, t, start) {
            out.push(z);
        }
        // odometer increment
        let mut axis = dim;
        loop {
            if axis == 0 {
                return out;
            }
            axis -= 1;
            if cur[axis] < r {
                cur[axis] += 1;
                break;
            }
            cur[axis] = -r;
        }
    }
}

/// A point `(y, k)` of the oriented space-time lattice over `Z`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub y: i64,
    pub k: u32,
}

impl SpaceTimePoint {
    pub const fn new(y: i64, k: u32) -> Self {
        SpaceTimePoint { y, k }
    }

    /// Membership in `L` (`y + k` even); otherwise the point lies in `L'`.
    pub fn in_even_lattice(&self) -> bool {
        (self.y + i64::from(self.k)).rem_euclid(2) == 0
    }

    pub fn mirror(&self) -> Self {
        SpaceTimePoint::new(-self.y, self.k)
    }
}

impl fmt::Debug for SpaceTimePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.y, self.k)
    }
}

impl fmt::Display for SpaceTimePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for SpaceTimePoint {
    type Err = Error;

    /// Parses `y,k`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().trim_start_matches('(').trim_end_matches(')');
        let (y, k) = s
            .split_once(',')
            .ok_or_else(|| usage(format!("expected `y,k`, got {s:?}")))?;
        let y = y
            .trim()
            .parse()
            .map_err(|e| usage(format!("bad y in {s:?}: {e}")))?;
        let k = k
            .trim()
            .parse()
            .map_err(|e| usage(format!("bad k in {s:?}: {e}")))?;
        Ok(SpaceTimePoint::new(y, k))
    }
}

/// Reflection `(y, k) -> (-y, k)`.
pub fn mirror(pt: SpaceTimePoint) -> SpaceTimePoint {
    pt.mirror()
}

/// A bond between adjunct points `(y, k) -> (y +- 1, k + 1)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bond {
    pub from: SpaceTimePoint,
    pub to: SpaceTimePoint,
}

impl Bond {
    pub fn new(from: SpaceTimePoint, to: SpaceTimePoint) -> Result<Self> {
        if to.k != from.k + 1 || (to.y - from.y).abs() != 1 {
            return Err(usage(format!("{from} -> {to} is not an oriented bond")));
        }
        Ok(Bond { from, to })
    }

    /// `true` when the bond steps to `y + 1`.
    pub fn goes_right(&self) -> bool {
        self.to.y > self.from.y
    }

    pub fn mirror(&self) -> Bond {
        Bond {
            from: self.from.mirror(),
            to: self.to.mirror(),
        }
    }
}

impl fmt::Debug for Bond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

pub fn mirror_bond(b: Bond) -> Bond {
    b.mirror()
}

/// The points of `L'` inside the trapezoid with vertices `(-1, 0)`, `(1, 0)`,
/// `(-1 - n, n)`, `(1 + n, n)`, together with every bond joining consecutive
/// levels.
///
/// Level `k` holds the `k + 2` points `y = -1 - k, -1 - k + 2, ..., 1 + k`.
/// Bonds are stored in canonical order: level ascending, source `y`
/// ascending, left child before right child. Bond indices are computed
/// arithmetically, so the bond-to-index map needs no storage.
#[derive(Clone, Debug)]
pub struct Trapezoid {
    n: u32,
    points: Vec<SpaceTimePoint>,
    bonds: Vec<Bond>,
}

/// Largest horizon accepted by [`build_trapezoid`]; path counts stay below `2^63`.
pub const MAX_HORIZON: u32 = 60;

pub fn build_trapezoid(n: u32) -> Result<Trapezoid> {
    if n > MAX_HORIZON {
        return Err(crate::error::resource(format!(
            "trapezoid horizon {n} exceeds {MAX_HORIZON}"
        )));
    }
    let mut points = Vec::new();
    let mut bonds = Vec::new();
    for k in 0..=n {
        let level: Vec<SpaceTimePoint> = (0..k as i64 + 2)
            .map(|i| SpaceTimePoint::new(-1 - k as i64 + 2 * i, k))
            .collect();
        if k < n {
            for p in &level {
                for dy in [-1, 1] {
                    bonds.push(Bond {
                        from: *p,
                        to: SpaceTimePoint::new(p.y + dy, k + 1),
                    });
                }
            }
        }
        points.extend(level);
    }
    Ok(Trapezoid { n, points, bonds })
}

impl Trapezoid {
    pub fn horizon(&self) -> u32 {
        self.n
    }

    pub fn points(&self) -> &[SpaceTimePoint] {
        &self.points
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    /// Number of points on level `k` (`k + 2`).
    pub fn level_len(k: u32) -> usize {
        k as usize + 2
    }

    /// Position of `pt` within its level, if it lies in the trapezoid.
    pub fn level_position(&self, pt: SpaceTimePoint) -> Option<usize> {
        if pt.k > self.n {
            return None;
        }
        let shifted = pt.y + 1 + i64::from(pt.k);
        if shifted < 0 || shifted % 2 != 0 {
            return None;
        }
        let pos = (shifted / 2) as usize;
        (pos < Self::level_len(pt.k)).then_some(pos)
    }

    pub fn contains(&self, pt: SpaceTimePoint) -> bool {
        self.level_position(pt).is_some()
    }

    /// Index of the first bond leaving level `k`: `k^2 + 3k`.
    pub fn level_offset(k: u32) -> usize {
        let k = k as usize;
        k * k + 3 * k
    }

    /// Canonical index of the bond leaving the `pos`-th point of level `k`.
    pub fn bond_index_at(k: u32, pos: usize, right: bool) -> usize {
        Self::level_offset(k) + 2 * pos + usize::from(right)
    }

    pub fn bond_index(&self, b: &Bond) -> Option<usize> {
        if b.to.k != b.from.k + 1 || b.from.k >= self.n || (b.to.y - b.from.y).abs() != 1 {
            return None;
        }
        let pos = self.level_position(b.from)?;
        Some(Self::bond_index_at(b.from.k, pos, b.goes_right()))
    }

    /// Canonical index of the mirror image of bond `idx`.
    pub fn mirror_index(&self, idx: usize) -> usize {
        let b = self.bonds[idx];
        let k = b.from.k;
        let pos = Self::level_len(k) - 1 - (idx - Self::level_offset(k)) / 2;
        Self::bond_index_at(k, pos, !b.goes_right())
    }
}
