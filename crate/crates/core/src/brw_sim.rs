//! Monte Carlo simulation of the discrete-time branching random walk.
//!
//! Each particle dies at the end of its generation and places a child on
//! each of its `2d` nearest sites independently with probability `p`.
//!
//! The lineage-tagged variant on `Z` follows particles started at `-1` or
//! `+1`: `Alpha` particles descend from `-1` while staying on negative sites,
//! `Beta` particles from `+1` while staying on positive sites; a child born
//! on 0 from an `Alpha` (resp. `Beta`) parent roots a `GammaDesc` (resp.
//! `DeltaDesc`) family, whose members keep that tag for good.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{resource, usage, Error, Result};
use crate::exact_dist::ProcessParams;
use crate::lattice::Site;
use crate::stats_mc::binomial;

/// Default cap on particles alive in one generation.
pub const DEFAULT_MAX_POPULATION: u64 = 10_000_000;

/// Occupation numbers of one generation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Population {
    pub time: u32,
    counts: BTreeMap<Site, u64>,
}

impl Population {
    pub fn single(site: Site) -> Self {
        Population {
            time: 0,
            counts: BTreeMap::from([(site, 1)]),
        }
    }

    pub fn from_counts(time: u32, counts: impl IntoIterator<Item = (Site, u64)>) -> Self {
        Population {
            time,
            counts: counts.into_iter().filter(|(_, c)| *c > 0).collect(),
        }
    }

    pub fn counts(&self) -> &BTreeMap<Site, u64> {
        &self.counts
    }

    pub fn count_at(&self, site: &Site) -> u64 {
        self.counts.get(site).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

#[derive(Serialize)]
struct TrajectoryLine<'a> {
    rep: u64,
    time: u32,
    counts: Vec<(&'a Site, u64)>,
}

/// One JSON object per generation: `{"rep", "time", "counts": [[site, n], ...]}`.
pub fn trajectory_jsonl(rep: u64, traj: &[Population]) -> String {
    let mut out = String::new();
    for pop in traj {
        let line = TrajectoryLine {
            rep,
            time: pop.time,
            counts: pop.counts.iter().map(|(s, &c)| (s, c)).collect(),
        };
        out.push_str(&serde_json::to_string(&line).expect("plain data serializes"));
        out.push('\n');
    }
    out
}

/// Source of birth decisions: an RNG, or a fixed script in tests.
pub trait BirthBits {
    fn birth(&mut self, p: f64) -> bool;
}

impl<R: Rng> BirthBits for R {
    fn birth(&mut self, p: f64) -> bool {
        self.random_bool(p)
    }
}

/// Replays a fixed sequence of birth decisions; `false` once exhausted.
#[derive(Clone, Debug, Default)]
pub struct ScriptedBirths {
    bits: std::collections::VecDeque<bool>,
}

impl ScriptedBirths {
    pub fn new(bits: impl IntoIterator<Item = bool>) -> Self {
        ScriptedBirths {
            bits: bits.into_iter().collect(),
        }
    }
}

impl BirthBits for ScriptedBirths {
    fn birth(&mut self, _p: f64) -> bool {
        self.bits.pop_front().unwrap_or(false)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    Alpha,
    Beta,
    GammaDesc,
    DeltaDesc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedParticle {
    pub site: i64,
    pub tag: Tag,
    pub visited_zero: bool,
    pub pair_id: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedPopulation {
    pub time: u32,
    pub particles: Vec<TaggedParticle>,
}

impl TaggedPopulation {
    pub fn total(&self) -> u64 {
        self.particles.len() as u64
    }

    pub fn count_at(&self, site: i64) -> u64 {
        self.particles.iter().filter(|q| q.site == site).count() as u64
    }

    /// Sorted sites of the particles carrying `tag`.
    pub fn sites_with(&self, tag: Tag) -> Vec<i64> {
        let mut s: Vec<i64> = self
            .particles
            .iter()
            .filter(|q| q.tag == tag)
            .map(|q| q.site)
            .collect();
        s.sort_unstable();
        s
    }

    /// Untagged occupation numbers.
    pub fn to_population(&self) -> Population {
        let mut counts = BTreeMap::new();
        for q in &self.particles {
            *counts.entry(Site::line(q.site)).or_insert(0) += 1;
        }
        Population {
            time: self.time,
            counts,
        }
    }
}

/// Trajectories from `-1` and `+1` built on one source of randomness.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoupledRun {
    pub minus: Vec<TaggedPopulation>,
    pub plus: Vec<TaggedPopulation>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Simulator {
    params: ProcessParams,
    max_population: u64,
}

impl Simulator {
    pub fn new(params: ProcessParams) -> Self {
        Simulator {
            params,
            max_population: DEFAULT_MAX_POPULATION,
        }
    }

    pub fn with_max_population(mut self, cap: u64) -> Self {
        self.max_population = cap;
        self
    }

    pub fn params(&self) -> ProcessParams {
        self.params
    }

    fn check_cap(&self, n: u64, time: u32) -> Result<()> {
        if n > self.max_population {
            return Err(resource(format!(
                "population {n} at time {time} exceeds cap {}",
                self.max_population
            )));
        }
        Ok(())
    }

    /// Advances one generation. Children sent from a site holding `n`
    /// particles in a given direction are drawn as `Binomial(n, p)`.
    pub fn step<R: Rng>(&self, pop: &Population, rng: &mut R) -> Result<Population> {
        let mut next: BTreeMap<Site, u64> = BTreeMap::new();
        let mut total = 0u64;
        for (site, &n) in &pop.counts {
            if site.dim() != self.params.d {
                return Err(usage(format!(
                    "site {site} does not have dimension {}",
                    self.params.d
                )));
            }
            for child in site.neighbors() {
                let k = binomial(n, self.params.p, rng);
                if k > 0 {
                    total += k;
                    self.check_cap(total, pop.time + 1)?;
                    *next.entry(child).or_insert(0) += k;
                }
            }
        }
        Ok(Population {
            time: pop.time + 1,
            counts: next,
        })
    }

    /// Trajectory of length `t + 1` from one particle at `start`.
    pub fn simulate<R: Rng>(&self, start: &Site, t: u32, rng: &mut R) -> Result<Vec<Population>> {
        let mut traj = vec![Population::single(start.clone())];
        for _ in 0..t {
            let next = self.step(traj.last().unwrap(), rng)?;
            traj.push(next);
        }
        Ok(traj)
    }

    /// Final generation only; avoids keeping the whole trajectory.
    pub fn simulate_final<R: Rng>(&self, start: &Site, t: u32, rng: &mut R) -> Result<Population> {
        let mut pop = Population::single(start.clone());
        for _ in 0..t {
            pop = self.step(&pop, rng)?;
        }
        Ok(pop)
    }

    /// Lineage-tagged trajectory from `start` in `{-1, +1}` (d = 1).
    pub fn simulate_tagged<B: BirthBits>(
        &self,
        start: i64,
        t: u32,
        bits: &mut B,
    ) -> Result<Vec<TaggedPopulation>> {
        self.tagged(start, t, bits, None)
    }

    fn tagged<B: BirthBits>(
        &self,
        start: i64,
        t: u32,
        bits: &mut B,
        mut pair_ids: Option<&mut u64>,
    ) -> Result<Vec<TaggedPopulation>> {
        if self.params.d != 1 {
            return Err(usage("tagged simulation is defined on Z only"));
        }
        let root_tag = match start {
            -1 => Tag::Alpha,
            1 => Tag::Beta,
            _ => return Err(usage(format!("tagged start must be -1 or +1, got {start}"))),
        };
        let mut traj = vec![TaggedPopulation {
            time: 0,
            particles: vec![TaggedParticle {
                site: start,
                tag: root_tag,
                visited_zero: false,
                pair_id: None,
            }],
        }];
        for time in 1..=t {
            let parents = &traj.last().unwrap().particles;
            let mut children = Vec::new();
            for parent in parents {
                for step in [-1, 1] {
                    if !bits.birth(self.params.p) {
                        continue;
                    }
                    let site = parent.site + step;
                    let tag = match parent.tag {
                        Tag::Alpha if site == 0 => Tag::GammaDesc,
                        Tag::Beta if site == 0 => Tag::DeltaDesc,
                        other => other,
                    };
                    let pair_id = match (&mut pair_ids, tag) {
                        (Some(next), Tag::GammaDesc) => {
                            let id = **next;
                            **next += 1;
                            Some(id)
                        }
                        _ => None,
                    };
                    children.push(TaggedParticle {
                        site,
                        tag,
                        visited_zero: parent.visited_zero || site == 0,
                        pair_id,
                    });
                }
            }
            self.check_cap(children.len() as u64, time)?;
            traj.push(TaggedPopulation {
                time,
                particles: children,
            });
        }
        Ok(traj)
    }

    /// Mirror coupling of the processes started at `-1` and `+1`.
    ///
    /// The `-1` trajectory is simulated; the `+1` trajectory is derived from
    /// it: its `Beta` part is the site-reflection of the `Alpha` part, and
    /// its `DeltaDesc` part is a copy of the `GammaDesc` part, paired by
    /// `pair_id` in birth order.
    pub fn coupled_simulate<B: BirthBits>(&self, t: u32, bits: &mut B) -> Result<CoupledRun> {
        let mut next_id = 0;
        let minus = self.tagged(-1, t, bits, Some(&mut next_id))?;
        let plus = minus
            .iter()
            .map(|pop| TaggedPopulation {
                time: pop.time,
                particles: pop
                    .particles
                    .iter()
                    .map(|q| match q.tag {
                        Tag::Alpha => TaggedParticle {
                            site: -q.site,
                            tag: Tag::Beta,
                            visited_zero: false,
                            pair_id: None,
                        },
                        _ => TaggedParticle {
                            tag: Tag::DeltaDesc,
                            ..*q
                        },
                    })
                    .collect(),
            })
            .collect();
        Ok(CoupledRun { minus, plus })
    }
}

/// Pathwise checks of a coupled run: delta sites equal gamma sites, beta
/// sites equal reflected alpha sites, and every `+1`-side particle on a
/// non-positive site has visited 0.
pub fn check_coupling(run: &CoupledRun) -> Result<()> {
    if run.minus.len() != run.plus.len() {
        return Err(Error::InvariantViolation(
            "trajectory lengths differ".into(),
        ));
    }
    for (m, p) in run.minus.iter().zip(&run.plus) {
        if m.sites_with(Tag::GammaDesc) != p.sites_with(Tag::DeltaDesc) {
            return Err(Error::InvariantViolation(format!(
                "gamma/delta populations differ at time {}",
                m.time
            )));
        }
        let mut mirrored: Vec<i64> = m.sites_with(Tag::Alpha).iter().map(|y| -y).collect();
        mirrored.sort_unstable();
        if mirrored != p.sites_with(Tag::Beta) {
            return Err(Error::InvariantViolation(format!(
                "beta population is not the mirror of alpha at time {}",
                m.time
            )));
        }
        let mut gamma_ids: Vec<_> = m
            .particles
            .iter()
            .filter(|q| q.tag == Tag::GammaDesc)
            .map(|q| (q.pair_id, q.site))
            .collect();
        let mut delta_ids: Vec<_> = p
            .particles
            .iter()
            .filter(|q| q.tag == Tag::DeltaDesc)
            .map(|q| (q.pair_id, q.site))
            .collect();
        gamma_ids.sort_unstable();
        delta_ids.sort_unstable();
        if gamma_ids != delta_ids {
            return Err(Error::InvariantViolation(format!(
                "gamma/delta pairing broken at time {}",
                m.time
            )));
        }
        if let Some(q) = p.particles.iter().find(|q| q.site <= 0 && !q.visited_zero) {
            return Err(Error::InvariantViolation(format!(
                "particle at {} on the +1 side never visited 0 (time {})",
                q.site, p.time
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats_mc::{stream, RandomStreamSpec};

    fn sim(p: f64, d: usize) -> Simulator {
        Simulator::new(ProcessParams::new(p, d).unwrap())
    }

    fn rng() -> crate::stats_mc::Stream {
        stream(RandomStreamSpec::new(11, 0))
    }

    fn line_pop(entries: &[(i64, u64)]) -> Population {
        Population::from_counts(0, entries.iter().map(|&(y, c)| (Site::line(y), c)))
    }

    #[test]
    fn step_examples() {
        let mut r = rng();
        assert!(sim(0.0, 1)
            .step(&line_pop(&[(0, 1)]), &mut r)
            .unwrap()
            .is_empty());
        let next = sim(1.0, 1).step(&line_pop(&[(0, 1)]), &mut r).unwrap();
        assert_eq!(next.counts(), line_pop(&[(-1, 1), (1, 1)]).counts());
        assert_eq!(next.time, 1);
        let next = sim(1.0, 1).step(&line_pop(&[(0, 2)]), &mut r).unwrap();
        assert_eq!(next.counts(), line_pop(&[(-1, 2), (1, 2)]).counts());
    }

    #[test]
    fn simulate_examples() {
        let mut r = rng();
        let traj = sim(0.5, 1).simulate(&Site::line(0), 0, &mut r).unwrap();
        assert_eq!(traj, vec![Population::single(Site::line(0))]);
        let traj = sim(1.0, 1).simulate(&Site::line(0), 2, &mut r).unwrap();
        assert_eq!(
            traj[2].counts(),
            line_pop(&[(-2, 1), (0, 2), (2, 1)]).counts()
        );
        let traj = sim(1.0, 2).simulate(&Site::origin(2), 1, &mut r).unwrap();
        assert_eq!(traj[1].total(), 4);
    }

    #[test]
    fn trajectory_lines() {
        let traj = sim(1.0, 1).simulate(&Site::line(0), 1, &mut rng()).unwrap();
        assert_eq!(
            trajectory_jsonl(3, &traj),
            "{\"rep\":3,\"time\":0,\"counts\":[[[0],1]]}\n\
             {\"rep\":3,\"time\":1,\"counts\":[[[-1],1],[[1],1]]}\n"
        );
    }

    #[test]
    fn population_cap_is_an_error() {
        let mut r = rng();
        let s = sim(1.0, 1).with_max_population(10);
        assert!(matches!(
            s.simulate(&Site::line(0), 5, &mut r),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn tagged_examples() {
        let s = sim(0.5, 1);
        let traj = s.simulate_tagged(-1, 0, &mut rng()).unwrap();
        assert_eq!(traj[0].particles.len(), 1);
        assert_eq!(traj[0].particles[0].tag, Tag::Alpha);

        // left birth no, right birth yes
        let traj = s
            .simulate_tagged(-1, 1, &mut ScriptedBirths::new([false, true]))
            .unwrap();
        assert_eq!(
            traj[1].particles,
            vec![TaggedParticle {
                site: 0,
                tag: Tag::GammaDesc,
                visited_zero: true,
                pair_id: None
            }]
        );
        assert!(s.simulate_tagged(0, 1, &mut rng()).is_err());
    }

    #[test]
    fn plus_side_particles_left_of_axis_have_visited_zero() {
        let s = sim(0.7, 1);
        for rep in 0..200 {
            let mut r = stream(RandomStreamSpec::new(5, rep));
            for pop in s.simulate_tagged(1, 9, &mut r).unwrap() {
                for q in &pop.particles {
                    assert!(q.site > 0 || q.visited_zero);
                    assert_eq!(q.tag == Tag::Beta, !q.visited_zero);
                }
            }
        }
    }

    #[test]
    fn coupling_examples() {
        let s = sim(0.5, 1);
        let run = s.coupled_simulate(0, &mut rng()).unwrap();
        assert_eq!(run.minus[0].sites_with(Tag::Alpha), vec![-1]);
        assert_eq!(run.plus[0].sites_with(Tag::Beta), vec![1]);

        let run = s
            .coupled_simulate(1, &mut ScriptedBirths::new([false, true]))
            .unwrap();
        assert_eq!(run.minus[1].particles.len(), 1);
        assert_eq!(run.minus[1].sites_with(Tag::GammaDesc), vec![0]);
        assert_eq!(run.plus[1].sites_with(Tag::DeltaDesc), vec![0]);
        assert_eq!(run.plus[1].particles[0].pair_id, Some(0));
        check_coupling(&run).unwrap();

        let run = sim(0.0, 1).coupled_simulate(4, &mut rng()).unwrap();
        assert!(run.minus[1..].iter().all(|p| p.particles.is_empty()));
        assert!(run.plus[1..].iter().all(|p| p.particles.is_empty()));
    }

    #[test]
    fn coupling_detects_tampering() {
        let s = sim(0.8, 1);
        let mut run = s.coupled_simulate(6, &mut rng()).unwrap();
        check_coupling(&run).unwrap();
        let last = run.plus.last_mut().unwrap();
        if let Some(q) = last.particles.iter_mut().find(|q| q.tag == Tag::DeltaDesc) {
            q.site += 2;
            assert!(check_coupling(&run).is_err());
        }
    }
}
