//! Simulation and verification tools for the discrete-time branching random
//! walk on `Z^d` and oriented bond percolation on `Z x N`.
//!
//! - [`lattice`]: sites, the modulus preorder, the trapezoid `T_n`, mirrors.
//! - [`exact_dist`]: exact count distributions, dominance and equality.
//! - [`brw_sim`]: Monte Carlo simulation, lineage tags, the mirror coupling.
//! - [`percolation`]: path counting, rotation, the embedded process,
//!   exhaustive verification.
//! - [`stats_mc`]: random streams and two-sample tests.

pub mod brw_sim;
pub mod error;
pub mod exact_dist;
pub mod lattice;
#[cfg(any(test, feature = "oracle"))]
pub mod oracle;
pub mod percolation;
pub mod stats_mc;

pub use brw_sim::{CoupledRun, Population, Simulator, Tag, TaggedParticle, TaggedPopulation};
pub use error::{Error, Result};
pub use exact_dist::{
    JointPmf, MonotonicityMode, MonotonicityReport, Pmf, ProcessParams, Relation,
};
pub use lattice::{Bond, Site, SpaceTimePoint, Trapezoid};
pub use percolation::{BReport, BondConfig, PathCountVector};
pub use stats_mc::{EmpiricalDist, RandomStreamSpec, TestResult};
