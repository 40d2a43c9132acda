use std::str::FromStr;

use brwlab_core::{Error, Result, Site, SpaceTimePoint};
use serde::Serialize;

use crate::args::{CdfTables, Mode, Opts};

/// Grid points are rounded to this resolution so that `0.05 + 2 * 0.05`
/// prints as `0.15`.
const GRID_RESOLUTION: f64 = 1e12;
const MAX_GRID_POINTS: usize = 100_000;

/// Fully resolved parameters of a run, echoed in every report.
///
/// The worker count is left out on purpose: reports must not depend on it.
#[derive(Clone, Debug, Default, Serialize)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub p: Vec<f64>,
    pub d: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub m: Vec<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<Site>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subset: Option<Vec<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<SpaceTimePoint>,
    pub require_visit: bool,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resamples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cdf_tables: Option<CdfTables>,
}

impl RunConfig {
    pub fn from_opts(opts: &Opts) -> Self {
        RunConfig {
            d: opts.d,
            require_visit: opts.require_visit,
            seed: opts.seed,
            ..Default::default()
        }
    }
}

pub fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

pub fn required<T: Copy>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| usage(format!("--{flag} is required")))
}

/// Parses `START:STOP:STEP` into an inclusive grid.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [start, stop, step] = parts[..] else {
        return Err(usage(format!(
            "--p-grid expects START:STOP:STEP, got {spec:?}"
        )));
    };
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| usage(format!("--p-grid: {s:?} is not a number")))
    };
    let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
    if step.is_nan() || step <= 0.0 || stop.is_nan() || stop < start {
        return Err(usage(format!("--p-grid {spec:?} is empty")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if count > MAX_GRID_POINTS {
        return Err(usage(format!(
            "--p-grid {spec:?} has more than {MAX_GRID_POINTS} points"
        )));
    }
    Ok((0..count)
        .map(|i| ((start + i as f64 * step) * GRID_RESOLUTION).round() / GRID_RESOLUTION)
        .collect())
}

/// The probabilities of a run: `--p`, or `--p-grid`, but not both.
pub fn probabilities(opts: &Opts) -> Result<Vec<f64>> {
    let grid = match (opts.p, &opts.p_grid) {
        (Some(_), Some(_)) => return Err(usage("--p and --p-grid are exclusive")),
        (Some(p), None) => vec![p],
        (None, Some(spec)) => parse_grid(spec)?,
        (None, None) => return Err(usage("--p or --p-grid is required")),
    };
    if let Some(p) = grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(usage(format!("p = {p} outside [0, 1]")));
    }
    Ok(grid)
}

pub fn single_probability(opts: &Opts) -> Result<f64> {
    if opts.p_grid.is_some() {
        return Err(usage("this command takes a single --p"));
    }
    let p = required(opts.p, "p")?;
    if !(0.0..=1.0).contains(&p) {
        return Err(usage(format!("p = {p} outside [0, 1]")));
    }
    Ok(p)
}

pub fn parse_site(s: &str, d: usize) -> Result<Site> {
    let site = Site::from_str(s)?;
    if site.dim() != d {
        return Err(usage(format!(
            "--z {s:?} has dimension {}, expected {d}",
            site.dim()
        )));
    }
    Ok(site)
}

pub fn parse_subset(s: &str) -> Result<Vec<i64>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<i64>()
                .map_err(|_| usage(format!("--subset: {x:?} is not an integer")))
        })
        .collect()
}

pub fn parse_source(s: Option<&str>) -> Result<SpaceTimePoint> {
    match s {
        Some(s) => SpaceTimePoint::from_str(s),
        None => Ok(SpaceTimePoint::new(1, 0)),
    }
}

pub fn resolve_mode(opts: &Opts, default: Mode, allowed: &[Mode]) -> Result<Mode> {
    let mode = opts.mode.unwrap_or(default);
    if allowed.contains(&mode) {
        Ok(mode)
    } else {
        Err(usage(
            format!("--mode {mode:?} is not available for this command").to_lowercase(),
        ))
    }
}
