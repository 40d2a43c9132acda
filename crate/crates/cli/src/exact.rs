use brwlab_core::exact_dist::{descendant_pmf, joint_pmf_on_subset, visited_pmf};
use brwlab_core::{ProcessParams, Result, Site};

use crate::args::{Opts, What};
use crate::config::{self, required, usage};

/// Exact law as a CSV table with a truncated-mass footer.
pub fn run(what: What, opts: &Opts) -> Result<String> {
    let p = config::single_probability(opts)?;
    let t = required(opts.t, "t")?;
    let params = ProcessParams::new(p, opts.d)?;
    match what {
        What::Pmf => {
            let z = match &opts.z {
                Some(s) => config::parse_site(s, opts.d)?,
                None => Site::origin(opts.d),
            };
            Ok(descendant_pmf(t, &z, params)?.to_csv())
        }
        What::Visited => {
            let start = required(opts.start, "start")?;
            let z = config::parse_site(
                opts.z.as_deref().ok_or_else(|| usage("--z is required"))?,
                1,
            )?;
            Ok(visited_pmf(t, start, z.coords()[0], opts.require_visit, params)?.to_csv())
        }
        What::Joint => {
            let start = required(opts.start, "start")?;
            let subset = config::parse_subset(
                opts.subset
                    .as_deref()
                    .ok_or_else(|| usage("--subset is required"))?,
            )?;
            Ok(joint_pmf_on_subset(t, start, &subset, opts.require_visit, params)?.to_csv())
        }
    }
}
