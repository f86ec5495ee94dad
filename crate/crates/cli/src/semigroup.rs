use std::io::Write;

use clap::Args;
use kslab::field::GridSpec;
use kslab::semigroup::{estimate_battery, BatteryConfig, SemigroupEstimateReport};

use crate::config::parse_list;
use crate::{exit, CliError};

#[derive(Args, Debug, Clone)]
pub struct SemigroupArgs {
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    /// Points per axis.
    #[arg(long, default_value_t = 64)]
    pub grid: usize,
    /// Box length.
    #[arg(long, default_value_t = 20.0)]
    pub length: f64,
    /// Number of random Gaussian inputs.
    #[arg(long, default_value_t = 50)]
    pub battery: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Exponent pairs as `p:q` separated by commas, e.g. `2:2,inf:4`.
    #[arg(long)]
    pub pairs: Option<String>,
    /// Comma-separated times.
    #[arg(long)]
    pub times: Option<String>,
}

pub const CSV_HEADER: &str = "p,q,t,which,lhs,rhs,ratio";

fn parse_pairs(text: &str) -> Result<Vec<(f64, f64)>, CliError> {
    text.split(',')
        .map(|pair| {
            let (p, q) = pair
                .split_once(':')
                .ok_or_else(|| CliError::Config(format!("pair `{pair}` is not `p:q`")))?;
            let p = parse_list(p).map_err(CliError::Config)?;
            let q = parse_list(q).map_err(CliError::Config)?;
            Ok((p[0], q[0]))
        })
        .collect()
}

pub fn battery_config(args: &SemigroupArgs) -> Result<BatteryConfig, CliError> {
    let grid = GridSpec::new(args.n, args.grid, args.length)?;
    let mut cfg = BatteryConfig::new(grid, args.battery, args.seed);
    if let Some(p) = &args.pairs {
        cfg.pairs = parse_pairs(p)?;
    }
    if let Some(t) = &args.times {
        cfg.times = parse_list(t).map_err(CliError::Config)?;
    }
    Ok(cfg)
}

pub fn csv_row(r: &SemigroupEstimateReport) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        r.p,
        r.q,
        r.t,
        r.which.as_str(),
        r.lhs,
        r.rhs,
        r.ratio
    )
}

/// Writes the report CSV to `out` and failing triples to `err`.
pub fn cmd_verify_semigroup(
    args: &SemigroupArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<u8, CliError> {
    let reports = estimate_battery(&battery_config(args)?)?;
    let io = |e| CliError::io("writing output", e);
    writeln!(out, "{CSV_HEADER}").map_err(io)?;
    for r in &reports {
        writeln!(out, "{}", csv_row(r)).map_err(io)?;
    }
    let failing: Vec<_> = reports.iter().filter(|r| !r.passes()).collect();
    if failing.is_empty() {
        return Ok(exit::OK);
    }
    for r in &failing {
        writeln!(
            err,
            "estimate failed: p={} q={} t={} which={} ratio={}",
            r.p,
            r.q,
            r.t,
            r.which.as_str(),
            r.ratio
        )
        .map_err(io)?;
    }
    Ok(exit::ESTIMATE_FAILED)
}
