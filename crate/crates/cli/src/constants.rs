use std::io::Write;

use clap::Args;
use kslab::constants::{thresholds, ModelParams};

use crate::{exit, CliError};

#[derive(Args, Debug, Clone)]
pub struct ConstantsArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub m: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mass: f64,
    /// Print one JSON object instead of a table.
    #[arg(long)]
    pub json: bool,
}

pub fn cmd_constants(args: &ConstantsArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    let params = ModelParams::new(args.n, args.m, args.mass)?;
    let table = thresholds(&params)?;
    let io = |e| CliError::io("writing output", e);
    if args.json {
        serde_json::to_writer(&mut *out, &table)?;
        writeln!(out).map_err(io)?;
    } else {
        let rows = [
            ("sobolev_S_n", table.sobolev),
            ("hls_C_n", table.hls),
            ("m_critical", table.m_critical),
            ("m_fujita", table.m_fujita),
            ("s_star", table.s_star),
            ("F_star", table.f_star),
            ("threshold_norm", table.threshold_norm),
        ];
        for (name, value) in rows {
            writeln!(out, "{name:<16}{value}").map_err(io)?;
        }
    }
    Ok(exit::OK)
}
