//! Grids of runs over `(m, mass, init scale)` with one aggregate CSV.
//!
//! A sweep file is a run config plus optional `sweep.m`, `sweep.mass` and
//! `sweep.scale` lists; each grid point overrides `m`, `mass` and
//! `init.value` respectively and runs in its own directory.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use kslab::dynamics::RunOutcome;
use rayon::prelude::*;

use crate::config::{parse_list, ConfigText};
use crate::simulate::{simulate, SimulationReport};
use crate::{exit, CliError};

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Runs executed concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

pub const AGGREGATE_FILE: &str = "aggregate.csv";

pub const AGGREGATE_HEADER: &str =
    "run,m,mass,scale,outcome,verdict,norm_crit0,max_norm_crit,max_norm_inf,max_moser_norm,steps,t_final";

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub m: Option<f64>,
    pub mass: Option<f64>,
    pub scale: Option<f64>,
}

fn axis(cfg: &ConfigText, key: &str) -> Result<Vec<Option<f64>>, CliError> {
    match cfg.get(key) {
        None => Ok(vec![None]),
        Some(text) => {
            let mut v = parse_list(text).map_err(|e| CliError::Config(format!("`{key}`: {e}")))?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(CliError::Config(format!("`{key}`: values must be finite")));
            }
            v.sort_by(f64::total_cmp);
            v.dedup();
            Ok(v.into_iter().map(Some).collect())
        }
    }
}

/// Grid points in canonical order and the shared base config.
pub fn expand(cfg: &ConfigText) -> Result<(ConfigText, Vec<SweepPoint>), CliError> {
    let ms = axis(cfg, "sweep.m")?;
    let masses = axis(cfg, "sweep.mass")?;
    let scales = axis(cfg, "sweep.scale")?;
    let mut base = cfg.clone();
    for key in ["sweep.m", "sweep.mass", "sweep.scale"] {
        base.remove(key);
    }
    if let Some(k) = base.keys().find(|k| k.starts_with("sweep.")) {
        return Err(CliError::Config(format!("unknown sweep key `{k}`")));
    }
    let mut points = Vec::new();
    for &m in &ms {
        for &mass in &masses {
            for &scale in &scales {
                points.push(SweepPoint { m, mass, scale });
            }
        }
    }
    Ok((base, points))
}

pub fn point_config(base: &ConfigText, p: &SweepPoint) -> ConfigText {
    let mut cfg = base.clone();
    if let Some(m) = p.m {
        cfg.set("m", m.to_string());
    }
    if let Some(mass) = p.mass {
        cfg.set("mass", mass.to_string());
    }
    if let Some(s) = p.scale {
        cfg.set("init.value", s.to_string());
    }
    cfg
}

fn aggregate_row(
    idx: usize,
    cfg: &ConfigText,
    result: &Result<SimulationReport, CliError>,
) -> String {
    let key = |k: &str| cfg.get(k).unwrap_or("").to_string();
    let head = format!("{idx},{},{},{}", key("m"), key("mass"), key("init.value"));
    match result {
        Ok(r) => {
            let s = &r.summary;
            let outcome = match s.outcome {
                RunOutcome::Completed => "completed",
                RunOutcome::NumericalBlowupFlag { .. } => "numerical_blowup_flag",
            };
            format!(
                "{head},{outcome},{},{},{},{},{},{},{}",
                s.initial.verdict.as_str(),
                s.initial.norm_2n_over_np2,
                s.max_norm_crit,
                s.max_norm_inf,
                s.max_moser_norm,
                s.steps,
                s.t_final
            )
        }
        Err(_) => format!("{head},error,,,,,,,"),
    }
}

/// Runs every grid point and writes `aggregate.csv`; returns the exit code.
pub fn sweep(cfg: &ConfigText, base_dir: &Path, out: &Path, jobs: usize, err: &mut dyn Write) -> Result<u8, CliError> {
    if jobs == 0 {
        return Err(CliError::Config("--jobs must be >= 1".into()));
    }
    let (base, points) = expand(cfg)?;
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::io(format!("creating {}", out.display()), e))?;
    let configs: Vec<ConfigText> = points.iter().map(|p| point_config(&base, p)).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<SimulationReport, CliError>> = pool.install(|| {
        configs
            .par_iter()
            .enumerate()
            .map(|(i, c)| simulate(c, base_dir, &out.join(format!("run_{i:03}"))))
            .collect()
    });
    let mut text = format!("{AGGREGATE_HEADER}\n");
    let mut failed = false;
    for (i, (c, r)) in configs.iter().zip(&results).enumerate() {
        text.push_str(&aggregate_row(i, c, r));
        text.push('\n');
        if let Err(e) = r {
            failed = true;
            writeln!(err, "run_{i:03}: {e}").map_err(|e| CliError::io("writing output", e))?;
        }
    }
    let path = out.join(AGGREGATE_FILE);
    std::fs::write(&path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    Ok(if failed { exit::FAILURE } else { exit::OK })
}

pub fn cmd_sweep(args: &SweepArgs, err: &mut dyn Write) -> Result<u8, CliError> {
    let text = ConfigText::read(&args.config)?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    sweep(&text, base, &args.out, args.jobs, err)
}
