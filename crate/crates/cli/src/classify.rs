use std::io::Write;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use kslab::constants::ModelParams;
use kslab::criterion::{classify, CriterionVerdict, Verdict};
use kslab::dynamics::{initial_data, Amplitude, InitShape, InitSpec, InitialC};
use kslab::field::{read_ksf, resolvent_solve, GridSpec, ScalarField};

use crate::{exit, CliError};

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// `ρ₀ = 0`.
    Zero,
    /// Centred Gaussian blob scaled to `--fraction` of the threshold norm.
    Blob,
}

#[derive(Args, Debug, Clone)]
pub struct ClassifyArgs {
    /// KSF1 file holding `ρ₀`.
    #[arg(long, conflicts_with = "preset")]
    pub init: Option<PathBuf>,
    /// KSF1 file holding `c₀`; defaults to `(1 - Δ)^{-1} ρ₀`.
    #[arg(long)]
    pub c0: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub m: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mass: f64,
    /// Dimension used by presets.
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    /// Points per axis used by presets.
    #[arg(long, default_value_t = 32)]
    pub grid: usize,
    /// Box length used by presets.
    #[arg(long, default_value_t = 20.0)]
    pub length: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Multiple of the threshold norm for the blob preset.
    #[arg(long, default_value_t = 0.5)]
    pub fraction: f64,
}

pub fn verdict_exit_code(v: Verdict) -> u8 {
    match v {
        Verdict::Subcritical => exit::OK,
        Verdict::SupercriticalNorm => exit::SUPERCRITICAL_NORM,
        Verdict::Indeterminate => exit::INDETERMINATE,
    }
}

fn load(path: &PathBuf) -> Result<ScalarField, CliError> {
    read_ksf(path).map_err(|e| match e {
        kslab::Error::Io(io) => CliError::io(format!("reading {}", path.display()), io),
        other => CliError::Config(format!("{}: {other}", path.display())),
    })
}

pub fn evaluate(args: &ClassifyArgs) -> Result<CriterionVerdict, CliError> {
    let params = ModelParams::new(args.n, args.m, args.mass)?;
    let rho0 = match (&args.init, args.preset) {
        (Some(path), _) => load(path)?,
        (None, Some(preset)) => {
            let grid = GridSpec::new(args.n, args.grid, args.length)?;
            match preset {
                Preset::Zero => ScalarField::zeros(grid),
                Preset::Blob => {
                    let spec = InitSpec {
                        shape: InitShape::GaussianBlob {
                            sigma: args.sigma,
                            center: None,
                        },
                        amplitude: Amplitude::ThresholdFraction(args.fraction),
                        c0: InitialC::Zero,
                    };
                    initial_data(&grid, &params, &spec)?.0
                }
            }
        }
        (None, None) => return Err(CliError::Config("give --init or --preset".into())),
    };
    let params = ModelParams::new(rho0.grid().dim(), args.m, args.mass)?;
    let c0 = match &args.c0 {
        Some(path) => load(path)?,
        None => resolvent_solve(&rho0),
    };
    Ok(classify(&rho0, &c0, &params)?)
}

pub fn cmd_classify(args: &ClassifyArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    let verdict = evaluate(args)?;
    serde_json::to_writer(&mut *out, &verdict)?;
    writeln!(out).map_err(|e| CliError::io("writing output", e))?;
    Ok(verdict_exit_code(verdict.verdict))
}
