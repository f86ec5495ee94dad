use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use kslab::constants::ModelParams;
use kslab::criterion::{
    classify, csv_header, moser_check, track, CriterionVerdict, DiagnosticsRow, MoserCheck,
    Regularization,
};
use kslab::dynamics::{initial_data, run_with, RunOutcome, SimState, Snapshot};
use kslab::field::write_ksf;
use serde::Serialize;

use crate::config::{ConfigText, FieldOutput, RunConfig};
use crate::manifest::{now, ManifestOutcome, RunManifest};
use crate::{exit, CliError};

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Snapshots diagnosed together; bounds memory while letting rows evaluate in parallel.
const BATCH: usize = 8;

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";

/// Run-level results, also written as `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummaryFile {
    pub outcome: RunOutcome,
    pub steps: u64,
    pub t_final: f64,
    /// `M₀` the thresholds were evaluated with.
    pub mass: f64,
    pub initial: CriterionVerdict,
    pub max_norm_crit: f64,
    pub max_norm_inf: f64,
    pub max_moser_norm: f64,
    pub moser: MoserCheck,
    pub moser_passes: bool,
}

/// Everything a finished run produced, for callers that go on to check it.
#[derive(Clone, Debug)]
pub struct SimulationReport {
    pub summary: RunSummaryFile,
    pub params: ModelParams,
    pub rows: Vec<DiagnosticsRow>,
    pub manifest: RunManifest,
}

impl SimulationReport {
    pub fn exit_code(&self) -> u8 {
        match self.summary.outcome {
            RunOutcome::Completed => exit::OK,
            RunOutcome::NumericalBlowupFlag { .. } => exit::BLOWUP_FLAG,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(format!("creating {}", path.display()), e))
}

struct Recorder<'a> {
    dir: &'a Path,
    cfg: &'a RunConfig,
    params: &'a ModelParams,
    csv: BufWriter<File>,
    pending: Vec<Snapshot>,
    rows: Vec<DiagnosticsRow>,
    last: Option<Snapshot>,
    outputs: Vec<String>,
}

impl Recorder<'_> {
    fn write_fields(&mut self, s: &Snapshot) -> kslab::Result<()> {
        for (name, field) in [("rho", &s.state.rho), ("c", &s.state.c)] {
            let file = format!("{name}_{}.ksf", s.state.step_count);
            write_ksf(field, self.dir.join(&file))?;
            if !self.outputs.contains(&file) {
                self.outputs.push(file);
            }
        }
        Ok(())
    }

    fn observe(&mut self, s: &Snapshot) -> kslab::Result<()> {
        let first = self.rows.is_empty() && self.pending.is_empty();
        if self.cfg.fields == FieldOutput::All || (first && self.cfg.fields == FieldOutput::Ends) {
            self.write_fields(s)?;
        }
        self.pending.push(s.clone());
        if self.pending.len() == BATCH {
            self.flush()?;
        }
        Ok(())
    }

    fn flush(&mut self) -> kslab::Result<()> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let reg = Regularization {
            epsilon: self.cfg.solver.epsilon,
            mollifier: self.cfg.solver.mollifier.as_ref(),
        };
        let rows = track(&self.pending, self.params, reg, self.cfg.k_max)?;
        for row in &rows {
            writeln!(self.csv, "{}", row.csv_record())?;
        }
        self.rows.extend(rows);
        self.last = self.pending.pop();
        self.pending.clear();
        Ok(())
    }
}

/// Runs the configuration in `cfg` and writes every artifact into `dir`.
///
/// `base` resolves relative paths inside the config. Model errors raised
/// mid-run still leave the rows recorded so far and a manifest with outcome
/// `error` behind.
pub fn simulate(cfg_text: &ConfigText, base: &Path, dir: &Path) -> Result<SimulationReport, CliError> {
    let started = now();
    let mut cfg = RunConfig::from_text(cfg_text, base)?;
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    let provisional = ModelParams::new(cfg.n, cfg.m, cfg.declared_mass.unwrap_or(1.0))?;
    let (rho0, c0) = initial_data(&cfg.grid, &provisional, &cfg.init)?;
    let params = ModelParams::new(cfg.n, cfg.m, cfg.declared_mass.unwrap_or_else(|| rho0.mass()))?;
    let initial = classify(&rho0, &c0, &params)?;
    let rho0_sup = rho0.max();
    cfg.resolve_epsilon(rho0_sup);

    let write_text = |name: &str, text: String| -> Result<(), CliError> {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
    };
    write_text("config.txt", cfg_text.canonical())?;
    write_text("verdict.json", serde_json::to_string_pretty(&initial)? + "\n")?;

    let mut csv = create(&dir.join(DIAGNOSTICS_FILE))?;
    writeln!(csv, "{}", csv_header(cfg.k_max)).map_err(|e| CliError::io("writing diagnostics", e))?;
    let mut rec = Recorder {
        dir,
        cfg: &cfg,
        params: &params,
        csv,
        pending: Vec::new(),
        rows: Vec::new(),
        last: None,
        outputs: vec!["config.txt".into(), "verdict.json".into(), DIAGNOSTICS_FILE.into()],
    };
    let run = run_with(&cfg.solver, &params, SimState::new(rho0, c0)?, |s| rec.observe(s))
        .and_then(|summary| {
            rec.flush()?;
            if cfg.fields == FieldOutput::Ends {
                if let Some(last) = rec.last.take() {
                    rec.write_fields(&last)?;
                }
            }
            rec.csv.flush()?;
            Ok(summary)
        });
    let mut manifest = RunManifest {
        config_hash: cfg_text.hash(),
        started,
        finished: String::new(),
        outcome: ManifestOutcome::Completed,
        detail: None,
        steps: 0,
        t_final: 0.0,
        outputs: Vec::new(),
    };
    let summary = match run {
        Ok(s) => s,
        Err(e) => {
            let _ = rec.flush();
            let _ = rec.csv.flush();
            manifest.finished = now();
            manifest.outcome = ManifestOutcome::Error;
            manifest.detail = Some(e.to_string());
            if let Some(row) = rec.rows.last() {
                manifest.t_final = row.t;
            }
            manifest.outputs = rec.outputs.clone();
            manifest.write(dir)?;
            return Err(e.into());
        }
    };

    let rows = std::mem::take(&mut rec.rows);
    let mut outputs = std::mem::take(&mut rec.outputs);
    drop(rec);
    let moser = moser_check(&rows, &params, rho0_sup)?;
    let fold = |f: fn(&DiagnosticsRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    let file = RunSummaryFile {
        outcome: summary.outcome.clone(),
        steps: summary.steps,
        t_final: summary.t_final,
        mass: params.mass,
        initial,
        max_norm_crit: fold(|r| r.norm_crit),
        max_norm_inf: fold(|r| r.norm_inf),
        max_moser_norm: moser.max_norm,
        moser_passes: moser.passes(),
        moser,
    };
    write_text("summary.json", serde_json::to_string_pretty(&file)? + "\n")?;
    outputs.push("summary.json".into());
    outputs.push("manifest.json".into());

    if let RunOutcome::NumericalBlowupFlag { reason, .. } = &summary.outcome {
        manifest.outcome = ManifestOutcome::NumericalBlowupFlag;
        manifest.detail = Some(reason.clone());
    }
    manifest.steps = summary.steps;
    manifest.t_final = summary.t_final;
    manifest.outputs = outputs;
    manifest.finished = now();
    manifest.write(dir)?;
    Ok(SimulationReport {
        summary: file,
        params,
        rows,
        manifest,
    })
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<u8, CliError> {
    let text = ConfigText::read(&args.config)?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    Ok(simulate(&text, base, &args.out)?.exit_code())
}
