//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use kslab::constants::{barrier, sobolev_constant, thresholds, ModelParams};
use kslab::criterion::energy_balance_residuals;
use kslab::dynamics::{initial_shape, InitShape, RunOutcome};
use kslab::field::{GridSpec, ScalarField};
use kslab::semigroup::{estimate_battery, heat_evolve, BatteryConfig, EstimateKind};
use kslab_cli::config::ConfigText;
use kslab_cli::simulate::{simulate, SimulationReport, DIAGNOSTICS_FILE};
use kslab_cli::sweep::{sweep, AGGREGATE_FILE};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn rel_l2(a: &ScalarField, b: &ScalarField) -> f64 {
    a.combine(1.0, b, -1.0).unwrap().lp_norm(2.0).unwrap() / b.lp_norm(2.0).unwrap()
}

fn gaussian(grid: GridSpec, variance: f64, amplitude: f64) -> ScalarField {
    let c = grid.center();
    ScalarField::from_fn(grid, |x| {
        let r2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum();
        amplitude * (-r2 / (2.0 * variance)).exp()
    })
    .unwrap()
}

fn constants_reproduction() -> Outcome {
    let start = Instant::now();
    let closed = 3.0 * (PI / 2.0).powf(4.0 / 3.0);
    let s3 = sobolev_constant(3).unwrap();
    let sob_err = (s3 - closed).abs() / closed;
    let (mut worst_f, mut worst_slope) = (0f64, 0f64);
    for m in [1.22, 1.25, 1.30] {
        for mass in [0.5, 1.0, 2.0] {
            let p = ModelParams::new(3, m, mass).unwrap();
            let t = thresholds(&p).unwrap();
            let f = barrier(t.s_star, &p).unwrap();
            worst_f = worst_f.max((t.f_star - f).abs() / f.abs());
            // f'(s) = M^a/(m-1) - γ s^{γ-1}/(2S)
            let lin = mass.powf(p.mass_power()) / (m - 1.0);
            let g = p.barrier_power();
            let slope = lin - g * t.s_star.powf(g - 1.0) / (2.0 * s3);
            worst_slope = worst_slope.max(slope.abs() / lin);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        sob_err <= 1e-10 && worst_f <= 1e-10 && worst_slope <= 1e-6 && secs < 1.0,
        format!("S_3 rel err {sob_err:.1e}; F*=f(s*) rel err {worst_f:.1e}; |f'(s*)| rel {worst_slope:.1e}; {secs:.2}s"),
    )
}

fn semigroup_oracle() -> Outcome {
    let start = Instant::now();
    let g = GridSpec::new(3, 64, 20.0).unwrap();
    let (sigma2, t) = (1.0, 0.5);
    let f = gaussian(g, sigma2, 1.0);
    let evolved = heat_evolve(&f, t).unwrap();
    let amp = (sigma2 / (sigma2 + 2.0 * t)).powf(1.5);
    let exact = gaussian(g, sigma2 + 2.0 * t, amp);
    let oracle_err = rel_l2(&evolved, &exact);
    let split = heat_evolve(&heat_evolve(&f, 0.2).unwrap(), 0.3).unwrap();
    let semigroup_err = rel_l2(&split, &evolved);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        oracle_err <= 1e-6 && semigroup_err <= 1e-10 && secs < 10.0,
        format!("Gaussian oracle rel L2 {oracle_err:.1e}; semigroup {semigroup_err:.1e}; {secs:.2}s"),
    )
}

fn estimate_battery_check() -> Outcome {
    let start = Instant::now();
    let g = GridSpec::new(3, 64, 20.0).unwrap();
    let cfg = BatteryConfig::new(g, 50, 0);
    let reports = estimate_battery(&cfg).unwrap();
    let worst = reports.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let failing = reports.iter().filter(|r| !r.passes()).count();
    let values = reports.iter().filter(|r| r.which == EstimateKind::Value).count();
    let grads = reports.len() - values;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        reports.len() == 50 && failing == 0 && worst <= 1.0 + 1e-6 && secs < 60.0,
        format!(
            "{} reports ({values} value, {grads} gradient); max ratio {worst:.6}; {failing} failing; {secs:.1}s",
            reports.len()
        ),
    )
}

fn run_benchmark(out: &Path) -> (SimulationReport, f64) {
    let cfg = ConfigText::read(&workspace().join("configs/benchmark.cfg")).unwrap();
    let start = Instant::now();
    let report = simulate(&cfg, &workspace(), out).unwrap();
    (report, start.elapsed().as_secs_f64())
}

fn subcritical_benchmark(report: &SimulationReport, secs: f64) -> Outcome {
    let rows = &report.rows;
    let params = &report.params;
    let threshold = thresholds(params).unwrap().threshold_norm;
    let m0 = rows[0].mass;
    let mass_drift = rows.iter().map(|r| (r.mass - m0).abs() / m0).fold(0.0, f64::max);
    let mut worst_rise = f64::NEG_INFINITY;
    let mut energy_ok = true;
    for w in rows.windows(2) {
        let (a, b) = (w[0].energy.regularized, w[1].energy.regularized);
        let tol = 1e-6 * (1.0 + a.abs());
        worst_rise = worst_rise.max((b - a) / tol);
        energy_ok &= b <= a + tol;
    }
    let max_norm = rows.iter().map(|r| r.norm_crit).fold(0.0, f64::max);
    let min_f2 = rows.iter().map(|r| r.energy.chemical_part).fold(f64::INFINITY, f64::min);
    let min_f1_gap = rows
        .iter()
        .map(|r| {
            let f = barrier(params.norm_to_barrier_arg(r.norm_crit), params).unwrap();
            r.energy.density_part - f
        })
        .fold(f64::INFINITY, f64::min);
    let residual = energy_balance_residuals(rows)
        .iter()
        .map(|x| x.abs())
        .fold(0.0, f64::max);
    let completed = report.summary.outcome == RunOutcome::Completed;
    outcome(
        completed
            && mass_drift <= 1e-10
            && energy_ok
            && rows.iter().all(|r| r.norm_crit < threshold)
            && min_f2 >= -1e-9
            && min_f1_gap >= -1e-9
            && secs <= 300.0,
        format!(
            "M0 {m0:.4}, {} rows; mass drift {mass_drift:.1e}; max F_eps rise/tol {worst_rise:.2e}; \
             max norm {max_norm:.3} < {threshold:.3}; min F2 {min_f2:.3e}; min F1-f {min_f1_gap:.3e}; \
             balance residual {residual:.2e} (reported); initial verdict {}; {secs:.1}s",
            rows.len(),
            report.summary.initial.verdict.as_str()
        ),
    )
}

fn moser_tracker(report: &SimulationReport) -> Outcome {
    let m = &report.summary.moser;
    let inf0 = report.rows[0].norm_inf;
    let inf_max = report.summary.max_norm_inf;
    outcome(
        m.passes() && inf_max <= 10.0 * inf0,
        format!(
            "max ||rho||_pk {:.4} <= bound {:.4} (C fitted {:.2e}, used {:.2e}, K {:.3}, sup ||rho||_p0 {:.4}); \
             max ||rho||_inf {inf_max:.4} vs 10x initial {:.4}",
            m.max_norm,
            m.bound,
            m.fitted_c,
            m.c,
            m.k0,
            m.sup_base_norm,
            10.0 * inf0
        ),
    )
}

const SWEEP_BASE: &str = "n = 3\nN = 32\nL = 20\nm = 1.25\nmass = 1\nt_end = 0\n\
                          init.kind = gaussian\ninit.sigma = 1\ninit.by = scale\ninit.value = 1\n";

fn sweep_config() -> (ConfigText, f64, Vec<f64>) {
    let g = GridSpec::new(3, 32, 20.0).unwrap();
    let shape = initial_shape(&g, &InitShape::GaussianBlob { sigma: 1.0, center: None }).unwrap();
    let params = ModelParams::new(3, 1.25, 1.0).unwrap();
    let unit = shape.lp_norm(params.critical_lebesgue()).unwrap();
    let threshold = thresholds(&params).unwrap().threshold_norm;
    let critical = threshold / unit;
    let fractions = [0.5, 1.0 - 1e-8, 1.0 + 1e-8, 1.5, 2.0];
    let scales: Vec<f64> = fractions.iter().map(|f| f * critical).collect();
    let list: Vec<String> = scales.iter().map(|s| s.to_string()).collect();
    let mut cfg = ConfigText::parse(SWEEP_BASE).unwrap();
    cfg.set("sweep.scale", list.join(","));
    (cfg, critical, scales)
}

fn threshold_sweep(dir: &Path) -> Outcome {
    let start = Instant::now();
    let (cfg, critical, scales) = sweep_config();
    let code = sweep(&cfg, dir, &dir.join("j4"), 4, &mut std::io::sink()).unwrap();
    let agg = std::fs::read_to_string(dir.join("j4").join(AGGREGATE_FILE)).unwrap();
    let rows: Vec<Vec<String>> = agg
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    let mut ok = code == 0 && rows.len() == scales.len();
    let mut homogeneity = 0f64;
    let mut pattern = Vec::new();
    let unit_norm: f64 = rows
        .first()
        .map(|r| r[6].parse::<f64>().unwrap() / r[3].parse::<f64>().unwrap())
        .unwrap_or(f64::NAN);
    for (row, &scale) in rows.iter().zip(&scales) {
        let s: f64 = row[3].parse().unwrap();
        let norm: f64 = row[6].parse().unwrap();
        homogeneity = homogeneity.max((norm - s * unit_norm).abs() / norm);
        let expect = if scale < critical { "subcritical" } else { "supercritical_norm" };
        ok &= s == scale && row[5] == expect;
        pattern.push(row[5].clone());
    }
    ok &= homogeneity <= 1e-10;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        ok && secs < 10.0,
        format!(
            "predicted critical scale {critical:.6}; verdicts {}; homogeneity err {homogeneity:.1e}; {secs:.2}s",
            pattern.join("/")
        ),
    )
}

fn determinism(first: &Path, second: &Path, sweep_dir: &Path) -> Outcome {
    let a = std::fs::read(first.join(DIAGNOSTICS_FILE)).unwrap();
    let b = std::fs::read(second.join(DIAGNOSTICS_FILE)).unwrap();
    let (cfg, _, _) = sweep_config();
    let code = sweep(&cfg, sweep_dir, &sweep_dir.join("j1"), 1, &mut std::io::sink()).unwrap();
    let agg1 = std::fs::read(sweep_dir.join("j1").join(AGGREGATE_FILE)).unwrap();
    let agg4 = std::fs::read(sweep_dir.join("j4").join(AGGREGATE_FILE)).unwrap();
    outcome(
        a == b && code == 0 && agg1 == agg4,
        format!(
            "benchmark CSV identical: {} ({} bytes); sweep aggregate J=1 vs J=4 identical: {}",
            a == b,
            a.len(),
            agg1 == agg4
        ),
    )
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("1 constant reproduction", constants_reproduction()));
    results.push(("2 semigroup oracle", semigroup_oracle()));
    results.push(("3 estimate battery", estimate_battery_check()));
    let (bench, secs) = run_benchmark(&tmp.path().join("bench_a"));
    results.push(("4 subcritical benchmark", subcritical_benchmark(&bench, secs)));
    results.push(("5 moser tracker", moser_tracker(&bench)));
    results.push(("6 threshold transition sweep", threshold_sweep(tmp.path())));
    let (_, _) = run_benchmark(&tmp.path().join("bench_b"));
    results.push((
        "7 determinism",
        determinism(&tmp.path().join("bench_a"), &tmp.path().join("bench_b"), tmp.path()),
    ));
    let mut failed = 0;
    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
