//! Heat semigroup on the torus, the Duhamel representation of `c`, and
//! numerical checks of the smoothing estimates
//!
//! ```text
//! ‖e^{tΔ} f‖_p  <= A t^{-n/2 (1/q-1/p)} ‖f‖_q
//! ‖∇e^{tΔ} f‖_p <= B t^{-1/2-n/2 (1/q-1/p)} ‖f‖_q
//! ```
//!
//! The estimates hold on `R^n`; on the torus they are meaningful only for
//! fields concentrated away from the box edge, which every report records.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{gamma, semigroup_constants, smoothing_time_exponent};
use crate::field::{gradient, GridSpec, ScalarField, Spectrum};
use crate::{Error, Result};

/// `e^{tΔ} f` via the multiplier `e^{-|k|² t}`.
pub fn heat_evolve(field: &ScalarField, t: f64) -> Result<ScalarField> {
    damped_heat(field, t, 0.0)
}

/// `e^{-γt} e^{tΔ} f`.
fn damped_heat(field: &ScalarField, t: f64, damping: f64) -> Result<ScalarField> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::param("t", format!("need t >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(field.clone());
    }
    let mut s = Spectrum::forward(field);
    s.apply_radial(|k2| (-(k2 + damping) * t).exp());
    Ok(s.to_field())
}

/// Relative tolerance for recognising a uniform time lattice.
const LATTICE_TOL: f64 = 1e-9;

/// `c(t) = e^{-t} e^{tΔ} c₀ + ∫₀^t e^{s-t} e^{(t-s)Δ} ρ(s) ds` with the
/// integral replaced by the trapezoid rule on the samples `(s_j, ρ(s_j))`.
///
/// The samples must start at 0, end at `t` and be uniformly spaced.
pub fn mild_solution_c(
    c0: &ScalarField,
    rho_samples: &[(f64, ScalarField)],
    t: f64,
) -> Result<ScalarField> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::param("t", format!("need t >= 0, got {t}")));
    }
    let scale = t.max(1.0);
    let first = rho_samples
        .first()
        .ok_or_else(|| Error::SampleLattice("no samples".into()))?;
    if first.0.abs() > LATTICE_TOL * scale {
        return Err(Error::SampleLattice(format!("first sample at {} not 0", first.0)));
    }
    let last = rho_samples.last().map(|s| s.0).unwrap_or(0.0);
    if (last - t).abs() > LATTICE_TOL * scale {
        return Err(Error::SampleLattice(format!("last sample at {last}, expected {t}")));
    }
    let intervals = rho_samples.len() - 1;
    if intervals == 0 {
        if t != 0.0 {
            return Err(Error::SampleLattice("a single sample cannot cover t > 0".into()));
        }
        c0.ensure_same_grid(&first.1)?;
        return Ok(c0.clone());
    }
    let h = t / intervals as f64;
    for (j, (s, rho)) in rho_samples.iter().enumerate() {
        if (s - j as f64 * h).abs() > LATTICE_TOL * scale {
            return Err(Error::SampleLattice(format!(
                "sample {j} at {s}, expected {} (spacing {h})",
                j as f64 * h
            )));
        }
        c0.ensure_same_grid(rho)?;
    }

    let mut acc = Spectrum::forward(c0);
    acc.apply_radial(|k2| (-(1.0 + k2) * t).exp());
    let mut total: Vec<_> = acc.coefficients().to_vec();
    for (j, (s, rho)) in rho_samples.iter().enumerate() {
        let weight = if j == 0 || j == intervals { 0.5 * h } else { h };
        let lag = t - s;
        let mut term = Spectrum::forward(rho);
        term.apply_radial(|k2| weight * (-(1.0 + k2) * lag).exp());
        total
            .par_iter_mut()
            .zip(term.coefficients())
            .for_each(|(a, b)| *a += b);
    }
    acc.map_modes(|flat, _| total[flat]);
    Ok(acc.to_field())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    /// `‖e^{tΔ} f‖_p` against `A t^{..} ‖f‖_q`.
    Value,
    /// `‖∇e^{tΔ} f‖_p` against `B t^{..} ‖f‖_q`.
    Gradient,
    /// `‖∇c(t)‖_∞` against `‖∇c₀‖_∞ + B_{∞,q,n} Γ(1/2 - n/(2q)) sup ‖f‖_q`.
    GradientSup,
}

impl EstimateKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimateKind::Value => "value",
            EstimateKind::Gradient => "gradient",
            EstimateKind::GradientSup => "gradient_sup",
        }
    }
}

/// One numerically checked instance of a smoothing estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemigroupEstimateReport {
    pub p: f64,
    pub q: f64,
    pub t: f64,
    pub which: EstimateKind,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// Share of the input's `L¹` mass within 10% of the box edge.
    pub edge_mass_fraction: f64,
}

/// Slack allowed on `ratio` for round-off.
pub const RATIO_TOLERANCE: f64 = 1e-6;

impl SemigroupEstimateReport {
    pub fn passes(&self) -> bool {
        self.ratio <= 1.0 + RATIO_TOLERANCE
    }
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        lhs / rhs
    } else if lhs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Evaluates both sides of the value or gradient smoothing estimate for `f`.
pub fn verify_smoothing_estimate(
    f: &ScalarField,
    p: f64,
    q: f64,
    t: f64,
    which: EstimateKind,
) -> Result<SemigroupEstimateReport> {
    let n = f.grid().dim();
    let constants = semigroup_constants(p, q, n)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::param("t", format!("need t > 0, got {t}")));
    }
    let evolved = heat_evolve(f, t)?;
    let input = f.lp_norm(q)?;
    let power = smoothing_time_exponent(p, q, n);
    let (lhs, rhs) = match which {
        EstimateKind::Value => (evolved.lp_norm(p)?, constants.value * t.powf(-power) * input),
        EstimateKind::Gradient => (
            gradient(&evolved).lp_norm(p)?,
            constants.gradient * t.powf(-0.5 - power) * input,
        ),
        EstimateKind::GradientSup => {
            return Err(Error::param(
                "which",
                "use verify_gradient_sup_estimate for the forced gradient bound",
            ))
        }
    };
    Ok(SemigroupEstimateReport {
        p,
        q,
        t,
        which,
        lhs,
        rhs,
        ratio: ratio(lhs, rhs),
        edge_mass_fraction: f.edge_mass_fraction(),
    })
}

/// Checks `‖∇c(t)‖_∞ <= ‖∇c₀‖_∞ + B_{∞,q,n} Γ(1/2 - n/(2q)) ‖f‖_q` for
/// `c_t = Δc - c + f` with time-independent forcing `f`, solved exactly mode
/// by mode, at each of `times`.
pub fn verify_gradient_sup_estimate(
    c0: &ScalarField,
    forcing: &ScalarField,
    q: f64,
    times: &[f64],
) -> Result<Vec<SemigroupEstimateReport>> {
    c0.ensure_same_grid(forcing)?;
    let n = c0.grid().dim();
    if !(q > n as f64) {
        return Err(Error::param("q", format!("need q > n = {n}, got {q}")));
    }
    let b = semigroup_constants(f64::INFINITY, q, n)?.gradient;
    let time_integral = gamma(0.5 - n as f64 / (2.0 * q));
    let rhs = gradient(c0).lp_norm(f64::INFINITY)? + b * time_integral * forcing.lp_norm(q)?;
    let c0_hat = Spectrum::forward(c0);
    let f_hat = Spectrum::forward(forcing);
    let edge = forcing.edge_mass_fraction().max(c0.edge_mass_fraction());
    times
        .iter()
        .map(|&t| {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::param("t", format!("need t >= 0, got {t}")));
            }
            let mut s = c0_hat.clone();
            let fc = f_hat.coefficients();
            let spec = &c0_hat;
            s.map_modes(|flat, c| {
                let lambda = 1.0 + spec.wavenumber_sq(flat);
                let decay = (-lambda * t).exp();
                c * decay + fc[flat] * ((1.0 - decay) / lambda)
            });
            let lhs = gradient(&s.to_field()).lp_norm(f64::INFINITY)?;
            Ok(SemigroupEstimateReport {
                p: f64::INFINITY,
                q,
                t,
                which: EstimateKind::GradientSup,
                lhs,
                rhs,
                ratio: ratio(lhs, rhs),
                edge_mass_fraction: edge,
            })
        })
        .collect()
}

/// Exponent pairs `(p, q)` drawn from `{2, 4, ∞}` with `q <= p`.
pub const DEFAULT_PAIRS: [(f64, f64); 6] = [
    (2.0, 2.0),
    (4.0, 4.0),
    (f64::INFINITY, f64::INFINITY),
    (4.0, 2.0),
    (f64::INFINITY, 2.0),
    (f64::INFINITY, 4.0),
];

pub const DEFAULT_TIMES: [f64; 3] = [0.1, 0.5, 2.0];

/// Parameters of a randomized estimate battery.
#[derive(Clone, Debug, PartialEq)]
pub struct BatteryConfig {
    pub grid: GridSpec,
    pub size: usize,
    pub seed: u64,
    pub pairs: Vec<(f64, f64)>,
    pub times: Vec<f64>,
    /// Gaussian widths are drawn uniformly from this range.
    pub sigma_range: (f64, f64),
}

impl BatteryConfig {
    pub fn new(grid: GridSpec, size: usize, seed: u64) -> Self {
        Self {
            grid,
            size,
            seed,
            pairs: DEFAULT_PAIRS.to_vec(),
            times: DEFAULT_TIMES.to_vec(),
            sigma_range: (0.5, 2.0),
        }
    }
}

/// A Gaussian input of the battery.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Instance {
    sigma: f64,
    offset: [f64; 3],
    p: f64,
    q: f64,
    t: f64,
    which: EstimateKind,
}

fn gaussian_input(grid: &GridSpec, sigma: f64, offset: &[f64]) -> Result<ScalarField> {
    let mut centre = grid.center();
    for (c, o) in centre.iter_mut().zip(offset) {
        *c += o;
    }
    ScalarField::from_fn(*grid, |x| {
        let r2: f64 = x
            .iter()
            .zip(&centre)
            .map(|(a, b)| grid.periodic_offset(*a, *b).powi(2))
            .sum();
        (-r2 / (2.0 * sigma * sigma)).exp()
    })
}

/// Runs value and gradient checks on Gaussians with random widths and centres
/// near the middle of the box, cycling through every `(p, q)`, `t` and kind.
///
/// Instances are drawn sequentially from the seed, then evaluated in parallel;
/// the output order is the draw order.
pub fn estimate_battery(cfg: &BatteryConfig) -> Result<Vec<SemigroupEstimateReport>> {
    for &(p, q) in &cfg.pairs {
        semigroup_constants(p, q, cfg.grid.dim())?;
    }
    if cfg.size > 0 && (cfg.pairs.is_empty() || cfg.times.is_empty()) {
        return Err(Error::param("battery", "needs at least one (p, q) pair and one time"));
    }
    let (lo, hi) = cfg.sigma_range;
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::param("sigma_range", format!("invalid range ({lo}, {hi})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let spread = 0.05 * cfg.grid.length();
    let kinds = [EstimateKind::Value, EstimateKind::Gradient];
    let instances: Vec<Instance> = (0..cfg.size)
        .map(|i| {
            let (p, q) = cfg.pairs[i % cfg.pairs.len()];
            let t = cfg.times[(i / cfg.pairs.len()) % cfg.times.len()];
            let which = kinds[(i / (cfg.pairs.len() * cfg.times.len()) + i) % 2];
            let sigma = if hi > lo { rng.random_range(lo..hi) } else { lo };
            let mut offset = [0.0; 3];
            for o in offset.iter_mut() {
                *o = rng.random_range(-spread..spread);
            }
            Instance {
                sigma,
                offset,
                p,
                q,
                t,
                which,
            }
        })
        .collect();
    instances
        .par_iter()
        .map(|inst| {
            let f = gaussian_input(&cfg.grid, inst.sigma, &inst.offset)?;
            verify_smoothing_estimate(&f, inst.p, inst.q, inst.t, inst.which)
        })
        .collect()
}
