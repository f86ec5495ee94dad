//! Time integration of the regularized system
//!
//! ```text
//! rho_t = Δ(rho + ε)^m - div((rho + ε) ∇(c * J)),
//! c_t   = Δc - c + rho * J
//! ```
//!
//! on the torus. `rho` is advanced by an explicit conservative finite-volume
//! step (centred degenerate diffusion, upwind drift), `c` by a backward-Euler
//! spectral solve. Face fluxes leaving a cell are scaled down when they would
//! remove more than the cell holds, so `rho` stays nonnegative while the
//! update remains conservative.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{thresholds, ModelParams};
use crate::field::{convolve, read_ksf, resolvent_solve, GridSpec, Mollifier, ScalarField, Spectrum};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Explicit finite volume for `rho`, backward Euler for `c`.
    #[default]
    ExplicitRhoImplicitC,
    /// Forward Euler for both; `dt` also obeys the explicit `c` stability limit.
    FullyExplicit,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Regularization `ε >= 0`.
    pub epsilon: f64,
    /// `None` runs the unmollified system.
    pub mollifier: Option<Mollifier>,
    /// Upper bound on every step.
    pub dt_init: f64,
    pub t_end: f64,
    pub cfl_safety: f64,
    /// Steps between recorded snapshots.
    pub snapshot_every: usize,
    pub scheme: Scheme,
    /// Drift on/off; off leaves the porous-medium equation for `rho`.
    pub chemotaxis: bool,
}

pub const DEFAULT_CFL_SAFETY: f64 = 0.4;

/// Steps below this length raise the blow-up indicator.
pub const DT_FLOOR: f64 = 1e-12;

/// Per-step growth of `max rho` that raises the blow-up indicator.
pub const GROWTH_LIMIT: f64 = 1e3;

/// Negative values down to `-CLIP_TOLERANCE · max rho` are set to zero.
pub const CLIP_TOLERANCE: f64 = 1e-12;

impl SolverConfig {
    pub fn new(epsilon: f64, mollifier: Option<Mollifier>, dt_init: f64, t_end: f64) -> Result<Self> {
        let cfg = Self {
            epsilon,
            mollifier,
            dt_init,
            t_end,
            cfl_safety: DEFAULT_CFL_SAFETY,
            snapshot_every: 1,
            scheme: Scheme::default(),
            chemotaxis: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param("epsilon", format!("need ε >= 0, got {}", self.epsilon)));
        }
        if !(self.dt_init > 0.0 && self.dt_init.is_finite()) {
            return Err(Error::param("dt_init", format!("need dt_init > 0, got {}", self.dt_init)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::param("t_end", format!("need t_end >= 0, got {}", self.t_end)));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::param(
                "cfl_safety",
                format!("need 0 < cfl_safety <= 1, got {}", self.cfl_safety),
            ));
        }
        if self.snapshot_every == 0 {
            return Err(Error::param("snapshot_every", "must be >= 1"));
        }
        if let Some(j) = &self.mollifier {
            Mollifier::new(j.width, j.kind)?;
        }
        Ok(())
    }

    fn smooth(&self, field: &ScalarField) -> Result<ScalarField> {
        match &self.mollifier {
            Some(j) => convolve(field, j),
            None => Ok(field.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub rho: ScalarField,
    pub c: ScalarField,
    pub t: f64,
    pub step_count: u64,
}

impl SimState {
    pub fn new(rho: ScalarField, c: ScalarField) -> Result<Self> {
        rho.ensure_same_grid(&c)?;
        Ok(Self {
            rho,
            c,
            t: 0.0,
            step_count: 0,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        self.rho.grid()
    }
}

/// Result of one accepted step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub state: SimState,
    pub dt: f64,
    /// Mass removed by clipping round-off negatives in this step.
    pub clipped_mass: f64,
    /// `(c_new - c_old) / dt`.
    pub c_rate: ScalarField,
}

/// Face drift velocities `(φ_{i+1} - φ_i)/dx` for every axis.
fn face_velocities(phi: &ScalarField) -> Vec<Vec<f64>> {
    let grid = *phi.grid();
    let inv_dx = 1.0 / grid.spacing();
    let v = phi.values();
    (0..grid.dim())
        .map(|axis| {
            (0..grid.len())
                .into_par_iter()
                .map(|i| (v[grid.shift(i, axis, true)] - v[i]) * inv_dx)
                .collect()
        })
        .collect()
}

fn drift_potential(state: &SimState, cfg: &SolverConfig) -> Result<Option<ScalarField>> {
    if cfg.chemotaxis {
        cfg.smooth(&state.c).map(Some)
    } else {
        Ok(None)
    }
}

/// `Σ_axes max_faces |v|`, a bound on the discrete drift speed of any cell.
fn drift_speed(velocities: &[Vec<f64>]) -> f64 {
    velocities
        .iter()
        .map(|v| v.iter().fold(0.0f64, |a, x| a.max(x.abs())))
        .sum()
}

fn dt_from(state: &SimState, cfg: &SolverConfig, params: &ModelParams, speed: f64) -> f64 {
    let grid = state.grid();
    let dx = grid.spacing();
    let n = grid.dim() as f64;
    let top = state.rho.max().max(0.0) + cfg.epsilon;
    let diffusivity = params.m * top.powf(params.m - 1.0);
    let diffusion = if diffusivity > 0.0 {
        dx * dx / (2.0 * n * diffusivity)
    } else {
        f64::INFINITY
    };
    let advection = dx / (speed + f64::MIN_POSITIVE);
    let mut dt = cfg.cfl_safety * diffusion.min(advection);
    if cfg.scheme == Scheme::FullyExplicit {
        let k_max2 = n * (std::f64::consts::PI / dx).powi(2);
        dt = dt.min(cfg.cfl_safety * 2.0 / (1.0 + k_max2));
    }
    let remaining = cfg.t_end - state.t;
    dt.min(cfg.dt_init).min(remaining.max(0.0))
}

/// Stable step length
/// `cfl · min(dx²/(2n m (max rho + ε)^{m-1}), dx/max|v|)`, capped by
/// `dt_init` and the time left to `t_end`.
///
/// `max|v|` sums the largest face drift over the axes, which bounds the
/// discrete speed of any cell.
pub fn choose_dt(state: &SimState, cfg: &SolverConfig, params: &ModelParams) -> Result<f64> {
    let speed = match drift_potential(state, cfg)? {
        Some(phi) => drift_speed(&face_velocities(&phi)),
        None => 0.0,
    };
    Ok(dt_from(state, cfg, params, speed))
}

/// One step with `dt` from [`choose_dt`].
pub fn step(state: &SimState, cfg: &SolverConfig, params: &ModelParams) -> Result<StepReport> {
    let phi = drift_potential(state, cfg)?;
    let velocities = phi.as_ref().map(face_velocities);
    let speed = velocities.as_deref().map(drift_speed).unwrap_or(0.0);
    let dt = dt_from(state, cfg, params, speed);
    advance(state, cfg, params, dt, velocities.as_deref())
}

/// One step of prescribed length.
pub fn step_with_dt(
    state: &SimState,
    cfg: &SolverConfig,
    params: &ModelParams,
    dt: f64,
) -> Result<StepReport> {
    let velocities = drift_potential(state, cfg)?.as_ref().map(face_velocities);
    advance(state, cfg, params, dt, velocities.as_deref())
}

fn advance(
    state: &SimState,
    cfg: &SolverConfig,
    params: &ModelParams,
    dt: f64,
    velocities: Option<&[Vec<f64>]>,
) -> Result<StepReport> {
    if !(dt >= DT_FLOOR) {
        return Err(Error::NumericalBlowup {
            t: state.t,
            reason: format!("step length {dt:e} below {DT_FLOOR:e}"),
        });
    }
    let grid = *state.grid();
    let len = grid.len();
    let dim = grid.dim();
    let dx = grid.spacing();
    let eps = cfg.epsilon;
    let rho = state.rho.values();
    let u: Vec<f64> = rho.par_iter().map(|&r| (r + eps).max(0.0).powf(params.m)).collect();

    // face i+1/2 along each axis
    let fluxes: Vec<Vec<f64>> = (0..dim)
        .map(|axis| {
            (0..len)
                .into_par_iter()
                .map(|i| {
                    let j = grid.shift(i, axis, true);
                    let mut flux = -(u[j] - u[i]) / dx;
                    if let Some(vel) = velocities {
                        let v = vel[axis][i];
                        flux += if v > 0.0 { v * (rho[i] + eps) } else { v * (rho[j] + eps) };
                    }
                    flux
                })
                .collect()
        })
        .collect();

    let lambda = dt / dx;
    let scale: Vec<f64> = (0..len)
        .into_par_iter()
        .map(|i| {
            let mut out = 0.0;
            for (axis, f) in fluxes.iter().enumerate() {
                out += f[i].max(0.0) + (-f[grid.shift(i, axis, false)]).max(0.0);
            }
            out *= lambda;
            if out > rho[i] {
                (rho[i] / out).max(0.0)
            } else {
                1.0
            }
        })
        .collect();
    let limited = |axis: usize, i: usize| {
        let f = fluxes[axis][i];
        if f > 0.0 {
            f * scale[i]
        } else {
            f * scale[grid.shift(i, axis, true)]
        }
    };
    let mut next: Vec<f64> = (0..len)
        .into_par_iter()
        .map(|i| {
            let mut div = 0.0;
            for axis in 0..dim {
                div += limited(axis, i) - limited(axis, grid.shift(i, axis, false));
            }
            rho[i] - lambda * div
        })
        .collect();

    let peak = next.iter().copied().fold(0.0f64, f64::max);
    let old_peak = state.rho.max();
    let t_new = state.t + dt;
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalBlowup {
            t: t_new,
            reason: "non-finite density".into(),
        });
    }
    if old_peak > 0.0 && peak > GROWTH_LIMIT * old_peak {
        return Err(Error::NumericalBlowup {
            t: t_new,
            reason: format!("max rho grew from {old_peak:e} to {peak:e} in one step"),
        });
    }
    let floor = -CLIP_TOLERANCE * peak;
    let mut clipped = 0.0;
    for v in next.iter_mut() {
        if *v < 0.0 {
            if *v < floor {
                return Err(Error::Negativity { t: t_new, value: *v });
            }
            clipped -= *v;
            *v = 0.0;
        }
    }
    let rho_new = ScalarField::new(grid, next)?;

    let c_new = match cfg.scheme {
        Scheme::ExplicitRhoImplicitC => relax_c(&state.c, &cfg.smooth(&rho_new)?, dt)?,
        Scheme::FullyExplicit => {
            let source = Spectrum::forward(&cfg.smooth(&state.rho)?);
            let src = source.coefficients();
            let mut s = Spectrum::forward(&state.c);
            let spec = s.clone();
            s.map_modes(|flat, c| c * (1.0 - dt * (1.0 + spec.wavenumber_sq(flat))) + src[flat] * dt);
            s.to_field()
        }
    };
    let c_rate = c_new.combine(1.0 / dt, &state.c, -1.0 / dt)?;
    Ok(StepReport {
        state: SimState {
            rho: rho_new,
            c: c_new,
            t: t_new,
            step_count: state.step_count + 1,
        },
        dt,
        clipped_mass: clipped * grid.cell_volume(),
        c_rate,
    })
}

/// Backward-Euler step `(1 + dt(1 - Δ)) c_new = c + dt·source`.
pub fn relax_c(c: &ScalarField, source: &ScalarField, dt: f64) -> Result<ScalarField> {
    let rhs = c.combine(1.0, source, dt)?;
    let mut s = Spectrum::forward(&rhs);
    s.apply_radial(|k2| 1.0 / (1.0 + dt * (1.0 + k2)));
    Ok(s.to_field())
}

/// A recorded state with the step data the diagnostics need.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub state: SimState,
    /// Length of the step that produced this state; 0 for the initial state.
    pub dt: f64,
    /// Backward difference of `c` over the last step; `None` for the initial state.
    pub c_rate: Option<ScalarField>,
    /// Clipped mass accumulated since `t = 0`.
    pub clipped_mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum RunOutcome {
    Completed,
    /// Heuristic indicator only; it does not establish finite-time blow-up.
    NumericalBlowupFlag { t: f64, reason: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub outcome: RunOutcome,
    pub steps: u64,
    pub t_final: f64,
    pub snapshots: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub summary: RunSummary,
}

/// Integrates to `t_end` or until the blow-up indicator fires, passing every
/// recorded snapshot to `observer` as it is produced. The initial and final
/// states are always recorded.
pub fn run_with(
    cfg: &SolverConfig,
    params: &ModelParams,
    init: SimState,
    mut observer: impl FnMut(&Snapshot) -> Result<()>,
) -> Result<RunSummary> {
    cfg.validate()?;
    let mut snap = Snapshot {
        state: init,
        dt: 0.0,
        c_rate: None,
        clipped_mass: 0.0,
    };
    observer(&snap)?;
    let mut recorded = 1;
    let mut since_record = 0usize;
    let mut outcome = RunOutcome::Completed;
    while snap.state.t < cfg.t_end {
        match step(&snap.state, cfg, params) {
            Ok(rep) => {
                let total_clipped = snap.clipped_mass + rep.clipped_mass;
                snap = Snapshot {
                    state: rep.state,
                    dt: rep.dt,
                    c_rate: Some(rep.c_rate),
                    clipped_mass: total_clipped,
                };
                since_record += 1;
                // snap the final time onto t_end so round-off cannot leave a sliver
                if cfg.t_end - snap.state.t <= 1e-12 * cfg.t_end.max(1.0) {
                    snap.state.t = cfg.t_end;
                }
                if since_record == cfg.snapshot_every || snap.state.t >= cfg.t_end {
                    observer(&snap)?;
                    recorded += 1;
                    since_record = 0;
                }
            }
            Err(Error::NumericalBlowup { t, reason }) => {
                if since_record > 0 {
                    observer(&snap)?;
                    recorded += 1;
                }
                outcome = RunOutcome::NumericalBlowupFlag { t, reason };
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(RunSummary {
        outcome,
        steps: snap.state.step_count,
        t_final: snap.state.t,
        snapshots: recorded,
    })
}

/// [`run_with`] collecting every snapshot in memory.
pub fn run(cfg: &SolverConfig, params: &ModelParams, init: SimState) -> Result<Trajectory> {
    let mut snapshots = Vec::new();
    let summary = run_with(cfg, params, init, |s| {
        snapshots.push(s.clone());
        Ok(())
    })?;
    Ok(Trajectory { snapshots, summary })
}

/// Shape of the initial density before its amplitude is fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitShape {
    /// `exp(-|x - x₀|²/(2σ²))`, centred in the box unless `center` is given.
    GaussianBlob { sigma: f64, center: Option<Vec<f64>> },
    /// Two equal blobs at `centre ± separation/2` along the first axis.
    TwoBlobs { sigma: f64, separation: f64 },
    /// `count` blobs with seeded random centres within `spread` of the box centre
    /// and widths in `[sigma_min, sigma_max]`.
    RandomBlobs {
        count: usize,
        seed: u64,
        sigma_min: f64,
        sigma_max: f64,
        spread: f64,
    },
    /// Density read from a `KSF1` file.
    File { path: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "by", content = "value", rename_all = "snake_case")]
pub enum Amplitude {
    /// Total mass of the density.
    Mass(f64),
    /// `‖rho₀‖_{2n/(n+2)}` as a multiple of the threshold norm of the model.
    ThresholdFraction(f64),
    /// Like `ThresholdFraction`, but with the threshold evaluated at the mass
    /// of the scaled density itself rather than the mass recorded in the model.
    ConsistentThresholdFraction(f64),
    /// Multiplier applied to the shape as sampled (peak 1 for blobs, raw values for files).
    Scale(f64),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialC {
    /// `c₀ = (1 - Δ)^{-1} rho₀`.
    #[default]
    Resolvent,
    Zero,
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub shape: InitShape,
    pub amplitude: Amplitude,
    pub c0: InitialC,
}

fn blob(grid: &GridSpec, center: &[f64], sigma: f64) -> Result<ScalarField> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::param("init.sigma", format!("need σ > 0, got {sigma}")));
    }
    ScalarField::from_fn(*grid, |x| {
        let r2: f64 = x
            .iter()
            .zip(center)
            .map(|(a, b)| grid.periodic_offset(*a, *b).powi(2))
            .sum();
        (-r2 / (2.0 * sigma * sigma)).exp()
    })
}

/// Unscaled shape of the initial density.
pub fn initial_shape(grid: &GridSpec, shape: &InitShape) -> Result<ScalarField> {
    match shape {
        InitShape::GaussianBlob { sigma, center } => {
            let c = match center {
                Some(c) if c.len() == grid.dim() => c.clone(),
                Some(c) => {
                    return Err(Error::param(
                        "init.center",
                        format!("need {} coordinates, got {}", grid.dim(), c.len()),
                    ))
                }
                None => grid.center(),
            };
            blob(grid, &c, *sigma)
        }
        InitShape::TwoBlobs { sigma, separation } => {
            let mut a = grid.center();
            let mut b = grid.center();
            a[0] -= 0.5 * separation;
            b[0] += 0.5 * separation;
            let left = blob(grid, &a, *sigma)?;
            let right = blob(grid, &b, *sigma)?;
            left.combine(1.0, &right, 1.0)
        }
        InitShape::RandomBlobs {
            count,
            seed,
            sigma_min,
            sigma_max,
            spread,
        } => {
            if *count == 0 {
                return Err(Error::param("init.count", "need at least one blob"));
            }
            if !(sigma_min > &0.0 && sigma_max >= sigma_min) {
                return Err(Error::param(
                    "init.sigma_min",
                    format!("invalid width range [{sigma_min}, {sigma_max}]"),
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut total = ScalarField::zeros(*grid);
            for _ in 0..*count {
                let mut c = grid.center();
                for x in c.iter_mut() {
                    *x += spread * (2.0 * rng.random::<f64>() - 1.0);
                }
                let sigma = sigma_min + (sigma_max - sigma_min) * rng.random::<f64>();
                let weight = 0.5 + rng.random::<f64>();
                total = total.combine(1.0, &blob(grid, &c, sigma)?, weight)?;
            }
            Ok(total)
        }
        InitShape::File { path } => {
            let f = read_ksf(path)?;
            if f.grid() != grid {
                return Err(Error::GridMismatch);
            }
            if f.min() < 0.0 {
                return Err(Error::param("init.path", "initial density has negative entries"));
            }
            Ok(f)
        }
    }
}

/// Builds `(rho₀, c₀)` on `grid`.
pub fn initial_data(
    grid: &GridSpec,
    params: &ModelParams,
    spec: &InitSpec,
) -> Result<(ScalarField, ScalarField)> {
    let shape = initial_shape(grid, &spec.shape)?;
    let factor = match spec.amplitude {
        Amplitude::Mass(m) => {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::param("mass", format!("requested mass must be > 0, got {m}")));
            }
            let base = shape.mass();
            if base <= 0.0 {
                return Err(Error::param("init", "shape has zero mass"));
            }
            m / base
        }
        Amplitude::ThresholdFraction(f) => {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::param("init.fraction", format!("need > 0, got {f}")));
            }
            let target = f * thresholds(params)?.threshold_norm;
            let base = shape.lp_norm(params.critical_lebesgue())?;
            if base <= 0.0 {
                return Err(Error::param("init", "shape has zero norm"));
            }
            target / base
        }
        Amplitude::ConsistentThresholdFraction(f) => {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::param("init.fraction", format!("need > 0, got {f}")));
            }
            let nu = shape.lp_norm(params.critical_lebesgue())?;
            let mu = shape.mass();
            if !(nu > 0.0 && mu > 0.0) {
                return Err(Error::param("init", "shape has zero norm"));
            }
            // threshold(M) = threshold(1) M^β, solved for a·ν = f·threshold(a·μ)
            let unit = ModelParams { mass: 1.0, ..*params };
            let t1 = thresholds(&unit)?.threshold_norm;
            let t2 = thresholds(&ModelParams { mass: 2.0, ..unit })?.threshold_norm;
            let beta = (t2 / t1).log2();
            (f * t1 * mu.powf(beta) / nu).powf(1.0 / (1.0 - beta))
        }
        Amplitude::Scale(s) => {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::param("init.scale", format!("need >= 0, got {s}")));
            }
            s
        }
    };
    let rho0 = shape.scaled(factor);
    let c0 = match &spec.c0 {
        InitialC::Resolvent => resolvent_solve(&rho0),
        InitialC::Zero => ScalarField::zeros(*grid),
        InitialC::File { path } => {
            let c = read_ksf(path)?;
            if c.grid() != grid {
                return Err(Error::GridMismatch);
            }
            c
        }
    };
    Ok((rho0, c0))
}
