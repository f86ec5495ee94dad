//! Free energies, classification of initial data against the global-existence
//! thresholds, and per-snapshot diagnostics including the `L^{p_k}` ladder.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{
    moser_exponent, moser_final_bound, sobolev_constant, thresholds, ModelParams,
};
use crate::dynamics::Snapshot;
use crate::field::{convolve, gradient, Mollifier, ScalarField};
use crate::{Error, Result};

fn check_m(params: &ModelParams) -> Result<()> {
    if params.m == 1.0 {
        Err(Error::param("m", "free energy needs m != 1"))
    } else {
        Ok(())
    }
}

/// `½‖∇c‖²_2 + ½‖c‖²_2`.
fn chemical_energy(c: &ScalarField) -> Result<(f64, f64)> {
    let grad_sq = gradient(c).magnitude().lp_norm(2.0)?.powi(2);
    let c_sq = c.lp_norm(2.0)?.powi(2);
    Ok((grad_sq, c_sq))
}

/// `∫ (ρ^m/(m-1) - ρc + ½|∇c|² + ½c²) dx`.
pub fn free_energy(rho: &ScalarField, c: &ScalarField, params: &ModelParams) -> Result<f64> {
    check_m(params)?;
    rho.ensure_same_grid(c)?;
    let m = params.m;
    let internal = rho.map(|r| r.max(0.0).powf(m)).mass() / (m - 1.0);
    let (grad_sq, c_sq) = chemical_energy(c)?;
    Ok(internal - rho.inner(c)? + 0.5 * (grad_sq + c_sq))
}

/// Regularized energy and its Sobolev splitting `F_eps >= F1 + F2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// Unregularized energy.
    #[serde(rename = "F")]
    pub free: f64,
    #[serde(rename = "F_eps")]
    pub regularized: f64,
    /// `‖ρ‖_m^m/(m-1) - ‖ρ‖²_{2n/(n+2)}/(2S_n)`.
    #[serde(rename = "F1")]
    pub density_part: f64,
    /// `½‖∇c‖²_2 - (S_n/2)‖c‖²_{2n/(n-2)}`.
    #[serde(rename = "F2")]
    pub chemical_part: f64,
    pub dissipation: f64,
    /// `∫ (ρ * J) c`.
    pub cross_term: f64,
}

/// Fills every field of [`EnergyReport`]. `c_rate` is the time derivative of
/// `c` used in the dissipation; `None` counts it as zero.
pub fn free_energy_regularized(
    rho: &ScalarField,
    c: &ScalarField,
    params: &ModelParams,
    epsilon: f64,
    mollifier: Option<&Mollifier>,
    c_rate: Option<&ScalarField>,
) -> Result<EnergyReport> {
    check_m(params)?;
    rho.ensure_same_grid(c)?;
    if !(epsilon >= 0.0) {
        return Err(Error::param("epsilon", format!("need ε >= 0, got {epsilon}")));
    }
    let n = params.n;
    if rho.grid().dim() != n {
        return Err(Error::param("n", "model dimension differs from the grid dimension"));
    }
    let sobolev = sobolev_constant(n)?;
    let nf = n as f64;
    let m = params.m;
    let smoothed = match mollifier {
        Some(j) => convolve(rho, j)?,
        None => rho.clone(),
    };
    let cross_term = smoothed.inner(c)?;
    let (grad_sq, c_sq) = chemical_energy(c)?;
    let quadratic = 0.5 * (grad_sq + c_sq);
    let eps_m = epsilon.powf(m);
    let internal_eps =
        rho.map(|r| (r.max(0.0) + epsilon).powf(m) - eps_m).mass() / (m - 1.0);
    let internal = rho.map(|r| r.max(0.0).powf(m)).mass() / (m - 1.0);
    let density_part =
        internal - rho.lp_norm(2.0 * nf / (nf + 2.0))?.powi(2) / (2.0 * sobolev);
    let chemical_part = 0.5 * grad_sq - 0.5 * sobolev * c.lp_norm(2.0 * nf / (nf - 2.0))?.powi(2);
    Ok(EnergyReport {
        free: internal - rho.inner(c)? + quadratic,
        regularized: internal_eps - cross_term + quadratic,
        density_part,
        chemical_part,
        dissipation: dissipation(rho, c, c_rate, params, epsilon, mollifier)?,
        cross_term,
    })
}

/// `∫ (ρ+ε)|∇(m/(m-1)(ρ+ε)^{m-1} - c*J)|² + |c_t|²`.
///
/// The first term is evaluated on cell faces with the same differences the
/// finite-volume step uses: face mobility is the mean of the two cells.
pub fn dissipation(
    rho: &ScalarField,
    c: &ScalarField,
    c_rate: Option<&ScalarField>,
    params: &ModelParams,
    epsilon: f64,
    mollifier: Option<&Mollifier>,
) -> Result<f64> {
    check_m(params)?;
    rho.ensure_same_grid(c)?;
    let grid = *rho.grid();
    let m = params.m;
    let phi = match mollifier {
        Some(j) => convolve(c, j)?,
        None => c.clone(),
    };
    let r = rho.values();
    let p = phi.values();
    let potential: Vec<f64> = r
        .iter()
        .zip(p)
        .map(|(&x, &y)| m / (m - 1.0) * (x.max(0.0) + epsilon).powf(m - 1.0) - y)
        .collect();
    let dx = grid.spacing();
    let face_sum: f64 = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            (0..grid.dim())
                .map(|axis| {
                    let j = grid.shift(i, axis, true);
                    let mobility = 0.5 * (r[i].max(0.0) + r[j].max(0.0)) + epsilon;
                    let g = (potential[j] - potential[i]) / dx;
                    mobility * g * g
                })
                .sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    let rate = match c_rate {
        Some(ct) => {
            ct.ensure_same_grid(c)?;
            ct.lp_norm(2.0)?.powi(2)
        }
        None => 0.0,
    };
    Ok(face_sum * grid.cell_volume() + rate)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Subcritical,
    SupercriticalNorm,
    Indeterminate,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Subcritical => "subcritical",
            Verdict::SupercriticalNorm => "supercritical_norm",
            Verdict::Indeterminate => "indeterminate",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionVerdict {
    pub norm_2n_over_np2: f64,
    pub threshold_norm: f64,
    #[serde(rename = "F0")]
    pub f0: f64,
    #[serde(rename = "F_star")]
    pub f_star: f64,
    pub verdict: Verdict,
}

/// Compares `‖ρ₀‖_{2n/(n+2)}` with the threshold norm and `F(ρ₀, c₀)` with
/// `F*`, using the mass recorded in `params`.
pub fn classify(rho0: &ScalarField, c0: &ScalarField, params: &ModelParams) -> Result<CriterionVerdict> {
    let table = thresholds(params)?;
    let norm = rho0.lp_norm(params.critical_lebesgue())?;
    let f0 = free_energy(rho0, c0, params)?;
    let below_energy = f0 < table.f_star;
    let verdict = if below_energy && norm < table.threshold_norm {
        Verdict::Subcritical
    } else if below_energy && norm > table.threshold_norm {
        Verdict::SupercriticalNorm
    } else {
        Verdict::Indeterminate
    };
    Ok(CriterionVerdict {
        norm_2n_over_np2: norm,
        threshold_norm: table.threshold_norm,
        f0,
        f_star: table.f_star,
        verdict,
    })
}

/// Ladder depth used unless configured otherwise.
pub const DEFAULT_K_MAX: u32 = 4;

/// Peaks spread over fewer cells than this make high `L^p` norms unreliable.
pub const MIN_PEAK_CELLS: usize = 4;

/// Quantities tracked at one snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub mass: f64,
    pub energy: EnergyReport,
    /// `‖ρ‖_{2n/(n+2)}`.
    pub norm_crit: f64,
    pub norm_m: f64,
    pub norm_inf: f64,
    /// `‖ρ‖_{p_k}` for `k = 1..=K`.
    pub moser_norms: Vec<f64>,
    /// `‖ρ‖_{p_0}`.
    pub moser_base: f64,
    pub clipped_mass: f64,
    pub dt: f64,
    /// The first snapshot has no `c_t` estimate.
    pub warm_up: bool,
    /// Cells with `ρ >= max ρ / 2`.
    pub peak_cells: usize,
}

impl DiagnosticsRow {
    /// `true` when `K > 4` and the peak is too narrow for reliable ladder norms.
    pub fn ladder_under_resolved(&self) -> bool {
        self.moser_norms.len() > DEFAULT_K_MAX as usize && self.peak_cells < MIN_PEAK_CELLS
    }

    pub fn csv_record(&self) -> String {
        let e = &self.energy;
        let mut fields = vec![
            self.t,
            self.mass,
            e.free,
            e.regularized,
            e.density_part,
            e.chemical_part,
            e.dissipation,
            self.norm_crit,
            self.norm_m,
            self.norm_inf,
        ];
        fields.extend_from_slice(&self.moser_norms);
        fields.push(self.clipped_mass);
        fields.push(self.dt);
        fields.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    }
}

/// `t,mass,F,F_eps,F1,F2,dissipation,norm_crit,norm_m,norm_inf,moser_p1..moser_pK,clipped_mass,dt`.
pub fn csv_header(k_max: u32) -> String {
    let mut cols: Vec<String> = [
        "t", "mass", "F", "F_eps", "F1", "F2", "dissipation", "norm_crit", "norm_m", "norm_inf",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend((1..=k_max).map(|k| format!("moser_p{k}")));
    cols.push("clipped_mass".into());
    cols.push("dt".into());
    cols.join(",")
}

/// Regularization settings the energies are evaluated with.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Regularization<'a> {
    pub epsilon: f64,
    pub mollifier: Option<&'a Mollifier>,
}

pub fn diagnose(
    snapshot: &Snapshot,
    params: &ModelParams,
    reg: Regularization<'_>,
    k_max: u32,
) -> Result<DiagnosticsRow> {
    let rho = &snapshot.state.rho;
    let energy = free_energy_regularized(
        rho,
        &snapshot.state.c,
        params,
        reg.epsilon,
        reg.mollifier,
        snapshot.c_rate.as_ref(),
    )?;
    let moser_norms = (1..=k_max)
        .map(|k| rho.lp_norm(moser_exponent(k as i64, params.n)? as f64))
        .collect::<Result<Vec<_>>>()?;
    let peak = rho.max();
    Ok(DiagnosticsRow {
        t: snapshot.state.t,
        mass: rho.mass(),
        energy,
        norm_crit: rho.lp_norm(params.critical_lebesgue())?,
        norm_m: rho.lp_norm(params.m.max(1.0))?,
        norm_inf: rho.lp_norm(f64::INFINITY)?,
        moser_norms,
        moser_base: rho.lp_norm(moser_exponent(0, params.n)? as f64)?,
        clipped_mass: snapshot.clipped_mass,
        dt: snapshot.dt,
        warm_up: snapshot.c_rate.is_none(),
        peak_cells: rho.values().iter().filter(|&&v| v >= 0.5 * peak).count(),
    })
}

/// One row per snapshot, evaluated in parallel.
pub fn track(
    snapshots: &[Snapshot],
    params: &ModelParams,
    reg: Regularization<'_>,
    k_max: u32,
) -> Result<Vec<DiagnosticsRow>> {
    snapshots
        .par_iter()
        .map(|s| diagnose(s, params, reg, k_max))
        .collect()
}

/// `(F_eps(t_{j+1}) - F_eps(t_j))/(t_{j+1} - t_j) + D(t_{j+1})` between
/// consecutive rows; zero would be an exact discrete energy balance.
pub fn energy_balance_residuals(rows: &[DiagnosticsRow]) -> Vec<f64> {
    rows.windows(2)
        .map(|w| {
            let dt = w[1].t - w[0].t;
            (w[1].energy.regularized - w[0].energy.regularized) / dt + w[1].energy.dissipation
        })
        .collect()
}

/// Outcome of fitting the ladder constant to a trajectory and checking the
/// resulting uniform bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoserCheck {
    /// Smallest `C` for which `y_k <= 2a_k max{sup y_{k-1}², K₀^{p_k}}` holds on every rung.
    pub fitted_c: f64,
    /// `C` making the smallest rung coefficient `a_1` equal to one.
    pub c_floor: f64,
    /// `max(fitted_c, c_floor)`, the value fed to the closed bound.
    pub c: f64,
    /// `K₀ = max(1, M₀, ‖ρ₀‖_∞)`.
    pub k0: f64,
    /// `sup_t ‖ρ‖_{p_0}`.
    pub sup_base_norm: f64,
    pub bound: f64,
    /// `max_{t, k} ‖ρ‖_{p_k}`.
    pub max_norm: f64,
}

impl MoserCheck {
    pub fn passes(&self) -> bool {
        self.max_norm.is_finite() && self.max_norm <= self.bound
    }
}

/// Fits the ladder constant on `rows` and evaluates the uniform bound.
///
/// With `y_k = sup_t ‖ρ‖_{p_k}^{p_k}` the fit is
/// `C = max_k y_k / (6 (4n)^{2n} 4^{kn} max{y_{k-1}², K₀^{p_k}})`, done in
/// logarithms. The closed bound is only derived for rung coefficients of at
/// least one, hence the floor.
pub fn moser_check(rows: &[DiagnosticsRow], params: &ModelParams, rho0_sup: f64) -> Result<MoserCheck> {
    let first = rows.first().ok_or_else(|| Error::param("rows", "need at least one row"))?;
    let k_max = first.moser_norms.len();
    if k_max == 0 {
        return Err(Error::param("rows", "rows carry no ladder norms"));
    }
    let n = params.n;
    let nf = n as f64;
    let k0 = 1f64.max(params.mass).max(rho0_sup);
    let sup_norm = |k: usize| -> f64 {
        rows.iter()
            .map(|r| if k == 0 { r.moser_base } else { r.moser_norms[k - 1] })
            .fold(0.0, f64::max)
    };
    let log_base = (6.0f64).ln() + 2.0 * nf * (4.0 * nf).ln();
    let mut log_c = f64::NEG_INFINITY;
    for k in 1..=k_max {
        let pk = moser_exponent(k as i64, n)? as f64;
        let pk_prev = moser_exponent(k as i64 - 1, n)? as f64;
        let log_yk = pk * sup_norm(k).ln();
        let log_prev_sq = 2.0 * pk_prev * sup_norm(k - 1).ln();
        let log_floor = pk * k0.ln();
        let log_den = log_base + k as f64 * nf * 4f64.ln() + log_prev_sq.max(log_floor);
        log_c = log_c.max(log_yk - log_den);
    }
    let fitted_c = log_c.exp();
    let c_floor = 1.0 / (3.0 * (4.0 * nf).powf(2.0 * nf) * 4f64.powf(nf));
    let c = fitted_c.max(c_floor);
    let sup_base_norm = sup_norm(0);
    let bound = moser_final_bound(c, n, sup_base_norm, k0)?;
    let max_norm = (1..=k_max).map(sup_norm).fold(0.0, f64::max);
    Ok(MoserCheck {
        fitted_c,
        c_floor,
        c,
        k0,
        sup_base_norm,
        bound,
        max_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::barrier;
    use crate::field::{resolvent_solve, GridSpec, Spectrum};

    fn params() -> ModelParams {
        ModelParams::new(3, 1.25, 1.0).unwrap()
    }

    fn blob(grid: GridSpec, sigma: f64, amp: f64) -> ScalarField {
        let c = grid.center();
        ScalarField::from_fn(grid, |x| {
            let r2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum();
            amp * (-r2 / (2.0 * sigma * sigma)).exp()
        })
        .unwrap()
    }

    #[test]
    fn zero_state_has_zero_energy() {
        let g = GridSpec::new(3, 8, 4.0).unwrap();
        let z = ScalarField::zeros(g);
        assert_eq!(free_energy(&z, &z, &params()).unwrap(), 0.0);
        let c = blob(g, 0.8, 2.0);
        assert!(free_energy(&z, &c, &params()).unwrap() > 0.0);
        let bad = ModelParams::new(3, 1.0, 1.0).unwrap();
        assert!(free_energy(&z, &z, &bad).is_err());
    }

    #[test]
    fn energy_matches_fourier_side_evaluation() {
        let g = GridSpec::new(3, 32, 16.0).unwrap();
        let rho = blob(g, 1.0, 3.0);
        let c = resolvent_solve(&rho);
        let p = params();
        let direct = free_energy(&rho, &c, &p).unwrap();

        let rho_hat = Spectrum::forward(&rho);
        let c_hat = Spectrum::forward(&c);
        let internal_hat = Spectrum::forward(&rho.map(|r| r.powf(p.m)));
        let dv = g.cell_volume();
        let internal = internal_hat.coefficients()[0].re * dv / (p.m - 1.0);
        let cross: f64 = rho_hat
            .coefficients()
            .iter()
            .zip(c_hat.coefficients())
            .map(|(a, b)| (a * b.conj()).re)
            .sum::<f64>()
            * dv
            / g.len() as f64;
        let quad = 0.5
            * c_hat.weighted_squared_l2(|flat| {
                1.0 + (0..3)
                    .map(|ax| c_hat.derivative_wavenumber(flat, ax).powi(2))
                    .sum::<f64>()
            });
        let fourier = internal - cross + quad;
        assert!((direct - fourier).abs() < 1e-8 * fourier.abs(), "{direct} {fourier}");
    }

    #[test]
    fn regularized_energy_reduces_without_regularization() {
        let g = GridSpec::new(3, 16, 10.0).unwrap();
        let rho = blob(g, 1.0, 2.0);
        let c = resolvent_solve(&rho);
        let rep = free_energy_regularized(&rho, &c, &params(), 0.0, None, None).unwrap();
        assert!((rep.free - rep.regularized).abs() < 1e-12 * rep.free.abs());
        assert!(rep.regularized >= rep.density_part + rep.chemical_part);
        assert!(rep.chemical_part >= 0.0);
        assert!(rep.dissipation >= 0.0);
    }

    #[test]
    fn density_part_dominates_barrier() {
        // F1 >= f(‖ρ‖^{2n(m-1)/(n-2)}) when the barrier uses the actual mass.
        let g = GridSpec::new(3, 24, 12.0).unwrap();
        for (sigma, amp) in [(0.8, 1.0), (1.2, 5.0), (1.0, 40.0)] {
            let rho = blob(g, sigma, amp);
            let p = ModelParams::new(3, 1.25, rho.mass()).unwrap();
            let rep = free_energy_regularized(&rho, &ScalarField::zeros(g), &p, 1e-6, None, None)
                .unwrap();
            let s = p.norm_to_barrier_arg(rho.lp_norm(1.2).unwrap());
            let f = barrier(s, &p).unwrap();
            assert!(rep.density_part >= f - 1e-9 * (1.0 + f.abs()), "{} < {f}", rep.density_part);
        }
    }

    #[test]
    fn uniform_steady_state_has_no_dissipation() {
        let g = GridSpec::new(3, 8, 4.0).unwrap();
        let rho = ScalarField::constant(g, 0.5);
        let d = dissipation(&rho, &rho, Some(&ScalarField::zeros(g)), &params(), 0.0, None).unwrap();
        assert!(d.abs() < 1e-20);
    }

    #[test]
    fn classify_cases() {
        let g = GridSpec::new(3, 16, 10.0).unwrap();
        let p = params();
        let z = ScalarField::zeros(g);
        let v = classify(&z, &z, &p).unwrap();
        assert_eq!(v.verdict, Verdict::Subcritical);
        assert_eq!(v.norm_2n_over_np2, 0.0);

        let shape = blob(g, 1.0, 1.0);
        let unit = shape.lp_norm(1.2).unwrap();
        let t = thresholds(&p).unwrap().threshold_norm;
        let low = shape.scaled(0.5 * t / unit);
        let v = classify(&low, &z, &p).unwrap();
        assert_eq!(v.verdict, Verdict::Subcritical, "{v:?}");
        assert!((v.norm_2n_over_np2 - 0.5 * t).abs() < 1e-10 * t);
        let high = shape.scaled(2.0 * t / unit);
        let v = classify(&high, &resolvent_solve(&high), &p).unwrap();
        assert_eq!(v.verdict, Verdict::SupercriticalNorm, "{v:?}");
    }

    #[test]
    fn classify_json_has_documented_keys() {
        let g = GridSpec::new(3, 8, 4.0).unwrap();
        let z = ScalarField::zeros(g);
        let v = classify(&z, &z, &params()).unwrap();
        let json = serde_json::to_value(v).unwrap();
        let mut keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["F0", "F_star", "norm_2n_over_np2", "threshold_norm", "verdict"]);
        assert_eq!(json["verdict"], "subcritical");
    }

    #[test]
    fn csv_header_layout() {
        assert_eq!(
            csv_header(2),
            "t,mass,F,F_eps,F1,F2,dissipation,norm_crit,norm_m,norm_inf,moser_p1,moser_p2,clipped_mass,dt"
        );
    }

    #[test]
    fn moser_check_on_static_rows() {
        let g = GridSpec::new(3, 16, 10.0).unwrap();
        let rho = blob(g, 1.0, 3.0);
        let p = ModelParams::new(3, 1.25, rho.mass()).unwrap();
        let snap = Snapshot {
            state: crate::dynamics::SimState::new(rho.clone(), resolvent_solve(&rho)).unwrap(),
            dt: 0.0,
            c_rate: None,
            clipped_mass: 0.0,
        };
        let reg = Regularization { epsilon: 0.0, mollifier: None };
        let rows = track(&[snap], &p, reg, 4).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].warm_up);
        // ladder norms sit between ‖ρ‖_{p_0} and ‖ρ‖_∞ by interpolation
        let r = &rows[0];
        for w in r.moser_norms.iter() {
            assert!(*w <= r.norm_inf.max(r.moser_base) * (1.0 + 1e-12));
        }
        let check = moser_check(&rows, &p, rho.max()).unwrap();
        assert!(check.passes(), "{check:?}");
        assert!(check.c >= check.c_floor);
    }
}
