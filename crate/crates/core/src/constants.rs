//! Closed-form constants, thresholds and exponent algebra.
//!
//! Every quantity here is a pure function of the model parameters. Lebesgue
//! exponents are plain `f64`; `f64::INFINITY` stands for `p = ∞`, with the
//! conventions `1/∞ = 0` and `C_∞ = 1` for the Young constant.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Euler Gamma function.
pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

/// Dimension, diffusion exponent and total mass `M₀`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub m: f64,
    pub mass: f64,
}

impl ModelParams {
    pub fn new(n: usize, m: f64, mass: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Dimension { n, min: 1 });
        }
        if !m.is_finite() || m <= 0.0 {
            return Err(Error::param("m", format!("must be finite and positive, got {m}")));
        }
        if !mass.is_finite() || mass < 0.0 {
            return Err(Error::param("mass", format!("must be finite and >= 0, got {mass}")));
        }
        Ok(Self { n, m, mass })
    }

    /// Checks `n >= 3` and `2n/(n+2) < m < 2 - 2/n`.
    pub fn check_window(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::Dimension { n: self.n, min: 3 });
        }
        let (lower, upper) = critical_exponents(self.n)?;
        if !(self.m > lower && self.m < upper) {
            return Err(Error::ExponentWindow {
                n: self.n,
                m: self.m,
                lower,
                upper,
            });
        }
        Ok(())
    }

    fn check_positive_mass(&self) -> Result<()> {
        if self.mass > 0.0 {
            Ok(())
        } else {
            Err(Error::param("mass", "must be > 0 for threshold evaluation"))
        }
    }

    /// The Lebesgue exponent `2n/(n+2)` of the global-existence criterion.
    pub fn critical_lebesgue(&self) -> f64 {
        let n = self.n as f64;
        2.0 * n / (n + 2.0)
    }

    /// `(2n - m(n+2)) / (n-2)`, the power of `M₀` in the barrier slope.
    pub fn mass_power(&self) -> f64 {
        let n = self.n as f64;
        (2.0 * n - self.m * (n + 2.0)) / (n - 2.0)
    }

    /// `(n-2) / (n(m-1))`: `‖ρ‖²_{2n/(n+2)} = s^γ` for `s = ‖ρ‖^{2n(m-1)/(n-2)}`.
    pub fn barrier_power(&self) -> f64 {
        let n = self.n as f64;
        (n - 2.0) / (n * (self.m - 1.0))
    }

    /// Maps a norm value `‖ρ‖_{2n/(n+2)}` to the barrier argument `s`.
    pub fn norm_to_barrier_arg(&self, norm: f64) -> f64 {
        let n = self.n as f64;
        norm.powf(2.0 * n * (self.m - 1.0) / (n - 2.0))
    }
}

/// `(m_c, m*) = (2n/(n+2), 2 - 2/n)`.
pub fn critical_exponents(n: usize) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::Dimension { n, min: 1 });
    }
    let nf = n as f64;
    Ok((2.0 * nf / (nf + 2.0), 2.0 - 2.0 / nf))
}

/// Best constant `S_n` of `S_n ‖u‖²_{2n/(n-2)} <= ‖∇u‖²_2`.
pub fn sobolev_constant(n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::Dimension { n, min: 3 });
    }
    let nf = n as f64;
    Ok(nf * (nf - 2.0) / 4.0
        * 2f64.powf(2.0 / nf)
        * PI.powf(1.0 + 1.0 / nf)
        * gamma((nf + 1.0) / 2.0).powf(-2.0 / nf))
}

/// Best constant of the Hardy-Littlewood-Sobolev inequality with kernel `|x-y|^{2-n}`.
pub fn hls_constant(n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::Dimension { n, min: 3 });
    }
    let nf = n as f64;
    Ok(PI.powf((nf - 2.0) / 2.0) / gamma(nf / 2.0 + 1.0)
        * (gamma(nf / 2.0) / gamma(nf)).powf(-2.0 / nf))
}

/// Surface area of the unit sphere `S^{n-1} ⊂ R^n`.
pub fn sphere_area(n: usize) -> f64 {
    let nf = n as f64;
    2.0 * PI.powf(nf / 2.0) / gamma(nf / 2.0)
}

/// Sharp Young-inequality factor `C_q = q^{1/q-1/2} (q-1)^{1/2-1/(2q)}`,
/// extended by continuity to `C_1 = C_∞ = 1`.
pub fn young_constant(q: f64) -> Result<f64> {
    if q.is_nan() || q < 1.0 {
        return Err(Error::param("q", format!("Young constant needs q >= 1, got {q}")));
    }
    if q == 1.0 || q.is_infinite() {
        return Ok(1.0);
    }
    Ok(q.powf(1.0 / q - 0.5) * (q - 1.0).powf(0.5 - 0.5 / q))
}

fn reciprocal(p: f64) -> f64 {
    if p.is_infinite() {
        0.0
    } else {
        1.0 / p
    }
}

/// Constants of the heat-semigroup smoothing estimates
///
/// ```text
/// ‖e^{tΔ} f‖_p   <= A t^{-n/2 (1/q - 1/p)}       ‖f‖_q
/// ‖∇e^{tΔ} f‖_p  <= B t^{-1/2 - n/2 (1/q - 1/p)} ‖f‖_q
/// ```
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatKernelConstants {
    /// `A_{p,q,n}`.
    pub value: f64,
    /// `B_{p,q,n}`.
    pub gradient: f64,
    /// Young exponent with `1/r = 1 + 1/p - 1/q`.
    pub r: f64,
}

/// Evaluates `A_{p,q,n}`, `B_{p,q,n}` and `r`.
///
/// The angular factor is the unit-sphere area `|S^{n-1}|`, which is what the
/// polar-coordinate evaluation of `‖G(·,t)‖_r` and `‖∇G(·,t)‖_r` produces.
pub fn semigroup_constants(p: f64, q: f64, n: usize) -> Result<HeatKernelConstants> {
    if n == 0 {
        return Err(Error::Dimension { n, min: 1 });
    }
    if q.is_nan() || p.is_nan() || q < 1.0 {
        return Err(Error::param("q", format!("need q >= 1, got {q}")));
    }
    if p < q {
        return Err(Error::param("p", format!("need q <= p, got p = {p} < q = {q}")));
    }
    let inv_r = 1.0 + reciprocal(p) - reciprocal(q);
    if inv_r > 1.0 || inv_r <= 0.0 {
        return Err(Error::param("r", format!("1/r = {inv_r} gives r < 1")));
    }
    let r = 1.0 / inv_r;
    let nf = n as f64;
    let prefactor = young_constant(q)? * young_constant(r)? / young_constant(p)?;
    let angular = 2f64.powf(nf - 1.0) * sphere_area(n);
    let heat_norm = (4.0 * PI).powf(nf / 2.0);
    let value = prefactor * (angular * gamma(nf / 2.0)).powf(inv_r)
        / (heat_norm * r.powf(nf * inv_r / 2.0));
    let gradient = prefactor * (angular * gamma(r / 2.0 + nf / 2.0)).powf(inv_r)
        / (heat_norm * r.powf(0.5 + nf * inv_r / 2.0));
    Ok(HeatKernelConstants { value, gradient, r })
}

/// Time exponent of the value estimate, `n/2 (1/q - 1/p)`.
pub fn smoothing_time_exponent(p: f64, q: f64, n: usize) -> f64 {
    n as f64 / 2.0 * (reciprocal(q) - reciprocal(p))
}

/// Concave barrier `f(s) = M₀^{(2n-m(n+2))/(n-2)} s/(m-1) - s^{(n-2)/(n(m-1))}/(2 S_n)`.
pub fn barrier(s: f64, params: &ModelParams) -> Result<f64> {
    params.check_window()?;
    params.check_positive_mass()?;
    if s.is_nan() || s < 0.0 {
        return Err(Error::param("s", format!("barrier needs s >= 0, got {s}")));
    }
    Ok(barrier_unchecked(s, params, sobolev_constant(params.n)?))
}

fn barrier_unchecked(s: f64, params: &ModelParams, sobolev: f64) -> f64 {
    params.mass.powf(params.mass_power()) * s / (params.m - 1.0)
        - s.powf(params.barrier_power()) / (2.0 * sobolev)
}

/// Every closed-form constant attached to `(n, m, M₀)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsTable {
    #[serde(rename = "sobolev_S_n")]
    pub sobolev: f64,
    #[serde(rename = "hls_C_n")]
    pub hls: f64,
    #[serde(rename = "m_critical")]
    pub m_critical: f64,
    #[serde(rename = "m_fujita")]
    pub m_fujita: f64,
    pub s_star: f64,
    #[serde(rename = "F_star")]
    pub f_star: f64,
    pub threshold_norm: f64,
}

/// Maximiser `s*` of the barrier, the energy level `F* = f(s*)` and the norm
/// threshold `(s*)^{(n-2)/(2n(m-1))}`.
pub fn thresholds(params: &ModelParams) -> Result<ConstantsTable> {
    params.check_window()?;
    params.check_positive_mass()?;
    let n = params.n as f64;
    let m = params.m;
    let sobolev = sobolev_constant(params.n)?;
    let (m_critical, m_fujita) = critical_exponents(params.n)?;
    let base = 2.0 * sobolev * n / (n - 2.0) * params.mass.powf(params.mass_power());
    let s_star = base.powf(n * (m - 1.0) / (2.0 * n - 2.0 - m * n));
    let f_star = barrier_unchecked(s_star, params, sobolev);
    let threshold_norm = s_star.powf((n - 2.0) / (2.0 * n * (m - 1.0)));
    for (name, v) in [("s*", s_star), ("F*", f_star), ("threshold norm", threshold_norm)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::param(
                "m",
                format!("{name} = {v} is not representable; m = {m} is too close to the window edge"),
            ));
        }
    }
    Ok(ConstantsTable {
        sobolev,
        hls: hls_constant(params.n)?,
        m_critical,
        m_fujita,
        s_star,
        f_star,
        threshold_norm,
    })
}

/// Which mass exponent to use in the closed form of `F*`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CeilingMassExponent {
    /// `(2n - mn - 2n) / (2n - 2 - mn)`, the form found in the literature.
    Literal,
    /// `(2n - mn - 2m) / (2n - 2 - mn)`, which is what `f(s*)` reduces to.
    Consistent,
}

/// `F* = (2n-2-mn)/((m-1)(n-2)) M₀^e (2n S_n/(n-2))^{(nm-n)/(2n-2-mn)}`.
pub fn energy_ceiling_closed_form(params: &ModelParams, form: CeilingMassExponent) -> Result<f64> {
    params.check_window()?;
    params.check_positive_mass()?;
    let n = params.n as f64;
    let m = params.m;
    let gap = 2.0 * n - 2.0 - m * n;
    let mass_exp = match form {
        CeilingMassExponent::Literal => (2.0 * n - m * n - 2.0 * n) / gap,
        CeilingMassExponent::Consistent => (2.0 * n - m * n - 2.0 * m) / gap,
    };
    let sobolev = sobolev_constant(params.n)?;
    Ok(gap / ((m - 1.0) * (n - 2.0))
        * params.mass.powf(mass_exp)
        * (2.0 * n * sobolev / (n - 2.0)).powf((n * m - n) / gap))
}

/// Interpolation and Young exponents of the uniform `L^p` estimate at level `p`
/// with the intermediate exponent `q ∈ (n, p)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExponentSet {
    /// Interpolation weight for `‖ρ‖_{p-1-m}` between `L^{2n/(n+2)}` and the gradient term.
    pub theta_lower: f64,
    /// Same for `‖ρ‖_{p+1-m}`.
    pub theta_upper: f64,
    /// Weight for `‖ρ‖_q` between `L^{2n/(n+2)}` and `L^p`.
    pub theta_intermediate: f64,
    /// Weight for `‖ρ‖_p` itself.
    pub theta_top: f64,
    /// Weight for `‖ρ‖_{p+1}`.
    pub theta_next: f64,
    /// Conjugate pair splitting the `theta_lower` term.
    pub young_lower: (f64, f64),
    /// Conjugate pair splitting the `theta_upper` term.
    pub young_upper: (f64, f64),
    /// `2 θ (p+1) / (m+p-1)` with `θ = theta_next`; stays below 2.
    pub gain: f64,
    /// `2 ℓ₁ θ_q`, the power of `‖ρ‖_p` fed back by the drift bound.
    pub growth_power: f64,
    /// Whether `growth_power < p`.
    pub growth_below_p: bool,
}

struct Lebesgue {
    /// `(n+2)/(2n)`, reciprocal of the critical exponent.
    crit: f64,
    /// `(n-2)/(n(m+p-1))`, reciprocal exponent reached through Sobolev.
    sob: f64,
}

impl Lebesgue {
    fn new(p: f64, params: &ModelParams) -> Self {
        let n = params.n as f64;
        Self {
            crit: (n + 2.0) / (2.0 * n),
            sob: (n - 2.0) / (n * (params.m + p - 1.0)),
        }
    }

    fn weight(&self, target: f64) -> f64 {
        (self.crit - 1.0 / target) / (self.crit - self.sob)
    }
}

/// Weight for `‖ρ‖_{p-1-m}`; defined for `p >= 1 + m + 2n/(n+2)` (zero at the boundary).
pub fn theta_lower(p: f64, params: &ModelParams) -> Result<f64> {
    let bound = 1.0 + params.m + params.critical_lebesgue();
    if !(p >= bound) {
        return Err(Error::InterpolationWindow {
            quantity: "theta_lower",
            reason: format!("need p >= 1 + m + 2n/(n+2) = {bound}, got {p}"),
        });
    }
    Ok(Lebesgue::new(p, params).weight(p - 1.0 - params.m))
}

/// Weight for `‖ρ‖_{p+1-m}`; defined for `p >= m + (n-2)/(n+2)`.
pub fn theta_upper(p: f64, params: &ModelParams) -> Result<f64> {
    let n = params.n as f64;
    let bound = params.m + (n - 2.0) / (n + 2.0);
    if !(p >= bound) {
        return Err(Error::InterpolationWindow {
            quantity: "theta_upper",
            reason: format!("need p >= m + (n-2)/(n+2) = {bound}, got {p}"),
        });
    }
    Ok(Lebesgue::new(p, params).weight(p + 1.0 - params.m))
}

/// Upper end `2n / (n - (m-1)(n+2))` of the window for the intermediate exponent `q`.
pub fn intermediate_exponent_ceiling(params: &ModelParams) -> f64 {
    let n = params.n as f64;
    2.0 * n / (n - (params.m - 1.0) * (n + 2.0))
}

/// Midpoint of `(n, 2n/(n-(m-1)(n+2)))`, inside which `growth_power < p` for large `p`.
pub fn default_intermediate_exponent(params: &ModelParams) -> f64 {
    0.5 * (params.n as f64 + intermediate_exponent_ceiling(params))
}

/// Evaluates the full [`ExponentSet`] at `(p, q)`.
pub fn interpolation_exponents(p: f64, params: &ModelParams, q: f64) -> Result<ExponentSet> {
    params.check_window()?;
    let n = params.n as f64;
    let m = params.m;
    let strict = |quantity: &'static str, ok: bool, reason: String| {
        if ok {
            Ok(())
        } else {
            Err(Error::InterpolationWindow { quantity, reason })
        }
    };
    let lower_bound = 1.0 + m + params.critical_lebesgue();
    strict(
        "theta_lower",
        p > lower_bound,
        format!("need p > 1 + m + 2n/(n+2) = {lower_bound}, got {p}"),
    )?;
    let upper_bound = m + (n - 2.0) / (n + 2.0);
    strict(
        "theta_upper",
        p > upper_bound,
        format!("need p > m + (n-2)/(n+2) = {upper_bound}, got {p}"),
    )?;
    strict(
        "theta_intermediate",
        n < q && q < p,
        format!("need n < q < p, got n = {n}, q = {q}, p = {p}"),
    )?;
    strict(
        "theta_top",
        p > params.critical_lebesgue(),
        format!("need p > 2n/(n+2), got {p}"),
    )?;

    let lebesgue = Lebesgue::new(p, params);
    let theta_lower = lebesgue.weight(p - 1.0 - m);
    let theta_upper = lebesgue.weight(p + 1.0 - m);
    let theta_top = lebesgue.weight(p);
    let theta_next = lebesgue.weight(p + 1.0);
    let theta_intermediate = (lebesgue.crit - 1.0 / q) / (lebesgue.crit - 1.0 / p);

    let total = m + p - 1.0;
    let q2 = total / (theta_lower * (p - 1.0 - m));
    let q1 = q2 / (q2 - 1.0);
    let ell1 = total / (total - theta_upper * (p + 1.0 - m));
    let ell2 = total / (theta_upper * (p + 1.0 - m));
    let gain = 2.0 * theta_next * (p + 1.0) / total;
    let growth_power = 2.0 * ell1 * theta_intermediate;

    Ok(ExponentSet {
        theta_lower,
        theta_upper,
        theta_intermediate,
        theta_top,
        theta_next,
        young_lower: (q1, q2),
        young_upper: (ell1, ell2),
        gain,
        growth_power,
        growth_below_p: growth_power < p,
    })
}

/// Scans `p` over `samples` log-spaced points of `[p_min, p_max]` and returns the
/// smallest sampled `p` from which `growth_power < p` holds at every later sample.
///
/// Points where the exponent windows fail count as violations. `None` means the
/// last sample already fails.
pub fn growth_threshold_scan(
    params: &ModelParams,
    q: f64,
    p_min: f64,
    p_max: f64,
    samples: usize,
) -> Result<Option<f64>> {
    if !(p_min > 0.0 && p_max > p_min) || samples < 2 {
        return Err(Error::param("p range", "need 0 < p_min < p_max and >= 2 samples"));
    }
    let ratio = (p_max / p_min).ln() / (samples - 1) as f64;
    let mut first_good = None;
    for i in 0..samples {
        let p = p_min * (ratio * i as f64).exp();
        let ok = interpolation_exponents(p, params, q)
            .map(|e| e.growth_below_p)
            .unwrap_or(false);
        match (ok, first_good) {
            (true, None) => first_good = Some(p),
            (false, _) => first_good = None,
            _ => {}
        }
    }
    Ok(first_good)
}

/// Ladder exponent `p_k = 2^k + 4n + 4`.
pub fn moser_exponent(k: i64, n: usize) -> Result<u64> {
    if k < 0 {
        return Err(Error::param("k", format!("ladder index must be >= 0, got {k}")));
    }
    if k > 62 {
        return Err(Error::param("k", format!("ladder index {k} overflows u64")));
    }
    if n == 0 {
        return Err(Error::Dimension { n, min: 1 });
    }
    Ok((1u64 << k) + 4 * n as u64 + 4)
}

/// Exponents of one rung `p_{k-1} → p_k` of the ladder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MoserStepExponents {
    pub p_prev: f64,
    pub p: f64,
    /// Weight of `‖ρ‖_{p_k+1-m}` between `L^{p_{k-1}}` and the gradient term.
    pub theta_drift: f64,
    /// Conjugate exponent of the drift splitting; bounded by `n`.
    pub drift_conjugate: f64,
    /// Weight of `‖ρ‖_{p_k}` between `L^{p_{k-1}}` and the gradient term.
    pub theta_norm: f64,
    /// Power of `‖ρ‖^{p_{k-1}}_{p_{k-1}}` from the norm splitting; at most 2.
    pub norm_power: f64,
    /// Power of `‖ρ‖^{p_{k-1}}_{p_{k-1}}` from the drift splitting; at most 2.
    pub drift_power: f64,
}

pub fn moser_step_exponents(k: i64, params: &ModelParams) -> Result<MoserStepExponents> {
    if k < 1 {
        return Err(Error::param("k", format!("rung index must be >= 1, got {k}")));
    }
    let n = params.n as f64;
    let m = params.m;
    let p = moser_exponent(k, params.n)? as f64;
    let p_prev = moser_exponent(k - 1, params.n)? as f64;
    let total = m + p - 1.0;
    let sob = (n - 2.0) / (n * total);
    let theta_drift = (1.0 / p_prev - 1.0 / (p + 1.0 - m)) / (1.0 / p_prev - sob);
    let drift_conjugate = total / (total - theta_drift * (p - m + 1.0));
    let theta_norm = (1.0 / p_prev - 1.0 / p) / (1.0 / p_prev - sob);
    let ell2 = total / (total - theta_norm * p);
    Ok(MoserStepExponents {
        p_prev,
        p,
        theta_drift,
        drift_conjugate,
        theta_norm,
        norm_power: p * (1.0 - theta_norm) * ell2 / p_prev,
        drift_power: (p - m + 1.0) * drift_conjugate * (1.0 - theta_drift) / p_prev,
    })
}

/// Rung coefficient `a_k = 3 C (4n)^{2n} 4^{kn}`.
pub fn moser_rung_coefficient(c: f64, n: usize, k: u32) -> f64 {
    let nf = n as f64;
    3.0 * c * (4.0 * nf).powf(2.0 * nf) * 4f64.powf(k as f64 * nf)
}

/// `k`-independent bound `6C(4n)^{2n} 4^{2n} max{sup y₀, K}` on every `‖ρ‖_{p_k}`.
pub fn moser_final_bound(c: f64, n: usize, sup_y0: f64, k_floor: f64) -> Result<f64> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::param("C", format!("need C > 0, got {c}")));
    }
    if !(sup_y0 >= 0.0) {
        return Err(Error::param("sup_y0", format!("need sup_y0 >= 0, got {sup_y0}")));
    }
    if !(k_floor >= 1.0) {
        return Err(Error::param("K", format!("need K >= 1, got {k_floor}")));
    }
    if n == 0 {
        return Err(Error::Dimension { n, min: 1 });
    }
    let nf = n as f64;
    Ok(6.0 * c * (4.0 * nf).powf(2.0 * nf) * 4f64.powf(2.0 * nf) * sup_y0.max(k_floor))
}
