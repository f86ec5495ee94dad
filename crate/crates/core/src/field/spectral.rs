use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{GridSpec, ScalarField, VectorField};

/// How derivatives are discretized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeScheme {
    /// Trigonometric interpolation; the Nyquist mode of first derivatives is dropped.
    #[default]
    Spectral,
    /// Second-order centered differences.
    CentralDifference,
}

fn plan(len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    let planner = PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()));
    let mut guard = planner.lock().unwrap_or_else(|e| e.into_inner());
    if forward {
        guard.plan_fft_forward(len)
    } else {
        guard.plan_fft_inverse(len)
    }
}

const LINES_PER_TASK: usize = 64;

/// Unnormalized n-D transform in place, one axis at a time.
fn transform(grid: &GridSpec, data: &mut [Complex64], forward: bool) {
    let n = grid.points();
    let fft = plan(n, forward);
    for axis in 0..grid.dim() {
        let stride = grid.stride(axis);
        if stride == 1 {
            data.par_chunks_mut(n * LINES_PER_TASK)
                .for_each(|chunk| fft.process(chunk));
            continue;
        }
        let block = n * stride;
        let mut lines = vec![Complex64::new(0.0, 0.0); data.len()];
        lines.par_chunks_mut(n).enumerate().for_each(|(l, line)| {
            let base = (l / stride) * block + l % stride;
            for (j, v) in line.iter_mut().enumerate() {
                *v = data[base + j * stride];
            }
        });
        lines
            .par_chunks_mut(n * LINES_PER_TASK)
            .for_each(|chunk| fft.process(chunk));
        data.par_iter_mut().enumerate().for_each(|(flat, v)| {
            let j = (flat / stride) % n;
            let l = (flat / block) * stride + flat % stride;
            *v = lines[l * n + j];
        });
    }
}

/// Discrete Fourier coefficients of a field, with the wavenumber table of its grid.
#[derive(Clone, Debug)]
pub struct Spectrum {
    grid: GridSpec,
    coefficients: Vec<Complex64>,
    wavenumbers: Vec<f64>,
}

impl Spectrum {
    pub fn forward(field: &ScalarField) -> Self {
        let grid = *field.grid();
        let mut coefficients: Vec<Complex64> = field
            .values()
            .par_iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        transform(&grid, &mut coefficients, true);
        Self {
            grid,
            coefficients,
            wavenumbers: wavenumbers(&grid),
        }
    }

    /// Real part of the inverse transform.
    pub fn to_field(&self) -> ScalarField {
        let mut data = self.coefficients.clone();
        transform(&self.grid, &mut data, false);
        let scale = 1.0 / self.grid.len() as f64;
        ScalarField::from_raw(self.grid, data.par_iter().map(|c| c.re * scale).collect())
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    /// Angular wavenumber of mode `flat` along `axis`.
    pub fn wavenumber(&self, flat: usize, axis: usize) -> f64 {
        self.wavenumbers[self.grid.axis_index(flat, axis)]
    }

    /// Same as [`Spectrum::wavenumber`] but zero on the Nyquist mode.
    pub fn derivative_wavenumber(&self, flat: usize, axis: usize) -> f64 {
        let j = self.grid.axis_index(flat, axis);
        if 2 * j == self.grid.points() {
            0.0
        } else {
            self.wavenumbers[j]
        }
    }

    /// `|k|²` of mode `flat`, Nyquist included.
    pub fn wavenumber_sq(&self, flat: usize) -> f64 {
        (0..self.grid.dim())
            .map(|axis| self.wavenumber(flat, axis).powi(2))
            .sum()
    }

    /// Replaces each coefficient by `f(flat, coefficient)`.
    pub fn map_modes(&mut self, f: impl Fn(usize, Complex64) -> Complex64 + Sync) {
        self.coefficients
            .par_iter_mut()
            .enumerate()
            .for_each(|(flat, c)| *c = f(flat, *c));
    }

    /// Multiplies each mode by `g(|k|²)`.
    pub fn apply_radial(&mut self, g: impl Fn(f64) -> f64 + Sync) {
        let grid = self.grid;
        let table = &self.wavenumbers;
        self.coefficients
            .par_iter_mut()
            .enumerate()
            .for_each(|(flat, c)| {
                let k2: f64 = (0..grid.dim())
                    .map(|axis| table[grid.axis_index(flat, axis)].powi(2))
                    .sum();
                *c *= g(k2);
            });
    }

    /// `Σ |ĉ_k|² dx^n / N^n`, equal to `‖f‖²_2` by Parseval.
    pub fn squared_l2(&self) -> f64 {
        let sum: f64 = self.coefficients.iter().map(|c| c.norm_sqr()).sum();
        sum * self.grid.cell_volume() / self.grid.len() as f64
    }

    /// `Σ w(k) |ĉ_k|² dx^n / N^n`.
    pub fn weighted_squared_l2(&self, w: impl Fn(usize) -> f64) -> f64 {
        let sum: f64 = self
            .coefficients
            .iter()
            .enumerate()
            .map(|(flat, c)| w(flat) * c.norm_sqr())
            .sum();
        sum * self.grid.cell_volume() / self.grid.len() as f64
    }
}

fn wavenumbers(grid: &GridSpec) -> Vec<f64> {
    let n = grid.points();
    let base = 2.0 * PI / grid.length();
    (0..n)
        .map(|j| {
            let signed = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
            base * signed
        })
        .collect()
}

pub fn gradient(field: &ScalarField) -> VectorField {
    gradient_with(field, DerivativeScheme::Spectral)
}

pub fn gradient_with(field: &ScalarField, scheme: DerivativeScheme) -> VectorField {
    let grid = *field.grid();
    let components = match scheme {
        DerivativeScheme::Spectral => {
            let spectrum = Spectrum::forward(field);
            (0..grid.dim())
                .map(|axis| {
                    let mut s = spectrum.clone();
                    s.map_modes(|flat, c| {
                        c * Complex64::new(0.0, spectrum.derivative_wavenumber(flat, axis))
                    });
                    s.to_field()
                })
                .collect()
        }
        DerivativeScheme::CentralDifference => {
            let h = 0.5 / grid.spacing();
            let v = field.values();
            (0..grid.dim())
                .map(|axis| {
                    let values = (0..grid.len())
                        .into_par_iter()
                        .map(|i| h * (v[grid.shift(i, axis, true)] - v[grid.shift(i, axis, false)]))
                        .collect();
                    ScalarField::from_raw(grid, values)
                })
                .collect()
        }
    };
    VectorField { components }
}

/// Spectral Laplacian built from the same per-axis symbols as [`gradient`], so
/// `divergence(gradient(f)) == laplacian(f)` holds mode by mode.
pub fn laplacian(field: &ScalarField) -> ScalarField {
    laplacian_with(field, DerivativeScheme::Spectral)
}

pub fn laplacian_with(field: &ScalarField, scheme: DerivativeScheme) -> ScalarField {
    let grid = *field.grid();
    match scheme {
        DerivativeScheme::Spectral => {
            let mut s = Spectrum::forward(field);
            let symbol: Vec<f64> = (0..grid.len())
                .map(|flat| {
                    -(0..grid.dim())
                        .map(|axis| s.derivative_wavenumber(flat, axis).powi(2))
                        .sum::<f64>()
                })
                .collect();
            s.map_modes(|flat, c| c * symbol[flat]);
            s.to_field()
        }
        DerivativeScheme::CentralDifference => {
            let h2 = 1.0 / grid.spacing().powi(2);
            let v = field.values();
            let values = (0..grid.len())
                .into_par_iter()
                .map(|i| {
                    let mut acc = 0.0;
                    for axis in 0..grid.dim() {
                        acc += v[grid.shift(i, axis, true)] + v[grid.shift(i, axis, false)]
                            - 2.0 * v[i];
                    }
                    h2 * acc
                })
                .collect();
            ScalarField::from_raw(grid, values)
        }
    }
}

pub fn divergence(field: &VectorField) -> ScalarField {
    divergence_with(field, DerivativeScheme::Spectral)
}

pub fn divergence_with(field: &VectorField, scheme: DerivativeScheme) -> ScalarField {
    let grid = *field.grid();
    match scheme {
        DerivativeScheme::Spectral => {
            let mut total: Option<Spectrum> = None;
            for (axis, component) in field.components().iter().enumerate() {
                let mut s = Spectrum::forward(component);
                let kd: Vec<f64> = (0..grid.len())
                    .map(|flat| s.derivative_wavenumber(flat, axis))
                    .collect();
                s.map_modes(|flat, c| c * Complex64::new(0.0, kd[flat]));
                total = Some(match total {
                    None => s,
                    Some(mut acc) => {
                        acc.coefficients
                            .iter_mut()
                            .zip(&s.coefficients)
                            .for_each(|(a, b)| *a += b);
                        acc
                    }
                });
            }
            total.map(|s| s.to_field()).unwrap_or_else(|| ScalarField::zeros(grid))
        }
        DerivativeScheme::CentralDifference => {
            let h = 0.5 / grid.spacing();
            let values = (0..grid.len())
                .into_par_iter()
                .map(|i| {
                    field
                        .components()
                        .iter()
                        .enumerate()
                        .map(|(axis, c)| {
                            let v = c.values();
                            h * (v[grid.shift(i, axis, true)] - v[grid.shift(i, axis, false)])
                        })
                        .sum()
                })
                .collect();
            ScalarField::from_raw(grid, values)
        }
    }
}

/// Solves `(1 - Δ) c = f` spectrally.
pub fn resolvent_solve(field: &ScalarField) -> ScalarField {
    let mut s = Spectrum::forward(field);
    s.apply_radial(|k2| 1.0 / (1.0 + k2));
    s.to_field()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn rel_l2(a: &ScalarField, b: &ScalarField) -> f64 {
        let d = a.combine(1.0, b, -1.0).unwrap();
        d.lp_norm(2.0).unwrap() / b.lp_norm(2.0).unwrap().max(1e-300)
    }

    fn band_limited(grid: GridSpec, seed: u64) -> ScalarField {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let modes: Vec<(Vec<f64>, f64, f64)> = (0..6)
            .map(|_| {
                let k = (0..grid.dim())
                    .map(|_| rng.random_range(-3i32..=3) as f64)
                    .collect();
                (k, rng.random_range(-1.0..1.0), rng.random_range(0.0..6.28))
            })
            .collect();
        let l = grid.length();
        ScalarField::from_fn(grid, |x| {
            modes
                .iter()
                .map(|(k, a, ph)| {
                    let arg: f64 = k.iter().zip(x).map(|(ki, xi)| ki * xi).sum::<f64>();
                    a * (2.0 * PI * arg / l + ph).cos()
                })
                .sum()
        })
        .unwrap()
    }

    #[test]
    fn fft_round_trip() {
        let g = GridSpec::new(3, 8, 2.0).unwrap();
        let f = band_limited(g, 1).map(|v| v + 0.3);
        let back = Spectrum::forward(&f).to_field();
        assert!(rel_l2(&back, &f) < 1e-14);
    }

    #[test]
    fn constant_has_zero_derivatives() {
        let g = GridSpec::new(2, 16, 3.0).unwrap();
        let f = ScalarField::constant(g, 4.2);
        assert!(laplacian(&f).max_abs() < 1e-12);
        for c in gradient(&f).components() {
            assert!(c.max_abs() < 1e-12);
        }
    }

    #[test]
    fn sine_mode_is_eigenfunction() {
        let g = GridSpec::new(3, 16, 5.0).unwrap();
        let k = 3.0;
        let f = ScalarField::from_fn(g, |x| (2.0 * PI * k * x[0] / 5.0).sin()).unwrap();
        let lambda = -(2.0 * PI * k / 5.0).powi(2);
        let lap = laplacian(&f);
        let expected = f.scaled(lambda);
        assert!(lap.combine(1.0, &expected, -1.0).unwrap().max_abs() < 1e-10 * lambda.abs());
    }

    #[test]
    fn gaussian_gradient_matches_analytic() {
        let g = GridSpec::new(3, 64, 20.0).unwrap();
        let c = g.center();
        let blob = |x: &[f64]| {
            let r2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum();
            (-r2 / 2.0).exp()
        };
        let f = ScalarField::from_fn(g, blob).unwrap();
        let grad = gradient(&f);
        for axis in 0..3 {
            let exact = ScalarField::from_fn(g, |x| -(x[axis] - c[axis]) * blob(x)).unwrap();
            let err = grad.components()[axis]
                .combine(1.0, &exact, -1.0)
                .unwrap()
                .max_abs();
            assert!(err < 1e-9, "axis {axis}: {err}");
        }
    }

    #[test]
    fn div_grad_is_laplacian() {
        let g = GridSpec::new(3, 16, 4.0).unwrap();
        let f = band_limited(g, 2);
        let lhs = divergence(&gradient(&f));
        assert!(rel_l2(&lhs, &laplacian(&f)) < 1e-12);
    }

    #[test]
    fn div_grad_is_laplacian_with_nyquist_content() {
        let g = GridSpec::new(2, 8, 1.0).unwrap();
        let f = ScalarField::from_fn(g, |x| (8.0 * PI * x[0]).cos() + x[1].sin()).unwrap();
        let lhs = divergence(&gradient(&f));
        let rhs = laplacian(&f);
        assert!(lhs.combine(1.0, &rhs, -1.0).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn parseval() {
        let g = GridSpec::new(3, 16, 7.0).unwrap();
        let f = band_limited(g, 3).map(|v| v * v);
        let lhs = f.lp_norm(2.0).unwrap().powi(2);
        let rhs = Spectrum::forward(&f).squared_l2();
        assert!((lhs - rhs).abs() < 1e-10 * lhs);
    }

    #[test]
    fn central_difference_second_order() {
        let mut errs = Vec::new();
        for n in [16usize, 32, 64] {
            let g = GridSpec::new(1, n, 2.0 * PI).unwrap();
            let f = ScalarField::from_fn(g, |x| x[0].sin()).unwrap();
            let exact = ScalarField::from_fn(g, |x| x[0].cos()).unwrap();
            let d = gradient_with(&f, DerivativeScheme::CentralDifference);
            errs.push(d.components()[0].combine(1.0, &exact, -1.0).unwrap().max_abs());
            let lap = laplacian_with(&f, DerivativeScheme::CentralDifference);
            assert!(lap.combine(1.0, &f, 1.0).unwrap().max_abs() < 0.02);
        }
        assert!(errs[0] / errs[1] > 3.9 && errs[1] / errs[2] > 3.9, "{errs:?}");
    }

    #[test]
    fn resolvent_inverts_one_minus_laplacian() {
        let g = GridSpec::new(2, 32, 10.0).unwrap();
        let f = band_limited(g, 4);
        let c = resolvent_solve(&f);
        let back = c.combine(1.0, &laplacian(&c), -1.0).unwrap();
        assert!(rel_l2(&back, &f) < 1e-12);
    }
}
