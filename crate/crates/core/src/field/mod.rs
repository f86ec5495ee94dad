//! Periodic grids, scalar fields and the discrete calculus on them.
//!
//! The domain is the torus `[0, L)^n` sampled at `N` points per axis, stored
//! row-major with axis 0 slowest. Integrals are lattice sums times `dx^n`.

mod io;
mod mollifier;
mod spectral;

pub use io::{read_ksf, read_ksf_from, write_ksf, write_ksf_to, KSF_MAGIC};
pub use mollifier::{convolve, Mollifier, MollifierKind};
pub use spectral::{
    divergence, divergence_with, gradient, gradient_with, laplacian, laplacian_with,
    resolvent_solve, DerivativeScheme, Spectrum,
};

use crate::{Error, Result};

/// Largest lattice the constructor accepts.
pub const MAX_POINTS: usize = 1 << 31;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    dim: usize,
    points: usize,
    length: f64,
}

impl GridSpec {
    pub fn new(dim: usize, points: usize, length: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension { n: dim, min: 1 });
        }
        if points < 8 {
            return Err(Error::param("points_per_axis", format!("need N >= 8, got {points}")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::param("box_length", format!("need L > 0, got {length}")));
        }
        let total = (0..dim).try_fold(1usize, |acc, _| acc.checked_mul(points));
        match total {
            Some(t) if t <= MAX_POINTS => Ok(Self {
                dim,
                points,
                length,
            }),
            _ => Err(Error::param(
                "points_per_axis",
                format!("N^n = {points}^{dim} exceeds {MAX_POINTS} points"),
            )),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.points as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Total number of lattice points `N^n`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat-index step along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.points.pow((self.dim - 1 - axis) as u32)
    }

    /// Lattice coordinate of `flat` along `axis`.
    pub fn axis_index(&self, flat: usize, axis: usize) -> usize {
        (flat / self.stride(axis)) % self.points
    }

    /// Flat index of the periodic neighbour `flat ± 1` along `axis`.
    pub fn shift(&self, flat: usize, axis: usize, forward: bool) -> usize {
        let stride = self.stride(axis);
        let i = (flat / stride) % self.points;
        if forward {
            if i + 1 == self.points {
                flat + stride - self.points * stride
            } else {
                flat + stride
            }
        } else if i == 0 {
            flat + (self.points - 1) * stride
        } else {
            flat - stride
        }
    }

    /// Physical coordinates `i_d · dx` of the point `flat`.
    pub fn coordinates(&self, flat: usize, out: &mut [f64]) {
        let dx = self.spacing();
        for (axis, x) in out.iter_mut().enumerate().take(self.dim) {
            *x = self.axis_index(flat, axis) as f64 * dx;
        }
    }

    /// Signed minimal-image displacement `x - origin` along one axis.
    pub fn periodic_offset(&self, x: f64, origin: f64) -> f64 {
        let l = self.length;
        let mut d = (x - origin) % l;
        if d >= 0.5 * l {
            d -= l;
        } else if d < -0.5 * l {
            d += l;
        }
        d
    }

    pub fn center(&self) -> Vec<f64> {
        vec![0.5 * self.length; self.dim]
    }
}

/// Real-valued field on a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::param(
                "values",
                format!("expected {} entries, got {}", grid.len(), values.len()),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::param("values", format!("non-finite entry at index {i}")));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self::from_raw(grid, vec![value; grid.len()])
    }

    /// Samples `f` at every lattice point.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let mut x = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|i| {
                grid.coordinates(i, &mut x);
                f(&x)
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn ensure_same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `(Σ |v|^p dx^n)^{1/p}`, or `max |v|` for `p = ∞`.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        lp_norm(self, p)
    }

    /// `Σ v dx^n`.
    pub fn mass(&self) -> f64 {
        mass(self)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
    }

    /// `Σ a b dx^n`.
    pub fn inner(&self, other: &ScalarField) -> Result<f64> {
        self.ensure_same_grid(other)?;
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        Ok(sum * self.grid.cell_volume())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        Self::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        self.ensure_same_grid(other)?;
        Ok(Self::from_raw(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn scaled(&self, a: f64) -> ScalarField {
        self.map(|v| a * v)
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &ScalarField, b: f64) -> Result<ScalarField> {
        self.zip_map(other, |x, y| a * x + b * y)
    }

    /// Fraction of `|mass|` carried by points within 10% of the box edge along any axis.
    pub fn edge_mass_fraction(&self) -> f64 {
        let grid = &self.grid;
        let band = 0.1 * grid.length();
        let mut x = vec![0.0; grid.dim()];
        let mut edge = 0.0;
        let mut total = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            grid.coordinates(i, &mut x);
            let a = v.abs();
            total += a;
            if x.iter().any(|&xi| xi < band || xi > grid.length() - band) {
                edge += a;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            edge / total
        }
    }

    /// Point reflection `x ↦ -x` about the lattice origin (index `i ↦ -i mod N`).
    pub fn reflected(&self) -> ScalarField {
        let grid = self.grid;
        let n = grid.points();
        let values = (0..grid.len())
            .map(|flat| {
                let mut src = 0;
                for axis in 0..grid.dim() {
                    let i = grid.axis_index(flat, axis);
                    src += ((n - i) % n) * grid.stride(axis);
                }
                self.values[src]
            })
            .collect();
        Self::from_raw(grid, values)
    }
}

/// `n` components of a vector-valued field on a shared grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(components: Vec<ScalarField>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::param("components", "vector field needs at least one"))?;
        if components.len() != first.grid().dim() {
            return Err(Error::param(
                "components",
                format!("need {} components, got {}", first.grid().dim(), components.len()),
            ));
        }
        for c in &components[1..] {
            first.ensure_same_grid(c)?;
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn grid(&self) -> &GridSpec {
        self.components[0].grid()
    }

    /// Pointwise Euclidean length.
    pub fn magnitude(&self) -> ScalarField {
        let grid = *self.grid();
        let values = (0..grid.len())
            .map(|i| {
                self.components
                    .iter()
                    .map(|c| c.values[i] * c.values[i])
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        ScalarField::from_raw(grid, values)
    }

    /// `L^p` norm of the pointwise Euclidean length.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        self.magnitude().lp_norm(p)
    }
}

/// `(Σ |v|^p dx^n)^{1/p}` or `max |v|` for `p = ∞`.
pub fn lp_norm(field: &ScalarField, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::param("p", format!("L^p norm needs p >= 1, got {p}")));
    }
    let peak = field.max_abs();
    if p.is_infinite() || peak == 0.0 {
        return Ok(peak);
    }
    // scale by the peak so large p cannot overflow
    let sum: f64 = field.values.iter().map(|v| (v.abs() / peak).powf(p)).sum();
    Ok(peak * (sum * field.grid.cell_volume()).powf(1.0 / p))
}

/// `Σ v dx^n`.
pub fn mass(field: &ScalarField) -> f64 {
    field.values.iter().sum::<f64>() * field.grid.cell_volume()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gaussian(grid: GridSpec, sigma: f64) -> ScalarField {
        let c = grid.center();
        ScalarField::from_fn(grid, |x| {
            let r2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum();
            (-r2 / (2.0 * sigma * sigma)).exp()
        })
        .unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(3, 4, 1.0).is_err());
        assert!(GridSpec::new(3, 16, 0.0).is_err());
        assert!(GridSpec::new(0, 16, 1.0).is_err());
        assert!(GridSpec::new(4, 256, 1.0).is_err());
        let g = GridSpec::new(3, 16, 2.0).unwrap();
        assert_eq!(g.len(), 4096);
        assert_eq!(g.spacing(), 0.125);
    }

    #[test]
    fn field_rejects_nonfinite_and_bad_length() {
        let g = GridSpec::new(1, 8, 1.0).unwrap();
        assert!(ScalarField::new(g, vec![0.0; 7]).is_err());
        let mut v = vec![0.0; 8];
        v[3] = f64::NAN;
        assert!(ScalarField::new(g, v).is_err());
    }

    #[test]
    fn shift_wraps_periodically() {
        let g = GridSpec::new(2, 8, 1.0).unwrap();
        assert_eq!(g.shift(7, 1, true), 0);
        assert_eq!(g.shift(0, 1, false), 7);
        assert_eq!(g.shift(56, 0, true), 0);
        assert_eq!(g.shift(3, 0, false), 59);
    }

    #[test]
    fn constant_field_norms() {
        let g = GridSpec::new(2, 16, 3.0).unwrap();
        let f = ScalarField::constant(g, 2.0);
        for p in [1.0, 2.0, 3.5] {
            let expected = 2.0 * 9f64.powf(1.0 / p);
            assert!((f.lp_norm(p).unwrap() - expected).abs() < 1e-12 * expected);
        }
        assert_eq!(f.lp_norm(f64::INFINITY).unwrap(), 2.0);
        assert!(f.lp_norm(0.5).is_err());
        assert_eq!(ScalarField::zeros(g).mass(), 0.0);
    }

    #[test]
    fn sup_norm_is_max_abs() {
        let g = GridSpec::new(1, 8, 1.0).unwrap();
        let f = ScalarField::new(g, vec![0.1, -3.0, 2.0, 0.0, 1.0, 0.0, 0.0, 0.5]).unwrap();
        assert_eq!(f.lp_norm(f64::INFINITY).unwrap(), 3.0);
    }

    #[test]
    fn gaussian_l2_norm_converges() {
        // ‖exp(-|x|²/2σ²)‖²_2 = (π σ²)^{n/2}; the offset keeps the lattice
        // from sampling the peak so the quadrature error is visible.
        let sigma = 1.0;
        let exact = (PI * sigma * sigma).powf(0.75);
        let mut errors = Vec::new();
        for n in [32usize, 64, 128] {
            let g = GridSpec::new(3, n, 12.0).unwrap();
            let f = gaussian(g, sigma);
            errors.push((f.lp_norm(2.0).unwrap() - exact).abs() / exact);
        }
        for e in &errors {
            assert!(*e < 1e-10, "{errors:?}");
        }
    }

    #[test]
    fn l2_norm_second_order_on_kinked_profile() {
        // A profile with a kink shows the algebraic rate of the lattice sum.
        let profile = |x: f64| if x.abs() < 1.0 { 1.0 - x * x } else { 0.0 };
        // ∫ (1-x²)² dx over [-1, 1] = 16/15
        let target = (16.0f64 / 15.0).sqrt();
        let mut errs = Vec::new();
        for n in [32usize, 64, 128] {
            let g = GridSpec::new(1, n, 4.0).unwrap();
            let f = ScalarField::from_fn(g, |x| profile(x[0] - 2.0 + 0.37 * g.spacing()))
                .unwrap();
            errs.push((f.lp_norm(2.0).unwrap() - target).abs());
        }
        assert!(errs[1] < errs[0] / 3.0 && errs[2] < errs[1] / 3.0, "{errs:?}");
    }

    #[test]
    fn interpolation_inequality_on_random_fields() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let g = GridSpec::new(2, 16, 5.0).unwrap();
        for _ in 0..50 {
            let f = ScalarField::new(g, (0..g.len()).map(|_| rng.random::<f64>().powi(3)).collect())
                .unwrap();
            let q: f64 = 1.0 + 2.0 * rng.random::<f64>();
            let p: f64 = q + 1.0 + 5.0 * rng.random::<f64>();
            let r: f64 = q + (p - q) * rng.random::<f64>();
            let theta = (1.0 / q - 1.0 / r) / (1.0 / q - 1.0 / p);
            let lhs = f.lp_norm(r).unwrap();
            let rhs = f.lp_norm(q).unwrap().powf(1.0 - theta) * f.lp_norm(p).unwrap().powf(theta);
            assert!(lhs <= rhs * (1.0 + 1e-12));
        }
    }

    #[test]
    fn reflection_and_edge_fraction() {
        let g = GridSpec::new(2, 16, 10.0).unwrap();
        let f = ScalarField::from_fn(g, |x| x[0] + 2.0 * x[1]).unwrap();
        assert_eq!(f.reflected().reflected(), f);
        let blob = gaussian(g, 0.5);
        assert!(blob.edge_mass_fraction() < 1e-12);
        assert!(ScalarField::constant(g, 1.0).edge_mass_fraction() > 0.3);
    }
}
