use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GridSpec, ScalarField};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MollifierKind {
    /// `exp(-|x|²/(2w²))`, periodized and separable.
    #[default]
    Gaussian,
    /// `exp(-1/(1 - |x|²/w²))` on the ball of radius `w`.
    Bump,
}

/// Unit-mass smoothing kernel. Normalization is discrete: the lattice sum
/// times `dx^n` is one on whatever grid it is applied to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mollifier {
    pub width: f64,
    pub kind: MollifierKind,
}

/// Gaussian taps beyond this many widths are dropped (weight below 1e-18).
const GAUSSIAN_CUTOFF_SIGMAS: f64 = 9.2;

impl Mollifier {
    pub fn new(width: f64, kind: MollifierKind) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::param("mollifier.width", format!("need width > 0, got {width}")));
        }
        Ok(Self { width, kind })
    }

    /// Gaussian of width `2 dx`.
    pub fn default_for(grid: &GridSpec) -> Self {
        Self {
            width: 2.0 * grid.spacing(),
            kind: MollifierKind::Gaussian,
        }
    }

    /// Kernel sampled on `grid`, centred at the origin and periodized.
    pub fn kernel(&self, grid: &GridSpec) -> Result<ScalarField> {
        let mut delta = ScalarField::zeros(*grid);
        delta.values_mut()[0] = 1.0 / grid.cell_volume();
        self.apply(&delta)
    }

    pub fn apply(&self, field: &ScalarField) -> Result<ScalarField> {
        convolve(field, self)
    }

    /// Periodized 1-D Gaussian weights by residue, summing to one.
    fn gaussian_taps(&self, grid: &GridSpec) -> Vec<(usize, f64)> {
        let n = grid.points() as i64;
        let dx = grid.spacing();
        let reach = GAUSSIAN_CUTOFF_SIGMAS * self.width;
        let images = (reach / grid.length()).ceil() as i64 + 1;
        let mut weights = vec![0.0; n as usize];
        for (r, w) in weights.iter_mut().enumerate() {
            for img in -images..=images {
                let x = (r as i64 + img * n) as f64 * dx;
                if x.abs() <= reach {
                    *w += (-0.5 * (x / self.width).powi(2)).exp();
                }
            }
        }
        let total: f64 = weights.iter().sum();
        weights
            .into_iter()
            .enumerate()
            .filter(|(_, w)| *w > 0.0)
            .map(|(r, w)| (r, w / total))
            .collect()
    }

    /// Bump weights as `(flat offset, weight)`, summing to one.
    fn bump_taps(&self, grid: &GridSpec) -> Result<Vec<(usize, f64)>> {
        let dx = grid.spacing();
        let dim = grid.dim();
        let radius = (self.width / dx).floor() as i64;
        let n = grid.points() as i64;
        let mut taps: Vec<(usize, f64)> = Vec::new();
        let mut offset = vec![-radius; dim];
        loop {
            let r2: f64 = offset.iter().map(|&o| (o as f64 * dx).powi(2)).sum();
            let s = r2 / (self.width * self.width);
            if s < 1.0 {
                let w = (-1.0 / (1.0 - s)).exp();
                let mut flat = 0usize;
                for (axis, &o) in offset.iter().enumerate() {
                    flat += (o.rem_euclid(n) as usize) * grid.stride(axis);
                }
                taps.push((flat, w));
            }
            let mut axis = dim;
            loop {
                if axis == 0 {
                    taps.sort_by_key(|t| t.0);
                    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(taps.len());
                    for (flat, w) in taps {
                        match merged.last_mut() {
                            Some(last) if last.0 == flat => last.1 += w,
                            _ => merged.push((flat, w)),
                        }
                    }
                    let total: f64 = merged.iter().map(|t| t.1).sum();
                    if total <= 0.0 {
                        return Err(Error::param(
                            "mollifier.width",
                            "bump narrower than the grid spacing has no lattice support",
                        ));
                    }
                    return Ok(merged.into_iter().map(|(f, w)| (f, w / total)).collect());
                }
                axis -= 1;
                if offset[axis] < radius {
                    offset[axis] += 1;
                    break;
                }
                offset[axis] = -radius;
            }
        }
    }
}

/// Circular convolution `field * J`, evaluated directly so that nonnegative
/// input gives nonnegative output exactly.
pub fn convolve(field: &ScalarField, mollifier: &Mollifier) -> Result<ScalarField> {
    let grid = *field.grid();
    match mollifier.kind {
        MollifierKind::Gaussian => {
            let taps = mollifier.gaussian_taps(&grid);
            let n = grid.points();
            let mut current = field.values().to_vec();
            for axis in 0..grid.dim() {
                let stride = grid.stride(axis);
                let src = &current;
                let next: Vec<f64> = (0..grid.len())
                    .into_par_iter()
                    .map(|flat| {
                        let j = (flat / stride) % n;
                        let row = flat - j * stride;
                        taps.iter()
                            .map(|&(r, w)| {
                                let k = if j >= r { j - r } else { j + n - r };
                                w * src[row + k * stride]
                            })
                            .sum()
                    })
                    .collect();
                current = next;
            }
            Ok(ScalarField::from_raw(grid, current))
        }
        MollifierKind::Bump => {
            let taps = mollifier.bump_taps(&grid)?;
            let src = field.values();
            let values = (0..grid.len())
                .into_par_iter()
                .map(|flat| {
                    taps.iter()
                        .map(|&(off, w)| w * src[subtract_offset(&grid, flat, off)])
                        .sum()
                })
                .collect();
            Ok(ScalarField::from_raw(grid, values))
        }
    }
}

/// Flat index of `flat - off` with per-axis periodic wrap.
fn subtract_offset(grid: &GridSpec, flat: usize, off: usize) -> usize {
    let n = grid.points();
    let mut out = 0;
    for axis in 0..grid.dim() {
        let a = grid.axis_index(flat, axis);
        let b = grid.axis_index(off, axis);
        out += ((a + n - b) % n) * grid.stride(axis);
    }
    out
}
