//! Uniform periodic grids, sampled complex fields, discrete norms and the
//! unitary discrete Fourier transform shared by every other module.
//!
//! The transform is normalised by `1/sqrt(n)` in both directions, so the
//! coefficient vector has the same Euclidean length as the sample vector and
//! `l2_norm(f)^2 == dx * sum |f_hat_m|^2`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest grid accepted by [`Grid::new`].
pub const MIN_POINTS: usize = 16;

#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n: usize,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Grid[{}, {}) n={}", self.x_min, self.x_max, self.n)
    }
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_min >= x_max {
            return Err(Error::InvalidGrid(format!(
                "need finite x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if n < MIN_POINTS || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n must be a power of two >= {MIN_POINTS}, got {n}"
            )));
        }
        Ok(Self { x_min, x_max, n })
    }

    /// Grid symmetric about the origin, `[-half_width, half_width)`.
    pub fn symmetric(half_width: f64, n: usize) -> Result<Self> {
        Self::new(-half_width, half_width, n)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn dx(&self) -> f64 {
        self.length() / self.n as f64
    }

    fn center(&self) -> f64 {
        0.5 * (self.x_min + self.x_max)
    }

    /// Sample location `x_j`.
    ///
    /// Computed relative to the domain centre so that on a grid symmetric
    /// about the origin `x(n - j) == -x(j)` holds bit for bit.
    #[inline]
    pub fn x(&self, j: usize) -> f64 {
        self.center() + (j as f64 - (self.n / 2) as f64) * self.dx()
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.n).map(move |j| self.x(j))
    }

    /// Index of the sample mirrored through the domain centre.
    pub fn mirror_index(&self, j: usize) -> usize {
        (self.n - j) % self.n
    }

    /// Integer mode number of transform slot `j`, in `[-n/2, n/2)`.
    #[inline]
    pub fn mode(&self, j: usize) -> i64 {
        if j < self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }

    /// Transform slot holding mode `m`.
    pub fn slot(&self, m: i64) -> Option<usize> {
        let half = (self.n / 2) as i64;
        if m < -half || m >= half {
            return None;
        }
        Some(if m >= 0 { m as usize } else { (m + self.n as i64) as usize })
    }

    #[inline]
    pub fn wavenumber(&self, j: usize) -> f64 {
        2.0 * PI * self.mode(j) as f64 / self.length()
    }

    /// Wavenumbers `k_m = 2 pi m / L` in transform ordering.
    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.wavenumber(j)).collect()
    }

    /// Nyquist wavenumber `pi / dx`.
    pub fn k_max(&self) -> f64 {
        PI / self.dx()
    }

    /// Same spacing, twice the extent, same centre.
    pub fn doubled_domain(&self) -> Self {
        let c = self.center();
        let half = self.length();
        Self { x_min: c - half, x_max: c + half, n: 2 * self.n }
    }

    /// Same extent, half the spacing.
    pub fn refined(&self) -> Self {
        Self { n: 2 * self.n, ..*self }
    }

    /// Number of samples within `fraction * L` of either edge.
    pub fn edge_width(&self, fraction: f64) -> usize {
        ((fraction * self.n as f64).ceil() as usize).min(self.n / 2)
    }
}

/// Complex samples of a function on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<Complex64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "field has {} samples but the grid has {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64) -> Complex64) -> Self {
        let values = grid.points().map(&mut f).collect();
        Self { grid, values }
    }

    pub fn from_real_fn(grid: Grid, mut f: impl FnMut(f64) -> f64) -> Self {
        Self::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|z| z * c).collect() }
    }

    /// `self - other`, pointwise.
    pub fn difference(&self, other: &Field) -> Result<Field> {
        ensure_same_grid(self, other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Self { grid: self.grid, values })
    }

    /// `self + c * other`, pointwise.
    pub fn axpy(&self, c: Complex64, other: &Field) -> Result<Field> {
        ensure_same_grid(self, other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect();
        Ok(Self { grid: self.grid, values })
    }

    pub fn mass(&self) -> f64 {
        self.grid.dx() * self.values.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    /// Largest fraction of the total mass found within `fraction * L` of
    /// either edge. Zero for the zero field.
    pub fn edge_mass_fraction(&self, fraction: f64) -> f64 {
        let total: f64 = self.values.iter().map(|z| z.norm_sqr()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let w = self.grid.edge_width(fraction);
        let left: f64 = self.values[..w].iter().map(|z| z.norm_sqr()).sum();
        let right: f64 = self.values[self.grid.len() - w..].iter().map(|z| z.norm_sqr()).sum();
        left.max(right) / total
    }
}

pub(crate) fn ensure_same_grid(f: &Field, g: &Field) -> Result<()> {
    if f.grid != g.grid {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// Rectangle-rule `L^2` norm, `sqrt(dx * sum |f_j|^2)`.
pub fn l2_norm(f: &Field) -> f64 {
    f.mass().sqrt()
}

/// Rectangle-rule `L^p` norm for `p` in `{1, 2, 4, 6, inf}`.
pub fn lp_norm(f: &Field, p: f64) -> Result<f64> {
    let abs = f.values.iter().map(|z| z.norm());
    let dx = f.grid.dx();
    let norm = if p == f64::INFINITY {
        abs.fold(0.0, f64::max)
    } else if p == 1.0 {
        dx * abs.sum::<f64>()
    } else if p == 2.0 {
        l2_norm(f)
    } else if p == 4.0 || p == 6.0 {
        let k = p as i32;
        (dx * abs.map(|a| a.powi(k)).sum::<f64>()).powf(1.0 / p)
    } else {
        return Err(Error::UnsupportedExponent(p));
    };
    Ok(norm)
}

/// `dx * sum f_j conj(g_j)`; linear in the first slot.
pub fn inner_product(f: &Field, g: &Field) -> Result<Complex64> {
    ensure_same_grid(f, g)?;
    let s: Complex64 = f.values.iter().zip(&g.values).map(|(a, b)| a * b.conj()).sum();
    Ok(s * f.grid.dx())
}

/// Unitary DFT coefficients of a field, in transform ordering.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient of mode `m`, if it is resolved on this grid.
    pub fn mode(&self, m: i64) -> Option<Complex64> {
        self.grid.slot(m).map(|j| self.coeffs[j])
    }

    /// `dx * sum |c_m|^2`, equal to `l2_norm(f)^2` by Parseval.
    pub fn energy(&self) -> f64 {
        self.grid.dx() * self.coeffs.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }
}

/// Planned forward/inverse transforms for one grid size.
///
/// Owns its scratch buffer, so each worker holds its own instance.
pub struct Fourier {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    scale: f64,
}

impl Fourier {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            forward,
            inverse,
            scratch: vec![Complex64::new(0.0, 0.0); len],
            scale: 1.0 / (n as f64).sqrt(),
        }
    }

    pub fn forward(&mut self, data: &mut [Complex64]) {
        self.forward.process_with_scratch(data, &mut self.scratch);
        data.iter_mut().for_each(|z| *z *= self.scale);
    }

    pub fn inverse(&mut self, data: &mut [Complex64]) {
        self.inverse.process_with_scratch(data, &mut self.scratch);
        data.iter_mut().for_each(|z| *z *= self.scale);
    }
}

pub fn to_fourier(f: &Field) -> Spectrum {
    let mut coeffs = f.values.clone();
    Fourier::new(f.grid.len()).forward(&mut coeffs);
    Spectrum { grid: f.grid, coeffs }
}

pub fn from_fourier(s: &Spectrum) -> Field {
    let mut values = s.coeffs.clone();
    Fourier::new(s.grid.len()).inverse(&mut values);
    Field { grid: s.grid, values }
}

/// Spectral first derivative.
pub fn derivative(f: &Field) -> Field {
    let mut s = to_fourier(f);
    let grid = s.grid;
    for (j, c) in s.coeffs.iter_mut().enumerate() {
        *c *= Complex64::new(0.0, grid.wavenumber(j));
    }
    // The Nyquist mode has no odd partner; drop it so real input stays real.
    s.coeffs[grid.len() / 2] = Complex64::new(0.0, 0.0);
    from_fourier(&s)
}
