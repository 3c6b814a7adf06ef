//! Stationary scattering theory for `H = -1/2 d^2/dx^2 + V`.
//!
//! Jost solutions are integrated inward from the edge that carries their
//! boundary condition with the two-stage Gauss–Legendre collocation method
//! (order four, step equal to the grid spacing). Gauss methods preserve
//! quadratic invariants exactly, so the numerical Wronskian of any two
//! solutions is constant to roundoff and `|T|^2 + |R|^2 = 1` holds to
//! roundoff for real `V`.
//!
//! Where `V` vanishes the scheme propagates `e^{i lambda x}` exactly except
//! for a modified wavenumber `lambda~(h)`. Boundary data and the far-edge
//! plane-wave decomposition use `e^{+-i lambda~ x}` (with derivative
//! `+-i lambda f`), so free propagation contributes no error and what remains
//! is the `O(h^4)` error inside the potential region.
//!
//! Bound states come from the second-order finite-difference discretisation
//! of `H` with Dirichlet ends, a real symmetric tridiagonal problem solved by
//! Sturm bisection and inverse iteration.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{derivative, inner_product, l2_norm, Field, Grid};
use crate::potentials::{sample_potential, PotentialSpec};

const SQRT3_6: f64 = 0.288_675_134_594_812_9; // sqrt(3)/6

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectralOptions {
    /// Largest `|V|` tolerated at the edge where a Jost solution starts.
    pub edge_tol: f64,
    /// `|W(0)|` below this counts as a zero-energy resonance.
    pub resonance_eps: f64,
    /// Eigenvalues below `-negative_eps` count as bound states.
    pub negative_eps: f64,
    /// Allowed spatial spread of the pointwise Wronskian, relative to `max(|W|, 1)`.
    pub wronskian_tol: f64,
    /// Allowed gap between the Wronskian and matching routes to `T`.
    pub agreement_tol: f64,
    /// Allowed eigenvalue shift under grid refinement.
    pub refinement_tol: f64,
    /// Compare bound-state energies against a twice-finer grid.
    pub refinement_check: bool,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            edge_tol: 1e-4,
            resonance_eps: 1e-4,
            negative_eps: 1e-6,
            wronskian_tol: 1e-6,
            agreement_tol: 1e-6,
            refinement_tol: 1e-6,
            refinement_check: true,
        }
    }
}

/// Grid used by the scattering tools unless a caller supplies one:
/// `[-64, 64)` with `2^17` points (`dx ~ 1e-3`).
pub fn default_grid() -> Grid {
    Grid::symmetric(64.0, 1 << 17).expect("valid default grid")
}

/// Which asymptotic the solution matches: `+` means `e^{i lambda x}` as
/// `x -> +inf`, `-` means `e^{-i lambda x}` as `x -> -inf`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct JostSolution {
    pub lambda: f64,
    pub side: Side,
    pub grid: Grid,
    /// `f(x_j)`
    pub f: Vec<Complex64>,
    /// `f'(x_j)`
    pub df: Vec<Complex64>,
}

impl JostSolution {
    /// `|| -f''/2 + V f - lambda^2 f / 2 ||_{L^2} / ||f||_{L^2}` over the
    /// interior, with `f''` from fourth-order central differences of `f'`.
    pub fn ode_residual(&self, spec: &PotentialSpec) -> f64 {
        let h = self.grid.dx();
        let n = self.grid.len();
        let mut res = 0.0;
        let mut norm = 0.0;
        for j in 2..n - 2 {
            let d2 = (-self.df[j + 2] + 8.0 * self.df[j + 1] - 8.0 * self.df[j - 1]
                + self.df[j - 2])
                / (12.0 * h);
            let v = spec.value(self.grid.x(j));
            let r = -0.5 * d2 + (v - 0.5 * self.lambda * self.lambda) * self.f[j];
            res += r.norm_sqr();
            norm += self.f[j].norm_sqr();
        }
        if norm == 0.0 {
            0.0
        } else {
            (res / norm).sqrt()
        }
    }

    /// `|f - e^{+-i lambda x}|` at the edge carrying the boundary condition.
    pub fn boundary_defect(&self) -> f64 {
        let j = match self.side {
            Side::Plus => self.grid.len() - 1,
            Side::Minus => 0,
        };
        let x = self.grid.x(j);
        (self.f[j] - Complex64::new(0.0, self.side.sign() * self.lambda * x).exp()).norm()
    }

    pub fn to_field(&self) -> Field {
        Field::new(self.grid, self.f.clone()).expect("grid length")
    }
}

/// Potential values at the two Gauss nodes of every grid interval, shared
/// across all frequencies.
pub struct JostIntegrator {
    spec: PotentialSpec,
    grid: Grid,
    nodes: Vec<[f64; 2]>,
}

impl JostIntegrator {
    pub fn new(spec: &PotentialSpec, grid: &Grid, opts: &SpectralOptions) -> Result<Self> {
        spec.validate()?;
        for (edge, x) in [("left", grid.x(0)), ("right", grid.x(grid.len() - 1))] {
            let value = spec.value(x).abs();
            if value >= opts.edge_tol {
                return Err(Error::EdgeDecay { edge, value, tol: opts.edge_tol });
            }
        }
        let h = grid.dx();
        let (c1, c2) = (0.5 - SQRT3_6, 0.5 + SQRT3_6);
        let nodes = (0..grid.len() - 1)
            .map(|j| {
                let x = grid.x(j);
                [spec.value(x + c1 * h), spec.value(x + c2 * h)]
            })
            .collect();
        Ok(Self { spec: *spec, grid: *grid, nodes })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    /// Real 2x2 map `(f, f')(x_j) -> (f, f')(x_{j+1})` for interval `j`,
    /// or its inverse when `backward`.
    fn propagator(&self, j: usize, lambda2: f64, backward: bool) -> [[f64; 2]; 2] {
        let h = if backward { -self.grid.dx() } else { self.grid.dx() };
        // Backward steps start at x_{j+1}; the nodes are the same points in
        // reverse order.
        let [va, vb] = self.nodes[j];
        let (v1, v2) = if backward { (vb, va) } else { (va, vb) };
        gl2_step(2.0 * v1 - lambda2, 2.0 * v2 - lambda2, h)
    }

    /// Wavenumber at which the scheme propagates `e^{i lambda x}` where
    /// `V = 0`: the rotation angle of one free step divided by `h`.
    pub fn numerical_wavenumber(&self, lambda: f64) -> f64 {
        if lambda == 0.0 {
            return 0.0;
        }
        let h = self.grid.dx();
        let m = gl2_step(-lambda * lambda, -lambda * lambda, h);
        (lambda * m[0][1]).atan2(m[0][0]) / h
    }

    pub fn solve(&self, lambda: f64, side: Side) -> Result<JostSolution> {
        let n = self.grid.len();
        let lambda2 = lambda * lambda;
        let mut f = vec![Complex64::new(0.0, 0.0); n];
        let mut df = vec![Complex64::new(0.0, 0.0); n];
        let start = match side {
            Side::Plus => n - 1,
            Side::Minus => 0,
        };
        let x0 = self.grid.x(start);
        let k = side.sign() * self.numerical_wavenumber(lambda);
        let e = Complex64::new(0.0, k * x0).exp();
        f[start] = e;
        df[start] = Complex64::new(0.0, side.sign() * lambda) * e;

        let apply = |m: [[f64; 2]; 2], y: Complex64, dy: Complex64| {
            (m[0][0] * y + m[0][1] * dy, m[1][0] * y + m[1][1] * dy)
        };
        match side {
            Side::Minus => {
                for j in 0..n - 1 {
                    let m = self.propagator(j, lambda2, false);
                    (f[j + 1], df[j + 1]) = apply(m, f[j], df[j]);
                }
            }
            Side::Plus => {
                for j in (0..n - 1).rev() {
                    let m = self.propagator(j, lambda2, true);
                    (f[j], df[j]) = apply(m, f[j + 1], df[j + 1]);
                }
            }
        }
        if f.iter().chain(&df).any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NumericalBreakdown { step: 0 });
        }
        Ok(JostSolution { lambda, side, grid: self.grid, f, df })
    }

    pub fn wronskian(&self, lambda: f64, opts: &SpectralOptions) -> Result<WronskianEstimate> {
        let plus = self.solve(lambda, Side::Plus)?;
        let minus = self.solve(lambda, Side::Minus)?;
        wronskian(&plus, &minus, opts)
    }

    pub fn scattering(&self, lambda: f64, opts: &SpectralOptions) -> Result<ScatteringCoefficients> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("scattering needs lambda > 0, got {lambda}")));
        }
        let plus = self.solve(lambda, Side::Plus)?;
        let minus = self.solve(lambda, Side::Minus)?;
        let w = wronskian(&plus, &minus, opts)?;
        if w.value.norm() < 1e-12 {
            return Err(Error::DegenerateWronskian(w.value.norm()));
        }
        let i = Complex64::i();
        let t = -2.0 * i * lambda / w.value;

        // f_+ = a e^{i lambda x} + b e^{-i lambda x} at the left edge, in
        // terms of the scheme's own plane waves.
        let x = self.grid.x(0);
        let k = self.numerical_wavenumber(lambda);
        let ik = i * lambda;
        let (fl, dfl) = (plus.f[0], plus.df[0]);
        let a = 0.5 * (fl + dfl / ik) * Complex64::new(0.0, -k * x).exp();
        let b = 0.5 * (fl - dfl / ik) * Complex64::new(0.0, k * x).exp();
        let t_matching = 1.0 / a;
        let r = b / a;
        let gap = (t - t_matching).norm();
        if gap > opts.agreement_tol {
            return Err(Error::Accuracy(format!(
                "Wronskian and matching transmission differ by {gap:e} at lambda = {lambda}"
            )));
        }
        let reach = self.grid.x(0).abs().min(self.grid.x(self.grid.len() - 1).abs());
        Ok(ScatteringCoefficients {
            lambda,
            t,
            r,
            t_matching,
            wronskian: w.value,
            wronskian_spread: w.spread,
            unitarity_defect: (t.norm_sqr() + r.norm_sqr() - 1.0).abs(),
            truncation_estimate: self.spec.tail_bound(reach) / lambda,
        })
    }
}

/// One step of the two-stage Gauss–Legendre method for `y' = A(x) y` with
/// `A = [[0, 1], [q(x), 0]]`, given `q` at the two collocation nodes.
fn gl2_step(q1: f64, q2: f64, h: f64) -> [[f64; 2]; 2] {
    let a11 = 0.25;
    let a12 = 0.25 - SQRT3_6;
    let a21 = 0.25 + SQRT3_6;
    let a22 = 0.25;
    // Stage values Y1 = (p1, r1), Y2 = (p2, r2) satisfy
    //   Y_i = y + h sum_j a_ij A_j Y_j,  A_j Y_j = (r_j, q_j p_j).
    let mut m = [
        [1.0, -h * a11, 0.0, -h * a12],
        [-h * a11 * q1, 1.0, -h * a12 * q2, 0.0],
        [0.0, -h * a21, 1.0, -h * a22],
        [-h * a21 * q1, 0.0, -h * a22 * q2, 1.0],
    ];
    // Right-hand sides for y = e1 and y = e2.
    let mut rhs = [[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
    solve4(&mut m, &mut rhs);
    let mut out = [[0.0; 2]; 2];
    for col in 0..2 {
        let (p1, r1, p2, r2) = (rhs[0][col], rhs[1][col], rhs[2][col], rhs[3][col]);
        let y = if col == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
        out[0][col] = y[0] + 0.5 * h * (r1 + r2);
        out[1][col] = y[1] + 0.5 * h * (q1 * p1 + q2 * p2);
    }
    out
}

/// Gaussian elimination with partial pivoting, two right-hand sides.
fn solve4(m: &mut [[f64; 4]; 4], rhs: &mut [[f64; 2]; 4]) {
    for col in 0..4 {
        let pivot = (col..4)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..4 {
            let factor = m[row][col] / m[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..4 {
                m[row][k] -= factor * m[col][k];
            }
            for k in 0..2 {
                rhs[row][k] -= factor * rhs[col][k];
            }
        }
    }
    for col in (0..4).rev() {
        for k in 0..2 {
            let mut acc = rhs[col][k];
            for j in col + 1..4 {
                acc -= m[col][j] * rhs[j][k];
            }
            rhs[col][k] = acc / m[col][col];
        }
    }
}

/// Jost solution `f_+-(lambda, .)` on `grid`. `lambda = 0` starts from `(1, 0)`.
pub fn jost(
    spec: &PotentialSpec,
    grid: &Grid,
    lambda: f64,
    side: Side,
    opts: &SpectralOptions,
) -> Result<JostSolution> {
    JostIntegrator::new(spec, grid, opts)?.solve(lambda, side)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct WronskianEstimate {
    /// Median of the pointwise Wronskian over the central 80% of the grid.
    pub value: Complex64,
    /// Standard deviation of the pointwise Wronskian over the same window.
    pub spread: f64,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// `W = f_+ f_-' - f_- f_+'`, which is independent of `x` for exact solutions.
pub fn wronskian(
    plus: &JostSolution,
    minus: &JostSolution,
    opts: &SpectralOptions,
) -> Result<WronskianEstimate> {
    if plus.grid != minus.grid {
        return Err(Error::GridMismatch);
    }
    if plus.lambda != minus.lambda {
        return Err(Error::InvalidParameter(format!(
            "Wronskian of solutions at different frequencies {} and {}",
            plus.lambda, minus.lambda
        )));
    }
    let n = plus.grid.len();
    let (lo, hi) = (n / 10, n - n / 10);
    let pointwise: Vec<Complex64> = (lo..hi)
        .map(|j| plus.f[j] * minus.df[j] - minus.f[j] * plus.df[j])
        .collect();
    let mut re: Vec<f64> = pointwise.iter().map(|z| z.re).collect();
    let mut im: Vec<f64> = pointwise.iter().map(|z| z.im).collect();
    let value = Complex64::new(median(&mut re), median(&mut im));
    let mean = pointwise.iter().sum::<Complex64>() / pointwise.len() as f64;
    let spread = (pointwise.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>()
        / pointwise.len() as f64)
        .sqrt();
    if spread > opts.wronskian_tol * value.norm().max(1.0) {
        return Err(Error::Accuracy(format!(
            "Wronskian varies across the grid (spread {spread:e}, |W| = {:e})",
            value.norm()
        )));
    }
    Ok(WronskianEstimate { value, spread })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ResonanceVerdict {
    pub resonant: bool,
    /// `|W(0)|` on the supplied grid.
    pub w0: f64,
    /// `|W(0)|` on the grid with doubled extent and the same spacing.
    pub w0_doubled: f64,
    /// Both grids agree on the verdict.
    pub stable: bool,
}

/// `W(0) = 0` test with a domain-doubling consistency check.
pub fn detect_resonance(
    spec: &PotentialSpec,
    grid: &Grid,
    opts: &SpectralOptions,
) -> Result<ResonanceVerdict> {
    let w0 = JostIntegrator::new(spec, grid, opts)?.wronskian(0.0, opts)?.value.norm();
    let doubled = grid.doubled_domain();
    let w0_doubled =
        JostIntegrator::new(spec, &doubled, opts)?.wronskian(0.0, opts)?.value.norm();
    let first = w0 < opts.resonance_eps;
    let second = w0_doubled < opts.resonance_eps;
    Ok(ResonanceVerdict { resonant: first && second, w0, w0_doubled, stable: first == second })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ScatteringCoefficients {
    pub lambda: f64,
    /// `T = -2 i lambda / W(lambda)`
    pub t: Complex64,
    pub r: Complex64,
    /// `T` from decomposing `f_+` into plane waves at the left edge.
    pub t_matching: Complex64,
    pub wronskian: Complex64,
    pub wronskian_spread: f64,
    pub unitarity_defect: f64,
    /// Born-level size of the potential tail beyond the grid,
    /// `int_{|x|>X} |V| / lambda`; the coefficients are exact for `V`
    /// truncated to the grid, and differ from those of `V` by about this.
    pub truncation_estimate: f64,
}

pub fn scattering_coefficients(
    spec: &PotentialSpec,
    grid: &Grid,
    lambda: f64,
    opts: &SpectralOptions,
) -> Result<ScatteringCoefficients> {
    JostIntegrator::new(spec, grid, opts)?.scattering(lambda, opts)
}

/// Coefficients over a frequency list, computed in parallel.
pub fn scattering_table(
    spec: &PotentialSpec,
    grid: &Grid,
    lambdas: &[f64],
    opts: &SpectralOptions,
) -> Result<Vec<ScatteringCoefficients>> {
    let integrator = JostIntegrator::new(spec, grid, opts)?;
    lambdas.par_iter().map(|&l| integrator.scattering(l, opts)).collect()
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Clone, Debug)]
pub struct BoundState {
    /// Negative eigenvalue `-lambda_bs`.
    pub energy: f64,
    /// Real, `L^2`-normalised, positive at its peak.
    pub phi: Field,
}

impl BoundState {
    /// `lambda_bs = -energy > 0`.
    pub fn decay_rate(&self) -> f64 {
        -self.energy
    }

    /// `||H phi - E phi||_{L^2}` with the spectral Laplacian, i.e. the
    /// defect against the continuum operator rather than the matrix that
    /// produced `phi`.
    pub fn eigen_residual(&self, spec: &PotentialSpec) -> f64 {
        let d2 = derivative(&derivative(&self.phi));
        let grid = *self.phi.grid();
        let values = self
            .phi
            .values()
            .iter()
            .zip(d2.values())
            .zip(grid.points())
            .map(|((p, dd), x)| -0.5 * dd + (spec.value(x) - self.energy) * p)
            .collect();
        l2_norm(&Field::new(grid, values).expect("grid length"))
    }
}

/// Symmetric tridiagonal matrix: `diag[j]`, constant off-diagonal `off`.
struct Tridiagonal {
    diag: Vec<f64>,
    off: f64,
}

impl Tridiagonal {
    fn for_hamiltonian(potential: &[f64], dx: f64) -> Self {
        let kinetic = 1.0 / (dx * dx);
        Self {
            diag: potential.iter().map(|v| kinetic + v).collect(),
            off: -0.5 * kinetic,
        }
    }

    /// Number of eigenvalues strictly below `sigma` (Sturm count).
    fn count_below(&self, sigma: f64) -> usize {
        let b2 = self.off * self.off;
        let mut count = 0;
        let mut d = 1.0;
        for (i, &a) in self.diag.iter().enumerate() {
            d = if i == 0 { a - sigma } else { a - sigma - b2 / d };
            if d == 0.0 {
                d = -f64::EPSILON * (a.abs() + self.off.abs()).max(f64::MIN_POSITIVE);
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// `index`-th smallest eigenvalue by bisection in `[lo, hi]`.
    fn eigenvalue(&self, index: usize, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > index {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Solves `(T - sigma) x = rhs` by the Thomas algorithm.
    fn solve_shifted(&self, sigma: f64, rhs: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        let b = self.off;
        let mut c_prime = vec![0.0; n];
        let mut d_prime = vec![0.0; n];
        let tiny = 1e-300;
        let mut denom = self.diag[0] - sigma;
        if denom.abs() < tiny {
            denom = tiny;
        }
        c_prime[0] = b / denom;
        d_prime[0] = rhs[0] / denom;
        for i in 1..n {
            let mut denom = self.diag[i] - sigma - b * c_prime[i - 1];
            if denom.abs() < tiny {
                denom = tiny;
            }
            c_prime[i] = b / denom;
            d_prime[i] = (rhs[i] - b * d_prime[i - 1]) / denom;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = d_prime[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = d_prime[i] - c_prime[i] * x[i + 1];
        }
        x
    }

    fn eigenvector(&self, eigenvalue: f64) -> Vec<f64> {
        let n = self.diag.len();
        // Just below the eigenvalue: for the ground state the shifted matrix
        // stays positive definite and the unpivoted solve is stable.
        let sigma = eigenvalue - 1e-12 * eigenvalue.abs().max(1.0);
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 1e-3 * (i % 7) as f64).collect();
        for _ in 0..4 {
            v = self.solve_shifted(sigma, &v);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

fn bound_states_on(spec: &PotentialSpec, grid: &Grid, opts: &SpectralOptions) -> Vec<BoundState> {
    let sampled = sample_potential(spec, grid);
    let matrix = Tridiagonal::for_hamiltonian(sampled.values(), grid.dx());
    let threshold = -opts.negative_eps;
    let count = matrix.count_below(threshold);
    let floor = sampled.values().iter().fold(0.0f64, |m, &v| m.min(v)) - 1.0;
    let dx = grid.dx();
    (0..count)
        .map(|index| {
            let energy = matrix.eigenvalue(index, floor, threshold);
            let mut vector = matrix.eigenvector(energy);
            let peak = vector
                .iter()
                .copied()
                .max_by(|a, b| a.abs().total_cmp(&b.abs()))
                .unwrap_or(1.0);
            let norm = (dx * vector.iter().map(|x| x * x).sum::<f64>()).sqrt();
            let factor = peak.signum() / norm;
            vector.iter_mut().for_each(|x| *x *= factor);
            let values = vector.into_iter().map(|x| Complex64::new(x, 0.0)).collect();
            BoundState { energy, phi: Field::new(*grid, values).expect("grid length") }
        })
        .collect()
}

/// All eigenvalues of `H` below `-negative_eps`, ascending, with
/// normalised eigenfunctions.
///
/// With `opts.refinement_check` the energies are recomputed on the grid
/// with half the spacing and must move by at most `opts.refinement_tol`.
pub fn bound_states(
    spec: &PotentialSpec,
    grid: &Grid,
    opts: &SpectralOptions,
) -> Result<Vec<BoundState>> {
    spec.validate()?;
    let states = bound_states_on(spec, grid, opts);
    if opts.refinement_check {
        let fine = bound_states_on(spec, &grid.refined(), opts);
        if fine.len() != states.len() {
            return Err(Error::Accuracy(format!(
                "bound-state count changes from {} to {} under refinement",
                states.len(),
                fine.len()
            )));
        }
        for (a, b) in states.iter().zip(&fine) {
            let shift = (a.energy - b.energy).abs();
            if shift > opts.refinement_tol {
                return Err(Error::Accuracy(format!(
                    "eigenvalue {} shifts by {shift:e} under refinement",
                    a.energy
                )));
            }
        }
    }
    Ok(states)
}

/// Bound states sampled on `grid` for use alongside the split-step
/// propagator.
///
/// The eigenproblem is solved on a dyadic refinement of `grid` with
/// spacing at most [`FINE_SPACING`], the eigenfunction is subsampled back
/// onto `grid` and renormalised there, and the energy is replaced by the
/// Rayleigh quotient of the spectral Hamiltonian on `grid`.
pub fn bound_states_on_grid(spec: &PotentialSpec, grid: &Grid) -> Result<Vec<BoundState>> {
    spec.validate()?;
    let mut fine = *grid;
    let mut factor = 1;
    while fine.dx() > FINE_SPACING {
        fine = fine.refined();
        factor *= 2;
    }
    let opts = SpectralOptions { refinement_check: false, ..SpectralOptions::default() };
    let sampled = sample_potential(spec, grid);
    bound_states_on(spec, &fine, &opts)
        .into_iter()
        .map(|state| {
            let values: Vec<Complex64> = state.phi.values().iter().step_by(factor).copied().collect();
            let phi = Field::new(*grid, values)?;
            let phi = phi.scaled((1.0 / l2_norm(&phi)).into());
            let dphi = derivative(&phi);
            let kinetic = 0.5 * dphi.mass();
            let potential: f64 = grid.dx()
                * phi.values().iter().zip(sampled.values()).map(|(p, v)| v * p.norm_sqr()).sum::<f64>();
            Ok(BoundState { energy: kinetic + potential, phi })
        })
        .collect()
}

/// Grid spacing used by [`bound_states_on_grid`] for the eigensolve.
pub const FINE_SPACING: f64 = 1.0 / 64.0;

#[derive(Clone, Debug)]
pub struct Projection {
    /// `<field, phi>`
    pub amplitude: Complex64,
    /// `field - amplitude * phi`
    pub continuum: Field,
}

/// Splits a field into its bound-state and continuous-spectrum parts.
pub fn project(field: &Field, bound_state: Option<&BoundState>) -> Result<Projection> {
    match bound_state {
        None => Ok(Projection { amplitude: Complex64::new(0.0, 0.0), continuum: field.clone() }),
        Some(state) => {
            let amplitude = inner_product(field, &state.phi)?;
            let continuum = field.axpy(-amplitude, &state.phi)?;
            Ok(Projection { amplitude, continuum })
        }
    }
}

/// Everything the `spectral` command reports about one potential.
#[derive(Clone, Debug, Serialize)]
pub struct SpectralReport {
    pub potential: PotentialSpec,
    pub label: String,
    pub grid: Grid,
    pub options: SpectralOptions,
    pub bound_states: Vec<BoundStateSummary>,
    pub resonance: ResonanceVerdict,
    pub admissibility: crate::potentials::AdmissibilityReport,
    pub coefficients: Vec<ScatteringCoefficients>,
    pub max_unitarity_defect: f64,
    /// `sup lambda |R(lambda)|` and `sup lambda |T(lambda) - 1|` over the table.
    pub reflection_scale: f64,
    pub transmission_scale: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundStateSummary {
    pub energy: f64,
    pub eigen_residual: f64,
}

pub fn spectral_report(
    spec: &PotentialSpec,
    grid: &Grid,
    lambdas: &[f64],
    opts: &SpectralOptions,
) -> Result<SpectralReport> {
    let admissibility = crate::potentials::check_admissibility(spec, grid, opts)?;
    let states = bound_states(spec, grid, opts)?;
    let bound_states = states
        .iter()
        .map(|s| BoundStateSummary { energy: s.energy, eigen_residual: s.eigen_residual(spec) })
        .collect();
    let resonance = detect_resonance(spec, grid, opts)?;
    let coefficients = scattering_table(spec, grid, lambdas, opts)?;
    let max_unitarity_defect = coefficients.iter().fold(0.0f64, |m, c| m.max(c.unitarity_defect));
    let reflection_scale =
        coefficients.iter().fold(0.0f64, |m, c| m.max(c.lambda * c.r.norm()));
    let transmission_scale =
        coefficients.iter().fold(0.0f64, |m, c| m.max(c.lambda * (c.t - 1.0).norm()));
    Ok(SpectralReport {
        potential: *spec,
        label: spec.label(),
        grid: *grid,
        options: *opts,
        bound_states,
        resonance,
        admissibility,
        coefficients,
        max_unitarity_defect,
        reflection_scale,
        transmission_scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid() -> Grid {
        Grid::symmetric(20.0, 1 << 13).unwrap()
    }

    #[test]
    fn free_jost_solution_is_a_plane_wave() {
        let g = small_grid();
        let opts = SpectralOptions::default();
        let sol = jost(&PotentialSpec::Zero, &g, 2.0, Side::Plus, &opts).unwrap();
        for (j, x) in g.points().enumerate() {
            let exact = Complex64::new(0.0, 2.0 * x).exp();
            assert!((sol.f[j] - exact).norm() < 1e-7, "x = {x}");
        }
        assert!(sol.boundary_defect() < 1e-8);
        assert!(sol.ode_residual(&PotentialSpec::Zero) < 1e-6);
    }

    #[test]
    fn zero_frequency_free_solution_is_constant() {
        let g = small_grid();
        let opts = SpectralOptions::default();
        for side in [Side::Plus, Side::Minus] {
            let sol = jost(&PotentialSpec::Zero, &g, 0.0, side, &opts).unwrap();
            assert!(sol.f.iter().all(|z| *z == Complex64::new(1.0, 0.0)));
            assert!(sol.df.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
        }
    }

    #[test]
    fn free_wronskian() {
        let g = small_grid();
        let opts = SpectralOptions::default();
        let it = JostIntegrator::new(&PotentialSpec::Zero, &g, &opts).unwrap();
        let w = it.wronskian(3.0, &opts).unwrap();
        assert!((w.value - Complex64::new(0.0, -6.0)).norm() < 1e-10);
        let w0 = it.wronskian(0.0, &opts).unwrap();
        assert_eq!(w0.value.norm(), 0.0);
    }

    #[test]
    fn poschl_teller_zero_energy_wronskian_vanishes() {
        let g = small_grid();
        let opts = SpectralOptions::default();
        let spec = PotentialSpec::Sech2Scaled { beta: 1.0, center: 0.0 };
        let it = JostIntegrator::new(&spec, &g, &opts).unwrap();
        let w0 = it.wronskian(0.0, &opts).unwrap();
        assert!(w0.value.norm() < opts.resonance_eps);
        // Zero-energy Jost solutions are +-tanh x.
        let plus = it.solve(0.0, Side::Plus).unwrap();
        for (j, x) in g.points().enumerate().step_by(97) {
            assert!((plus.f[j].re - x.tanh()).abs() < 1e-8);
        }
    }

    #[test]
    fn edge_decay_is_enforced() {
        let g = Grid::symmetric(3.0, 256).unwrap();
        let spec = PotentialSpec::Algebraic { q: 1.0, s: 3.0, center: 0.0 };
        let err = jost(&spec, &g, 1.0, Side::Plus, &SpectralOptions::default()).unwrap_err();
        assert!(matches!(err, Error::EdgeDecay { .. }));
    }

    #[test]
    fn mismatched_wronskian_inputs() {
        let g = small_grid();
        let opts = SpectralOptions::default();
        let a = jost(&PotentialSpec::Zero, &g, 1.0, Side::Plus, &opts).unwrap();
        let b = jost(&PotentialSpec::Zero, &g, 2.0, Side::Minus, &opts).unwrap();
        assert!(wronskian(&a, &b, &opts).is_err());
    }

    #[test]
    fn free_line_scattering() {
        let c = scattering_coefficients(
            &PotentialSpec::Zero,
            &small_grid(),
            1.7,
            &SpectralOptions::default(),
        )
        .unwrap();
        assert!((c.t - 1.0).norm() < 1e-12);
        assert!(c.r.norm() < 1e-12);
    }

    #[test]
    fn scattering_rejects_nonpositive_frequency() {
        let err = scattering_coefficients(
            &PotentialSpec::Zero,
            &small_grid(),
            0.0,
            &SpectralOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }

    #[test]
    fn numerical_wavenumber_is_fourth_order() {
        let opts = SpectralOptions::default();
        for n in [1usize << 10, 1 << 11] {
            let g = Grid::symmetric(20.0, n).unwrap();
            let it = JostIntegrator::new(&PotentialSpec::Zero, &g, &opts).unwrap();
            let h = g.dx();
            let lambda = 3.0;
            let k = it.numerical_wavenumber(lambda);
            // (2,2) Padé phase lag: (lambda h)^5 / 720 per step.
            let expected = lambda * (lambda * h).powi(4) / 720.0;
            assert!(k < lambda);
            assert!(((lambda - k) / expected - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn gl2_step_is_area_preserving() {
        for (q1, q2, h) in [(-4.0, -3.5, 0.01), (2.0, 1.0, -0.3), (-400.0, -399.0, 0.001)] {
            let m = gl2_step(q1, q2, h);
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            assert!((det - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn forward_and_backward_steps_are_inverse() {
        let spec = PotentialSpec::Gaussian { q: 2.0, sigma: 1.0, center: 0.3 };
        let g = small_grid();
        let it = JostIntegrator::new(&spec, &g, &SpectralOptions::default()).unwrap();
        let j = g.len() / 2 + 17;
        let f = it.propagator(j, 9.0, false);
        let b = it.propagator(j, 9.0, true);
        for r in 0..2 {
            for c in 0..2 {
                let prod: f64 = (0..2).map(|k| b[r][k] * f[k][c]).sum();
                let expect = if r == c { 1.0 } else { 0.0 };
                assert!((prod - expect).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn free_operator_has_no_bound_states() {
        let g = Grid::symmetric(20.0, 1 << 12).unwrap();
        let states = bound_states(&PotentialSpec::Zero, &g, &SpectralOptions::default()).unwrap();
        assert!(states.is_empty());
    }

    #[test]
    fn tridiagonal_count_matches_known_spectrum() {
        // Free Dirichlet Laplacian on n points: eigenvalues (2/dx^2) sin^2(k pi / (2(n+1))) / 1.
        let n = 50;
        let dx = 0.1;
        let m = Tridiagonal::for_hamiltonian(&vec![0.0; n], dx);
        let exact: Vec<f64> = (1..=n)
            .map(|k| {
                let s = (k as f64 * std::f64::consts::PI / (2.0 * (n as f64 + 1.0))).sin();
                2.0 * s * s / (dx * dx)
            })
            .collect();
        for (i, &e) in exact.iter().enumerate() {
            let found = m.eigenvalue(i, -1.0, 500.0);
            assert!((found - e).abs() < 1e-9, "index {i}: {found} vs {e}");
        }
    }

    #[test]
    fn projection_of_bound_state_onto_itself() {
        let g = Grid::symmetric(20.0, 1 << 12).unwrap();
        let spec = PotentialSpec::Sech2Scaled { beta: 1.0, center: 0.0 };
        let mut opts = SpectralOptions::default();
        opts.refinement_check = false;
        let states = bound_states(&spec, &g, &opts).unwrap();
        assert_eq!(states.len(), 1);
        let p = project(&states[0].phi, Some(&states[0])).unwrap();
        assert!((p.amplitude - 1.0).norm() < 1e-10);
        assert!(l2_norm(&p.continuum) < 1e-10);

        let odd = Field::from_real_fn(g, |x| x.tanh() / x.cosh());
        let p = project(&odd, Some(&states[0])).unwrap();
        assert!(p.amplitude.norm() < 1e-10);

        let none = project(&odd, None).unwrap();
        assert_eq!(none.amplitude, Complex64::new(0.0, 0.0));
        assert_eq!(none.continuum, odd);
    }

    #[test]
    fn log_space_endpoints() {
        let l = log_space(0.5, 20.0, 50);
        assert_eq!(l.len(), 50);
        assert!((l[0] - 0.5).abs() < 1e-15);
        assert!((l[49] - 20.0).abs() < 1e-12);
        assert!(l.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn bound_state_on_coarse_grid() {
        let spec = PotentialSpec::Sech2Scaled { beta: 0.5, center: 0.0 };
        let grid = Grid::symmetric(40.0, 512).unwrap();
        let states = bound_states_on_grid(&spec, &grid).unwrap();
        assert_eq!(states.len(), 1);
        let kappa = (5f64.sqrt() - 1.0) / 2.0;
        assert!((states[0].energy + kappa * kappa / 2.0).abs() < 1e-8, "{}", states[0].energy);
        assert_eq!(states[0].phi.grid(), &grid);
        assert!((l2_norm(&states[0].phi) - 1.0).abs() < 1e-14);
    }
}
