//! Strang split-step Fourier integration of
//! `i u_t = -u_xx/2 + V u - |u|^2 u` and its observers.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{derivative, inner_product, Field, Fourier, Grid};
use crate::potentials::SampledPotential;

/// Largest soliton modulus tolerated at either grid edge.
pub const SUPPORT_TOL: f64 = 1e-12;

/// Traveling-wave parameters. `mu` rescales amplitude and width together.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonParams {
    pub v: f64,
    pub x0: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
}

fn default_mu() -> f64 {
    1.0
}

impl SolitonParams {
    pub fn new(v: f64, x0: f64) -> Self {
        Self { v, x0, mu: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.v.is_finite() || !self.x0.is_finite() {
            return Err(Error::InvalidParameter("soliton velocity and center must be finite".into()));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("soliton scale must be positive, got {}", self.mu)));
        }
        Ok(())
    }

    pub fn center(&self, t: f64) -> f64 {
        self.x0 + self.v * t
    }

    pub fn value(&self, t: f64, x: f64) -> Complex64 {
        let (v, mu) = (self.v, self.mu);
        let phase = x * v + 0.5 * mu * mu * t - 0.5 * t * v * v;
        let y = mu * (x - self.center(t));
        // sech without overflow in cosh
        let amp = mu * 2.0 * (-y.abs()).exp() / (1.0 + (-2.0 * y.abs()).exp());
        Complex64::from_polar(amp, phase)
    }

    /// Smallest `k_max` the resolution rule accepts: `4 (|v| + 3 mu)`.
    pub fn required_k_max(&self) -> f64 {
        4.0 * (self.v.abs() + 3.0 * self.mu)
    }

    /// Largest step with every pointwise phase under `cap` radians:
    /// `cap / (v^2/2 + ||V||_inf + mu^2)`.
    pub fn max_dt(&self, v_sup: f64, cap: f64) -> f64 {
        cap / (0.5 * self.v * self.v + v_sup + self.mu * self.mu)
    }

    /// Modulus at the farther-reaching grid edge.
    pub fn edge_modulus(&self, t: f64, grid: &Grid) -> f64 {
        self.value(t, grid.x_min()).norm().max(self.value(t, grid.x_max()).norm())
    }
}

/// Samples of the exact traveling wave at time `t`.
pub fn soliton(params: &SolitonParams, t: f64, grid: &Grid) -> Result<Field> {
    params.validate()?;
    let edge = params.edge_modulus(t, grid);
    if edge > SUPPORT_TOL {
        return Err(Error::InvalidParameter(format!(
            "soliton does not fit the grid at t = {t}: edge modulus {edge:e}"
        )));
    }
    Ok(sample_soliton(params, t, grid))
}

pub(crate) fn sample_soliton(params: &SolitonParams, t: f64, grid: &Grid) -> Field {
    Field::from_fn(*grid, |x| params.value(t, x))
}

/// Checks the resolution rule `k_max >= 4 (|v| + 3 mu)`.
pub fn check_resolution(params: &SolitonParams, grid: &Grid) -> Result<()> {
    let need = params.required_k_max();
    if grid.k_max() < need {
        return Err(Error::InvalidConfig(format!(
            "grid resolves |k| <= {:.3} but the boosted soliton needs {need:.3}",
            grid.k_max()
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub dt: f64,
    /// Observe every `cadence` steps.
    pub cadence: usize,
    /// Width of each edge strip as a fraction of the domain.
    pub edge_fraction: f64,
    /// Edge strips may hold at most this fraction of the mass.
    pub edge_mass_tol: f64,
    /// Largest kinetic phase `dt v^2 / 2` per step, in radians.
    pub phase_cap: f64,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self { dt: 1e-3, cadence: 10, edge_fraction: 0.05, edge_mass_tol: 1e-8, phase_cap: 0.1 }
    }
}

impl StepperConfig {
    pub fn with_dt(dt: f64) -> Self {
        Self { dt, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("time step must be positive, got {}", self.dt)));
        }
        if self.cadence == 0 {
            return Err(Error::InvalidConfig("observer cadence must be at least 1".into()));
        }
        if !(self.edge_fraction > 0.0 && self.edge_fraction < 0.5) {
            return Err(Error::InvalidConfig("edge fraction must lie in (0, 0.5)".into()));
        }
        if !(self.edge_mass_tol > 0.0) || !(self.phase_cap > 0.0) {
            return Err(Error::InvalidConfig("thresholds must be positive".into()));
        }
        Ok(())
    }

    /// Rejects steps whose carrier phase `dt v^2/2` exceeds the cap.
    pub fn check_phase_resolution(&self, v: f64) -> Result<()> {
        let phase = self.dt * v * v / 2.0;
        if phase > self.phase_cap * (1.0 + 1e-12) {
            return Err(Error::InvalidConfig(format!(
                "dt = {} turns the carrier of v = {v} by {phase:.4} rad per step; \
                 the cap is {} rad, so dt must not exceed {:.6}",
                self.dt,
                self.phase_cap,
                2.0 * self.phase_cap / (v * v)
            )));
        }
        Ok(())
    }
}

/// One Strang integrator bound to a grid and a sampled potential.
pub struct SplitStepper<'a> {
    potential: &'a SampledPotential,
    fourier: Fourier,
    k2: Vec<f64>,
    cached_dt: f64,
    half: Vec<Complex64>,
    full: Vec<Complex64>,
}

impl<'a> SplitStepper<'a> {
    pub fn new(potential: &'a SampledPotential) -> Self {
        let grid = potential.grid();
        let k2 = grid.wavenumbers().into_iter().map(|k| k * k).collect();
        Self {
            potential,
            fourier: Fourier::new(grid.len()),
            k2,
            cached_dt: f64::NAN,
            half: Vec::new(),
            full: Vec::new(),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.potential.grid()
    }

    fn prepare(&mut self, dt: f64) {
        if dt == self.cached_dt {
            return;
        }
        self.half = self.k2.iter().map(|k2| Complex64::from_polar(1.0, -0.25 * dt * k2)).collect();
        self.full = self.half.iter().map(|h| h * h).collect();
        self.cached_dt = dt;
    }

    fn check(&self, u: &Field) -> Result<()> {
        if u.grid() != self.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    fn pointwise(&self, data: &mut [Complex64], dt: f64) -> bool {
        let mut finite = true;
        for (z, v) in data.iter_mut().zip(self.potential.values()) {
            let rho = z.norm_sqr();
            finite &= rho.is_finite();
            *z *= Complex64::from_polar(1.0, -dt * (v - rho));
        }
        finite
    }

    /// One Strang step of signed length `dt`; negative `dt` runs the flow
    /// backwards and inverts a forward step exactly.
    pub fn step(&mut self, u: &mut Field, dt: f64) -> Result<()> {
        self.check(u)?;
        self.prepare(dt);
        let data = u.values_mut();
        self.fourier.forward(data);
        mul(data, &self.half);
        self.fourier.inverse(data);
        let finite = self.pointwise(data, dt);
        self.fourier.forward(data);
        mul(data, &self.half);
        self.fourier.inverse(data);
        if !finite || !u.is_finite() {
            return Err(Error::NumericalBreakdown { step: 1 });
        }
        Ok(())
    }

    /// `steps` Strang steps with the interior kinetic half-steps fused.
    /// Breakdowns report the step index counted from `first_step`.
    pub fn advance(&mut self, u: &mut Field, dt: f64, steps: usize, first_step: usize) -> Result<()> {
        self.check(u)?;
        if steps == 0 {
            return Ok(());
        }
        self.prepare(dt);
        let data = u.values_mut();
        self.fourier.forward(data);
        mul(data, &self.half);
        for s in 0..steps {
            self.fourier.inverse(data);
            if !self.pointwise(data, dt) {
                return Err(Error::NumericalBreakdown { step: first_step + s });
            }
            self.fourier.forward(data);
            mul(data, if s + 1 == steps { &self.half } else { &self.full });
        }
        self.fourier.inverse(data);
        if !u.is_finite() {
            return Err(Error::NumericalBreakdown { step: first_step + steps - 1 });
        }
        Ok(())
    }
}

fn mul(data: &mut [Complex64], factors: &[Complex64]) {
    data.iter_mut().zip(factors).for_each(|(z, f)| *z *= f);
}

/// Convenience wrapper around a single [`SplitStepper::step`].
pub fn step(u: &Field, potential: &SampledPotential, dt: f64) -> Result<Field> {
    let mut out = u.clone();
    SplitStepper::new(potential).step(&mut out, dt)?;
    Ok(out)
}

/// `E = int |u_x|^2/4 + V|u|^2/2 - |u|^4/4`, derivative taken spectrally.
pub fn energy(u: &Field, potential: &SampledPotential) -> f64 {
    energy_density_sum(u, potential, |v, rho| 0.5 * v * rho)
}

/// The same functional with `|V u|^2 / 2` in place of `V |u|^2 / 2`.
/// Not conserved; kept so the conservation check has a known-bad input.
pub fn squared_potential_energy(u: &Field, potential: &SampledPotential) -> f64 {
    energy_density_sum(u, potential, |v, rho| 0.5 * v * v * rho)
}

fn energy_density_sum(u: &Field, potential: &SampledPotential, pot: impl Fn(f64, f64) -> f64) -> f64 {
    let du = derivative(u);
    let dx = u.grid().dx();
    let sum: f64 = u
        .values()
        .iter()
        .zip(du.values())
        .zip(potential.values())
        .map(|((z, dz), &v)| {
            let rho = z.norm_sqr();
            0.25 * dz.norm_sqr() + pot(v, rho) - 0.25 * rho * rho
        })
        .sum();
    dx * sum
}

/// What to record at each observation.
#[derive(Clone, Copy, Default)]
pub struct Observers<'a> {
    /// Exact traveling wave to measure `||u - u1||` against.
    pub reference: Option<SolitonParams>,
    /// Normalised bound state for `a = <u, phi>`.
    pub bound_state: Option<&'a Field>,
    /// Use the non-conserved energy variant.
    pub squared_potential_energy: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ObserverSeries {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub energy: Vec<f64>,
    /// Present when a reference soliton was supplied.
    pub err_l2: Option<Vec<f64>>,
    /// Zero when there is no bound state.
    pub a_abs: Vec<f64>,
    pub edge_mass: Vec<f64>,
}

impl ObserverSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_error(&self) -> Option<f64> {
        self.err_l2.as_ref().map(|e| e.iter().fold(0.0f64, |m, &x| m.max(x)))
    }

    /// `max |M(t) - M(0)| / M(0)`, zero for the zero field.
    pub fn mass_drift(&self) -> f64 {
        relative_drift(&self.mass)
    }

    /// `max |E(t) - E(0)|`.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energy.first().copied().unwrap_or(0.0);
        self.energy.iter().fold(0.0, |m, e| m.max((e - e0).abs()))
    }

    /// Peak of `err_l2` over observations with `lo <= t <= hi`.
    pub fn peak_error_between(&self, lo: f64, hi: f64) -> Option<f64> {
        let err = self.err_l2.as_ref()?;
        let mut peak = None;
        for (&t, &e) in self.times.iter().zip(err) {
            if t >= lo && t <= hi {
                peak = Some(peak.map_or(e, |p: f64| p.max(e)));
            }
        }
        peak
    }

    /// CSV with columns `t,err_l2,mass,energy,a_abs,edge_mass`; `err_l2`
    /// is left empty when no reference was tracked.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,err_l2,mass,energy,a_abs,edge_mass")?;
        for i in 0..self.len() {
            let err = self.err_l2.as_ref().map(|e| format!("{:e}", e[i])).unwrap_or_default();
            writeln!(
                out,
                "{},{},{:e},{:e},{:e},{:e}",
                self.times[i], err, self.mass[i], self.energy[i], self.a_abs[i], self.edge_mass[i]
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

fn relative_drift(values: &[f64]) -> f64 {
    let m0 = match values.first() {
        Some(&m) if m > 0.0 => m,
        _ => return 0.0,
    };
    values.iter().fold(0.0, |d, m| d.max((m - m0).abs() / m0))
}

/// Samples of `a(t) = <u, phi>` and `n(t) = <|u|^2 u, phi>` at uniform cadence.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BoundModeTrace {
    pub times: Vec<f64>,
    pub a: Vec<Complex64>,
    pub nonlinear: Vec<Complex64>,
}

impl BoundModeTrace {
    pub fn push(&mut self, t: f64, u: &Field, phi: &Field) -> Result<()> {
        let a = inner_product(u, phi)?;
        let cubic = Field::new(*u.grid(), u.values().iter().map(|z| z * z.norm_sqr()).collect())?;
        let n = inner_product(&cubic, phi)?;
        self.times.push(t);
        self.a.push(a);
        self.nonlinear.push(n);
        Ok(())
    }

    pub fn from_snapshots(times: &[f64], snapshots: &[Field], phi: &Field) -> Result<Self> {
        if times.len() != snapshots.len() {
            return Err(Error::InvalidParameter("one time per snapshot required".into()));
        }
        let mut trace = Self::default();
        for (&t, u) in times.iter().zip(snapshots) {
            trace.push(t, u, phi)?;
        }
        Ok(trace)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModeResidual {
    /// `max_n |i a'_n + lambda_bs a_n + <|u|^2 u, phi>_n| / max |a|`,
    /// `a'` by central differences.
    pub residual: f64,
    /// `cadence^2 max|a'''| / 3` relative to `max |a|`, `a'''` from third
    /// differences of the samples.
    pub floor: f64,
    pub cadence: f64,
}

impl ModeResidual {
    pub fn ratio(&self) -> f64 {
        if self.floor > 0.0 {
            self.residual / self.floor
        } else if self.residual == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Residual of the amplitude equation `i a' = -lambda_bs a - <|u|^2 u, phi>`
/// along a recorded trace.
pub fn bound_mode_residual(trace: &BoundModeTrace, lambda_bs: f64) -> Result<ModeResidual> {
    let n = trace.times.len();
    if n < 3 {
        return Err(Error::InvalidParameter(format!("need at least 3 snapshots, got {n}")));
    }
    let h = trace.times[1] - trace.times[0];
    let uniform = trace
        .times
        .windows(2)
        .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs().max(1e-300));
    if !(h > 0.0) || !uniform {
        return Err(Error::InvalidParameter("snapshots must be at uniform cadence".into()));
    }
    let a = &trace.a;
    let scale = a.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if scale == 0.0 {
        return Ok(ModeResidual { residual: 0.0, floor: 0.0, cadence: h });
    }
    let i = Complex64::i();
    let residual = (1..n - 1)
        .map(|j| {
            let da = (a[j + 1] - a[j - 1]) / (2.0 * h);
            (i * da + lambda_bs * a[j] + trace.nonlinear[j]).norm()
        })
        .fold(0.0, f64::max);
    let third = (0..n.saturating_sub(3))
        .map(|j| ((a[j + 3] - 3.0 * a[j + 2] + 3.0 * a[j + 1] - a[j]) / (h * h * h)).norm())
        .fold(0.0, f64::max);
    Ok(ModeResidual { residual: residual / scale, floor: h * h * third / 3.0 / scale, cadence: h })
}

/// Outcome of [`evolve`].
#[derive(Clone, Debug)]
pub struct Evolution {
    pub field: Field,
    pub series: ObserverSeries,
    pub trace: Option<BoundModeTrace>,
    pub steps: usize,
    pub dt: f64,
    /// First observation `(t, edge mass fraction)` above the tolerance.
    pub edge_violation: Option<(f64, f64)>,
}

impl Evolution {
    pub fn is_valid(&self) -> bool {
        self.edge_violation.is_none()
    }
}

/// Integrates from `t_span.0` to `t_span.1`.
///
/// The step is shrunk from `config.dt` so that a whole number of
/// observation blocks of `config.cadence` steps fills the span exactly;
/// observations fall at `t_span.0` and after every block.
pub fn evolve(
    u0: &Field,
    potential: &SampledPotential,
    t_span: (f64, f64),
    config: &StepperConfig,
    observers: Observers<'_>,
) -> Result<Evolution> {
    config.validate()?;
    let (t0, t1) = t_span;
    if !(t1 >= t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::InvalidParameter(format!("bad time span [{t0}, {t1}]")));
    }
    if !u0.is_finite() {
        return Err(Error::NumericalBreakdown { step: 0 });
    }
    if let Some(phi) = observers.bound_state {
        if phi.grid() != u0.grid() {
            return Err(Error::GridMismatch);
        }
    }
    if let Some(p) = &observers.reference {
        p.validate()?;
    }
    let span = t1 - t0;
    let block_len = config.dt * config.cadence as f64;
    let blocks = if span == 0.0 { 0 } else { (span / block_len * (1.0 - 1e-12)).ceil() as usize };
    let steps = blocks * config.cadence;
    let dt = if steps == 0 { config.dt } else { span / steps as f64 };

    let mut stepper = SplitStepper::new(potential);
    let mut u = u0.clone();
    let mut series = ObserverSeries {
        err_l2: observers.reference.map(|_| Vec::new()),
        ..Default::default()
    };
    let mut trace = observers.bound_state.map(|_| BoundModeTrace::default());
    let mut edge_violation = None;

    let mut observe = |u: &Field, t: f64, series: &mut ObserverSeries, trace: &mut Option<BoundModeTrace>| -> Result<()> {
        series.times.push(t);
        series.mass.push(u.mass());
        series.energy.push(if observers.squared_potential_energy { squared_potential_energy(u, potential) } else { energy(u, potential) });
        let edge = u.edge_mass_fraction(config.edge_fraction);
        series.edge_mass.push(edge);
        if edge > config.edge_mass_tol && edge_violation.is_none() {
            edge_violation = Some((t, edge));
        }
        if let (Some(p), Some(err)) = (&observers.reference, series.err_l2.as_mut()) {
            let exact = sample_soliton(p, t, u.grid());
            err.push(crate::grid::l2_norm(&u.difference(&exact)?));
        }
        match (observers.bound_state, trace.as_mut()) {
            (Some(phi), Some(tr)) => {
                tr.push(t, u, phi)?;
                series.a_abs.push(tr.a.last().map_or(0.0, |a| a.norm()));
            }
            _ => series.a_abs.push(0.0),
        }
        Ok(())
    };

    observe(&u, t0, &mut series, &mut trace)?;
    for b in 0..blocks {
        stepper.advance(&mut u, dt, config.cadence, b * config.cadence + 1)?;
        let t = if b + 1 == blocks { t1 } else { t0 + ((b + 1) * config.cadence) as f64 * dt };
        observe(&u, t, &mut series, &mut trace)?;
    }
    Ok(Evolution { field: u, series, trace, steps, dt, edge_violation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::l2_norm;
    use crate::potentials::{sample_potential, PotentialSpec};
    use proptest::prelude::*;

    fn zero(grid: &Grid) -> SampledPotential {
        sample_potential(&PotentialSpec::Zero, grid)
    }

    #[test]
    fn soliton_at_origin() {
        let g = Grid::symmetric(40.0, 256).unwrap();
        let p = SolitonParams::new(0.0, 0.0);
        let u = soliton(&p, 0.0, &g).unwrap();
        let j = g.len() / 2;
        assert_eq!(g.x(j), 0.0);
        assert!((u.values()[j] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    proptest! {
        #[test]
        fn soliton_modulus_and_norm(v in -6.0f64..6.0, x0 in -5.0f64..5.0, t in 0.0f64..2.0) {
            let g = Grid::symmetric(64.0, 2048).unwrap();
            let p = SolitonParams::new(v, x0);
            let u = soliton(&p, t, &g).unwrap();
            for (x, z) in g.points().zip(u.values()) {
                let sech = 1.0 / (x - x0 - v * t).cosh();
                prop_assert!((z.norm() - sech).abs() < 1e-14);
            }
            prop_assert!((l2_norm(&u) - 2f64.sqrt()).abs() < 1e-8);
        }
    }

    #[test]
    fn soliton_must_fit() {
        let g = Grid::symmetric(10.0, 256).unwrap();
        assert!(soliton(&SolitonParams::new(0.0, 0.0), 0.0, &g).is_err());
        let bad = SolitonParams { v: 1.0, x0: 0.0, mu: 0.0 };
        assert!(soliton(&bad, 0.0, &Grid::symmetric(64.0, 256).unwrap()).is_err());
    }

    #[test]
    fn zero_stays_zero() {
        let g = Grid::symmetric(20.0, 128).unwrap();
        let pot = sample_potential(&PotentialSpec::Gaussian { q: 2.0, sigma: 1.0, center: 0.0 }, &g);
        let phi = Field::from_real_fn(g, |x| (-x * x).exp());
        let run = evolve(
            &Field::zeros(g),
            &pot,
            (0.0, 1.0),
            &StepperConfig::with_dt(0.01),
            Observers { bound_state: Some(&phi), ..Default::default() },
        )
        .unwrap();
        assert!(run.field.values().iter().all(|z| *z == Complex64::new(0.0, 0.0)));
        for s in [&run.series.mass, &run.series.energy, &run.series.a_abs, &run.series.edge_mass] {
            assert!(s.iter().all(|&x| x == 0.0));
        }
        let r = bound_mode_residual(run.trace.as_ref().unwrap(), 0.3).unwrap();
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn plane_wave_phase_is_exact() {
        let g = Grid::new(0.0, 2.0 * std::f64::consts::PI, 64).unwrap();
        let (k, c, dt) = (3.0, 0.7, 0.01);
        let u = Field::from_fn(g, |x| Complex64::from_polar(c, k * x));
        let out = step(&u, &zero(&g), dt).unwrap();
        let factor = Complex64::from_polar(1.0, -(k * k / 2.0 - c * c) * dt);
        let expected = u.scaled(factor);
        assert!(l2_norm(&out.difference(&expected).unwrap()) < 1e-14);
    }

    #[test]
    fn single_step_local_error_is_third_order() {
        let g = Grid::symmetric(32.0, 1024).unwrap();
        let p = SolitonParams::new(1.0, -2.0);
        let u = soliton(&p, 0.0, &g).unwrap();
        let err = |dt: f64| {
            let out = step(&u, &zero(&g), dt).unwrap();
            l2_norm(&out.difference(&soliton(&p, dt, &g).unwrap()).unwrap())
        };
        let ratio = err(0.02) / err(0.01);
        assert!((ratio - 8.0).abs() < 0.5, "ratio {ratio}");
    }

    #[test]
    fn step_preserves_mass() {
        let g = Grid::symmetric(40.0, 512).unwrap();
        let pot = sample_potential(&PotentialSpec::Algebraic { q: 1.0, s: 3.0, center: 0.0 }, &g);
        let u = soliton(&SolitonParams::new(2.0, -5.0), 0.0, &g).unwrap().scaled(1.5.into());
        let out = step(&u, &pot, 0.01).unwrap();
        assert!((out.mass() - u.mass()).abs() / u.mass() < 1e-13);
    }

    #[test]
    fn backward_step_inverts_forward_step() {
        let g = Grid::symmetric(40.0, 512).unwrap();
        let pot = sample_potential(&PotentialSpec::Gaussian { q: -1.0, sigma: 1.5, center: 0.5 }, &g);
        let u = soliton(&SolitonParams::new(3.0, -3.0), 0.0, &g).unwrap();
        let mut stepper = SplitStepper::new(&pot);
        let mut w = u.clone();
        stepper.step(&mut w, 0.02).unwrap();
        stepper.step(&mut w, -0.02).unwrap();
        let err = l2_norm(&w.difference(&u).unwrap()) / l2_norm(&u);
        assert!(err < 10.0 * f64::EPSILON * (g.len() as f64).log2(), "err {err:e}");
    }

    #[test]
    fn fused_steps_match_single_steps() {
        let g = Grid::symmetric(40.0, 512).unwrap();
        let pot = sample_potential(&PotentialSpec::Algebraic { q: 0.5, s: 3.0, center: 0.0 }, &g);
        let u = soliton(&SolitonParams::new(2.0, -6.0), 0.0, &g).unwrap();
        let mut a = u.clone();
        let mut b = u;
        let mut stepper = SplitStepper::new(&pot);
        for _ in 0..7 {
            stepper.step(&mut a, 0.01).unwrap();
        }
        stepper.advance(&mut b, 0.01, 7, 1).unwrap();
        assert!(l2_norm(&a.difference(&b).unwrap()) < 1e-13);
    }

    #[test]
    fn breakdown_reports_step() {
        let g = Grid::symmetric(10.0, 64).unwrap();
        let mut u = Field::zeros(g);
        u.values_mut()[3] = Complex64::new(f64::NAN, 0.0);
        let pot = zero(&g);
        let mut stepper = SplitStepper::new(&pot);
        match stepper.advance(&mut u, 0.01, 5, 41) {
            Err(Error::NumericalBreakdown { step }) => assert_eq!(step, 41),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sech_energy() {
        let g = Grid::symmetric(40.0, 1024).unwrap();
        let u = Field::from_real_fn(g, |x| 1.0 / x.cosh());
        let e = energy(&u, &zero(&g));
        assert!((e + 1.0 / 6.0).abs() < 1e-6, "E = {e}");
        assert_eq!(energy(&Field::zeros(g), &zero(&g)), 0.0);
    }

    #[test]
    fn energy_variants_differ_only_in_potential_term() {
        let g = Grid::symmetric(40.0, 512).unwrap();
        let u = Field::from_real_fn(g, |x| 1.0 / x.cosh());
        let q = 2.0;
        let pot = sample_potential(&PotentialSpec::Gaussian { q, sigma: 1.0, center: 0.0 }, &g);
        let base = energy(&u, &zero(&g));
        // int q e^{-x^2/2} sech^2 / 2 and int q^2 e^{-x^2} sech^2 / 2 by quadrature
        let dx = g.dx();
        let lin: f64 = g.points().map(|x| 0.5 * pot.spec().value(x) / x.cosh().powi(2)).sum::<f64>() * dx;
        let quad: f64 = g.points().map(|x| 0.5 * pot.spec().value(x).powi(2) / x.cosh().powi(2)).sum::<f64>() * dx;
        assert!((energy(&u, &pot) - base - lin).abs() < 1e-12);
        assert!((squared_potential_energy(&u, &pot) - base - quad).abs() < 1e-12);
    }

    #[test]
    fn phase_cap_rule() {
        let cfg = StepperConfig::with_dt(0.01);
        assert!(cfg.check_phase_resolution(4.0).is_ok());
        let err = cfg.check_phase_resolution(5.0).unwrap_err().to_string();
        assert!(err.contains("must not exceed"), "{err}");
        let p = SolitonParams::new(4.0, 0.0);
        assert!((p.max_dt(1.0, 0.1) - 0.1 / 10.0).abs() < 1e-15);
        assert_eq!(p.required_k_max(), 28.0);
    }

    #[test]
    fn evolve_hits_end_time_on_cadence() {
        let g = Grid::symmetric(40.0, 512).unwrap();
        let u = soliton(&SolitonParams::new(0.0, 0.0), 0.0, &g).unwrap();
        let cfg = StepperConfig { dt: 0.013, cadence: 4, ..Default::default() };
        let run = evolve(&u, &zero(&g), (0.0, 1.0), &cfg, Observers::default()).unwrap();
        assert_eq!(run.steps % 4, 0);
        assert!(run.dt <= 0.013);
        assert_eq!(*run.series.times.last().unwrap(), 1.0);
        assert!(run.series.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(run.series.len(), run.steps / 4 + 1);
    }

    #[test]
    fn standing_soliton_rotates() {
        let g = Grid::symmetric(40.0, 512).unwrap();
        let p = SolitonParams::new(0.0, 0.0);
        let u = soliton(&p, 0.0, &g).unwrap();
        let cfg = StepperConfig { dt: 0.005, cadence: 20, ..Default::default() };
        let run = evolve(&u, &zero(&g), (0.0, 2.0), &cfg, Observers { reference: Some(p), ..Default::default() }).unwrap();
        assert!(run.series.max_error().unwrap() < 1e-4);
        let exact = Field::from_fn(g, |x| Complex64::from_polar(1.0 / x.cosh(), 1.0));
        assert!(l2_norm(&run.field.difference(&exact).unwrap()) < 1e-4);
    }

    #[test]
    fn edge_mass_is_flagged() {
        let g = Grid::symmetric(20.0, 256).unwrap();
        let p = SolitonParams::new(4.0, 0.0);
        let u = sample_soliton(&p, 0.0, &g);
        let cfg = StepperConfig { dt: 0.005, cadence: 10, ..Default::default() };
        let run = evolve(&u, &zero(&g), (0.0, 4.0), &cfg, Observers::default()).unwrap();
        assert!(!run.is_valid());
    }

    #[test]
    fn csv_has_all_columns() {
        let g = Grid::symmetric(30.0, 256).unwrap();
        let p = SolitonParams::new(0.0, 0.0);
        let u = soliton(&p, 0.0, &g).unwrap();
        let run = evolve(&u, &zero(&g), (0.0, 0.1), &StepperConfig::with_dt(0.01), Observers { reference: Some(p), ..Default::default() }).unwrap();
        let mut out = Vec::new();
        run.series.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,err_l2,mass,energy,a_abs,edge_mass"));
        assert_eq!(lines.count(), 2);
    }

    #[test]
    fn residual_needs_three_samples() {
        let trace = BoundModeTrace { times: vec![0.0, 1.0], a: vec![1.0.into(); 2], nonlinear: vec![0.0.into(); 2] };
        assert!(bound_mode_residual(&trace, 1.0).is_err());
    }

    #[test]
    fn linear_mode_rotates_below_floor() {
        let spec = PotentialSpec::Sech2Scaled { beta: 0.5, center: 0.0 };
        let g = Grid::symmetric(40.0, 512).unwrap();
        let states = crate::spectral::bound_states_on_grid(&spec, &g).unwrap();
        let bs = &states[0];
        let pot = sample_potential(&spec, &g);
        let u0 = bs.phi.scaled(1e-4.into());
        let cfg = StepperConfig { dt: 0.002, cadence: 100, ..Default::default() };
        let run = evolve(&u0, &pot, (0.0, 20.0), &cfg, Observers { bound_state: Some(&bs.phi), ..Default::default() }).unwrap();
        let trace = run.trace.unwrap();
        let r = bound_mode_residual(&trace, bs.decay_rate()).unwrap();
        assert!(r.residual < r.floor, "{r:?}");
        // a wrong eigenvalue is caught
        let off = bound_mode_residual(&trace, 1.05 * bs.decay_rate()).unwrap();
        assert!(off.residual > 10.0 * off.floor, "{off:?}");
    }
}
