//! Transmission of a fast soliton through an external potential: phase
//! timing, forcing profiles, single runs and the velocity scaling study.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{l2_norm, Field, Grid};
use crate::potentials::{check_admissibility, sample_potential, AdmissibilityReport, PotentialSpec};
use crate::propagator::{self, evolve, Observers, SolitonParams, StepperConfig};
use crate::spectral::{default_grid, SpectralOptions};

/// How the initial center is chosen from `v` and `delta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum X0Rule {
    /// `x0 = -factor * v^{1-delta}`; `factor >= 1` keeps the start outside
    /// the interaction window.
    Scaled { factor: f64 },
    /// The same `x0` for every velocity.
    Fixed { x0: f64 },
}

impl Default for X0Rule {
    fn default() -> Self {
        Self::Scaled { factor: 2.0 }
    }
}

impl X0Rule {
    pub fn x0(&self, v: f64, delta: f64) -> f64 {
        match *self {
            Self::Scaled { factor } => -factor * v.powf(1.0 - delta),
            Self::Fixed { x0 } => x0,
        }
    }
}

/// Domain sizing for a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridRule {
    /// Free space kept beyond the soliton center at both ends of its path.
    pub margin: f64,
    /// Multiplier (>= 1) on the `k_max >= 4(v + 3 mu)` resolution rule.
    pub oversample: f64,
}

impl Default for GridRule {
    fn default() -> Self {
        Self { margin: 30.0, oversample: 1.0 }
    }
}

/// Time stepping for a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DtRule {
    /// Largest pointwise phase per step in radians.
    pub phase_cap: f64,
    /// Explicit step; must respect the cap.
    pub dt: Option<f64>,
    /// Target number of observations over the horizon.
    pub samples: usize,
}

impl Default for DtRule {
    fn default() -> Self {
        Self { phase_cap: 0.1, dt: None, samples: 400 }
    }
}

/// Input of `simulate` and `study`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub potential: PotentialSpec,
    pub delta: f64,
    pub velocities: Vec<f64>,
    #[serde(default)]
    pub x0_rule: X0Rule,
    #[serde(default)]
    pub grid: GridRule,
    #[serde(default)]
    pub dt_rule: DtRule,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Run even if the potential is not admissible; recorded in reports.
    #[serde(default)]
    pub override_admissibility: bool,
}

impl ExperimentConfig {
    /// Open interval `(1/2, s/(1+s))` that `delta` must lie in.
    pub fn delta_range(&self) -> (f64, f64) {
        let s = self.potential.decay_parameter();
        let hi = if s.is_infinite() { 1.0 } else { s / (1.0 + s) };
        (0.5, hi)
    }

    /// Structural checks that need no numerics.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        self.potential.validate().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let (lo, hi) = self.delta_range();
        if !(self.delta > lo && self.delta < hi) {
            return bad(format!(
                "delta = {} must lie strictly inside ({lo}, {hi:.6}) for decay parameter s = {}",
                self.delta,
                self.potential.decay_parameter()
            ));
        }
        if self.velocities.is_empty() {
            return bad("at least one velocity is required".into());
        }
        for &v in &self.velocities {
            if !(v > 1.0 && v.is_finite()) {
                return bad(format!("velocity {v} must be finite and greater than 1"));
            }
            let x0 = self.x0_rule.x0(v, self.delta);
            let limit = -v.powf(1.0 - self.delta);
            if !(x0 <= limit) {
                return bad(format!("x0 = {x0} for v = {v} must not exceed -v^(1-delta) = {limit}"));
            }
        }
        if !(self.grid.margin >= 20.0 && self.grid.margin.is_finite()) {
            return bad(format!("grid margin {} must be at least 20", self.grid.margin));
        }
        if !(self.grid.oversample >= 1.0 && self.grid.oversample.is_finite()) {
            return bad(format!("grid oversample {} must be at least 1", self.grid.oversample));
        }
        if !(self.dt_rule.phase_cap > 0.0 && self.dt_rule.phase_cap <= 0.1) {
            return bad(format!("phase cap {} must lie in (0, 0.1]", self.dt_rule.phase_cap));
        }
        if self.dt_rule.samples < 3 {
            return bad("at least 3 observations are required".into());
        }
        let sup = self.potential.sup_norm();
        if let Some(dt) = self.dt_rule.dt {
            for &v in &self.velocities {
                let max = SolitonParams::new(v, 0.0).max_dt(sup, self.dt_rule.phase_cap);
                if !(dt > 0.0) || dt > max {
                    return bad(format!(
                        "dt = {dt} violates the phase-resolution cap at v = {v}: every pointwise \
                         phase per step must stay under {} rad, which needs dt <= {max:.6e}",
                        self.dt_rule.phase_cap
                    ));
                }
            }
        }
        Ok(())
    }

    /// Extra requirements of a scaling study.
    pub fn validate_study(&self) -> Result<()> {
        self.validate()?;
        let mut v = self.velocities.clone();
        v.sort_by(f64::total_cmp);
        v.dedup();
        if v.len() < 4 {
            return Err(Error::InvalidConfig(format!(
                "a scaling study needs at least 4 distinct velocities, got {}",
                v.len()
            )));
        }
        if v[v.len() - 1] < 8.0 * v[0] {
            return Err(Error::InvalidConfig(format!(
                "velocities must span at least a factor 8, got {} to {}",
                v[0],
                v[v.len() - 1]
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhaseTimes {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    /// `(1 - delta) log v`
    pub t_end: f64,
}

/// `T1 = |x0|/v - v^{-delta}`, `T2 = |x0|/v + v^{-delta}`,
/// `T3 = T2 + (1 - delta) log v`, horizon `(1 - delta) log v`.
pub fn phase_times(v: f64, x0: f64, delta: f64) -> Result<PhaseTimes> {
    if !(v > 1.0) || !(x0 < 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "phase times need v > 1, x0 < 0, 0 < delta < 1; got v = {v}, x0 = {x0}, delta = {delta}"
        )));
    }
    let pass = x0.abs() / v;
    let width = v.powf(-delta);
    let t1 = pass - width;
    if t1 < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "soliton starts inside the interaction window: T1 = {t1:e} < 0"
        )));
    }
    let t_end = (1.0 - delta) * v.ln();
    let t2 = pass + width;
    Ok(PhaseTimes { t1, t2, t3: t2 + t_end, t_end })
}

/// `<x> = sqrt(1 + x^2)`
pub fn japanese(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ForcingProfile {
    pub times: Vec<f64>,
    /// `||V u1(t)||_{L^2}`
    pub norms: Vec<f64>,
    /// `sup_t ||V u1(t)|| <x0 + v t>^s`
    pub envelope_constant: f64,
    pub s: f64,
}

impl ForcingProfile {
    pub fn envelope(&self, params: &SolitonParams, t: f64) -> f64 {
        self.envelope_constant * japanese(params.center(t)).powf(-self.s)
    }

    pub fn argmax(&self) -> Option<f64> {
        self.times
            .iter()
            .zip(&self.norms)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(&t, _)| t)
    }
}

/// `||V u1(t)||` at each time, with `u1` the exact traveling wave, and the
/// smallest constant `C` with `||V u1(t)|| <= C <x0 + v t>^{-s}` on the
/// samples (`s` infinite is replaced by 3 for the envelope).
pub fn forcing_profile(
    spec: &PotentialSpec,
    params: &SolitonParams,
    times: &[f64],
    grid: &Grid,
) -> Result<ForcingProfile> {
    let sampled = sample_potential(spec, grid);
    let s = match spec.decay_parameter() {
        s if s.is_finite() => s,
        _ => 3.0,
    };
    let mut norms = Vec::with_capacity(times.len());
    let mut constant = 0.0f64;
    for &t in times {
        let u1 = propagator::soliton(params, t, grid)?;
        let vu = Field::new(
            *grid,
            u1.values().iter().zip(sampled.values()).map(|(z, &v)| z * v).collect(),
        )?;
        let norm = l2_norm(&vu);
        constant = constant.max(norm * japanese(params.center(t)).powf(s));
        norms.push(norm);
    }
    Ok(ForcingProfile { times: times.to_vec(), norms, envelope_constant: constant, s })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaCheck {
    pub s: f64,
    pub ys: Vec<f64>,
    /// `||e^{-|x-y|} <x>^{-s}||_{L^2} / <y>^{-s}` per `y`.
    pub ratios: Vec<f64>,
    pub sup_ratio: f64,
    /// The same with the quadrature window doubled.
    pub sup_ratio_doubled: f64,
    pub half_width: f64,
}

impl LemmaCheck {
    pub fn relative_change(&self) -> f64 {
        (self.sup_ratio_doubled - self.sup_ratio).abs() / self.sup_ratio
    }
}

/// Quadrature spacing for [`lemma_error_check`].
const LEMMA_STEP: f64 = 1.0 / 64.0;
/// Distance between the outermost `y` and the window edge.
const LEMMA_CLEARANCE: f64 = 40.0;

/// `||e^{-|x-y|} <x>^{-s}||_{L^2(-w, w)}` by composite Simpson on both
/// sides of the kink at `x = y`.
fn lemma_norm(s: f64, y: f64, w: f64) -> f64 {
    let f = |x: f64| (-2.0 * (x - y).abs()).exp() * japanese(x).powf(-2.0 * s);
    (simpson(f, -w, y) + simpson(f, y, w)).sqrt()
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut n = ((b - a) / LEMMA_STEP).ceil() as usize;
    n += n % 2;
    let n = n.max(2);
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        sum += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

/// Ratios `||e^{-|x-y|} <x>^{-s}|| / <y>^{-s}` over `ys`, on the window
/// `|x| <= max|y| + 40` and again on twice that window.
pub fn lemma_error_check(s: f64, ys: &[f64]) -> Result<LemmaCheck> {
    lemma_error_check_with_window(s, ys, None)
}

/// As [`lemma_error_check`] with an explicit half width. Fails as
/// inconclusive if some `y` comes within 20 of the window edge, where the
/// neglected tail `e^{-2 dist}` would no longer be negligible.
pub fn lemma_error_check_with_window(s: f64, ys: &[f64], half_width: Option<f64>) -> Result<LemmaCheck> {
    if !(s > 0.5) {
        return Err(Error::InvalidParameter(format!("need s > 1/2, got {s}")));
    }
    if ys.is_empty() || ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::InvalidParameter("y grid must be non-empty and finite".into()));
    }
    let reach = ys.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    let w = half_width.unwrap_or(reach + LEMMA_CLEARANCE);
    if w - reach < 20.0 {
        return Err(Error::Inconclusive(format!(
            "window |x| <= {w} leaves only {:.3} beyond |y| = {reach}",
            w - reach
        )));
    }
    let ratio = |y: f64, w: f64| lemma_norm(s, y, w) * japanese(y).powf(s);
    let ratios: Vec<f64> = ys.iter().map(|&y| ratio(y, w)).collect();
    let doubled: Vec<f64> = ys.iter().map(|&y| ratio(y, 2.0 * w)).collect();
    let sup = |r: &[f64]| r.iter().fold(0.0f64, |m, &x| m.max(x));
    Ok(LemmaCheck {
        s,
        ys: ys.to_vec(),
        sup_ratio: sup(&ratios),
        sup_ratio_doubled: sup(&doubled),
        ratios,
        half_width: w,
    })
}

/// Everything needed to reproduce one transmission run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RunSetup {
    pub v: f64,
    pub x0: f64,
    pub delta: f64,
    pub phases: PhaseTimes,
    pub grid: Grid,
    pub stepper: StepperConfig,
}

/// Sizes the domain so the soliton keeps `margin` of free space at both
/// ends of its path, and refines it to the resolution rule.
pub fn plan_run(config: &ExperimentConfig, v: f64) -> Result<RunSetup> {
    let x0 = config.x0_rule.x0(v, config.delta);
    let phases = phase_times(v, x0, config.delta)?;
    let params = SolitonParams::new(v, x0);
    let margin = config.grid.margin;
    let lo = x0 - margin;
    let hi = x0 + v * phases.t_end + margin;
    let need = params.required_k_max() * config.grid.oversample;
    // k_max = pi n / L >= need
    let mut n = 64usize;
    while std::f64::consts::PI * n as f64 / (hi - lo) < need {
        n *= 2;
    }
    let grid = Grid::new(lo, hi, n)?;
    let max_dt = params.max_dt(config.potential.sup_norm(), config.dt_rule.phase_cap);
    let dt = config.dt_rule.dt.unwrap_or(max_dt);
    if dt > max_dt {
        return Err(Error::InvalidConfig(format!("dt = {dt} exceeds the time-step rule bound {max_dt:e}")));
    }
    let steps = (phases.t_end / dt).ceil().max(1.0) as usize;
    let cadence = (steps / config.dt_rule.samples.max(1)).max(1);
    let stepper = StepperConfig { dt, cadence, phase_cap: config.dt_rule.phase_cap, ..StepperConfig::default() };
    stepper.check_phase_resolution(v)?;
    propagator::check_resolution(&params, &grid)?;
    Ok(RunSetup { v, x0, delta: config.delta, phases, grid, stepper })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhasePeaks {
    /// Peak error on `[0, T1]`.
    pub phase1: f64,
    /// Peak error on `[T1, min(T2, T_end)]`.
    pub phase2: f64,
    /// Peak error on `[T2, T_end]`; absent when the horizon ends before `T2`.
    pub phase3: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub setup: RunSetup,
    pub potential: PotentialSpec,
    /// `sup_{[0, T_end]} ||u(t) - u1(t)||_{L^2}`
    pub sup_error: f64,
    pub peaks: PhasePeaks,
    pub steps: usize,
    pub dt: f64,
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub max_edge_mass: f64,
    pub valid: bool,
    pub invalid_reason: Option<String>,
    pub override_admissibility: bool,
    /// Admissibility verdict, when it was evaluated.
    pub admissible: Option<bool>,
    #[serde(skip)]
    pub series: propagator::ObserverSeries,
    /// Field at the horizon.
    #[serde(skip)]
    pub final_field: Field,
}

/// Evolves `e^{ivx} sech(x - x0)` under `spec` over `[0, (1-delta) log v]`.
///
/// `admissible` is the caller's verdict for `spec`; the run is refused if
/// it is false and the config does not override it.
pub fn transmission_run_with(
    config: &ExperimentConfig,
    spec: &PotentialSpec,
    v: f64,
    admissible: Option<bool>,
) -> Result<RunReport> {
    if admissible == Some(false) && !config.override_admissibility {
        return Err(Error::InvalidConfig(format!(
            "potential {} is not admissible; set override_admissibility to run anyway",
            spec.label()
        )));
    }
    let setup = plan_run(config, v)?;
    let params = SolitonParams::new(v, setup.x0);
    let u0 = propagator::soliton(&params, 0.0, &setup.grid)?;
    propagator::soliton(&params, setup.phases.t_end, &setup.grid)?;
    let sampled = sample_potential(spec, &setup.grid);
    let run = evolve(
        &u0,
        &sampled,
        (0.0, setup.phases.t_end),
        &setup.stepper,
        Observers { reference: Some(params), ..Default::default() },
    )?;
    let series = run.series;
    let ph = setup.phases;
    let phase2_end = ph.t2.min(ph.t_end);
    let peaks = PhasePeaks {
        phase1: series.peak_error_between(0.0, ph.t1).unwrap_or(0.0),
        phase2: series.peak_error_between(ph.t1, phase2_end).unwrap_or(0.0),
        phase3: if ph.t_end > ph.t2 { series.peak_error_between(ph.t2, ph.t_end) } else { None },
    };
    let invalid_reason = run
        .edge_violation
        .map(|(t, m)| format!("edge mass fraction {m:e} at t = {t} exceeds {:e}", setup.stepper.edge_mass_tol));
    Ok(RunReport {
        setup,
        potential: *spec,
        sup_error: series.max_error().unwrap_or(0.0),
        peaks,
        steps: run.steps,
        dt: run.dt,
        mass_drift: series.mass_drift(),
        energy_drift: series.energy_drift(),
        max_edge_mass: series.edge_mass.iter().fold(0.0f64, |m, &x| m.max(x)),
        valid: invalid_reason.is_none(),
        invalid_reason,
        override_admissibility: config.override_admissibility,
        admissible,
        series,
        final_field: run.field,
    })
}

/// Admissibility on the standard spectral grid.
pub fn admissibility(spec: &PotentialSpec) -> Result<AdmissibilityReport> {
    check_admissibility(spec, &default_grid(), &SpectralOptions::default())
}

/// [`transmission_run_with`] after evaluating admissibility.
pub fn transmission_run(config: &ExperimentConfig, v: f64) -> Result<RunReport> {
    config.validate()?;
    let verdict = admissibility(&config.potential)?;
    transmission_run_with(config, &config.potential, v, Some(verdict.admissible))
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidParameter("need at least two points to fit a slope".into()));
    }
    if xs.iter().chain(ys).any(|&z| !(z > 0.0 && z.is_finite())) {
        return Err(Error::InvalidParameter("log-log fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("velocities must not all coincide".into()));
    }
    Ok(sxy / sxx)
}

/// Floor-gate factor: `E(v)` must exceed the free-run error by this much.
pub const FLOOR_FACTOR: f64 = 10.0;

#[derive(Clone, Debug, Serialize)]
pub struct VelocityPoint {
    pub v: f64,
    pub error: f64,
    /// The same run with `V = 0`.
    pub floor: f64,
    pub above_floor: bool,
    pub valid: bool,
    pub peaks: PhasePeaks,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingResult {
    pub potential: PotentialSpec,
    pub delta: f64,
    pub per_v_error: Vec<VelocityPoint>,
    /// Fit over the velocities that pass the floor gate.
    pub slope: f64,
    /// `-(2 delta - 1)`
    pub bound_slope: f64,
    pub strictly_decreasing: bool,
    pub gates_passed: bool,
    pub all_runs_valid: bool,
    pub pass: bool,
    pub admissibility: AdmissibilityReport,
    pub override_admissibility: bool,
    #[serde(skip)]
    pub runs: Vec<RunReport>,
    #[serde(skip)]
    pub floor_runs: Vec<RunReport>,
}

impl ScalingResult {
    /// Slope of a pure power law of exponent `-(2 delta - 1)`, loosened by 0.1.
    pub fn slope_threshold(&self) -> f64 {
        self.bound_slope + 0.1
    }
}

/// PASS iff errors strictly decrease in `v` and the fitted slope is at most
/// `-(2 delta - 1) + 0.1`. Gate and validity flags are reported alongside.
pub fn scaling_verdict(vs: &[f64], errors: &[f64], delta: f64) -> Result<(f64, bool, bool)> {
    let mut order: Vec<usize> = (0..vs.len()).collect();
    order.sort_by(|&a, &b| vs[a].total_cmp(&vs[b]));
    let decreasing = order.windows(2).all(|w| errors[w[1]] < errors[w[0]]);
    let slope = loglog_slope(vs, errors)?;
    let pass = decreasing && slope <= -(2.0 * delta - 1.0) + 0.1;
    Ok((slope, decreasing, pass))
}

/// Runs every velocity together with its `V = 0` twin, in parallel.
pub fn scaling_study(config: &ExperimentConfig) -> Result<ScalingResult> {
    config.validate_study()?;
    let verdict = admissibility(&config.potential)?;
    scaling_study_with(config, verdict)
}

/// [`scaling_study`] with an admissibility report computed by the caller.
pub fn scaling_study_with(config: &ExperimentConfig, verdict: AdmissibilityReport) -> Result<ScalingResult> {
    config.validate_study()?;
    if !verdict.admissible && !config.override_admissibility {
        return Err(Error::InvalidConfig(format!(
            "potential {} is not admissible; set override_admissibility to run anyway",
            config.potential.label()
        )));
    }
    let mut vs = config.velocities.clone();
    vs.sort_by(f64::total_cmp);
    vs.dedup();
    let jobs: Vec<(f64, bool)> = vs.iter().flat_map(|&v| [(v, false), (v, true)]).collect();
    let results: Vec<Result<RunReport>> = jobs
        .par_iter()
        .map(|&(v, free)| {
            if free {
                transmission_run_with(config, &PotentialSpec::Zero, v, None)
            } else {
                transmission_run_with(config, &config.potential, v, Some(verdict.admissible))
            }
        })
        .collect();
    let mut runs = Vec::new();
    let mut floor_runs = Vec::new();
    for ((_, free), r) in jobs.iter().zip(results) {
        if *free {
            floor_runs.push(r?);
        } else {
            runs.push(r?);
        }
    }
    let points: Vec<VelocityPoint> = runs
        .iter()
        .zip(&floor_runs)
        .map(|(r, f)| VelocityPoint {
            v: r.setup.v,
            error: r.sup_error,
            floor: f.sup_error,
            above_floor: r.sup_error >= FLOOR_FACTOR * f.sup_error,
            valid: r.valid && f.valid,
            peaks: r.peaks,
        })
        .collect();
    let gated: Vec<&VelocityPoint> = points.iter().filter(|p| p.above_floor).collect();
    let all_vs: Vec<f64> = points.iter().map(|p| p.v).collect();
    let all_err: Vec<f64> = points.iter().map(|p| p.error).collect();
    let (_, strictly_decreasing, _) = scaling_verdict(&all_vs, &all_err, config.delta)?;
    let slope = if gated.len() >= 2 {
        let gv: Vec<f64> = gated.iter().map(|p| p.v).collect();
        let ge: Vec<f64> = gated.iter().map(|p| p.error).collect();
        loglog_slope(&gv, &ge)?
    } else {
        f64::NAN
    };
    let bound_slope = -(2.0 * config.delta - 1.0);
    let gates_passed = points.iter().all(|p| p.above_floor);
    let all_runs_valid = points.iter().all(|p| p.valid);
    let pass = strictly_decreasing && slope <= bound_slope + 0.1 && gates_passed && all_runs_valid;
    Ok(ScalingResult {
        potential: config.potential,
        delta: config.delta,
        per_v_error: points,
        slope,
        bound_slope,
        strictly_decreasing,
        gates_passed,
        all_runs_valid,
        pass,
        admissibility: verdict,
        override_admissibility: config.override_admissibility,
        runs,
        floor_runs,
    })
}

/// Phase-1 envelope check: `C = peak1(v_ref) v_ref^{s(1-delta)}` measured
/// at the smallest velocity and tested at the others.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseCheck {
    pub constant: f64,
    pub exponent: f64,
    /// `(v, peak1, peak2, C v^{-exponent})`
    pub rows: Vec<(f64, f64, f64, f64)>,
    pub ordered: bool,
    pub enveloped: bool,
}

pub fn phase_structure(result: &ScalingResult) -> Option<PhaseCheck> {
    let s = result.potential.decay_parameter();
    let exponent = s * (1.0 - result.delta);
    let first = result.per_v_error.first()?;
    let constant = first.peaks.phase1 * first.v.powf(exponent);
    let rows: Vec<_> = result
        .per_v_error
        .iter()
        .map(|p| (p.v, p.peaks.phase1, p.peaks.phase2, constant * p.v.powf(-exponent)))
        .collect();
    let ordered = rows.iter().all(|r| r.1 <= r.2);
    let enveloped = rows.iter().all(|r| r.1 <= r.3 * (1.0 + 1e-12));
    Some(PhaseCheck { constant, exponent, rows, ordered, enveloped })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(velocities: Vec<f64>) -> ExperimentConfig {
        ExperimentConfig {
            potential: PotentialSpec::Algebraic { q: 0.5, s: 3.0, center: 0.0 },
            delta: 0.6,
            velocities,
            x0_rule: X0Rule::default(),
            grid: GridRule::default(),
            dt_rule: DtRule::default(),
            out_dir: None,
            override_admissibility: false,
        }
    }

    #[test]
    fn boundary_phase_times() {
        let v: f64 = 16.0;
        let x0 = -v.powf(0.25);
        assert!((x0 + 2.0).abs() < 1e-15);
        let p = phase_times(v, x0, 0.75).unwrap();
        assert!(p.t1.abs() < 1e-15);
        assert!((p.t2 - 0.25).abs() < 1e-15);
        assert!((p.t_end - 0.25 * v.ln()).abs() < 1e-15);
        assert!((p.t3 - p.t2 - p.t_end).abs() < 1e-15);
    }

    #[test]
    fn direct_phase_times() {
        let p = phase_times(100.0, -10.0, 0.6).unwrap();
        let w = 100f64.powf(-0.6);
        assert!((p.t1 - (0.1 - w)).abs() < 1e-15);
        assert!((p.t2 - (0.1 + w)).abs() < 1e-15);
        assert!((p.t2 - p.t1 - 2.0 * w).abs() < 1e-15);
    }

    #[test]
    fn start_inside_window_rejected() {
        assert!(phase_times(4.0, -0.1, 0.6).is_err());
        assert!(phase_times(0.5, -10.0, 0.6).is_err());
    }

    #[test]
    fn delta_window() {
        let mut c = config(vec![8.0]);
        assert!(c.validate().is_ok());
        c.delta = 0.4;
        assert!(c.validate().is_err());
        c.delta = 0.75;
        assert!(c.validate().is_err());
        c.delta = 0.74;
        assert!(c.validate().is_ok());
        c.potential = PotentialSpec::Gaussian { q: 1.0, sigma: 1.0, center: 0.0 };
        c.delta = 0.95;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn x0_rule_must_respect_hypothesis() {
        let mut c = config(vec![8.0]);
        c.x0_rule = X0Rule::Scaled { factor: 0.5 };
        assert!(c.validate().is_err());
        c.x0_rule = X0Rule::Fixed { x0: -100.0 };
        assert!(c.validate().is_ok());
    }

    #[test]
    fn study_needs_spread_of_velocities() {
        assert!(config(vec![8.0]).validate_study().is_err());
        assert!(config(vec![8.0, 10.0, 12.0, 16.0]).validate_study().is_err());
        assert!(config(vec![8.0, 16.0, 32.0, 64.0]).validate_study().is_ok());
    }

    #[test]
    fn explicit_dt_checked_against_cap() {
        let mut c = config(vec![8.0]);
        c.dt_rule.dt = Some(0.01);
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("phase-resolution cap"), "{msg}");
        c.dt_rule.dt = Some(0.001);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn two_point_slope() {
        let s = loglog_slope(&[10.0, 100.0], &[0.1, 0.01]).unwrap();
        assert!((s + 1.0).abs() < 1e-14);
    }

    #[test]
    fn slope_recovers_exponent() {
        let delta = 0.6;
        let vs = [8.0, 16.0, 32.0, 64.0];
        let es: Vec<f64> = vs.iter().map(|v: &f64| 3.7 * v.powf(-(2.0 * delta - 1.0))).collect();
        let (slope, dec, pass) = scaling_verdict(&vs, &es, delta).unwrap();
        assert!((slope + 0.2).abs() < 1e-12);
        assert!(dec && pass);
        let flat = [1.0, 1.0, 0.9, 0.8];
        let (_, dec, pass) = scaling_verdict(&vs, &flat, delta).unwrap();
        assert!(!dec && !pass);
    }

    #[test]
    fn plan_respects_rules() {
        let c = config(vec![16.0]);
        let s = plan_run(&c, 16.0).unwrap();
        assert!(s.grid.k_max() >= 4.0 * 19.0);
        assert!(s.stepper.dt <= 0.1 / (128.0 + 0.5 + 1.0) + 1e-15);
        assert!(s.grid.x_min() <= s.x0 - 30.0);
        assert!(s.grid.x_max() >= s.x0 + 16.0 * s.phases.t_end + 30.0);
    }

    #[test]
    fn lemma_at_origin() {
        for s in [0.75, 1.0, 2.0, 3.0] {
            let c = lemma_error_check(s, &[0.0]).unwrap();
            assert!(c.sup_ratio <= 1.0);
            assert!(c.sup_ratio > 0.3);
        }
    }

    #[test]
    fn lemma_plateau() {
        let c = lemma_error_check(3.0, &[20.0, 40.0]).unwrap();
        let (r20, r40) = (c.ratios[0], c.ratios[1]);
        assert!((r40 - r20).abs() / r20 < 0.1, "{r20} {r40}");
        // the plateau value is ||e^{-|x|}|| = 1
        assert!((r40 - 1.0).abs() < 0.05);
    }

    #[test]
    fn lemma_window_too_small() {
        assert!(matches!(
            lemma_error_check_with_window(2.0, &[30.0], Some(35.0)),
            Err(Error::Inconclusive(_))
        ));
        assert!(lemma_error_check(0.5, &[0.0]).is_err());
    }

    #[test]
    fn simpson_on_unweighted_kernel() {
        // ||e^{-|x|}||^2 = 1
        let q = simpson(|x: f64| (-2.0 * x.abs()).exp(), -60.0, 0.0) + simpson(|x: f64| (-2.0 * x.abs()).exp(), 0.0, 60.0);
        assert!((q - 1.0).abs() < 1e-7);
    }

    #[test]
    fn zero_forcing() {
        let g = Grid::symmetric(60.0, 1024).unwrap();
        let p = SolitonParams::new(4.0, -10.0);
        let f = forcing_profile(&PotentialSpec::Zero, &p, &[0.0, 1.0, 2.0], &g).unwrap();
        assert!(f.norms.iter().all(|&n| n == 0.0));
    }

    #[test]
    fn forcing_peaks_at_coincidence() {
        let g = Grid::symmetric(80.0, 4096).unwrap();
        let v = 8.0;
        let p = SolitonParams::new(v, -20.0);
        let spec = PotentialSpec::Algebraic { q: 1.0, s: 3.0, center: 0.0 };
        let times: Vec<f64> = (0..=2000).map(|i| 5.0 * i as f64 / 2000.0).collect();
        let f = forcing_profile(&spec, &p, &times, &g).unwrap();
        let t_star = 20.0 / v;
        assert!((f.argmax().unwrap() - t_star).abs() <= 2.0 / v);
        assert!(f.envelope_constant.is_finite());
        for (&t, &n) in f.times.iter().zip(&f.norms) {
            assert!(n <= f.envelope(&p, t) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn forcing_decays_after_passage() {
        let g = Grid::symmetric(80.0, 4096).unwrap();
        let v = 8.0;
        let p = SolitonParams::new(v, -8.0);
        let spec = PotentialSpec::Algebraic { q: 1.0, s: 3.0, center: 0.0 };
        let t2 = 1.0 + v.powf(-0.6);
        let mut sups = Vec::new();
        for k in 0..4 {
            let times: Vec<f64> = (0..=50).map(|i| t2 + k as f64 + i as f64 / 50.0).collect();
            let f = forcing_profile(&spec, &p, &times, &g).unwrap();
            sups.push(f.norms.iter().fold(0.0f64, |m, &x| m.max(x)));
        }
        assert!(sups.windows(2).all(|w| w[1] < w[0]), "{sups:?}");
    }
}
