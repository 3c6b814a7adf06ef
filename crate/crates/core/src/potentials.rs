//! Catalog of external potentials `V`, their grid samples, and the
//! admissibility verdict (no zero-energy resonance, at most one simple
//! negative eigenvalue, decay like `<x>^{-s}` with `s > 2`).

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grid::{lp_norm, Field, Grid};
use crate::spectral::{self, SpectralOptions};

/// Gaussians narrower than this stand in for delta potentials.
pub const DELTA_WIDTH: f64 = 0.05;

/// Decay estimates above this are reported as super-algebraic.
pub const SLOPE_CAP: f64 = 25.0;

/// Analytic description of an external potential.
///
/// In the run configuration this appears under the `"potential"` key, e.g.
/// `{"kind": "algebraic", "q": 0.5, "s": 3.0, "center": 0.0}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    /// `q (1 + (x-c)^2)^{-s/2}`
    Algebraic {
        q: f64,
        s: f64,
        #[serde(default)]
        center: f64,
    },
    /// `q exp(-(x-c)^2 / (2 sigma^2))`
    Gaussian {
        q: f64,
        sigma: f64,
        #[serde(default)]
        center: f64,
    },
    /// Reflectionless well `-beta sech^2(x-c)` with `beta = nu(nu+1)/2`
    /// for a positive integer `nu`.
    PoschlTeller {
        beta: f64,
        #[serde(default)]
        center: f64,
    },
    /// `-beta sech^2(x-c)` for any `beta`.
    #[serde(alias = "sech2")]
    Sech2Scaled {
        beta: f64,
        #[serde(default)]
        center: f64,
    },
    Zero,
}

impl PotentialSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match *self {
            Self::Algebraic { q, s, center } => {
                if !(q.is_finite() && s.is_finite() && center.is_finite()) {
                    return bad("algebraic potential parameters must be finite".into());
                }
                if s <= 0.0 {
                    return bad(format!("algebraic decay s must be positive, got {s}"));
                }
            }
            Self::Gaussian { q, sigma, center } => {
                if !(q.is_finite() && sigma.is_finite() && center.is_finite()) {
                    return bad("gaussian potential parameters must be finite".into());
                }
                if sigma <= 0.0 {
                    return bad(format!("gaussian width must be positive, got {sigma}"));
                }
            }
            Self::PoschlTeller { beta, center } => {
                if !(beta.is_finite() && center.is_finite()) || beta <= 0.0 {
                    return bad(format!("Pöschl–Teller depth must be positive, got {beta}"));
                }
                let nu = self.poschl_teller_nu();
                if (nu - nu.round()).abs() > 1e-12 {
                    return bad(format!(
                        "Pöschl–Teller depth {beta} is not nu(nu+1)/2 for integer nu"
                    ));
                }
            }
            Self::Sech2Scaled { beta, center } => {
                if !(beta.is_finite() && center.is_finite()) {
                    return bad("sech2 potential parameters must be finite".into());
                }
            }
            Self::Zero => {}
        }
        Ok(())
    }

    /// `nu` with `nu(nu+1)/2 = beta` for the `sech^2` wells; zero otherwise.
    pub fn poschl_teller_nu(&self) -> f64 {
        match *self {
            Self::PoschlTeller { beta, .. } | Self::Sech2Scaled { beta, .. } => {
                0.5 * (-1.0 + (1.0 + 8.0 * beta).sqrt())
            }
            _ => 0.0,
        }
    }

    pub fn center(&self) -> f64 {
        match *self {
            Self::Algebraic { center, .. }
            | Self::Gaussian { center, .. }
            | Self::PoschlTeller { center, .. }
            | Self::Sech2Scaled { center, .. } => center,
            Self::Zero => 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            Self::Zero => true,
            Self::Algebraic { q, .. } | Self::Gaussian { q, .. } => q == 0.0,
            Self::PoschlTeller { beta, .. } | Self::Sech2Scaled { beta, .. } => beta == 0.0,
        }
    }

    /// Even about the origin.
    pub fn is_even(&self) -> bool {
        self.center() == 0.0
    }

    pub fn is_delta_approximation(&self) -> bool {
        matches!(*self, Self::Gaussian { sigma, .. } if sigma <= DELTA_WIDTH)
    }

    pub fn label(&self) -> String {
        match *self {
            Self::Algebraic { q, s, center } => format!("algebraic(q={q}, s={s}, c={center})"),
            Self::Gaussian { q, sigma, center } if sigma <= DELTA_WIDTH => {
                format!("gaussian(q={q}, sigma={sigma}, c={center}) [approximates {q}·delta]")
            }
            Self::Gaussian { q, sigma, center } => {
                format!("gaussian(q={q}, sigma={sigma}, c={center})")
            }
            Self::PoschlTeller { beta, center } => format!("poschl_teller(beta={beta}, c={center})"),
            Self::Sech2Scaled { beta, center } => format!("sech2_scaled(beta={beta}, c={center})"),
            Self::Zero => "zero".to_string(),
        }
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Self::Algebraic { q, s, center } => {
                let y = x - center;
                q * (1.0 + y * y).powf(-0.5 * s)
            }
            Self::Gaussian { q, sigma, center } => {
                let y = (x - center) / sigma;
                q * (-0.5 * y * y).exp()
            }
            Self::PoschlTeller { beta, center } | Self::Sech2Scaled { beta, center } => {
                let c = (x - center).cosh();
                -beta / (c * c)
            }
            Self::Zero => 0.0,
        }
    }

    /// `ln |V(x)|`, evaluated without underflow; `-inf` where `V` vanishes.
    pub fn log_abs(&self, x: f64) -> f64 {
        match *self {
            Self::Algebraic { q, s, center } => {
                let y = x - center;
                q.abs().ln() - 0.5 * s * (y * y).ln_1p()
            }
            Self::Gaussian { q, sigma, center } => {
                let y = (x - center) / sigma;
                q.abs().ln() - 0.5 * y * y
            }
            Self::PoschlTeller { beta, center } | Self::Sech2Scaled { beta, center } => {
                // ln sech y = -|y| + ln 2 - ln(1 + e^{-2|y|})
                let y = (x - center).abs();
                beta.abs().ln() + 2.0 * (-y + std::f64::consts::LN_2 - (-2.0 * y).exp().ln_1p())
            }
            Self::Zero => f64::NEG_INFINITY,
        }
    }

    /// `sup |V|`.
    pub fn sup_norm(&self) -> f64 {
        match *self {
            Self::Algebraic { q, .. } | Self::Gaussian { q, .. } => q.abs(),
            Self::PoschlTeller { beta, .. } | Self::Sech2Scaled { beta, .. } => beta.abs(),
            Self::Zero => 0.0,
        }
    }

    /// Upper bound for `int_{|x-c| > r} |V| dx`.
    pub fn tail_bound(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        match *self {
            Self::Algebraic { q, s, .. } => {
                if s <= 1.0 {
                    f64::INFINITY
                } else if r < 1.0 {
                    // Whole-line integral bounded by 2 (1 + 1/(s-1)).
                    2.0 * q.abs() * (1.0 + 1.0 / (s - 1.0))
                } else {
                    2.0 * q.abs() * r.powf(1.0 - s) / (s - 1.0)
                }
            }
            Self::Gaussian { q, sigma, .. } => {
                if r <= sigma {
                    2.0 * q.abs() * sigma * (std::f64::consts::PI / 2.0).sqrt()
                } else {
                    2.0 * q.abs() * sigma * sigma / r * (-0.5 * (r / sigma).powi(2)).exp()
                }
            }
            Self::PoschlTeller { beta, .. } | Self::Sech2Scaled { beta, .. } => {
                2.0 * beta.abs() * (1.0 - r.tanh())
            }
            Self::Zero => 0.0,
        }
    }

    /// Analytic decay parameter: `s` for the algebraic family, infinite for
    /// the exponentially localised kinds.
    pub fn decay_parameter(&self) -> f64 {
        match *self {
            Self::Algebraic { s, .. } => s,
            _ => f64::INFINITY,
        }
    }
}

/// Real samples `V(x_j)` on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledPotential {
    spec: PotentialSpec,
    grid: Grid,
    values: Vec<f64>,
}

impl SampledPotential {
    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_field(&self) -> Field {
        let values = self.values.iter().map(|&v| v.into()).collect();
        Field::new(self.grid, values).expect("sample count matches grid")
    }

    /// Largest `|V|` at the two outermost samples.
    pub fn edge_magnitude(&self) -> f64 {
        self.values[0].abs().max(self.values[self.values.len() - 1].abs())
    }
}

pub fn sample_potential(spec: &PotentialSpec, grid: &Grid) -> SampledPotential {
    let values = grid.points().map(|x| spec.value(x)).collect();
    SampledPotential { spec: *spec, grid: *grid, values }
}

/// Result of fitting `|V| ~ <x>^{-s}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DecayEstimate {
    Algebraic(f64),
    SuperAlgebraic,
}

impl DecayEstimate {
    pub fn value(&self) -> f64 {
        match *self {
            Self::Algebraic(s) => s,
            Self::SuperAlgebraic => f64::INFINITY,
        }
    }
}

impl Serialize for DecayEstimate {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            Self::Algebraic(s) => serializer.serialize_f64(s),
            Self::SuperAlgebraic => serializer.serialize_str("super-algebraic"),
        }
    }
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Least-squares slope of `ln|V|` against `ln<x>` over `L/8 <= |x| <= 3L/8`.
///
/// Exponentially decaying potentials are recognised either by an estimate
/// above [`SLOPE_CAP`] or by a local slope that keeps steepening across the
/// window (outer half more than 20% steeper than inner half); both return
/// [`DecayEstimate::SuperAlgebraic`].
pub fn decay_fit(spec: &PotentialSpec, grid: &Grid) -> Result<DecayEstimate> {
    let lo = grid.length() / 8.0;
    let hi = 3.0 * grid.length() / 8.0;
    let mut points = Vec::new();
    for x in grid.points().filter(|x| (lo..=hi).contains(&x.abs())) {
        let log_v = spec.log_abs(x);
        if !log_v.is_finite() {
            return Err(Error::ZeroFitWindow);
        }
        points.push((0.5 * (x * x).ln_1p(), log_v));
    }
    if points.len() < 4 {
        return Err(Error::InvalidParameter("decay fit window holds too few samples".into()));
    }
    let s = -least_squares_slope(&points);
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mid = 0.5 * (points[0].0 + points[points.len() - 1].0);
    let split = points.partition_point(|p| p.0 < mid);
    let (inner, outer) = points.split_at(split);
    let steepening = if inner.len() >= 2 && outer.len() >= 2 {
        let s_in = -least_squares_slope(inner);
        let s_out = -least_squares_slope(outer);
        s_in > 0.0 && s_out > 1.2 * s_in
    } else {
        false
    };
    if s > SLOPE_CAP || steepening {
        Ok(DecayEstimate::SuperAlgebraic)
    } else {
        Ok(DecayEstimate::Algebraic(s))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AdmissibilityReport {
    pub potential: String,
    pub decay_parameter_estimate: DecayEstimate,
    pub bound_state_count: usize,
    pub bound_state_energies: Vec<f64>,
    /// `(L^1, L^inf)` norms of each eigenfunction.
    pub bound_state_norms: Vec<(f64, f64)>,
    pub resonance_detected: bool,
    pub wronskian_at_zero: f64,
    pub wronskian_at_zero_doubled: f64,
    pub delta_approximation: bool,
    /// Set when the verdict could not be reached reliably.
    pub inconclusive: Option<String>,
    pub admissible: bool,
}

/// Checks the three admissibility clauses on `grid`.
///
/// Edge decay problems and unstable resonance verdicts do not abort; they
/// are recorded in `inconclusive` and force `admissible = false`.
pub fn check_admissibility(
    spec: &PotentialSpec,
    grid: &Grid,
    opts: &SpectralOptions,
) -> Result<AdmissibilityReport> {
    spec.validate()?;
    let sampled = sample_potential(spec, grid);
    let mut report = AdmissibilityReport {
        potential: spec.label(),
        decay_parameter_estimate: DecayEstimate::SuperAlgebraic,
        bound_state_count: 0,
        bound_state_energies: Vec::new(),
        bound_state_norms: Vec::new(),
        resonance_detected: false,
        wronskian_at_zero: f64::NAN,
        wronskian_at_zero_doubled: f64::NAN,
        delta_approximation: spec.is_delta_approximation(),
        inconclusive: None,
        admissible: false,
    };

    report.decay_parameter_estimate = match decay_fit(spec, grid) {
        Ok(est) => est,
        Err(Error::ZeroFitWindow) if spec.is_zero() => DecayEstimate::SuperAlgebraic,
        Err(e) => return Err(e),
    };

    if sampled.edge_magnitude() >= opts.edge_tol {
        report.inconclusive = Some(format!(
            "|V| = {:e} at the grid edge exceeds {:e}; Jost asymptotics invalid",
            sampled.edge_magnitude(),
            opts.edge_tol
        ));
        return Ok(report);
    }

    let states = spectral::bound_states(spec, grid, opts)?;
    report.bound_state_count = states.len();
    for state in &states {
        report.bound_state_energies.push(state.energy);
        let l1 = lp_norm(&state.phi, 1.0)?;
        let linf = lp_norm(&state.phi, f64::INFINITY)?;
        report.bound_state_norms.push((l1, linf));
    }

    let verdict = spectral::detect_resonance(spec, grid, opts)?;
    report.resonance_detected = verdict.resonant;
    report.wronskian_at_zero = verdict.w0;
    report.wronskian_at_zero_doubled = verdict.w0_doubled;
    if !verdict.stable {
        report.inconclusive = Some(format!(
            "resonance verdict changes under domain doubling (|W(0)| = {:e} vs {:e})",
            verdict.w0, verdict.w0_doubled
        ));
    }

    let norms_finite = report.bound_state_norms.iter().all(|(a, b)| a.is_finite() && b.is_finite());
    report.admissible = report.inconclusive.is_none()
        && report.bound_state_count <= 1
        && norms_finite
        && !report.resonance_detected
        && report.decay_parameter_estimate.value() > 2.0;
    Ok(report)
}
