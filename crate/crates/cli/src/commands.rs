use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};

use nlsv_core::checks::{run_checks, Fault};
use nlsv_core::experiments::{
    admissibility, phase_structure, scaling_study_with, transmission_run_with, ExperimentConfig, RunReport,
};
use nlsv_core::io::write_field_binary;
use nlsv_core::potentials::check_admissibility;
use nlsv_core::propagator::ObserverSeries;
use nlsv_core::spectral::{log_space, spectral_report, SpectralOptions};
use nlsv_core::{Error, Grid, PotentialSpec};

use crate::manifest::{config_hash, RunManifest};
use crate::plot::{loglog_svg, Series};
use crate::{FaultArg, KindArg, LambdaArgs, PotentialArgs, SpectralGridArgs};

pub const EXIT_INVALID_INPUT: i32 = 1;
pub const EXIT_ACCEPTANCE: i32 = 2;
pub const EXIT_BREAKDOWN: i32 = 3;
pub const EXIT_INVALID_RUN: i32 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    fn input(message: impl Into<String>) -> Self {
        Self::new(EXIT_INVALID_INPUT, message)
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NumericalBreakdown { .. } => EXIT_BREAKDOWN,
        Error::EdgeDecay { .. } | Error::Accuracy(_) | Error::DegenerateWronskian(_) | Error::Inconclusive(_) => {
            EXIT_INVALID_RUN
        }
        _ => EXIT_INVALID_INPUT,
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Self::new(exit_code(&err), err.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Self::input(format!("i/o: {err}"))
    }
}

type CmdResult = Result<(), Failure>;

/// Finalises the manifest with the outcome of `body`.
fn with_manifest(mut manifest: RunManifest, body: impl FnOnce(&mut RunManifest) -> CmdResult) -> CmdResult {
    let result = body(&mut manifest);
    let code = result.as_ref().err().map_or(0, |f| f.code);
    manifest.finish(code)?;
    result
}

fn load_config(path: &Path) -> Result<(ExperimentConfig, Value), Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    let config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| Failure::input(format!("invalid config {}: {e}", path.display())))?;
    // Echo the config with defaults filled in, so equivalent inputs hash alike.
    let echo = serde_json::to_value(&config).map_err(|e| Failure::input(e.to_string()))?;
    Ok((config, echo))
}

fn output_dir(flag: Option<PathBuf>, config_dir: Option<&PathBuf>, command: &str, echo: &Value) -> PathBuf {
    flag.or_else(|| config_dir.cloned())
        .unwrap_or_else(|| PathBuf::from("nlsv-out").join(format!("{command}-{}", &config_hash(echo)[..12])))
}

fn velocity_tag(v: f64) -> String {
    let s = format!("{v}");
    s.replace('.', "p")
}

fn series_csv(series: &ObserverSeries) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    series.write_csv(&mut buf)?;
    Ok(buf)
}

fn write_run(manifest: &mut RunManifest, prefix: &str, run: &RunReport) -> CmdResult {
    let tag = velocity_tag(run.setup.v);
    manifest.write(&format!("{prefix}_v{tag}.csv"), &series_csv(&run.series)?)?;
    Ok(())
}

pub fn simulate(path: &Path, out: Option<PathBuf>) -> CmdResult {
    let (config, echo) = load_config(path)?;
    config.validate()?;
    let verdict = admissibility(&config.potential)?;
    if !verdict.admissible && !config.override_admissibility {
        return Err(Failure::input(format!(
            "potential {} is not admissible; set override_admissibility to run anyway",
            config.potential.label()
        )));
    }
    let dir = output_dir(out, config.out_dir.as_ref(), "simulate", &echo);
    let manifest = RunManifest::begin("simulate", echo, &dir)?;
    with_manifest(manifest, |m| {
        let runs: Vec<Result<RunReport, Error>> = config
            .velocities
            .par_iter()
            .map(|&v| transmission_run_with(&config, &config.potential, v, Some(verdict.admissible)))
            .collect();
        let runs: Vec<RunReport> = runs.into_iter().collect::<Result<_, _>>()?;
        for run in &runs {
            write_run(m, "run", run)?;
            let mut bin = Vec::new();
            write_field_binary(&run.final_field, &mut bin)?;
            m.write(&format!("final_v{}.bin", velocity_tag(run.setup.v)), &bin)?;
            m.criterion(&format!("edge_mass_v{}", velocity_tag(run.setup.v)), run.valid);
            println!(
                "v = {:<8} sup error {:.4e}  peaks [{:.3e}, {:.3e}, {}]  {}",
                run.setup.v,
                run.sup_error,
                run.peaks.phase1,
                run.peaks.phase2,
                run.peaks.phase3.map_or("-".to_string(), |p| format!("{p:.3e}")),
                if run.valid { "ok" } else { "INVALID" }
            );
        }
        let report = json!({ "admissibility": verdict, "runs": runs });
        m.write("runs.json", pretty(&report).as_bytes())?;
        println!("outputs in {}", m.dir().display());
        if let Some(bad) = runs.iter().find(|r| !r.valid) {
            return Err(Failure::new(
                EXIT_INVALID_RUN,
                format!("run v = {} invalid: {}", bad.setup.v, bad.invalid_reason.clone().unwrap_or_default()),
            ));
        }
        Ok(())
    })
}

fn pretty(value: &Value) -> String {
    serde_json::to_string_pretty(value).expect("JSON values serialize") + "\n"
}

pub fn study(path: &Path, out: Option<PathBuf>) -> CmdResult {
    let (config, echo) = load_config(path)?;
    config.validate_study()?;
    let verdict = admissibility(&config.potential)?;
    if !verdict.admissible && !config.override_admissibility {
        return Err(Failure::input(format!(
            "potential {} is not admissible; set override_admissibility to run anyway",
            config.potential.label()
        )));
    }
    let dir = output_dir(out, config.out_dir.as_ref(), "study", &echo);
    let hash = config_hash(&echo);
    let manifest = RunManifest::begin("study", echo, &dir)?;
    with_manifest(manifest, |m| {
        let result = scaling_study_with(&config, verdict)?;
        for run in &result.runs {
            write_run(m, "run", run)?;
        }
        for run in &result.floor_runs {
            write_run(m, "floor", run)?;
        }
        let phases = phase_structure(&result);
        let mut doc = serde_json::to_value(&result).map_err(|e| Failure::input(e.to_string()))?;
        doc["slope_threshold"] = json!(result.slope_threshold());
        doc["phase_structure"] = json!(phases);
        doc["config_hash"] = json!(hash);
        m.write("study.json", pretty(&doc).as_bytes())?;

        let mut csv = String::from("log_v,log_err\n");
        for p in &result.per_v_error {
            csv.push_str(&format!("{},{}\n", p.v.ln(), p.error.ln()));
        }
        m.write("scaling.csv", csv.as_bytes())?;

        let measured: Vec<(f64, f64)> = result.per_v_error.iter().map(|p| (p.v, p.error)).collect();
        let floors: Vec<(f64, f64)> = result.per_v_error.iter().map(|p| (p.v, p.floor)).collect();
        let (v_lo, e_lo) = measured[0];
        let v_hi = measured[measured.len() - 1].0;
        let fit = if result.slope.is_finite() {
            vec![(v_lo, e_lo), (v_hi, e_lo * (v_hi / v_lo).powf(result.slope))]
        } else {
            Vec::new()
        };
        let bound = vec![(v_lo, e_lo), (v_hi, e_lo * (v_hi / v_lo).powf(result.bound_slope))];
        let fit_label = format!("fit, slope {:.3}", result.slope);
        let bound_label = format!("v^{:.2}", result.bound_slope);
        let svg = loglog_svg(
            &format!("sup error over [0, (1-delta) log v], {}", result.potential.label()),
            "v",
            "E(v)",
            &[
                Series { label: "E(v)", color: "black", points: measured, markers: true },
                Series { label: "V = 0 floor", color: "gray", points: floors, markers: true },
                Series { label: &fit_label, color: "#c0392b", points: fit, markers: false },
                Series { label: &bound_label, color: "#2e86c1", points: bound, markers: false },
            ],
        );
        m.write("scaling.svg", svg.as_bytes())?;

        m.criterion("strictly_decreasing", result.strictly_decreasing);
        m.criterion("slope_bound", result.slope <= result.slope_threshold());
        m.criterion("floor_gates", result.gates_passed);
        m.criterion("edge_mass", result.all_runs_valid);
        if let Some(p) = &phases {
            m.criterion("phase_ordering", p.ordered);
            m.criterion("phase_envelope", p.enveloped);
        }
        m.criterion("pass", result.pass);

        println!("{:>8}  {:>12}  {:>12}  {:>5}", "v", "E(v)", "floor", "gate");
        for p in &result.per_v_error {
            println!("{:>8}  {:>12.4e}  {:>12.4e}  {:>5}", p.v, p.error, p.floor, if p.above_floor { "ok" } else { "LOW" });
        }
        println!(
            "slope {:.4} (must be <= {:.4}), strictly decreasing: {}, {}",
            result.slope,
            result.slope_threshold(),
            result.strictly_decreasing,
            if result.pass { "PASS" } else { "FAIL" }
        );
        println!("outputs in {}", m.dir().display());

        if !result.all_runs_valid {
            return Err(Failure::new(EXIT_INVALID_RUN, "a constituent run left mass at the domain edge"));
        }
        if !result.pass {
            return Err(Failure::new(EXIT_ACCEPTANCE, "scaling criterion not met"));
        }
        Ok(())
    })
}

pub fn check(fault: Option<FaultArg>) -> CmdResult {
    let fault = match fault {
        Some(FaultArg::SquaredPotentialEnergy) => Fault::SquaredPotentialEnergy,
        None => Fault::None,
    };
    let report = run_checks(fault)?;
    print!("{}", report.render());
    if report.all_passed() {
        Ok(())
    } else {
        Err(Failure::new(EXIT_ACCEPTANCE, ""))
    }
}

pub fn potential_spec(args: &PotentialArgs) -> Result<PotentialSpec, Failure> {
    let need = |value: Option<f64>, flag: &str| {
        value.ok_or_else(|| Failure::input(format!("--kind {:?} requires --{flag}", args.kind).to_lowercase()))
    };
    let center = args.center;
    let spec = match args.kind {
        KindArg::Algebraic => PotentialSpec::Algebraic { q: need(args.q, "q")?, s: need(args.s, "s")?, center },
        KindArg::Gaussian => PotentialSpec::Gaussian { q: need(args.q, "q")?, sigma: need(args.sigma, "sigma")?, center },
        KindArg::PoschlTeller => PotentialSpec::PoschlTeller { beta: need(args.beta, "beta")?, center },
        KindArg::Sech2 => PotentialSpec::Sech2Scaled { beta: need(args.beta, "beta")?, center },
        KindArg::Zero => PotentialSpec::Zero,
    };
    spec.validate()?;
    Ok(spec)
}

fn spectral_grid(args: &SpectralGridArgs) -> Result<Grid, Failure> {
    Ok(Grid::symmetric(args.half_width, args.points)?)
}

pub fn spectral(potential: &PotentialArgs, lambdas: &LambdaArgs, grid: &SpectralGridArgs, out: Option<PathBuf>) -> CmdResult {
    let spec = potential_spec(potential)?;
    let grid = spectral_grid(grid)?;
    if !(lambdas.lambda_min > 0.0 && lambdas.lambda_max >= lambdas.lambda_min && lambdas.lambda_count >= 1) {
        return Err(Failure::input("need 0 < lambda-min <= lambda-max and lambda-count >= 1"));
    }
    let table = log_space(lambdas.lambda_min, lambdas.lambda_max, lambdas.lambda_count);
    let opts = SpectralOptions::default();
    let echo = json!({
        "potential": spec,
        "lambda_min": lambdas.lambda_min,
        "lambda_max": lambdas.lambda_max,
        "lambda_count": lambdas.lambda_count,
        "grid": grid,
        "options": opts,
    });
    let dir = output_dir(out, None, "spectral", &echo);
    let manifest = RunManifest::begin("spectral", echo, &dir)?;
    with_manifest(manifest, |m| {
        let report = spectral_report(&spec, &grid, &table, &opts)?;
        let mut csv = String::from("lambda,re_T,im_T,re_R,im_R,unitarity_defect\n");
        for c in &report.coefficients {
            csv.push_str(&format!("{},{},{},{},{},{}\n", c.lambda, c.t.re, c.t.im, c.r.re, c.r.im, c.unitarity_defect));
        }
        m.write("coefficients.csv", csv.as_bytes())?;
        let doc = serde_json::to_value(&report).map_err(|e| Failure::input(e.to_string()))?;
        m.write("spectral_report.json", pretty(&doc).as_bytes())?;
        let agreement = report.coefficients.iter().fold(0.0f64, |a, c| a.max((c.t - c.t_matching).norm()));
        m.criterion("unitarity", report.max_unitarity_defect <= 1e-6);
        m.criterion("transmission_agreement", agreement <= 1e-6);

        println!("potential        {}", report.label);
        let energies: Vec<String> = report.bound_states.iter().map(|b| format!("{:.9}", b.energy)).collect();
        println!("bound states     {} [{}]", energies.len(), energies.join(", "));
        println!("resonance        {} (|W(0)| = {:.3e})", report.resonance.resonant, report.resonance.w0);
        println!("admissible       {}", report.admissibility.admissible);
        println!("max unitarity    {:.3e}", report.max_unitarity_defect);
        println!("max |T_W - T_M|  {agreement:.3e}");
        println!("sup lambda |R|   {:.3e}", report.reflection_scale);
        println!("sup lambda |T-1| {:.3e}", report.transmission_scale);
        println!("outputs in {}", m.dir().display());
        Ok(())
    })
}

pub fn potential_report(potential: &PotentialArgs, grid: &SpectralGridArgs, out: Option<PathBuf>) -> CmdResult {
    let spec = potential_spec(potential)?;
    let grid = spectral_grid(grid)?;
    let opts = SpectralOptions::default();
    let echo = json!({ "potential": spec, "grid": grid, "options": opts });
    let dir = output_dir(out, None, "potential-report", &echo);
    let manifest = RunManifest::begin("potential-report", echo, &dir)?;
    with_manifest(manifest, |m| {
        let report = check_admissibility(&spec, &grid, &opts)?;
        let doc = serde_json::to_value(&report).map_err(|e| Failure::input(e.to_string()))?;
        m.write("potential_report.json", pretty(&doc).as_bytes())?;
        m.criterion("admissible", report.admissible);
        print!("{}", pretty(&doc));
        Ok(())
    })
}
