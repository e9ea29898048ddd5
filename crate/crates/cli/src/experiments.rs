//! Experiment runners behind the CLI subcommands.
//!
//! Each runner consumes a parsed [`Config`], drives the library, and returns
//! a trace table, an audit report, and a plot description. Configuration
//! problems surface as [`RunError::Config`] before any stepping starts;
//! violations during stepping carry the offending step number. Monotonicity
//! verdicts are always recomputed from the recorded column values, so a
//! reader can verify them from the trace CSV alone.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use entrolab::fields::{integrate, BoundaryCondition, Grid, ScalarField, SigmaModel};
use entrolab::functionals::{
    free_energy_canonical, ldf_increment, ldf_zrp, s_local_equilibrium, Moments, ThermoModel,
    VelocityGrid,
};
use entrolab::kinetic::{equilibrium_state, h_theorem_audit, step_bgk, KineticState};
use entrolab::transport::{
    bath_relaxation_audit, entropy_balance, lyapunov_audit, stable_dt_heat, stable_dt_zrp,
    stationary_profile, step_heat, step_zrp_pde, EvolutionTrace, HeatProblem, Snapshot,
    ZrpPdeProblem,
};
use entrolab::zrp::{
    gillespie_step, ldf_empirical, ness_fugacity_profile, sigma_from_rates, RateFunction,
    SingleSiteMeasure, ZrpModel, ZrpState,
};
use entrolab::Error as CoreError;

use crate::config::{
    field, float_list, name_and_args, parse_kappa, parse_rate, parse_sigma, parse_thermo, Config,
    ConfigError, SIGMA_TABLE_POINTS,
};

/// Occupation cap when a single-site measure is only queried for its mean.
const DENSITY_CAP: usize = 10_000;

#[derive(Debug)]
pub enum RunError {
    /// Bad or missing configuration; exit code 2.
    Config(ConfigError),
    /// Violation while running; exit code 3.
    Runtime(String),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T, RunError> {
    Err(RunError::Config(ConfigError(msg.into())))
}

fn core_cfg(hint: &str) -> impl Fn(CoreError) -> RunError + '_ {
    move |e| RunError::Config(ConfigError(format!("{hint}: {e}")))
}

fn step_err(k: usize) -> impl Fn(CoreError) -> RunError {
    move |e| RunError::Runtime(format!("step {k}: {e}"))
}

fn audit_err(e: CoreError) -> RunError {
    RunError::Runtime(format!("audit: {e}"))
}

/// Everything a run produces; the binary decides where the bytes go.
#[derive(Debug)]
pub struct Outputs {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub audit: Value,
    pub plot: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    HeatClosed,
    HeatBath,
    ZrpPde,
    ZrpPdeDrift,
    Bgk,
    ZrpMc,
    LdfCheck,
    FunctionalEval,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::HeatClosed => "heat-closed",
            Kind::HeatBath => "heat-bath",
            Kind::ZrpPde => "zrp-pde",
            Kind::ZrpPdeDrift => "zrp-pde-drift",
            Kind::Bgk => "bgk",
            Kind::ZrpMc => "zrp-mc",
            Kind::LdfCheck => "ldf-check",
            Kind::FunctionalEval => "functional-eval",
        }
    }
}

pub struct RunContext {
    pub seed_override: Option<u64>,
    pub resolution_sweep: bool,
}

pub fn run(kind: Kind, cfg: &Config, ctx: &RunContext) -> Result<Outputs, RunError> {
    if let Some(k) = cfg.raw("", "kind") {
        if k != kind.name() {
            return config_err(format!(
                "kind = {k} in the config does not match the {} subcommand",
                kind.name()
            ));
        }
    }
    if ctx.resolution_sweep && !matches!(kind, Kind::HeatBath | Kind::ZrpPde | Kind::ZrpPdeDrift) {
        return config_err(format!(
            "--resolution-sweep applies to heat-bath, zrp-pde, and zrp-pde-drift, not {}",
            kind.name()
        ));
    }
    let seed = resolve_seed(cfg, ctx)?;
    let mut out = match kind {
        Kind::HeatClosed => heat_closed(cfg, seed)?,
        Kind::HeatBath => heat_bath(cfg, seed, ctx.resolution_sweep)?,
        Kind::ZrpPde => zrp_pde(cfg, seed, false, ctx.resolution_sweep)?,
        Kind::ZrpPdeDrift => zrp_pde(cfg, seed, true, ctx.resolution_sweep)?,
        Kind::Bgk => bgk(cfg, seed)?,
        Kind::ZrpMc => zrp_mc(cfg, seed)?,
        Kind::LdfCheck => ldf_check(cfg, seed)?,
        Kind::FunctionalEval => functional_eval(cfg, seed)?,
    };
    cfg.finish()?;
    if let Value::Object(map) = &mut out.audit {
        map.insert("kind".into(), json!(kind.name()));
    }
    Ok(out)
}

fn resolve_seed(cfg: &Config, ctx: &RunContext) -> Result<Option<u64>, RunError> {
    let from_cfg: Option<u64> = cfg.get("", "seed")?;
    Ok(ctx.seed_override.or(from_cfg))
}

fn need_seed(seed: Option<u64>, why: &str) -> Result<ChaCha8Rng, RunError> {
    match seed {
        Some(s) => Ok(ChaCha8Rng::seed_from_u64(s)),
        None => config_err(format!("missing required key seed: {why}")),
    }
}

/// Monotonicity classification of a recorded column. Increments within
/// `1e-12` of the column scale count as flat.
fn classify(values: &[f64]) -> (&'static str, Value, f64, f64) {
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let zero_tol = 1e-12 * scale;
    let increments: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let min_inc = increments.iter().fold(f64::INFINITY, |m, &d| m.min(d));
    let max_inc = increments.iter().fold(f64::NEG_INFINITY, |m, &d| m.max(d));
    let net = values.last().unwrap() - values.first().unwrap();
    let (verdict, direction) = if increments.iter().all(|d| d.abs() <= zero_tol) {
        ("stationary", Value::Null)
    } else if increments.iter().all(|&d| d <= zero_tol) && net < -zero_tol {
        ("monotone", json!("decreasing"))
    } else if increments.iter().all(|&d| d >= -zero_tol) && net > zero_tol {
        ("monotone", json!("increasing"))
    } else {
        ("not-monotone", Value::Null)
    };
    (verdict, direction, min_inc, max_inc)
}

fn plot_spec(x: &str, ys: &[&str]) -> String {
    let mut p = String::from("trace = trace.csv\n");
    p.push_str(&format!("x = {x}\n"));
    for y in ys {
        p.push_str(&format!("y = {y}\n"));
    }
    p
}

enum Span {
    TEnd(f64),
    Steps(usize),
}

struct TimeSpec {
    /// `None` selects the stability-bound automatic step.
    dt: Option<f64>,
    safety: f64,
    span: Span,
    record_every: usize,
}

fn parse_time(cfg: &Config) -> Result<TimeSpec, ConfigError> {
    let dt = match cfg.raw("time", "dt") {
        None => None,
        Some(s) if s == "auto" => None,
        Some(s) => match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Some(v),
            _ => {
                return Err(ConfigError(format!(
                    "bad value for [time].dt: expected auto or a positive number, got {s}"
                )))
            }
        },
    };
    let safety: f64 = cfg.get("time", "safety")?.unwrap_or(0.9);
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(ConfigError(format!(
            "[time].safety must lie in (0, 1], got {safety}"
        )));
    }
    let t_end: Option<f64> = cfg.get("time", "t_end")?;
    let steps: Option<usize> = cfg.get("time", "steps")?;
    let span = match (t_end, steps) {
        (Some(t), None) if t > 0.0 && t.is_finite() => Span::TEnd(t),
        (Some(t), None) => {
            return Err(ConfigError(format!(
                "[time].t_end must be positive, got {t}"
            )))
        }
        (None, Some(n)) if n >= 1 => Span::Steps(n),
        (None, Some(n)) => {
            return Err(ConfigError(format!(
                "[time].steps must be at least 1, got {n}"
            )))
        }
        _ => {
            return Err(ConfigError(
                "set exactly one of [time].t_end and [time].steps".into(),
            ))
        }
    };
    let record_every: usize = cfg.get("time", "record_every")?.unwrap_or(1);
    if record_every == 0 {
        return Err(ConfigError("[time].record_every must be at least 1".into()));
    }
    Ok(TimeSpec {
        dt,
        safety,
        span,
        record_every,
    })
}

/// Turn a time spec into a concrete `(dt, steps)` pair. `auto_dt` already
/// includes the safety factor. With an explicit dt, a `t_end` span must be a
/// whole number of steps so the final time is hit exactly.
fn resolve_time(
    spec: &TimeSpec,
    auto_dt: impl FnOnce() -> Result<f64, RunError>,
) -> Result<(f64, usize), RunError> {
    match (spec.dt, &spec.span) {
        (None, Span::TEnd(t)) => {
            let dt0 = auto_dt()?;
            let steps = (t / dt0).ceil().max(1.0) as usize;
            Ok((t / steps as f64, steps))
        }
        (None, Span::Steps(n)) => Ok((auto_dt()?, *n)),
        (Some(dt), Span::TEnd(t)) => {
            let steps = (t / dt).round();
            if steps < 1.0 || (steps * dt - t).abs() > 1e-9 * t.max(1.0) {
                return config_err(
                    "[time].t_end must be a whole number of [time].dt steps; \
                     use dt = auto to land on t_end exactly",
                );
            }
            Ok((dt, steps as usize))
        }
        (Some(dt), Span::Steps(n)) => Ok((dt, *n)),
    }
}

enum Profile {
    Uniform(f64),
    Random { lo: f64, hi: f64 },
    Sin { base: f64, amp: f64, mode: f64 },
    PerturbStationary { amp: f64, mode: f64 },
}

fn whole_mode(v: f64, name: &str) -> Result<f64, ConfigError> {
    if v >= 1.0 && v.fract() == 0.0 {
        Ok(v)
    } else {
        Err(ConfigError(format!(
            "{name}: mode must be a positive whole number, got {v}"
        )))
    }
}

fn parse_profile(cfg: &Config) -> Result<Profile, ConfigError> {
    let spec: String = cfg.require("initial", "profile")?;
    let name = field("initial", "profile");
    match name_and_args(&spec) {
        ("uniform", Some(a)) => {
            let v = float_list(a, &name)?;
            if v.len() != 1 {
                return Err(ConfigError(format!("{name}: uniform takes one value")));
            }
            Ok(Profile::Uniform(v[0]))
        }
        ("random", Some(a)) => {
            let v = float_list(a, &name)?;
            if v.len() != 2 || !(v[0] < v[1]) {
                return Err(ConfigError(format!(
                    "{name}: random takes lo,hi with lo < hi"
                )));
            }
            Ok(Profile::Random { lo: v[0], hi: v[1] })
        }
        ("sin", Some(a)) => {
            let v = float_list(a, &name)?;
            if v.len() != 3 {
                return Err(ConfigError(format!("{name}: sin takes base,amp,mode")));
            }
            Ok(Profile::Sin {
                base: v[0],
                amp: v[1],
                mode: whole_mode(v[2], &name)?,
            })
        }
        ("perturb-stationary", Some(a)) => {
            let v = float_list(a, &name)?;
            if v.len() != 2 {
                return Err(ConfigError(format!(
                    "{name}: perturb-stationary takes amp,mode"
                )));
            }
            Ok(Profile::PerturbStationary {
                amp: v[0],
                mode: whole_mode(v[1], &name)?,
            })
        }
        _ => Err(ConfigError(format!(
            "{name}: unknown profile '{spec}' (try uniform:<v>, random:<lo>,<hi>, \
             sin:<base>,<amp>,<mode>, or perturb-stationary:<amp>,<mode>)"
        ))),
    }
}

fn build_profile(
    profile: &Profile,
    grid: &Grid,
    length: f64,
    stationary: Option<&ScalarField>,
    seed: Option<u64>,
) -> Result<ScalarField, RunError> {
    let name = field("initial", "profile");
    let values: Vec<f64> = match profile {
        Profile::Uniform(v) => vec![*v; grid.cell_count()],
        Profile::Random { lo, hi } => {
            let mut rng = need_seed(seed, "the random initial profile draws from it")?;
            (0..grid.cell_count())
                .map(|_| lo + (hi - lo) * rng.random::<f64>())
                .collect()
        }
        Profile::Sin { base, amp, mode } => (0..grid.cell_count())
            .map(|i| {
                let x = grid.cell_center(i)[0];
                base + amp * (mode * PI * x / length).sin()
            })
            .collect(),
        Profile::PerturbStationary { amp, mode } => {
            let Some(bar) = stationary else {
                return config_err(format!(
                    "{name}: perturb-stationary applies to the density kinds only"
                ));
            };
            bar.values()
                .iter()
                .enumerate()
                .map(|(i, &r)| {
                    let x = grid.cell_center(i)[0];
                    r * (1.0 + amp * (mode * PI * x / length).sin())
                })
                .collect()
        }
    };
    ScalarField::new(grid.clone(), values)
        .map_err(|e| RunError::Config(ConfigError(format!("{name}: {e}"))))
}

fn seed_if_random(profile: &Profile, seed: Option<u64>) -> Option<u64> {
    matches!(profile, Profile::Random { .. })
        .then_some(seed)
        .flatten()
}

/// Reject initial energies the entropy model cannot evaluate before any
/// stepping starts, naming the profile key.
fn validate_energy(field_vals: &ScalarField, thermo: &ThermoModel) -> Result<(), RunError> {
    for (i, &e) in field_vals.values().iter().enumerate() {
        if let Err(err) = thermo.temperature(e) {
            return config_err(format!(
                "{}: cell {i} holds energy {e}: {err}",
                field("initial", "profile")
            ));
        }
    }
    Ok(())
}

fn validate_density(field_vals: &ScalarField, sigma: &SigmaModel) -> Result<(), RunError> {
    for (i, &r) in field_vals.values().iter().enumerate() {
        if !(r > 0.0) {
            return config_err(format!(
                "{}: cell {i} holds density {r}, which is not positive",
                field("initial", "profile")
            ));
        }
        if let Err(err) = sigma.value(r) {
            return config_err(format!(
                "{}: cell {i} holds density {r}: {err}",
                field("initial", "profile")
            ));
        }
    }
    Ok(())
}

/// Step `initial` forward, recording every `record_every`-th state plus the
/// initial and final ones.
fn drive(
    initial: ScalarField,
    dt: f64,
    steps: usize,
    record_every: usize,
    mut step: impl FnMut(&ScalarField, usize) -> Result<ScalarField, RunError>,
) -> Result<EvolutionTrace, RunError> {
    let mut trace = EvolutionTrace::new();
    trace
        .push(Snapshot {
            time: 0.0,
            field: initial.clone(),
        })
        .map_err(audit_err)?;
    let mut state = initial;
    for k in 1..=steps {
        state = step(&state, k)?;
        if k % record_every == 0 || k == steps {
            trace
                .push(Snapshot {
                    time: k as f64 * dt,
                    field: state.clone(),
                })
                .map_err(audit_err)?;
        }
    }
    Ok(trace)
}

fn parse_grid(cfg: &Config) -> Result<(usize, f64), RunError> {
    let cells: usize = cfg.require("grid", "cells")?;
    let length: f64 = cfg.require("grid", "length")?;
    if !(length > 0.0) || !length.is_finite() {
        return config_err(format!("[grid].length must be positive, got {length}"));
    }
    Ok((cells, length))
}

fn make_grid(cells: usize, length: f64) -> Result<Grid, RunError> {
    Grid::line(cells, length).map_err(core_cfg("[grid]"))
}

fn heat_closed(cfg: &Config, seed: Option<u64>) -> Result<Outputs, RunError> {
    let (cells, length) = parse_grid(cfg)?;
    let thermo = parse_thermo(
        &cfg.require::<String>("model", "thermo")?,
        &field("model", "thermo"),
    )?;
    let kappa = parse_kappa(
        &cfg.require::<String>("model", "kappa")?,
        &field("model", "kappa"),
    )?;
    let time = parse_time(cfg)?;
    let profile = parse_profile(cfg)?;

    let grid = make_grid(cells, length)?;
    let bc = BoundaryCondition::zero_flux(&grid).map_err(core_cfg("[grid]"))?;
    let problem =
        HeatProblem::new(grid.clone(), thermo.clone(), kappa, bc).map_err(core_cfg("[model]"))?;
    let initial = build_profile(&profile, &grid, length, None, seed)?;
    validate_energy(&initial, &thermo)?;

    let (dt, steps) = resolve_time(&time, || {
        stable_dt_heat(&problem, &initial)
            .map(|s| time.safety * s)
            .map_err(audit_err)
    })?;
    let trace = drive(initial, dt, steps, time.record_every, |f, k| {
        step_heat(&problem, f, dt).map_err(step_err(k))
    })?;

    let mut rows = Vec::with_capacity(trace.len());
    for snap in trace.snapshots() {
        let bal = entropy_balance(&problem, &snap.field).map_err(audit_err)?;
        let s_le = s_local_equilibrium(&snap.field, &thermo).map_err(audit_err)?;
        rows.push(vec![
            snap.time,
            integrate(&snap.field),
            s_le,
            bal.production,
        ]);
    }
    let entropies: Vec<f64> = rows.iter().map(|r| r[2]).collect();
    let (verdict, direction, min_inc, max_inc) = classify(&entropies);
    let e_first = rows[0][1];
    let e_last = rows.last().unwrap()[1];
    let production_min = rows.iter().map(|r| r[3]).fold(f64::INFINITY, f64::min);

    let mut audit = json!({
        "audited_column": "S_le",
        "verdict": verdict,
        "direction": direction,
        "min_increment": min_inc,
        "max_increment": max_inc,
        "energy_drift": ((e_last - e_first) / e_first).abs(),
        "production_min": production_min,
        "dt": dt,
        "steps": steps,
        "rows": rows.len(),
    });
    if let Some(s) = seed_if_random(&profile, seed) {
        audit["seed"] = json!(s);
    }
    Ok(Outputs {
        columns: string_cols(&["t", "E_total", "S_le", "production"]),
        rows,
        audit,
        plot: plot_spec("t", &["S_le", "production"]),
    })
}

fn string_cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Orders and extrapolated limit from residuals at 1x, 2x, and 4x resolution.
fn sweep_entry(cells: usize, residuals: [f64; 3]) -> Value {
    let [m1, m2, m4] = residuals;
    let p1 = (m1 / m2).log2();
    let p2 = (m2 / m4).log2();
    let rate = p1.exp2();
    let extrapolated = (rate * m4 - m2) / (rate - 1.0);
    json!({
        "cells": [cells, 2 * cells, 4 * cells],
        "max_residual": residuals,
        "order": [p1, p2],
        "extrapolated": extrapolated,
    })
}

fn require_sweepable(time: &TimeSpec) -> Result<(), RunError> {
    if time.dt.is_some() || matches!(time.span, Span::Steps(_)) {
        return config_err(
            "a resolution sweep compares runs over one physical window; \
             use [time].dt = auto together with [time].t_end",
        );
    }
    Ok(())
}

fn heat_bath(cfg: &Config, seed: Option<u64>, sweep: bool) -> Result<Outputs, RunError> {
    let (cells, length) = parse_grid(cfg)?;
    let thermo = parse_thermo(
        &cfg.require::<String>("model", "thermo")?,
        &field("model", "thermo"),
    )?;
    let kappa = parse_kappa(
        &cfg.require::<String>("model", "kappa")?,
        &field("model", "kappa"),
    )?;
    let t_bath: f64 = cfg.require("model", "bath_temperature")?;
    if !(t_bath > 0.0) || !t_bath.is_finite() {
        return config_err(format!(
            "[model].bath_temperature must be positive, got {t_bath}"
        ));
    }
    let time = parse_time(cfg)?;
    let profile = parse_profile(cfg)?;
    if sweep {
        require_sweepable(&time)?;
    }

    let run_at = |mult: usize| -> Result<(Vec<Vec<f64>>, f64, f64, usize), RunError> {
        let grid = make_grid(cells * mult, length)?;
        thermo
            .energy_from_temperature(t_bath)
            .map_err(core_cfg("[model].bath_temperature"))?;
        // Dirichlet data are face temperatures.
        let bc = BoundaryCondition::uniform_dirichlet(&grid, t_bath).map_err(core_cfg("[model]"))?;
        let problem = HeatProblem::new(grid.clone(), thermo.clone(), kappa.clone(), bc)
            .map_err(core_cfg("[model]"))?;
        let initial = build_profile(&profile, &grid, length, None, seed)?;
        validate_energy(&initial, &thermo)?;
        let (dt, steps) = resolve_time(&time, || {
            stable_dt_heat(&problem, &initial)
                .map(|s| time.safety * s)
                .map_err(audit_err)
        })?;
        let trace = drive(initial, dt, steps, time.record_every, |f, k| {
            step_heat(&problem, f, dt).map_err(step_err(k))
        })?;
        let report = bath_relaxation_audit(&problem, &trace).map_err(audit_err)?;
        let mut rows = Vec::with_capacity(trace.len());
        for (k, snap) in trace.snapshots().iter().enumerate() {
            let bal = entropy_balance(&problem, &snap.field).map_err(audit_err)?;
            let s_le = s_local_equilibrium(&snap.field, &thermo).map_err(audit_err)?;
            let residual = if k == 0 { 0.0 } else { report.residuals[k - 1] };
            rows.push(vec![
                snap.time,
                integrate(&snap.field),
                s_le,
                report.free_energies[k],
                bal.production,
                residual,
            ]);
        }
        Ok((rows, report.max_residual, dt, steps))
    };

    let (rows, max_residual, dt, steps) = run_at(1)?;
    let free_energies: Vec<f64> = rows.iter().map(|r| r[3]).collect();
    let (verdict, direction, min_inc, max_inc) = classify(&free_energies);
    let mut audit = json!({
        "audited_column": "F_canonical",
        "bath_temperature": t_bath,
        "verdict": verdict,
        "direction": direction,
        "min_increment": min_inc,
        "max_increment": max_inc,
        "max_residual": max_residual,
        "dt": dt,
        "steps": steps,
        "rows": rows.len(),
    });
    if sweep {
        let (_, m2, _, _) = run_at(2)?;
        let (_, m4, _, _) = run_at(4)?;
        audit["sweep"] = sweep_entry(cells, [max_residual, m2, m4]);
    }
    if let Some(s) = seed_if_random(&profile, seed) {
        audit["seed"] = json!(s);
    }
    Ok(Outputs {
        columns: string_cols(&[
            "t",
            "E_total",
            "S_le",
            "F_canonical",
            "production",
            "residual",
        ]),
        rows,
        audit,
        plot: plot_spec("t", &["F_canonical", "production", "residual"]),
    })
}

fn zrp_pde(
    cfg: &Config,
    seed: Option<u64>,
    with_drift: bool,
    sweep: bool,
) -> Result<Outputs, RunError> {
    let (cells, length) = parse_grid(cfg)?;
    let sigma = parse_sigma(
        &cfg.require::<String>("model", "sigma")?,
        &field("model", "sigma"),
    )?;
    let rho_left: f64 = cfg.require("model", "rho_left")?;
    let rho_right: f64 = cfg.require("model", "rho_right")?;
    let drift: Option<Vec<f64>> = if with_drift {
        let e: f64 = cfg.require("model", "drift")?;
        if !e.is_finite() {
            return config_err(format!("[model].drift must be finite, got {e}"));
        }
        Some(vec![e])
    } else {
        None
    };
    let time = parse_time(cfg)?;
    let profile = parse_profile(cfg)?;
    if sweep {
        require_sweepable(&time)?;
    }

    let run_at = |mult: usize| -> Result<(Vec<Vec<f64>>, f64, f64, usize), RunError> {
        let grid = make_grid(cells * mult, length)?;
        let bc = BoundaryCondition::dirichlet_1d(&grid, rho_left, rho_right)
            .map_err(core_cfg("[model]"))?;
        let problem = ZrpPdeProblem::new(grid.clone(), sigma.clone(), bc, drift.clone())
            .map_err(core_cfg("[model]"))?;
        let stationary = if matches!(profile, Profile::PerturbStationary { .. }) {
            Some(
                stationary_profile(&problem)
                    .map_err(core_cfg(&field("initial", "profile")))?,
            )
        } else {
            None
        };
        let initial = build_profile(&profile, &grid, length, stationary.as_ref(), seed)?;
        validate_density(&initial, &sigma)?;
        let (dt, steps) = resolve_time(&time, || {
            stable_dt_zrp(&problem, &initial)
                .map(|s| time.safety * s)
                .map_err(audit_err)
        })?;
        let trace = drive(initial, dt, steps, time.record_every, |f, k| {
            step_zrp_pde(&problem, f, dt).map_err(step_err(k))
        })?;
        let report = lyapunov_audit(&problem, &trace).map_err(audit_err)?;
        let mut rows = Vec::with_capacity(trace.len());
        for (k, snap) in trace.snapshots().iter().enumerate() {
            let (dissipation, residual) = if k == 0 {
                (0.0, 0.0)
            } else {
                (report.dissipation[k - 1], report.residuals[k - 1])
            };
            rows.push(vec![
                snap.time,
                report.free_energies[k],
                dissipation,
                residual,
            ]);
        }
        Ok((rows, report.max_residual, dt, steps))
    };

    let (rows, max_residual, dt, steps) = run_at(1)?;
    let free_energies: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let (verdict, direction, min_inc, max_inc) = classify(&free_energies);
    let mut audit = json!({
        "audited_column": "F_zrp",
        "verdict": verdict,
        "direction": direction,
        "min_increment": min_inc,
        "max_increment": max_inc,
        "max_residual": max_residual,
        "dt": dt,
        "steps": steps,
        "rows": rows.len(),
    });
    if sweep {
        let (_, m2, _, _) = run_at(2)?;
        let (_, m4, _, _) = run_at(4)?;
        audit["sweep"] = sweep_entry(cells, [max_residual, m2, m4]);
    }
    if let Some(s) = seed_if_random(&profile, seed) {
        audit["seed"] = json!(s);
    }
    Ok(Outputs {
        columns: string_cols(&["t", "F_zrp", "dissipation", "residual"]),
        rows,
        audit,
        plot: plot_spec("t", &["F_zrp", "dissipation", "residual"]),
    })
}

fn bgk(cfg: &Config, seed: Option<u64>) -> Result<Outputs, RunError> {
    let dim: usize = cfg.require("kinetic", "dim")?;
    if !(1..=3).contains(&dim) {
        return config_err(format!("[kinetic].dim must be 1, 2, or 3, got {dim}"));
    }
    let nodes: usize = cfg.require("kinetic", "nodes")?;
    let v_max: f64 = cfg.require("kinetic", "v_max")?;
    let mass: f64 = cfg.get("kinetic", "mass")?.unwrap_or(1.0);
    let tau: f64 = cfg.require("kinetic", "tau")?;
    for (key, v) in [("v_max", v_max), ("mass", mass), ("tau", tau)] {
        if !(v > 0.0) || !v.is_finite() {
            return config_err(format!(
                "{} must be positive, got {v}",
                field("kinetic", key)
            ));
        }
    }
    let vgrid = VelocityGrid::uniform(dim, nodes, v_max).map_err(core_cfg("[kinetic]"))?;

    let init_spec: String = cfg.require("kinetic", "initial")?;
    let init_name = field("kinetic", "initial");
    let mut random_initial = false;
    let state = match name_and_args(&init_spec) {
        ("maxwellian", Some(a)) => {
            let v = float_list(a, &init_name)?;
            if v.len() != 2 || !(v[0] > 0.0) || !(v[1] > 0.0) {
                return config_err(format!(
                    "{init_name}: maxwellian takes positive n,T"
                ));
            }
            let target = Moments {
                particles: v[0],
                momentum: vec![0.0; dim],
                energy: 0.5 * dim as f64 * v[0] * v[1],
            };
            equilibrium_state(&vgrid, mass, &target).map_err(core_cfg(&init_name))?
        }
        ("random", Some(a)) => {
            let v = float_list(a, &init_name)?;
            if v.len() != 2 || !(v[0] >= 0.0) || !(v[0] < v[1]) {
                return config_err(format!(
                    "{init_name}: random takes lo,hi with 0 <= lo < hi"
                ));
            }
            random_initial = true;
            let mut rng = need_seed(seed, "the random initial distribution draws from it")?;
            let values: Vec<f64> = (0..vgrid.len())
                .map(|i| {
                    let amp = v[0] + (v[1] - v[0]) * rng.random::<f64>();
                    amp * (-0.5 * mass * vgrid.speed_squared(i)).exp()
                })
                .collect();
            KineticState::new(vgrid.clone(), mass, values).map_err(core_cfg(&init_name))?
        }
        _ => {
            return config_err(format!(
                "{init_name}: unknown initial '{init_spec}' \
                 (try maxwellian:<n>,<T> or random:<lo>,<hi>)"
            ))
        }
    };

    let time = parse_time(cfg)?;
    if let Some(dt) = time.dt {
        if dt > tau {
            return config_err(format!(
                "[time].dt = {dt} exceeds [kinetic].tau = {tau}; \
                 the relaxation step needs dt <= tau"
            ));
        }
    }
    let (dt, steps) = resolve_time(&time, || Ok(tau / 20.0))?;

    let mut states = vec![state.clone()];
    let mut times = vec![0.0];
    let mut current = state;
    for k in 1..=steps {
        current = step_bgk(&current, tau, dt).map_err(step_err(k))?;
        if k % time.record_every == 0 || k == steps {
            states.push(current.clone());
            times.push(k as f64 * dt);
        }
    }
    let report = h_theorem_audit(&states).map_err(audit_err)?;

    let mut columns = vec!["t".to_string(), "S_gas".to_string(), "N".to_string()];
    for a in 0..dim {
        columns.push(["P_x", "P_y", "P_z"][a].to_string());
    }
    columns.push("E".to_string());
    let mut rows = Vec::with_capacity(states.len());
    for (t, s) in times.iter().zip(&states) {
        let m = s.moments();
        let mut row = vec![*t, s.entropy(), m.particles];
        row.extend(m.momentum.iter());
        row.push(m.energy);
        rows.push(row);
    }
    let entropies: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let (verdict, direction, min_inc, max_inc) = classify(&entropies);
    let mut audit = json!({
        "audited_column": "S_gas",
        "verdict": verdict,
        "direction": direction,
        "min_increment": min_inc,
        "max_increment": max_inc,
        "monotone": report.monotone,
        "conservation_drift": {
            "particles": report.drift.particles,
            "momentum": report.drift.momentum,
            "energy": report.drift.energy,
        },
        "tau": tau,
        "dt": dt,
        "steps": steps,
        "rows": rows.len(),
    });
    if random_initial {
        if let Some(s) = seed {
            audit["seed"] = json!(s);
        }
    }
    let series: Vec<&str> = columns.iter().skip(1).map(|s| s.as_str()).collect();
    let plot = plot_spec("t", &series);
    Ok(Outputs {
        columns,
        rows,
        audit,
        plot,
    })
}

fn parse_zrp_model(cfg: &Config) -> Result<ZrpModel, RunError> {
    let sites: usize = cfg.require("zrp", "sites")?;
    let rate = parse_rate(&cfg.require::<String>("zrp", "rate")?, &field("zrp", "rate"))?;
    let z_left: f64 = cfg.require("zrp", "z_left")?;
    let z_right: f64 = cfg.require("zrp", "z_right")?;
    ZrpModel::new(sites, rate, z_left, z_right).map_err(core_cfg("[zrp]"))
}

fn zrp_mc(cfg: &Config, seed: Option<u64>) -> Result<Outputs, RunError> {
    let model = parse_zrp_model(cfg)?;
    let sites = model.sites();
    let burn_in: f64 = cfg.get("zrp", "burn_in")?.unwrap_or(0.0);
    if !(burn_in >= 0.0) || !burn_in.is_finite() {
        return config_err(format!(
            "[zrp].burn_in must be nonnegative, got {burn_in}"
        ));
    }
    let thin: f64 = cfg.require("zrp", "thin")?;
    if !(thin > 0.0) || !thin.is_finite() {
        return config_err(format!("[zrp].thin must be positive, got {thin}"));
    }
    let samples: usize = cfg.require("zrp", "samples")?;
    if samples == 0 {
        return config_err("[zrp].samples must be at least 1");
    }
    let mut rng = need_seed(seed, "the event chain draws from it")?;

    // Record the state just before the chain crosses each sampling time, so
    // every row is the exact continuous-time state at that instant.
    let mut state = ZrpState::empty(sites);
    let mut events: u64 = 0;
    let mut rows = Vec::with_capacity(samples);
    let mut next_t = burn_in;
    while rows.len() < samples {
        let stepped = gillespie_step(&model, &state, &mut rng);
        events += 1;
        while rows.len() < samples && stepped.time >= next_t {
            let mut row = Vec::with_capacity(sites + 1);
            row.push(next_t);
            row.extend(state.occupations.iter().map(|&n| n as f64));
            rows.push(row);
            next_t += thin;
        }
        state = stepped;
    }

    let fugacities = ness_fugacity_profile(&model);
    let reference: Vec<f64> = fugacities
        .iter()
        .map(|&z| {
            SingleSiteMeasure::new(model.rate(), z, DENSITY_CAP)
                .map(|m| m.density())
                .map_err(audit_err)
        })
        .collect::<Result<_, _>>()?;
    let means: Vec<f64> = (0..sites)
        .map(|i| rows.iter().map(|r| r[i + 1]).sum::<f64>() / samples as f64)
        .collect();

    let mut audit = json!({
        "events": events,
        "samples": samples,
        "sites": sites,
        "burn_in": burn_in,
        "thin": thin,
        "mean_occupation": means,
        "reference_density": reference,
    });
    if samples >= 64 {
        let mut worst = 0.0f64;
        for i in 0..sites {
            let series: Vec<f64> = rows.iter().map(|r| r[i + 1]).collect();
            let (mean, se) = entrolab::zrp::batch_mean_se(&series, 32).map_err(audit_err)?;
            if se > 0.0 {
                worst = worst.max((mean - reference[i]).abs() / se);
            }
        }
        audit["worst_pull"] = json!(worst);
    }
    if let Some(s) = seed {
        audit["seed"] = json!(s);
    }

    let mut columns = vec!["t".to_string()];
    for i in 0..sites {
        columns.push(format!("n_{i}"));
    }
    let series: Vec<&str> = columns.iter().skip(1).map(|s| s.as_str()).collect();
    let plot = plot_spec("t", &series);
    Ok(Outputs {
        columns,
        rows,
        audit,
        plot,
    })
}

fn ldf_check(cfg: &Config, seed: Option<u64>) -> Result<Outputs, RunError> {
    let model = parse_zrp_model(cfg)?;
    let sites = model.sites();
    let coarse: usize = cfg.require("ldf", "coarse_cells")?;
    if coarse == 0 || sites % coarse != 0 {
        return config_err(format!(
            "[ldf].coarse_cells must divide [zrp].sites = {sites}, got {coarse}"
        ));
    }
    let targets = float_list(
        &cfg.require::<String>("ldf", "targets")?,
        &field("ldf", "targets"),
    )?;
    if targets.len() != coarse {
        return config_err(format!(
            "[ldf].targets lists {} values for {coarse} coarse cells",
            targets.len()
        ));
    }
    for &v in &targets {
        if !(v > 0.0) || !v.is_finite() {
            return config_err(format!(
                "[ldf].targets entries must be positive, got {v}"
            ));
        }
    }
    let mc_samples: usize = cfg.get("ldf", "mc_samples")?.unwrap_or(0);

    // The constitutive law matching the jump rates: Poisson marginals make it
    // the identity, geometric marginals the saturating law, anything else is
    // tabulated numerically.
    let sigma = match model.rate() {
        RateFunction::Linear => SigmaModel::Identity,
        RateFunction::Constant => SigmaModel::Saturating,
        RateFunction::Table(_) => {
            sigma_from_rates(&model, SIGMA_TABLE_POINTS).map_err(core_cfg("[zrp].rate"))?
        }
    };

    let per_cell = sites / coarse;
    let fugacities = ness_fugacity_profile(&model);
    let reference: Vec<f64> = (0..coarse)
        .map(|c| {
            let zs = &fugacities[c * per_cell..(c + 1) * per_cell];
            let mut acc = 0.0;
            for &z in zs {
                acc += SingleSiteMeasure::new(model.rate(), z, DENSITY_CAP)
                    .map_err(audit_err)?
                    .density();
            }
            Ok(acc / per_cell as f64)
        })
        .collect::<Result<_, RunError>>()?;

    let empirical = {
        let mut rng = if mc_samples > 0 {
            need_seed(seed, "the window sampling cross-check draws from it")?
        } else {
            ChaCha8Rng::seed_from_u64(0)
        };
        ldf_empirical(&model, coarse, &targets, mc_samples, &mut rng).map_err(|e| match e {
            CoreError::UnreachableTarget(_) => {
                RunError::Config(ConfigError(format!("[ldf].targets: {e}")))
            }
            other => RunError::Runtime(format!("rate estimate: {other}")),
        })?
    };

    // Unit-volume coarse cells make the functional the plain sum of the
    // per-cell rate densities.
    let grid = Grid::line(coarse, coarse as f64).map_err(core_cfg("[ldf].coarse_cells"))?;
    let rho = ScalarField::new(grid.clone(), targets.clone()).map_err(core_cfg("[ldf].targets"))?;
    let rho_bar = ScalarField::new(grid, reference.clone()).map_err(audit_err)?;
    let functional = ldf_zrp(&rho, &rho_bar, &sigma)
        .map_err(|e| RunError::Config(ConfigError(format!("[ldf].targets: {e}"))))?;
    let relative_gap = (empirical - functional).abs() / functional.abs().max(f64::MIN_POSITIVE);

    let mut rows = Vec::with_capacity(coarse);
    for c in 0..coarse {
        let increment = ldf_increment(reference[c], targets[c], &sigma)
            .map_err(|e| RunError::Config(ConfigError(format!("[ldf].targets: {e}"))))?;
        rows.push(vec![c as f64, targets[c], reference[c], increment]);
    }

    let mut audit = json!({
        "empirical": empirical,
        "functional": functional,
        "relative_gap": relative_gap,
        "coarse_cells": coarse,
        "sites_per_cell": per_cell,
        "mc_samples": mc_samples,
    });
    if mc_samples > 0 {
        if let Some(s) = seed {
            audit["seed"] = json!(s);
        }
    }
    Ok(Outputs {
        columns: string_cols(&["cell", "target", "reference", "functional_rate"]),
        rows,
        audit,
        plot: plot_spec("cell", &["target", "reference", "functional_rate"]),
    })
}

fn functional_eval(cfg: &Config, seed: Option<u64>) -> Result<Outputs, RunError> {
    let (cells, length) = parse_grid(cfg)?;
    let thermo = parse_thermo(
        &cfg.require::<String>("model", "thermo")?,
        &field("model", "thermo"),
    )?;
    let t_bath: Option<f64> = cfg.get("model", "bath_temperature")?;
    let profile = parse_profile(cfg)?;

    let grid = make_grid(cells, length)?;
    let energy = build_profile(&profile, &grid, length, None, seed)?;
    validate_energy(&energy, &thermo)?;

    let mut rows = Vec::with_capacity(cells);
    for (i, &e) in energy.values().iter().enumerate() {
        let x = grid.cell_center(i)[0];
        let t = thermo.temperature(e).map_err(audit_err)?;
        let s = thermo.entropy_density(e).map_err(audit_err)?;
        rows.push(vec![x, e, t, s]);
    }
    let e_total = integrate(&energy);
    let s_total = s_local_equilibrium(&energy, &thermo).map_err(audit_err)?;

    let mut audit = json!({
        "energy_total": e_total,
        "entropy_total": s_total,
        "cells": cells,
        "rows": rows.len(),
    });
    if let Some(tb) = t_bath {
        if !(tb > 0.0) || !tb.is_finite() {
            return config_err(format!(
                "[model].bath_temperature must be positive, got {tb}"
            ));
        }
        let f = free_energy_canonical(&energy, &thermo, tb).map_err(audit_err)?;
        audit["bath_temperature"] = json!(tb);
        audit["free_energy"] = json!(f);
    }
    if let Some(s) = seed_if_random(&profile, seed) {
        audit["seed"] = json!(s);
    }
    Ok(Outputs {
        columns: string_cols(&["x", "energy", "temperature", "entropy_density"]),
        rows,
        audit,
        plot: plot_spec("x", &["energy", "temperature", "entropy_density"]),
    })
}

/// Stable text listing of every model identifier the configs accept. The
/// tabulated constitutive laws are rebuilt at reference fugacities so the
/// listing reports their actual working ranges.
pub fn list_models() -> String {
    let mut out = String::new();
    out.push_str("thermo ideal-monatomic     e(T) = 1.5 T on T > 0\n");
    out.push_str("thermo ideal-gas:<c>       e(T) = c T on T > 0\n");
    out.push_str("kappa  constant:<k0>       kappa(T) = k0\n");
    out.push_str("kappa  proportional:<a>    kappa(T) = a T\n");
    out.push_str("sigma  identity            sigma(rho) = rho on rho > 0\n");
    out.push_str("sigma  power:<p>           sigma(rho) = rho^p on rho > 0, p > 0\n");
    out.push_str("sigma  saturating          sigma(rho) = rho / (1 + rho) on rho > 0\n");
    for (label, rate, z_ref) in [
        ("zrp-linear:<z>", RateFunction::Linear, 1.0),
        ("zrp-constant:<z>", RateFunction::Constant, 0.5),
    ] {
        let model =
            ZrpModel::new(1, rate, z_ref, z_ref).expect("reference rate model is well formed");
        let sigma = sigma_from_rates(&model, SIGMA_TABLE_POINTS)
            .expect("reference tabulation converges below the occupation cap");
        let (lo, hi) = sigma.working_interval();
        let z_lo = sigma.value(lo).expect("interval endpoint");
        let z_hi = sigma.value(hi).expect("interval endpoint");
        out.push_str(&format!(
            "sigma  {label:<19} tabulated from jump rates, occupation cap \
             {SIGMA_TABLE_POINTS}; at z = {z_ref}: densities [{lo:.6}, {hi:.6}], \
             fugacities [{z_lo:.6}, {z_hi:.6}]\n"
        ));
    }
    out.push_str("rate   linear              g(n) = n\n");
    out.push_str("rate   constant            g(n) = 1 for n >= 1\n");
    out.push_str("rate   table:<g1,...>      finite table, constant beyond the last knot\n");
    out
}
