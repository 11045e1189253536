//! Experiment drivers. Each command computes everything in memory and hands
//! back the files to write, so a failure never leaves partial output.

use cqed_core::control::{validate_schedule, ValidationOptions};
use cqed_core::decoherence::{self, write_curves_csv, FidelityCurve, MesTarget, RNG_ALGORITHM};
use cqed_core::markov::{self, EnvelopeMethod, EnvelopeOptions, FrequencyGrid};
use cqed_core::presets;
use cqed_core::reservoir::{self, write_convergence_csv, ModeGrid, ReservoirOptions, TwoPhotonSchedule};
use cqed_core::sequence::{self, BitString, EngineerOptions, NQubitState, Outcome, Sign};
use cqed_core::{BranchParams, Error, Result};
use serde::Serialize;

use crate::config::{sign_name, GridConfig, Method, ScenarioConfig};

pub struct Context {
    pub seed: u64,
    pub allow_large: bool,
}

pub struct Output {
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: String,
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn branch_index(b: usize) -> Result<usize> {
    if b < 2 {
        Ok(b)
    } else {
        Err(Error::InvalidParameter(format!("branch must be 0 or 1, got {b}")))
    }
}

fn guard(what: &str, value: usize, cap: usize, ctx: &Context) -> Result<()> {
    if value > cap && !ctx.allow_large {
        return Err(Error::ResourceLimit(format!(
            "{what} = {value} exceeds the cap of {cap}; raise the limit in the config or pass --allow-large"
        )));
    }
    Ok(())
}

/// Structural checks on a user schedule. Failures of physical checks
/// (μ(T), smooth switch-off) are returned as warnings.
fn check_schedule(cfg: &ScenarioConfig, params: &[BranchParams; 2], allow_overlap: bool) -> Result<Vec<String>> {
    let Some(schedule) = cfg.schedule() else {
        return Ok(Vec::new());
    };
    let report = validate_schedule(&schedule, params, &ValidationOptions::default());
    let mut warnings = report.warnings.clone();
    let mut fatal = Vec::new();
    for c in report.failures() {
        let soft = c.name.starts_with("mu[")
            || c.name.starts_with("smooth_off[")
            || (allow_overlap && (c.name == "overlap" || c.name == "ordering"));
        if soft {
            warnings.push(format!("{}: {}", c.name, c.detail));
        } else {
            fatal.push(format!("{}: {}", c.name, c.detail));
        }
    }
    if !fatal.is_empty() {
        return Err(Error::Schedule(fatal.join("; ")));
    }
    Ok(warnings)
}

#[derive(Serialize)]
struct EnvelopeSummary {
    branch: usize,
    method: Method,
    modes: usize,
    width_rad_per_s: f64,
    window_start: f64,
    duration: f64,
    peak_rabi: f64,
    mu_end: f64,
    emission_probability: f64,
    final_initial_population: f64,
    final_cavity_population: f64,
    envelope_norm: f64,
    warnings: Vec<String>,
}

pub fn envelope(cfg: &ScenarioConfig, ctx: &Context) -> Result<Output> {
    let params = cfg.params()?;
    let warnings = check_schedule(cfg, &params, false)?;
    let ec = &cfg.envelope;
    let b = branch_index(ec.branch)?;
    let seq = cfg.sequence(ec.sequence, presets::paper_sequence)?;
    seq.validate()?;
    let drive = seq.drive(b, &params[b])?;
    let grid = cfg.grid.unwrap_or(GridConfig {
        modes: 1024,
        width_kappa: 80.0,
    });
    guard("modes", grid.modes, cfg.limits.max_modes, ctx)?;
    let freq = FrequencyGrid::in_kappa(params[b].kappa_c, grid.modes, grid.width_kappa)?;
    let mut opts = EnvelopeOptions::default();
    if ec.relaxed {
        opts = opts.relaxed();
    }
    let method = match ec.method {
        Method::FullOde => EnvelopeMethod::FullOde,
        Method::Overdamped => EnvelopeMethod::Overdamped,
    };
    let env = markov::spectral_envelope(&drive, &freq, method, &opts)?;
    let traj = markov::solve_amplitudes(&drive, opts.min_intervals, opts.tol)?;
    let summary = EnvelopeSummary {
        branch: b,
        method: ec.method,
        modes: grid.modes,
        width_rad_per_s: freq.width(),
        window_start: seq.start,
        duration: seq.duration,
        peak_rabi: seq.pulses[b].shape.peak(),
        mu_end: drive.mu(seq.duration)?,
        emission_probability: markov::emission_probability(&traj),
        final_initial_population: traj.final_ci().norm_sqr(),
        final_cavity_population: traj.final_cf().norm_sqr(),
        envelope_norm: env.norm_sqr(),
        warnings,
    };
    let text = format!(
        "envelope: branch {b}, mu(T) = {:.4}, emission probability = {:.6}, envelope norm = {:.6}",
        summary.mu_end, summary.emission_probability, summary.envelope_norm
    );
    Ok(Output {
        files: vec![
            ("envelope.csv".into(), csv_bytes(|w| env.write_csv(w))?),
            ("envelope_summary.json".into(), json(&summary)?),
        ],
        summary: text,
    })
}

#[derive(Serialize)]
struct MarkovSummary {
    branch: usize,
    duration: f64,
    mu_end: f64,
    rows: Vec<reservoir::MarkovComparison>,
    warnings: Vec<String>,
}

pub fn validate_markov(cfg: &ScenarioConfig, ctx: &Context) -> Result<Output> {
    let params = cfg.params()?;
    let warnings = check_schedule(cfg, &params, false)?;
    let mc = &cfg.markov;
    let b = branch_index(mc.branch)?;
    let seq = cfg.sequence(mc.sequence, presets::markov_check_short)?;
    seq.validate()?;
    let drive = seq.drive(b, &params[b])?;
    // constant spacing: the band doubles with N
    let sweep = mc.sweep.clone().unwrap_or_else(|| {
        [128, 256, 512, 1024]
            .into_iter()
            .map(|modes| GridConfig {
                modes,
                width_kappa: modes as f64 * 40.0 / 256.0,
            })
            .collect()
    });
    if sweep.is_empty() {
        return Err(Error::InvalidParameter("empty (N, W) sweep".into()));
    }
    for g in &sweep {
        guard("modes", g.modes, cfg.limits.max_modes, ctx)?;
    }
    let kappa = params[b].kappa_c;
    let pairs: Vec<(usize, f64)> = sweep.iter().map(|g| (g.modes, g.width_kappa * kappa)).collect();
    let rows = reservoir::convergence_sweep(&drive, &pairs, &ReservoirOptions::default(), &EnvelopeOptions::default())?;
    let mut text = String::from("validate-markov:");
    for r in &rows {
        text.push_str(&format!(
            "\n  N = {:5}, W = {:.1} kappa: error = {:.3e}{}",
            r.modes,
            r.width / kappa,
            r.error,
            if r.wraps { " (reservoir revival inside the window)" } else { "" }
        ));
    }
    let summary = MarkovSummary {
        branch: b,
        duration: seq.duration,
        mu_end: drive.mu(seq.duration)?,
        rows: rows.clone(),
        warnings,
    };
    Ok(Output {
        files: vec![
            ("markov_convergence.csv".into(), csv_bytes(|w| write_convergence_csv(&rows, w))?),
            ("markov_summary.json".into(), json(&summary)?),
        ],
        summary: text,
    })
}

#[derive(Serialize)]
struct FactorizationSummary {
    branch: usize,
    modes: usize,
    width_rad_per_s: f64,
    first_window: [f64; 2],
    second_window: [f64; 2],
    /// `None` when the two-photon sector stays empty.
    factorization_error: Option<f64>,
    two_photon_norm: f64,
    discarded_at_recycle: f64,
    unfinished: f64,
    max_norm_drift: f64,
    overlapping: bool,
    warnings: Vec<String>,
}

pub fn factorization(cfg: &ScenarioConfig, ctx: &Context) -> Result<Output> {
    let params = cfg.params()?;
    let fc = &cfg.factorization;
    let warnings = check_schedule(cfg, &params, fc.allow_overlap)?;
    let b = branch_index(fc.branch)?;
    let schedule = match cfg.schedule() {
        None => TwoPhotonSchedule {
            branch: b,
            allow_overlap: fc.allow_overlap,
            ..presets::two_photon_schedule(&params[b])?
        },
        Some(s) => {
            let seqs: Vec<_> = s.sequences().cloned().collect();
            if seqs.len() != 2 {
                return Err(Error::InvalidParameter(format!(
                    "factorization needs exactly two generation events, got {}",
                    seqs.len()
                )));
            }
            TwoPhotonSchedule {
                branch: b,
                first: seqs[0].clone(),
                second: seqs[1].clone(),
                allow_overlap: fc.allow_overlap,
            }
        }
    };
    let grid = cfg.grid.unwrap_or(GridConfig {
        modes: 256,
        width_kappa: 40.0,
    });
    guard("two-photon modes", grid.modes, cfg.limits.max_two_photon_modes, ctx)?;
    let modes = ModeGrid::in_kappa(params[b].kappa_c, grid.modes, grid.width_kappa)?;
    let opts = ReservoirOptions::default();
    let run = reservoir::integrate_two_photon(&schedule, &params[b], &modes, &opts)?;
    let (error, overlapping) = if run.two_photon_norm > 0.0 {
        let rep = reservoir::factorization_report(&run, &schedule, &params[b], &opts)?;
        (Some(rep.error), rep.overlapping)
    } else {
        (None, schedule.second.start < schedule.first.end())
    };
    let summary = FactorizationSummary {
        branch: b,
        modes: grid.modes,
        width_rad_per_s: modes.width(),
        first_window: [schedule.first.start, schedule.first.end()],
        second_window: [schedule.second.start, schedule.second.end()],
        factorization_error: error,
        two_photon_norm: run.two_photon_norm,
        discarded_at_recycle: run.discarded_at_recycle,
        unfinished: run.unfinished,
        max_norm_drift: run.max_norm_drift,
        overlapping,
        warnings,
    };
    let text = match error {
        Some(e) => format!(
            "factorization: N = {}, error = {e:.3e}, two-photon norm = {:.6}{}",
            grid.modes,
            run.two_photon_norm,
            if overlapping { " (overlapping windows)" } else { "" }
        ),
        None => format!("factorization: N = {}, two-photon sector is empty", grid.modes),
    };
    Ok(Output {
        files: vec![
            ("factorization.json".into(), json(&summary)?),
            ("two_photon_density.csv".into(), csv_bytes(|w| run.write_density_csv(w))?),
        ],
        summary: text,
    })
}

#[derive(Serialize)]
struct CurveSummary {
    label: String,
    eps_m: f64,
    delta_m: f64,
    mode: decoherence::FidelityMode,
    points: Vec<decoherence::CurvePoint>,
}

#[derive(Serialize)]
struct FidelitySummary {
    seed: u64,
    rng: &'static str,
    samples: usize,
    pattern: String,
    sign: &'static str,
    curves: Vec<CurveSummary>,
}

pub fn fidelity_sweep(cfg: &ScenarioConfig, ctx: &Context) -> Result<Output> {
    let fc = &cfg.fidelity;
    guard("samples", fc.samples, cfg.limits.max_samples, ctx)?;
    let curves_cfg = fc.curves()?;
    let pattern = fc.pattern()?;
    let target = MesTarget {
        pattern,
        sign: fc.sign,
    };
    let modes = fc.mode.modes();
    let mut curves: Vec<FidelityCurve> = Vec::new();
    let mut labels = Vec::new();
    for (label, dist) in &curves_cfg {
        let pair = decoherence::fidelity_curves(&target, dist, fc.samples, ctx.seed)?;
        for c in pair {
            if modes.contains(&c.mode) {
                labels.push(label.clone());
                curves.push(c);
            }
        }
    }
    let mut text = format!("fidelity-sweep: {} samples, seed {}", fc.samples, ctx.seed);
    for (label, c) in labels.iter().zip(&curves) {
        let last = c.points.last().unwrap();
        text.push_str(&format!(
            "\n  ({label}) eps_m = {}, delta_m = {}, {:?}: F({}) = {:.4} +/- {:.4}",
            c.distribution.eps_m, c.distribution.delta_m, c.mode, last.n, last.mean_fidelity, last.std_error
        ));
    }
    let summary = FidelitySummary {
        seed: ctx.seed,
        rng: RNG_ALGORITHM,
        samples: fc.samples,
        pattern: pattern.to_string(),
        sign: sign_name(fc.sign),
        curves: labels
            .iter()
            .zip(&curves)
            .map(|(label, c)| CurveSummary {
                label: label.clone(),
                eps_m: c.distribution.eps_m,
                delta_m: c.distribution.delta_m,
                mode: c.mode,
                points: c.points.clone(),
            })
            .collect(),
    };
    Ok(Output {
        files: vec![
            ("fidelity_curves.csv".into(), csv_bytes(|w| write_curves_csv(&curves, w, true))?),
            ("fidelity_summary.json".into(), json(&summary)?),
        ],
        summary: text,
    })
}

#[derive(Serialize)]
struct EngineerReport {
    seed: u64,
    starts: usize,
    target: NQubitState,
    program: sequence::EngineeredProgram,
}

pub fn engineer(cfg: &ScenarioConfig, ctx: &Context) -> Result<Output> {
    let ec = &cfg.engineer;
    let target = match &ec.target {
        Some(t) => t.clone(),
        None => NQubitState::ghz(ec.ghz)?,
    };
    let opts = EngineerOptions {
        starts: ec.starts,
        seed: ctx.seed,
        ..EngineerOptions::default()
    };
    let program = sequence::engineer_state(&target, &opts)?;
    let text = format!(
        "engineer: {} qubits, fidelity = {:.10}, success probability = {:.6}, {} of {} state parameters reachable",
        target.qubits(),
        program.fidelity,
        program.probability,
        program.budget.free_params,
        program.budget.state_dim_params
    );
    let report = EngineerReport {
        seed: ctx.seed,
        starts: ec.starts,
        target,
        program,
    };
    Ok(Output {
        files: vec![("engineered_program.json".into(), json(&report)?)],
        summary: text,
    })
}

pub fn feasibility(cfg: &ScenarioConfig, _ctx: &Context) -> Result<Output> {
    let params = cfg.params()?;
    let fc = &cfg.feasibility;
    let b = branch_index(fc.branch)?;
    let seq = cfg.sequence(fc.sequence, |p| Ok(presets::paper_literal_sequence(p)))?;
    seq.validate()?;
    let rep = decoherence::feasibility(
        &params[b],
        &seq.pulses[b],
        seq.duration,
        fc.overhead_windows * seq.duration,
        fc.rel_intensity_fluct,
    )?;
    let text = format!(
        "feasibility: p_sp = {:.3e} per cycle, cycle rate = {:.3e} /s, n_max = {:.0}",
        rep.p_sp, rep.cycle_rate, rep.n_max
    );
    Ok(Output {
        files: vec![("feasibility.json".into(), json(&rep)?)],
        summary: text,
    })
}

#[derive(Serialize)]
struct OutcomeReport {
    outcome: Outcome,
    probability: f64,
    state: Option<NQubitState>,
}

#[derive(Serialize)]
struct GhzReport {
    pattern: String,
    sign: &'static str,
    fidelity: f64,
    text: String,
    state: NQubitState,
}

pub fn ghz(cfg: &ScenarioConfig, _ctx: &Context) -> Result<Output> {
    if let Some(schedule) = cfg.schedule() {
        let params = cfg.params()?;
        check_schedule(cfg, &params, false)?;
        let (_, outcomes) = sequence::run_schedule(&schedule)?;
        let outcomes = outcomes.ok_or_else(|| Error::Schedule("schedule has no measurement event".into()))?;
        let mut text = String::from("ghz: schedule outcomes");
        let reports: Vec<OutcomeReport> = outcomes
            .into_iter()
            .map(|o| {
                text.push_str(&format!("\n  {:?} (p = {:.6})", o.outcome, o.probability));
                if let Some(s) = &o.state {
                    text.push_str(&format!(": {}", s.to_text()));
                }
                OutcomeReport {
                    outcome: o.outcome,
                    probability: o.probability,
                    state: o.state,
                }
            })
            .collect();
        return Ok(Output {
            files: vec![("ghz_outcomes.json".into(), json(&reports)?)],
            summary: text,
        });
    }
    let gc = &cfg.ghz;
    let pattern = match &gc.pattern {
        Some(p) => p.parse::<BitString>()?,
        None => BitString::zeros(gc.n),
    };
    let state = sequence::build_mes_pattern(pattern, gc.sign)?;
    let ideal = NQubitState::mes(pattern, gc.sign)?;
    let report = GhzReport {
        pattern: pattern.to_string(),
        sign: sign_name(gc.sign),
        fidelity: state.fidelity(&ideal),
        text: state.to_text(),
        state,
    };
    let text = format!("ghz: {} (fidelity {:.12})", report.text, report.fidelity);
    Ok(Output {
        files: vec![("ghz_state.json".into(), json(&report)?)],
        summary: text,
    })
}

pub fn parse_sign(s: &str) -> std::result::Result<Sign, String> {
    match s {
        "plus" | "+" => Ok(Sign::Plus),
        "minus" | "-" => Ok(Sign::Minus),
        _ => Err(format!("expected plus or minus, got {s}")),
    }
}
