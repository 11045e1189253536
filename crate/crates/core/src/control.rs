//! Physical parameters, control pulses and generation schedules.
//!
//! All rates are angular (rad/s) and all times are in seconds. Pulse shapes
//! and phases are expressed in window-local time: `t = 0` is the start of the
//! generation window they belong to.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::quadrature::{self, Tolerance};

/// Coupling and loss rates of one polarization branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchParams {
    /// Atom–cavity coupling g.
    pub g: f64,
    /// Raman detuning from the upper level.
    pub delta: f64,
    /// Cavity field decay rate into the outside continuum.
    pub kappa_c: f64,
    /// Mirror absorption rate.
    pub kappa_abs: f64,
    /// Spontaneous decay rate of the auxiliary upper level.
    pub gamma_sp: f64,
}

impl BranchParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("g", self.g),
            ("delta", self.delta),
            ("kappa_c", self.kappa_c),
            ("kappa_abs", self.kappa_abs),
            ("gamma_sp", self.gamma_sp),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} is not finite")));
            }
            if v <= 0.0 {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// |ḡ|² = g²/δ, the ac-Stark shift of the one-photon cavity state.
    pub fn g_bar_sq(&self) -> f64 {
        self.g * self.g / self.delta
    }

    /// Ω̄² = Ω²/(4δ), the ac-Stark shift of the initial level.
    pub fn omega_bar_sq(&self, omega: f64) -> f64 {
        omega * omega / (4.0 * self.delta)
    }

    /// r = ḡ Ω̄ = gΩ/(2δ).
    pub fn rate(&self, omega: f64) -> f64 {
        self.g * omega / (2.0 * self.delta)
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.delta.abs() < 10.0 * self.g {
            w.push(format!(
                "|delta|/g = {:.3} < 10: adiabatic elimination is marginal",
                self.delta.abs() / self.g
            ));
        }
        w
    }

    /// Multiplies every rate by `factor` (e.g. 2π for Hz input).
    pub fn scaled(self, factor: f64) -> Self {
        BranchParams {
            g: self.g * factor,
            delta: self.delta * factor,
            kappa_c: self.kappa_c * factor,
            kappa_abs: self.kappa_abs * factor,
            gamma_sp: self.gamma_sp * factor,
        }
    }
}

/// Envelope Ω(t) of a classical driving field, in rad/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PulseShape {
    /// `peak · exp(-((t - center)/width)²)`; `width` is the 1/e half-width of
    /// the amplitude.
    Gaussian { peak: f64, center: f64, width: f64 },
    ConstantWindow { amplitude: f64, start: f64, stop: f64 },
    /// `amplitude · sin²(π (t - start)/(stop - start))` inside the window.
    RaisedCosineWindow { amplitude: f64, start: f64, stop: f64 },
    /// Piecewise-linear interpolation, zero outside the table.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
}

impl PulseShape {
    pub fn off() -> Self {
        PulseShape::ConstantWindow {
            amplitude: 0.0,
            start: 0.0,
            stop: 0.0,
        }
    }

    pub fn amplitude(&self, t: f64) -> f64 {
        match self {
            PulseShape::Gaussian {
                peak,
                center,
                width,
            } => {
                let x = (t - center) / width;
                peak * (-x * x).exp()
            }
            PulseShape::ConstantWindow {
                amplitude,
                start,
                stop,
            } => {
                if t >= *start && t <= *stop {
                    *amplitude
                } else {
                    0.0
                }
            }
            PulseShape::RaisedCosineWindow {
                amplitude,
                start,
                stop,
            } => {
                if t >= *start && t <= *stop {
                    let s = (std::f64::consts::PI * (t - start) / (stop - start)).sin();
                    amplitude * s * s
                } else {
                    0.0
                }
            }
            PulseShape::Tabulated { times, values } => interpolate(times, values, t).unwrap_or(0.0),
        }
    }

    pub fn peak(&self) -> f64 {
        match self {
            PulseShape::Gaussian { peak, .. } => *peak,
            PulseShape::ConstantWindow { amplitude, start, stop }
            | PulseShape::RaisedCosineWindow { amplitude, start, stop } => {
                if stop > start {
                    *amplitude
                } else {
                    0.0
                }
            }
            PulseShape::Tabulated { values, .. } => values.iter().copied().fold(0.0, f64::max),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, PulseShape::ConstantWindow { .. })
    }

    /// Same shape with every amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut s = self.clone();
        match &mut s {
            PulseShape::Gaussian { peak, .. } => *peak *= factor,
            PulseShape::ConstantWindow { amplitude, .. }
            | PulseShape::RaisedCosineWindow { amplitude, .. } => *amplitude *= factor,
            PulseShape::Tabulated { values, .. } => values.iter_mut().for_each(|v| *v *= factor),
        }
        s
    }

    /// Points where the shape or its derivative is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            PulseShape::Gaussian { center, .. } => vec![*center],
            PulseShape::ConstantWindow { start, stop, .. }
            | PulseShape::RaisedCosineWindow { start, stop, .. } => vec![*start, *stop],
            PulseShape::Tabulated { times, .. } => times.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match self {
            PulseShape::Gaussian {
                peak,
                center,
                width,
            } => {
                ensure_finite(*peak, "gaussian peak")?;
                ensure_finite(*center, "gaussian center")?;
                ensure_finite(*width, "gaussian width")?;
                if *peak < 0.0 {
                    return bad(format!("gaussian peak must be >= 0, got {peak}"));
                }
                if *width <= 0.0 {
                    return bad(format!("gaussian width must be > 0, got {width}"));
                }
            }
            PulseShape::ConstantWindow {
                amplitude,
                start,
                stop,
            }
            | PulseShape::RaisedCosineWindow {
                amplitude,
                start,
                stop,
            } => {
                ensure_finite(*amplitude, "window amplitude")?;
                ensure_finite(*start, "window start")?;
                ensure_finite(*stop, "window stop")?;
                if *amplitude < 0.0 {
                    return bad(format!("window amplitude must be >= 0, got {amplitude}"));
                }
                if stop < start {
                    return bad(format!("window stop {stop} precedes start {start}"));
                }
            }
            PulseShape::Tabulated { times, values } => validate_table(times, values, true)?,
        }
        Ok(())
    }
}

/// How the laser phase φ(t) is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhasePolicy {
    /// φ(t) = |ḡ|² t − θ(t), so that θ_c ≡ 0.
    #[default]
    ChirpCompensated,
    Tabulated {
        times: Vec<f64>,
        values: Vec<f64>,
    },
    Zero,
}

impl PhasePolicy {
    pub fn validate(&self) -> Result<()> {
        match self {
            PhasePolicy::Tabulated { times, values } => validate_table(times, values, false),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlPulse {
    pub shape: PulseShape,
    #[serde(default)]
    pub phase: PhasePolicy,
}

impl ControlPulse {
    pub fn new(shape: PulseShape) -> Self {
        ControlPulse {
            shape,
            phase: PhasePolicy::ChirpCompensated,
        }
    }

    pub fn off() -> Self {
        ControlPulse::new(PulseShape::off())
    }

    pub fn with_phase(mut self, phase: PhasePolicy) -> Self {
        self.phase = phase;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        self.phase.validate()
    }
}

/// One photon-generation window `[start, start + duration]` with a control
/// pulse for each polarization branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSequence {
    pub start: f64,
    pub duration: f64,
    pub pulses: [ControlPulse; 2],
}

impl GenerationSequence {
    pub fn new(start: f64, duration: f64, pulses: [ControlPulse; 2]) -> Self {
        GenerationSequence {
            start,
            duration,
            pulses,
        }
    }

    /// Same pulse on both branches.
    pub fn symmetric(start: f64, duration: f64, pulse: ControlPulse) -> Self {
        GenerationSequence::new(start, duration, [pulse.clone(), pulse])
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn drive<'a>(&'a self, branch: usize, params: &'a BranchParams) -> Result<Drive<'a>> {
        if branch > 1 {
            return Err(Error::InvalidParameter(format!("branch {branch} out of range")));
        }
        Drive::new(&self.pulses[branch], params, self.start, self.duration, branch as u8)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(self.start, "sequence start")?;
        ensure_finite(self.duration, "sequence duration")?;
        if self.duration <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "sequence duration must be > 0, got {}",
                self.duration
            )));
        }
        for p in &self.pulses {
            p.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Event {
    Generation(GenerationSequence),
    /// Ideal reset |f_α⟩ → |i_α⟩ at the given time.
    Recycle { time: f64 },
    /// Atom-label rotation |f₀⟩ → d₀|f₀⟩ + d₁|f₁⟩, |f₁⟩ → −d₁*|f₀⟩ + d₀*|f₁⟩.
    Mixing { d0: C64, d1: C64 },
    /// Projective measurement of the atom onto m₀|f₀⟩ + m₁|f₁⟩ and its complement.
    Measurement { m0: C64, m1: C64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    /// Initial atomic amplitudes (c₀, c₁) on |i₀⟩, |i₁⟩.
    pub initial: [C64; 2],
    pub events: Vec<Event>,
}

impl Schedule {
    pub fn sequences(&self) -> impl Iterator<Item = &GenerationSequence> {
        self.events.iter().filter_map(|e| match e {
            Event::Generation(s) => Some(s),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Units {
    #[default]
    #[serde(rename = "rad_s")]
    RadPerSecond,
    #[serde(rename = "Hz")]
    Hertz,
}

impl Units {
    /// Factor converting the declared unit to rad/s.
    pub fn to_angular(self) -> f64 {
        match self {
            Units::RadPerSecond => 1.0,
            Units::Hertz => 2.0 * std::f64::consts::PI,
        }
    }
}

/// Standalone schedule file: parameters per branch plus the event list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleDocument {
    #[serde(default)]
    pub units: Units,
    /// One entry (shared by both branches) or two.
    pub params: Vec<BranchParams>,
    pub initial: [C64; 2],
    pub events: Vec<Event>,
}

impl ScheduleDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Converts to rad/s and splits into per-branch parameters and the schedule.
    pub fn resolve(&self) -> Result<([BranchParams; 2], Schedule)> {
        let params = branch_pair(&self.params)?;
        let factor = self.units.to_angular();
        let params = params.map(|p| p.scaled(factor));
        let schedule = Schedule {
            initial: self.initial,
            events: self.events.iter().map(|e| scale_event(e, factor)).collect(),
        };
        Ok((params, schedule))
    }
}

pub fn branch_pair(params: &[BranchParams]) -> Result<[BranchParams; 2]> {
    let pair = match params {
        [p] => [*p, *p],
        [p0, p1] => [*p0, *p1],
        _ => {
            return Err(Error::InvalidParameter(format!(
                "expected 1 or 2 branch parameter sets, got {}",
                params.len()
            )))
        }
    };
    for p in &pair {
        p.validate()?;
    }
    Ok(pair)
}

pub fn scale_pulse(pulse: &ControlPulse, factor: f64) -> ControlPulse {
    ControlPulse {
        shape: pulse.shape.scaled(factor),
        phase: pulse.phase.clone(),
    }
}

fn scale_event(event: &Event, factor: f64) -> Event {
    match event {
        Event::Generation(s) => Event::Generation(GenerationSequence {
            start: s.start,
            duration: s.duration,
            pulses: [scale_pulse(&s.pulses[0], factor), scale_pulse(&s.pulses[1], factor)],
        }),
        other => other.clone(),
    }
}

/// Accumulated phases at a given window-local time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phases {
    /// θ(t) = ∫₀ᵗ Ω̄² dt′
    pub theta: f64,
    /// μ(t) = ∫₀ᵗ r²/κ_c dt′
    pub mu: f64,
    /// θ_c(t) = θ + φ − |ḡ|² t
    pub theta_c: f64,
}

/// A control pulse bound to the parameters and window of one branch.
#[derive(Debug, Clone, Copy)]
pub struct Drive<'a> {
    pub pulse: &'a ControlPulse,
    pub params: &'a BranchParams,
    /// Absolute start time of the window.
    pub start: f64,
    pub duration: f64,
    pub branch: u8,
}

impl<'a> Drive<'a> {
    pub fn new(
        pulse: &'a ControlPulse,
        params: &'a BranchParams,
        start: f64,
        duration: f64,
        branch: u8,
    ) -> Result<Self> {
        params.validate()?;
        pulse.validate()?;
        ensure_finite(start, "window start")?;
        ensure_finite(duration, "window duration")?;
        if duration <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "window duration must be > 0, got {duration}"
            )));
        }
        Ok(Drive {
            pulse,
            params,
            start,
            duration,
            branch,
        })
    }

    pub fn kappa(&self) -> f64 {
        self.params.kappa_c
    }

    pub fn omega(&self, t: f64) -> f64 {
        self.pulse.shape.amplitude(t)
    }

    pub fn rate(&self, t: f64) -> f64 {
        self.params.rate(self.omega(t))
    }

    pub fn stark(&self, t: f64) -> f64 {
        self.params.omega_bar_sq(self.omega(t))
    }

    pub fn mu_rate(&self, t: f64) -> f64 {
        let r = self.rate(t);
        r * r / self.params.kappa_c
    }

    pub fn peak_rate(&self) -> f64 {
        self.params.rate(self.pulse.shape.peak())
    }

    pub fn is_driven(&self) -> bool {
        self.pulse.shape.peak() > 0.0
    }

    fn breaks(&self) -> Vec<f64> {
        let mut b = self.pulse.shape.breakpoints();
        if let PhasePolicy::Tabulated { times, .. } = &self.pulse.phase {
            b.extend_from_slice(times);
        }
        b
    }

    pub fn theta(&self, t: f64) -> Result<f64> {
        quadrature::integrate_with_breaks(|s| self.stark(s), 0.0, t, &self.breaks(), phase_tol())
    }

    pub fn mu(&self, t: f64) -> Result<f64> {
        quadrature::integrate_with_breaks(|s| self.mu_rate(s), 0.0, t, &self.breaks(), phase_tol())
    }

    /// Laser phase φ(t) given the already accumulated θ(t).
    pub fn phi(&self, t: f64, theta: f64) -> f64 {
        match &self.pulse.phase {
            PhasePolicy::ChirpCompensated => self.params.g_bar_sq() * t - theta,
            PhasePolicy::Tabulated { times, values } => {
                interpolate(times, values, t).unwrap_or_else(|| {
                    // hold the end values outside the table
                    if t < times[0] {
                        values[0]
                    } else {
                        values[values.len() - 1]
                    }
                })
            }
            PhasePolicy::Zero => 0.0,
        }
    }

    pub fn theta_c(&self, t: f64, theta: f64) -> f64 {
        match self.pulse.phase {
            PhasePolicy::ChirpCompensated => 0.0,
            _ => theta + self.phi(t, theta) - self.params.g_bar_sq() * t,
        }
    }

    pub fn phases(&self, t: f64) -> Result<Phases> {
        ensure_finite(t, "time")?;
        if t < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "time {t} precedes the window start"
            )));
        }
        let theta = self.theta(t)?;
        let mu = self.mu(t)?;
        Ok(Phases {
            theta,
            mu,
            theta_c: self.theta_c(t, theta),
        })
    }

    /// θ, μ, φ and θ_c tabulated on an increasing window-local grid starting at 0.
    pub fn phase_table(&self, grid: &[f64]) -> Result<PhaseTable> {
        let breaks = self.breaks();
        let mut theta = Vec::with_capacity(grid.len());
        let mut mu = Vec::with_capacity(grid.len());
        let (mut th, mut m) = (0.0, 0.0);
        let mut left = 0.0;
        for &t in grid {
            th += quadrature::integrate_with_breaks(|s| self.stark(s), left, t, &breaks, phase_tol())?;
            m += quadrature::integrate_with_breaks(|s| self.mu_rate(s), left, t, &breaks, phase_tol())?;
            theta.push(th);
            mu.push(m);
            left = t;
        }
        let phi = grid.iter().zip(&theta).map(|(&t, &th)| self.phi(t, th)).collect();
        let theta_c = grid
            .iter()
            .zip(&theta)
            .map(|(&t, &th)| self.theta_c(t, th))
            .collect();
        Ok(PhaseTable {
            times: grid.to_vec(),
            theta,
            mu,
            phi,
            theta_c,
        })
    }

    /// Upper bound on |d(θ + φ)/dt| over the window, used to size time grids.
    pub fn phase_rate_bound(&self) -> f64 {
        let stark_max = self.params.omega_bar_sq(self.pulse.shape.peak());
        match &self.pulse.phase {
            PhasePolicy::ChirpCompensated => self.params.g_bar_sq(),
            PhasePolicy::Zero => stark_max,
            PhasePolicy::Tabulated { times, values } => {
                let slope = times
                    .windows(2)
                    .zip(values.windows(2))
                    .map(|(t, v)| ((v[1] - v[0]) / (t[1] - t[0])).abs())
                    .fold(0.0, f64::max);
                stark_max + slope
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct PhaseTable {
    pub times: Vec<f64>,
    pub theta: Vec<f64>,
    pub mu: Vec<f64>,
    pub phi: Vec<f64>,
    pub theta_c: Vec<f64>,
}

fn phase_tol() -> Tolerance {
    Tolerance {
        abs: 1e-14,
        rel: 1e-12,
    }
}

/// r(t) for a pulse at window-local time `t`.
pub fn effective_rate(pulse: &ControlPulse, params: &BranchParams, t: f64) -> Result<f64> {
    params.validate()?;
    pulse.validate()?;
    ensure_finite(t, "time")?;
    ensure_finite(params.rate(pulse.shape.amplitude(t)), "effective rate")
}

/// θ(t), μ(t) and θ_c(t) by adaptive quadrature from the window start.
pub fn accumulated_phases(pulse: &ControlPulse, params: &BranchParams, t: f64) -> Result<Phases> {
    let duration = t.max(f64::MIN_POSITIVE);
    Drive::new(pulse, params, 0.0, duration, 0)?.phases(t)
}

/// Scales the pulse amplitude so that μ at the end of the window equals `mu_target`.
pub fn calibrate_for_mu(
    pulse: &ControlPulse,
    params: &BranchParams,
    duration: f64,
    mu_target: f64,
) -> Result<ControlPulse> {
    let mu = Drive::new(pulse, params, 0.0, duration, 0)?.mu(duration)?;
    if mu <= 0.0 {
        return Err(Error::ZeroNorm("pulse area"));
    }
    Ok(scale_pulse(pulse, (mu_target / mu).sqrt()))
}

#[derive(Debug, Clone)]
pub struct ValidationOptions {
    pub mu_min: f64,
    pub edge_ratio: f64,
    pub norm_tol: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            mu_min: 3.0,
            edge_ratio: 1e-6,
            norm_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ScheduleReport {
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl ScheduleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }
}

/// Checks the structural and physical constraints of a schedule. Never fails;
/// every problem is reported as a failed check.
pub fn validate_schedule(
    schedule: &Schedule,
    params: &[BranchParams; 2],
    opts: &ValidationOptions,
) -> ScheduleReport {
    let mut report = ScheduleReport::default();

    for (b, p) in params.iter().enumerate() {
        match p.validate() {
            Ok(()) => report.push(format!("params[{b}]"), true, "ok"),
            Err(e) => report.push(format!("params[{b}]"), false, e.to_string()),
        }
        report.warnings.extend(p.warnings());
    }

    let norm = |a: C64, b: C64| a.norm_sqr() + b.norm_sqr();
    let n0 = norm(schedule.initial[0], schedule.initial[1]);
    report.push(
        "initial_norm",
        (n0 - 1.0).abs() <= opts.norm_tol,
        format!("|c0|^2 + |c1|^2 = {n0:.12}"),
    );

    // ordering: a recycle between generations, measurement last and unique
    let mut last_generation: Option<usize> = None;
    let mut recycled_since = true;
    let mut measurements = 0;
    let mut order_ok = true;
    let mut order_detail = String::from("ok");
    let mut last_time = f64::NEG_INFINITY;
    for (i, ev) in schedule.events.iter().enumerate() {
        if measurements > 0 {
            order_ok = false;
            order_detail = format!("event {i} follows the measurement");
        }
        match ev {
            Event::Generation(s) => {
                if !recycled_since {
                    order_ok = false;
                    order_detail = format!("no recycle before generation event {i}");
                }
                if s.start < last_time {
                    order_ok = false;
                    order_detail = format!("generation event {i} starts before preceding events");
                }
                last_time = s.end();
                last_generation = Some(i);
                recycled_since = false;
            }
            Event::Recycle { time } => {
                if *time < last_time {
                    order_ok = false;
                    order_detail = format!("recycle event {i} at {time:e} precedes the window end");
                }
                last_time = last_time.max(*time);
                recycled_since = true;
            }
            Event::Mixing { d0, d1 } => {
                let n = norm(*d0, *d1);
                report.push(
                    format!("mixing_norm[{i}]"),
                    (n - 1.0).abs() <= opts.norm_tol,
                    format!("|d0|^2 + |d1|^2 = {n:.12}"),
                );
            }
            Event::Measurement { m0, m1 } => {
                measurements += 1;
                let n = norm(*m0, *m1);
                report.push(
                    "measurement_norm",
                    (n - 1.0).abs() <= opts.norm_tol,
                    format!("|m0|^2 + |m1|^2 = {n:.12}"),
                );
            }
        }
    }
    if measurements > 1 {
        order_ok = false;
        order_detail = format!("{measurements} measurements (at most one allowed)");
    }
    let _ = last_generation;
    report.push("ordering", order_ok, order_detail);

    let seqs: Vec<&GenerationSequence> = schedule.sequences().collect();
    let mut overlap = None;
    for i in 0..seqs.len() {
        for j in i + 1..seqs.len() {
            let (a, b) = (seqs[i], seqs[j]);
            if a.start < b.end() && b.start < a.end() {
                overlap = Some((i, j));
            }
        }
    }
    match overlap {
        None => report.push("overlap", true, "windows are disjoint"),
        Some((i, j)) => report.push(
            "overlap",
            false,
            format!("overlap between sequences {i} and {j}"),
        ),
    }

    for (i, seq) in seqs.iter().enumerate() {
        if let Err(e) = seq.validate() {
            report.push(format!("sequence[{i}]"), false, e.to_string());
            continue;
        }
        for (b, branch_params) in params.iter().enumerate() {
            let drive = match seq.drive(b, branch_params) {
                Ok(d) => d,
                Err(e) => {
                    report.push(format!("sequence[{i}].branch[{b}]"), false, e.to_string());
                    continue;
                }
            };
            if !drive.is_driven() {
                continue;
            }
            match drive.mu(seq.duration) {
                Ok(mu) => report.push(
                    format!("mu[{i}][{b}]"),
                    mu >= opts.mu_min,
                    format!("mu(T) = {mu:.6} (minimum {})", opts.mu_min),
                ),
                Err(e) => report.push(format!("mu[{i}][{b}]"), false, e.to_string()),
            }
            let shape = &seq.pulses[b].shape;
            if !shape.is_constant() {
                let peak = shape.peak();
                let edge = shape.amplitude(0.0).max(shape.amplitude(seq.duration));
                report.push(
                    format!("smooth_off[{i}][{b}]"),
                    edge <= opts.edge_ratio * peak,
                    format!("edge/peak = {:.3e}", edge / peak),
                );
            }
            let ratio = drive.peak_rate() / params[b].kappa_c;
            if ratio > 1.0 {
                report.warnings.push(format!(
                    "sequence {i} branch {b}: r_max/kappa_c = {ratio:.3} > 1 (not overdamped)"
                ));
            }
        }
    }
    report
}

fn validate_table(times: &[f64], values: &[f64], nonnegative: bool) -> Result<()> {
    if times.len() != values.len() {
        return Err(Error::InvalidParameter(format!(
            "table has {} times but {} values",
            times.len(),
            values.len()
        )));
    }
    if times.len() < 2 {
        return Err(Error::InvalidParameter("table needs at least two points".into()));
    }
    for (t, v) in times.iter().zip(values) {
        ensure_finite(*t, "table time")?;
        ensure_finite(*v, "table value")?;
        if nonnegative && *v < 0.0 {
            return Err(Error::InvalidParameter(format!("negative amplitude {v} in table")));
        }
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("table times must increase strictly".into()));
    }
    Ok(())
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> Option<f64> {
    let n = times.len();
    if n == 0 || t < times[0] || t > times[n - 1] {
        return None;
    }
    let idx = times.partition_point(|&x| x <= t);
    if idx >= n {
        return Some(values[n - 1]);
    }
    let i = idx.saturating_sub(1);
    let (t0, t1) = (times[i], times[idx]);
    let w = (t - t0) / (t1 - t0);
    Some(values[i] * (1.0 - w) + values[idx] * w)
}
