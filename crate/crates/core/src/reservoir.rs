//! Exact evolution against a discretized output continuum.
//!
//! The cavity couples to `N` modes `ω_k` with constant strength
//! `κ_q = √(κ_c Δω / π)`. All diagonal phases are removed analytically, so the
//! remaining generator is anti-Hermitian and each step is an implicit-midpoint
//! (Cayley) map solved in closed form. Norm is therefore conserved to
//! round-off and monitored at every step.

use std::io::Write;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::control::{BranchParams, Drive, GenerationSequence, PhasePolicy};
use crate::error::{ensure_finite, Error, Result};
use crate::markov::{self, fmt_f64, EnvelopeMethod, EnvelopeOptions, FrequencyGrid, SpectralEnvelope};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Discrete reservoir modes and their coupling to the cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeGrid {
    pub freq: FrequencyGrid,
    pub kappa: f64,
}

impl ModeGrid {
    pub fn new(kappa: f64, modes: usize, width: f64) -> Result<Self> {
        ensure_finite(kappa, "kappa")?;
        if kappa <= 0.0 {
            return Err(Error::InvalidParameter(format!("kappa must be > 0, got {kappa}")));
        }
        if modes < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 modes, got {modes}")));
        }
        Ok(ModeGrid {
            freq: FrequencyGrid::centered(modes, width)?,
            kappa,
        })
    }

    /// `modes` modes over a band of `width_kappa · kappa`.
    pub fn in_kappa(kappa: f64, modes: usize, width_kappa: f64) -> Result<Self> {
        Self::new(kappa, modes, width_kappa * kappa)
    }

    pub fn len(&self) -> usize {
        self.freq.len
    }

    pub fn is_empty(&self) -> bool {
        self.freq.len == 0
    }

    pub fn spacing(&self) -> f64 {
        self.freq.step
    }

    pub fn width(&self) -> f64 {
        self.freq.width()
    }

    pub fn coupling(&self) -> f64 {
        (self.kappa * self.freq.step / std::f64::consts::PI).sqrt()
    }

    /// Recurrence time 2π/Δω of the discrete reservoir.
    pub fn revival_time(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.freq.step
    }

    /// Whether emission lasting `span` reaches the recurrence time.
    pub fn wraps(&self, span: f64) -> bool {
        span >= self.revival_time()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReservoirOptions {
    /// Steps per unit of the fastest rate (band width, κ_c, peak drive).
    pub steps_per_rate: f64,
    pub norm_budget: f64,
    pub max_steps: usize,
    /// Largest amplitude left outside the emitted sector when a window is
    /// closed (amplitude for the cavity, norm at a recycle).
    pub residual_threshold: f64,
}

impl Default for ReservoirOptions {
    fn default() -> Self {
        ReservoirOptions {
            steps_per_rate: 20.0,
            norm_budget: 1e-6,
            max_steps: 50_000_000,
            residual_threshold: 1e-3,
        }
    }
}

/// Uniform step plan for integrating `span` seconds from the window start.
#[derive(Debug, Clone)]
struct StepPlan {
    h: f64,
    /// Drive coupling a = r e^{iθ_c} at each step midpoint.
    a: Vec<C64>,
}

impl StepPlan {
    fn new(drive: &Drive, modes: &ModeGrid, span: f64, opts: &ReservoirOptions) -> Result<Self> {
        ensure_finite(span, "integration span")?;
        if span <= 0.0 {
            return Err(Error::InvalidParameter(format!("integration span must be > 0, got {span}")));
        }
        let fastest = modes
            .width()
            .max(modes.kappa)
            .max(drive.peak_rate())
            .max(drive.phase_rate_bound());
        let hmax = 1.0 / (opts.steps_per_rate * fastest);
        let steps = (span / hmax).ceil().max(1.0);
        if steps > opts.max_steps as f64 {
            return Err(Error::ResourceLimit(format!(
                "{steps} steps needed (limit {})",
                opts.max_steps
            )));
        }
        let steps = steps as usize;
        let h = span / steps as f64;
        let mids: Vec<f64> = (0..steps).map(|s| (s as f64 + 0.5) * h).collect();
        let inside = |tau: f64| tau <= drive.duration;
        let a = match drive.pulse.phase {
            PhasePolicy::ChirpCompensated => mids
                .iter()
                .map(|&tau| C64::new(if inside(tau) { drive.rate(tau) } else { 0.0 }, 0.0))
                .collect(),
            _ => {
                let table = drive.phase_table(&mids)?;
                mids.iter()
                    .zip(&table.theta_c)
                    .map(|(&tau, &tc)| {
                        if inside(tau) {
                            C64::from_polar(drive.rate(tau), tc)
                        } else {
                            ZERO
                        }
                    })
                    .collect()
            }
        };
        Ok(StepPlan { h, a })
    }
}

/// u_k = e^{iω_k t} · extra.
fn fill_mode_phases(freq: &FrequencyGrid, t: f64, extra: C64, u: &mut [C64]) {
    let rot = C64::from_polar(1.0, freq.step * t);
    let mut ph = C64::from_polar(1.0, freq.first * t) * extra;
    for (k, uk) in u.iter_mut().enumerate() {
        if k % 256 == 0 {
            ph = C64::from_polar(1.0, freq.omega(k) * t) * extra;
        }
        *uk = ph;
        ph *= rot;
    }
}

/// Single-excitation state after one window.
#[derive(Debug, Clone)]
pub struct SingleRun {
    pub modes: ModeGrid,
    pub branch: u8,
    pub start: f64,
    pub span: f64,
    /// Atom still in |i⟩ (rotating frame).
    pub x: C64,
    /// Photon still in the cavity (rotating frame).
    pub y: C64,
    /// Reservoir amplitudes in the interaction picture.
    pub c: Vec<C64>,
    pub steps: usize,
    pub max_norm_drift: f64,
}

impl SingleRun {
    pub fn emitted_norm(&self) -> f64 {
        self.c.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn residual_initial(&self) -> f64 {
        self.x.norm_sqr()
    }

    pub fn total_norm(&self) -> f64 {
        self.x.norm_sqr() + self.y.norm_sqr() + self.emitted_norm()
    }

    /// G(ω_k) = c_k e^{−iω_k t_start} / √Δω, directly comparable with the
    /// Markov envelope of the same window.
    pub fn envelope(&self) -> SpectralEnvelope {
        let scale = 1.0 / self.modes.spacing().sqrt();
        let values = self
            .c
            .iter()
            .enumerate()
            .map(|(k, c)| c * C64::from_polar(scale, -self.modes.freq.omega(k) * self.start))
            .collect();
        SpectralEnvelope {
            branch: self.branch,
            window_start: self.start,
            grid: self.modes.freq,
            values,
        }
    }
}

/// Integrates one window from |i, vacuum⟩.
pub fn integrate_single(drive: &Drive, modes: &ModeGrid, opts: &ReservoirOptions) -> Result<SingleRun> {
    integrate_span(drive, modes, drive.duration, opts)
}

/// Integrates from the window start over `span`, which may be shorter
/// (truncated window) or longer (free decay after the pulse) than the window.
pub fn integrate_span(
    drive: &Drive,
    modes: &ModeGrid,
    span: f64,
    opts: &ReservoirOptions,
) -> Result<SingleRun> {
    check_kappa(drive.params, modes)?;
    let plan = StepPlan::new(drive, modes, span, opts)?;
    let n = modes.len();
    let kq = modes.coupling();
    let g2 = drive.params.g_bar_sq();
    let h2 = 0.5 * plan.h;
    let (mut x, mut y) = (C64::new(1.0, 0.0), ZERO);
    let mut c = vec![ZERO; n];
    let mut u = vec![ZERO; n];
    let mut max_drift: f64 = 0.0;
    for (s, &a) in plan.a.iter().enumerate() {
        let tau = (s as f64 + 0.5) * plan.h;
        fill_mode_phases(&modes.freq, drive.start + tau, C64::from_polar(1.0, -g2 * tau), &mut u);
        let mut udc = ZERO;
        let mut uu = 0.0;
        for (uk, ck) in u.iter().zip(&c) {
            udc += uk.conj() * ck;
            uu += uk.norm_sqr();
        }
        let bx = x - h2 * a * y;
        let by = y + h2 * (a.conj() * x - kq * udc);
        let ub = udc + h2 * kq * uu * y;
        let den = 1.0 + h2 * h2 * (a.norm_sqr() + kq * kq * uu);
        let yn = (by + h2 * a.conj() * bx - h2 * kq * ub) / den;
        let xn = bx - h2 * a * yn;
        let ys = h2 * kq * (y + yn);
        let mut nc = 0.0;
        for (ck, uk) in c.iter_mut().zip(&u) {
            *ck += uk * ys;
            nc += ck.norm_sqr();
        }
        x = xn;
        y = yn;
        let drift = (x.norm_sqr() + y.norm_sqr() + nc - 1.0).abs();
        if !drift.is_finite() {
            return Err(Error::NonFinite("reservoir amplitudes"));
        }
        max_drift = max_drift.max(drift);
    }
    if max_drift > opts.norm_budget {
        return Err(Error::NormDrift {
            drift: max_drift,
            budget: opts.norm_budget,
        });
    }
    Ok(SingleRun {
        modes: *modes,
        branch: drive.branch,
        start: drive.start,
        span,
        x,
        y,
        c,
        steps: plan.a.len(),
        max_norm_drift: max_drift,
    })
}

fn check_kappa(params: &BranchParams, modes: &ModeGrid) -> Result<()> {
    if (params.kappa_c - modes.kappa).abs() > 1e-12 * params.kappa_c {
        return Err(Error::InvalidParameter(format!(
            "mode grid built for kappa {} but branch has kappa_c {}",
            modes.kappa, params.kappa_c
        )));
    }
    Ok(())
}

/// Spectral envelope extracted from an exact single-window run.
pub fn extract_exact_envelope(drive: &Drive, modes: &ModeGrid, opts: &ReservoirOptions) -> Result<SpectralEnvelope> {
    let run = integrate_single(drive, modes, opts)?;
    if run.y.norm() > opts.residual_threshold {
        return Err(Error::Residual {
            what: "cavity amplitude at window end",
            residual: run.y.norm(),
            threshold: opts.residual_threshold,
        });
    }
    Ok(run.envelope())
}

#[derive(Debug, Clone, Serialize)]
pub struct MarkovComparison {
    pub modes: usize,
    pub width: f64,
    pub spacing: f64,
    /// ‖G_markov − G_exact‖ / ‖G_exact‖.
    pub error: f64,
    pub exact_norm: f64,
    pub markov_norm: f64,
    /// |C_i(T)|² in the exact run.
    pub residual_initial: f64,
    pub max_norm_drift: f64,
    pub wraps: bool,
}

/// Compares the Markov envelope with the exact discrete-reservoir envelope
/// on the reservoir's own frequency grid.
pub fn compare_with_markov(
    drive: &Drive,
    modes: &ModeGrid,
    opts: &ReservoirOptions,
    markov_opts: &EnvelopeOptions,
) -> Result<MarkovComparison> {
    let run = integrate_single(drive, modes, opts)?;
    let exact = run.envelope();
    let approx = markov::spectral_envelope(drive, &modes.freq, EnvelopeMethod::FullOde, &markov_opts.relaxed())?;
    Ok(MarkovComparison {
        modes: modes.len(),
        width: modes.width(),
        spacing: modes.spacing(),
        error: markov_error(&approx, &exact)?,
        exact_norm: exact.norm_sqr(),
        markov_norm: approx.norm_sqr(),
        residual_initial: run.residual_initial(),
        max_norm_drift: run.max_norm_drift,
        wraps: modes.wraps(drive.duration),
    })
}

/// Relative distance, defined as 0 when neither side emits anything.
fn markov_error(approx: &SpectralEnvelope, exact: &SpectralEnvelope) -> Result<f64> {
    let silent = |e: &SpectralEnvelope| e.values.iter().all(|v| *v == ZERO);
    match (silent(approx), silent(exact)) {
        (true, true) => Ok(0.0),
        (false, true) => Ok(f64::INFINITY),
        _ => approx.relative_distance(exact),
    }
}

/// Markov error for each `(modes, width)` pair.
pub fn convergence_sweep(
    drive: &Drive,
    configs: &[(usize, f64)],
    opts: &ReservoirOptions,
    markov_opts: &EnvelopeOptions,
) -> Result<Vec<MarkovComparison>> {
    configs
        .iter()
        .map(|&(n, w)| {
            let modes = ModeGrid::new(drive.kappa(), n, w)?;
            compare_with_markov(drive, &modes, opts, markov_opts)
        })
        .collect()
}

pub fn write_convergence_csv<W: Write>(rows: &[MarkovComparison], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "modes",
        "width_rad_per_s",
        "spacing_rad_per_s",
        "markov_error",
        "exact_norm",
        "residual_initial",
        "max_norm_drift",
        "wraps",
    ])?;
    for r in rows {
        w.write_record(&[
            r.modes.to_string(),
            fmt_f64(r.width),
            fmt_f64(r.spacing),
            fmt_f64(r.error),
            fmt_f64(r.exact_norm),
            fmt_f64(r.residual_initial),
            fmt_f64(r.max_norm_drift),
            r.wraps.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Two photons emitted on one branch in two successive windows, with an
/// ideal recycle at the start of the second window.
#[derive(Debug, Clone)]
pub struct TwoPhotonSchedule {
    pub branch: usize,
    pub first: GenerationSequence,
    pub second: GenerationSequence,
    /// Permit the second window to start before the first ends.
    pub allow_overlap: bool,
}

impl TwoPhotonSchedule {
    pub fn validate(&self) -> Result<()> {
        self.first.validate()?;
        self.second.validate()?;
        if self.second.start <= self.first.start {
            return Err(Error::Schedule("second window must start after the first".into()));
        }
        if !self.allow_overlap && self.second.start < self.first.end() {
            return Err(Error::Schedule(format!(
                "windows overlap: second starts at {:e} before first ends at {:e}",
                self.second.start,
                self.first.end()
            )));
        }
        Ok(())
    }
}

/// Two-photon reservoir state Σ M_kl b_k† b_l† /√2 (M symmetric), stored as
/// its upper triangle.
#[derive(Debug, Clone)]
pub struct TwoPhotonRun {
    pub modes: ModeGrid,
    packed: Vec<C64>,
    /// Atom back in |i⟩ with one reservoir photon in mode k.
    pub single_initial: Vec<C64>,
    /// Atom in |f⟩, cavity photon, one reservoir photon in mode k.
    pub single_cavity: Vec<C64>,
    /// Norm in the two-photon sector at the end.
    pub two_photon_norm: f64,
    /// Norm discarded at the recycle (no photon, or photon still in the cavity).
    pub discarded_at_recycle: f64,
    /// Norm left with the atom or cavity after the second window.
    pub unfinished: f64,
    pub first: SingleRun,
    pub steps: usize,
    pub max_norm_drift: f64,
}

#[inline]
fn packed_index(n: usize, k: usize, l: usize) -> usize {
    let (k, l) = if k <= l { (k, l) } else { (l, k) };
    k * n - k * k.saturating_sub(1) / 2 + (l - k)
}

impl TwoPhotonRun {
    /// M_kl (symmetric).
    pub fn amplitude(&self, k: usize, l: usize) -> C64 {
        self.packed[packed_index(self.modes.len(), k, l)]
    }

    /// Full N×N matrix, row-major.
    pub fn matrix(&self) -> Vec<C64> {
        let n = self.modes.len();
        let mut m = vec![ZERO; n * n];
        for k in 0..n {
            for l in k..n {
                let v = self.amplitude(k, l);
                m[k * n + l] = v;
                m[l * n + k] = v;
            }
        }
        m
    }

    /// Upper-triangle amplitude with weight √2 off the diagonal, so that the
    /// plain sum of squares over k ≤ l is the two-photon norm.
    pub fn stored(&self, k: usize, l: usize) -> C64 {
        let m = self.amplitude(k, l);
        if k == l {
            m
        } else {
            m * std::f64::consts::SQRT_2
        }
    }

    /// Rows (ω_k, ω_l, |stored_kl|²) for k ≤ l.
    pub fn write_density_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["omega_k", "omega_l", "abs2_amplitude"])?;
        let n = self.modes.len();
        for k in 0..n {
            for l in k..n {
                w.write_record(&[
                    fmt_f64(self.modes.freq.omega(k)),
                    fmt_f64(self.modes.freq.omega(l)),
                    fmt_f64(self.stored(k, l).norm_sqr()),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Row slices of the packed upper triangle: row k holds M_kl for l ≥ k.
fn packed_rows(packed: &mut [C64], n: usize) -> Vec<&mut [C64]> {
    let mut rows = Vec::with_capacity(n);
    let mut rest = packed;
    for k in 0..n {
        let (row, tail) = rest.split_at_mut(n - k);
        rows.push(row);
        rest = tail;
    }
    rows
}

const ROW_BLOCK: usize = 32;

/// Σ_m conj(u_m) M_mk and Σ|M|² for the packed symmetric matrix. Blocks of
/// rows are summed in a fixed order so the result does not depend on the
/// thread count.
fn row_contractions(rows: &[&mut [C64]], u: &[C64]) -> (Vec<C64>, f64) {
    let n = u.len();
    let partials: Vec<(Vec<C64>, f64)> = rows
        .par_chunks(ROW_BLOCK)
        .enumerate()
        .map(|(b, block)| {
            let mut acc = vec![ZERO; n];
            let mut norm = 0.0;
            for (i, row) in block.iter().enumerate() {
                let k = b * ROW_BLOCK + i;
                let mut own = ZERO;
                for (j, m) in row.iter().enumerate() {
                    let l = k + j;
                    own += u[l].conj() * m;
                    if j > 0 {
                        acc[l] += u[k].conj() * m;
                        norm += 2.0 * m.norm_sqr();
                    } else {
                        norm += m.norm_sqr();
                    }
                }
                acc[k] += own;
            }
            (acc, norm)
        })
        .collect();
    let mut dot = vec![ZERO; n];
    let mut norm = 0.0;
    for (acc, nb) in partials {
        dot.iter_mut().zip(&acc).for_each(|(x, y)| *x += y);
        norm += nb;
    }
    (dot, norm)
}

/// Integrates the two-window, two-photon process on one branch.
pub fn integrate_two_photon(
    schedule: &TwoPhotonSchedule,
    params: &BranchParams,
    modes: &ModeGrid,
    opts: &ReservoirOptions,
) -> Result<TwoPhotonRun> {
    schedule.validate()?;
    check_kappa(params, modes)?;
    let n = modes.len();
    let d1 = schedule.first.drive(schedule.branch, params)?;
    let d2 = schedule.second.drive(schedule.branch, params)?;

    // first photon, free decay up to the recycle at the second window start
    let first = integrate_span(&d1, modes, schedule.second.start - schedule.first.start, opts)?;
    let discarded = first.x.norm_sqr() + first.y.norm_sqr();
    if !schedule.allow_overlap && discarded > opts.residual_threshold {
        return Err(Error::Residual {
            what: "atom and cavity norm at recycle",
            residual: discarded,
            threshold: opts.residual_threshold,
        });
    }

    let plan = StepPlan::new(&d2, modes, d2.duration, opts)?;
    let kq = modes.coupling();
    let g2 = params.g_bar_sq();
    let h2 = 0.5 * plan.h;
    let s2 = std::f64::consts::SQRT_2;
    let mut xs = first.c.clone();
    let mut ss = vec![ZERO; n];
    let mut packed = vec![ZERO; n * (n + 1) / 2];
    let n0: f64 = xs.iter().map(|v| v.norm_sqr()).sum();
    let mut u = vec![ZERO; n];
    let mut u_next = vec![ZERO; n];
    let phase_at = |s: usize, out: &mut [C64]| {
        let tau = (s as f64 + 0.5) * plan.h;
        fill_mode_phases(&modes.freq, d2.start + tau, C64::from_polar(1.0, -g2 * tau), out);
    };
    phase_at(0, &mut u);
    let mut rowdot = vec![ZERO; n];
    let mut max_drift: f64 = 0.0;
    let mut m_norm = 0.0;
    let steps = plan.a.len();
    for (s, &a) in plan.a.iter().enumerate() {
        let uu: f64 = u.iter().map(|v| v.norm_sqr()).sum();
        let us: C64 = u.iter().zip(&ss).map(|(uk, sk)| uk.conj() * sk).sum();
        let beta = h2 * h2 * kq * kq;
        let den = 1.0 + h2 * h2 * (a.norm_sqr() + kq * kq * uu);
        let c = h2 * kq / s2;
        // right-hand side of the reduced system for S'
        let mut bx = vec![ZERO; n];
        let mut r = vec![ZERO; n];
        for k in 0..n {
            bx[k] = xs[k] - h2 * a * ss[k];
            let bs = ss[k] + h2 * (a.conj() * xs[k] - s2 * kq * rowdot[k]);
            let bb = rowdot[k] + c * (uu * ss[k] + u[k] * us);
            r[k] = bs + h2 * a.conj() * bx[k] - h2 * s2 * kq * bb;
        }
        let ur: C64 = u.iter().zip(&r).map(|(uk, rk)| uk.conj() * rk).sum();
        let corr = beta * ur / (den + beta * uu);
        let sn: Vec<C64> = r.iter().zip(&u).map(|(rk, uk)| (rk - corr * uk) / den).collect();
        for k in 0..n {
            xs[k] = bx[k] - h2 * a * sn[k];
        }
        // M update fused with the next contraction and the norm
        let sum: Vec<C64> = ss.iter().zip(&sn).map(|(p, q)| p + q).collect();
        if s + 1 < steps {
            phase_at(s + 1, &mut u_next);
        }
        {
            let mut rows = packed_rows(&mut packed, n);
            rows.par_iter_mut().enumerate().for_each(|(k, row)| {
                for (j, m) in row.iter_mut().enumerate() {
                    let l = k + j;
                    *m += c * (u[l] * sum[k] + u[k] * sum[l]);
                }
            });
            let (dot, norm) = row_contractions(&rows, &u_next);
            rowdot = dot;
            m_norm = norm;
        }
        ss = sn;
        std::mem::swap(&mut u, &mut u_next);
        let total: f64 = xs.iter().chain(&ss).map(|v| v.norm_sqr()).sum::<f64>() + m_norm;
        let drift = (total - n0).abs();
        if !drift.is_finite() {
            return Err(Error::NonFinite("two-photon amplitudes"));
        }
        max_drift = max_drift.max(drift);
    }
    if max_drift > opts.norm_budget {
        return Err(Error::NormDrift {
            drift: max_drift,
            budget: opts.norm_budget,
        });
    }
    let unfinished = xs.iter().chain(&ss).map(|v| v.norm_sqr()).sum();
    Ok(TwoPhotonRun {
        modes: *modes,
        packed,
        single_initial: xs,
        single_cavity: ss,
        two_photon_norm: m_norm,
        discarded_at_recycle: discarded,
        unfinished,
        steps: first.steps + steps,
        first,
        max_norm_drift: max_drift,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorizationReport {
    /// ‖ŝ₂ − P̂‖ / ‖P̂‖ after normalising both and removing the global phase.
    pub error: f64,
    pub two_photon_norm: f64,
    pub discarded_at_recycle: f64,
    pub unfinished: f64,
    pub max_norm_drift: f64,
    pub overlapping: bool,
}

/// Relative distance between the two-photon amplitudes and the symmetrized
/// product of two single-photon envelopes, each translated to its window
/// start: P_kl ∝ sym[e^{iω_k t₀}G₁(ω_k) · e^{iω_l t₁}G₂(ω_l)].
pub fn factorization_error(run: &TwoPhotonRun, g1: &SpectralEnvelope, g2: &SpectralEnvelope) -> Result<f64> {
    let freq = &run.modes.freq;
    if !g1.grid.same_as(freq) || !g2.grid.same_as(freq) {
        return Err(Error::GridMismatch("envelopes and two-photon state use different grids".into()));
    }
    let n = freq.len;
    let shift = |g: &SpectralEnvelope| -> Vec<C64> {
        g.values
            .iter()
            .enumerate()
            .map(|(k, v)| v * C64::from_polar(1.0, freq.omega(k) * g.window_start))
            .collect()
    };
    let (p1, p2) = (shift(g1), shift(g2));
    let (mut np, mut ns, mut cross) = (0.0, 0.0, ZERO);
    for k in 0..n {
        for l in k..n {
            let p = p1[k] * p2[l] + p2[k] * p1[l];
            let m = run.amplitude(k, l);
            let w = if k == l { 1.0 } else { 2.0 };
            np += w * p.norm_sqr();
            ns += w * m.norm_sqr();
            cross += w * p.conj() * m;
        }
    }
    if np == 0.0 {
        return Err(Error::ZeroNorm("product state"));
    }
    if ns == 0.0 {
        return Err(Error::ZeroNorm("two-photon state"));
    }
    // min over χ of ‖s/‖s‖ − e^{iχ} p/‖p‖‖
    let overlap = (cross.norm() / (np * ns).sqrt()).min(1.0);
    Ok((2.0 * (1.0 - overlap)).max(0.0).sqrt())
}

/// Runs both windows separately to obtain exact single-photon envelopes and
/// compares their product with the two-photon run.
pub fn factorization_report(
    run: &TwoPhotonRun,
    schedule: &TwoPhotonSchedule,
    params: &BranchParams,
    opts: &ReservoirOptions,
) -> Result<FactorizationReport> {
    let d1 = schedule.first.drive(schedule.branch, params)?;
    let d2 = schedule.second.drive(schedule.branch, params)?;
    let g1 = integrate_single(&d1, &run.modes, opts)?.envelope();
    let g2 = integrate_single(&d2, &run.modes, opts)?.envelope();
    Ok(FactorizationReport {
        error: factorization_error(run, &g1, &g2)?,
        two_photon_norm: run.two_photon_norm,
        discarded_at_recycle: run.discarded_at_recycle,
        unfinished: run.unfinished,
        max_norm_drift: run.max_norm_drift,
        overlapping: schedule.second.start < schedule.first.end(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{ControlPulse, PulseShape};

    fn params() -> BranchParams {
        BranchParams {
            g: 1.0,
            delta: 30.0,
            kappa_c: 1.0,
            kappa_abs: 1e-4,
            gamma_sp: 0.1,
        }
    }

    #[test]
    fn packed_layout() {
        let n = 5;
        let mut seen = vec![false; n * (n + 1) / 2];
        for k in 0..n {
            for l in k..n {
                let i = packed_index(n, k, l);
                assert!(!seen[i]);
                seen[i] = true;
                assert_eq!(i, packed_index(n, l, k));
            }
        }
        assert!(seen.iter().all(|&s| s));
        let mut data: Vec<C64> = (0..15).map(|i| C64::new(i as f64, 0.0)).collect();
        let rows = packed_rows(&mut data, n);
        assert_eq!(rows[2][1], C64::new(packed_index(n, 2, 3) as f64, 0.0));
    }

    #[test]
    fn free_cavity_decay_conserves_norm() {
        let p = params();
        let pulse = ControlPulse::new(PulseShape::RaisedCosineWindow {
            amplitude: 0.4 * 2.0 * p.delta / p.g,
            start: 0.0,
            stop: 8.0,
        });
        let seq = GenerationSequence::symmetric(0.0, 8.0, pulse);
        let drive = seq.drive(0, &p).unwrap();
        let modes = ModeGrid::in_kappa(1.0, 64, 20.0).unwrap();
        let run = integrate_span(&drive, &modes, 12.0, &ReservoirOptions::default()).unwrap();
        assert!(run.max_norm_drift < 1e-10);
        assert!((run.total_norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn kappa_mismatch_rejected() {
        let p = params();
        let pulse = ControlPulse::off();
        let seq = GenerationSequence::symmetric(0.0, 1.0, pulse);
        let drive = seq.drive(0, &p).unwrap();
        let modes = ModeGrid::in_kappa(2.0, 16, 20.0).unwrap();
        assert!(integrate_single(&drive, &modes, &ReservoirOptions::default()).is_err());
    }

    #[test]
    fn overlap_requires_flag() {
        let pulse = ControlPulse::off();
        let mut s = TwoPhotonSchedule {
            branch: 0,
            first: GenerationSequence::symmetric(0.0, 2.0, pulse.clone()),
            second: GenerationSequence::symmetric(1.0, 2.0, pulse),
            allow_overlap: false,
        };
        assert!(matches!(s.validate(), Err(Error::Schedule(_))));
        s.allow_overlap = true;
        assert!(s.validate().is_ok());
    }
}
