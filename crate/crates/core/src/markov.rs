//! Photon emission in the Markov (broadband continuum) limit.
//!
//! Within one generation window the two polarization branches evolve
//! independently. For branch α the amplitudes on |i_α, 0⟩ and |f_α, 1⟩ obey
//!
//! ```text
//! dC_i/dt = −r e^{iθ_c} C_f
//! dC_f/dt = −κ_c C_f + r e^{−iθ_c} C_i
//! ```
//!
//! and the emitted photon has the spectral envelope
//! `G(ω) = √(κ_c/π) ∫₀ᵀ e^{iωt} C_f(t) e^{−i|ḡ|²t} dt`.

use std::io::Write;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::Drive;
use crate::error::{ensure_finite, Error, Result};
use crate::ode::Dopri5;
use crate::quadrature;

/// Uniform cell-centred frequency grid `ω_k = first + k·step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub first: f64,
    pub step: f64,
    pub len: usize,
}

impl FrequencyGrid {
    /// `points` cells of equal width tiling `[−width/2, width/2]`.
    pub fn centered(points: usize, width: f64) -> Result<Self> {
        if points == 0 {
            return Err(Error::InvalidParameter("frequency grid needs at least one point".into()));
        }
        ensure_finite(width, "grid width")?;
        if width <= 0.0 {
            return Err(Error::InvalidParameter(format!("grid width must be > 0, got {width}")));
        }
        let step = width / points as f64;
        Ok(FrequencyGrid {
            first: -0.5 * width + 0.5 * step,
            step,
            len: points,
        })
    }

    /// Grid of `points` cells over a total width of `width_kappa · kappa`.
    pub fn in_kappa(kappa: f64, points: usize, width_kappa: f64) -> Result<Self> {
        Self::centered(points, width_kappa * kappa)
    }

    pub fn omega(&self, k: usize) -> f64 {
        self.first + k as f64 * self.step
    }

    pub fn omegas(&self) -> Vec<f64> {
        (0..self.len).map(|k| self.omega(k)).collect()
    }

    pub fn width(&self) -> f64 {
        self.step * self.len as f64
    }

    /// Lower and upper edge of the tiled band.
    pub fn band(&self) -> (f64, f64) {
        (
            self.first - 0.5 * self.step,
            self.omega(self.len - 1) + 0.5 * self.step,
        )
    }

    pub fn max_abs(&self) -> f64 {
        let (lo, hi) = self.band();
        lo.abs().max(hi.abs())
    }

    pub fn same_as(&self, other: &FrequencyGrid) -> bool {
        self.len == other.len
            && (self.first - other.first).abs() <= 1e-12 * self.step.abs()
            && (self.step - other.step).abs() <= 1e-12 * self.step.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeMethod {
    #[default]
    FullOde,
    Overdamped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeOptions {
    /// Relative and absolute ODE tolerance.
    pub tol: f64,
    /// Largest allowed grid spacing, in units of κ_c.
    pub max_spacing_kappa: f64,
    /// Smallest allowed band width, in units of κ_c.
    pub min_span_kappa: f64,
    /// Time samples per period of the fastest oscillation in the integrand.
    pub points_per_period: usize,
    pub min_intervals: usize,
    pub max_intervals: usize,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        EnvelopeOptions {
            tol: 1e-10,
            max_spacing_kappa: 0.1,
            min_span_kappa: 40.0,
            points_per_period: 20,
            min_intervals: 2000,
            max_intervals: 20_000_000,
        }
    }
}

impl EnvelopeOptions {
    /// Disables the grid-resolution requirements (for convergence studies).
    pub fn relaxed(mut self) -> Self {
        self.max_spacing_kappa = f64::INFINITY;
        self.min_span_kappa = 0.0;
        self
    }
}

/// Checks that a grid resolves envelopes of linewidth κ.
pub fn check_resolution(grid: &FrequencyGrid, kappa: f64, opts: &EnvelopeOptions) -> Result<()> {
    if grid.step > opts.max_spacing_kappa * kappa * (1.0 + 1e-12) {
        return Err(Error::UnderResolved(format!(
            "grid spacing {:.4e} exceeds {} kappa = {:.4e}",
            grid.step,
            opts.max_spacing_kappa,
            opts.max_spacing_kappa * kappa
        )));
    }
    let need = 0.5 * opts.min_span_kappa * kappa * (1.0 - 1e-12);
    let (lo, hi) = grid.band();
    if -lo < need || hi < need {
        return Err(Error::UnderResolved(format!(
            "grid band [{lo:.4e}, {hi:.4e}] does not cover +-{} kappa",
            opts.min_span_kappa / 2.0
        )));
    }
    Ok(())
}

/// Amplitudes of one branch sampled on a window-local time grid.
#[derive(Debug, Clone)]
pub struct AmplitudeTrajectory {
    pub branch: u8,
    pub window_start: f64,
    pub times: Vec<f64>,
    pub ci: Vec<C64>,
    pub cf: Vec<C64>,
    pub theta: Vec<f64>,
    pub mu: Vec<f64>,
}

impl AmplitudeTrajectory {
    pub fn final_ci(&self) -> C64 {
        *self.ci.last().unwrap()
    }

    pub fn final_cf(&self) -> C64 {
        *self.cf.last().unwrap()
    }

    /// Probability that the photon has left the cavity by the end of the window.
    pub fn emission_probability(&self) -> f64 {
        emission_probability(self)
    }
}

/// Integrates the two-level equations from `C_i(0) = 1`, `C_f(0) = 0` and
/// samples the result on `grid` (window-local, increasing, starting at 0).
pub fn solve_amplitudes_on(drive: &Drive, grid: &[f64], tol: f64) -> Result<AmplitudeTrajectory> {
    if grid.is_empty() || grid[0] != 0.0 {
        return Err(Error::InvalidParameter("time grid must start at 0".into()));
    }
    let kappa = drive.kappa();
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let ci = C64::new(y[0], y[1]);
        let cf = C64::new(y[2], y[3]);
        let r = drive.rate(t);
        let e = C64::from_polar(1.0, drive.theta_c(t, y[4]));
        let dci = -r * e * cf;
        let dcf = -kappa * cf + r * e.conj() * ci;
        dy[0] = dci.re;
        dy[1] = dci.im;
        dy[2] = dcf.re;
        dy[3] = dcf.im;
        dy[4] = drive.stark(t);
        dy[5] = r * r / kappa;
    };
    let mut solver = Dopri5::new(tol, tol * 1e-3);
    let mut y = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let n = grid.len();
    let mut traj = AmplitudeTrajectory {
        branch: drive.branch,
        window_start: drive.start,
        times: grid.to_vec(),
        ci: Vec::with_capacity(n),
        cf: Vec::with_capacity(n),
        theta: Vec::with_capacity(n),
        mu: Vec::with_capacity(n),
    };
    let push = |y: &[f64; 6], traj: &mut AmplitudeTrajectory| {
        traj.ci.push(C64::new(y[0], y[1]));
        traj.cf.push(C64::new(y[2], y[3]));
        traj.theta.push(y[4]);
        traj.mu.push(y[5]);
    };
    push(&y, &mut traj);
    for w in grid.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidParameter("time grid must increase strictly".into()));
        }
        solver.integrate(&rhs, w[0], &mut y, w[1])?;
        push(&y, &mut traj);
    }
    Ok(traj)
}

/// [`solve_amplitudes_on`] on a uniform grid over the whole window.
pub fn solve_amplitudes(drive: &Drive, intervals: usize, tol: f64) -> Result<AmplitudeTrajectory> {
    let grid = quadrature::uniform_grid(0.0, drive.duration, intervals.max(1));
    solve_amplitudes_on(drive, &grid, tol)
}

/// Closed-form amplitudes in the overdamped limit r ≪ κ_c.
pub fn overdamped_amplitudes(drive: &Drive, t: f64) -> Result<(C64, C64)> {
    let ph = drive.phases(t)?;
    let decay = (-ph.mu).exp();
    let r = drive.rate(t);
    let ci = C64::new(decay, 0.0);
    let cf = (r / drive.kappa()) * decay * C64::from_polar(1.0, -ph.theta_c);
    Ok((ci, cf))
}

/// Photon wavepacket of one branch on a frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralEnvelope {
    pub branch: u8,
    /// Absolute start of the emitting window; the envelope phase is referred to it.
    pub window_start: f64,
    pub grid: FrequencyGrid,
    pub values: Vec<C64>,
}

impl SpectralEnvelope {
    /// Σ|G_k|² Δω.
    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|g| g.norm_sqr()).sum::<f64>() * self.grid.step
    }

    /// Relative L2 distance ‖self − other‖ / ‖other‖.
    pub fn relative_distance(&self, other: &SpectralEnvelope) -> Result<f64> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch("envelopes on different grids".into()));
        }
        let num: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let den: f64 = other.values.iter().map(|b| b.norm_sqr()).sum();
        if den == 0.0 {
            return Err(Error::ZeroNorm("reference envelope"));
        }
        Ok((num / den).sqrt())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["omega_rad_per_s", "re_G", "im_G", "abs2_G"])?;
        for (k, g) in self.values.iter().enumerate() {
            w.write_record(&[
                fmt_f64(self.grid.omega(k)),
                fmt_f64(g.re),
                fmt_f64(g.im),
                fmt_f64(g.norm_sqr()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Round-trip exact decimal formatting used for every CSV number.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

fn time_intervals(drive: &Drive, grid: &FrequencyGrid, opts: &EnvelopeOptions) -> Result<usize> {
    let fastest = grid.max_abs() + drive.phase_rate_bound() + drive.kappa();
    let h = 2.0 * std::f64::consts::PI / (opts.points_per_period as f64 * fastest);
    let m = ((drive.duration / h).ceil() as usize).max(opts.min_intervals);
    if m > opts.max_intervals {
        return Err(Error::ResourceLimit(format!(
            "{m} time samples needed to resolve the envelope integral (limit {})",
            opts.max_intervals
        )));
    }
    Ok(m)
}

/// Emitted spectral envelope of one branch for a single generation window.
pub fn spectral_envelope(
    drive: &Drive,
    grid: &FrequencyGrid,
    method: EnvelopeMethod,
    opts: &EnvelopeOptions,
) -> Result<SpectralEnvelope> {
    check_resolution(grid, drive.kappa(), opts)?;
    let m = time_intervals(drive, grid, opts)?;
    let times = quadrature::uniform_grid(0.0, drive.duration, m);
    let g2 = drive.params.g_bar_sq();
    let field: Vec<C64> = match method {
        EnvelopeMethod::FullOde => {
            let traj = solve_amplitudes_on(drive, &times, opts.tol)?;
            return envelope_from_trajectory(&traj, drive, grid);
        }
        EnvelopeMethod::Overdamped => {
            let table = drive.phase_table(&times)?;
            let kappa = drive.kappa();
            times
                .iter()
                .enumerate()
                .map(|(j, &t)| {
                    let total_phase = table.theta_c[j] + g2 * t;
                    (drive.rate(t) / kappa) * (-table.mu[j]).exp() * C64::from_polar(1.0, -total_phase)
                })
                .collect()
        }
    };
    transform(drive, grid, &times, &field)
}

/// Envelope computed from an already solved trajectory.
pub fn envelope_from_trajectory(
    traj: &AmplitudeTrajectory,
    drive: &Drive,
    grid: &FrequencyGrid,
) -> Result<SpectralEnvelope> {
    let g2 = drive.params.g_bar_sq();
    let field: Vec<C64> = traj
        .times
        .iter()
        .zip(&traj.cf)
        .map(|(&t, &cf)| cf * C64::from_polar(1.0, -g2 * t))
        .collect();
    transform(drive, grid, &traj.times, &field)
}

/// G_k = √(κ/π) Σ_j w_j e^{iω_k t_j} f_j on a uniform time grid.
fn transform(drive: &Drive, grid: &FrequencyGrid, times: &[f64], field: &[C64]) -> Result<SpectralEnvelope> {
    let m = times.len() - 1;
    let h = drive.duration / m as f64;
    let weights = quadrature::trapezoid_weights(times.len(), h);
    let pref = (drive.kappa() / std::f64::consts::PI).sqrt();
    let values: Vec<C64> = (0..grid.len)
        .into_par_iter()
        .map(|k| {
            let w = grid.omega(k);
            let rot = C64::from_polar(1.0, w * h);
            let mut ph = C64::new(1.0, 0.0);
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..=m {
                if j % 1024 == 0 {
                    ph = C64::from_polar(1.0, w * times[j]);
                }
                acc += weights[j] * ph * field[j];
                ph *= rot;
            }
            pref * acc
        })
        .collect();
    if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonFinite("spectral envelope"));
    }
    Ok(SpectralEnvelope {
        branch: drive.branch,
        window_start: drive.start,
        grid: *grid,
        values,
    })
}

/// 1 − |C_i(T)|² − |C_f(T)|².
pub fn emission_probability(traj: &AmplitudeTrajectory) -> f64 {
    let p = 1.0 - traj.final_ci().norm_sqr() - traj.final_cf().norm_sqr();
    p.clamp(0.0, 1.0)
}

/// Time-ordered overlap ∫ G_a*(ω) G_b(ω) e^{iω(t_b − t_a)} dω of two photons
/// emitted in windows starting at `t_a` and `t_b`. Different branches carry
/// orthogonal polarizations and give exactly zero.
pub fn envelope_overlap(a: &SpectralEnvelope, b: &SpectralEnvelope) -> Result<C64> {
    if !a.grid.same_as(&b.grid) {
        return Err(Error::GridMismatch("envelopes on different grids".into()));
    }
    if a.branch != b.branch {
        return Ok(C64::new(0.0, 0.0));
    }
    let shift = b.window_start - a.window_start;
    let sum: C64 = a
        .values
        .iter()
        .zip(&b.values)
        .enumerate()
        .map(|(k, (ga, gb))| ga.conj() * gb * C64::from_polar(1.0, a.grid.omega(k) * shift))
        .sum();
    Ok(sum * a.grid.step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{BranchParams, ControlPulse, PhasePolicy, PulseShape};

    fn params() -> BranchParams {
        BranchParams {
            g: 1.0,
            delta: 30.0,
            kappa_c: 1.0,
            kappa_abs: 1e-4,
            gamma_sp: 0.1,
        }
    }

    fn constant_for_rate(p: &BranchParams, r: f64, t: f64) -> ControlPulse {
        ControlPulse::new(PulseShape::ConstantWindow {
            amplitude: r * 2.0 * p.delta / p.g,
            start: 0.0,
            stop: t,
        })
    }

    #[test]
    fn grid_layout() {
        let g = FrequencyGrid::centered(4, 8.0).unwrap();
        assert_eq!(g.omegas(), vec![-3.0, -1.0, 1.0, 3.0]);
        assert_eq!(g.band(), (-4.0, 4.0));
        assert!(FrequencyGrid::centered(0, 1.0).is_err());
    }

    #[test]
    fn resolution_rules() {
        let opts = EnvelopeOptions::default();
        let ok = FrequencyGrid::in_kappa(1.0, 400, 40.0).unwrap();
        assert!(check_resolution(&ok, 1.0, &opts).is_ok());
        let coarse = FrequencyGrid::in_kappa(1.0, 200, 40.0).unwrap();
        assert!(matches!(check_resolution(&coarse, 1.0, &opts), Err(Error::UnderResolved(_))));
        let narrow = FrequencyGrid::in_kappa(1.0, 400, 20.0).unwrap();
        assert!(check_resolution(&narrow, 1.0, &opts).is_err());
        assert!(check_resolution(&narrow, 1.0, &opts.relaxed()).is_ok());
    }

    #[test]
    fn constant_rate_matches_closed_form() {
        // r < κ/2: overdamped eigenvalues λ± = −κ/2 ± √(κ²/4 − r²)
        let p = params();
        let r = 0.3;
        let t_end = 12.0;
        let pulse = constant_for_rate(&p, r, t_end);
        let drive = Drive::new(&pulse, &p, 0.0, t_end, 0).unwrap();
        let traj = solve_amplitudes(&drive, 120, 1e-11).unwrap();
        let s = (0.25 - r * r).sqrt();
        let (lp, lm) = (-0.5 + s, -0.5 - s);
        for (j, &t) in traj.times.iter().enumerate() {
            let cf = r * ((lp * t).exp() - (lm * t).exp()) / (lp - lm);
            let ci_exact = ((lp + 1.0) * (lp * t).exp() - (lm + 1.0) * (lm * t).exp()) / (lp - lm);
            assert!((traj.cf[j] - C64::new(cf, 0.0)).norm() < 1e-8, "t={t}");
            assert!((traj.ci[j] - C64::new(ci_exact, 0.0)).norm() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn norm_is_nonincreasing() {
        let p = params();
        let pulse = ControlPulse::new(PulseShape::Gaussian {
            peak: 0.4 * 2.0 * p.delta / p.g,
            center: 5.0,
            width: 2.0,
        })
        .with_phase(PhasePolicy::Zero);
        let drive = Drive::new(&pulse, &p, 0.0, 10.0, 0).unwrap();
        let traj = solve_amplitudes(&drive, 400, 1e-10).unwrap();
        let norms: Vec<f64> = traj.ci.iter().zip(&traj.cf).map(|(a, b)| a.norm_sqr() + b.norm_sqr()).collect();
        assert!((norms[0] - 1.0).abs() < 1e-15);
        assert!(norms.windows(2).all(|w| w[1] <= w[0] + 1e-10));
    }

    #[test]
    fn zero_drive_leaves_atom_alone() {
        let p = params();
        let pulse = ControlPulse::off();
        let drive = Drive::new(&pulse, &p, 0.0, 5.0, 1).unwrap();
        let traj = solve_amplitudes(&drive, 10, 1e-10).unwrap();
        assert_eq!(traj.final_ci(), C64::new(1.0, 0.0));
        assert_eq!(emission_probability(&traj), 0.0);
    }

    #[test]
    fn overlap_between_branches_is_exactly_zero() {
        let grid = FrequencyGrid::centered(8, 4.0).unwrap();
        let a = SpectralEnvelope {
            branch: 0,
            window_start: 0.0,
            grid,
            values: vec![C64::new(1.0, 0.5); 8],
        };
        let mut b = a.clone();
        b.branch = 1;
        assert_eq!(envelope_overlap(&a, &b).unwrap(), C64::new(0.0, 0.0));
        let self_overlap = envelope_overlap(&a, &a).unwrap();
        assert!((self_overlap.re - a.norm_sqr()).abs() < 1e-14);
        let other_grid = SpectralEnvelope {
            grid: FrequencyGrid::centered(8, 5.0).unwrap(),
            ..a.clone()
        };
        assert!(envelope_overlap(&a, &other_grid).is_err());
    }

    #[test]
    fn csv_header() {
        let grid = FrequencyGrid::centered(2, 2.0).unwrap();
        let env = SpectralEnvelope {
            branch: 0,
            window_start: 0.0,
            grid,
            values: vec![C64::new(1.0, 0.0), C64::new(0.0, -2.0)],
        };
        let mut buf = Vec::new();
        env.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "omega_rad_per_s,re_G,im_G,abs2_G");
        assert_eq!(lines.next().unwrap(), "-5e-1,1e0,0e0,1e0");
        assert_eq!(lines.count(), 1);
    }
}
