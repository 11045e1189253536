//! Imperfect recycling, ensemble fidelity of photon-train states, mirror
//! absorption distortion and feasibility estimates.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{BranchParams, ControlPulse};
use crate::error::{ensure_finite, Error, Result};
use crate::markov::fmt_f64;
use crate::quadrature::{self, Tolerance};
use crate::sequence::{mes_protocol, BitString, MixingPulse, NQubitState, Op, Outcome, Sign, MAX_QUBITS};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.3), stream = sample index";

/// Errors of one recycle event: |f_α⟩ → A_α|i_α⟩ + B_α|f_α⟩ with
/// A_α = (1 − ε_α) e^{iδ_α} and B_α = √(1 − |A_α|²) ≥ 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecycleError {
    pub eps: [C64; 2],
    pub deph: [f64; 2],
}

impl RecycleError {
    pub fn ideal() -> Self {
        RecycleError {
            eps: [ZERO; 2],
            deph: [0.0; 2],
        }
    }

    pub fn a(&self, branch: usize) -> C64 {
        (C64::new(1.0, 0.0) - self.eps[branch]) * C64::from_polar(1.0, self.deph[branch])
    }

    pub fn b(&self, branch: usize) -> f64 {
        (1.0 - self.a(branch).norm_sqr()).max(0.0).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        for b in 0..2 {
            let a = self.a(b);
            if !a.re.is_finite() || !a.im.is_finite() || !self.deph[b].is_finite() {
                return Err(Error::NonFinite("recycle error"));
            }
            if a.norm_sqr() > 1.0 + 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "|A_{b}| = {} exceeds 1",
                    a.norm()
                )));
            }
        }
        Ok(())
    }
}

/// Uniform error distribution of the imperfect recycle map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorDistribution {
    /// |ε| ~ U[0, ε_m], arg ε ~ U[−ε_m, ε_m]·π.
    pub eps_m: f64,
    /// δ ~ U[−δ_m, δ_m]·π.
    pub delta_m: f64,
}

impl ErrorDistribution {
    pub fn new(eps_m: f64, delta_m: f64) -> Result<Self> {
        let d = ErrorDistribution { eps_m, delta_m };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(self.eps_m, "eps_m")?;
        ensure_finite(self.delta_m, "delta_m")?;
        if !(0.0..1.0).contains(&self.eps_m) {
            return Err(Error::InvalidParameter(format!("eps_m must lie in [0, 1), got {}", self.eps_m)));
        }
        if !(0.0..=1.0).contains(&self.delta_m) {
            return Err(Error::InvalidParameter(format!("delta_m must lie in [0, 1], got {}", self.delta_m)));
        }
        // |1 − ε| ≤ 1 needs |ε| ≤ 2 cos(arg ε) across the whole support
        if self.eps_m > 2.0 * (self.eps_m * std::f64::consts::PI).cos() {
            return Err(Error::InvalidParameter(format!(
                "eps_m = {} allows |A| > 1; the largest admissible value is about 0.4",
                self.eps_m
            )));
        }
        Ok(())
    }

    /// Draws one event. Always consumes exactly three uniforms per branch so
    /// that runs with different bounds share random numbers.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> RecycleError {
        let pi = std::f64::consts::PI;
        let mut err = RecycleError::ideal();
        for b in 0..2 {
            let (u1, u2, u3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
            let magnitude = self.eps_m * u1;
            let phase = self.eps_m * pi * (2.0 * u2 - 1.0);
            err.eps[b] = C64::from_polar(magnitude, phase);
            err.deph[b] = self.delta_m * pi * (2.0 * u3 - 1.0);
        }
        err
    }
}

/// Photon slots over {0, 1, ∅}; ∅ marks a window without emission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SlotString {
    len: u8,
    bits: u64,
    vacant: u64,
}

impl SlotString {
    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(self, slot: Option<u8>) -> Self {
        assert!(self.len() < MAX_QUBITS);
        SlotString {
            len: self.len + 1,
            bits: (self.bits << 1) | slot.unwrap_or(0) as u64,
            vacant: (self.vacant << 1) | slot.is_none() as u64,
        }
    }

    pub fn has_vacancy(&self) -> bool {
        self.vacant != 0
    }

    /// The photon string, if every slot holds a photon.
    pub fn photons(&self) -> Option<BitString> {
        if self.has_vacancy() {
            return None;
        }
        let bits: Vec<u8> = (0..self.len())
            .map(|i| ((self.bits >> (self.len() - 1 - i)) & 1) as u8)
            .collect();
        BitString::from_bits(&bits).ok()
    }
}

impl fmt::Display for SlotString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len() {
            let shift = self.len() - 1 - i;
            if (self.vacant >> shift) & 1 == 1 {
                write!(f, "∅")?;
            } else {
                write!(f, "{}", (self.bits >> shift) & 1)?;
            }
        }
        Ok(())
    }
}

/// Per slot string: label amplitudes with the atom in |i_α⟩ and in |f_α⟩.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LevelAmplitudes {
    pub i: [C64; 2],
    pub f: [C64; 2],
}

/// Photon slots ⊗ atom (label, level), including leakage branches.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotState {
    slots: usize,
    amps: BTreeMap<SlotString, LevelAmplitudes>,
}

impl SlotState {
    /// Atom in c₀|i₀⟩ + c₁|i₁⟩, no slots.
    pub fn initial(c0: C64, c1: C64) -> Self {
        let mut amps = BTreeMap::new();
        amps.insert(
            SlotString::default(),
            LevelAmplitudes {
                i: [c0, c1],
                f: [ZERO; 2],
            },
        );
        SlotState { slots: 0, amps }
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn get(&self, s: &SlotString) -> LevelAmplitudes {
        self.amps.get(s).copied().unwrap_or_default()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&SlotString, &LevelAmplitudes)> {
        self.amps.iter()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps
            .values()
            .map(|a| a.i.iter().chain(&a.f).map(|c| c.norm_sqr()).sum::<f64>())
            .sum()
    }

    /// |f_α⟩ → A_α|i_α⟩ + B_α|f_α⟩ on every term.
    pub fn imperfect_recycle(&self, err: &RecycleError) -> Self {
        let amps = self
            .amps
            .iter()
            .map(|(&s, a)| {
                let mut out = *a;
                for b in 0..2 {
                    out.i[b] = a.i[b] + err.a(b) * a.f[b];
                    out.f[b] = err.b(b) * a.f[b];
                }
                (s, out)
            })
            .collect();
        SlotState {
            slots: self.slots,
            amps,
        }
    }

    /// |i_α⟩ emits a photon α and ends in |f_α⟩; |f_α⟩ emits nothing (∅).
    pub fn generation_step(&self) -> Result<Self> {
        if self.slots >= MAX_QUBITS {
            return Err(Error::ResourceLimit(format!("more than {MAX_QUBITS} slots")));
        }
        let mut amps: BTreeMap<SlotString, LevelAmplitudes> = BTreeMap::new();
        for (&s, a) in &self.amps {
            for b in 0..2 {
                if a.i[b] != ZERO {
                    amps.entry(s.push(Some(b as u8))).or_default().f[b] += a.i[b];
                }
            }
            if a.f != [ZERO; 2] {
                let e = amps.entry(s.push(None)).or_default();
                e.f[0] += a.f[0];
                e.f[1] += a.f[1];
            }
        }
        Ok(SlotState {
            slots: self.slots + 1,
            amps,
        })
    }

    /// Label rotation on the |f⟩ manifold.
    pub fn apply_mixing(&self, pulse: &MixingPulse) -> Result<Self> {
        pulse.validate()?;
        let amps = self
            .amps
            .iter()
            .map(|(&s, a)| {
                let (f0, f1) = (a.f[0], a.f[1]);
                let out = LevelAmplitudes {
                    i: a.i,
                    f: [
                        pulse.d0 * f0 - pulse.d1.conj() * f1,
                        pulse.d1 * f0 + pulse.d0.conj() * f1,
                    ],
                };
                (s, out)
            })
            .collect();
        Ok(SlotState {
            slots: self.slots,
            amps,
        })
    }

    /// Unnormalised photonic amplitudes after finding the atom (in |f⟩) in
    /// the `outcome` state of basis `m`.
    fn project(&self, m: [C64; 2], outcome: Outcome) -> BTreeMap<SlotString, C64> {
        let w = match outcome {
            Outcome::Match => [m[0].conj(), m[1].conj()],
            Outcome::Complement => [m[1], -m[0]],
        };
        self.amps
            .iter()
            .map(|(&s, a)| (s, w[0] * a.f[0] + w[1] * a.f[1]))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FidelityMode {
    /// Overlap with the full post-measurement state; leakage counts as error.
    #[default]
    Raw,
    /// Restricted to runs where every slot holds a photon.
    Postselected,
}

/// Raw and postselected fidelity of one projected state.
fn fidelities(projected: &BTreeMap<SlotString, C64>, target: &NQubitState) -> (f64, f64) {
    let mut p_all = 0.0;
    let mut p_full = 0.0;
    let mut overlap = ZERO;
    for (s, c) in projected {
        let w = c.norm_sqr();
        p_all += w;
        if let Some(x) = s.photons() {
            p_full += w;
            overlap += target.amplitude(x).conj() * c;
        }
    }
    let o = overlap.norm_sqr();
    let raw = if p_all > 0.0 { o / p_all } else { 0.0 };
    let post = if p_full > 0.0 { o / p_full } else { 0.0 };
    (raw.min(1.0), post.min(1.0))
}

/// The MES family (|s⟩ + sign·|s̄⟩)/√2; prefixes of `pattern` give the
/// targets for fewer qubits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MesTarget {
    pub pattern: BitString,
    pub sign: Sign,
}

impl MesTarget {
    pub fn ghz(n: usize) -> Self {
        MesTarget {
            pattern: BitString::zeros(n),
            sign: Sign::Plus,
        }
    }
}

/// Raw and postselected fidelities for n = 1 … len(pattern) along one
/// realisation of the recycle errors, drawn from `rng`. The first
/// generation is ideal; each later one is preceded by an imperfect recycle.
pub fn sample_curve<R: Rng>(target: &MesTarget, dist: &ErrorDistribution, rng: &mut R) -> Result<Vec<(f64, f64)>> {
    let protocol = mes_protocol(target.pattern, target.sign)?;
    let mut state = SlotState::initial(protocol.initial[0], protocol.initial[1]);
    let mut out = Vec::with_capacity(target.pattern.len());
    let mut flips = 0usize;
    let mut generated = 0usize;
    for op in &protocol.ops {
        match op {
            Op::Mix(p) => {
                state = state.apply_mixing(p)?;
                flips += 1;
            }
            Op::Generate => {
                if generated > 0 {
                    state = state.imperfect_recycle(&dist.sample(rng));
                }
                state = state.generation_step()?;
                generated += 1;
                let prefix = target.pattern.prefix(generated);
                let want_plus = target.sign == Sign::Plus;
                let outcome = if flips.is_multiple_of(2) == want_plus {
                    Outcome::Match
                } else {
                    Outcome::Complement
                };
                let ideal = NQubitState::mes(prefix, target.sign)?;
                out.push(fidelities(&state.project(protocol.basis, outcome), &ideal));
            }
        }
    }
    Ok(out)
}

fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Fidelity of the n-qubit prefix of `target` for sample `index` of `seed`.
pub fn fidelity_sample(
    n: usize,
    target: &MesTarget,
    dist: &ErrorDistribution,
    seed: u64,
    index: u64,
    mode: FidelityMode,
) -> Result<f64> {
    if n == 0 || n > target.pattern.len() {
        return Err(Error::InvalidParameter(format!("n = {n} outside 1..={}", target.pattern.len())));
    }
    dist.validate()?;
    let t = MesTarget {
        pattern: target.pattern.prefix(n),
        sign: target.sign,
    };
    let curve = sample_curve(&t, dist, &mut sample_rng(seed, index))?;
    let (raw, post) = curve[n - 1];
    Ok(match mode {
        FidelityMode::Raw => raw,
        FidelityMode::Postselected => post,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub n: usize,
    pub mean_fidelity: f64,
    pub std_error: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FidelityCurve {
    pub distribution: ErrorDistribution,
    pub mode: FidelityMode,
    pub seed: u64,
    pub points: Vec<CurvePoint>,
}

impl FidelityCurve {
    pub fn at(&self, n: usize) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.n == n)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_curves_csv(std::slice::from_ref(self), out, false)
    }
}

/// Writes one or more curves; with `labelled` the rows carry the
/// distribution and mode.
pub fn write_curves_csv<W: Write>(curves: &[FidelityCurve], out: W, labelled: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if labelled {
        w.write_record(["eps_m", "delta_m", "mode", "n", "mean_fidelity", "std_error", "samples"])?;
    } else {
        w.write_record(["n", "mean_fidelity", "std_error", "samples"])?;
    }
    for c in curves {
        let mode = match c.mode {
            FidelityMode::Raw => "raw",
            FidelityMode::Postselected => "postselected",
        };
        for p in &c.points {
            let mut row = Vec::new();
            if labelled {
                row.extend([fmt_f64(c.distribution.eps_m), fmt_f64(c.distribution.delta_m), mode.to_string()]);
            }
            row.extend([
                p.n.to_string(),
                fmt_f64(p.mean_fidelity),
                fmt_f64(p.std_error),
                p.samples.to_string(),
            ]);
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub const MIN_SAMPLES: usize = 100;

/// Monte Carlo mean and standard error of the fidelity for n = 1 … n_max.
/// Sample `i` uses RNG stream `i` of `seed`; the same draws serve every n.
pub fn fidelity_curve(
    target: &MesTarget,
    dist: &ErrorDistribution,
    samples: usize,
    seed: u64,
    mode: FidelityMode,
) -> Result<FidelityCurve> {
    Ok(fidelity_curves(target, dist, samples, seed)?
        .into_iter()
        .find(|c| c.mode == mode)
        .unwrap())
}

/// Raw and postselected curves from the same samples.
pub fn fidelity_curves(
    target: &MesTarget,
    dist: &ErrorDistribution,
    samples: usize,
    seed: u64,
) -> Result<[FidelityCurve; 2]> {
    dist.validate()?;
    if samples < MIN_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "at least {MIN_SAMPLES} samples required, got {samples}"
        )));
    }
    let n_max = target.pattern.len();
    if n_max == 0 || n_max > 24 {
        return Err(Error::ResourceLimit(format!("n_max = {n_max} outside 1..=24")));
    }
    let per_sample: Vec<Vec<(f64, f64)>> = (0..samples)
        .into_par_iter()
        .map(|i| sample_curve(target, dist, &mut sample_rng(seed, i as u64)))
        .collect::<Result<_>>()?;
    let stats = |pick: fn(&(f64, f64)) -> f64| -> Vec<CurvePoint> {
        (0..n_max)
            .map(|j| {
                let m = samples as f64;
                let mean = per_sample.iter().map(|c| pick(&c[j])).sum::<f64>() / m;
                let var = per_sample.iter().map(|c| (pick(&c[j]) - mean).powi(2)).sum::<f64>() / (m - 1.0);
                CurvePoint {
                    n: j + 1,
                    mean_fidelity: mean,
                    std_error: (var / m).sqrt(),
                    samples,
                }
            })
            .collect()
    };
    let curve = |mode, points| FidelityCurve {
        distribution: *dist,
        mode,
        seed,
        points,
    };
    Ok([
        curve(FidelityMode::Raw, stats(|p| p.0)),
        curve(FidelityMode::Postselected, stats(|p| p.1)),
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Distortion {
    pub state: NQubitState,
    pub fidelity: f64,
}

/// q_x → q_x e^{−(κ₁−κ₀)T n₁(x)}, renormalised.
pub fn absorption_distortion(state: &NQubitState, kappa0: f64, kappa1: f64, t: f64) -> Result<Distortion> {
    ensure_finite(kappa0, "kappa0")?;
    ensure_finite(kappa1, "kappa1")?;
    ensure_finite(t, "T")?;
    if t <= 0.0 {
        return Err(Error::InvalidParameter(format!("T must be > 0, got {t}")));
    }
    let lambda = (kappa1 - kappa0) * t;
    if lambda == 0.0 {
        return Ok(Distortion {
            state: state.clone(),
            fidelity: 1.0,
        });
    }
    let amps: BTreeMap<BitString, C64> = state
        .terms()
        .map(|(x, q)| (x, q * (-lambda * x.ones_count() as f64).exp()))
        .collect();
    let out = NQubitState::normalized(state.qubits(), amps)?;
    let fidelity = state.fidelity(&out);
    Ok(Distortion { state: out, fidelity })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    /// Γ Ω₀²/(4δ²) at the pulse peak.
    pub gamma_eff_peak: f64,
    /// Γ max(Ω₀, g)²/(4δ²).
    pub gamma_eff_conservative: f64,
    /// ∫ Γ Ω(t)²/(4δ²) dt over the window.
    pub p_sp: f64,
    /// Γ_eff,conservative · T.
    pub p_sp_conservative: f64,
    /// I/ΔI, the upper bound on the number of qubits from intensity noise.
    pub n_max: f64,
    pub window: f64,
    pub cavity_lifetimes: f64,
    pub cycle_time: f64,
    pub cycle_rate: f64,
}

/// Spontaneous-emission, intensity-noise and repetition-rate estimates.
pub fn feasibility(
    params: &BranchParams,
    pulse: &ControlPulse,
    window: f64,
    recycle_overhead: f64,
    rel_intensity_fluct: f64,
) -> Result<FeasibilityReport> {
    params.validate()?;
    pulse.validate()?;
    for (v, name) in [
        (window, "window"),
        (recycle_overhead, "recycle overhead"),
        (rel_intensity_fluct, "relative intensity fluctuation"),
    ] {
        ensure_finite(v, name)?;
    }
    if window <= 0.0 || rel_intensity_fluct <= 0.0 || recycle_overhead < 0.0 {
        return Err(Error::InvalidParameter(
            "window and intensity fluctuation must be > 0, overhead >= 0".into(),
        ));
    }
    let scale = params.gamma_sp / (4.0 * params.delta * params.delta);
    let peak = pulse.shape.peak();
    let p_sp = quadrature::integrate_with_breaks(
        |t| {
            let o = pulse.shape.amplitude(t);
            scale * o * o
        },
        0.0,
        window,
        &pulse.shape.breakpoints(),
        Tolerance::default(),
    )?;
    let conservative = scale * peak.max(params.g).powi(2);
    let cycle_time = window + recycle_overhead;
    Ok(FeasibilityReport {
        gamma_eff_peak: scale * peak * peak,
        gamma_eff_conservative: conservative,
        p_sp,
        p_sp_conservative: conservative * window,
        n_max: 1.0 / rel_intensity_fluct,
        window,
        cavity_lifetimes: window * params.kappa_c,
        cycle_time,
        cycle_rate: 1.0 / cycle_time,
    })
}
