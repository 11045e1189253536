//! Ideal photon-train bookkeeping: generation steps, atom-label mixing,
//! atom measurement and state engineering.
//!
//! Photon slot 1 is the first emitted photon and is written leftmost.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::control::{Event, Schedule};
use crate::error::{Error, Result};
use crate::optimize::{multistart, NelderMeadOptions};

pub const MAX_QUBITS: usize = 63;
const NORM_TOL: f64 = 1e-10;

/// A string of photon polarizations, slot 1 stored as the most significant bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct BitString {
    len: u8,
    bits: u64,
}

impl BitString {
    pub fn empty() -> Self {
        BitString::default()
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n <= MAX_QUBITS);
        BitString { len: n as u8, bits: 0 }
    }

    pub fn ones(n: usize) -> Self {
        BitString::zeros(n).complement()
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        if bits.len() > MAX_QUBITS {
            return Err(Error::InvalidParameter(format!("at most {MAX_QUBITS} slots")));
        }
        let mut s = BitString::empty();
        for &b in bits {
            if b > 1 {
                return Err(Error::InvalidParameter(format!("bit value {b}")));
            }
            s = s.push(b);
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Bit of slot `i` (0-based, slot 1 is `i = 0`).
    pub fn get(&self, i: usize) -> u8 {
        assert!(i < self.len());
        ((self.bits >> (self.len() - 1 - i)) & 1) as u8
    }

    /// Appends a new last slot.
    pub fn push(self, bit: u8) -> Self {
        assert!(self.len() < MAX_QUBITS);
        BitString {
            len: self.len + 1,
            bits: (self.bits << 1) | (bit & 1) as u64,
        }
    }

    pub fn complement(self) -> Self {
        let mask = if self.len == 0 { 0 } else { u64::MAX >> (64 - self.len as u32) };
        BitString {
            len: self.len,
            bits: !self.bits & mask,
        }
    }

    /// Number of ones, n₁(x).
    pub fn ones_count(&self) -> u32 {
        self.bits.count_ones()
    }

    pub fn prefix(&self, n: usize) -> Self {
        assert!(n <= self.len());
        BitString {
            len: n as u8,
            bits: self.bits >> (self.len() - n),
        }
    }

    pub fn as_u64(&self) -> u64 {
        self.bits
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len() {
            write!(f, "{}", self.get(i))?;
        }
        Ok(())
    }
}

impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits: Vec<u8> = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::InvalidParameter(format!("invalid bit '{c}' in \"{s}\""))),
            })
            .collect::<Result<_>>()?;
        BitString::from_bits(&bits)
    }
}

/// Atom-label rotation |f₀⟩ → d₀|f₀⟩ + d₁|f₁⟩, |f₁⟩ → −d₁*|f₀⟩ + d₀*|f₁⟩.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingPulse {
    pub d0: C64,
    pub d1: C64,
}

impl MixingPulse {
    pub fn new(d0: C64, d1: C64) -> Result<Self> {
        let p = MixingPulse { d0, d1 };
        p.validate()?;
        Ok(p)
    }

    pub fn identity() -> Self {
        MixingPulse {
            d0: C64::new(1.0, 0.0),
            d1: C64::new(0.0, 0.0),
        }
    }

    pub fn bit_flip() -> Self {
        MixingPulse {
            d0: C64::new(0.0, 0.0),
            d1: C64::new(1.0, 0.0),
        }
    }

    /// (cos a, e^{ib} sin a)
    pub fn from_angles(a: f64, b: f64) -> Self {
        MixingPulse {
            d0: C64::new(a.cos(), 0.0),
            d1: C64::from_polar(a.sin(), b),
        }
    }

    pub fn inverse(&self) -> Self {
        MixingPulse {
            d0: self.d0.conj(),
            d1: -self.d1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.d0.norm_sqr() + self.d1.norm_sqr();
        if !n.is_finite() || (n - 1.0).abs() > NORM_TOL {
            return Err(Error::NonUnitary(n));
        }
        Ok(())
    }

    /// Images of the label amplitudes (a₀, a₁).
    fn apply(&self, a0: C64, a1: C64) -> (C64, C64) {
        (
            self.d0 * a0 - self.d1.conj() * a1,
            self.d1 * a0 + self.d0.conj() * a1,
        )
    }
}

/// Photon slots ⊗ atom label.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridState {
    slots: usize,
    amps: BTreeMap<(BitString, u8), C64>,
}

impl HybridState {
    /// Atom in c₀|i₀⟩ + c₁|i₁⟩, no photons yet.
    pub fn initial(c0: C64, c1: C64) -> Result<Self> {
        let n = c0.norm_sqr() + c1.norm_sqr();
        if !n.is_finite() || (n - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidParameter(format!("initial amplitudes have norm {n}")));
        }
        let mut amps = BTreeMap::new();
        for (label, c) in [(0u8, c0), (1u8, c1)] {
            if c != C64::new(0.0, 0.0) {
                amps.insert((BitString::empty(), label), c);
            }
        }
        Ok(HybridState { slots: 0, amps })
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn amplitude(&self, photons: BitString, label: u8) -> C64 {
        self.amps.get(&(photons, label)).copied().unwrap_or_default()
    }

    pub fn terms(&self) -> impl Iterator<Item = (BitString, u8, C64)> + '_ {
        self.amps.iter().map(|(&(s, a), &c)| (s, a, c))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|c| c.norm_sqr()).sum()
    }

    /// Each term (x, α) becomes (x·α, α).
    pub fn generation_step(&self) -> Result<Self> {
        if self.slots >= MAX_QUBITS {
            return Err(Error::ResourceLimit(format!("more than {MAX_QUBITS} photons")));
        }
        let amps = self
            .amps
            .iter()
            .map(|(&(s, a), &c)| ((s.push(a), a), c))
            .collect();
        Ok(HybridState {
            slots: self.slots + 1,
            amps,
        })
    }

    pub fn apply_mixing(&self, pulse: &MixingPulse) -> Result<Self> {
        pulse.validate()?;
        let mut amps = BTreeMap::new();
        let zero = C64::new(0.0, 0.0);
        let strings: std::collections::BTreeSet<BitString> = self.amps.keys().map(|&(s, _)| s).collect();
        for s in strings {
            let (b0, b1) = pulse.apply(self.amplitude(s, 0), self.amplitude(s, 1));
            if b0 != zero {
                amps.insert((s, 0), b0);
            }
            if b1 != zero {
                amps.insert((s, 1), b1);
            }
        }
        Ok(HybridState {
            slots: self.slots,
            amps,
        })
    }

    /// Projects the atom onto `m` and onto its complement m⊥ = m₁*|f₀⟩ − m₀*|f₁⟩.
    pub fn measure_atom(&self, m0: C64, m1: C64) -> Result<[MeasurementOutcome; 2]> {
        let n = m0.norm_sqr() + m1.norm_sqr();
        if !n.is_finite() || (n - 1.0).abs() > NORM_TOL {
            return Err(Error::NonUnitary(n));
        }
        let project = |w0: C64, w1: C64, outcome: Outcome| {
            let mut amps = BTreeMap::new();
            for (&(s, a), &c) in &self.amps {
                let w = if a == 0 { w0 } else { w1 };
                *amps.entry(s).or_insert(C64::new(0.0, 0.0)) += w * c;
            }
            let p: f64 = amps.values().map(|c: &C64| c.norm_sqr()).sum();
            let state = if p > 0.0 {
                let scale = 1.0 / p.sqrt();
                Some(NQubitState {
                    qubits: self.slots,
                    amps: amps.into_iter().map(|(s, c)| (s, c * scale)).collect(),
                })
            } else {
                None
            };
            MeasurementOutcome {
                outcome,
                probability: p,
                state,
            }
        };
        Ok([
            project(m0.conj(), m1.conj(), Outcome::Match),
            project(m1, -m0, Outcome::Complement),
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// The atom was found in the measured basis state m.
    Match,
    /// The atom was found in m⊥.
    Complement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOutcome {
    pub outcome: Outcome,
    pub probability: f64,
    /// `None` for a zero-probability outcome.
    pub state: Option<NQubitState>,
}

/// Photonic n-qubit state Σ q_x |x⟩.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateRepr", into = "StateRepr")]
pub struct NQubitState {
    qubits: usize,
    amps: BTreeMap<BitString, C64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateRepr {
    qubits: usize,
    amplitudes: BTreeMap<String, [f64; 2]>,
}

impl From<NQubitState> for StateRepr {
    fn from(s: NQubitState) -> Self {
        StateRepr {
            qubits: s.qubits,
            amplitudes: s
                .amps
                .iter()
                .map(|(b, c)| (b.to_string(), [c.re, c.im]))
                .collect(),
        }
    }
}

impl TryFrom<StateRepr> for NQubitState {
    type Error = Error;

    fn try_from(r: StateRepr) -> Result<Self> {
        let mut amps = BTreeMap::new();
        for (k, [re, im]) in r.amplitudes {
            let b: BitString = k.parse()?;
            amps.insert(b, C64::new(re, im));
        }
        NQubitState::new(r.qubits, amps)
    }
}

impl NQubitState {
    /// Validates lengths and unit norm.
    pub fn new(qubits: usize, amps: BTreeMap<BitString, C64>) -> Result<Self> {
        if qubits == 0 || qubits > MAX_QUBITS {
            return Err(Error::InvalidParameter(format!("qubit count {qubits} out of range")));
        }
        if let Some(b) = amps.keys().find(|b| b.len() != qubits) {
            return Err(Error::InvalidParameter(format!(
                "bitstring {b} has length {} instead of {qubits}",
                b.len()
            )));
        }
        let s = NQubitState { qubits, amps };
        let n = s.norm_sqr();
        if !n.is_finite() || (n - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidParameter(format!("state norm is {n}, expected 1")));
        }
        Ok(s)
    }

    /// Normalises arbitrary amplitudes.
    pub fn normalized(qubits: usize, amps: BTreeMap<BitString, C64>) -> Result<Self> {
        let n: f64 = amps.values().map(|c| c.norm_sqr()).sum();
        if n <= 0.0 || !n.is_finite() {
            return Err(Error::ZeroNorm("state"));
        }
        let scale = 1.0 / n.sqrt();
        NQubitState::new(qubits, amps.into_iter().map(|(b, c)| (b, c * scale)).collect())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// (|s⟩ + sign·|s̄⟩)/√2.
    pub fn mes(pattern: BitString, sign: Sign) -> Result<Self> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut amps = BTreeMap::new();
        amps.insert(pattern, C64::new(h, 0.0));
        amps.insert(pattern.complement(), C64::new(sign.value() * h, 0.0));
        NQubitState::new(pattern.len(), amps)
    }

    pub fn ghz(n: usize) -> Result<Self> {
        NQubitState::mes(BitString::zeros(n), Sign::Plus)
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn amplitude(&self, x: BitString) -> C64 {
        self.amps.get(&x).copied().unwrap_or_default()
    }

    /// Nonzero terms in lexicographic bitstring order.
    pub fn terms(&self) -> impl Iterator<Item = (BitString, C64)> + '_ {
        self.amps.iter().map(|(&b, &c)| (b, c))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|c| c.norm_sqr()).sum()
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &NQubitState) -> C64 {
        self.amps
            .iter()
            .filter_map(|(b, c)| other.amps.get(b).map(|d| c.conj() * d))
            .sum()
    }

    /// |⟨self|other⟩|².
    pub fn fidelity(&self, other: &NQubitState) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Removes the global phase so that the amplitude of `reference` is real
    /// and positive (or, if it vanishes, that of the first nonzero term).
    pub fn canonical_phase(&self, reference: BitString) -> Self {
        let pivot = self
            .amps
            .get(&reference)
            .filter(|c| c.norm() > 0.0)
            .or_else(|| self.amps.values().find(|c| c.norm() > 0.0))
            .copied();
        let rot = match pivot {
            Some(c) => c.conj() / c.norm(),
            None => C64::new(1.0, 0.0),
        };
        NQubitState {
            qubits: self.qubits,
            amps: self.amps.iter().map(|(&b, &c)| (b, c * rot)).collect(),
        }
    }

    /// One line per term, `bitstring re im`, in lexicographic order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (b, c) in self.terms() {
            out.push_str(&format!("{b} {:+.12e} {:+.12e}\n", c.re, c.im));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Op {
    Generate,
    Mix(MixingPulse),
}

/// An ideal pulse program ending in an atom measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub initial: [C64; 2],
    pub ops: Vec<Op>,
    pub basis: [C64; 2],
    pub outcome: Outcome,
}

impl Protocol {
    pub fn photons(&self) -> usize {
        self.ops.iter().filter(|o| matches!(o, Op::Generate)).count()
    }

    pub fn hybrid_state(&self) -> Result<HybridState> {
        let mut state = HybridState::initial(self.initial[0], self.initial[1])?;
        for op in &self.ops {
            state = match op {
                Op::Generate => state.generation_step()?,
                Op::Mix(p) => state.apply_mixing(p)?,
            };
        }
        Ok(state)
    }

    /// Probability of the selected outcome and the resulting photonic state.
    pub fn run(&self) -> Result<MeasurementOutcome> {
        let [m, c] = self.hybrid_state()?.measure_atom(self.basis[0], self.basis[1])?;
        Ok(match self.outcome {
            Outcome::Match => m,
            Outcome::Complement => c,
        })
    }
}

/// Program producing (|s⟩ + sign·|s̄⟩)/√2: start in (|i₀⟩+|i₁⟩)/√2, insert a
/// bit flip before step j whenever s_j differs from s_{j−1} (s₀ = 0), and
/// measure in (|f₀⟩+|f₁⟩)/√2. Each flip adds a relative sign, which the choice
/// of outcome compensates.
pub fn mes_protocol(pattern: BitString, sign: Sign) -> Result<Protocol> {
    if pattern.is_empty() {
        return Err(Error::InvalidParameter("MES needs at least one qubit".into()));
    }
    let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mut ops = Vec::new();
    let mut previous = 0;
    let mut flips = 0;
    for j in 0..pattern.len() {
        let bit = pattern.get(j);
        if bit != previous {
            ops.push(Op::Mix(MixingPulse::bit_flip()));
            flips += 1;
        }
        ops.push(Op::Generate);
        previous = bit;
    }
    let want_plus = sign == Sign::Plus;
    let outcome = if (flips % 2 == 0) == want_plus {
        Outcome::Match
    } else {
        Outcome::Complement
    };
    Ok(Protocol {
        initial: [h, h],
        ops,
        basis: [h, h],
        outcome,
    })
}

/// Maximally entangled state with the given slot pattern, built by running
/// its pulse program; the global phase is fixed so that q_s > 0.
pub fn build_mes_pattern(pattern: BitString, sign: Sign) -> Result<NQubitState> {
    let out = mes_protocol(pattern, sign)?.run()?;
    let state = out.state.ok_or(Error::ZeroNorm("MES outcome"))?;
    Ok(state.canonical_phase(pattern))
}

pub fn build_mes(n: usize, sign: Sign) -> Result<NQubitState> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::InvalidParameter(format!("qubit count {n} out of range")));
    }
    build_mes_pattern(BitString::zeros(n), sign)
}

/// Runs the ideal sequence engine over a schedule's event list. Returns the
/// final hybrid state and, if the schedule ends in a measurement, both outcomes.
pub fn run_schedule(schedule: &Schedule) -> Result<(HybridState, Option<[MeasurementOutcome; 2]>)> {
    let mut state = HybridState::initial(schedule.initial[0], schedule.initial[1])?;
    let mut measured = None;
    for ev in &schedule.events {
        match ev {
            Event::Generation(_) => state = state.generation_step()?,
            Event::Recycle { .. } => {}
            Event::Mixing { d0, d1 } => state = state.apply_mixing(&MixingPulse::new(*d0, *d1)?)?,
            Event::Measurement { m0, m1 } => measured = Some(state.measure_atom(*m0, *m1)?),
        }
    }
    Ok((state, measured))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParameterBudget {
    /// 2n mixing-pulse parameters.
    pub free_params: usize,
    /// 2^{n+1} − 2 real parameters of a general n-qubit state.
    pub state_dim_params: u128,
    /// True when the pulses cannot reach every state.
    pub restricted: bool,
}

pub fn parameter_budget(n: usize) -> Result<ParameterBudget> {
    if n == 0 || n > 126 {
        return Err(Error::InvalidParameter(format!("qubit count {n} out of range")));
    }
    let free = 2 * n;
    let dim = (1u128 << (n + 1)) - 2;
    Ok(ParameterBudget {
        free_params: free,
        state_dim_params: dim,
        restricted: (free as u128) < dim,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineerOptions {
    pub starts: usize,
    pub seed: u64,
    pub local: NelderMeadOptions,
    /// Fidelity regarded as an exact hit.
    pub target_fidelity: f64,
}

impl Default for EngineerOptions {
    fn default() -> Self {
        EngineerOptions {
            starts: 50,
            seed: 0,
            local: NelderMeadOptions {
                max_iters: 6000,
                ..NelderMeadOptions::default()
            },
            target_fidelity: 1.0 - 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EngineeredProgram {
    pub initial: [C64; 2],
    /// Mixing pulse applied after each generation step.
    pub pulses: Vec<MixingPulse>,
    pub basis: [C64; 2],
    pub outcome: Outcome,
    pub fidelity: f64,
    pub probability: f64,
    /// False if the local searches ran out of evaluations before converging.
    pub converged: bool,
    pub evaluations: usize,
    pub budget: ParameterBudget,
    /// Total real parameters optimised (2n pulses + initial state + basis).
    pub optimized_params: usize,
}

fn angle_pair(a: f64, b: f64) -> [C64; 2] {
    [C64::new(a.cos(), 0.0), C64::from_polar(a.sin(), b)]
}

fn program_from_params(x: &[f64], n: usize) -> Protocol {
    let mut ops = Vec::with_capacity(2 * n);
    for j in 0..n {
        ops.push(Op::Generate);
        ops.push(Op::Mix(MixingPulse::from_angles(x[4 + 2 * j], x[5 + 2 * j])));
    }
    Protocol {
        initial: angle_pair(x[0], x[1]),
        ops,
        basis: angle_pair(x[2], x[3]),
        outcome: Outcome::Match,
    }
}

fn program_fidelity(target: &NQubitState, p: &Protocol) -> (f64, f64) {
    match p.run() {
        Ok(MeasurementOutcome {
            probability,
            state: Some(s),
            ..
        }) if probability > 1e-14 => (target.fidelity(&s), probability),
        _ => (0.0, 0.0),
    }
}

/// Searches pulse programs (initial state, one mixing pulse per step,
/// measurement basis) that maximise the fidelity of the `Match` outcome with
/// `target`. No reachability is guaranteed.
pub fn engineer_state(target: &NQubitState, opts: &EngineerOptions) -> Result<EngineeredProgram> {
    let n = target.qubits();
    if opts.starts == 0 {
        return Err(Error::InvalidParameter("at least one optimizer start required".into()));
    }
    let dim = 2 * n + 4;
    let pi = std::f64::consts::PI;
    let bounds: Vec<(f64, f64)> = (0..dim)
        .map(|i| if i % 2 == 0 { (0.0, pi) } else { (-pi, pi) })
        .collect();
    let objective = |x: &[f64]| 1.0 - program_fidelity(target, &program_from_params(x, n)).0;
    let result = multistart(objective, &bounds, opts.starts, opts.seed, &opts.local);
    let best = &result.best;
    let program = program_from_params(&best.x, n);
    let (fidelity, probability) = program_fidelity(target, &program);
    let converged = fidelity >= opts.target_fidelity || result.runs.iter().all(|r| r.converged);
    let pulses = program
        .ops
        .iter()
        .filter_map(|o| match o {
            Op::Mix(p) => Some(*p),
            Op::Generate => None,
        })
        .collect();
    Ok(EngineeredProgram {
        initial: program.initial,
        pulses,
        basis: program.basis,
        outcome: program.outcome,
        fidelity,
        probability,
        converged,
        evaluations: result.runs.iter().map(|r| r.evals).sum(),
        budget: parameter_budget(n)?,
        optimized_params: dim,
    })
}
