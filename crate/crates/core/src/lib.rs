//! Simulation of a single-atom cavity-QED source of entangled photon trains.
//!
//! * [`control`]: parameters, pulses, schedules and the derived rates r, θ, μ, θ_c.
//! * [`markov`]: atom–cavity amplitudes and emitted spectral envelopes in the
//!   Markov limit.
//! * [`reservoir`]: exact evolution against a discretized output continuum,
//!   used to validate the Markov picture and two-photon factorization.
//! * [`sequence`]: ideal photon-train states, mixing pulses, measurement and
//!   state engineering.
//! * [`decoherence`]: imperfect recycling, ensemble fidelities, absorption
//!   distortion and feasibility estimates.

pub mod control;
pub mod decoherence;
pub mod error;
pub mod markov;
pub mod ode;
pub mod optimize;
pub mod presets;
pub mod quadrature;
pub mod reservoir;
pub mod sequence;

pub use control::{
    accumulated_phases, calibrate_for_mu, effective_rate, validate_schedule, BranchParams, ControlPulse,
    Drive, Event, GenerationSequence, PhasePolicy, Phases, PulseShape, Schedule, ScheduleDocument,
    ScheduleReport, Units, ValidationOptions,
};
pub use decoherence::{
    absorption_distortion, feasibility, fidelity_curve, fidelity_curves, fidelity_sample, ErrorDistribution,
    FeasibilityReport, FidelityCurve, FidelityMode, MesTarget, RecycleError, SlotState,
};
pub use error::{Error, Result};
pub use markov::{
    emission_probability, envelope_overlap, overdamped_amplitudes, solve_amplitudes, spectral_envelope,
    AmplitudeTrajectory, EnvelopeMethod, EnvelopeOptions, FrequencyGrid, SpectralEnvelope,
};
pub use num_complex::Complex64 as C64;
pub use reservoir::{
    compare_with_markov, convergence_sweep, extract_exact_envelope, factorization_error, factorization_report,
    integrate_single, integrate_two_photon, MarkovComparison, ModeGrid, ReservoirOptions, TwoPhotonRun,
    TwoPhotonSchedule,
};
pub use sequence::{
    build_mes, build_mes_pattern, engineer_state, parameter_budget, BitString, EngineerOptions, HybridState,
    MixingPulse, NQubitState, Outcome, Sign,
};
