//! Scenario files. Every section is optional; missing parts fall back to the
//! reference scenario in the paper's regime.

use std::path::PathBuf;

use cqed_core::control::{branch_pair, scale_pulse};
use cqed_core::decoherence::{ErrorDistribution, FidelityMode};
use cqed_core::presets;
use cqed_core::sequence::{BitString, NQubitState, Sign};
use cqed_core::{BranchParams, Error, Event, GenerationSequence, Result, Schedule, Units, C64};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Unit of every rate in the file (times are always in seconds).
    pub units: Option<Units>,
    /// One parameter set shared by both branches, or one per branch.
    pub params: Option<Vec<BranchParams>>,
    pub initial: Option<[C64; 2]>,
    pub events: Option<Vec<Event>>,
    pub grid: Option<GridConfig>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub envelope: EnvelopeConfig,
    #[serde(default)]
    pub markov: MarkovConfig,
    #[serde(default)]
    pub factorization: FactorizationConfig,
    #[serde(default)]
    pub fidelity: FidelityConfig,
    #[serde(default)]
    pub engineer: EngineerConfig,
    #[serde(default)]
    pub feasibility: FeasibilityConfig,
    #[serde(default)]
    pub ghz: GhzConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub modes: usize,
    /// Total band in units of κ_c.
    pub width_kappa: f64,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct Limits {
    pub max_modes: usize,
    pub max_two_photon_modes: usize,
    pub max_samples: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_modes: 1024,
            max_two_photon_modes: 256,
            max_samples: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    FullOde,
    Overdamped,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvelopeConfig {
    /// Index among the generation events.
    pub sequence: usize,
    pub branch: usize,
    pub method: Method,
    /// Accept grids coarser or narrower than the resolution rule.
    pub relaxed: bool,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        EnvelopeConfig {
            sequence: 0,
            branch: 0,
            method: Method::FullOde,
            relaxed: false,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarkovConfig {
    pub sequence: usize,
    pub branch: usize,
    pub sweep: Option<Vec<GridConfig>>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct FactorizationConfig {
    pub branch: usize,
    pub allow_overlap: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeChoice {
    #[default]
    Raw,
    Postselected,
    Both,
}

impl ModeChoice {
    pub fn modes(self) -> Vec<FidelityMode> {
        match self {
            ModeChoice::Raw => vec![FidelityMode::Raw],
            ModeChoice::Postselected => vec![FidelityMode::Postselected],
            ModeChoice::Both => vec![FidelityMode::Raw, FidelityMode::Postselected],
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    pub label: String,
    pub eps_m: f64,
    pub delta_m: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct FidelityConfig {
    pub curves: Option<Vec<CurveConfig>>,
    pub n_max: usize,
    pub samples: usize,
    pub mode: ModeChoice,
    /// Target pattern s of (|s⟩ ± |s̄⟩)/√2; all zeros by default.
    pub pattern: Option<String>,
    pub sign: Sign,
}

impl Default for FidelityConfig {
    fn default() -> Self {
        FidelityConfig {
            curves: None,
            n_max: 10,
            samples: 10_000,
            mode: ModeChoice::Raw,
            pattern: None,
            sign: Sign::Plus,
        }
    }
}

impl FidelityConfig {
    pub fn curves(&self) -> Result<Vec<(String, ErrorDistribution)>> {
        match &self.curves {
            None => Ok(presets::fidelity_figure_curves()
                .into_iter()
                .map(|(l, d)| (l.to_string(), d))
                .collect()),
            Some(list) => list
                .iter()
                .map(|c| Ok((c.label.clone(), ErrorDistribution::new(c.eps_m, c.delta_m)?)))
                .collect(),
        }
    }

    pub fn pattern(&self) -> Result<BitString> {
        match &self.pattern {
            None => Ok(BitString::zeros(self.n_max)),
            Some(p) => {
                let b: BitString = p.parse()?;
                if b.len() != self.n_max {
                    return Err(Error::InvalidParameter(format!(
                        "pattern has {} slots but n_max is {}",
                        b.len(),
                        self.n_max
                    )));
                }
                Ok(b)
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineerConfig {
    pub target: Option<NQubitState>,
    /// GHZ size used when no explicit target is given.
    pub ghz: usize,
    pub starts: usize,
}

impl Default for EngineerConfig {
    fn default() -> Self {
        EngineerConfig {
            target: None,
            ghz: 3,
            starts: 50,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeasibilityConfig {
    pub sequence: usize,
    pub branch: usize,
    /// Recycle overhead in units of the window length.
    pub overhead_windows: f64,
    pub rel_intensity_fluct: f64,
}

impl Default for FeasibilityConfig {
    fn default() -> Self {
        FeasibilityConfig {
            sequence: 0,
            branch: 0,
            overhead_windows: 4.0,
            rel_intensity_fluct: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct GhzConfig {
    pub n: usize,
    pub pattern: Option<String>,
    pub sign: Sign,
}

impl Default for GhzConfig {
    fn default() -> Self {
        GhzConfig {
            n: 3,
            pattern: None,
            sign: Sign::Plus,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn units(&self) -> Units {
        self.units.unwrap_or_default()
    }

    fn factor(&self) -> f64 {
        self.units().to_angular()
    }

    /// Branch parameters in rad/s.
    pub fn params(&self) -> Result<[BranchParams; 2]> {
        match &self.params {
            None => Ok([presets::paper_params(); 2]),
            Some(list) => Ok(branch_pair(list)?.map(|p| p.scaled(self.factor()))),
        }
    }

    /// Schedule in rad/s, if the file provides events.
    pub fn schedule(&self) -> Option<Schedule> {
        let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let factor = self.factor();
        self.events.as_ref().map(|events| Schedule {
            initial: self.initial.unwrap_or([h, h]),
            events: events
                .iter()
                .map(|e| match e {
                    Event::Generation(s) => Event::Generation(GenerationSequence {
                        start: s.start,
                        duration: s.duration,
                        pulses: [scale_pulse(&s.pulses[0], factor), scale_pulse(&s.pulses[1], factor)],
                    }),
                    other => other.clone(),
                })
                .collect(),
        })
    }

    /// The `index`-th generation event, or `fallback` without events.
    pub fn sequence(
        &self,
        index: usize,
        fallback: impl FnOnce(&BranchParams) -> Result<GenerationSequence>,
    ) -> Result<GenerationSequence> {
        match self.schedule() {
            Some(s) => s.sequences().nth(index).cloned().ok_or_else(|| {
                Error::InvalidParameter(format!("schedule has no generation event with index {index}"))
            }),
            None => fallback(&self.params()?[0]),
        }
    }
}

pub fn sign_name(sign: Sign) -> &'static str {
    match sign {
        Sign::Plus => "plus",
        Sign::Minus => "minus",
    }
}
