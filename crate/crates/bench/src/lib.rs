//! Fixtures shared by the benchmarks.

use cqed_core::presets::{self, paper_params};
use cqed_core::{BranchParams, GenerationSequence};

pub fn params() -> BranchParams {
    paper_params()
}

/// Raised cosine over 15 cavity lifetimes with μ(T) = 5.
pub fn short_sequence(params: &BranchParams, start: f64) -> GenerationSequence {
    presets::raised_cosine_sequence(params, start, 15.0, 5.0).expect("calibration")
}
