//! Derivative-free minimisation: argmin's Nelder–Mead with seeded multi-start.

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iters: u64,
    /// Stop when the standard deviation of the simplex values falls below this.
    pub sd_tol: f64,
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_iters: 4000,
            sd_tol: 1e-15,
            initial_step: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

struct Objective<F>(F);

impl<F: Fn(&[f64]) -> f64> CostFunction for Objective<F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> Result<f64, argmin::core::Error> {
        let v = (self.0)(x);
        Ok(if v.is_finite() { v } else { f64::INFINITY })
    }
}

/// Minimises `f` from `x0`. Non-finite values are treated as +∞.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], opts: &NelderMeadOptions) -> Minimum {
    let mut simplex = vec![x0.to_vec()];
    for i in 0..x0.len() {
        let mut p = x0.to_vec();
        p[i] += opts.initial_step;
        simplex.push(p);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(opts.sd_tol)
        .expect("non-negative tolerance");
    let result = Executor::new(Objective(&f), solver)
        .configure(|s| s.max_iters(opts.max_iters))
        .run()
        .expect("objective never fails");
    let state = result.state();
    let evals = state.get_func_counts().get("cost_count").copied().unwrap_or(0) as usize;
    Minimum {
        x: state.get_best_param().cloned().unwrap_or_else(|| x0.to_vec()),
        f: state.get_best_cost(),
        evals,
        converged: matches!(
            state.get_termination_status(),
            TerminationStatus::Terminated(TerminationReason::SolverConverged)
        ),
    }
}

#[derive(Debug, Clone)]
pub struct MultiStart {
    pub best: Minimum,
    pub best_start: usize,
    pub runs: Vec<Minimum>,
}

/// Runs Nelder–Mead from `starts` points drawn uniformly from `bounds`.
/// Start `i` draws from ChaCha8 stream `i` of `seed`, so the result does not
/// depend on thread scheduling; ties go to the lowest start index.
pub fn multistart<F>(
    f: F,
    bounds: &[(f64, f64)],
    starts: usize,
    seed: u64,
    opts: &NelderMeadOptions,
) -> MultiStart
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    assert!(starts > 0, "multistart needs at least one start");
    let runs: Vec<Minimum> = (0..starts)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let x0: Vec<f64> = bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect();
            nelder_mead(&f, &x0, opts)
        })
        .collect();
    let best_start = (0..starts)
        .min_by(|&a, &b| runs[a].f.total_cmp(&runs[b].f).then(a.cmp(&b)))
        .unwrap();
    MultiStart {
        best: runs[best_start].clone(),
        best_start,
        runs,
    }
}
