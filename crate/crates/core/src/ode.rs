//! Dormand–Prince 5(4) stepping through `ode_solvers`.
//!
//! States are flat `f64` slices; complex amplitudes are stored as
//! interleaved (re, im) pairs by the callers.

use ode_solvers::{DVector, OutputType, System};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

struct Rhs<'a, F>(&'a F);

impl<F: Fn(f64, &[f64], &mut [f64])> System<f64, DVector<f64>> for Rhs<'_, F> {
    fn system(&self, t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) {
        (self.0)(t, y.as_slice(), dy.as_mut_slice());
    }
}

pub struct Dopri5 {
    rtol: f64,
    atol: f64,
    /// Step size carried into the next call; zero lets the solver choose.
    h: f64,
    pub stats: OdeStats,
}

impl Dopri5 {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Dopri5 {
            rtol,
            atol,
            h: 0.0,
            stats: OdeStats::default(),
        }
    }

    /// Advances `y` from `t0` to exactly `t1`.
    pub fn integrate<F>(&mut self, f: &F, t0: f64, y: &mut [f64], t1: f64) -> Result<()>
    where
        F: Fn(f64, &[f64], &mut [f64]),
    {
        let span = t1 - t0;
        if span == 0.0 {
            return Ok(());
        }
        if span < 0.0 {
            return Err(Error::InvalidParameter("backward integration".into()));
        }
        let h0 = if self.h > 0.0 && self.h.is_finite() { self.h.min(span) } else { 0.0 };
        let mut solver = ode_solvers::Dopri5::from_param(
            Rhs(f),
            t0,
            t1,
            span,
            DVector::from_column_slice(y),
            self.rtol,
            self.atol,
            0.9,
            0.04,
            0.2,
            10.0,
            span,
            h0,
            100_000,
            u32::MAX,
            OutputType::Sparse,
        );
        let stats = solver.integrate()?;
        self.stats.accepted += stats.accepted_steps as usize;
        self.stats.rejected += stats.rejected_steps as usize;
        self.stats.evaluations += stats.num_eval as usize;

        let (ts, ys) = solver.results().get();
        let last = ys.last().expect("solver records the initial state");
        if !last.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("ODE right-hand side"));
        }
        y.copy_from_slice(last.as_slice());
        // the final step is truncated to land on t1; the one before is a better guess
        let n = ts.len();
        if n >= 3 {
            self.h = ts[n - 2] - ts[n - 3];
        } else if n == 2 {
            self.h = ts[1] - ts[0];
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let f = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -2.0 * y[0];
        let mut s = Dopri5::new(1e-12, 1e-14);
        let mut y = [1.0];
        s.integrate(&f, 0.0, &mut y, 3.0).unwrap();
        assert!((y[0] - (-6.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn harmonic_oscillator_in_pieces() {
        let f = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
        };
        let mut s = Dopri5::new(1e-11, 1e-13);
        let mut y = [1.0, 0.0];
        let mut t = 0.0;
        for _ in 0..100 {
            s.integrate(&f, t, &mut y, t + 0.1).unwrap();
            t += 0.1;
        }
        assert!((y[0] - 10f64.cos()).abs() < 1e-9);
        assert!((y[1] + 10f64.sin()).abs() < 1e-9);
    }

    #[test]
    fn nan_rhs_is_an_error() {
        let f = |_t: f64, _y: &[f64], dy: &mut [f64]| dy[0] = f64::NAN;
        let mut s = Dopri5::new(1e-8, 1e-10);
        let mut y = [1.0];
        assert!(s.integrate(&f, 0.0, &mut y, 1.0).is_err());
    }
}
