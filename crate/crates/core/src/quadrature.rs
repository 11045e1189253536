//! Adaptive quadrature and a few fixed-grid helpers.

use std::cell::Cell;

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 24;

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs: 1e-13,
            rel: 1e-11,
        }
    }
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: Tolerance, depth: u32) -> Result<f64> {
    let bad = Cell::new(false);
    let g = |x: f64| {
        let v = f(x);
        if !v.is_finite() {
            bad.set(true);
        }
        v
    };
    // aim at the relative tolerance of a coarse estimate; the absolute floor
    // only takes over for integrals that cancel
    let scale = quadrature::integrate(g, a, b, f64::MAX).integral.abs();
    let target = if scale > 0.0 { tol.rel * scale } else { tol.abs };
    let out = quadrature::integrate(g, a, b, target);
    if bad.get() || !out.integral.is_finite() {
        return Err(Error::NonFinite("integrand"));
    }
    if out.error_estimate <= tol.abs.max(tol.rel * out.integral.abs()) {
        return Ok(out.integral);
    }
    let mid = 0.5 * (a + b);
    if depth == 0 || mid == a || mid == b {
        return Err(Error::Quadrature {
            a,
            b,
            err: out.error_estimate,
        });
    }
    let half = Tolerance {
        abs: 0.5 * tol.abs,
        rel: tol.rel,
    };
    Ok(adaptive(f, a, mid, half, depth - 1)? + adaptive(f, mid, b, half, depth - 1)?)
}

/// Integrates `f` over `[a, b]` by double-exponential quadrature, bisecting
/// wherever the error estimate misses the tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::NonFinite("quadrature bounds"));
    }
    if a > b {
        return Ok(-adaptive(&f, b, a, tol, MAX_DEPTH)?);
    }
    adaptive(&f, a, b, tol, MAX_DEPTH)
}

/// Integrates over `[a, b]` splitting first at the given interior breakpoints.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<f64> {
    let mut cuts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&x| x > a.min(b) && x < a.max(b))
        .collect();
    if cuts.is_empty() {
        return integrate(&f, a, b, tol);
    }
    cuts.sort_by(f64::total_cmp);
    if a > b {
        cuts.reverse();
    }
    let mut total = 0.0;
    let mut left = a;
    for &c in cuts.iter().chain(std::iter::once(&b)) {
        total += integrate(&f, left, c, tol)?;
        left = c;
    }
    Ok(total)
}

/// Running integral of `f` sampled at each node of `grid`, starting from zero.
pub fn cumulative<F: Fn(f64) -> f64>(f: F, grid: &[f64], tol: Tolerance) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    if let Some(&first) = grid.first() {
        out.push(0.0);
        let mut left = first;
        for &t in &grid[1..] {
            acc += integrate(&f, left, t, tol)?;
            out.push(acc);
            left = t;
        }
    }
    Ok(out)
}

/// Composite trapezoid weights for a uniform grid of `len` nodes with spacing `h`.
pub fn trapezoid_weights(len: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; len];
    if len > 0 {
        w[0] *= 0.5;
        w[len - 1] *= 0.5;
    }
    if len == 1 {
        w[0] = 0.0;
    }
    w
}

/// Uniform grid of `intervals + 1` nodes covering `[a, b]`.
pub fn uniform_grid(a: f64, b: f64, intervals: usize) -> Vec<f64> {
    let h = (b - a) / intervals as f64;
    (0..=intervals)
        .map(|i| if i == intervals { b } else { a + h * i as f64 })
        .collect()
}
