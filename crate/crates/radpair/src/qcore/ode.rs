//! Fixed-step RK4 on density matrices and the trace-normalized
//! (nonlinear) flow of a linear generator.

use crate::error::{Error, Result};

use super::linalg::{hermitize, max_abs};
use super::{normalize, CMat, SuperOp, C64};

/// Step size `min(0.01/max_rate, 0.01/‖H‖)`; rates or norms that are zero
/// impose no constraint. Falls back to `0.01` when both vanish.
pub fn default_step(max_rate: f64, h_norm: f64) -> f64 {
    let mut h = f64::INFINITY;
    if max_rate > 0.0 {
        h = h.min(0.01 / max_rate);
    }
    if h_norm > 0.0 {
        h = h.min(0.01 / h_norm);
    }
    if h.is_finite() {
        h
    } else {
        0.01
    }
}

fn rk4_step<F: Fn(&CMat) -> CMat>(f: &F, y: &CMat, h: f64) -> CMat {
    let half = C64::new(0.5 * h, 0.0);
    let k1 = f(y);
    let k2 = f(&(y + &k1 * half));
    let k3 = f(&(y + &k2 * half));
    let k4 = f(&(y + &k3 * C64::new(h, 0.0)));
    y + (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(h / 6.0, 0.0)
}

/// Integrates `ẏ = f(y)` from 0 to `t` with steps no larger than `h_max`,
/// hermitizing after every step.
pub fn rk4<F: Fn(&CMat) -> CMat>(f: F, y0: &CMat, t: f64, h_max: f64) -> CMat {
    advance(&f, y0.clone(), t, h_max)
}

fn advance<F: Fn(&CMat) -> CMat>(f: &F, mut y: CMat, t: f64, h_max: f64) -> CMat {
    if t <= 0.0 {
        return y;
    }
    let n = (t / h_max).ceil().max(1.0) as usize;
    let h = t / n as f64;
    for _ in 0..n {
        y = hermitize(&rk4_step(f, &y, h));
    }
    y
}

/// Values at each (non-decreasing) grid time, starting from `y0` at t = 0.
pub fn rk4_grid<F: Fn(&CMat) -> CMat>(f: F, y0: &CMat, grid: &[f64], h_max: f64) -> Vec<CMat> {
    let mut out = Vec::with_capacity(grid.len());
    let mut y = y0.clone();
    let mut t_prev = 0.0;
    for &t in grid {
        y = advance(&f, y, t - t_prev, h_max);
        t_prev = t;
        out.push(y.clone());
    }
    out
}

/// RK4 with a half-step Richardson estimate: returns the fine solution and
/// `max|y_h/2 − y_h| / 15`.
pub fn rk4_with_error<F: Fn(&CMat) -> CMat>(f: F, y0: &CMat, t: f64, h_max: f64) -> (CMat, f64) {
    let coarse = advance(&f, y0.clone(), t, h_max);
    let fine = advance(&f, y0.clone(), t, 0.5 * h_max);
    let err = max_abs(&(&fine - &coarse)) / 15.0;
    (fine, err)
}

/// The nonlinear equation `ρ̇ = (𝓛 − ⟨𝓛⟩)ρ`, `⟨𝓛⟩ = Tr(𝓛ρ)`, whose solution is
/// the normalized solution of the linear equation `ρ̇_N = 𝓛ρ_N`.
#[derive(Clone, Debug)]
pub struct NonlinearFlow {
    linear: SuperOp,
    step: f64,
}

impl NonlinearFlow {
    /// `step` is the RK4 step used by [`Self::solve_nonlinear`].
    pub fn new(linear: SuperOp, step: f64) -> Self {
        Self {
            linear: linear.to_dense(),
            step,
        }
    }

    pub fn linear(&self) -> &SuperOp {
        &self.linear
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// `⟨𝓛⟩ = Re Tr(𝓛ρ)` for a normalized state; equals `d/dt ln p`.
    pub fn mean_generator(&self, rho: &CMat) -> f64 {
        self.linear.apply(rho).trace().re
    }

    /// Right-hand side of the nonlinear equation.
    pub fn rhs(&self, rho: &CMat) -> CMat {
        let l = self.linear.apply(rho);
        let m = l.trace().re;
        l - rho * C64::new(m, 0.0)
    }

    /// Linear solution `exp(𝓛t)ρ0` by dense matrix exponentials of the grid
    /// increments; the propagator is reused while the increment is unchanged
    /// to within 1e−13 relative.
    pub fn solve_linear(&self, rho0: &CMat, grid: &[f64]) -> Vec<CMat> {
        let d = self.linear.dim();
        let m = self.linear.dense_matrix();
        let mut v = nalgebra::DVector::from_column_slice(rho0.as_slice());
        let mut cached: Option<(f64, CMat)> = None;
        let mut t_prev = 0.0;
        let mut out = Vec::with_capacity(grid.len());
        for &t in grid {
            let dt = t - t_prev;
            t_prev = t;
            if dt != 0.0 {
                let reuse = cached.as_ref().is_some_and(|(c, _)| (c - dt).abs() <= 1e-13 * dt.abs());
                if !reuse {
                    cached = Some((dt, (&m * C64::new(dt, 0.0)).exp()));
                }
                v = &cached.as_ref().expect("propagator cached").1 * v;
            }
            out.push(CMat::from_column_slice(d, d, v.as_slice()));
        }
        out
    }

    /// `normalize(exp(𝓛t)ρ0)` on the grid, with the survival probabilities.
    pub fn solve_normalized_linear(&self, rho0: &CMat, grid: &[f64]) -> Result<Vec<(CMat, f64)>> {
        self.solve_linear(rho0, grid)
            .into_iter()
            .map(|r| normalize(&r).map(|(n, p)| (n.into_matrix(), p)))
            .collect()
    }

    /// RK4 integration of the nonlinear equation.
    pub fn solve_nonlinear(&self, rho0: &CMat, grid: &[f64]) -> Result<Vec<CMat>> {
        let tr = rho0.trace().re;
        if (tr - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!(
                "nonlinear flow needs a normalized state (trace {tr})"
            )));
        }
        Ok(rk4_grid(|r| self.rhs(r), rho0, grid, self.step))
    }
}
