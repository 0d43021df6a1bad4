//! Shared helpers for the integration suites.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use radpair::qcore::{CMat, SubspaceOps};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Random density matrix from a Ginibre matrix `G G† / Tr`.
pub fn random_state(dim: usize, seed: u64) -> CMat {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    });
    let m = &g * g.adjoint();
    let tr = m.trace();
    m / tr
}

/// Random state with no reactant–product coherence.
pub fn random_inicon_state(ops: &SubspaceOps, seed: u64) -> CMat {
    let rho = random_state(ops.dim(), seed);
    let m = &ops.q_r * &rho * &ops.q_r + &ops.q_p * &rho * &ops.q_p;
    let tr = m.trace();
    m / tr
}

/// Random state supported on the reactant subspace.
pub fn random_reactant_state(ops: &SubspaceOps, seed: u64) -> CMat {
    let rho = random_state(ops.dim(), seed);
    let m = &ops.q_r * &rho * &ops.q_r;
    let tr = m.trace();
    m / tr
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

/// Matrix exponential `exp(−i t H)` by scaling and squaring of a Taylor
/// series, independent of any eigendecomposition.
pub fn expm_taylor(h: &CMat, t: f64) -> CMat {
    let n = h.nrows();
    let a = h * Complex64::new(0.0, -t);
    let norm = a.iter().map(|z| z.norm()).sum::<f64>().max(1e-300);
    let s = (norm.log2().ceil().max(0.0) as i32) + 1;
    let a = a / c(2f64.powi(s));
    let mut term = CMat::identity(n, n);
    let mut sum = CMat::identity(n, n);
    for k in 1..30 {
        term = &term * &a / c(k as f64);
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Applies a list of Kraus operators.
pub fn kraus_apply(ks: &[CMat], rho: &CMat) -> CMat {
    ks.iter().fold(CMat::zeros(rho.nrows(), rho.ncols()), |acc, k| {
        acc + k * rho * k.adjoint()
    })
}

/// Classical fourth-order Runge–Kutta with `n` equal steps, written
/// independently of the library integrator.
pub fn rk4_oracle(f: &dyn Fn(&CMat) -> CMat, y0: &CMat, t: f64, n: usize) -> CMat {
    let h = t / n as f64;
    let mut y = y0.clone();
    for _ in 0..n {
        let k1 = f(&y);
        let k2 = f(&(&y + &k1 * c(0.5 * h)));
        let k3 = f(&(&y + &k2 * c(0.5 * h)));
        let k4 = f(&(&y + &k3 * c(h)));
        y += (k1 + (k2 + k3) * c(2.0) + k4) * c(h / 6.0);
    }
    y
}

/// `exp(A)` for a general square matrix by scaling and squaring.
pub fn expm_general(a: &CMat) -> CMat {
    let n = a.nrows();
    let norm = a.iter().map(|z| z.norm()).sum::<f64>().max(1e-300);
    let s = (norm.log2().ceil().max(0.0) as i32) + 1;
    let a = a / c(2f64.powi(s));
    let mut term = CMat::identity(n, n);
    let mut sum = CMat::identity(n, n);
    for k in 1..30 {
        term = &term * &a / c(k as f64);
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Trace distance `½‖a − b‖₁` from the eigenvalues of the Hermitian difference.
pub fn trace_dist(a: &CMat, b: &CMat) -> f64 {
    let d = a - b;
    let h = (&d + d.adjoint()) * c(0.5);
    h.symmetric_eigenvalues().iter().map(|x| x.abs()).sum::<f64>() * 0.5
}

/// Basis vector `|block, n⟩` as a ket.
pub fn ket(dim: usize, index: usize) -> nalgebra::DVector<Complex64> {
    let mut v = nalgebra::DVector::zeros(dim);
    v[index] = c(1.0);
    v
}

/// `|ψ⟩⟨ψ|`.
pub fn proj(v: &nalgebra::DVector<Complex64>) -> CMat {
    v * v.adjoint()
}

/// Random amplitudes in `[lo, hi)`.
pub fn uniform(rng: &mut ChaCha20Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}
