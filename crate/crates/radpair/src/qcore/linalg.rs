//! Small dense helpers on Hermitian matrices.

use nalgebra::DVector;

use super::{CMat, C64};

/// Largest absolute element.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// `(m + m†)/2`.
pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    m.is_square() && max_abs(&(m - m.adjoint())) <= tol
}

/// `[a, b]`.
pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a Hermitian matrix.
pub fn hermitian_eigen(m: &CMat) -> (DVector<f64>, CMat) {
    let eig = hermitize(m).symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = CMat::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_eigenvalue(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    hermitize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `½ Σ |λ_i(a − b)|`.
pub fn trace_distance(a: &CMat, b: &CMat) -> f64 {
    0.5 * hermitize(&(a - b))
        .symmetric_eigenvalues()
        .iter()
        .map(|l| l.abs())
        .sum::<f64>()
}

/// Principal square root of a positive semidefinite matrix; negative
/// rounding dust is clipped to zero.
pub fn sqrtm_psd(m: &CMat) -> CMat {
    let (vals, vecs) = hermitian_eigen(m);
    let n = vals.len();
    let mut scaled = vecs.clone();
    for k in 0..n {
        let s = vals[k].max(0.0).sqrt();
        scaled.column_mut(k).scale_mut(s);
    }
    &scaled * vecs.adjoint()
}

/// Cached eigendecomposition of a Hermitian `H` for evaluating
/// `exp(−iHt)` at many times.
#[derive(Clone, Debug)]
pub struct HermitianExp {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: CMat,
}

impl HermitianExp {
    pub fn new(h: &CMat) -> Self {
        let (eigenvalues, eigenvectors) = hermitian_eigen(h);
        Self {
            eigenvalues,
            eigenvectors,
        }
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `U(t) = exp(−iHt)`.
    pub fn unitary(&self, t: f64) -> CMat {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for k in 0..self.dim() {
            let ph = C64::from_polar(1.0, -self.eigenvalues[k] * t);
            scaled.column_mut(k).iter_mut().for_each(|x| *x *= ph);
        }
        &scaled * v.adjoint()
    }

    /// `U ρ U†` with `U = exp(−iHt)`.
    pub fn evolve(&self, rho: &CMat, t: f64) -> CMat {
        let u = self.unitary(t);
        &u * rho * u.adjoint()
    }

    /// Largest `|λ_i − λ_j|`, the fastest Bohr frequency.
    pub fn bandwidth(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        self.eigenvalues[self.dim() - 1] - self.eigenvalues[0]
    }

    /// Operator in the eigenbasis, `V† m V`.
    pub fn to_eigenbasis(&self, m: &CMat) -> CMat {
        self.eigenvectors.adjoint() * m * &self.eigenvectors
    }

    /// `Tr(q U ρ U†)` evaluated in the eigenbasis with both operators
    /// already transformed by [`Self::to_eigenbasis`]. Costs O(d²).
    pub fn expectation_eigenbasis(&self, q_eig: &CMat, rho_eig: &CMat, t: f64) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                let ph = C64::from_polar(1.0, -(self.eigenvalues[a] - self.eigenvalues[b]) * t);
                s += (q_eig[(b, a)] * rho_eig[(a, b)] * ph).re;
            }
        }
        s
    }
}
