//! Linear maps on density matrices.
//!
//! Two interconvertible representations:
//! * factor pairs `ρ ↦ Σ_i A_i ρ B_i`;
//! * a dense `d² × d²` matrix acting on the column-stacked `vec(ρ)`, using
//!   `vec(AρB) = (Bᵀ ⊗ A) vec(ρ)`.

use std::ops::{Add, Mul, Neg, Sub};

use super::linalg::{hermitize, min_eigenvalue};
use super::{CMat, C64};

#[derive(Clone, Debug)]
enum Repr {
    Pairs(Vec<(CMat, CMat)>),
    Dense(CMat),
}

/// A linear map on `d × d` matrices.
#[derive(Clone, Debug)]
pub struct SuperOp {
    dim: usize,
    repr: Repr,
}

impl SuperOp {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            repr: Repr::Pairs(Vec::new()),
        }
    }

    pub fn identity(dim: usize) -> Self {
        let id = CMat::identity(dim, dim);
        Self::sandwich(&id, &id)
    }

    /// `ρ ↦ a ρ b`.
    pub fn sandwich(a: &CMat, b: &CMat) -> Self {
        Self {
            dim: a.nrows(),
            repr: Repr::Pairs(vec![(a.clone(), b.clone())]),
        }
    }

    /// `ρ ↦ q ρ q` for a projector (or any operator) `q`.
    pub fn project(q: &CMat) -> Self {
        Self::sandwich(q, q)
    }

    /// `ρ ↦ c ρ c†`.
    pub fn conjugation(c: &CMat) -> Self {
        Self::sandwich(c, &c.adjoint())
    }

    pub fn from_pairs(dim: usize, pairs: Vec<(CMat, CMat)>) -> Self {
        Self {
            dim,
            repr: Repr::Pairs(pairs),
        }
    }

    /// Wraps a `d² × d²` matrix acting on column-stacked states.
    pub fn from_dense(dim: usize, m: CMat) -> Self {
        assert_eq!(m.nrows(), dim * dim);
        assert_eq!(m.ncols(), dim * dim);
        Self {
            dim,
            repr: Repr::Dense(m),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.repr, Repr::Dense(_))
    }

    /// Number of factor pairs, or `None` for the dense form.
    pub fn n_pairs(&self) -> Option<usize> {
        match &self.repr {
            Repr::Pairs(p) => Some(p.len()),
            Repr::Dense(_) => None,
        }
    }

    /// Applies the map. Panics on a dimension mismatch.
    pub fn apply(&self, rho: &CMat) -> CMat {
        assert_eq!(rho.nrows(), self.dim, "superoperator dimension mismatch");
        match &self.repr {
            Repr::Pairs(pairs) => {
                let mut out = CMat::zeros(self.dim, self.dim);
                for (a, b) in pairs {
                    out += a * rho * b;
                }
                out
            }
            Repr::Dense(m) => {
                // Column-wise accumulation over contiguous storage; faster
                // than the generic matrix–vector product for complex entries.
                let n = self.dim * self.dim;
                let mut w = vec![C64::new(0.0, 0.0); n];
                for (col, x) in m.as_slice().chunks_exact(n).zip(rho.as_slice()) {
                    if *x == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for (wi, mi) in w.iter_mut().zip(col) {
                        *wi += mi * x;
                    }
                }
                CMat::from_vec(self.dim, self.dim, w)
            }
        }
    }

    /// Applies the map after checking dimensions.
    pub fn try_apply(&self, rho: &CMat) -> crate::Result<CMat> {
        super::require_dim(rho, self.dim)?;
        Ok(self.apply(rho))
    }

    /// `Re Tr(𝓐ρ)`.
    pub fn expectation(&self, rho: &CMat) -> f64 {
        match &self.repr {
            Repr::Pairs(pairs) => pairs.iter().map(|(a, b)| super::trace_product(&(b * a), rho).re).sum(),
            Repr::Dense(_) => self.apply(rho).trace().re,
        }
    }

    /// The `d² × d²` matrix on `vec(ρ)`.
    pub fn dense_matrix(&self) -> CMat {
        match &self.repr {
            Repr::Dense(m) => m.clone(),
            Repr::Pairs(pairs) => {
                let n = self.dim * self.dim;
                let mut m = CMat::zeros(n, n);
                for (a, b) in pairs {
                    m += b.transpose().kronecker(a);
                }
                m
            }
        }
    }

    pub fn to_dense(&self) -> Self {
        Self::from_dense(self.dim, self.dense_matrix())
    }

    /// The representation that is cheaper to apply: `n` factor pairs cost
    /// about `2n·d³` operations against `d⁴` for the dense form.
    pub fn compacted(&self) -> Self {
        match &self.repr {
            Repr::Pairs(p) if 2 * p.len() > self.dim => self.to_dense(),
            _ => self.clone(),
        }
    }

    /// Factor-pair form. A dense map is expanded over matrix units,
    /// `Σ S_{(ij),(kl)} E_ik ρ E_lj`, skipping zero entries.
    pub fn to_pairs(&self) -> Self {
        match &self.repr {
            Repr::Pairs(_) => self.clone(),
            Repr::Dense(m) => {
                let d = self.dim;
                let mut pairs = Vec::new();
                for col in 0..d * d {
                    let (k, l) = (col % d, col / d);
                    for row in 0..d * d {
                        let s = m[(row, col)];
                        if s == C64::new(0.0, 0.0) {
                            continue;
                        }
                        let (i, j) = (row % d, row / d);
                        let mut a = CMat::zeros(d, d);
                        a[(i, k)] = s;
                        let mut b = CMat::zeros(d, d);
                        b[(l, j)] = C64::new(1.0, 0.0);
                        pairs.push((a, b));
                    }
                }
                Self::from_pairs(d, pairs)
            }
        }
    }

    /// `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &SuperOp) -> SuperOp {
        assert_eq!(self.dim, other.dim);
        match (&self.repr, &other.repr) {
            (Repr::Pairs(p), Repr::Pairs(q)) => {
                let mut out = Vec::with_capacity(p.len() * q.len());
                for (a, b) in p {
                    for (c, d) in q {
                        out.push((a * c, d * b));
                    }
                }
                Self::from_pairs(self.dim, out)
            }
            _ => Self::from_dense(self.dim, self.dense_matrix() * other.dense_matrix()),
        }
    }

    /// Dual map `X ↦ Σ A_i† X B_i†`, so that `Tr[X 𝓐ρ] = Tr[𝓐†(X) ρ]`.
    pub fn adjoint(&self) -> SuperOp {
        match &self.repr {
            Repr::Pairs(p) => Self::from_pairs(self.dim, p.iter().map(|(a, b)| (a.adjoint(), b.adjoint())).collect()),
            Repr::Dense(m) => Self::from_dense(self.dim, m.adjoint()),
        }
    }

    /// Choi matrix `Σ_ij E_ij ⊗ 𝓐(E_ij)`.
    pub fn choi(&self) -> CMat {
        let d = self.dim;
        let m = self.dense_matrix();
        let mut choi = CMat::zeros(d * d, d * d);
        for i in 0..d {
            for j in 0..d {
                let col = i + j * d;
                for a in 0..d {
                    for b in 0..d {
                        choi[(i * d + a, j * d + b)] = m[(a + b * d, col)];
                    }
                }
            }
        }
        choi
    }

    /// Smallest eigenvalue of the (Hermitian part of the) Choi matrix.
    pub fn choi_min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&hermitize(&self.choi()))
    }

    /// Spectral norm of the dense representation.
    pub fn norm(&self) -> f64 {
        let m = self.dense_matrix();
        m.singular_values().iter().copied().fold(0.0, f64::max)
    }

    /// Largest `|𝓐†(1) − 1|` element; zero for trace-preserving maps.
    pub fn trace_preservation_defect(&self) -> f64 {
        let id = CMat::identity(self.dim, self.dim);
        super::max_abs(&(self.adjoint().apply(&id) - id))
    }

    pub fn scale(&self, s: C64) -> SuperOp {
        match &self.repr {
            Repr::Pairs(p) => Self::from_pairs(self.dim, p.iter().map(|(a, b)| (a * s, b.clone())).collect()),
            Repr::Dense(m) => Self::from_dense(self.dim, m * s),
        }
    }
}

impl Add for &SuperOp {
    type Output = SuperOp;
    fn add(self, rhs: &SuperOp) -> SuperOp {
        assert_eq!(self.dim, rhs.dim, "superoperator dimension mismatch");
        match (&self.repr, &rhs.repr) {
            (Repr::Pairs(p), Repr::Pairs(q)) => {
                let mut v = p.clone();
                v.extend(q.iter().cloned());
                SuperOp::from_pairs(self.dim, v)
            }
            _ => SuperOp::from_dense(self.dim, self.dense_matrix() + rhs.dense_matrix()),
        }
    }
}

impl Add for SuperOp {
    type Output = SuperOp;
    fn add(self, rhs: SuperOp) -> SuperOp {
        &self + &rhs
    }
}

impl Sub for &SuperOp {
    type Output = SuperOp;
    fn sub(self, rhs: &SuperOp) -> SuperOp {
        self + &(-rhs)
    }
}

impl Sub for SuperOp {
    type Output = SuperOp;
    fn sub(self, rhs: SuperOp) -> SuperOp {
        &self - &rhs
    }
}

impl Neg for &SuperOp {
    type Output = SuperOp;
    fn neg(self) -> SuperOp {
        self.scale(C64::new(-1.0, 0.0))
    }
}

impl Mul<&SuperOp> for f64 {
    type Output = SuperOp;
    fn mul(self, rhs: &SuperOp) -> SuperOp {
        rhs.scale(C64::new(self, 0.0))
    }
}

impl Mul<SuperOp> for f64 {
    type Output = SuperOp;
    fn mul(self, rhs: SuperOp) -> SuperOp {
        rhs.scale(C64::new(self, 0.0))
    }
}
