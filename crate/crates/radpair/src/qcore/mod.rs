//! Hilbert-space layout, density matrices, subspace projectors, jump
//! operators and superoperators.
//!
//! The chemical system lives in `(S, T0, T+, T−, P) ⊗ nuclear`. The
//! electron/product block index varies slowest and the nuclear index varies
//! fastest, so the basis index of `(block, n)` is `block * d_nuc + n`. Every
//! CSV column and every diagnostic depends on this ordering. It is frozen.

mod linalg;
mod ode;
mod superop;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::ops::Deref;

use crate::error::{Error, Result};

pub use linalg::{
    commutator, hermitian_eigen, hermitize, is_hermitian, max_abs, min_eigenvalue, sqrtm_psd, trace_distance,
    HermitianExp,
};
pub use ode::{default_step, rk4, rk4_grid, rk4_with_error, NonlinearFlow};
pub use superop::SuperOp;

/// Complex scalar.
pub type C64 = Complex64;
/// Dense complex matrix used for operators and states.
pub type CMat = DMatrix<C64>;

/// Tolerance used for Hermiticity and trace checks.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Tolerance on the smallest eigenvalue for positivity checks.
pub const PSD_TOL: f64 = -1e-10;
/// Threshold for reactant–product coherence.
pub const INICON_TOL: f64 = 1e-10;
/// Smallest trace accepted by [`normalize`].
pub const ZERO_TRACE: f64 = 1e-14;

pub(crate) fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Reaction channel (electron-spin level of the radical pair).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    S,
    T0,
    Tp,
    Tm,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::S, Channel::T0, Channel::Tp, Channel::Tm];
    pub const TRIPLETS: [Channel; 3] = [Channel::T0, Channel::Tp, Channel::Tm];

    /// Block index in the fixed ordering.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_triplet(self) -> bool {
        self != Channel::S
    }

    pub fn label(self) -> &'static str {
        match self {
            Channel::S => "S",
            Channel::T0 => "T0",
            Channel::Tp => "T+",
            Channel::Tm => "T-",
        }
    }
}

/// Index of the product block.
pub const P_BLOCK: usize = 4;
/// Number of electron/product blocks.
pub const N_BLOCKS: usize = 5;

/// Dimensions of the chemical-system Hilbert space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HilbertLayout {
    nuclear_dims: Vec<usize>,
}

impl HilbertLayout {
    /// `nuclear_dims` lists `2I+1` for every nucleus, radical 1 first.
    pub fn new(nuclear_dims: Vec<usize>) -> Result<Self> {
        if let Some(&d) = nuclear_dims.iter().find(|&&d| d < 1) {
            return Err(Error::param(format!("nuclear dimension {d} < 1")));
        }
        Ok(Self { nuclear_dims })
    }

    /// Layout without nuclear spins (dimension 5).
    pub fn bare() -> Self {
        Self {
            nuclear_dims: Vec::new(),
        }
    }

    pub fn nuclear_dims(&self) -> &[usize] {
        &self.nuclear_dims
    }

    /// Product of all nuclear multiplicities.
    pub fn nuclear_dim(&self) -> usize {
        self.nuclear_dims.iter().product()
    }

    pub fn total_dim(&self) -> usize {
        N_BLOCKS * self.nuclear_dim()
    }

    /// Basis index of electron/product block `block` and nuclear index `n`.
    pub fn index(&self, block: usize, n: usize) -> usize {
        block * self.nuclear_dim() + n
    }
}

/// Projectors and jump operators of the chemical system.
#[derive(Clone, Debug)]
pub struct SubspaceOps {
    pub layout: HilbertLayout,
    pub q_s: CMat,
    pub q_t0: CMat,
    pub q_tp: CMat,
    pub q_tm: CMat,
    pub q_t: CMat,
    pub q_r: CMat,
    pub q_p: CMat,
    /// `L_j = |P⟩⟨j| ⊗ 1_nuc`, indexed by [`Channel::index`].
    pub l: [CMat; 4],
}

impl SubspaceOps {
    pub fn dim(&self) -> usize {
        self.layout.total_dim()
    }

    pub fn q(&self, ch: Channel) -> &CMat {
        match ch {
            Channel::S => &self.q_s,
            Channel::T0 => &self.q_t0,
            Channel::Tp => &self.q_tp,
            Channel::Tm => &self.q_tm,
        }
    }

    pub fn jump(&self, ch: Channel) -> &CMat {
        &self.l[ch.index()]
    }

    /// Projector onto block `b` (0..5, product last).
    pub fn block(&self, b: usize) -> &CMat {
        match b {
            0 => &self.q_s,
            1 => &self.q_t0,
            2 => &self.q_tp,
            3 => &self.q_tm,
            _ => &self.q_p,
        }
    }

    /// `ρ_P = Q_P ρ Q_P`.
    pub fn product_part(&self, rho: &CMat) -> CMat {
        &self.q_p * rho * &self.q_p
    }

    /// `ρ_R = Q_R ρ Q_R`.
    pub fn reactant_part(&self, rho: &CMat) -> CMat {
        &self.q_r * rho * &self.q_r
    }

    /// `Σ_{i∈set} L_i ρ L_i†`: the population of `set` moved to P with the
    /// nuclear register carried along.
    pub fn recombine(&self, rho: &CMat, set: &[Channel]) -> CMat {
        let d = self.dim();
        let mut out = CMat::zeros(d, d);
        for &ch in set {
            let l = self.jump(ch);
            out += l * rho * l.adjoint();
        }
        out
    }
}

fn block_projector(layout: &HilbertLayout, block: usize) -> CMat {
    let d = layout.total_dim();
    let n = layout.nuclear_dim();
    let mut q = CMat::zeros(d, d);
    for k in 0..n {
        let i = layout.index(block, k);
        q[(i, i)] = c(1.0);
    }
    q
}

/// Builds the subspace projectors and jump operators for `layout`.
pub fn build_subspace_ops(layout: &HilbertLayout) -> SubspaceOps {
    let d = layout.total_dim();
    let n = layout.nuclear_dim();
    let q: Vec<CMat> = (0..N_BLOCKS).map(|b| block_projector(layout, b)).collect();
    let q_t = &q[1] + &q[2] + &q[3];
    let q_r = &q[0] + &q_t;
    let l = std::array::from_fn(|j| {
        let mut m = CMat::zeros(d, d);
        for k in 0..n {
            m[(layout.index(P_BLOCK, k), layout.index(j, k))] = c(1.0);
        }
        m
    });
    SubspaceOps {
        layout: layout.clone(),
        q_s: q[0].clone(),
        q_t0: q[1].clone(),
        q_tp: q[2].clone(),
        q_tm: q[3].clone(),
        q_t,
        q_r,
        q_p: q[4].clone(),
        l,
    }
}

/// A density matrix together with its normalization flag.
///
/// Improper states (`normalized == false`) carry a trace in `[0, 1]`, the
/// probability of the conditioning event.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    data: CMat,
    normalized: bool,
}

impl DensityMatrix {
    /// Validates Hermiticity, positivity and the trace bound.
    pub fn new(data: CMat) -> Result<Self> {
        check_state(&data)?;
        let normalized = (data.trace().re - 1.0).abs() <= HERMITIAN_TOL;
        Ok(Self { data, normalized })
    }

    /// Wraps without checks; the flag is derived from the trace.
    pub fn from_matrix_unchecked(data: CMat) -> Self {
        let normalized = (data.trace().re - 1.0).abs() <= HERMITIAN_TOL;
        Self { data, normalized }
    }

    /// `|ψ⟩⟨ψ|` for a (not necessarily normalized) vector.
    pub fn pure(psi: &nalgebra::DVector<C64>) -> Result<Self> {
        Self::new(psi * psi.adjoint())
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn trace(&self) -> f64 {
        self.data.trace().re
    }

    pub fn purity(&self) -> f64 {
        (&self.data * &self.data).trace().re
    }

    pub fn matrix(&self) -> &CMat {
        &self.data
    }

    pub fn into_matrix(self) -> CMat {
        self.data
    }
}

impl Deref for DensityMatrix {
    type Target = CMat;
    fn deref(&self) -> &CMat {
        &self.data
    }
}

/// Checks Hermiticity (1e−12), positivity (−1e−10) and `0 ≤ Tr ρ ≤ 1`.
pub fn check_state(rho: &CMat) -> Result<()> {
    if !rho.is_square() {
        return Err(Error::InvalidState("matrix is not square".into()));
    }
    let herm = max_abs(&(rho - rho.adjoint()));
    if herm > HERMITIAN_TOL {
        return Err(Error::InvalidState(format!("not Hermitian ({herm:e})")));
    }
    let tr = rho.trace().re;
    if !(-HERMITIAN_TOL..=1.0 + HERMITIAN_TOL).contains(&tr) {
        return Err(Error::InvalidState(format!("trace {tr} outside [0, 1]")));
    }
    let lmin = min_eigenvalue(&hermitize(rho));
    if lmin < PSD_TOL {
        return Err(Error::InvalidState(format!("negative eigenvalue {lmin:e}")));
    }
    Ok(())
}

/// Returns `(ρ_N / Tr ρ_N, Tr ρ_N)`.
pub fn normalize(rho_n: &CMat) -> Result<(DensityMatrix, f64)> {
    let p = rho_n.trace().re;
    if p <= ZERO_TRACE {
        return Err(Error::ZeroTrace(p));
    }
    let data = rho_n.unscale(p);
    Ok((DensityMatrix { data, normalized: true }, p))
}

/// `Re Tr(ρ q)`.
pub fn expectation(rho: &CMat, q: &CMat) -> Result<f64> {
    if rho.shape() != q.shape() {
        return Err(Error::Dimension {
            expected: rho.nrows(),
            got: q.nrows(),
        });
    }
    Ok(trace_product(rho, q).re)
}

/// `Tr(a b)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> C64 {
    let n = a.nrows();
    let mut s = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

/// Largest element of `|Q_R ρ Q_P|`.
pub fn inicon_violation(rho: &CMat, ops: &SubspaceOps) -> f64 {
    max_abs(&(&ops.q_r * rho * &ops.q_p))
}

/// True when the state has no reactant–product coherence.
pub fn validate_inicon(rho: &CMat, ops: &SubspaceOps) -> bool {
    inicon_violation(rho, ops) < INICON_TOL
}

pub(crate) fn require_inicon(rho: &CMat, ops: &SubspaceOps) -> Result<()> {
    let v = inicon_violation(rho, ops);
    if v >= INICON_TOL {
        return Err(Error::InitialCondition(v));
    }
    Ok(())
}

pub(crate) fn require_dim(m: &CMat, dim: usize) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: m.nrows(),
        });
    }
    Ok(())
}

/// `𝓛(c)ρ = cρc† − ½{c†c, ρ}` as a factor-pair superoperator.
pub fn lindblad_dissipator(cop: &CMat) -> Result<SuperOp> {
    if !cop.is_square() {
        return Err(Error::Dimension {
            expected: cop.nrows(),
            got: cop.ncols(),
        });
    }
    let d = cop.nrows();
    let id = CMat::identity(d, d);
    let cdc = cop.adjoint() * cop * c(0.5);
    Ok(SuperOp::from_pairs(
        d,
        vec![(cop.clone(), cop.adjoint()), (-&cdc, id.clone()), (id, -cdc)],
    ))
}

/// `ρ ↦ −i[H, ρ]`.
pub fn hamiltonian_superop(h: &CMat) -> SuperOp {
    let d = h.nrows();
    let id = CMat::identity(d, d);
    let mi = C64::new(0.0, -1.0);
    SuperOp::from_pairs(d, vec![(h * mi, id.clone()), (id, h * (-mi))])
}
