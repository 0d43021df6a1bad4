//! Spin operators, the Zeeman + hyperfine Hamiltonian and unitary
//! propagation between encounters.
//!
//! Units: ħ = 1; field and hyperfine tensors are angular frequencies with
//! `μ_B g/2` absorbed. The Hamiltonian is built in the two-electron product
//! basis `|↑↑⟩, |↑↓⟩, |↓↑⟩, |↓↓⟩` and rotated into `(S, T0, T+, T−)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{
    c, commutator, hamiltonian_superop, max_abs, rk4, CMat, DensityMatrix, HermitianExp, HilbertLayout, SuperOp, C64,
    N_BLOCKS, P_BLOCK,
};

/// `(Sx, Sy, Sz)` for spin `(multiplicity − 1)/2`, basis ordered `m = s, …, −s`.
pub fn spin_matrices(multiplicity: usize) -> Result<[CMat; 3]> {
    if multiplicity < 2 {
        return Err(Error::param(format!("spin multiplicity {multiplicity} < 2")));
    }
    let n = multiplicity;
    let s = (n as f64 - 1.0) / 2.0;
    let mut sp = CMat::zeros(n, n);
    let mut sz = CMat::zeros(n, n);
    for k in 0..n {
        let m = s - k as f64;
        sz[(k, k)] = c(m);
        if k > 0 {
            // ⟨m+1|S+|m⟩
            sp[(k - 1, k)] = c((s * (s + 1.0) - m * (m + 1.0)).sqrt());
        }
    }
    let sm = sp.adjoint();
    let sx = (&sp + &sm) * c(0.5);
    let sy = (&sp - &sm) * C64::new(0.0, -0.5);
    Ok([sx, sy, sz])
}

/// One nucleus: spin magnitude and hyperfine tensor (angular frequency).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nucleus {
    pub spin: f64,
    pub tensor: [[f64; 3]; 3],
}

impl Nucleus {
    pub fn new(spin: f64, tensor: [[f64; 3]; 3]) -> Result<Self> {
        let n = Self { spin, tensor };
        n.multiplicity()?;
        Ok(n)
    }

    /// Isotropic coupling `a·S·I`.
    pub fn isotropic(spin: f64, a: f64) -> Result<Self> {
        Self::new(spin, [[a, 0.0, 0.0], [0.0, a, 0.0], [0.0, 0.0, a]])
    }

    /// `2I + 1`; errors unless `2I` is a positive integer.
    pub fn multiplicity(&self) -> Result<usize> {
        let two_i = 2.0 * self.spin;
        if !(two_i >= 1.0) || (two_i - two_i.round()).abs() > 1e-12 {
            return Err(Error::param(format!(
                "nuclear spin {} is not a positive half-integer",
                self.spin
            )));
        }
        Ok(two_i.round() as usize + 1)
    }

    /// True when the tensor is `γ·1` within 1e−14.
    pub fn is_isotropic(&self) -> bool {
        let a = self.tensor[0][0];
        (0..3).all(|i| {
            (0..3).all(|j| {
                let want = if i == j { a } else { 0.0 };
                (self.tensor[i][j] - want).abs() <= 1e-14
            })
        })
    }
}

/// Field, g multipliers and nuclei of both radicals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinSystemSpec {
    pub field_b: [f64; 3],
    pub g_factors: [f64; 2],
    /// Nuclei coupled to radical 1 and radical 2.
    pub nuclei: [Vec<Nucleus>; 2],
}

impl SpinSystemSpec {
    /// No nuclei, unit g multipliers.
    pub fn zeeman(field_b: [f64; 3]) -> Self {
        Self {
            field_b,
            g_factors: [1.0, 1.0],
            nuclei: [Vec::new(), Vec::new()],
        }
    }

    pub fn with_nucleus(mut self, radical: usize, nucleus: Nucleus) -> Self {
        self.nuclei[radical].push(nucleus);
        self
    }

    /// Layout with radical-1 nuclei first.
    pub fn layout(&self) -> Result<HilbertLayout> {
        let dims = self.nuclei[0]
            .iter()
            .chain(self.nuclei[1].iter())
            .map(Nucleus::multiplicity)
            .collect::<Result<Vec<_>>>()?;
        HilbertLayout::new(dims)
    }
}

/// Columns are `|S⟩, |T0⟩, |T+⟩, |T−⟩` in the product basis
/// `|↑↑⟩, |↑↓⟩, |↓↑⟩, |↓↓⟩`.
pub fn singlet_triplet_basis() -> CMat {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut v = CMat::zeros(4, 4);
    v[(1, 0)] = c(h);
    v[(2, 0)] = c(-h);
    v[(1, 1)] = c(h);
    v[(2, 1)] = c(h);
    v[(0, 2)] = c(1.0);
    v[(3, 3)] = c(1.0);
    v
}

/// Spin operators of electron `m` (0 or 1) on the 4-dim product space.
fn electron_spin(m: usize) -> [CMat; 3] {
    let s = spin_matrices(2).expect("spin-1/2");
    let id = CMat::identity(2, 2);
    s.map(|op| if m == 0 { op.kronecker(&id) } else { id.kronecker(&op) })
}

/// Spin operators of nucleus `k` on the full nuclear space.
fn nuclear_spin(dims: &[usize], k: usize) -> [CMat; 3] {
    let s = spin_matrices(dims[k]).expect("validated multiplicity");
    s.map(|op| {
        let mut acc = CMat::identity(1, 1);
        for (i, &d) in dims.iter().enumerate() {
            let f = if i == k { op.clone() } else { CMat::identity(d, d) };
            acc = acc.kronecker(&f);
        }
        acc
    })
}

/// Generator of the evolution between encounters.
#[derive(Clone, Debug)]
pub struct BetweenGenerator {
    pub hamiltonian: CMat,
    pub dissipator: Option<SuperOp>,
}

impl BetweenGenerator {
    pub fn new(hamiltonian: CMat) -> Self {
        Self {
            hamiltonian,
            dissipator: None,
        }
    }

    /// Zero Hamiltonian on `dim`.
    pub fn trivial(dim: usize) -> Self {
        Self::new(CMat::zeros(dim, dim))
    }

    pub fn with_dissipator(mut self, d: SuperOp) -> Self {
        self.dissipator = Some(d);
        self
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    /// `−i[H, ·] + 𝓛_diss`.
    pub fn superop(&self) -> SuperOp {
        let h = hamiltonian_superop(&self.hamiltonian);
        match &self.dissipator {
            Some(d) => &h + d,
            None => h,
        }
    }

    /// Spectral norm of `H`.
    pub fn h_norm(&self) -> f64 {
        self.hamiltonian.singular_values().iter().copied().fold(0.0, f64::max)
    }

    /// Reusable propagator.
    pub fn propagator(&self) -> Propagator {
        match &self.dissipator {
            None => Propagator::Unitary(HermitianExp::new(&self.hamiltonian)),
            Some(_) => {
                let l = self.superop().to_dense();
                let step = crate::qcore::default_step(l.norm(), 0.0);
                Propagator::General { generator: l, step }
            }
        }
    }
}

/// Cached evolution between encounters.
#[derive(Clone, Debug)]
pub enum Propagator {
    Unitary(HermitianExp),
    General { generator: SuperOp, step: f64 },
}

impl Propagator {
    pub fn evolve(&self, rho: &CMat, dt: f64) -> CMat {
        match self {
            Propagator::Unitary(e) => e.evolve(rho, dt),
            Propagator::General { generator, step } => rk4(|r| generator.apply(r), rho, dt, *step),
        }
    }
}

/// `H = Σ_m g_m Ŝ_m·(B + Σ_k γ_mk Î_mk)`, zero on the product block.
pub fn build_hamiltonian(spec: &SpinSystemSpec, layout: &HilbertLayout) -> Result<BetweenGenerator> {
    let expected = spec.layout()?;
    if &expected != layout {
        return Err(Error::param(format!(
            "layout nuclear dims {:?} do not match spin system {:?}",
            layout.nuclear_dims(),
            expected.nuclear_dims()
        )));
    }
    let dims = layout.nuclear_dims().to_vec();
    let nn = layout.nuclear_dim();
    let id_n = CMat::identity(nn, nn);
    let mut h_prod = CMat::zeros(4 * nn, 4 * nn);
    let mut offset = 0;
    for m in 0..2 {
        let s = electron_spin(m);
        let g = spec.g_factors[m];
        // Local field on electron m, one operator per Cartesian component.
        let mut field: [CMat; 3] = std::array::from_fn(|a| &id_n * c(spec.field_b[a]));
        for (k, nuc) in spec.nuclei[m].iter().enumerate() {
            let i_op = nuclear_spin(&dims, offset + k);
            for a in 0..3 {
                for b in 0..3 {
                    if nuc.tensor[a][b] != 0.0 {
                        field[a] += &i_op[b] * c(nuc.tensor[a][b]);
                    }
                }
            }
        }
        offset += spec.nuclei[m].len();
        for a in 0..3 {
            h_prod += s[a].kronecker(&field[a]) * c(g);
        }
    }
    let w = singlet_triplet_basis().kronecker(&id_n);
    let h_st = w.adjoint() * h_prod * &w;
    let d = layout.total_dim();
    let mut h = CMat::zeros(d, d);
    h.view_mut((0, 0), (4 * nn, 4 * nn)).copy_from(&h_st);
    let h = crate::qcore::hermitize(&h);
    Ok(BetweenGenerator::new(h))
}

/// `ρ(0) = |S⟩⟨S| ⊗ 1_nuc / d_nuc`.
pub fn initial_state(layout: &HilbertLayout) -> DensityMatrix {
    let d = layout.total_dim();
    let n = layout.nuclear_dim();
    let mut rho = CMat::zeros(d, d);
    for k in 0..n {
        let i = layout.index(0, k);
        rho[(i, i)] = c(1.0 / n as f64);
    }
    DensityMatrix::from_matrix_unchecked(rho)
}

/// `U ρ U†` with `U = exp(−iH dt)`; with a dissipator, RK4 on the full generator.
pub fn propagate_between(rho: &CMat, gen: &BetweenGenerator, dt: f64) -> Result<CMat> {
    if dt < 0.0 {
        return Err(Error::param(format!("negative time step {dt}")));
    }
    Ok(gen.propagator().evolve(rho, dt))
}

/// Reactant block traced over nuclei, in the `(S, T0, T+, T−)` basis.
pub fn electron_block(rho: &CMat, layout: &HilbertLayout) -> CMat {
    let n = layout.nuclear_dim();
    let mut out = CMat::zeros(4, 4);
    for a in 0..4 {
        for b in 0..4 {
            let mut s = C64::new(0.0, 0.0);
            for k in 0..n {
                s += rho[(layout.index(a, k), layout.index(b, k))];
            }
            out[(a, b)] = s;
        }
    }
    out
}

/// Converts a 4×4 operator from the singlet–triplet basis to the product basis.
pub fn to_product_basis(m_st: &CMat) -> CMat {
    let v = singlet_triplet_basis();
    &v * m_st * v.adjoint()
}

/// Commutator norm `max|[H, Q]|`, a diagnostic for conserved projectors.
pub fn commutes_with(h: &CMat, q: &CMat) -> f64 {
    max_abs(&commutator(h, q))
}

/// Row/column indices of the product block; used by tests and diagnostics.
pub fn product_block_indices(layout: &HilbertLayout) -> std::ops::Range<usize> {
    let n = layout.nuclear_dim();
    P_BLOCK * n..N_BLOCKS * n
}
