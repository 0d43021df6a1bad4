//! Reaction generators in the full space and in the reactant subspace,
//! their closed-form solutions, non-Hermitian pure-state propagation and the
//! Kominis comparator.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{
    c, default_step, hamiltonian_superop, lindblad_dissipator, max_abs, require_dim, require_inicon, rk4, CMat,
    Channel, NonlinearFlow, SubspaceOps, SuperOp, C64,
};

/// Which symmetry constraints the rates (or couplings) obey.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryMode {
    /// Independent rates for S, T0, T+, T−.
    General,
    /// Equal rates across the three triplet levels.
    TripletSymmetric,
    /// Triplet-symmetric and no dephasing among the triplet levels.
    TripletSymmetricNoTDephasing,
}

/// Decay rates `r_j` and dephasing rates `d_j`, indexed by [`Channel::index`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReactionRates {
    pub r: [f64; 4],
    pub d: [f64; 4],
    pub mode: SymmetryMode,
}

/// Coefficients derived from [`ReactionRates`].
///
/// `r_mean`, `d_mean`, `eta` and `eta_j` use the T0 rates as "the" triplet
/// rates and are meaningful in the triplet-symmetric modes.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivedCoeffs {
    /// `η_jk = (r_j + r_k + d_j + d_k)/2`.
    pub eta_jk: [[f64; 4]; 4],
    /// `r = (r_S + r_T)/2`.
    pub r_mean: f64,
    /// `d = (d_S + d_T)/2`.
    pub d_mean: f64,
    /// `η = r + d`.
    pub eta: f64,
    /// `γ_j = r_j + d_j`.
    pub gamma: [f64; 4],
    /// `p_j = d_j/γ_j` (0 when `γ_j = 0`).
    pub p: [f64; 4],
    /// `η_j = r_j/η` (0 when `η = 0`).
    pub eta_j: [f64; 4],
}

fn check_rates(v: &[f64]) -> Result<()> {
    if let Some(x) = v.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
        return Err(Error::param(format!("negative or non-finite rate {x}")));
    }
    Ok(())
}

impl ReactionRates {
    pub fn general(r: [f64; 4], d: [f64; 4]) -> Result<Self> {
        let s = Self {
            r,
            d,
            mode: SymmetryMode::General,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn triplet_symmetric(r_s: f64, r_t: f64, d_s: f64, d_t: f64) -> Result<Self> {
        let s = Self {
            r: [r_s, r_t, r_t, r_t],
            d: [d_s, d_t, d_t, d_t],
            mode: SymmetryMode::TripletSymmetric,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn no_t_dephasing(r_s: f64, r_t: f64, d_s: f64) -> Result<Self> {
        let s = Self {
            r: [r_s, r_t, r_t, r_t],
            d: [d_s, 0.0, 0.0, 0.0],
            mode: SymmetryMode::TripletSymmetricNoTDephasing,
        };
        s.validate()?;
        Ok(s)
    }

    /// Pure decay (Haberkorn): `d_j = 0`.
    pub fn haberkorn(r_s: f64, r_t: f64) -> Result<Self> {
        Self::no_t_dephasing(r_s, r_t, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        check_rates(&self.r)?;
        check_rates(&self.d)?;
        if self.mode != SymmetryMode::General {
            let eq = |v: &[f64; 4]| v[1] == v[2] && v[2] == v[3];
            if !eq(&self.r) || !eq(&self.d) {
                return Err(Error::param("triplet-symmetric rates must agree across T0, T+, T−"));
            }
        }
        if self.mode == SymmetryMode::TripletSymmetricNoTDephasing && self.d[1] != 0.0 {
            return Err(Error::param("no-triplet-dephasing mode requires d_T = 0"));
        }
        Ok(())
    }

    pub fn r_of(&self, ch: Channel) -> f64 {
        self.r[ch.index()]
    }

    pub fn d_of(&self, ch: Channel) -> f64 {
        self.d[ch.index()]
    }

    pub fn max_rate(&self) -> f64 {
        self.r.iter().chain(self.d.iter()).copied().fold(0.0, f64::max)
    }

    pub fn derived(&self) -> DerivedCoeffs {
        let eta_jk =
            std::array::from_fn(|j| std::array::from_fn(|k| 0.5 * (self.r[j] + self.r[k] + self.d[j] + self.d[k])));
        let r_mean = 0.5 * (self.r[0] + self.r[1]);
        let d_mean = 0.5 * (self.d[0] + self.d[1]);
        let eta = r_mean + d_mean;
        let gamma = std::array::from_fn(|j| self.r[j] + self.d[j]);
        let p = std::array::from_fn(|j| if gamma[j] > 0.0 { self.d[j] / gamma[j] } else { 0.0 });
        let eta_j = std::array::from_fn(|j| if eta > 0.0 { self.r[j] / eta } else { 0.0 });
        DerivedCoeffs {
            eta_jk,
            r_mean,
            d_mean,
            eta,
            gamma,
            p,
            eta_j,
        }
    }

    /// Collapsed-parameter view for the triplet-symmetric modes.
    pub fn genme(&self) -> Option<GenmeRates> {
        (self.mode == SymmetryMode::TripletSymmetricNoTDephasing).then(|| GenmeRates {
            r_s: self.r[0],
            r_t: self.r[1],
            d_s: self.d[0],
            d_t: self.d[1],
        })
    }
}

/// `Q_j ρ Q_k`.
fn qjk(ops: &SubspaceOps, a: Channel, rho: &CMat, b: Channel) -> CMat {
    ops.q(a) * rho * ops.q(b)
}

/// `𝓠_coh = Σ_{T_i} 𝓠_Ti − 𝓠_T`, which removes the coherences among triplet levels.
pub fn q_coh(ops: &SubspaceOps) -> SuperOp {
    let mut pairs: Vec<(CMat, CMat)> = Channel::TRIPLETS
        .iter()
        .map(|&t| (ops.q(t).clone(), ops.q(t).clone()))
        .collect();
    pairs.push((-&ops.q_t, ops.q_t.clone()));
    SuperOp::from_pairs(ops.dim(), pairs)
}

/// `ρ ↦ Σ_{i∈set} L_i ρ L_i†`, i.e. `⟨Q_set⟩ Q_P` with the nuclear register kept.
pub fn recombination_map(ops: &SubspaceOps, set: &[Channel]) -> SuperOp {
    SuperOp::from_pairs(
        ops.dim(),
        set.iter()
            .map(|&j| (ops.jump(j).clone(), ops.jump(j).adjoint()))
            .collect(),
    )
}

/// `ρ ↦ −½{Q, ρ}`.
fn half_anticommutator(q: &CMat) -> SuperOp {
    let d = q.nrows();
    let id = CMat::identity(d, d);
    let h = q * c(-0.5);
    SuperOp::from_pairs(d, vec![(h.clone(), id.clone()), (id, h)])
}

/// `Σ_j [r_j 𝓛(L_j) + d_j 𝓛(Q_j)]` over all four levels.
pub fn generator_full_per_level(rates: &ReactionRates, ops: &SubspaceOps) -> Result<SuperOp> {
    rates.validate()?;
    let mut g = SuperOp::zero(ops.dim());
    for ch in Channel::ALL {
        let (r, d) = (rates.r_of(ch), rates.d_of(ch));
        if r != 0.0 {
            g = g + r * lindblad_dissipator(ops.jump(ch))?;
        }
        if d != 0.0 {
            g = g + d * lindblad_dissipator(ops.q(ch))?;
        }
    }
    Ok(g)
}

/// Full-space reaction generator.
///
/// * general: `Σ_j [r_j 𝓛(L_j) + d_j 𝓛(Q_j)]`;
/// * triplet-symmetric: the collapsed form
///   `Σ_{S,T} [r_j(⟨Q_j⟩Q_P − ½{Q_j,·}) + d_j 𝓛(Q_j)] + d_T 𝓠_coh`;
/// * without triplet dephasing: the simplified equation (`d_T = 0`).
///
/// All three agree with [`generator_full_per_level`].
pub fn generator_full(rates: &ReactionRates, ops: &SubspaceOps) -> Result<SuperOp> {
    rates.validate()?;
    match rates.mode {
        SymmetryMode::General => generator_full_per_level(rates, ops),
        SymmetryMode::TripletSymmetric => {
            let g = GenmeRates {
                r_s: rates.r[0],
                r_t: rates.r[1],
                d_s: rates.d[0],
                d_t: rates.d[1],
            };
            let mut out = g.generator(ops)?;
            if g.d_t != 0.0 {
                out = out + g.d_t * q_coh(ops);
            }
            Ok(out)
        }
        SymmetryMode::TripletSymmetricNoTDephasing => rates.genme().unwrap().generator(ops),
    }
}

/// Exact state at time `t` under [`generator_full`]; requires an
/// initial state without reactant–product coherence.
pub fn closed_form_full(rho0: &CMat, rates: &ReactionRates, ops: &SubspaceOps, t: f64) -> Result<CMat> {
    rates.validate()?;
    require_dim(rho0, ops.dim())?;
    require_inicon(rho0, ops)?;
    match rates.mode {
        SymmetryMode::General => Ok(gensol_general(rho0, rates, ops, t)),
        SymmetryMode::TripletSymmetric => Ok(gensol_symmetric(rho0, rates, ops, t)),
        SymmetryMode::TripletSymmetricNoTDephasing => rates.genme().unwrap().closed_form(rho0, ops, t),
    }
}

fn gensol_general(rho0: &CMat, rates: &ReactionRates, ops: &SubspaceOps, t: f64) -> CMat {
    let dc = rates.derived();
    let mut out = ops.product_part(rho0);
    for a in Channel::ALL {
        for b in Channel::ALL {
            if a != b {
                out += qjk(ops, a, rho0, b) * c((-dc.eta_jk[a.index()][b.index()] * t).exp());
            }
        }
        let e = (-rates.r_of(a) * t).exp();
        out += qjk(ops, a, rho0, a) * c(e);
        out += ops.recombine(rho0, &[a]) * c(1.0 - e);
    }
    out
}

fn gensol_symmetric(rho0: &CMat, rates: &ReactionRates, ops: &SubspaceOps, t: f64) -> CMat {
    let dc = rates.derived();
    let (r_t, d_t) = (rates.r[1], rates.d[1]);
    let mut out = ops.product_part(rho0) + ops.reactant_part(rho0) * c((-dc.eta * t).exp());
    out += collapsed_terms(rho0, rates.r[0], r_t, dc.eta, ops, t);
    out += q_coh(ops).apply(rho0) * c((-r_t * t).exp() - (-(r_t + d_t) * t).exp());
    out
}

/// `Σ_{S,T} [(e^{−r_j t} − e^{−ηt}) 𝓠_j ρ0 + (1 − e^{−r_j t}) ⟨Q_j⟩₀ Q_P]`.
fn collapsed_terms(rho0: &CMat, r_s: f64, r_t: f64, eta: f64, ops: &SubspaceOps, t: f64) -> CMat {
    let e_eta = (-eta * t).exp();
    let mut out = CMat::zeros(ops.dim(), ops.dim());
    for (q, r, set) in [
        (&ops.q_s, r_s, &[Channel::S][..]),
        (&ops.q_t, r_t, &Channel::TRIPLETS[..]),
    ] {
        let e = (-r * t).exp();
        out += q * rho0 * q * c(e - e_eta);
        out += ops.recombine(rho0, set) * c(1.0 - e);
    }
    out
}

/// Trace-reducing generator on the reactant block:
/// `Σ_j [−(r_j/2){Q_j,·} + d_j 𝓛(Q_j)]` (per level, collapsed, or with
/// `d_T 𝓠_coh` according to the mode).
pub fn generator_r_subspace(rates: &ReactionRates, ops: &SubspaceOps) -> Result<SuperOp> {
    rates.validate()?;
    match rates.mode {
        SymmetryMode::General => {
            let mut g = SuperOp::zero(ops.dim());
            for ch in Channel::ALL {
                let (r, d) = (rates.r_of(ch), rates.d_of(ch));
                if r != 0.0 {
                    g = g + r * half_anticommutator(ops.q(ch));
                }
                if d != 0.0 {
                    g = g + d * lindblad_dissipator(ops.q(ch))?;
                }
            }
            Ok(g)
        }
        SymmetryMode::TripletSymmetric => {
            let g = GenmeRates {
                r_s: rates.r[0],
                r_t: rates.r[1],
                d_s: rates.d[0],
                d_t: rates.d[1],
            };
            let mut out = g.generator_r(ops)?;
            if g.d_t != 0.0 {
                out = out + g.d_t * q_coh(ops);
            }
            Ok(out)
        }
        SymmetryMode::TripletSymmetricNoTDephasing => rates.genme().unwrap().generator_r(ops),
    }
}

/// Exact reactant-block state under [`generator_r_subspace`].
pub fn closed_form_r(rho0: &CMat, rates: &ReactionRates, ops: &SubspaceOps, t: f64) -> Result<CMat> {
    rates.validate()?;
    require_dim(rho0, ops.dim())?;
    let rho_r = ops.reactant_part(rho0);
    match rates.mode {
        SymmetryMode::General => {
            let dc = rates.derived();
            let mut out = CMat::zeros(ops.dim(), ops.dim());
            for a in Channel::ALL {
                for b in Channel::ALL {
                    let rate = if a == b {
                        rates.r_of(a)
                    } else {
                        dc.eta_jk[a.index()][b.index()]
                    };
                    out += qjk(ops, a, &rho_r, b) * c((-rate * t).exp());
                }
            }
            Ok(out)
        }
        SymmetryMode::TripletSymmetric => {
            let full = gensol_symmetric(&rho_r, rates, ops, t);
            Ok(ops.reactant_part(&full))
        }
        SymmetryMode::TripletSymmetricNoTDephasing => Ok(rates.genme().unwrap().closed_form_r(&rho_r, ops, t)),
    }
}

/// Collapsed singlet/triplet rates of the simplified equation
/// `ρ̇ = Σ_{S,T} [r_j(⟨Q_j⟩Q_P − ½{Q_j,ρ}) + d_j 𝓛(Q_j)ρ]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenmeRates {
    pub r_s: f64,
    pub r_t: f64,
    pub d_s: f64,
    pub d_t: f64,
}

impl GenmeRates {
    pub fn new(r_s: f64, r_t: f64, d_s: f64, d_t: f64) -> Result<Self> {
        check_rates(&[r_s, r_t, d_s, d_t])?;
        Ok(Self { r_s, r_t, d_s, d_t })
    }

    /// `(r, d, η)` with `r = (r_S + r_T)/2`, `d = (d_S + d_T)/2`, `η = r + d`.
    pub fn coeffs(&self) -> (f64, f64, f64) {
        let r = 0.5 * (self.r_s + self.r_t);
        let d = 0.5 * (self.d_s + self.d_t);
        (r, d, r + d)
    }

    pub fn max_rate(&self) -> f64 {
        [self.r_s, self.r_t, self.d_s, self.d_t].into_iter().fold(0.0, f64::max)
    }

    fn terms<'a>(&self, ops: &'a SubspaceOps) -> [(&'a CMat, f64, f64, Vec<Channel>); 2] {
        [
            (&ops.q_s, self.r_s, self.d_s, vec![Channel::S]),
            (&ops.q_t, self.r_t, self.d_t, Channel::TRIPLETS.to_vec()),
        ]
    }

    pub fn generator(&self, ops: &SubspaceOps) -> Result<SuperOp> {
        let mut g = SuperOp::zero(ops.dim());
        for (q, r, d, set) in self.terms(ops) {
            if r != 0.0 {
                g = g + r * (&recombination_map(ops, &set) + &half_anticommutator(q));
            }
            if d != 0.0 {
                g = g + d * lindblad_dissipator(q)?;
            }
        }
        Ok(g)
    }

    /// Reactant-block projection `Σ_{S,T} [−(r_j/2){Q_j,·} + d_j 𝓛(Q_j)]`.
    pub fn generator_r(&self, ops: &SubspaceOps) -> Result<SuperOp> {
        let mut g = SuperOp::zero(ops.dim());
        for (q, r, d, _) in self.terms(ops) {
            if r != 0.0 {
                g = g + r * half_anticommutator(q);
            }
            if d != 0.0 {
                g = g + d * lindblad_dissipator(q)?;
            }
        }
        Ok(g)
    }

    /// The same generator written as `Σ γ_j (p_j 𝓠_j − ½{Q_j,·})`.
    pub fn generator_r_gamma(&self, ops: &SubspaceOps) -> SuperOp {
        let mut g = SuperOp::zero(ops.dim());
        for (q, r, d, _) in self.terms(ops) {
            let gamma = r + d;
            if gamma == 0.0 {
                continue;
            }
            let p = d / gamma;
            g = g + gamma * (&(p * SuperOp::project(q)) + &half_anticommutator(q));
        }
        g
    }

    /// Compact form `η[(1−η_S)𝓠_S + (1−η_T)𝓠_T − 1]`, valid on reactant states.
    pub fn generator_r_compact(&self, ops: &SubspaceOps) -> SuperOp {
        let (_, _, eta) = self.coeffs();
        if eta == 0.0 {
            return SuperOp::zero(ops.dim());
        }
        let es = self.r_s / eta;
        let et = self.r_t / eta;
        let id = SuperOp::identity(ops.dim());
        eta * (&(&((1.0 - es) * SuperOp::project(&ops.q_s)) + &((1.0 - et) * SuperOp::project(&ops.q_t))) - &id)
    }

    /// Full-space solution for an initial state without reactant–product coherence.
    pub fn closed_form(&self, rho0: &CMat, ops: &SubspaceOps, t: f64) -> Result<CMat> {
        require_inicon(rho0, ops)?;
        let (_, _, eta) = self.coeffs();
        let mut out = ops.product_part(rho0) + ops.reactant_part(rho0) * c((-eta * t).exp());
        out += collapsed_terms(rho0, self.r_s, self.r_t, eta, ops, t);
        Ok(out)
    }

    /// Equal decay rates `r_S = r_T = r`:
    /// `e^{−rt}[ρ0P + e^{−dt}ρ0R + (1−e^{−dt})Σ𝓠_jρ0] + (1−e^{−rt})·(recombined ρ0R)`.
    pub fn closed_form_equal_rates(&self, rho0: &CMat, ops: &SubspaceOps, t: f64) -> Result<CMat> {
        if self.r_s != self.r_t {
            return Err(Error::param("equal-rate solution needs r_S = r_T"));
        }
        require_inicon(rho0, ops)?;
        let r = self.r_s;
        let (_, d, _) = self.coeffs();
        let er = (-r * t).exp();
        let ed = (-d * t).exp();
        let deph = &ops.q_s * rho0 * &ops.q_s + &ops.q_t * rho0 * &ops.q_t;
        let mut out = (ops.product_part(rho0) + ops.reactant_part(rho0) * c(ed) + deph * c(1.0 - ed)) * c(er);
        // Everything already in P stays; the reactant population moves to P.
        out += ops.product_part(rho0) * c(1.0 - er);
        out += ops.recombine(rho0, &Channel::ALL) * c(1.0 - er);
        Ok(out)
    }

    /// Reactant-block solution
    /// `e^{−ηt}ρ0R + Σ_{S,T} [e^{−(1−p_j)γ_j t} − e^{−ηt}] Q_j ρ0R Q_j`.
    pub fn closed_form_r(&self, rho0: &CMat, ops: &SubspaceOps, t: f64) -> CMat {
        let rho_r = ops.reactant_part(rho0);
        let (_, _, eta) = self.coeffs();
        let e_eta = (-eta * t).exp();
        let mut out = &rho_r * c(e_eta);
        for (q, r, d, _) in self.terms(ops) {
            let gamma = r + d;
            let p = if gamma > 0.0 { d / gamma } else { 0.0 };
            out += q * &rho_r * q * c((-(1.0 - p) * gamma * t).exp() - e_eta);
        }
        out
    }
}

/// `H_eff = H − (i/2) Σ_j r_j Q_j`.
pub fn effective_hamiltonian(rates: &ReactionRates, h: &CMat, ops: &SubspaceOps) -> CMat {
    let mut heff = h.clone();
    for ch in Channel::ALL {
        heff -= ops.q(ch) * C64::new(0.0, 0.5 * rates.r_of(ch));
    }
    heff
}

/// Propagates a reactant pure state with `H_eff`; returns `(|Ψ(t)⟩, ‖Ψ(t)‖²)`.
/// The squared norm is the survival probability (no jump up to `t`).
pub fn nonhermitian_propagate(
    psi0: &DVector<C64>,
    rates: &ReactionRates,
    h: &CMat,
    ops: &SubspaceOps,
    t: f64,
) -> Result<(DVector<C64>, f64)> {
    rates.validate()?;
    if rates.d.iter().any(|&d| d != 0.0) {
        return Err(Error::param(
            "non-Hermitian propagation keeps states pure only for d_j = 0",
        ));
    }
    if psi0.len() != ops.dim() {
        return Err(Error::Dimension {
            expected: ops.dim(),
            got: psi0.len(),
        });
    }
    let heff = effective_hamiltonian(rates, h, ops);
    let u = (heff * C64::new(0.0, -t)).exp();
    let psi = u * psi0;
    let n2 = psi.norm_squared();
    Ok((psi, n2))
}

/// Result of evaluating the Kominis comparator on one state.
#[derive(Clone, Debug)]
pub struct KominisEval {
    pub value: CMat,
    pub p_coh: f64,
    /// Set when `p_coh` was 0/0 and defined as zero.
    pub p_coh_undefined: bool,
}

/// Nonlinear reaction operator with state-dependent visibility `p_coh`.
/// Rates are `(k_S, k_T)`.
#[derive(Clone, Debug)]
pub struct KominisGenerator {
    pub k: [f64; 2],
    ops: SubspaceOps,
}

/// Relative size below which `Tr(Q_jρ)` counts as zero in `p_coh`.
const PCOH_EPS: f64 = 1e-14;

impl KominisGenerator {
    pub fn new(k_s: f64, k_t: f64, ops: &SubspaceOps) -> Result<Self> {
        check_rates(&[k_s, k_t])?;
        Ok(Self {
            k: [k_s, k_t],
            ops: ops.clone(),
        })
    }

    fn qs(&self) -> [&CMat; 2] {
        [&self.ops.q_s, &self.ops.q_t]
    }

    /// `p_coh = Tr[(Q_Sρ)(Q_Tρ)] / (Tr(Q_Sρ) Tr(Q_Tρ))`, with the 0/0 flag.
    pub fn p_coh(&self, rho_r: &CMat) -> (f64, bool) {
        let a = &self.ops.q_s * rho_r;
        let b = &self.ops.q_t * rho_r;
        let den = a.trace().re * b.trace().re;
        let scale = rho_r.trace().re.abs().max(PCOH_EPS);
        if den.abs() <= PCOH_EPS * scale * scale {
            return (0.0, true);
        }
        (crate::qcore::trace_product(&a, &b).re / den, false)
    }

    /// `𝓛_dep(k) + (1 − p_coh)𝓛_inc + p_coh 𝓛_coh` applied to `ρ_R`.
    pub fn apply(&self, rho_r: &CMat) -> Result<KominisEval> {
        let tr = rho_r.trace().re;
        if tr <= crate::qcore::ZERO_TRACE {
            return Err(Error::ZeroTrace(tr));
        }
        let (p, undefined) = self.p_coh(rho_r);
        let d = rho_r.nrows();
        let mut dep = CMat::zeros(d, d);
        let mut inc = CMat::zeros(d, d);
        let mut coh = CMat::zeros(d, d);
        for (q, k) in self.qs().into_iter().zip(self.k) {
            let qrq = q * rho_r * q;
            dep += (&qrq - (q * rho_r + rho_r * q) * c(0.5)) * c(k);
            inc -= qrq * c(k);
            coh -= rho_r * c(k * crate::qcore::trace_product(q, rho_r).re / tr);
        }
        Ok(KominisEval {
            value: dep + inc * c(1.0 - p) + coh * c(p),
            p_coh: p,
            p_coh_undefined: undefined,
        })
    }

    /// Integrates `ρ̇_R = −i[H,ρ_R] + 𝓛_Kom ρ_R` on the grid; stops when the
    /// trace drops below 1e−8 and reports the truncation time.
    pub fn evolve(&self, rho0_r: &CMat, h: &CMat, grid: &[f64]) -> Result<KominisRun> {
        let step = default_step(self.k[0].max(self.k[1]), crate::qcore::max_abs(h) * h.nrows() as f64);
        let hs = hamiltonian_superop(h);
        let mut states = Vec::with_capacity(grid.len());
        let mut rho = rho0_r.clone();
        let mut t_prev = 0.0;
        let mut flagged = false;
        for &t in grid {
            let dt = t - t_prev;
            let n = (dt / step).ceil().max(1.0) as usize;
            let hstep = dt / n as f64;
            for _ in 0..n {
                if rho.trace().re < 1e-8 {
                    return Ok(KominisRun {
                        states,
                        truncated_at: Some(t_prev),
                        p_coh_flagged: flagged,
                    });
                }
                let f = |r: &CMat| -> CMat {
                    let ev = self
                        .apply(r)
                        .map(|e| e.value)
                        .unwrap_or_else(|_| CMat::zeros(r.nrows(), r.nrows()));
                    hs.apply(r) + ev
                };
                flagged |= self.p_coh(&rho).1;
                rho = rk4(f, &rho, hstep, hstep);
            }
            t_prev = t;
            states.push(rho.clone());
        }
        Ok(KominisRun {
            states,
            truncated_at: None,
            p_coh_flagged: flagged,
        })
    }
}

/// Output of [`KominisGenerator::evolve`].
#[derive(Clone, Debug)]
pub struct KominisRun {
    pub states: Vec<CMat>,
    pub truncated_at: Option<f64>,
    pub p_coh_flagged: bool,
}

/// Trace-preserving nonlinear reactant equation
/// `ρ̇ = −i[H,ρ] + (𝓛 − ⟨𝓛⟩)ρ` with `⟨𝓛⟩ = −Σ r_j⟨Q_j⟩`.
pub fn conditional_r_equation(rates: &ReactionRates, h: &CMat, ops: &SubspaceOps) -> Result<NonlinearFlow> {
    if rates.mode != SymmetryMode::TripletSymmetricNoTDephasing {
        return Err(Error::param(
            "conditional reactant equation needs the no-triplet-dephasing mode",
        ));
    }
    require_dim(h, ops.dim())?;
    let l = &hamiltonian_superop(h) + &generator_r_subspace(rates, ops)?;
    let hn = max_abs(h) * h.nrows() as f64;
    Ok(NonlinearFlow::new(l, default_step(rates.max_rate(), hn)))
}
