//! Encounters as generalized measurements.
//!
//! A model environment with states `|0⟩, |π_j⟩, |δ_j⟩` couples to the radical
//! pair through `H_I = Σ_j (π_j L_j ⊗ |π_j⟩⟨0| + δ_j Q_j ⊗ |δ_j⟩⟨0| + h.c.)`.
//! An encounter applies `U = exp(−iκH_I)` and a projective measurement of
//! the environment. The induced system maps are, with
//! `φ_j = κ√(|π_j|² + |δ_j|²)`:
//!
//! * click `j`: `A_j = r̃_j L_j·L_j†`, where `r̃_j = κ²|π_j|² sinc²φ_j`;
//! * no click: `A_0 = K_0·K_0† + Σ_j d̃_j 𝓠_j`, where `K_0 = Q_P + Σ_j cos φ_j Q_j`
//!   and `d̃_j = sin²φ_j − r̃_j`.
//!
//! On states without reactant–product coherence, `A_0` equals
//! `1 − Σ_j r̃_j 𝓠_j − Σ_{j≠k} (1 − c_jk) 𝓠_jk`, with `c_jk = cos φ_j cos φ_k`.
//! The block form above is the one that is completely positive on every state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{
    build_subspace_ops, c, CMat, Channel, HermitianExp, HilbertLayout, SubspaceOps, SuperOp, C64, N_BLOCKS, PSD_TOL,
    P_BLOCK,
};
use crate::reactops::{q_coh, recombination_map, ReactionRates, SymmetryMode};

/// Coupling of one encounter type to the model environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncounterCoupling {
    pub kappa: f64,
    pub pi: [C64; 4],
    pub delta: [C64; 4],
    pub mode: SymmetryMode,
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

impl EncounterCoupling {
    pub fn new(kappa: f64, pi: [C64; 4], delta: [C64; 4], mode: SymmetryMode) -> Result<Self> {
        let s = Self { kappa, pi, delta, mode };
        s.validate()?;
        Ok(s)
    }

    /// Real amplitudes, triplet-symmetric: `(π_S, π_T, δ_S, δ_T)`.
    pub fn symmetric(kappa: f64, pi_s: f64, pi_t: f64, delta_s: f64, delta_t: f64) -> Result<Self> {
        let mode = if delta_t == 0.0 {
            SymmetryMode::TripletSymmetricNoTDephasing
        } else {
            SymmetryMode::TripletSymmetric
        };
        Self::new(
            kappa,
            [pi_s, pi_t, pi_t, pi_t].map(c),
            [delta_s, delta_t, delta_t, delta_t].map(c),
            mode,
        )
    }

    /// Maximal-strength encounter: `δ = 0`, `φ_j = π/2`.
    pub fn von_neumann() -> Self {
        Self::symmetric(std::f64::consts::FRAC_PI_2, 1.0, 1.0, 0.0, 0.0).expect("valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !self.kappa.is_finite() || self.kappa < 0.0 {
            return Err(Error::param(format!("kappa {} must be finite and ≥ 0", self.kappa)));
        }
        if self.mode != SymmetryMode::General {
            let tol = 1e-12;
            let eq = |v: &[C64; 4]| {
                let a = v[1].norm();
                (v[2].norm() - a).abs() <= tol && (v[3].norm() - a).abs() <= tol
            };
            if !eq(&self.pi) || !eq(&self.delta) {
                return Err(Error::param("triplet-symmetric coupling needs equal |π_T| and |δ_T|"));
            }
        }
        if self.mode == SymmetryMode::TripletSymmetricNoTDephasing && self.delta[1].norm() != 0.0 {
            return Err(Error::param("no-triplet-dephasing coupling needs δ_T = 0"));
        }
        Ok(())
    }

    /// `c_j = |π_j|² + |δ_j|²`.
    pub fn c_j(&self, ch: Channel) -> f64 {
        self.pi[ch.index()].norm_sqr() + self.delta[ch.index()].norm_sqr()
    }

    /// `φ_j = κ√c_j`.
    pub fn phi(&self, ch: Channel) -> f64 {
        self.kappa * self.c_j(ch).sqrt()
    }
}

/// Coefficients of the encounter maps.
#[derive(Clone, Debug, PartialEq)]
pub struct EncounterMapParams {
    /// `φ_j`; absent for averaged encounters.
    pub phi: Option<[f64; 4]>,
    pub r_tilde: [f64; 4],
    pub d_tilde: [f64; 4],
    /// Block coherence factors over `(S, T0, T+, T−, P)`: `c_jk = cos φ_j cos φ_k`
    /// for reactant levels, `cos φ_j` against P, 1 for P–P.
    pub c: [[f64; N_BLOCKS]; N_BLOCKS],
    /// `η̃ = 1 − cos φ_S cos φ_T` (T0 stands for T).
    pub eta_tilde: f64,
    /// `η̃_j = r̃_j/η̃` (0 when `η̃ = 0`).
    pub eta_tilde_j: [f64; 4],
    pub mode: SymmetryMode,
}

impl EncounterMapParams {
    /// `c_jk` for two reactant levels.
    pub fn c_jk(&self, a: Channel, b: Channel) -> f64 {
        self.c[a.index()][b.index()]
    }

    /// Range diagnostics: empty when every documented bound holds.
    pub fn range_violations(&self) -> Vec<String> {
        let tol = 1e-12;
        // η̃ pairs S with T0, so the η̃_j bounds only apply with triplet symmetry.
        let symmetric = self.mode != SymmetryMode::General;
        let mut v = Vec::new();
        for ch in Channel::ALL {
            let j = ch.index();
            if !(-tol..=1.0 + tol).contains(&self.r_tilde[j]) {
                v.push(format!("r̃_{} = {} outside [0,1]", ch.label(), self.r_tilde[j]));
            }
            if self.d_tilde[j] < -tol {
                v.push(format!("d̃_{} = {} negative", ch.label(), self.d_tilde[j]));
            }
            if symmetric && self.eta_tilde > 0.0 && !(-tol..=2.0 + tol).contains(&self.eta_tilde_j[j]) {
                v.push(format!("η̃_{} = {} outside [0,2]", ch.label(), self.eta_tilde_j[j]));
            }
        }
        if !(-tol..=2.0 + tol).contains(&self.eta_tilde) {
            v.push(format!("η̃ = {} outside [0,2]", self.eta_tilde));
        }
        let sum = self.eta_tilde_j[0] + self.eta_tilde_j[1];
        if symmetric && self.eta_tilde > 0.0 && !(-tol..=2.0 + tol).contains(&sum) {
            v.push(format!("η̃_S + η̃_T = {sum} outside [0,2]"));
        }
        v
    }
}

/// Closed-form coefficients of a single encounter type.
pub fn derive_map_params(coupling: &EncounterCoupling) -> EncounterMapParams {
    let k2 = coupling.kappa * coupling.kappa;
    let phi: [f64; 4] = std::array::from_fn(|j| coupling.phi(Channel::ALL[j]));
    let s2: [f64; 4] = std::array::from_fn(|j| sinc(phi[j]).powi(2));
    let r_tilde = std::array::from_fn(|j| k2 * coupling.pi[j].norm_sqr() * s2[j]);
    let d_tilde = std::array::from_fn(|j| k2 * coupling.delta[j].norm_sqr() * s2[j]);
    let mut cosv = [1.0; N_BLOCKS];
    for j in 0..4 {
        cosv[j] = phi[j].cos();
    }
    let cm = std::array::from_fn(|a| std::array::from_fn(|b| cosv[a] * cosv[b]));
    finish_params(Some(phi), r_tilde, d_tilde, cm, coupling.mode)
}

fn finish_params(
    phi: Option<[f64; 4]>,
    r_tilde: [f64; 4],
    d_tilde: [f64; 4],
    c: [[f64; N_BLOCKS]; N_BLOCKS],
    mode: SymmetryMode,
) -> EncounterMapParams {
    let eta_tilde = 1.0 - c[0][1];
    let eta_tilde_j = std::array::from_fn(|j| {
        if eta_tilde.abs() > 1e-300 {
            r_tilde[j] / eta_tilde
        } else {
            0.0
        }
    });
    EncounterMapParams {
        phi,
        r_tilde,
        d_tilde,
        c,
        eta_tilde,
        eta_tilde_j,
        mode,
    }
}

/// Outcome of one encounter as seen by the fluorescence detector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    S,
    /// Triplet click when the detector cannot tell the triplet levels apart.
    T,
    T0,
    Tp,
    Tm,
    /// No click.
    None,
}

impl Outcome {
    pub fn label(self) -> &'static str {
        match self {
            Outcome::S => "S",
            Outcome::T => "T",
            Outcome::T0 => "T0",
            Outcome::Tp => "T+",
            Outcome::Tm => "T-",
            Outcome::None => "none",
        }
    }

    /// Reactant levels that feed this click.
    pub fn channels(self) -> &'static [Channel] {
        match self {
            Outcome::S => &[Channel::S],
            Outcome::T => &Channel::TRIPLETS,
            Outcome::T0 => &[Channel::T0],
            Outcome::Tp => &[Channel::Tp],
            Outcome::Tm => &[Channel::Tm],
            Outcome::None => &[],
        }
    }

    fn from_channel(ch: Channel) -> Self {
        match ch {
            Channel::S => Outcome::S,
            Channel::T0 => Outcome::T0,
            Channel::Tp => Outcome::Tp,
            Channel::Tm => Outcome::Tm,
        }
    }
}

/// Per-channel detection efficiencies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionEfficiencies {
    pub eta: [f64; 4],
}

impl DetectionEfficiencies {
    pub fn per_level(eta: [f64; 4]) -> Result<Self> {
        if let Some(x) = eta.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::param(format!("detection efficiency {x} outside [0,1]")));
        }
        Ok(Self { eta })
    }

    /// Singlet and (common) triplet efficiency.
    pub fn collapsed(eta_s: f64, eta_t: f64) -> Result<Self> {
        Self::per_level([eta_s, eta_t, eta_t, eta_t])
    }

    pub fn perfect() -> Self {
        Self { eta: [1.0; 4] }
    }

    /// Efficiency for a click outcome; errors if the triplet levels differ
    /// for a collapsed triplet click.
    pub fn for_outcome(&self, o: Outcome) -> Result<f64> {
        let chans = o.channels();
        let e = self.eta[chans[0].index()];
        if chans.iter().any(|ch| self.eta[ch.index()] != e) {
            return Err(Error::param("collapsed triplet click needs equal triplet efficiencies"));
        }
        Ok(e)
    }
}

/// Instrument of one encounter: click maps, the no-click map and their sum.
#[derive(Clone, Debug)]
pub struct EncounterMaps {
    pub clicks: Vec<(Outcome, SuperOp)>,
    pub a_0: SuperOp,
    pub a_cpt: SuperOp,
    pub params: EncounterMapParams,
}

impl EncounterMaps {
    pub fn dim(&self) -> usize {
        self.a_0.dim()
    }

    /// `𝓑 = Σ_j A_j`, the click part.
    pub fn click_sum(&self) -> SuperOp {
        self.clicks
            .iter()
            .fold(SuperOp::zero(self.dim()), |acc, (_, a)| &acc + a)
    }

    /// Copies in the representation that is cheapest for repeated application.
    pub fn compacted(&self) -> Self {
        Self {
            clicks: self.clicks.iter().map(|(o, a)| (*o, a.compacted())).collect(),
            a_0: self.a_0.compacted(),
            a_cpt: self.a_cpt.compacted(),
            params: self.params.clone(),
        }
    }

    /// Map of a given outcome.
    pub fn map(&self, o: Outcome) -> Option<&SuperOp> {
        if o == Outcome::None {
            return Some(&self.a_0);
        }
        self.clicks.iter().find(|(x, _)| *x == o).map(|(_, a)| a)
    }

    /// Smallest Choi eigenvalue over all maps of the instrument.
    pub fn min_choi_eigenvalue(&self) -> f64 {
        self.clicks
            .iter()
            .map(|(_, a)| a.choi_min_eigenvalue())
            .chain(std::iter::once(self.a_0.choi_min_eigenvalue()))
            .fold(f64::INFINITY, f64::min)
    }
}

fn click_outcomes(mode: SymmetryMode) -> Vec<Outcome> {
    match mode {
        SymmetryMode::General => Channel::ALL.iter().map(|&c| Outcome::from_channel(c)).collect(),
        _ => vec![Outcome::S, Outcome::T],
    }
}

fn assemble(params: &EncounterMapParams, ops: &SubspaceOps) -> EncounterMaps {
    let d = ops.dim();
    let mut clicks = Vec::new();
    for o in click_outcomes(params.mode) {
        let chans = o.channels();
        let r = params.r_tilde[chans[0].index()];
        clicks.push((o, r * recombination_map(ops, chans)));
    }
    let mut pairs = Vec::new();
    for a in 0..N_BLOCKS {
        for b in 0..N_BLOCKS {
            let cab = params.c[a][b];
            if cab != 0.0 {
                pairs.push((ops.block(a) * c(cab), ops.block(b).clone()));
            }
        }
    }
    for ch in Channel::ALL {
        let dt = params.d_tilde[ch.index()];
        if dt != 0.0 {
            pairs.push((ops.q(ch) * c(dt), ops.q(ch).clone()));
        }
    }
    let a_0 = SuperOp::from_pairs(d, pairs);
    let a_cpt = clicks.iter().fold(a_0.clone(), |acc, (_, a)| &acc + a);
    EncounterMaps {
        clicks,
        a_0,
        a_cpt,
        params: params.clone(),
    }
}

/// Builds the instrument. Complete positivity is verified on the electron
/// block (maps act as the identity on nuclei), and the sum rule is checked.
pub fn build_maps(params: &EncounterMapParams, ops: &SubspaceOps) -> Result<EncounterMaps> {
    if params.mode != SymmetryMode::General {
        let t = &params.r_tilde[1..];
        let dt = &params.d_tilde[1..];
        if t.iter().any(|x| (x - t[0]).abs() > 1e-12) || dt.iter().any(|x| (x - dt[0]).abs() > 1e-12) {
            return Err(Error::param("triplet-symmetric maps need equal triplet coefficients"));
        }
    }
    let bare = build_subspace_ops(&HilbertLayout::bare());
    let probe = assemble(params, &bare);
    let lmin = probe.min_choi_eigenvalue();
    if lmin < PSD_TOL {
        return Err(Error::NotCompletelyPositive(lmin));
    }
    let defect = probe.a_cpt.trace_preservation_defect();
    if defect > 1e-12 {
        return Err(Error::Invariant(format!("A_CPT not trace preserving ({defect:e})")));
    }
    Ok(assemble(params, ops))
}

/// Convenience: coupling → parameters → maps.
pub fn maps_for(coupling: &EncounterCoupling, ops: &SubspaceOps) -> Result<EncounterMaps> {
    coupling.validate()?;
    build_maps(&derive_map_params(coupling), ops)
}

/// `A_j → η_j A_j`, `A_0 → A_0 + Σ_j (1 − η_j) A_j`.
pub fn with_detection(maps: &EncounterMaps, eff: &DetectionEfficiencies) -> Result<EncounterMaps> {
    DetectionEfficiencies::per_level(eff.eta)?;
    let mut clicks = Vec::with_capacity(maps.clicks.len());
    let mut a_0 = maps.a_0.clone();
    for (o, a) in &maps.clicks {
        let e = eff.for_outcome(*o)?;
        clicks.push((*o, e * a));
        if e != 1.0 {
            a_0 = &a_0 + &((1.0 - e) * a);
        }
    }
    let a_cpt = clicks.iter().fold(a_0.clone(), |acc, (_, a)| &acc + a);
    Ok(EncounterMaps {
        clicks,
        a_0,
        a_cpt,
        params: maps.params.clone(),
    })
}

/// S–T–P dephasing operator `𝓠 = 𝓠_P + 𝓠_S + 𝓠_T`.
pub fn stp_dephasing(ops: &SubspaceOps) -> SuperOp {
    SuperOp::from_pairs(
        ops.dim(),
        [&ops.q_p, &ops.q_s, &ops.q_t]
            .into_iter()
            .map(|q| (q.clone(), q.clone()))
            .collect(),
    )
}

/// Triplet-symmetric no-click map written as
/// `(1−η̃) + η̃[𝓠_P + Σ_{S,T}(1−η̃_j)𝓠_j] + d̃_T 𝓠_coh`.
/// Agrees with [`build_maps`] on states without reactant–product coherence.
pub fn a0_triplet_symmetric(params: &EncounterMapParams, ops: &SubspaceOps) -> SuperOp {
    let et = params.eta_tilde;
    let id = SuperOp::identity(ops.dim());
    let inner = SuperOp::from_pairs(
        ops.dim(),
        vec![
            (ops.q_p.clone(), ops.q_p.clone()),
            (&ops.q_s * c(1.0 - params.eta_tilde_j[0]), ops.q_s.clone()),
            (&ops.q_t * c(1.0 - params.eta_tilde_j[1]), ops.q_t.clone()),
        ],
    );
    let mut a0 = &((1.0 - et) * &id) + &(et * &inner);
    if params.d_tilde[1] != 0.0 {
        a0 = &a0 + &(params.d_tilde[1] * q_coh(ops));
    }
    a0
}

/// `A_CPT = (1−η̃) + η̃𝓠 + Σ_{S,T} r̃_j(⟨𝓠_j⟩Q_P − 𝓠_j)` (no triplet dephasing).
pub fn a_cpt_triplet_symmetric(params: &EncounterMapParams, ops: &SubspaceOps) -> SuperOp {
    let et = params.eta_tilde;
    let id = SuperOp::identity(ops.dim());
    let mut m = &((1.0 - et) * &id) + &(et * stp_dephasing(ops));
    for (q, r, set) in [
        (&ops.q_s, params.r_tilde[0], &[Channel::S][..]),
        (&ops.q_t, params.r_tilde[1], &Channel::TRIPLETS[..]),
    ] {
        m = &m + &(r * (&recombination_map(ops, set) - &SuperOp::project(q)));
    }
    m
}

/// Environment slots: `|0⟩`, then `|π_j⟩`, then the `|δ_j⟩` that are present.
fn env_slots(coupling: &EncounterCoupling) -> Vec<Option<(bool, Channel)>> {
    let mut slots = vec![None];
    slots.extend(Channel::ALL.iter().map(|&ch| Some((true, ch))));
    for ch in Channel::ALL {
        let reduced = coupling.mode == SymmetryMode::TripletSymmetricNoTDephasing && ch.is_triplet();
        if !reduced {
            slots.push(Some((false, ch)));
        }
    }
    slots
}

/// Environment dimension: 9, or 6 without triplet dephasing.
pub fn environment_dim(coupling: &EncounterCoupling) -> usize {
    env_slots(coupling).len()
}

fn env_unit(n: usize, i: usize, j: usize) -> CMat {
    let mut m = CMat::zeros(n, n);
    m[(i, j)] = c(1.0);
    m
}

/// System operators `A_e` such that `H_I = Σ_e (A_e ⊗ |e⟩⟨0| + h.c.)`.
fn coupling_ops(coupling: &EncounterCoupling, ops: &SubspaceOps) -> Vec<(usize, CMat)> {
    env_slots(coupling)
        .into_iter()
        .enumerate()
        .filter_map(|(e, s)| {
            s.map(|(is_pi, ch)| {
                let op = if is_pi {
                    ops.jump(ch) * coupling.pi[ch.index()]
                } else {
                    ops.q(ch) * coupling.delta[ch.index()]
                };
                (e, op)
            })
        })
        .collect()
}

/// `H_I` on system ⊗ environment (environment index fastest).
pub fn interaction_hamiltonian(coupling: &EncounterCoupling, ops: &SubspaceOps) -> CMat {
    let ne = environment_dim(coupling);
    let d = ops.dim() * ne;
    let mut h = CMat::zeros(d, d);
    for (e, a) in coupling_ops(coupling, ops) {
        let x = a.kronecker(&env_unit(ne, e, 0));
        h += &x + x.adjoint();
    }
    h
}

/// Applies `F(C)` for `C = Σ_j c_j Q_j` (and `c_P = 0`).
fn func_of_c(coupling: &EncounterCoupling, ops: &SubspaceOps, f: impl Fn(f64) -> f64) -> CMat {
    let mut m = &ops.q_p * c(f(0.0));
    for ch in Channel::ALL {
        m += ops.q(ch) * c(f(coupling.c_j(ch)));
    }
    m
}

/// `U = exp(−iκH_I)` from its closed form:
/// `U|0⟩ = Q_P|0⟩ + Σ_j [cos φ_j Q_j|0⟩ − iκ sinc φ_j (π_j L_j|π_j⟩ + δ_j Q_j|δ_j⟩)]`,
/// extended to the excited environment sector through
/// `f(XX†) = f(0) + X[(f(C) − f(0))/C]X†` with `X = Σ_e A_e ⊗ |e⟩⟨0|`.
pub fn encounter_unitary(coupling: &EncounterCoupling, ops: &SubspaceOps) -> CMat {
    let k = coupling.kappa;
    let ne = environment_dim(coupling);
    let d = ops.dim();
    let ccos = func_of_c(coupling, ops, |x| (k * x.sqrt()).cos());
    let csinc = func_of_c(coupling, ops, |x| sinc(k * x.sqrt()));
    let cm = func_of_c(coupling, ops, |x| {
        if x * k * k < 1e-8 {
            -0.5 * k * k + k.powi(4) * x / 24.0
        } else {
            ((k * x.sqrt()).cos() - 1.0) / x
        }
    });
    let mut u = ccos.kronecker(&env_unit(ne, 0, 0));
    let id_sys = CMat::identity(d, d);
    for e in 1..ne {
        u += id_sys.kronecker(&env_unit(ne, e, e));
    }
    let a = coupling_ops(coupling, ops);
    let mik = C64::new(0.0, -k);
    for (e, ae) in &a {
        u += (ae * &csinc * mik).kronecker(&env_unit(ne, *e, 0));
        u += (&csinc * ae.adjoint() * mik).kronecker(&env_unit(ne, 0, *e));
        for (f, af) in &a {
            u += (ae * &cm * af.adjoint()).kronecker(&env_unit(ne, *e, *f));
        }
    }
    u
}

/// Reference `exp(−iκH_I)` by Hermitian eigendecomposition.
pub fn encounter_unitary_exact(coupling: &EncounterCoupling, ops: &SubspaceOps) -> CMat {
    HermitianExp::new(&interaction_hamiltonian(coupling, ops)).unitary(coupling.kappa)
}

/// System block `⟨e|U|0⟩` of an encounter unitary.
pub fn env_block(u: &CMat, ne: usize, e: usize) -> CMat {
    let d = u.nrows() / ne;
    CMat::from_fn(d, d, |i, j| u[(i * ne + e, j * ne)])
}

/// Instrument computed by tracing the environment against its measurement:
/// the `π_j` slots give clicks, `|0⟩` and the `δ_j` slots give no click.
/// Outcome labels follow the coupling's symmetry mode.
pub fn maps_from_unitary(u: &CMat, coupling: &EncounterCoupling, ops: &SubspaceOps) -> EncounterMaps {
    let slots = env_slots(coupling);
    let ne = slots.len();
    let d = ops.dim();
    let mut a_0 = SuperOp::zero(d);
    let mut per_channel: Vec<(Channel, SuperOp)> = Vec::new();
    for (e, s) in slots.iter().enumerate() {
        let k = env_block(u, ne, e);
        let m = SuperOp::conjugation(&k);
        match s {
            Some((true, ch)) => per_channel.push((*ch, m)),
            _ => a_0 = &a_0 + &m,
        }
    }
    let clicks: Vec<(Outcome, SuperOp)> = click_outcomes(coupling.mode)
        .into_iter()
        .map(|o| {
            let sum = per_channel
                .iter()
                .filter(|(ch, _)| o.channels().contains(ch))
                .fold(SuperOp::zero(d), |acc, (_, m)| &acc + m);
            (o, sum)
        })
        .collect();
    let a_cpt = clicks.iter().fold(a_0.clone(), |acc, (_, a)| &acc + a);
    EncounterMaps {
        clicks,
        a_0,
        a_cpt,
        params: derive_map_params(coupling),
    }
}

/// Result of the weak-encounter reduction.
#[derive(Clone, Debug)]
pub struct WeakLimit {
    pub rates: ReactionRates,
    /// Relative truncation `max_j φ_j²/3`, the leading correction to `sinc²`.
    pub relative_error_bound: f64,
    /// True when the bound exceeds 1e−2.
    pub outside_weak_regime: bool,
}

/// `r_j = rate·κ²|π_j|²`, `d_j = rate·κ²|δ_j|²` (from `2t = κ² r`).
pub fn weak_limit(coupling: &EncounterCoupling, rate: f64) -> Result<WeakLimit> {
    coupling.validate()?;
    if !(rate > 0.0) {
        return Err(Error::param(format!("encounter rate {rate} must be > 0")));
    }
    let k2 = coupling.kappa * coupling.kappa;
    let r = coupling.pi.map(|p| rate * k2 * p.norm_sqr());
    let d = coupling.delta.map(|p| rate * k2 * p.norm_sqr());
    let rates = ReactionRates {
        r,
        d,
        mode: coupling.mode,
    };
    rates.validate()?;
    let bound = Channel::ALL
        .iter()
        .map(|&ch| coupling.phi(ch).powi(2) / 3.0)
        .fold(0.0, f64::max);
    Ok(WeakLimit {
        rates,
        relative_error_bound: bound,
        outside_weak_regime: bound > 1e-2,
    })
}

/// Encounter classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncounterClass {
    /// Projective S/T/P measurement followed by recombination.
    BrightVonNeumann,
    /// No recombination, only dephasing: `A_0 = (1−η̃) + η̃𝓠`.
    DarkPureDephasing,
    /// `φ_j = k_j π` with even `k_S + k_T`: no effect.
    DarkIdentity,
    /// `φ_j = k_j π` with odd `k_S + k_T`: the reflection `2𝓠 − 1`.
    DarkGrover,
    Generic,
}

impl EncounterClass {
    pub fn label(self) -> &'static str {
        match self {
            EncounterClass::BrightVonNeumann => "Bright/VonNeumann",
            EncounterClass::DarkPureDephasing => "Dark/PureDephasing",
            EncounterClass::DarkIdentity => "Dark/Identity",
            EncounterClass::DarkGrover => "Dark/Grover",
            EncounterClass::Generic => "Generic",
        }
    }
}

impl std::fmt::Display for EncounterClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

const CLASS_TOL: f64 = 1e-10;

/// Distance of `x` from the nearest multiple of `m`, and that multiple's index.
fn modular(x: f64, m: f64) -> (f64, i64) {
    let k = (x / m).round();
    ((x - k * m).abs(), k as i64)
}

/// Classifies an encounter from its coefficients (tolerance 1e−10).
pub fn classify(params: &EncounterMapParams) -> EncounterClass {
    use std::f64::consts::{FRAC_PI_2, PI};
    let near = |x: f64, y: f64| (x - y).abs() <= CLASS_TOL;
    if let Some(phi) = params.phi {
        let no_delta = params.d_tilde.iter().all(|&d| d.abs() <= CLASS_TOL);
        if no_delta && phi.iter().all(|&p| modular(p - FRAC_PI_2, PI).0 <= CLASS_TOL) {
            return EncounterClass::BrightVonNeumann;
        }
        if params.r_tilde.iter().all(|&r| r.abs() <= CLASS_TOL) {
            let ks: Vec<_> = phi.iter().map(|&p| modular(p, PI)).collect();
            if ks.iter().all(|(dist, _)| *dist <= CLASS_TOL) {
                let par: Vec<i64> = ks.iter().map(|(_, k)| k.rem_euclid(2)).collect();
                if par[1..].iter().all(|&p| p == par[1]) {
                    return if (par[0] + par[1]) % 2 == 0 {
                        EncounterClass::DarkIdentity
                    } else {
                        EncounterClass::DarkGrover
                    };
                }
                return EncounterClass::Generic;
            }
            return EncounterClass::DarkPureDephasing;
        }
        return EncounterClass::Generic;
    }
    // Averaged encounters: decide from the coefficients alone.
    if params.r_tilde.iter().all(|&r| near(r, 1.0)) {
        return EncounterClass::BrightVonNeumann;
    }
    if params.r_tilde.iter().all(|&r| r.abs() <= CLASS_TOL) {
        let sharp = params.d_tilde.iter().all(|&d| d.abs() <= CLASS_TOL) && (0..4).all(|j| near(params.c[j][j], 1.0));
        if sharp {
            let t_ok = (1..4).all(|j| (1..4).all(|k| near(params.c[j][k], 1.0)));
            if t_ok && near(params.eta_tilde, 0.0) {
                return EncounterClass::DarkIdentity;
            }
            if t_ok && near(params.eta_tilde, 2.0) {
                return EncounterClass::DarkGrover;
            }
        }
        return EncounterClass::DarkPureDephasing;
    }
    EncounterClass::Generic
}

/// Weighted average of encounter types:
/// `r̄_j = Σ p_λ r̃_j^λ`, `η̄ = Σ p_λ η̃^λ` (and likewise for every block factor).
pub fn average_maps(entries: &[(f64, EncounterCoupling)], ops: &SubspaceOps) -> Result<EncounterMaps> {
    build_maps(&average_params(entries)?, ops)
}

/// Averaged coefficients; see [`average_maps`].
pub fn average_params(entries: &[(f64, EncounterCoupling)]) -> Result<EncounterMapParams> {
    if entries.is_empty() {
        return Err(Error::param("empty encounter distribution"));
    }
    let total: f64 = entries.iter().map(|(w, _)| *w).sum();
    if entries.iter().any(|(w, _)| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::param(format!("weights must be ≥ 0 and sum to 1 (sum {total})")));
    }
    let mode = entries[0].1.mode;
    if entries.iter().any(|(_, e)| e.mode != mode) {
        return Err(Error::param("all averaged encounters must share one symmetry mode"));
    }
    if entries.len() == 1 {
        entries[0].1.validate()?;
        return Ok(derive_map_params(&entries[0].1));
    }
    let mut r = [0.0; 4];
    let mut d = [0.0; 4];
    let mut cm = [[0.0; N_BLOCKS]; N_BLOCKS];
    for (w, e) in entries {
        e.validate()?;
        let p = derive_map_params(e);
        for j in 0..4 {
            r[j] += w * p.r_tilde[j];
            d[j] += w * p.d_tilde[j];
        }
        for a in 0..N_BLOCKS {
            for b in 0..N_BLOCKS {
                cm[a][b] += w * p.c[a][b];
            }
        }
    }
    Ok(finish_params(None, r, d, cm, mode))
}

/// Effective reactant-subspace POVM.
#[derive(Clone, Debug)]
pub struct EffectivePovm {
    pub pi_s: CMat,
    pub pi_t: CMat,
    pub pi_0: CMat,
    /// `ν_j = min(η̃_j, 1)` for (S, T).
    pub nu: [f64; 2],
    /// `μ_j = max(η̃_j, 1) − 1` for (S, T).
    pub mu: [f64; 2],
    /// Whether all three elements are positive semidefinite. `Π_0` is
    /// not when some `η̃_j > 1`.
    pub positive: bool,
}

/// `Π_S = ν_S Q_S + μ_T Q_T`, `Π_T = ν_T Q_T + μ_S Q_S`, `Π_0 = Σ (1−η̃_j) Q_j`.
pub fn effective_r_povm(params: &EncounterMapParams, ops: &SubspaceOps) -> Result<EffectivePovm> {
    if params.eta_tilde.abs() <= 1e-14 {
        return Err(Error::param("η̃ = 0: the encounter performs no effective measurement"));
    }
    let e = [params.eta_tilde_j[0], params.eta_tilde_j[1]];
    let nu = e.map(|x| x.min(1.0));
    let mu = e.map(|x| x.max(1.0) - 1.0);
    let pi_s = &ops.q_s * c(nu[0]) + &ops.q_t * c(mu[1]);
    let pi_t = &ops.q_t * c(nu[1]) + &ops.q_s * c(mu[0]);
    let pi_0 = &ops.q_s * c(1.0 - e[0]) + &ops.q_t * c(1.0 - e[1]);
    let positive = [&pi_s, &pi_t, &pi_0]
        .iter()
        .all(|m| crate::qcore::min_eigenvalue(m) >= PSD_TOL);
    Ok(EffectivePovm {
        pi_s,
        pi_t,
        pi_0,
        nu,
        mu,
        positive,
    })
}

/// Superoperator distance `‖r(A_CPT − 1) − 𝓛‖` between the averaged encounter
/// generator at encounter rate `rate` and a Lindblad generator.
pub fn encounter_generator(maps: &EncounterMaps, rate: f64) -> SuperOp {
    rate * (&maps.a_cpt - &SuperOp::identity(maps.dim()))
}

/// Index of the product block, re-exported for callers assembling block
/// coefficient tables.
pub const PRODUCT_BLOCK: usize = P_BLOCK;
