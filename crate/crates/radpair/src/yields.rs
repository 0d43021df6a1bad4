//! Exponential-model readout: singlet probability and yield, general yield
//! functionals `Φ = ∫ p(t) f(t) dt`, magnetic-field sensitivity and the
//! concurrence of the electron pair.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{
    c, check_state, require_inicon, sqrtm_psd, trace_product, CMat, HermitianExp, HilbertLayout, SubspaceOps, C64,
};
use crate::spinham::{electron_block, to_product_basis};
use crate::stochastic::RateModel;

/// Relative tolerance of the yield quadrature.
pub const QUAD_REL_TOL: f64 = 1e-8;
/// Default cutoff `t_∞ = 40/r`.
pub const DEFAULT_TAIL: f64 = 40.0;

/// Adaptive Simpson quadrature of `f` on `[a, b]`, started on `panels`
/// equal panels. Returns the integral and an error estimate.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64, panels: usize) -> (f64, f64) {
    if b <= a {
        return (0.0, 0.0);
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        m: f64,
        fm: f64,
        b: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> (f64, f64) {
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return (left + right + delta / 15.0, delta.abs() / 15.0);
        }
        let (l, el) = recurse(f, a, fa, lm, flm, m, fm, left, 0.5 * tol, depth - 1);
        let (r, er) = recurse(f, m, fm, rm, frm, b, fb, right, 0.5 * tol, depth - 1);
        (l + r, el + er)
    }
    let n = panels.max(1);
    let h = (b - a) / n as f64;
    // Coarse pass for the scale of the absolute tolerance.
    let coarse: f64 = (0..n)
        .map(|k| {
            let x0 = a + k as f64 * h;
            let x1 = x0 + h;
            h / 6.0 * (f(x0) + 4.0 * f(0.5 * (x0 + x1)) + f(x1))
        })
        .sum();
    let tol = (rel_tol * coarse.abs()).max(1e-300) / n as f64;
    let mut total = 0.0;
    let mut err = 0.0;
    for k in 0..n {
        let x0 = a + k as f64 * h;
        let x1 = if k + 1 == n { b } else { x0 + h };
        let xm = 0.5 * (x0 + x1);
        let (f0, fm, f1) = (f(x0), f(xm), f(x1));
        let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
        let (v, e) = recurse(f, x0, f0, xm, fm, x1, f1, whole, tol, 40);
        total += v;
        err += e;
    }
    (total, err)
}

/// Unitary evolution of a fixed initial state with a cached eigenbasis.
#[derive(Clone, Debug)]
pub struct UnitaryEvolution {
    eig: HermitianExp,
    rho_eig: CMat,
    layout: HilbertLayout,
}

impl UnitaryEvolution {
    pub fn new(h: &CMat, rho0: &CMat, ops: &SubspaceOps) -> Result<Self> {
        crate::qcore::require_dim(rho0, ops.dim())?;
        crate::qcore::require_dim(h, ops.dim())?;
        check_state(rho0)?;
        require_inicon(rho0, ops)?;
        let eig = HermitianExp::new(h);
        let rho_eig = eig.to_eigenbasis(rho0);
        Ok(Self {
            eig,
            rho_eig,
            layout: ops.layout.clone(),
        })
    }

    /// `Tr(q ρ(t))` for an operator already in the eigenbasis.
    pub fn expectation_eig(&self, q_eig: &CMat, t: f64) -> f64 {
        self.eig.expectation_eigenbasis(q_eig, &self.rho_eig, t)
    }

    pub fn to_eigenbasis(&self, q: &CMat) -> CMat {
        self.eig.to_eigenbasis(q)
    }

    /// `ρ(t)`.
    pub fn state(&self, t: f64) -> CMat {
        let u = self.eig.unitary(t);
        let v = &self.eig.eigenvectors;
        let rho0 = v * &self.rho_eig * v.adjoint();
        &u * rho0 * u.adjoint()
    }

    /// Panel count that resolves the fastest Bohr frequency over `[0, t]`.
    pub fn panels(&self, t: f64) -> usize {
        ((self.eig.bandwidth() * t / std::f64::consts::PI).ceil() as usize + 1).clamp(8, 1 << 16)
    }

    pub fn layout(&self) -> &HilbertLayout {
        &self.layout
    }
}

/// `p_S(t) = ∫₀ᵗ r e^{−rτ}⟨Q_S(τ)⟩ dτ` under unitary evolution.
pub fn singlet_probability(h: &CMat, rho0: &CMat, rate: f64, t: f64, ops: &SubspaceOps) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::param(format!("rate {rate} must be > 0")));
    }
    let ev = UnitaryEvolution::new(h, rho0, ops)?;
    let q = ev.to_eigenbasis(&ops.q_s);
    let f = |tau: f64| rate * (-rate * tau).exp() * ev.expectation_eig(&q, tau);
    Ok(adaptive_simpson(&f, 0.0, t, QUAD_REL_TOL, ev.panels(t)).0)
}

/// Quantity averaged over the encounter-time distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum YieldFunctional {
    /// `⟨S|ρ_S(t)|S⟩`, i.e. `Tr(Q_S ρ(t))`.
    SingletFidelity,
    /// Concurrence of the normalized electron state.
    Concurrence,
    /// `Tr(X ρ(t))` for a Hermitian `X`, given as real and imaginary parts.
    Expectation { re: Vec<Vec<f64>>, im: Vec<Vec<f64>> },
}

/// Distribution `p(t)` of the (first) encounter time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum YieldDistribution {
    /// `p(t) = r e^{−rt}`.
    Exponential { rate: f64 },
    /// Sample mean over recorded first-encounter times.
    Empirical { times: Vec<f64> },
    /// First-encounter density `r(t)e^{−∫r}` of a declining rate model.
    /// Experimental: this combination goes beyond the exponential model and
    /// must be enabled explicitly.
    FirstEncounter { model: RateModel, experimental: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YieldSpec {
    pub functional: YieldFunctional,
    pub distribution: YieldDistribution,
}

fn expectation_operator(re: &[Vec<f64>], im: &[Vec<f64>], dim: usize) -> Result<CMat> {
    let ok = |m: &[Vec<f64>]| m.len() == dim && m.iter().all(|r| r.len() == dim);
    if !ok(re) || !ok(im) {
        return Err(Error::Dimension {
            expected: dim,
            got: re.len(),
        });
    }
    let x = CMat::from_fn(dim, dim, |i, j| C64::new(re[i][j], im[i][j]));
    if crate::qcore::max_abs(&(&x - x.adjoint())) > 1e-12 {
        return Err(Error::param("yield operator must be Hermitian"));
    }
    Ok(x)
}

/// `f(t)` of a yield functional.
pub struct Functional<'a> {
    ev: &'a UnitaryEvolution,
    kind: FunctionalKind,
}

enum FunctionalKind {
    Operator(CMat),
    Concurrence,
}

impl<'a> Functional<'a> {
    pub fn new(spec: &YieldFunctional, ev: &'a UnitaryEvolution, ops: &SubspaceOps) -> Result<Self> {
        let kind = match spec {
            YieldFunctional::SingletFidelity => FunctionalKind::Operator(ev.to_eigenbasis(&ops.q_s)),
            YieldFunctional::Expectation { re, im } => {
                FunctionalKind::Operator(ev.to_eigenbasis(&expectation_operator(re, im, ops.dim())?))
            }
            YieldFunctional::Concurrence => FunctionalKind::Concurrence,
        };
        Ok(Self { ev, kind })
    }

    pub fn eval(&self, t: f64) -> f64 {
        match &self.kind {
            FunctionalKind::Operator(q) => self.ev.expectation_eig(q, t),
            FunctionalKind::Concurrence => electron_state(&self.ev.state(t), self.ev.layout())
                .map(|e| concurrence_unchecked(&e))
                .unwrap_or(0.0),
        }
    }
}

/// `Φ = ∫₀^{t_∞} p(t) f(t) dt` (`t_∞` defaults to `40/r`), or the sample
/// mean of `f` for an empirical distribution.
pub fn yield_integral(
    spec: &YieldSpec,
    h: &CMat,
    rho0: &CMat,
    ops: &SubspaceOps,
    t_infinity: Option<f64>,
) -> Result<f64> {
    let ev = UnitaryEvolution::new(h, rho0, ops)?;
    let f = Functional::new(&spec.functional, &ev, ops)?;
    match &spec.distribution {
        YieldDistribution::Exponential { rate } => {
            let rate = *rate;
            if !(rate > 0.0) {
                return Err(Error::param(format!("rate {rate} must be > 0")));
            }
            let t_inf = t_infinity.unwrap_or(DEFAULT_TAIL / rate);
            let g = |t: f64| rate * (-rate * t).exp() * f.eval(t);
            let panels = ev.panels(t_inf).max(64);
            Ok(adaptive_simpson(&g, 0.0, t_inf, QUAD_REL_TOL, panels).0)
        }
        YieldDistribution::Empirical { times } => {
            if times.is_empty() {
                return Err(Error::param("empirical distribution has no samples"));
            }
            Ok(times.iter().map(|&t| f.eval(t)).sum::<f64>() / times.len() as f64)
        }
        YieldDistribution::FirstEncounter { model, experimental } => {
            if !experimental {
                return Err(Error::param(
                    "first-encounter yields with declining rates are experimental; set experimental = true",
                ));
            }
            model.validate()?;
            let t_inf = t_infinity.unwrap_or_else(|| model.cutoff());
            let g = |t: f64| model.first_encounter_density(t) * f.eval(t);
            let panels = ev.panels(t_inf).max(64);
            Ok(adaptive_simpson(&g, 0.0, t_inf, QUAD_REL_TOL, panels).0)
        }
    }
}

/// Finite-difference field derivative of a yield.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sensitivity {
    /// Richardson-refined `(4D(δ/2) − D(δ))/3`.
    pub value: f64,
    /// Central difference at `δ`.
    pub coarse: f64,
    /// Central difference at `δ/2`.
    pub fine: f64,
    /// `|D(δ/2) − D(δ)|`.
    pub error_estimate: f64,
}

/// `Λ = ∂Φ/∂B` by central differences at `δ` and `δ/2` with Richardson refinement.
/// `family(B)` returns the Hamiltonian at field parameter `B`.
pub fn magnetic_sensitivity(
    spec: &YieldSpec,
    family: &dyn Fn(f64) -> Result<CMat>,
    rho0: &CMat,
    ops: &SubspaceOps,
    b: f64,
    delta_b: f64,
) -> Result<Sensitivity> {
    if !(delta_b > 0.0) {
        return Err(Error::param(format!("field step {delta_b} must be > 0")));
    }
    let phi = |x: f64| -> Result<f64> { yield_integral(spec, &family(x)?, rho0, ops, None) };
    let diff = |d: f64| -> Result<f64> { Ok((phi(b + d)? - phi(b - d)?) / (2.0 * d)) };
    let coarse = diff(delta_b)?;
    let fine = diff(0.5 * delta_b)?;
    Ok(Sensitivity {
        value: (4.0 * fine - coarse) / 3.0,
        coarse,
        fine,
        error_estimate: (fine - coarse).abs(),
    })
}

/// Normalized two-electron state in the product basis `|↑↑⟩, |↑↓⟩, |↓↑⟩, |↓↓⟩`,
/// traced over nuclei and restricted to the reactant block.
pub fn electron_state(rho: &CMat, layout: &HilbertLayout) -> Result<CMat> {
    let st = electron_block(rho, layout);
    let tr = st.trace().re;
    if tr <= crate::qcore::ZERO_TRACE {
        return Err(Error::ZeroTrace(tr));
    }
    Ok(to_product_basis(&st) * c(1.0 / tr))
}

fn sigma_y_y() -> CMat {
    let mut m = CMat::zeros(4, 4);
    m[(0, 3)] = c(-1.0);
    m[(1, 2)] = c(1.0);
    m[(2, 1)] = c(1.0);
    m[(3, 0)] = c(-1.0);
    m
}

/// `λ₁ − λ₂ − λ₃ − λ₄` with `λ_i` the decreasing square roots of the
/// eigenvalues of `ρ ρ̃`; the concurrence is its positive part.
pub fn concurrence_witness(rho: &CMat) -> f64 {
    let yy = sigma_y_y();
    let tilde = &yy * rho.conjugate() * &yy;
    let s = sqrtm_psd(rho);
    let m = &s * tilde * &s;
    let mut l: Vec<f64> = crate::qcore::hermitize(&m)
        .symmetric_eigenvalues()
        .iter()
        .map(|x| x.max(0.0).sqrt())
        .collect();
    l.sort_by(|a, b| b.total_cmp(a));
    l[0] - l[1] - l[2] - l[3]
}

fn concurrence_unchecked(rho: &CMat) -> f64 {
    concurrence_witness(rho).max(0.0)
}

/// Wootters concurrence of a two-qubit state in the product basis.
pub fn concurrence(rho: &CMat) -> Result<f64> {
    crate::qcore::require_dim(rho, 4)?;
    check_state(rho)?;
    let tr = rho.trace().re;
    if (tr - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidState(format!("two-qubit state trace {tr} ≠ 1")));
    }
    Ok(concurrence_unchecked(rho))
}

/// Entanglement lifetime `T_E = max{t ≤ t_max | E(t) > 0}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntanglementLifetime {
    pub t_e: f64,
    /// True when the pair is still entangled at `t_max`.
    pub censored: bool,
}

/// Scans `E(t)` on `grid_points` equal steps over `[0, t_max]` and bisects the
/// last sign change of the concurrence witness to `tol`.
pub fn entanglement_lifetime(
    h: &CMat,
    rho0: &CMat,
    ops: &SubspaceOps,
    t_max: f64,
    grid_points: usize,
    tol: f64,
) -> Result<EntanglementLifetime> {
    if !(t_max > 0.0) || grid_points < 2 || !(tol > 0.0) {
        return Err(Error::param("lifetime scan needs t_max > 0, ≥ 2 points and tol > 0"));
    }
    let ev = UnitaryEvolution::new(h, rho0, ops)?;
    let w = |t: f64| -> Result<f64> { Ok(concurrence_witness(&electron_state(&ev.state(t), &ops.layout)?)) };
    let step = t_max / (grid_points - 1) as f64;
    let ts: Vec<f64> = (0..grid_points).map(|k| k as f64 * step).collect();
    let vals = ts.iter().map(|&t| w(t)).collect::<Result<Vec<_>>>()?;
    if vals[grid_points - 1] > 0.0 {
        return Ok(EntanglementLifetime {
            t_e: t_max,
            censored: true,
        });
    }
    let Some(k) = (0..grid_points - 1).rev().find(|&k| vals[k] > 0.0) else {
        return Ok(EntanglementLifetime {
            t_e: 0.0,
            censored: false,
        });
    };
    let (mut lo, mut hi) = (ts[k], ts[k + 1]);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if w(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(EntanglementLifetime {
        t_e: 0.5 * (lo + hi),
        censored: false,
    })
}

/// Expectation `Tr(q ρ)` exposed for readout of arbitrary states.
pub fn readout(rho: &CMat, q: &CMat) -> f64 {
    trace_product(rho, q).re
}
