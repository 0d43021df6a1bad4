//! Conditional (nonlinear) master equations: dark evolution of a single
//! radical pair, its closed forms and survival time, and the fluorescence
//! record of a cloud of `n` radical pairs.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::encounter::{DetectionEfficiencies, EncounterMapParams, EncounterMaps, Outcome};
use crate::error::{Error, Result};
use crate::qcore::{
    c, default_step, hermitize, max_abs, min_eigenvalue, require_inicon, CMat, Channel, NonlinearFlow, SubspaceOps,
    SuperOp, PSD_TOL, ZERO_TRACE,
};
use crate::reactops::SymmetryMode;
use crate::stochastic::binomial_pmf;

/// Builds `ρ̇ = (𝓛 − ⟨𝓛⟩)ρ` with `𝓛 = rate·(a0 − 1) + extra`.
///
/// `a0` must be completely positive and trace non-increasing; this rules out
/// generators such as `ρ̇_N = −r𝓟ρ_N` (equivalently `a0 = 1 − 𝓟`), which
/// describe no physical conditional evolution.
pub fn conditional_generator(a0: &SuperOp, rate: f64, extra: Option<&SuperOp>) -> Result<NonlinearFlow> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(Error::param(format!("rate {rate} must be finite and ≥ 0")));
    }
    let lmin = a0.choi_min_eigenvalue();
    if lmin < PSD_TOL {
        return Err(Error::NotCompletelyPositive(lmin));
    }
    let d = a0.dim();
    let id = CMat::identity(d, d);
    let slack = min_eigenvalue(&(&id - a0.adjoint().apply(&id)));
    if slack < PSD_TOL {
        return Err(Error::param(format!(
            "no-click map increases the trace (1 − 𝓐†(1) has eigenvalue {slack:e})"
        )));
    }
    let mut l = rate * (a0 - &SuperOp::identity(d));
    let mut h_norm = 0.0;
    if let Some(x) = extra {
        if x.dim() != d {
            return Err(Error::Dimension {
                expected: d,
                got: x.dim(),
            });
        }
        h_norm = x.norm();
        l = &l + x;
    }
    Ok(NonlinearFlow::new(l, default_step(rate, h_norm)))
}

/// Populations `(⟨Q_S⟩₀, ⟨Q_T⟩₀, ⟨Q_P⟩₀)` of the initial state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DarkPopulations {
    pub q_s: f64,
    pub q_t: f64,
    pub q_p: f64,
}

impl DarkPopulations {
    pub fn new(q_s: f64, q_t: f64, q_p: f64) -> Result<Self> {
        let p = Self { q_s, q_t, q_p };
        if [q_s, q_t, q_p].iter().any(|x| !(0.0..=1.0 + 1e-12).contains(x)) {
            return Err(Error::param("populations must lie in [0, 1]"));
        }
        let sum = q_s + q_t + q_p;
        if sum > 1.0 + 1e-12 {
            return Err(Error::param(format!("population sum {sum} > 1")));
        }
        Ok(p)
    }

    pub fn of_state(rho: &CMat, ops: &SubspaceOps) -> Result<Self> {
        let e = |q: &CMat| crate::qcore::trace_product(rho, q).re;
        Self::new(e(&ops.q_s), e(&ops.q_t), e(&ops.q_p))
    }

    fn by_channel(&self) -> [f64; 2] {
        [self.q_s, self.q_t]
    }

    pub fn total(&self) -> f64 {
        self.q_s + self.q_t + self.q_p
    }
}

/// Coefficients of dark evolution for singlet (index 0) and triplet (1)
/// encounters without triplet dephasing and without evolution between encounters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DarkModel {
    /// Recombination probability per encounter `r̃_j`.
    pub r_tilde: [f64; 2],
    pub eta_tilde: f64,
    pub eta_tilde_j: [f64; 2],
    /// Detection efficiencies `η_j^(D)`.
    pub eta_d: [f64; 2],
}

impl DarkModel {
    pub fn new(params: &EncounterMapParams, eff: &DetectionEfficiencies) -> Result<Self> {
        if params.mode != SymmetryMode::TripletSymmetricNoTDephasing {
            return Err(Error::param(
                "dark closed forms need triplet-symmetric encounters without triplet dephasing",
            ));
        }
        Ok(Self {
            r_tilde: [params.r_tilde[0], params.r_tilde[1]],
            eta_tilde: params.eta_tilde,
            eta_tilde_j: [params.eta_tilde_j[0], params.eta_tilde_j[1]],
            eta_d: [eff.for_outcome(Outcome::S)?, eff.for_outcome(Outcome::T)?],
        })
    }

    /// `p(D) = Tr ρ_N(t)` at dimensionless time `rt`.
    pub fn p_dark(&self, pops: &DarkPopulations, rt: f64) -> f64 {
        let q = pops.by_channel();
        pops.total()
            - (0..2)
                .map(|j| self.eta_d[j] * (-(-self.r_tilde[j] * rt).exp_m1()) * q[j])
                .sum::<f64>()
    }

    /// `p(R, D) = Σ_j e^{−r̃_j rt}⟨Q_j⟩₀`.
    pub fn p_reactant_and_dark(&self, pops: &DarkPopulations, rt: f64) -> f64 {
        let q = pops.by_channel();
        (0..2).map(|j| (-self.r_tilde[j] * rt).exp() * q[j]).sum()
    }

    /// `p(R|D) = p(R, D)/p(D)`.
    pub fn p_reactant_given_dark(&self, pops: &DarkPopulations, rt: f64) -> f64 {
        self.p_reactant_and_dark(pops, rt) / self.p_dark(pops, rt)
    }
}

/// Dark evolution at one time.
#[derive(Clone, Debug)]
pub struct DarkSolution {
    pub t: f64,
    /// Unnormalized state `ρ_N(t)`, when an initial state was supplied.
    pub rho_n: Option<CMat>,
    /// `p(D)`.
    pub trace_n: f64,
    /// `p(R|D)`.
    pub trace_r: f64,
    /// `p(R, D)`.
    pub p_rd: f64,
}

/// Closed-form dark evolution at time `t` for encounter rate `rate`.
/// With `rho0`, the populations are taken from it and `ρ_N(t)` is evaluated;
/// `rho0` must be free of reactant–product coherence.
pub fn dark_closed_form(
    model: &DarkModel,
    pops: Option<DarkPopulations>,
    rho0: Option<(&CMat, &SubspaceOps)>,
    rate: f64,
    t: f64,
) -> Result<DarkSolution> {
    let pops = match (pops, rho0) {
        (_, Some((rho, ops))) => DarkPopulations::of_state(rho, ops)?,
        (Some(p), None) => DarkPopulations::new(p.q_s, p.q_t, p.q_p)?,
        (None, None) => return Err(Error::param("dark evolution needs populations or an initial state")),
    };
    let rt = rate * t;
    let trace_n = model.p_dark(&pops, rt);
    let p_rd = model.p_reactant_and_dark(&pops, rt);
    let rho_n = match rho0 {
        None => None,
        Some((rho, ops)) => {
            require_inicon(rho, ops)?;
            let r_eff = model.eta_tilde * rate;
            let decay_all = (-r_eff * t).exp();
            let mut out = ops.product_part(rho) + ops.reactant_part(rho) * c(decay_all);
            let qs = [&ops.q_s, &ops.q_t];
            let sets: [&[Channel]; 2] = [&[Channel::S], &Channel::TRIPLETS];
            for j in 0..2 {
                let decay_j = (-model.r_tilde[j] * rt).exp();
                out += qs[j] * rho * qs[j] * c(decay_j - decay_all);
                out += ops.recombine(rho, sets[j]) * c((1.0 - model.eta_d[j]) * (1.0 - decay_j));
            }
            Some(out)
        }
    };
    Ok(DarkSolution {
        t,
        rho_n,
        trace_n,
        trace_r: p_rd / trace_n,
        p_rd,
    })
}

/// Dark survival time in units of `1/r`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurvivalTime {
    /// `(1/R) ln[(2−η)q / (1−ηq)]`.
    pub exact: f64,
    /// `(1/R) ln[1/(ε_R + ε_D)]`.
    pub approx: f64,
}

/// `rt_max` where `p(R|D) = ½` for equal recombination probabilities `R`
/// and detection efficiencies `η`, initial reactant population `q`.
pub fn dark_survival_time(r: f64, eta_d: f64, q_r0: f64) -> Result<SurvivalTime> {
    if !(r > 0.0) {
        return Err(Error::param(format!("R = {r} must be > 0")));
    }
    if !(0.0..=1.0).contains(&eta_d) || !(0.0..=1.0).contains(&q_r0) {
        return Err(Error::param("efficiency and population must lie in [0, 1]"));
    }
    if eta_d * q_r0 >= 1.0 {
        return Err(Error::param("η q_R0 = 1: the conditional survival never drops to ½"));
    }
    let arg = (2.0 - eta_d) * q_r0 / (1.0 - eta_d * q_r0);
    if arg <= 1.0 {
        return Err(Error::param(format!(
            "log argument {arg} ≤ 1: p(R|D) starts at or below ½"
        )));
    }
    let eps = (1.0 - q_r0) + (1.0 - eta_d);
    Ok(SurvivalTime {
        exact: arg.ln() / r,
        approx: (1.0 / eps).ln() / r,
    })
}

/// `ρ|_𝓐 = [(n−1)/n + (1/n)𝓐/⟨𝓐⟩]ρ`: effect `a` occurred somewhere in a cloud of `n`.
pub fn cloud_single_effect(rho: &CMat, a: &SuperOp, n: u64) -> Result<CMat> {
    if n == 0 {
        return Err(Error::param("cloud size must be ≥ 1"));
    }
    let ar = a.try_apply(rho)?;
    let p = ar.trace().re;
    if p <= ZERO_TRACE {
        return Err(Error::ZeroTrace(p));
    }
    let nf = n as f64;
    Ok(rho * c((nf - 1.0) / nf) + ar * c(1.0 / (nf * p)))
}

fn check_split(a: &SuperOp, b: &SuperOp) -> Result<()> {
    let sum = a + b;
    let defect = sum.trace_preservation_defect();
    if defect > 1e-10 {
        return Err(Error::param(format!(
            "no-click and click maps do not sum to a CPT map ({defect:e})"
        )));
    }
    Ok(())
}

/// Conditional single-system update for `l` clicks out of a cloud of `n`
/// during a step with encounter probability `p`: returns `M_l ρ` and
/// `p(l) = b_ln(p⟨𝓑⟩)`. `a` is the no-click map, `b` the click map.
pub fn ensemble_click_map(rho: &CMat, n: u64, l: u64, p: f64, a: &SuperOp, b: &SuperOp) -> Result<(CMat, f64)> {
    if l > n || n == 0 {
        return Err(Error::param(format!("need 0 ≤ l ≤ n and n ≥ 1 (l={l}, n={n})")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param(format!("encounter probability {p} outside [0,1]")));
    }
    check_split(a, b)?;
    let br = b.try_apply(rho)?;
    let mean_b = br.trace().re.clamp(0.0, 1.0);
    let pb = p * mean_b;
    let x = l as f64 / n as f64;
    let prob = binomial_pmf(l, n, pb)?;
    if prob == 0.0 {
        return Err(Error::ImpossibleRecord(format!(
            "{l} clicks out of {n} with click probability {pb:e}"
        )));
    }
    let mut out = CMat::zeros(rho.nrows(), rho.ncols());
    if x < 1.0 {
        let no_click = rho * c(1.0 - p) + a.apply(rho) * c(p);
        out += no_click * c((1.0 - x) / (1.0 - pb));
    }
    if x > 0.0 {
        out += br * c(x / mean_b);
    }
    Ok((hermitize(&out), prob))
}

/// `Σ_l p(l) M_l ρ`, evaluated term by term over all `l`.
pub fn cloud_mixture(rho: &CMat, n: u64, p: f64, a: &SuperOp, b: &SuperOp) -> Result<CMat> {
    let mut out = CMat::zeros(rho.nrows(), rho.ncols());
    for l in 0..=n {
        match ensemble_click_map(rho, n, l, p, a, b) {
            Ok((m, pl)) => out += m * c(pl),
            Err(Error::ImpossibleRecord(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// One Euler step of `ρ̇ = r[(𝓐_CPT − 1) + z(𝓑 − ⟨𝓑⟩)]ρ`; requires `r·dt ≤ 0.01`.
pub fn stochastic_me_step(rho: &CMat, z: f64, rate: f64, a_cpt: &SuperOp, b: &SuperOp, dt: f64) -> Result<CMat> {
    if rate * dt > 0.01 + 1e-15 || dt <= 0.0 {
        return Err(Error::StepTooLarge(rate * dt));
    }
    let br = b.try_apply(rho)?;
    let mean_b = br.trace().re;
    let drift = a_cpt.apply(rho) - rho;
    let kick = br - rho * c(mean_b);
    Ok(hermitize(&(rho + (drift + kick * c(z)) * c(rate * dt))))
}

/// `z = (ẋ − r⟨𝓑⟩)/(r⟨𝓑⟩)` with `ẋ = l/(n dt)`.
pub fn z_from_clicks(l: u64, n: u64, dt: f64, rate: f64, mean_b: f64) -> Result<f64> {
    let rb = rate * mean_b;
    if rb <= 0.0 || n == 0 || dt <= 0.0 {
        return Err(Error::param("z needs r⟨𝓑⟩ > 0, n ≥ 1 and dt > 0"));
    }
    let xdot = l as f64 / (n as f64 * dt);
    Ok((xdot - rb) / rb)
}

/// Click record of a cloud and the two single-system state estimates.
#[derive(Clone, Debug)]
pub struct CloudRun {
    pub t: Vec<f64>,
    /// Clicks in `(t_{k−1}, t_k]`.
    pub l: Vec<u64>,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    /// States updated with the exact `M_l`.
    pub states_exact: Vec<CMat>,
    /// States from the stochastic master equation driven by the same `z`.
    pub states_sme: Vec<CMat>,
}

/// Simulates the click record of a cloud of `n` radical pairs over `steps`
/// steps of length `dt` (`p = r dt`), with click probabilities drawn from
/// the exactly updated state.
pub fn simulate_cloud<R: Rng + ?Sized>(
    rho0: &CMat,
    maps: &EncounterMaps,
    n: u64,
    rate: f64,
    dt: f64,
    steps: usize,
    rng: &mut R,
) -> Result<CloudRun> {
    let p = rate * dt;
    if p > 0.01 + 1e-15 {
        return Err(Error::StepTooLarge(p));
    }
    let b = maps.click_sum();
    let a = &maps.a_cpt - &b;
    let mut run = CloudRun {
        t: vec![0.0],
        l: vec![0],
        x: vec![0.0],
        z: vec![0.0],
        states_exact: vec![rho0.clone()],
        states_sme: vec![rho0.clone()],
    };
    let mut rho = rho0.clone();
    let mut rho_sme = rho0.clone();
    for k in 1..=steps {
        let mean_b = b.apply(&rho).trace().re.clamp(0.0, 1.0);
        let l = Binomial::new(n, p * mean_b)
            .map_err(|e| Error::param(format!("binomial sampling: {e}")))?
            .sample(rng);
        let (next, _) = ensemble_click_map(&rho, n, l, p, &a, &b)?;
        let z = if mean_b > 0.0 {
            z_from_clicks(l, n, dt, rate, mean_b)?
        } else {
            0.0
        };
        rho_sme = stochastic_me_step(&rho_sme, z, rate, &maps.a_cpt, &b, dt)?;
        rho = next;
        run.t.push(k as f64 * dt);
        run.l.push(l);
        run.x.push(l as f64 / n as f64);
        run.z.push(z);
        run.states_exact.push(rho.clone());
        run.states_sme.push(rho_sme.clone());
    }
    Ok(run)
}

/// Histogram of `|z|` with `n_bins` equal bins on `[0, max|z|]`:
/// returns `(bin upper edges, counts)`.
pub fn z_histogram(z: &[f64], n_bins: usize) -> (Vec<f64>, Vec<u64>) {
    let zmax = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let n_bins = n_bins.max(1);
    let width = if zmax > 0.0 { zmax / n_bins as f64 } else { 1.0 };
    let mut counts = vec![0u64; n_bins];
    for v in z {
        let k = ((v.abs() / width) as usize).min(n_bins - 1);
        counts[k] += 1;
    }
    let edges = (1..=n_bins).map(|k| k as f64 * width).collect();
    (edges, counts)
}

/// Largest elementwise deviation of `M_l` from the unconditional step, a
/// measure of the nonlinearity of a given record.
pub fn nonlinearity(rho: &CMat, n: u64, l: u64, p: f64, a: &SuperOp, b: &SuperOp) -> Result<f64> {
    let (m, _) = ensemble_click_map(rho, n, l, p, a, b)?;
    let lin = rho * c(1.0 - p) + (a + b).apply(rho) * c(p);
    Ok(max_abs(&(m - lin)))
}
