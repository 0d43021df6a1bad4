//! Encounter-time statistics, single trajectories and ensemble averages.
//!
//! Determinism: trajectory `i` of a run with master seed `s` draws from
//! `ChaCha20Rng::seed_from_u64(s)` on stream `i`, and ensemble sums are formed
//! per fixed-size chunk and combined in chunk order with compensated
//! summation, so results do not depend on the number of worker threads.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::encounter::{with_detection, DetectionEfficiencies, EncounterMaps, Outcome};
use crate::error::{Error, Result};
use crate::qcore::{
    check_state, hermitize, require_inicon, trace_product, CMat, HermitianExp, SubspaceOps, SuperOp, C64,
};
use crate::spinham::{BetweenGenerator, Propagator};

/// Exponent of the algebraic decline.
pub const ALGEBRAIC_MU: f64 = 1.5;

/// Time dependence of the encounter rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateKind {
    Constant,
    /// `r(t) = r e^{−at}`.
    Exponential {
        a: f64,
    },
    /// `r(t) = (r^{−1/μ} + at)^{−μ}`, `μ = 3/2`.
    Algebraic {
        a: f64,
    },
}

/// Encounter rate `r(t)` for `0 ≤ t ≤ t_∞`, zero afterwards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateModel {
    pub r0: f64,
    pub kind: RateKind,
    /// Cutoff `t_∞`; `None` means `20/r(0)`.
    pub t_inf: Option<f64>,
}

impl RateModel {
    pub fn constant(r0: f64) -> Result<Self> {
        Self::new(r0, RateKind::Constant, None)
    }

    pub fn exponential(r0: f64, a: f64) -> Result<Self> {
        Self::new(r0, RateKind::Exponential { a }, None)
    }

    pub fn algebraic(r0: f64, a: f64) -> Result<Self> {
        Self::new(r0, RateKind::Algebraic { a }, None)
    }

    pub fn new(r0: f64, kind: RateKind, t_inf: Option<f64>) -> Result<Self> {
        let m = Self { r0, kind, t_inf };
        m.validate()?;
        Ok(m)
    }

    pub fn with_cutoff(mut self, t_inf: f64) -> Result<Self> {
        self.t_inf = Some(t_inf);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r0 >= 0.0) || !self.r0.is_finite() {
            return Err(Error::param(format!(
                "encounter rate {} must be finite and ≥ 0",
                self.r0
            )));
        }
        match self.kind {
            RateKind::Exponential { a } | RateKind::Algebraic { a } if !(a >= 0.0) || !a.is_finite() => {
                return Err(Error::param(format!("decline constant {a} must be finite and ≥ 0")));
            }
            RateKind::Algebraic { .. } if self.r0 == 0.0 => {
                return Err(Error::param("algebraic rate model needs r > 0"));
            }
            _ => {}
        }
        if let Some(t) = self.t_inf {
            if !(t > 0.0) {
                return Err(Error::param(format!("cutoff t_inf {t} must be > 0")));
            }
        }
        Ok(())
    }

    /// Effective cutoff: the configured `t_∞`, else `20/r(0)` (infinite for `r = 0`).
    pub fn cutoff(&self) -> f64 {
        self.t_inf
            .unwrap_or(if self.r0 > 0.0 { 20.0 / self.r0 } else { f64::INFINITY })
    }

    /// `r(t)`, zero beyond the cutoff.
    pub fn rate_at(&self, t: f64) -> f64 {
        if t > self.cutoff() || t < 0.0 {
            return 0.0;
        }
        match self.kind {
            RateKind::Constant => self.r0,
            RateKind::Exponential { a } => self.r0 * (-a * t).exp(),
            RateKind::Algebraic { a } => (self.r0.powf(-1.0 / ALGEBRAIC_MU) + a * t).powf(-ALGEBRAIC_MU),
        }
    }

    /// `∫₀ᵗ r(τ) dτ` (respecting the cutoff).
    pub fn integrated(&self, t: f64) -> f64 {
        let t = t.min(self.cutoff()).max(0.0);
        match self.kind {
            RateKind::Constant => self.r0 * t,
            RateKind::Exponential { a } if a == 0.0 => self.r0 * t,
            RateKind::Exponential { a } => self.r0 / a * (1.0 - (-a * t).exp()),
            RateKind::Algebraic { a } if a == 0.0 => self.r0 * t,
            RateKind::Algebraic { a } => {
                let mu = ALGEBRAIC_MU;
                let b = self.r0.powf(-1.0 / mu);
                (b.powf(1.0 - mu) - (b + a * t).powf(1.0 - mu)) / (a * (mu - 1.0))
            }
        }
    }

    /// Density of the first encounter time, `r(t) e^{−∫₀ᵗ r}`.
    pub fn first_encounter_density(&self, t: f64) -> f64 {
        self.rate_at(t) * (-self.integrated(t)).exp()
    }

    /// Largest rate, `r(0)` for every supported kind.
    pub fn max_rate(&self) -> f64 {
        self.r0
    }
}

/// Encounter times in `(0, min(t_end, t_∞)]`: exponential inter-arrival
/// sampling for constant rates, thinning against `r(0)` otherwise.
pub fn sample_encounters<R: Rng + ?Sized>(model: &RateModel, t_end: f64, rng: &mut R) -> Vec<f64> {
    let horizon = t_end.min(model.cutoff());
    let r0 = model.max_rate();
    let mut out = Vec::new();
    if r0 <= 0.0 || horizon <= 0.0 {
        return out;
    }
    let exp = Exp::new(r0).expect("positive rate");
    let mut t = 0.0;
    loop {
        t += exp.sample(rng);
        if t > horizon {
            break;
        }
        match model.kind {
            RateKind::Constant => out.push(t),
            _ => {
                if rng.random::<f64>() * r0 < model.rate_at(t) {
                    out.push(t);
                }
            }
        }
    }
    out
}

/// `b_kn(p) = C(n,k) p^k (1−p)^{n−k}`, evaluated through log-gamma.
pub fn binomial_pmf(k: u64, n: u64, p: f64) -> Result<f64> {
    if k > n || !(0.0..=1.0).contains(&p) {
        return Err(Error::param(format!(
            "binomial pmf needs 0 ≤ k ≤ n and p ∈ [0,1] (k={k}, n={n}, p={p})"
        )));
    }
    if p == 0.0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    if p == 1.0 {
        return Ok(if k == n { 1.0 } else { 0.0 });
    }
    let ln = ln_binomial(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p();
    Ok(ln.exp())
}

/// Ordered detector events of one trajectory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClickRecord {
    pub events: Vec<(f64, Outcome)>,
}

impl ClickRecord {
    /// Number of clicks (encounters with an outcome other than `none`).
    pub fn clicks(&self) -> usize {
        self.events.iter().filter(|(_, o)| *o != Outcome::None).count()
    }

    /// Time of the first click, if any.
    pub fn first_click(&self) -> Option<f64> {
        self.events.iter().find(|(_, o)| *o != Outcome::None).map(|(t, _)| *t)
    }
}

/// What a trajectory simulated in dark mode does when a click occurs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DarkPolicy {
    /// Stop the trajectory and exclude it from later grid times.
    DiscardAndCount,
    /// Fail the whole run.
    Abort,
}

/// Whether clicks are averaged over or conditioned away.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    Unconditional,
    Dark(DarkPolicy),
}

/// Precomputed ingredients of trajectory simulation.
#[derive(Clone, Debug)]
pub struct TrajectorySetup {
    pub propagator: Propagator,
    /// Hamiltonian eigenbasis for the interaction-frame variant.
    heis: Option<HermitianExp>,
    pub maps: EncounterMaps,
    /// Effect operators `𝓐_o†(1)` of the click maps, in the order of `maps.clicks`.
    effects: Vec<CMat>,
    pub model: RateModel,
    pub grid: Vec<f64>,
    pub conditioning: Conditioning,
}

impl TrajectorySetup {
    pub fn new(
        between: &BetweenGenerator,
        maps: &EncounterMaps,
        eff: &DetectionEfficiencies,
        model: RateModel,
        grid: Vec<f64>,
        conditioning: Conditioning,
    ) -> Result<Self> {
        model.validate()?;
        if between.dim() != maps.dim() {
            return Err(Error::Dimension {
                expected: maps.dim(),
                got: between.dim(),
            });
        }
        if grid.windows(2).any(|w| w[1] < w[0]) || grid.first().is_some_and(|&t| t < 0.0) {
            return Err(Error::param("time grid must be non-negative and non-decreasing"));
        }
        let maps = with_detection(maps, eff)?.compacted();
        let id = CMat::identity(maps.dim(), maps.dim());
        let effects = maps.clicks.iter().map(|(_, a)| a.adjoint().apply(&id)).collect();
        let heis = between
            .dissipator
            .is_none()
            .then(|| HermitianExp::new(&between.hamiltonian));
        Ok(Self {
            propagator: between.propagator(),
            heis,
            maps,
            effects,
            model,
            grid,
            conditioning,
        })
    }

    pub fn dim(&self) -> usize {
        self.maps.dim()
    }

    fn t_end(&self) -> f64 {
        self.grid.last().copied().unwrap_or(0.0)
    }
}

/// One simulated trajectory.
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// State at each grid time; `None` after the trajectory was conditioned away.
    pub states: Vec<Option<CMat>>,
    pub record: ClickRecord,
    /// Time of the click that ended a dark trajectory.
    pub conditioned_away_at: Option<f64>,
}

/// Samples an outcome of the instrument and returns it with the updated
/// (normalized) state. Outcome probabilities come from the effect operators
/// through `probability`; only the sampled map is applied.
fn apply_encounter<R: Rng + ?Sized>(
    setup: &TrajectorySetup,
    rng: &mut R,
    probability: impl Fn(&CMat) -> f64,
    transform: impl Fn(&SuperOp) -> CMat,
) -> Result<(Outcome, CMat)> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut chosen = None;
    for ((o, a), e) in setup.maps.clicks.iter().zip(&setup.effects) {
        acc += probability(e);
        if u < acc {
            chosen = Some((*o, a));
            break;
        }
    }
    let (o, map) = chosen.unwrap_or((Outcome::None, &setup.maps.a_0));
    let out = transform(map);
    let p = out.trace().re;
    if p <= crate::qcore::ZERO_TRACE {
        return Err(Error::ZeroTrace(p));
    }
    Ok((o, hermitize(&out.unscale(p))))
}

enum Picture<'a> {
    Schrodinger,
    Heisenberg(&'a HermitianExp),
}

fn simulate<R: Rng + ?Sized>(
    setup: &TrajectorySetup,
    rho0: &CMat,
    rng: &mut R,
    picture: Picture,
) -> Result<Trajectory> {
    let times = sample_encounters(&setup.model, setup.t_end(), rng);
    let mut record = ClickRecord::default();
    let mut states = Vec::with_capacity(setup.grid.len());
    let mut rho = rho0.clone();
    let mut t_now = 0.0;
    let mut ev = times.iter().peekable();
    let mut dead: Option<f64> = None;
    let advance = |rho: &CMat, from: f64, to: f64| -> CMat {
        match picture {
            Picture::Schrodinger => setup.propagator.evolve(rho, to - from),
            Picture::Heisenberg(_) => rho.clone(),
        }
    };
    for &tg in &setup.grid {
        while let Some(&&te) = ev.peek() {
            if te > tg || dead.is_some() {
                break;
            }
            ev.next();
            rho = advance(&rho, t_now, te);
            t_now = te;
            let (o, next) = match picture {
                Picture::Schrodinger => apply_encounter(setup, rng, |e| trace_product(e, &rho).re, |a| a.apply(&rho))?,
                Picture::Heisenberg(e) => {
                    let u = e.unitary(te);
                    let ud = u.adjoint();
                    apply_encounter(
                        setup,
                        rng,
                        |eff| trace_product(&(&ud * eff * &u), &rho).re,
                        |a| &ud * a.apply(&(&u * &rho * &ud)) * &u,
                    )?
                }
            };
            record.events.push((te, o));
            if o != Outcome::None {
                if let Conditioning::Dark(policy) = setup.conditioning {
                    if policy == DarkPolicy::Abort {
                        return Err(Error::ImpossibleRecord(format!(
                            "click {} at t = {te} during a dark run",
                            o.label()
                        )));
                    }
                    dead = Some(te);
                    break;
                }
            }
            rho = next;
        }
        if dead.is_some() {
            states.push(None);
            continue;
        }
        rho = advance(&rho, t_now, tg);
        t_now = tg;
        let snapshot = match picture {
            Picture::Schrodinger => rho.clone(),
            Picture::Heisenberg(e) => e.evolve(&rho, tg),
        };
        states.push(Some(snapshot));
    }
    Ok(Trajectory {
        states,
        record,
        conditioned_away_at: dead,
    })
}

fn check_initial(rho0: &CMat, setup: &TrajectorySetup, ops: &SubspaceOps) -> Result<()> {
    crate::qcore::require_dim(rho0, setup.dim())?;
    check_state(rho0)?;
    let tr = rho0.trace().re;
    if (tr - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidState(format!("initial state trace {tr} ≠ 1")));
    }
    require_inicon(rho0, ops)
}

/// Simulates one trajectory in the Schrödinger picture.
pub fn run_trajectory<R: Rng + ?Sized>(
    setup: &TrajectorySetup,
    rho0: &CMat,
    ops: &SubspaceOps,
    rng: &mut R,
) -> Result<Trajectory> {
    check_initial(rho0, setup, ops)?;
    simulate(setup, rho0, rng, Picture::Schrodinger)
}

/// Simulates one trajectory with encounter maps conjugated into the
/// interaction frame, `𝓐_H(t) = 𝓤†(t)𝓐𝓤(t)`, and transforms back at the grid
/// times. Consumes the random stream exactly like [`run_trajectory`].
pub fn run_trajectory_heisenberg<R: Rng + ?Sized>(
    setup: &TrajectorySetup,
    rho0: &CMat,
    ops: &SubspaceOps,
    rng: &mut R,
) -> Result<Trajectory> {
    check_initial(rho0, setup, ops)?;
    let e = setup
        .heis
        .as_ref()
        .ok_or_else(|| Error::param("interaction-frame trajectories need a purely unitary between-generator"))?;
    simulate(setup, rho0, rng, Picture::Heisenberg(e))
}

/// The random stream of trajectory `index` under master seed `seed`.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Elementwise Neumaier-compensated sum of complex matrices.
#[derive(Clone, Debug)]
struct CompensatedSum {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl CompensatedSum {
    fn new(len: usize) -> Self {
        Self {
            sum: vec![0.0; len],
            comp: vec![0.0; len],
        }
    }

    fn add_value(&mut self, i: usize, x: f64) {
        let s = self.sum[i];
        let t = s + x;
        if s.abs() >= x.abs() {
            self.comp[i] += (s - t) + x;
        } else {
            self.comp[i] += (x - t) + s;
        }
        self.sum[i] = t;
    }

    fn merge(&mut self, other: &CompensatedSum) {
        for i in 0..self.sum.len() {
            self.add_value(i, other.sum[i]);
            self.add_value(i, other.comp[i]);
        }
    }

    fn value(&self, i: usize) -> f64 {
        self.sum[i] + self.comp[i]
    }
}

/// Per-grid-time sums of `Re ρ`, `Im ρ` and their squares, plus counts.
#[derive(Clone, Debug)]
struct Accumulator {
    dim: usize,
    first: Vec<CompensatedSum>,
    second: Vec<CompensatedSum>,
    counts: Vec<u64>,
    discarded: u64,
    clicks: BTreeMap<usize, u64>,
    outcome_counts: BTreeMap<Outcome, u64>,
}

impl Accumulator {
    fn new(n_grid: usize, dim: usize) -> Self {
        let len = 2 * dim * dim;
        Self {
            dim,
            first: vec![CompensatedSum::new(len); n_grid],
            second: vec![CompensatedSum::new(len); n_grid],
            counts: vec![0; n_grid],
            discarded: 0,
            clicks: BTreeMap::new(),
            outcome_counts: BTreeMap::new(),
        }
    }

    fn add(&mut self, traj: &Trajectory) {
        let d2 = self.dim * self.dim;
        for (k, s) in traj.states.iter().enumerate() {
            if let Some(rho) = s {
                self.counts[k] += 1;
                for (i, z) in rho.iter().enumerate() {
                    self.first[k].add_value(i, z.re);
                    self.first[k].add_value(d2 + i, z.im);
                    self.second[k].add_value(i, z.re * z.re);
                    self.second[k].add_value(d2 + i, z.im * z.im);
                }
            }
        }
        if traj.conditioned_away_at.is_some() {
            self.discarded += 1;
        }
        *self.clicks.entry(traj.record.clicks()).or_default() += 1;
        for (_, o) in &traj.record.events {
            *self.outcome_counts.entry(*o).or_default() += 1;
        }
    }

    fn merge(&mut self, other: &Accumulator) {
        for k in 0..self.counts.len() {
            self.first[k].merge(&other.first[k]);
            self.second[k].merge(&other.second[k]);
            self.counts[k] += other.counts[k];
        }
        self.discarded += other.discarded;
        for (k, v) in &other.clicks {
            *self.clicks.entry(*k).or_default() += v;
        }
        for (k, v) in &other.outcome_counts {
            *self.outcome_counts.entry(*k).or_default() += v;
        }
    }
}

/// Ensemble average over trajectories.
#[derive(Clone, Debug)]
pub struct EnsembleResult {
    pub grid: Vec<f64>,
    /// Mean state per grid time (over trajectories still present there).
    pub mean: Vec<CMat>,
    /// Elementwise standard error: `Re` part holds the error of `Re ρ_ab`,
    /// `Im` part the error of `Im ρ_ab`.
    pub stderr: Vec<CMat>,
    /// Trajectories contributing at each grid time.
    pub counts: Vec<u64>,
    pub n_traj: u64,
    /// Dark runs: trajectories ended by a click.
    pub discarded: u64,
    /// Histogram of the number of clicks per trajectory.
    pub click_histogram: BTreeMap<usize, u64>,
    /// Total number of encounters per outcome label.
    pub outcome_counts: BTreeMap<Outcome, u64>,
}

impl EnsembleResult {
    /// `⟨Q⟩` and its standard error at grid index `k` from the sample of
    /// per-trajectory expectations (computed from the stored moments only
    /// for diagonal projectors).
    pub fn expectation(&self, k: usize, q: &CMat) -> f64 {
        crate::qcore::trace_product(&self.mean[k], q).re
    }

    /// Standard error of `Tr(Qρ)` for a diagonal 0/1 projector `q`.
    pub fn projector_stderr(&self, k: usize, q: &CMat) -> f64 {
        let n = self.counts[k] as f64;
        if n < 2.0 {
            return f64::NAN;
        }
        let p = self.expectation(k, q).clamp(0.0, 1.0);
        // A projector expectation lies in [0, 1]; its variance is at most p(1−p).
        (p * (1.0 - p) / n).sqrt()
    }

    /// Fraction of trajectories still dark at grid index `k`.
    pub fn survival(&self, k: usize) -> f64 {
        self.counts[k] as f64 / self.n_traj as f64
    }
}

/// Trajectories per deterministic reduction chunk.
pub const CHUNK: u64 = 64;

/// Averages `n_traj` trajectories. Trajectory `i` uses [`trajectory_rng`]`(seed, i)`.
/// `threads = None` uses the global rayon pool.
pub fn ensemble_average(
    setup: &TrajectorySetup,
    rho0: &CMat,
    ops: &SubspaceOps,
    n_traj: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<EnsembleResult> {
    ensemble_average_with(setup, rho0, ops, n_traj, seed, threads, false)
}

/// As [`ensemble_average`], simulating in the interaction frame.
pub fn ensemble_average_heisenberg(
    setup: &TrajectorySetup,
    rho0: &CMat,
    ops: &SubspaceOps,
    n_traj: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<EnsembleResult> {
    ensemble_average_with(setup, rho0, ops, n_traj, seed, threads, true)
}

fn ensemble_average_with(
    setup: &TrajectorySetup,
    rho0: &CMat,
    ops: &SubspaceOps,
    n_traj: u64,
    seed: u64,
    threads: Option<usize>,
    heisenberg: bool,
) -> Result<EnsembleResult> {
    if n_traj == 0 {
        return Err(Error::param("n_traj must be ≥ 1"));
    }
    check_initial(rho0, setup, ops)?;
    let n_chunks = n_traj.div_ceil(CHUNK);
    let d = setup.dim();
    let ng = setup.grid.len();
    let work = || -> Result<Vec<Accumulator>> {
        (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = Accumulator::new(ng, d);
                for i in c * CHUNK..((c + 1) * CHUNK).min(n_traj) {
                    let mut rng = trajectory_rng(seed, i);
                    let traj = if heisenberg {
                        run_trajectory_heisenberg(setup, rho0, ops, &mut rng)?
                    } else {
                        run_trajectory(setup, rho0, ops, &mut rng)?
                    };
                    acc.add(&traj);
                }
                Ok(acc)
            })
            .collect()
    };
    let partials = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::param(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let mut total = Accumulator::new(ng, d);
    for p in &partials {
        total.merge(p);
    }
    let d2 = d * d;
    let mut mean = Vec::with_capacity(ng);
    let mut stderr = Vec::with_capacity(ng);
    for k in 0..ng {
        let n = total.counts[k] as f64;
        let mut m = CMat::zeros(d, d);
        let mut e = CMat::zeros(d, d);
        if n > 0.0 {
            for i in 0..d2 {
                let mr = total.first[k].value(i) / n;
                let mi = total.first[k].value(d2 + i) / n;
                let var = |s2: f64, mu: f64| {
                    if n > 1.0 {
                        ((s2 / n - mu * mu) * n / (n - 1.0)).max(0.0)
                    } else {
                        f64::NAN
                    }
                };
                let vr = var(total.second[k].value(i), mr);
                let vi = var(total.second[k].value(d2 + i), mi);
                m[i] = C64::new(mr, mi);
                e[i] = C64::new((vr / n).sqrt(), (vi / n).sqrt());
            }
        }
        mean.push(m);
        stderr.push(e);
    }
    Ok(EnsembleResult {
        grid: setup.grid.clone(),
        mean,
        stderr,
        counts: total.counts,
        n_traj,
        discarded: total.discarded,
        click_histogram: total.clicks,
        outcome_counts: total.outcome_counts,
    })
}

/// Counts of encounters per sample over `n` independent samples of
/// `(0, t_end]`: `hist[k]` is the number of samples with exactly `k` encounters.
pub fn encounter_count_histogram(model: &RateModel, t_end: f64, n: u64, seed: u64) -> Vec<u64> {
    let n_chunks = n.div_ceil(CHUNK * 64);
    let partial: Vec<Vec<u64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut h = Vec::new();
            let mut rng = trajectory_rng(seed, c);
            for _ in c * CHUNK * 64..((c + 1) * CHUNK * 64).min(n) {
                let k = sample_encounters(model, t_end, &mut rng).len();
                if h.len() <= k {
                    h.resize(k + 1, 0);
                }
                h[k] += 1;
            }
            h
        })
        .collect();
    let mut out: Vec<u64> = Vec::new();
    for h in partial {
        if out.len() < h.len() {
            out.resize(h.len(), 0);
        }
        for (k, v) in h.into_iter().enumerate() {
            out[k] += v;
        }
    }
    out
}

/// Right-hand side of the unconditional master equation
/// `ρ̇ = 𝓛_betw ρ + r(t)(𝓐_CPT − 1)ρ` for the ensemble oracle.
pub fn unconditional_generator(between: &BetweenGenerator, maps: &EncounterMaps, rate: f64) -> SuperOp {
    &between.superop() + &crate::encounter::encounter_generator(maps, rate)
}
