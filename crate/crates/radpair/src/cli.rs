//! Scenario-driven command-line frontend: TOML scenarios, one subcommand per
//! model family, seeded deterministic runs, CSV output with a metadata
//! sidecar.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::conditional::{conditional_generator, dark_closed_form, DarkModel, DarkPopulations};
use crate::encounter::{
    average_params, build_maps, classify, derive_map_params, DetectionEfficiencies, EncounterCoupling,
    EncounterMapParams, EncounterMaps, Outcome,
};
use crate::error::{Error, Result};
use crate::qcore::{build_subspace_ops, c, max_abs, trace_distance, CMat, SubspaceOps, SuperOp, C64};
use crate::qcore::{default_step, rk4_grid, NonlinearFlow};
use crate::reactops::{closed_form_full, generator_full, ReactionRates, SymmetryMode};
use crate::spinham::{build_hamiltonian, BetweenGenerator, Nucleus, SpinSystemSpec};
use crate::stochastic::{
    ensemble_average, run_trajectory, trajectory_rng, unconditional_generator, Conditioning, DarkPolicy, RateKind,
    RateModel, TrajectorySetup,
};
use crate::yields::{magnetic_sensitivity, yield_integral, YieldDistribution, YieldFunctional, YieldSpec};

/// Run modes; each is also a subcommand.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Me,
    Dark,
    Traj,
    Ensemble,
    Yield,
    Classify,
    Oracle,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Me => "me",
            Mode::Dark => "dark",
            Mode::Traj => "traj",
            Mode::Ensemble => "ensemble",
            Mode::Yield => "yield",
            Mode::Classify => "classify",
            Mode::Oracle => "oracle",
        }
    }

    fn stochastic(self) -> bool {
        matches!(self, Mode::Traj | Mode::Ensemble)
    }
}

fn unit_g() -> [f64; 2] {
    [1.0, 1.0]
}

fn is_unit_g(g: &[f64; 2]) -> bool {
    *g == unit_g()
}

fn one() -> f64 {
    1.0
}

fn is_zero4(v: &[f64; 4]) -> bool {
    v.iter().all(|&x| x == 0.0)
}

/// A full scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub system: SystemSection,
    #[serde(default)]
    pub reaction: ReactionSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionSection>,
    pub rate: RateSection,
    pub run: RunSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    /// Field vector (angular frequency units).
    pub field: [f64; 3],
    #[serde(default = "unit_g", skip_serializing_if = "is_unit_g")]
    pub g_factors: [f64; 2],
    #[serde(default)]
    pub initial: InitialPopulations,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nuclei: Vec<NucleusSection>,
}

/// Initial populations of the singlet, the (equally populated) triplet
/// levels and the product; nuclei start maximally mixed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialPopulations {
    pub singlet: f64,
    pub triplet: f64,
    pub product: f64,
}

impl Default for InitialPopulations {
    fn default() -> Self {
        Self {
            singlet: 1.0,
            triplet: 0.0,
            product: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NucleusSection {
    /// 1 or 2.
    pub radical: u8,
    pub spin: f64,
    /// Isotropic coupling constant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    /// Full hyperfine tensor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tensor: Option<[[f64; 3]; 3]>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RatesSection>,
    /// One entry: a single encounter type; several: a weighted average.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coupling: Vec<CouplingSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    pub r: [f64; 4],
    #[serde(default, skip_serializing_if = "is_zero4")]
    pub d: [f64; 4],
    pub mode: SymmetryMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSection {
    #[serde(default = "one")]
    pub weight: f64,
    pub kappa: f64,
    pub pi: [f64; 4],
    #[serde(default, skip_serializing_if = "is_zero4")]
    pub pi_im: [f64; 4],
    #[serde(default, skip_serializing_if = "is_zero4")]
    pub delta: [f64; 4],
    #[serde(default, skip_serializing_if = "is_zero4")]
    pub delta_im: [f64; 4],
    pub mode: SymmetryMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSection {
    /// Efficiencies of the S, T0, T+, T− clicks.
    pub eta: [f64; 4],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKindName {
    #[default]
    Constant,
    Exponential,
    Algebraic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSection {
    /// Encounter rate `r` (at `t = 0`).
    pub r: f64,
    #[serde(default)]
    pub kind: RateKindName,
    /// Decline constant of the exponential/algebraic models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_inf: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningName {
    #[default]
    Unconditional,
    /// Keep dark trajectories, count the ones ended by a click.
    Dark,
    /// Abort the run on the first click.
    DarkStrict,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalName {
    #[default]
    SingletFidelity,
    Concurrence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    /// Output grid `0, t_end/(points−1), …, t_end`; dark runs read it in units of `1/r`.
    pub t_end: f64,
    pub points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_traj: Option<u64>,
    /// Cloud size for the click-record run of `ensemble`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_cloud: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default)]
    pub conditioning: ConditioningName,
    #[serde(default)]
    pub functional: FunctionalName,
    /// Field step for the yield sensitivity; omitted means no sensitivity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_step: Option<f64>,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

/// Parses and validates a scenario.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let sc: Scenario = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        Error::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    sc.validate()?;
    Ok(sc)
}

/// Scenario as TOML text; `parse_scenario(&render(s)) == s`.
pub fn render(sc: &Scenario) -> Result<String> {
    toml::to_string(sc).map_err(|e| Error::Invariant(format!("scenario serialization failed: {e}")))
}

fn field_err(field: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::InvalidParameter(m) => Error::validation(field, m),
        other => other,
    }
}

impl Scenario {
    /// Semantic checks that do not depend on the run mode.
    pub fn validate(&self) -> Result<()> {
        let has_rates = self.reaction.rates.is_some();
        let has_coupling = !self.reaction.coupling.is_empty();
        if has_rates == has_coupling {
            return Err(Error::validation(
                "reaction",
                "exactly one reaction model must be given ([reaction.rates] or [[reaction.coupling]])",
            ));
        }
        self.spin_system()?;
        let p = self.system.initial;
        if [p.singlet, p.triplet, p.product].iter().any(|x| !(*x >= 0.0))
            || (p.singlet + p.triplet + p.product - 1.0).abs() > 1e-12
        {
            return Err(Error::validation(
                "system.initial",
                "populations must be ≥ 0 and sum to 1",
            ));
        }
        if let Some(r) = &self.reaction.rates {
            self.reaction_rates(r)?;
        }
        if has_coupling {
            self.coupling_params()?;
        }
        self.efficiencies()?;
        self.rate_model()?;
        let run = &self.run;
        if !(run.t_end >= 0.0) || !run.t_end.is_finite() {
            return Err(Error::validation("run.t_end", "must be finite and ≥ 0"));
        }
        if run.points < 1 {
            return Err(Error::validation("run.points", "must be ≥ 1"));
        }
        if run.n_traj == Some(0) {
            return Err(Error::validation("run.n_traj", "must be ≥ 1"));
        }
        if run.n_cloud == Some(0) {
            return Err(Error::validation("run.n_cloud", "must be ≥ 1"));
        }
        if let Some(h) = run.field_step {
            if !(h > 0.0) {
                return Err(Error::validation("run.field_step", "must be > 0"));
            }
        }
        if let Some(m) = run.mode {
            self.validate_for(m)?;
        }
        Ok(())
    }

    /// Checks for running in mode `m`.
    pub fn validate_for(&self, m: Mode) -> Result<()> {
        if m.stochastic() && self.run.seed.is_none() {
            return Err(Error::validation(
                "run.seed",
                format!("mode `{}` needs a seed", m.name()),
            ));
        }
        let coupling = !self.reaction.coupling.is_empty();
        match m {
            Mode::Ensemble if self.run.n_traj.is_none() => {
                Err(Error::validation("run.n_traj", "mode `ensemble` needs n_traj"))
            }
            Mode::Dark | Mode::Traj | Mode::Ensemble | Mode::Classify if !coupling => Err(Error::validation(
                "reaction",
                format!("mode `{}` needs an encounter coupling", m.name()),
            )),
            Mode::Me | Mode::Oracle if coupling && self.rate.kind != RateKindName::Constant => Err(Error::validation(
                "rate.kind",
                format!("mode `{}` with encounter maps needs a constant rate", m.name()),
            )),
            Mode::Yield if self.run.points < 1 => Err(Error::validation("run.points", "must be ≥ 1")),
            _ => Ok(()),
        }
    }

    pub fn spin_system(&self) -> Result<SpinSystemSpec> {
        let mut spec = SpinSystemSpec::zeeman(self.system.field);
        spec.g_factors = self.system.g_factors;
        for (i, n) in self.system.nuclei.iter().enumerate() {
            let field = format!("system.nuclei[{i}]");
            if !(1..=2).contains(&n.radical) {
                return Err(Error::validation(&field, "radical must be 1 or 2"));
            }
            let nucleus = match (n.a, n.tensor) {
                (Some(a), None) => Nucleus::isotropic(n.spin, a),
                (None, Some(t)) => Nucleus::new(n.spin, t),
                _ => return Err(Error::validation(&field, "give exactly one of `a` and `tensor`")),
            }
            .map_err(field_err(&field))?;
            spec = spec.with_nucleus(n.radical as usize - 1, nucleus);
        }
        spec.layout().map_err(field_err("system.nuclei"))?;
        Ok(spec)
    }

    fn reaction_rates(&self, r: &RatesSection) -> Result<ReactionRates> {
        let rates = ReactionRates {
            r: r.r,
            d: r.d,
            mode: r.mode,
        };
        rates.validate().map_err(field_err("reaction.rates"))?;
        Ok(rates)
    }

    pub fn couplings(&self) -> Result<Vec<(f64, EncounterCoupling)>> {
        self.reaction
            .coupling
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let cx = |re: [f64; 4], im: [f64; 4]| std::array::from_fn(|k| C64::new(re[k], im[k]));
                EncounterCoupling::new(s.kappa, cx(s.pi, s.pi_im), cx(s.delta, s.delta_im), s.mode)
                    .map(|cp| (s.weight, cp))
                    .map_err(field_err(&format!("reaction.coupling[{i}]")))
            })
            .collect()
    }

    /// Encounter coefficients (averaged when several couplings are given).
    pub fn coupling_params(&self) -> Result<EncounterMapParams> {
        let cps = self.couplings()?;
        if cps.len() == 1 {
            if cps[0].0 != 1.0 {
                return Err(Error::validation(
                    "reaction.coupling[0].weight",
                    "a single coupling must have weight 1",
                ));
            }
            Ok(derive_map_params(&cps[0].1))
        } else {
            average_params(&cps).map_err(field_err("reaction.coupling"))
        }
    }

    pub fn efficiencies(&self) -> Result<DetectionEfficiencies> {
        match &self.detection {
            None => Ok(DetectionEfficiencies::perfect()),
            Some(d) => DetectionEfficiencies::per_level(d.eta).map_err(field_err("detection.eta")),
        }
    }

    pub fn rate_model(&self) -> Result<RateModel> {
        let s = &self.rate;
        let kind = match (s.kind, s.a) {
            (RateKindName::Constant, None) => RateKind::Constant,
            (RateKindName::Exponential, Some(a)) => RateKind::Exponential { a },
            (RateKindName::Algebraic, Some(a)) => RateKind::Algebraic { a },
            (RateKindName::Constant, Some(_)) => {
                return Err(Error::validation("rate.a", "a constant rate takes no decline constant"))
            }
            (_, None) => return Err(Error::validation("rate.a", "declining rate models need `a`")),
        };
        if !(s.r > 0.0) {
            return Err(Error::validation("rate.r", "must be > 0"));
        }
        RateModel::new(s.r, kind, s.t_inf).map_err(field_err("rate"))
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.run.points;
        if n == 1 {
            return vec![self.run.t_end];
        }
        (0..n).map(|k| self.run.t_end * k as f64 / (n - 1) as f64).collect()
    }
}

/// Scenario resolved into operators.
pub struct Resolved {
    pub spec: SpinSystemSpec,
    pub ops: SubspaceOps,
    pub between: BetweenGenerator,
    pub rho0: CMat,
    pub eff: DetectionEfficiencies,
    pub model: RateModel,
    pub grid: Vec<f64>,
    pub reaction: ResolvedReaction,
}

pub enum ResolvedReaction {
    Rates(ReactionRates),
    Encounter {
        params: EncounterMapParams,
        maps: EncounterMaps,
    },
}

fn initial_state(p: &InitialPopulations, ops: &SubspaceOps) -> CMat {
    let n = ops.layout.nuclear_dim() as f64;
    &ops.q_s * c(p.singlet / n) + &ops.q_t * c(p.triplet / (3.0 * n)) + &ops.q_p * c(p.product / n)
}

/// Builds every operator a run needs.
pub fn resolve(sc: &Scenario) -> Result<Resolved> {
    let spec = sc.spin_system()?;
    let layout = spec.layout()?;
    let ops = build_subspace_ops(&layout);
    let between = build_hamiltonian(&spec, &layout).map_err(field_err("system"))?;
    let rho0 = initial_state(&sc.system.initial, &ops);
    let reaction = match &sc.reaction.rates {
        Some(r) => ResolvedReaction::Rates(sc.reaction_rates(r)?),
        None => {
            let params = sc.coupling_params()?;
            let maps = build_maps(&params, &ops).map_err(field_err("reaction.coupling"))?;
            ResolvedReaction::Encounter { params, maps }
        }
    };
    Ok(Resolved {
        spec,
        ops,
        between,
        rho0,
        eff: sc.efficiencies()?,
        model: sc.rate_model()?,
        grid: sc.grid(),
        reaction,
    })
}

/// C-style `%.12e`.
pub fn fmt_sci(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let s = format!("{x:.12e}");
    let (mant, exp) = s.split_once('e').expect("exponent");
    let e: i32 = exp.parse().expect("integer exponent");
    format!("{mant}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
}

/// CSV table with a fixed header.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|&x| fmt_sci(x)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

/// Result of a run before it is written out.
#[derive(Debug)]
pub struct RunOutput {
    pub mode: Mode,
    pub tables: Vec<Table>,
    /// Human-readable lines echoed to stdout.
    pub log: Vec<String>,
    /// Resolved parameters for the sidecar.
    pub resolved: toml::Table,
}

const POP_HEADER: [&str; 7] = ["t", "pS", "pT0", "pTp", "pTm", "pP", "trace"];

fn populations(t: f64, rho: &CMat, ops: &SubspaceOps) -> Vec<f64> {
    let tr = |q: &CMat| crate::qcore::trace_product(rho, q).re;
    vec![
        t,
        tr(&ops.q_s),
        tr(&ops.q_t0),
        tr(&ops.q_tp),
        tr(&ops.q_tm),
        tr(&ops.q_p),
        rho.trace().re,
    ]
}

fn params_table(p: &EncounterMapParams) -> toml::Table {
    let mut t = toml::Table::new();
    let arr = |v: &[f64]| toml::Value::Array(v.iter().map(|&x| toml::Value::Float(x)).collect());
    t.insert("r_tilde".into(), arr(&p.r_tilde));
    t.insert("d_tilde".into(), arr(&p.d_tilde));
    t.insert("eta_tilde".into(), toml::Value::Float(p.eta_tilde));
    t.insert("eta_tilde_j".into(), arr(&p.eta_tilde_j));
    if let Some(phi) = p.phi {
        t.insert("phi".into(), arr(&phi));
    }
    t.insert("class".into(), toml::Value::String(classify(p).label().into()));
    t
}

fn reaction_generator(res: &Resolved) -> (SuperOp, f64) {
    match &res.reaction {
        ResolvedReaction::Rates(r) => (
            &res.between.superop() + &generator_full(r, &res.ops).expect("validated rates"),
            r.max_rate(),
        ),
        ResolvedReaction::Encounter { maps, .. } => (
            unconditional_generator(&res.between, maps, res.model.r0),
            2.0 * res.model.r0,
        ),
    }
}

fn run_me(res: &Resolved) -> Result<RunOutput> {
    let (gen, max_rate) = reaction_generator(res);
    let step = default_step(max_rate, res.between.h_norm());
    let states = NonlinearFlow::new(gen, step).solve_linear(&res.rho0, &res.grid);
    let mut table = Table::new("me", &POP_HEADER);
    for (t, rho) in res.grid.iter().zip(&states) {
        table.rows.push(populations(*t, rho, &res.ops));
    }
    let last = states.last().map(|r| r.trace().re).unwrap_or(1.0);
    if (last - 1.0).abs() > 1e-8 {
        return Err(Error::Invariant(format!("master equation lost trace: {last}")));
    }
    Ok(RunOutput {
        mode: Mode::Me,
        tables: vec![table],
        log: vec![format!("me: {} grid points, step {}", res.grid.len(), fmt_sci(step))],
        resolved: toml::Table::new(),
    })
}

fn encounter_parts(res: &Resolved) -> (&EncounterMapParams, &EncounterMaps) {
    match &res.reaction {
        ResolvedReaction::Encounter { params, maps } => (params, maps),
        ResolvedReaction::Rates(_) => unreachable!("mode validated to need an encounter coupling"),
    }
}

fn run_dark(sc: &Scenario, res: &Resolved) -> Result<RunOutput> {
    let (params, _) = encounter_parts(res);
    let model = DarkModel::new(params, &res.eff).map_err(field_err("reaction.coupling"))?;
    let p = sc.system.initial;
    let pops = DarkPopulations::new(p.singlet, p.triplet, p.product)?;
    let mut table = Table::new("dark", &["rt", "pD", "pRD", "pR_given_D"]);
    for &rt in &res.grid {
        let s = dark_closed_form(&model, Some(pops), None, 1.0, rt)?;
        table.rows.push(vec![rt, s.trace_n, s.p_rd, s.trace_r]);
    }
    let mut resolved = params_table(params);
    resolved.insert(
        "eta_d".into(),
        toml::Value::Array(model.eta_d.iter().map(|&x| toml::Value::Float(x)).collect()),
    );
    Ok(RunOutput {
        mode: Mode::Dark,
        tables: vec![table],
        log: vec![format!(
            "dark: {} points up to rt = {}",
            res.grid.len(),
            fmt_sci(sc.run.t_end)
        )],
        resolved,
    })
}

fn conditioning(sc: &Scenario) -> Conditioning {
    match sc.run.conditioning {
        ConditioningName::Unconditional => Conditioning::Unconditional,
        ConditioningName::Dark => Conditioning::Dark(DarkPolicy::DiscardAndCount),
        ConditioningName::DarkStrict => Conditioning::Dark(DarkPolicy::Abort),
    }
}

fn outcome_code(o: Outcome) -> f64 {
    match o {
        Outcome::None => 0.0,
        Outcome::S => 1.0,
        Outcome::T => 2.0,
        Outcome::T0 => 3.0,
        Outcome::Tp => 4.0,
        Outcome::Tm => 5.0,
    }
}

fn run_traj(sc: &Scenario, res: &Resolved, seed: u64) -> Result<RunOutput> {
    let (params, maps) = encounter_parts(res);
    let setup = TrajectorySetup::new(
        &res.between,
        maps,
        &res.eff,
        res.model,
        res.grid.clone(),
        conditioning(sc),
    )?;
    let mut rng = trajectory_rng(seed, 0);
    let traj = run_trajectory(&setup, &res.rho0, &res.ops, &mut rng)?;
    let mut table = Table::new("traj", &POP_HEADER);
    for (t, s) in res.grid.iter().zip(&traj.states) {
        table.rows.push(match s {
            Some(rho) => populations(*t, rho, &res.ops),
            None => {
                let mut r = vec![f64::NAN; POP_HEADER.len()];
                r[0] = *t;
                r
            }
        });
    }
    let mut events = Table::new("events", &["t", "outcome"]);
    for (t, o) in &traj.record.events {
        events.rows.push(vec![*t, outcome_code(*o)]);
    }
    let mut log = vec![format!(
        "traj: {} encounters, {} clicks",
        traj.record.events.len(),
        traj.record.clicks()
    )];
    if let Some(t) = traj.conditioned_away_at {
        log.push(format!("traj: conditioned away by a click at t = {}", fmt_sci(t)));
    }
    let mut resolved = params_table(params);
    resolved.insert(
        "outcome_codes".into(),
        toml::Value::String("0 = no click, 1 = S, 2 = T, 3 = T0, 4 = T+, 5 = T-".into()),
    );
    Ok(RunOutput {
        mode: Mode::Traj,
        tables: vec![table, events],
        log,
        resolved,
    })
}

fn run_ensemble(sc: &Scenario, res: &Resolved, seed: u64, threads: Option<usize>) -> Result<RunOutput> {
    let (params, maps) = encounter_parts(res);
    let n_traj = sc.run.n_traj.expect("validated");
    let setup = TrajectorySetup::new(
        &res.between,
        maps,
        &res.eff,
        res.model,
        res.grid.clone(),
        conditioning(sc),
    )?;
    let ens = ensemble_average(&setup, &res.rho0, &res.ops, n_traj, seed, threads)?;
    let mut header = POP_HEADER.to_vec();
    header.extend(["survival", "pS_stderr"]);
    let mut table = Table::new("ensemble", &header);
    for (k, &t) in res.grid.iter().enumerate() {
        let mut row = if ens.counts[k] > 0 {
            populations(t, &ens.mean[k], &res.ops)
        } else {
            let mut r = vec![f64::NAN; POP_HEADER.len()];
            r[0] = t;
            r
        };
        row.push(ens.survival(k));
        row.push(ens.projector_stderr(k, &res.ops.q_s));
        table.rows.push(row);
    }
    let mut hist = Table::new("clicks", &["clicks", "trajectories"]);
    for (n, count) in &ens.click_histogram {
        hist.rows.push(vec![*n as f64, *count as f64]);
    }
    let mut tables = vec![table, hist];
    let mut log = vec![format!(
        "ensemble: {n_traj} trajectories, {} conditioned away",
        ens.discarded
    )];
    if let Some(n) = sc.run.n_cloud {
        let dt = if res.grid.len() > 1 {
            res.grid[1] - res.grid[0]
        } else {
            0.0
        };
        let maps_d = crate::encounter::with_detection(maps, &res.eff)?;
        let mut rng = trajectory_rng(seed, u64::MAX);
        let run =
            crate::conditional::simulate_cloud(&res.rho0, &maps_d, n, res.model.r0, dt, res.grid.len() - 1, &mut rng)
                .map_err(|e| match e {
                Error::StepTooLarge(p) => {
                    Error::validation("run.points", format!("cloud step r·dt = {p} exceeds 0.01"))
                }
                other => other,
            })?;
        let mut cloud = Table::new("cloud", &["t", "l", "x", "z", "pS_exact", "pS_sme", "trace_distance"]);
        for k in 0..run.t.len() {
            let tr = |rho: &CMat| crate::qcore::trace_product(rho, &res.ops.q_s).re;
            cloud.rows.push(vec![
                run.t[k],
                run.l[k] as f64,
                run.x[k],
                run.z[k],
                tr(&run.states_exact[k]),
                tr(&run.states_sme[k]),
                trace_distance(&run.states_exact[k], &run.states_sme[k]),
            ]);
        }
        log.push(format!("ensemble: cloud of {n} pairs over {} steps", run.t.len() - 1));
        tables.push(cloud);
    }
    let mut resolved = params_table(params);
    resolved.insert("discarded".into(), toml::Value::Integer(ens.discarded as i64));
    Ok(RunOutput {
        mode: Mode::Ensemble,
        tables,
        log,
        resolved,
    })
}

fn yield_rate(res: &Resolved) -> f64 {
    match &res.reaction {
        // Exponential model: recombination at the singlet rate.
        ResolvedReaction::Rates(r) => r.r[0],
        ResolvedReaction::Encounter { .. } => res.model.r0,
    }
}

fn run_yield(sc: &Scenario, res: &Resolved) -> Result<RunOutput> {
    let rate = yield_rate(res);
    let distribution = match res.model.kind {
        RateKind::Constant => YieldDistribution::Exponential { rate },
        _ => YieldDistribution::FirstEncounter {
            model: res.model,
            experimental: true,
        },
    };
    let functional = match sc.run.functional {
        FunctionalName::SingletFidelity => YieldFunctional::SingletFidelity,
        FunctionalName::Concurrence => YieldFunctional::Concurrence,
    };
    let spec = YieldSpec {
        functional,
        distribution,
    };
    let h = &res.between.hamiltonian;
    let phi = yield_integral(&spec, h, &res.rho0, &res.ops, res.model.t_inf)?;
    let b = sc.system.field;
    let norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut table = Table::new("yield", &["field", "yield", "sensitivity", "sensitivity_error"]);
    let (mut sens, mut err) = (f64::NAN, f64::NAN);
    if let Some(step) = sc.run.field_step {
        let dir = if norm > 0.0 {
            b.map(|x| x / norm)
        } else {
            [0.0, 0.0, 1.0]
        };
        let layout = res.ops.layout.clone();
        let base = res.spec.clone();
        let family = move |x: f64| -> Result<CMat> {
            let mut s = base.clone();
            s.field_b = dir.map(|d| d * x);
            Ok(build_hamiltonian(&s, &layout)?.hamiltonian)
        };
        let s = magnetic_sensitivity(&spec, &family, &res.rho0, &res.ops, norm, step)?;
        sens = s.value;
        err = s.error_estimate;
    }
    table.rows.push(vec![norm, phi, sens, err]);
    let mut resolved = toml::Table::new();
    resolved.insert("rate".into(), toml::Value::Float(rate));
    if !matches!(spec.distribution, YieldDistribution::Exponential { .. }) {
        resolved.insert("experimental_first_encounter".into(), toml::Value::Boolean(true));
    }
    Ok(RunOutput {
        mode: Mode::Yield,
        tables: vec![table],
        log: vec![format!("yield: {}", fmt_sci(phi))],
        resolved,
    })
}

fn run_classify(res: &Resolved) -> Result<RunOutput> {
    let (params, _) = encounter_parts(res);
    let class = classify(params);
    let mut table = Table::new(
        "classify",
        &[
            "phi_S",
            "phi_T0",
            "phi_Tp",
            "phi_Tm",
            "r_S",
            "r_T0",
            "r_Tp",
            "r_Tm",
            "d_S",
            "d_T0",
            "d_Tp",
            "d_Tm",
            "eta_tilde",
        ],
    );
    let mut row: Vec<f64> = params.phi.map_or([f64::NAN; 4], |p| p).to_vec();
    row.extend(params.r_tilde);
    row.extend(params.d_tilde);
    row.push(params.eta_tilde);
    table.rows.push(row);
    Ok(RunOutput {
        mode: Mode::Classify,
        tables: vec![table],
        log: vec![format!("class: {class}")],
        resolved: params_table(params),
    })
}

/// Largest deviation tolerated by the oracle cross-checks.
pub const ORACLE_TOL: f64 = 1e-6;

fn run_oracle(res: &Resolved) -> Result<RunOutput> {
    let mut table = Table::new("oracle", &["check", "max_deviation"]);
    let mut log = Vec::new();
    let mut names = Vec::new();
    let mut record = |name: &str, dev: f64, table: &mut Table| {
        names.push(name.to_string());
        table.rows.push(vec![names.len() as f64, dev]);
        log.push(format!("oracle {}: {name} max deviation {}", names.len(), fmt_sci(dev)));
    };
    let grid = &res.grid;
    match &res.reaction {
        ResolvedReaction::Rates(r) => {
            let g = generator_full(r, &res.ops)?;
            let step = default_step(r.max_rate(), 0.0);
            let num = rk4_grid(|x| g.apply(x), &res.rho0, grid, step);
            let mut dev: f64 = 0.0;
            for (t, rho) in grid.iter().zip(&num) {
                dev = dev.max(max_abs(&(closed_form_full(&res.rho0, r, &res.ops, *t)? - rho)));
            }
            record("reaction closed form vs RK4", dev, &mut table);
        }
        ResolvedReaction::Encounter { params, maps } => {
            let rate = res.model.r0;
            let maps_d = crate::encounter::with_detection(maps, &res.eff)?;
            if let Ok(model) = DarkModel::new(params, &res.eff) {
                let flow = conditional_generator(&maps_d.a_0, rate, None)?;
                let lin = flow.linear();
                let num = rk4_grid(|x| lin.apply(x), &res.rho0, grid, default_step(rate, 0.0));
                let mut dev: f64 = 0.0;
                for (t, rho) in grid.iter().zip(&num) {
                    let s = dark_closed_form(&model, None, Some((&res.rho0, &res.ops)), rate, *t)?;
                    dev = dev.max(max_abs(&(s.rho_n.expect("state given") - rho)));
                }
                record("dark closed form vs RK4", dev, &mut table);
            }
            let gen = unconditional_generator(&BetweenGenerator::trivial(res.ops.dim()), maps, rate);
            let num = NonlinearFlow::new(gen, default_step(2.0 * rate, 0.0)).solve_linear(&res.rho0, grid);
            let tr_dev = num.iter().map(|r| (r.trace().re - 1.0).abs()).fold(0.0, f64::max);
            record("unconditional trace preservation", tr_dev, &mut table);
            record(
                "encounter map trace preservation",
                maps.a_cpt.trace_preservation_defect(),
                &mut table,
            );
        }
    }
    let worst = table.rows.iter().map(|r| r[1]).fold(0.0, f64::max);
    let mut resolved = toml::Table::new();
    resolved.insert(
        "checks".into(),
        toml::Value::Array(names.into_iter().map(toml::Value::String).collect()),
    );
    resolved.insert("tolerance".into(), toml::Value::Float(ORACLE_TOL));
    let out = RunOutput {
        mode: Mode::Oracle,
        tables: vec![table],
        log,
        resolved,
    };
    if !(worst <= ORACLE_TOL) {
        for l in &out.log {
            eprintln!("{l}");
        }
        return Err(Error::Invariant(format!(
            "oracle deviation {} exceeds {}",
            fmt_sci(worst),
            fmt_sci(ORACLE_TOL)
        )));
    }
    Ok(out)
}

/// Runs a scenario in mode `mode` with optional seed override.
pub fn run(sc: &Scenario, mode: Mode, threads: Option<usize>) -> Result<RunOutput> {
    if let Some(m) = sc.run.mode {
        if m != mode {
            return Err(Error::validation(
                "run.mode",
                format!("scenario is for `{}`, not `{}`", m.name(), mode.name()),
            ));
        }
    }
    sc.validate_for(mode)?;
    let res = resolve(sc)?;
    let seed = sc.run.seed.unwrap_or(0);
    match mode {
        Mode::Me => run_me(&res),
        Mode::Dark => run_dark(sc, &res),
        Mode::Traj => run_traj(sc, &res, seed),
        Mode::Ensemble => run_ensemble(sc, &res, seed, threads),
        Mode::Yield => run_yield(sc, &res),
        Mode::Classify => run_classify(&res),
        Mode::Oracle => run_oracle(&res),
    }
}

#[derive(Serialize)]
struct RunInfo<'a> {
    mode: &'a str,
    seed: Option<u64>,
    threads: Option<usize>,
    code_version: &'a str,
    wall_time_s: f64,
    files: Vec<String>,
    log: &'a [String],
}

#[derive(Serialize)]
struct Metadata<'a> {
    run_info: RunInfo<'a>,
    resolved: &'a toml::Table,
    scenario: &'a Scenario,
}

/// Writes the CSV files and `metadata.toml` into `dir`; returns the paths.
pub fn write_output(
    dir: &Path,
    sc: &Scenario,
    out: &RunOutput,
    threads: Option<usize>,
    wall_time_s: f64,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for t in &out.tables {
        let p = dir.join(format!("{}.csv", t.name));
        std::fs::write(&p, t.to_csv())?;
        paths.push(p);
    }
    let meta = Metadata {
        run_info: RunInfo {
            mode: out.mode.name(),
            seed: sc.run.seed,
            threads,
            code_version: env!("CARGO_PKG_VERSION"),
            wall_time_s,
            files: out.tables.iter().map(|t| format!("{}.csv", t.name)).collect(),
            log: &out.log,
        },
        resolved: &out.resolved,
        scenario: sc,
    };
    let text = toml::to_string(&meta).map_err(|e| Error::Invariant(format!("metadata serialization failed: {e}")))?;
    let p = dir.join("metadata.toml");
    std::fs::write(&p, text)?;
    paths.push(p);
    Ok(paths)
}

/// Process exit code for an error: 2 for input problems, 3 for violated
/// numerical invariants.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Invariant(_)
        | Error::NotCompletelyPositive(_)
        | Error::ZeroTrace(_)
        | Error::ImpossibleRecord(_)
        | Error::InvalidState(_) => 3,
        Error::Parse { .. }
        | Error::Validation { .. }
        | Error::InvalidParameter(_)
        | Error::Dimension { .. }
        | Error::InitialCondition(_)
        | Error::StepTooLarge(_)
        | Error::Io(_) => 2,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "radpair",
    version,
    about = "Radical-pair open-system simulations from TOML scenarios"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Unconditional master equation.
    Me(CommonArgs),
    /// Closed-form dark (no-click) evolution.
    Dark(CommonArgs),
    /// One stochastic trajectory.
    Traj(CommonArgs),
    /// Trajectory ensemble average (and optional cloud click record).
    Ensemble(CommonArgs),
    /// Exponential-model yield and field sensitivity.
    Yield(CommonArgs),
    /// Classify the encounter.
    Classify(CommonArgs),
    /// Cross-check closed forms against integrators.
    Oracle(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `run.out` (default `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; affects speed only.
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Command {
    pub fn split(&self) -> (Mode, &CommonArgs) {
        match self {
            Command::Me(a) => (Mode::Me, a),
            Command::Dark(a) => (Mode::Dark, a),
            Command::Traj(a) => (Mode::Traj, a),
            Command::Ensemble(a) => (Mode::Ensemble, a),
            Command::Yield(a) => (Mode::Yield, a),
            Command::Classify(a) => (Mode::Classify, a),
            Command::Oracle(a) => (Mode::Oracle, a),
        }
    }
}

/// Loads, runs and writes a scenario; returns the log lines.
pub fn execute(mode: Mode, args: &CommonArgs) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(&args.scenario)?;
    let mut sc = parse_scenario(&text).map_err(|e| match e {
        Error::Parse { line, column, message } => Error::Parse {
            line,
            column,
            message: format!("{}: {message}", args.scenario.display()),
        },
        other => other,
    })?;
    if args.seed.is_some() {
        sc.run.seed = args.seed;
    }
    if let Some(out) = &args.out {
        sc.run.out = Some(out.display().to_string());
    }
    if args.threads == Some(0) {
        return Err(Error::validation("--threads", "must be ≥ 1"));
    }
    let start = Instant::now();
    let out = run(&sc, mode, args.threads)?;
    let wall = start.elapsed().as_secs_f64();
    let dir = PathBuf::from(sc.run.out.clone().unwrap_or_else(|| "out".into()));
    let paths = write_output(&dir, &sc, &out, args.threads, wall)?;
    let mut log = out.log;
    let mut files = String::new();
    for p in &paths {
        let _ = write!(files, " {}", p.display());
    }
    log.push(format!("wrote{files}"));
    Ok(log)
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args(cli: Cli) -> i32 {
    let (mode, args) = cli.command.split();
    match execute(mode, args) {
        Ok(log) => {
            for l in log {
                println!("{l}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
