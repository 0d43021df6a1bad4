mod common;

use common::{c, expm_taylor, ket, proj};
use proptest::prelude::*;
use radpair::encounter::{maps_for, DetectionEfficiencies, EncounterCoupling, Outcome};
use radpair::qcore::{build_subspace_ops, CMat, HilbertLayout, SubspaceOps};
use radpair::spinham::{build_hamiltonian, initial_state, Nucleus, SpinSystemSpec};
use radpair::stochastic::{ensemble_average, Conditioning, RateModel, TrajectorySetup};
use radpair::yields::*;

fn bare() -> SubspaceOps {
    build_subspace_ops(&HilbertLayout::bare())
}

struct OneNucleus {
    h: CMat,
    ops: SubspaceOps,
    rho0: CMat,
}

fn one_nucleus(a: f64, b: f64) -> OneNucleus {
    let spec = SpinSystemSpec::zeeman([0.0, 0.0, b]).with_nucleus(0, Nucleus::isotropic(0.5, a).unwrap());
    let layout = spec.layout().unwrap();
    OneNucleus {
        h: build_hamiltonian(&spec, &layout).unwrap().hamiltonian,
        ops: build_subspace_ops(&layout),
        rho0: initial_state(&layout).into_matrix(),
    }
}

fn exponential(functional: YieldFunctional, rate: f64) -> YieldSpec {
    YieldSpec {
        functional,
        distribution: YieldDistribution::Exponential { rate },
    }
}

#[test]
fn free_singlet_and_triplet_probabilities() {
    let ops = bare();
    let h = CMat::zeros(5, 5);
    let singlet = proj(&ket(5, 0));
    let triplet = proj(&ket(5, 1));
    for &(r, t) in &[(1.0, 0.5), (0.3, 4.0), (2.0, 10.0)] {
        let p = singlet_probability(&h, &singlet, r, t, &ops).unwrap();
        let want = -(-r * t as f64).exp_m1();
        assert!((p - want).abs() < 1e-10 * want.max(1e-3), "{p} vs {want}");
        assert_eq!(singlet_probability(&h, &triplet, r, t, &ops).unwrap(), 0.0);
    }
    assert!(singlet_probability(&h, &singlet, 0.0, 1.0, &ops).is_err());
}

#[test]
fn adaptive_simpson_examples() {
    let (v, _) = adaptive_simpson(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-10, 8);
    assert!((v - 2.0).abs() < 1e-9);
    let (v, _) = adaptive_simpson(&|x: f64| (-x).exp(), 0.0, 40.0, 1e-10, 8);
    assert!((v - (1.0 - (-40.0f64).exp())).abs() < 1e-9);
}

#[test]
fn normalization_and_trivial_yields() {
    let sys = one_nucleus(1.0, 0.3);
    let id: Vec<Vec<f64>> = (0..10)
        .map(|i| (0..10).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let zero = vec![vec![0.0; 10]; 10];
    let one = exponential(YieldFunctional::Expectation { re: id, im: zero }, 0.7);
    let phi = yield_integral(&one, &sys.h, &sys.rho0, &sys.ops, None).unwrap();
    assert!((phi - 1.0).abs() < 1e-8);

    let ops = bare();
    let s = exponential(YieldFunctional::SingletFidelity, 1.3);
    let phi = yield_integral(&s, &CMat::zeros(5, 5), &proj(&ket(5, 0)), &ops, None).unwrap();
    assert!((phi - 1.0).abs() < 1e-8);

    // The singlet yield is p_S(∞).
    let phi = yield_integral(&s, &sys.h, &sys.rho0, &sys.ops, None).unwrap();
    let p_inf = singlet_probability(&sys.h, &sys.rho0, 1.3, 40.0 / 1.3, &sys.ops).unwrap();
    assert!((phi - p_inf).abs() < 1e-8);

    let empirical = YieldSpec {
        functional: YieldFunctional::SingletFidelity,
        distribution: YieldDistribution::Empirical { times: vec![0.0, 0.0] },
    };
    assert!((yield_integral(&empirical, &sys.h, &sys.rho0, &sys.ops, None).unwrap() - 1.0).abs() < 1e-14);
    let empty = YieldSpec {
        functional: YieldFunctional::SingletFidelity,
        distribution: YieldDistribution::Empirical { times: vec![] },
    };
    assert!(yield_integral(&empty, &sys.h, &sys.rho0, &sys.ops, None).is_err());
    assert!(yield_integral(
        &exponential(YieldFunctional::SingletFidelity, 0.0),
        &sys.h,
        &sys.rho0,
        &sys.ops,
        None
    )
    .is_err());
}

#[test]
fn first_encounter_distribution_is_gated_and_consistent() {
    let sys = one_nucleus(1.0, 0.2);
    let rate = 0.8;
    let model = RateModel::constant(rate).unwrap().with_cutoff(40.0 / rate).unwrap();
    let gated = YieldSpec {
        functional: YieldFunctional::SingletFidelity,
        distribution: YieldDistribution::FirstEncounter {
            model,
            experimental: false,
        },
    };
    assert!(yield_integral(&gated, &sys.h, &sys.rho0, &sys.ops, None).is_err());
    let open = YieldSpec {
        functional: YieldFunctional::SingletFidelity,
        distribution: YieldDistribution::FirstEncounter {
            model,
            experimental: true,
        },
    };
    let a = yield_integral(&open, &sys.h, &sys.rho0, &sys.ops, None).unwrap();
    let b = yield_integral(
        &exponential(YieldFunctional::SingletFidelity, rate),
        &sys.h,
        &sys.rho0,
        &sys.ops,
        None,
    )
    .unwrap();
    assert!((a - b).abs() < 1e-8);
}

/// Electron state of the one-nucleus pair in the singlet–triplet basis,
/// traced over the nucleus by hand.
fn electron_st(rho: &CMat) -> [[num_complex::Complex64; 4]; 4] {
    std::array::from_fn(|a| std::array::from_fn(|b| rho[(2 * a, 2 * b)] + rho[(2 * a + 1, 2 * b + 1)]))
}

/// Concurrence of the X-shaped electron state produced by an isotropic
/// coupling in an axial field: `2 max(0, |ρ_{↑↓,↓↑}| − √(ρ_{↑↑}ρ_{↓↓}))`.
fn x_state_concurrence(rho: &CMat) -> f64 {
    let e = electron_st(rho);
    let (s, t0) = (0, 1);
    let coh = 0.5 * (e[t0][t0] - e[s][s] + e[s][t0] - e[t0][s]);
    let pp = e[2][2].re;
    let mm = e[3][3].re;
    (2.0 * (coh.norm() - (pp * mm).sqrt())).max(0.0)
}

/// Composite Simpson rule with stepwise propagation.
fn concurrence_yield_oracle(sys: &OneNucleus, rate: f64, t_inf: f64, steps: usize) -> f64 {
    let dt = t_inf / steps as f64;
    let step = expm_taylor(&sys.h, dt);
    let step_dag = step.adjoint();
    let mut rho = sys.rho0.clone();
    let mut sum = 0.0;
    for k in 0..=steps {
        let t = k as f64 * dt;
        let w = if k == 0 || k == steps {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        sum += w * rate * (-rate * t).exp() * x_state_concurrence(&rho);
        rho = &step * rho * &step_dag;
    }
    sum * dt / 3.0
}

/// Concurrence yield of the one-nucleus pair with a = r = 1 in field b = 0.5.
const CONCURRENCE_YIELD: f64 = 0.6729136;

#[test]
fn concurrence_yield_regression() {
    let sys = one_nucleus(1.0, 0.5);
    let oracle = concurrence_yield_oracle(&sys, 1.0, 40.0, 80_000);
    let lib = yield_integral(
        &exponential(YieldFunctional::Concurrence, 1.0),
        &sys.h,
        &sys.rho0,
        &sys.ops,
        None,
    )
    .unwrap();
    assert!((oracle - lib).abs() < 1e-6, "oracle {oracle} vs {lib}");
    assert!((lib - CONCURRENCE_YIELD).abs() < 1e-6, "{lib}");
}

#[test]
fn concurrence_examples() {
    let s = {
        let mut v = ket(4, 1) - ket(4, 2);
        v /= c(2f64.sqrt());
        proj(&v)
    };
    assert!((concurrence(&s).unwrap() - 1.0).abs() < 1e-12);
    assert!(concurrence(&proj(&ket(4, 1))).unwrap().abs() < 1e-12);
    let id = CMat::identity(4, 4) * c(0.25);
    for &w in &[0.0, 0.2, 1.0 / 3.0, 0.5, 0.8, 1.0] {
        let werner = &id * c(1.0 - w) + &s * c(w);
        let want = ((3.0 * w - 1.0) / 2.0).max(0.0);
        assert!((concurrence(&werner).unwrap() - want).abs() < 1e-7, "w = {w}");
    }
    assert!(concurrence(&CMat::identity(5, 5)).is_err());
    assert!(concurrence(&(&s * c(2.0))).is_err());
}

#[test]
fn electron_state_of_the_singlet_is_maximally_entangled() {
    let sys = one_nucleus(1.0, 0.0);
    let e = electron_state(&sys.rho0, &sys.ops.layout).unwrap();
    assert!((concurrence(&e).unwrap() - 1.0).abs() < 1e-12);
    assert!(electron_state(&sys.ops.q_p, &sys.ops.layout).is_err());
}

#[test]
fn sensitivity_vanishes_without_field_dependence() {
    let sys = one_nucleus(1.0, 0.3);
    let spec = exponential(YieldFunctional::SingletFidelity, 1.0);
    let fixed = sys.h.clone();
    let s = magnetic_sensitivity(&spec, &|_| Ok(fixed.clone()), &sys.rho0, &sys.ops, 0.3, 0.01).unwrap();
    assert!(s.value.abs() < 1e-10);

    let layout = HilbertLayout::bare();
    let ops = bare();
    let family = |b: f64| {
        let spec = SpinSystemSpec::zeeman([0.0, 0.0, b]);
        build_hamiltonian(&spec, &layout).map(|g| g.hamiltonian)
    };
    let singlet = proj(&ket(5, 0));
    let s = magnetic_sensitivity(&spec, &family, &singlet, &ops, 0.7, 0.01).unwrap();
    assert!(s.value.abs() < 1e-10);
    assert!(magnetic_sensitivity(&spec, &family, &singlet, &ops, 0.7, 0.0).is_err());
}

#[test]
fn anisotropic_angle_sensitivity_converges_under_step_halving() {
    let a = [[0.1, 0.0, 0.0], [0.0, 0.1, 0.0], [0.0, 0.0, 1.0]];
    let nucleus = Nucleus::new(0.5, a).unwrap();
    let layout = SpinSystemSpec::zeeman([0.0; 3])
        .with_nucleus(0, nucleus.clone())
        .layout()
        .unwrap();
    let ops = build_subspace_ops(&layout);
    let rho0 = initial_state(&layout).into_matrix();
    let family = |theta: f64| {
        let spec = SpinSystemSpec::zeeman([0.5 * theta.sin(), 0.0, 0.5 * theta.cos()]).with_nucleus(0, nucleus.clone());
        build_hamiltonian(&spec, &layout).map(|g| g.hamiltonian)
    };
    let spec = exponential(YieldFunctional::SingletFidelity, 0.2);
    for &theta in &[0.3, 0.8, 1.2] {
        let s = magnetic_sensitivity(&spec, &family, &rho0, &ops, theta, 0.02).unwrap();
        assert!(s.fine.abs() > 1e-4, "angle {theta} gives no sensitivity");
        assert!((s.fine - s.coarse).abs() <= 0.01 * s.fine.abs(), "{s:?}");
        assert!((s.error_estimate - (s.fine - s.coarse).abs()).abs() < 1e-15);
    }
}

#[test]
fn entanglement_lifetime_is_grid_invariant() {
    let sys = one_nucleus(1.0, 0.5);
    let coarse = entanglement_lifetime(&sys.h, &sys.rho0, &sys.ops, 9.0, 300, 1e-8).unwrap();
    let fine = entanglement_lifetime(&sys.h, &sys.rho0, &sys.ops, 9.0, 1200, 1e-8).unwrap();
    assert!(!coarse.censored);
    assert!((coarse.t_e - fine.t_e).abs() < 1e-6, "{coarse:?} vs {fine:?}");
    // At the lifetime the X-state concurrence oracle reaches zero.
    let u = expm_taylor(&sys.h, fine.t_e + 1e-4);
    assert!(x_state_concurrence(&(&u * &sys.rho0 * u.adjoint())) < 1e-12);
    let u = expm_taylor(&sys.h, fine.t_e - 1e-4);
    assert!(x_state_concurrence(&(&u * &sys.rho0 * u.adjoint())) > 0.0);

    let ops = bare();
    let free = entanglement_lifetime(&CMat::zeros(5, 5), &proj(&ket(5, 0)), &ops, 3.0, 10, 1e-8).unwrap();
    assert!(free.censored && free.t_e == 3.0);
    let never = entanglement_lifetime(&CMat::zeros(5, 5), &proj(&ket(5, 2)), &ops, 3.0, 10, 1e-8).unwrap();
    assert!(!never.censored && never.t_e == 0.0);
}

#[test]
fn quadrature_matches_von_neumann_trajectories() {
    let sys = one_nucleus(1.0, 0.5);
    let (rate, t_end) = (0.5, 12.0);
    let maps = maps_for(&EncounterCoupling::von_neumann(), &sys.ops).unwrap();
    let spec = SpinSystemSpec::zeeman([0.0, 0.0, 0.5]).with_nucleus(0, Nucleus::isotropic(0.5, 1.0).unwrap());
    let gen = build_hamiltonian(&spec, &sys.ops.layout).unwrap();
    let setup = TrajectorySetup::new(
        &gen,
        &maps,
        &DetectionEfficiencies::perfect(),
        RateModel::constant(rate).unwrap(),
        vec![0.0, t_end],
        Conditioning::Unconditional,
    )
    .unwrap();
    let n = 20_000u64;
    let res = ensemble_average(&setup, &sys.rho0, &sys.ops, n, 5, None).unwrap();
    let s_clicks = res.outcome_counts.get(&Outcome::S).copied().unwrap_or(0) as f64;
    let mc = s_clicks / n as f64;
    let se = (mc * (1.0 - mc) / n as f64).sqrt();
    let quad = singlet_probability(&sys.h, &sys.rho0, rate, t_end, &sys.ops).unwrap();
    assert!((mc - quad).abs() <= 3.0 * se, "{mc} ± {se} vs {quad}");
    // The singlet population of the ensemble product state agrees as well.
    let p_block = res.expectation(1, &sys.ops.q_p);
    assert!((p_block - (1.0 - (-rate * t_end).exp())).abs() <= 3.0 * res.projector_stderr(1, &sys.ops.q_p) + 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn singlet_probability_is_monotone_and_bounded(a in 0.1f64..3.0, b in 0.0f64..2.0, r in 0.05f64..3.0) {
        let sys = one_nucleus(a, b);
        let mut prev = 0.0;
        for k in 1..=10 {
            let t = 0.5 * k as f64 / r;
            let p = singlet_probability(&sys.h, &sys.rho0, r, t, &sys.ops).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!(p >= prev - 1e-12);
            prev = p;
        }
    }
}
