mod common;

use common::max_abs;
use common::*;
use proptest::prelude::*;
use radpair::qcore::{
    build_subspace_ops, lindblad_dissipator, normalize, validate_inicon, CMat, Channel, HilbertLayout, SubspaceOps,
};
use radpair::reactops::*;
use radpair::spinham::{build_hamiltonian, initial_state, Nucleus, SpinSystemSpec};

fn ops1() -> SubspaceOps {
    build_subspace_ops(&HilbertLayout::new(vec![2]).unwrap())
}

fn bare() -> SubspaceOps {
    build_subspace_ops(&HilbertLayout::bare())
}

fn random_rates(seed: u64, mode: SymmetryMode) -> ReactionRates {
    let mut g = rng(seed);
    let mut u = || uniform(&mut g, 0.05, 2.0);
    match mode {
        SymmetryMode::General => ReactionRates::general([u(), u(), u(), u()], [u(), u(), u(), u()]).unwrap(),
        SymmetryMode::TripletSymmetric => ReactionRates::triplet_symmetric(u(), u(), u(), u()).unwrap(),
        SymmetryMode::TripletSymmetricNoTDephasing => ReactionRates::no_t_dephasing(u(), u(), u()).unwrap(),
    }
}

const MODES: [SymmetryMode; 3] = [
    SymmetryMode::General,
    SymmetryMode::TripletSymmetric,
    SymmetryMode::TripletSymmetricNoTDephasing,
];

#[test]
fn rate_validation() {
    assert!(ReactionRates::general([1.0, -0.1, 0.0, 0.0], [0.0; 4]).is_err());
    let bad = ReactionRates {
        r: [1.0, 1.0, 2.0, 1.0],
        d: [0.0; 4],
        mode: SymmetryMode::TripletSymmetric,
    };
    assert!(bad.validate().is_err());
    let bad = ReactionRates {
        r: [1.0; 4],
        d: [0.0, 0.5, 0.5, 0.5],
        mode: SymmetryMode::TripletSymmetricNoTDephasing,
    };
    assert!(bad.validate().is_err());
    let h = ReactionRates::haberkorn(2.0, 0.5).unwrap();
    assert_eq!(h.r, [2.0, 0.5, 0.5, 0.5]);
    assert_eq!(h.d, [0.0; 4]);
}

#[test]
fn derived_coefficients() {
    for seed in 0..20 {
        let r = random_rates(seed, SymmetryMode::General);
        let dc = r.derived();
        for j in 0..4 {
            assert!((0.0..=1.0).contains(&dc.p[j]));
            assert!((dc.eta_jk[j][j] - dc.gamma[j]).abs() < 1e-15);
        }
    }
    let r = ReactionRates::triplet_symmetric(1.0, 3.0, 0.5, 1.5).unwrap();
    let dc = r.derived();
    assert_eq!(dc.r_mean, 2.0);
    assert_eq!(dc.d_mean, 1.0);
    assert_eq!(dc.eta, 3.0);
    assert!((dc.eta_j[0] - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn zero_rates_give_zero_map() {
    let ops = ops1();
    let r = ReactionRates::general([0.0; 4], [0.0; 4]).unwrap();
    let g = generator_full(&r, &ops).unwrap();
    assert_eq!(max_abs(&g.apply(&random_state(10, 1))), 0.0);
}

#[test]
fn equal_decay_drives_to_product() {
    let ops = ops1();
    let r = ReactionRates::general([0.8; 4], [0.0; 4]).unwrap();
    let rho0 = random_inicon_state(&ops, 4);
    let late = closed_form_full(&rho0, &r, &ops, 80.0).unwrap();
    let want = ops.product_part(&rho0) + ops.recombine(&rho0, &Channel::ALL);
    assert!(max_abs(&(late - &want)) < 1e-12);
    // The asymptotic state is stationary.
    assert!(max_abs(&generator_full(&r, &ops).unwrap().apply(&want)) < 1e-14);
}

#[test]
fn generators_are_trace_free_and_match_per_level_form() {
    let ops = ops1();
    for mode in MODES {
        for k in 0..100u64 {
            let r = random_rates(k, mode);
            let g = generator_full(&r, &ops).unwrap();
            let rho = random_state(10, 500 + k);
            assert!(g.apply(&rho).trace().norm() < 1e-12);
            let inicon = random_inicon_state(&ops, 900 + k);
            let per = generator_full_per_level(&r, &ops).unwrap();
            assert!(max_abs(&(g.apply(&inicon) - per.apply(&inicon))) < 1e-12, "{mode:?}");
            assert!(validate_inicon(&g.apply(&inicon), &ops));
        }
    }
}

#[test]
fn singlet_start_is_dephasing_independent() {
    let ops = bare();
    let s = ops.q_s.clone();
    for d in [0.0, 0.7, 3.0] {
        let r = ReactionRates::triplet_symmetric(1.3, 0.4, d, 0.5 * d).unwrap();
        for t in [0.2, 1.0, 4.0] {
            let got = closed_form_full(&s, &r, &ops, t).unwrap();
            let e = (-1.3f64 * t).exp();
            let want = &ops.q_s * c(e) + &ops.q_p * c(1.0 - e);
            assert!(max_abs(&(got - want)) < 1e-14);
        }
    }
}

/// Each closed form against an independent RK4 integration of its generator.
fn check_closed_form(mode: SymmetryMode, reactant_only: bool) {
    let ops = ops1();
    for k in 0..8u64 {
        let r = random_rates(40 + k, mode);
        let rho0 = if reactant_only {
            random_reactant_state(&ops, k)
        } else {
            random_inicon_state(&ops, k)
        };
        let g = if reactant_only {
            generator_r_subspace(&r, &ops).unwrap()
        } else {
            generator_full(&r, &ops).unwrap()
        };
        for &t in &[0.1, 1.0, 5.0] {
            let t = t / r.max_rate();
            let want = rk4_oracle(&|x| g.apply(x), &rho0, t, 400);
            let got = if reactant_only {
                closed_form_r(&rho0, &r, &ops, t).unwrap()
            } else {
                closed_form_full(&rho0, &r, &ops, t).unwrap()
            };
            assert!(max_abs(&(got - want)) < 1e-8, "{mode:?} t={t}");
        }
    }
}

#[test]
fn general_closed_form_matches_rk4() {
    check_closed_form(SymmetryMode::General, false);
}

#[test]
fn symmetric_closed_form_matches_rk4() {
    check_closed_form(SymmetryMode::TripletSymmetric, false);
}

#[test]
fn simplified_closed_form_matches_rk4() {
    check_closed_form(SymmetryMode::TripletSymmetricNoTDephasing, false);
}

#[test]
fn reactant_closed_forms_match_rk4() {
    for mode in MODES {
        check_closed_form(mode, true);
    }
}

#[test]
fn coherent_input_matches_rk4() {
    let ops = bare();
    let psi = (ket(5, 0) + ket(5, 1)) / c(2f64.sqrt());
    let rho0 = proj(&psi);
    let r = ReactionRates::general([0.5, 1.5, 0.2, 0.9], [0.3, 0.1, 0.0, 0.7]).unwrap();
    let g = generator_full(&r, &ops).unwrap();
    for t in [0.1, 1.0, 5.0] {
        let t = t / r.max_rate();
        let want = rk4_oracle(&|x| g.apply(x), &rho0, t, 500);
        assert!(max_abs(&(closed_form_full(&rho0, &r, &ops, t).unwrap() - want)) < 1e-8);
    }
}

#[test]
fn simplified_solution_depends_on_dephasing_sum() {
    let ops = ops1();
    let rho0 = random_inicon_state(&ops, 12);
    let a = GenmeRates::new(0.9, 0.3, 1.2, 0.4).unwrap();
    let b = GenmeRates::new(0.9, 0.3, 0.1, 1.5).unwrap();
    for t in [0.3, 2.0, 7.0] {
        let x = a.closed_form(&rho0, &ops, t).unwrap();
        let y = b.closed_form(&rho0, &ops, t).unwrap();
        assert!(max_abs(&(x - y)) < 1e-14);
    }
}

#[test]
fn equal_rate_solution_agrees_with_general_one() {
    let ops = ops1();
    let rho0 = random_inicon_state(&ops, 13);
    let g = GenmeRates::new(0.7, 0.7, 0.4, 0.2).unwrap();
    for t in [0.5, 3.0] {
        let x = g.closed_form_equal_rates(&rho0, &ops, t).unwrap();
        let y = g.closed_form(&rho0, &ops, t).unwrap();
        assert!(max_abs(&(x - y)) < 1e-13);
    }
    assert!(GenmeRates::new(0.7, 0.6, 0.0, 0.0)
        .unwrap()
        .closed_form_equal_rates(&rho0, &ops, 1.0)
        .is_err());
}

#[test]
fn closed_forms_solve_their_generators() {
    let ops = ops1();
    let h = 1e-5;
    for mode in MODES {
        let r = random_rates(77, mode);
        let g = generator_full(&r, &ops).unwrap();
        let gr = generator_r_subspace(&r, &ops).unwrap();
        let rho0 = random_inicon_state(&ops, 3);
        let mut tg = rng(5);
        for _ in 0..10 {
            let t = uniform(&mut tg, 0.1, 4.0);
            let fd = (closed_form_full(&rho0, &r, &ops, t + h).unwrap()
                - closed_form_full(&rho0, &r, &ops, t - h).unwrap())
                / c(2.0 * h);
            let at = g.apply(&closed_form_full(&rho0, &r, &ops, t).unwrap());
            assert!(max_abs(&(&fd - &at)) < 1e-6 * max_abs(&at).max(1e-3));
            let fdr = (closed_form_r(&rho0, &r, &ops, t + h).unwrap() - closed_form_r(&rho0, &r, &ops, t - h).unwrap())
                / c(2.0 * h);
            let atr = gr.apply(&closed_form_r(&rho0, &r, &ops, t).unwrap());
            assert!(max_abs(&(&fdr - &atr)) < 1e-6 * max_abs(&atr).max(1e-3));
        }
    }
}

#[test]
fn pure_decay_is_effective_non_hermitian_conjugation() {
    let ops = ops1();
    let (rs, rt) = (1.1, 0.3);
    let r = ReactionRates::haberkorn(rs, rt).unwrap();
    let rho0 = random_reactant_state(&ops, 8);
    for t in [0.4, 2.0] {
        let u = &ops.q_s * c((-rs * t / 2.0).exp()) + &ops.q_t * c((-rt * t / 2.0).exp());
        let want = &u * &rho0 * u.adjoint();
        assert!(max_abs(&(closed_form_r(&rho0, &r, &ops, t).unwrap() - want)) < 1e-14);
    }
}

#[test]
fn pure_dephasing_keeps_reactant_trace() {
    let ops = ops1();
    let r = ReactionRates::general([0.0; 4], [0.4, 1.0, 0.2, 0.6]).unwrap();
    let rho0 = random_reactant_state(&ops, 9);
    for t in [0.5, 5.0, 50.0] {
        assert!((closed_form_r(&rho0, &r, &ops, t).unwrap().trace().re - 1.0).abs() < 1e-13);
    }
}

#[test]
fn balanced_rates_split_into_decay_and_dephasing() {
    let ops = ops1();
    let rates = [0.6, 0.9, 0.9, 0.9];
    let both = generator_r_subspace(&ReactionRates::general(rates, rates).unwrap(), &ops).unwrap();
    let decay = generator_r_subspace(&ReactionRates::general(rates, [0.0; 4]).unwrap(), &ops).unwrap();
    let deph = generator_r_subspace(&ReactionRates::general([0.0; 4], rates).unwrap(), &ops).unwrap();
    let sum = &decay + &deph;
    for k in 0..10 {
        let rho = random_reactant_state(&ops, k);
        assert!(max_abs(&(both.apply(&rho) - sum.apply(&rho))) < 1e-14);
    }
}

#[test]
fn alternative_reactant_generator_forms_agree() {
    let ops = ops1();
    for k in 0..20 {
        let mut g = rng(k);
        let gm = GenmeRates::new(
            uniform(&mut g, 0.0, 2.0),
            uniform(&mut g, 0.0, 2.0),
            uniform(&mut g, 0.0, 2.0),
            uniform(&mut g, 0.0, 2.0),
        )
        .unwrap();
        let a = gm.generator_r(&ops).unwrap();
        let b = gm.generator_r_gamma(&ops);
        let cpt = gm.generator_r_compact(&ops);
        let rho = random_reactant_state(&ops, 100 + k);
        assert!(max_abs(&(a.apply(&rho) - b.apply(&rho))) < 1e-13);
        assert!(max_abs(&(a.apply(&rho) - cpt.apply(&rho))) < 1e-13);
        // Trace non-increasing on positive reactant states.
        assert!(a.apply(&rho).trace().re <= 1e-14);
    }
}

#[test]
fn dephasing_interchange_on_inicon_states() {
    let ops = ops1();
    let ls = lindblad_dissipator(&ops.q_s).unwrap();
    let lt = lindblad_dissipator(&ops.q_t).unwrap();
    for k in 0..100 {
        let rho = random_inicon_state(&ops, 3000 + k);
        assert!(max_abs(&(ls.apply(&rho) - lt.apply(&rho))) < 1e-15);
    }
    // Fails once reactant–product coherence is present.
    let rho = random_state(10, 1);
    assert!(max_abs(&(ls.apply(&rho) - lt.apply(&rho))) > 1e-3);
}

#[test]
fn haberkorn_purity_under_pure_decay() {
    let ops = ops1();
    let r = ReactionRates::haberkorn(1.7, 0.2).unwrap();
    let psi = (ket(10, 0) * c(0.6) + ket(10, 3) * c(0.8)).normalize();
    let rho0 = proj(&psi);
    for t in [0.5, 3.0, 9.0] {
        let (n, _) = normalize(&closed_form_r(&rho0, &r, &ops, t).unwrap()).unwrap();
        assert!((n.purity() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn non_hermitian_propagation() {
    let ops = ops1();
    let h0 = CMat::zeros(10, 10);
    let psi0 = (ket(10, 1) + ket(10, 4) * c(2.0)).normalize();
    let r = ReactionRates::haberkorn(0.8, 0.8).unwrap();
    let (psi, n2) = nonhermitian_propagate(&psi0, &r, &h0, &ops, 1.5).unwrap();
    assert!((&psi - &psi0 * c((-0.8f64 * 1.5 / 2.0).exp())).norm() < 1e-13);
    assert!((n2 - (-0.8f64 * 1.5).exp()).abs() < 1e-13);

    let spec = SpinSystemSpec::zeeman([0.0, 0.0, 0.3]).with_nucleus(0, Nucleus::isotropic(0.5, 1.0).unwrap());
    let layout = spec.layout().unwrap();
    let h = build_hamiltonian(&spec, &layout).unwrap().hamiltonian;
    let zero = ReactionRates::haberkorn(0.0, 0.0).unwrap();
    let (_, n2) = nonhermitian_propagate(&psi0, &zero, &h, &ops, 7.0).unwrap();
    assert!((n2 - 1.0).abs() < 1e-12);

    let r = ReactionRates::haberkorn(1.4, 0.3).unwrap();
    for t in [0.5, 2.0] {
        let (_, n2) = nonhermitian_propagate(&psi0, &r, &h0, &ops, t).unwrap();
        let tr = closed_form_r(&proj(&psi0), &r, &ops, t).unwrap().trace().re;
        assert!((n2 - tr).abs() < 1e-8);
    }
    let deph = ReactionRates::general([1.0; 4], [0.1; 4]).unwrap();
    assert!(nonhermitian_propagate(&psi0, &deph, &h0, &ops, 1.0).is_err());
    let heff = effective_hamiltonian(&r, &h, &ops);
    assert!((heff[(0, 0)].im + 0.7).abs() < 1e-15);
}

#[test]
fn kominis_visibility_examples() {
    let ops = bare();
    let k = KominisGenerator::new(1.0, 0.5, &ops).unwrap();
    let mix = (proj(&ket(5, 0)) + proj(&ket(5, 1))) * c(0.5);
    assert_eq!(k.p_coh(&mix), (0.0, false));
    let psi = (ket(5, 0) + ket(5, 1)) / c(2f64.sqrt());
    let (p, flag) = k.p_coh(&proj(&psi));
    assert!((p - 1.0).abs() < 1e-14 && !flag);
    let (p, flag) = k.p_coh(&ops.q_s);
    assert_eq!(p, 0.0);
    assert!(flag);
    let ev = k.apply(&ops.q_s).unwrap();
    assert!(ev.p_coh_undefined);
}

#[test]
fn kominis_operator_is_nonlinear() {
    let ops = bare();
    let k = KominisGenerator::new(1.0, 0.3, &ops).unwrap();
    let mut found = false;
    for s in 0..20 {
        let r1 = random_reactant_state(&ops, s);
        let r2 = random_reactant_state(&ops, 100 + s);
        let (a, b) = (0.3, 0.7);
        let lhs = k.apply(&(&r1 * c(a) + &r2 * c(b))).unwrap().value;
        let rhs = k.apply(&r1).unwrap().value * c(a) + k.apply(&r2).unwrap().value * c(b);
        if max_abs(&(lhs - rhs)) > 1e-3 {
            found = true;
            break;
        }
    }
    assert!(found);
}

#[test]
fn kominis_evolution_runs_and_decays() {
    let ops = ops1();
    let k = KominisGenerator::new(1.0, 1.0, &ops).unwrap();
    let spec = SpinSystemSpec::zeeman([0.0, 0.0, 0.2]).with_nucleus(0, Nucleus::isotropic(0.5, 1.0).unwrap());
    let layout = spec.layout().unwrap();
    let h = build_hamiltonian(&spec, &layout).unwrap().hamiltonian;
    let rho0 = initial_state(&layout).into_matrix();
    let run = k.evolve(&rho0, &h, &[0.5, 1.0, 2.0]).unwrap();
    assert_eq!(run.states.len(), 3);
    assert!(run.p_coh_flagged);
    let tr: Vec<f64> = run.states.iter().map(|r| r.trace().re).collect();
    assert!(tr[0] > tr[1] && tr[1] > tr[2] && tr[2] > 0.0);
    let long = k.evolve(&rho0, &h, &[30.0]).unwrap();
    assert!(long.truncated_at.is_some());
}

#[test]
fn conditional_reactant_equation() {
    let ops = ops1();
    let r = ReactionRates::no_t_dephasing(1.2, 0.4, 0.3).unwrap();
    let h0 = CMat::zeros(10, 10);
    let flow = conditional_r_equation(&r, &h0, &ops).unwrap();
    let s = &ops.q_s * c(0.5);
    assert!((flow.mean_generator(&s) + 1.2).abs() < 1e-14);
    assert!(max_abs(&flow.rhs(&s)) < 1e-14);

    // Mixed S/T input: nonlinear solution = normalized closed form.
    let rho0 = (&ops.q_s * c(0.3) + &ops.q_t * c(0.7 / 3.0)) * c(0.5);
    let grid: Vec<f64> = (0..=10).map(|k| 0.5 * k as f64).collect();
    let num = flow.solve_nonlinear(&rho0, &grid).unwrap();
    for (t, rho) in grid.iter().zip(&num) {
        let (want, _) = normalize(&closed_form_r(&rho0, &r, &ops, *t).unwrap()).unwrap();
        assert!(max_abs(&(rho - want.matrix())) < 1e-8);
    }

    // Equal decay rates: only H acts.
    let eq = ReactionRates::haberkorn(0.9, 0.9).unwrap();
    let spec = SpinSystemSpec::zeeman([0.0, 0.0, 0.4]).with_nucleus(0, Nucleus::isotropic(0.5, 1.0).unwrap());
    let layout = spec.layout().unwrap();
    let h = build_hamiltonian(&spec, &layout).unwrap().hamiltonian;
    let flow = conditional_r_equation(&eq, &h, &ops).unwrap();
    let rho0 = initial_state(&layout).into_matrix();
    let out = flow.solve_nonlinear(&rho0, &[2.0]).unwrap();
    let u = expm_taylor(&h, 2.0);
    assert!(max_abs(&(&out[0] - &u * &rho0 * u.adjoint())) < 1e-8);

    let general = ReactionRates::general([1.0; 4], [0.0; 4]).unwrap();
    assert!(conditional_r_equation(&general, &h0, &ops).is_err());
}

#[test]
fn coherence_removal_superoperator() {
    let ops = ops1();
    let rho = random_reactant_state(&ops, 21);
    // 𝓠_coh removes every coherence between distinct triplet levels and leaves blocks untouched.
    let blocks = [&ops.q_t0, &ops.q_tp, &ops.q_tm];
    for (i, a) in blocks.iter().enumerate() {
        for (j, b) in blocks.iter().enumerate() {
            let want = if i == j { *a * &rho * *b } else { CMat::zeros(10, 10) };
            let tt = *a * (&ops.q_t * &rho * &ops.q_t + q_coh(&ops).apply(&rho)) * *b;
            assert!(max_abs(&(tt - want)) < 1e-15);
        }
    }
    assert!(q_coh(&ops).apply(&rho).trace().norm() < 1e-15);
    let m = recombination_map(&ops, &[Channel::S]);
    assert!(max_abs(&(m.apply(&rho) - ops.recombine(&rho, &[Channel::S]))) < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generator_preserves_trace_and_inicon(
        r in prop::array::uniform4(0.0f64..3.0),
        d in prop::array::uniform4(0.0f64..3.0),
        seed in 0u64..10_000,
    ) {
        let ops = ops1();
        let rates = ReactionRates::general(r, d).unwrap();
        let g = generator_full(&rates, &ops).unwrap();
        let rho = random_inicon_state(&ops, seed);
        let out = g.apply(&rho);
        prop_assert!(out.trace().norm() < 1e-12);
        prop_assert!(validate_inicon(&out, &ops));
        let late = closed_form_full(&rho, &rates, &ops, 0.7).unwrap();
        prop_assert!(radpair::qcore::check_state(&late).is_ok());
        prop_assert!((late.trace().re - 1.0).abs() < 1e-12);
    }
}
