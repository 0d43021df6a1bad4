mod common;

use std::f64::consts::{FRAC_PI_2, PI};

use common::{c, expm_taylor, kraus_apply, max_abs, random_inicon_state, random_state};
use num_complex::Complex64;
use proptest::prelude::*;
use radpair::encounter::*;
use radpair::qcore::{build_subspace_ops, CMat, Channel, HilbertLayout, SubspaceOps, SuperOp};
use radpair::reactops::{generator_full, SymmetryMode};

fn bare() -> SubspaceOps {
    build_subspace_ops(&HilbertLayout::bare())
}

fn nuc() -> SubspaceOps {
    build_subspace_ops(&HilbertLayout::new(vec![2]).unwrap())
}

fn polar(r: f64, th: f64) -> Complex64 {
    Complex64::from_polar(r, th)
}

fn general_coupling(kappa: f64, a: [f64; 8], ph: [f64; 8]) -> EncounterCoupling {
    EncounterCoupling::new(
        kappa,
        std::array::from_fn(|j| polar(a[j], ph[j])),
        std::array::from_fn(|j| polar(a[4 + j], ph[4 + j])),
        SymmetryMode::General,
    )
    .unwrap()
}

/// System Kraus operator `⟨e|U|0⟩` read off a system ⊗ environment unitary.
fn kraus_block(u: &CMat, ne: usize, e: usize) -> CMat {
    let d = u.nrows() / ne;
    CMat::from_fn(d, d, |i, j| u[(i * ne + e, j * ne)])
}

fn map_diff(a: &SuperOp, b: &SuperOp) -> f64 {
    max_abs(&(a.dense_matrix() - b.dense_matrix()))
}

#[test]
fn zero_strength_unitary_is_identity() {
    let ops = bare();
    let cp = EncounterCoupling::symmetric(0.0, 1.0, 0.7, 0.3, 0.2).unwrap();
    let u = encounter_unitary(&cp, &ops);
    let n = u.nrows();
    assert!(max_abs(&(u - CMat::identity(n, n))) < 1e-15);
}

#[test]
fn von_neumann_unitary_maximally_correlates() {
    let ops = bare();
    let ph = 0.4;
    let cp = EncounterCoupling::new(
        FRAC_PI_2,
        [polar(1.0, ph), c(1.0), c(1.0), c(1.0)],
        [c(0.0); 4],
        SymmetryMode::TripletSymmetricNoTDephasing,
    )
    .unwrap();
    let u = encounter_unitary(&cp, &ops);
    let ne = environment_dim(&cp);
    assert_eq!(ne, 6);
    assert!(max_abs(&(kraus_block(&u, ne, 0) - &ops.q_p)) < 1e-14);
    for ch in Channel::ALL {
        let phase = if ch == Channel::S { polar(1.0, ph) } else { c(1.0) };
        let want = ops.jump(ch) * (Complex64::new(0.0, -1.0) * phase);
        assert!(max_abs(&(kraus_block(&u, ne, 1 + ch.index()) - want)) < 1e-14);
    }
}

#[test]
fn unitary_matches_taylor_exponential_with_nuclei() {
    let ops = nuc();
    let cp = general_coupling(
        0.9,
        [0.8, 1.1, 0.3, 0.6, 0.5, 0.2, 0.9, 0.1],
        [0.3, -1.0, 2.0, 0.1, 0.7, -0.4, 1.3, 2.2],
    );
    let u = encounter_unitary(&cp, &ops);
    let h = interaction_hamiltonian(&cp, &ops);
    let oracle = expm_taylor(&h, cp.kappa);
    assert!(max_abs(&(&u - &oracle)) < 1e-10);
    let n = u.nrows();
    assert!(max_abs(&(u.adjoint() * &u - CMat::identity(n, n))) < 1e-12);
}

#[test]
fn map_params_of_named_encounters() {
    let vn = derive_map_params(&EncounterCoupling::von_neumann());
    for j in 0..4 {
        assert!((vn.r_tilde[j] - 1.0).abs() < 1e-15);
        assert!(vn.d_tilde[j].abs() < 1e-15);
        for k in 0..4 {
            if j != k {
                assert!(vn.c[j][k].abs() < 1e-15);
            }
        }
    }
    assert!((vn.eta_tilde - 1.0).abs() < 1e-15);

    let dark = derive_map_params(&EncounterCoupling::symmetric(1.3, 0.0, 0.0, 0.8, 1.1).unwrap());
    assert!(dark.r_tilde.iter().all(|&r| r == 0.0));

    // cos φ_S cos φ_T = −1 requires one phase at π and the other at 0 or 2π.
    let grover = derive_map_params(&EncounterCoupling::symmetric(PI, 0.0, 0.0, 1.0, 2.0).unwrap());
    assert!((grover.eta_tilde - 2.0).abs() < 1e-14);
    assert!(grover.r_tilde.iter().all(|&r| r.abs() < 1e-30));
    // Equal phases π give η̃ = 0.
    let even = derive_map_params(&EncounterCoupling::symmetric(PI, 0.0, 0.0, 1.0, 1.0).unwrap());
    assert!(even.eta_tilde.abs() < 1e-14);
}

#[test]
fn von_neumann_maps() {
    let ops = nuc();
    let maps = maps_for(&EncounterCoupling::von_neumann(), &ops).unwrap();
    assert_eq!(classify(&maps.params), EncounterClass::BrightVonNeumann);
    for seed in 0..5 {
        let rho = random_state(ops.dim(), seed);
        let p = SuperOp::project(&ops.q_p).apply(&rho);
        assert!(max_abs(&(maps.a_0.apply(&rho) - p)) < 1e-14);
        let s = maps.map(Outcome::S).unwrap().apply(&rho);
        let want = ops.recombine(&rho, &[Channel::S]);
        assert!(max_abs(&(s - want)) < 1e-14);
    }
}

#[test]
fn grover_reflection_is_involutive() {
    let ops = nuc();
    let cp = EncounterCoupling::symmetric(PI, 0.0, 0.0, 1.0, 2.0).unwrap();
    let maps = maps_for(&cp, &ops).unwrap();
    assert_eq!(classify(&maps.params), EncounterClass::DarkGrover);
    let q = stp_dephasing(&ops);
    let refl = &(2.0 * &q) - &SuperOp::identity(ops.dim());
    for seed in 0..100 {
        let rho = random_inicon_state(&ops, seed);
        let once = maps.a_0.apply(&rho);
        assert!(max_abs(&(&once - refl.apply(&rho))) < 1e-14);
        assert!(max_abs(&(maps.a_0.apply(&once) - &rho)) < 1e-14);
        assert!(max_abs(&(refl.apply(&refl.apply(&rho)) - &rho)) < 1e-14);
    }
}

#[test]
fn trivial_and_even_dark_encounters_are_identity() {
    let ops = bare();
    let trivial = maps_for(&EncounterCoupling::symmetric(0.0, 1.0, 1.0, 0.0, 0.0).unwrap(), &ops).unwrap();
    assert!(map_diff(&trivial.a_0, &SuperOp::identity(ops.dim())) < 1e-15);
    assert_eq!(classify(&trivial.params), EncounterClass::DarkIdentity);
    let even = maps_for(&EncounterCoupling::symmetric(PI, 0.0, 0.0, 1.0, 1.0).unwrap(), &ops).unwrap();
    assert_eq!(classify(&even.params), EncounterClass::DarkIdentity);
    for seed in 0..10 {
        let rho = random_inicon_state(&ops, seed);
        assert!(max_abs(&(even.a_0.apply(&rho) - &rho)) < 1e-14);
    }
}

#[test]
fn classification_examples() {
    let pd = derive_map_params(&EncounterCoupling::symmetric(FRAC_PI_2, 0.0, 0.0, 1.0, 0.0).unwrap());
    assert!((pd.eta_tilde - 1.0).abs() < 1e-15);
    assert_eq!(classify(&pd), EncounterClass::DarkPureDephasing);
    let g = derive_map_params(&EncounterCoupling::symmetric(PI, 0.0, 0.0, 1.0, 2.0).unwrap());
    assert_eq!(classify(&g), EncounterClass::DarkGrover);
    let gen = derive_map_params(&EncounterCoupling::symmetric(0.7, 1.0, 0.5, 0.2, 0.0).unwrap());
    assert_eq!(classify(&gen), EncounterClass::Generic);
    assert_eq!(EncounterClass::BrightVonNeumann.to_string(), "Bright/VonNeumann");
}

#[test]
fn perfect_dephasing_map() {
    let ops = nuc();
    let maps = maps_for(
        &EncounterCoupling::symmetric(FRAC_PI_2, 0.0, 0.0, 1.0, 0.0).unwrap(),
        &ops,
    )
    .unwrap();
    assert_eq!(classify(&maps.params), EncounterClass::DarkPureDephasing);
    let q = stp_dephasing(&ops);
    for seed in 0..10 {
        let rho = random_inicon_state(&ops, seed);
        assert!(max_abs(&(maps.a_0.apply(&rho) - q.apply(&rho))) < 1e-14);
    }
}

#[test]
fn symmetric_formulas_agree_on_inicon_states() {
    let ops = nuc();
    for (i, cp) in [
        EncounterCoupling::symmetric(0.8, 1.0, 0.6, 0.4, 0.9).unwrap(),
        EncounterCoupling::symmetric(2.1, 0.3, 1.2, 0.5, 0.0).unwrap(),
        EncounterCoupling::symmetric(1.7, 1.0, 0.2, 0.0, 0.0).unwrap(),
    ]
    .iter()
    .enumerate()
    {
        let maps = maps_for(cp, &ops).unwrap();
        let a0 = a0_triplet_symmetric(&maps.params, &ops);
        for seed in 0..20 {
            let rho = random_inicon_state(&ops, 100 * i as u64 + seed);
            assert!(max_abs(&(maps.a_0.apply(&rho) - a0.apply(&rho))) < 1e-13);
            if cp.mode == SymmetryMode::TripletSymmetricNoTDephasing {
                let acpt = a_cpt_triplet_symmetric(&maps.params, &ops);
                assert!(max_abs(&(maps.a_cpt.apply(&rho) - acpt.apply(&rho))) < 1e-13);
            }
        }
    }
}

#[test]
fn detection_efficiency_limits() {
    let ops = bare();
    let cp = EncounterCoupling::symmetric(1.1, 0.9, 0.7, 0.3, 0.0).unwrap();
    let maps = maps_for(&cp, &ops).unwrap();
    let same = with_detection(&maps, &DetectionEfficiencies::perfect()).unwrap();
    assert!(map_diff(&same.a_0, &maps.a_0) < 1e-15);
    let blind = with_detection(&maps, &DetectionEfficiencies::collapsed(0.0, 0.0).unwrap()).unwrap();
    assert!(map_diff(&blind.a_0, &maps.a_cpt) < 1e-15);
    let singlet_only = with_detection(&maps, &DetectionEfficiencies::collapsed(1.0, 0.0).unwrap()).unwrap();
    assert!(map_diff(singlet_only.map(Outcome::S).unwrap(), maps.map(Outcome::S).unwrap()) < 1e-15);
    assert!(singlet_only.map(Outcome::T).unwrap().norm() < 1e-15);
    assert!(DetectionEfficiencies::collapsed(1.2, 0.0).is_err());
    let uneven = DetectionEfficiencies::per_level([1.0, 0.5, 0.4, 0.5]).unwrap();
    assert!(with_detection(&maps, &uneven).is_err());
}

#[test]
fn maps_reject_mode_mismatch() {
    let ops = bare();
    let mut p = derive_map_params(&EncounterCoupling::symmetric(1.0, 1.0, 1.0, 0.0, 0.0).unwrap());
    p.r_tilde[2] += 0.1;
    assert!(build_maps(&p, &ops).is_err());
    assert!(EncounterCoupling::new(
        1.0,
        [c(1.0), c(1.0), c(0.5), c(1.0)],
        [c(0.0); 4],
        SymmetryMode::TripletSymmetric
    )
    .is_err());
    assert!(EncounterCoupling::new(
        1.0,
        [c(1.0); 4],
        [c(0.0), c(0.1), c(0.1), c(0.1)],
        SymmetryMode::TripletSymmetricNoTDephasing
    )
    .is_err());
}

#[test]
fn averaging_examples() {
    let ops = bare();
    let id = EncounterCoupling::symmetric(PI, 0.0, 0.0, 1.0, 1.0).unwrap();
    let gr = EncounterCoupling::symmetric(PI, 0.0, 0.0, 1.0, 2.0).unwrap();
    let avg = average_params(&[(0.5, id.clone()), (0.5, gr)]).unwrap();
    assert!((avg.eta_tilde - 1.0).abs() < 1e-14);
    assert!(avg.phi.is_none());
    let maps = build_maps(&avg, &ops).unwrap();
    let q = stp_dephasing(&ops);
    for seed in 0..10 {
        let rho = random_inicon_state(&ops, seed);
        assert!(max_abs(&(maps.a_0.apply(&rho) - q.apply(&rho))) < 1e-14);
    }
    let w = 0.3;
    let vn = EncounterCoupling::von_neumann();
    let triv = EncounterCoupling::symmetric(0.0, 1.0, 1.0, 0.0, 0.0).unwrap();
    let mix = average_params(&[(w, vn.clone()), (1.0 - w, triv)]).unwrap();
    assert!(mix.r_tilde.iter().all(|r| (r - w).abs() < 1e-15));
    let single = average_maps(&[(1.0, vn.clone())], &ops).unwrap();
    let direct = maps_for(&vn, &ops).unwrap();
    assert!(map_diff(&single.a_0, &direct.a_0) < 1e-15);
    assert!(average_params(&[(0.6, vn.clone()), (0.6, vn)]).is_err());
}

#[test]
fn effective_povm_decomposition() {
    let ops = bare();
    // Equal π and δ for S and T: η̃_j = |π|²/(|π|² + |δ|²) = 0.8.
    let p = derive_map_params(&EncounterCoupling::symmetric(0.6, 1.0, 1.0, 0.5, 0.5).unwrap());
    let povm = effective_r_povm(&p, &ops).unwrap();
    assert!(p.eta_tilde_j[0] <= 1.0 && p.eta_tilde_j[1] <= 1.0);
    assert_eq!(povm.mu, [0.0, 0.0]);
    assert!(povm.positive);
    let sum = &povm.pi_s + &povm.pi_t + &povm.pi_0;
    assert!(max_abs(&(sum - &ops.q_r)) < 1e-14);

    // φ_T = 0 and φ_S = π/3: η̃_S = 1 + cos φ_S = 1.5.
    let p = derive_map_params(&EncounterCoupling::symmetric(PI / 3.0, 1.0, 0.0, 0.0, 0.0).unwrap());
    assert!((p.eta_tilde_j[0] - 1.5).abs() < 1e-14);
    let povm = effective_r_povm(&p, &ops).unwrap();
    assert!((povm.nu[0] - 1.0).abs() < 1e-14 && (povm.mu[0] - 0.5).abs() < 1e-14);
    // Π_0 carries (1 − η̃_S) Q_S with a negative weight.
    assert!(!povm.positive);

    let dark = derive_map_params(&EncounterCoupling::symmetric(0.0, 1.0, 1.0, 0.0, 0.0).unwrap());
    assert!(effective_r_povm(&dark, &ops).is_err());
}

#[test]
fn weak_limit_rates_and_flags() {
    let cp = EncounterCoupling::symmetric(1e-3, 1.0, 0.5, 0.0, 0.0).unwrap();
    let wl = weak_limit(&cp, 1.0).unwrap();
    assert!((wl.rates.r[0] - 1e-6).abs() < 1e-20);
    let p = derive_map_params(&cp);
    let rel = p.r_tilde[0] / wl.rates.r[0] - 1.0;
    assert!((rel + 1e-6 / 3.0).abs() < 1e-12, "{rel}");
    assert!(!wl.outside_weak_regime);
    assert!(
        weak_limit(&EncounterCoupling::von_neumann(), 1.0)
            .unwrap()
            .outside_weak_regime
    );
    assert!(weak_limit(&cp, 0.0).is_err());
}

#[test]
fn weak_encounters_converge_to_lindblad_generator() {
    let ops = bare();
    let amps = [0.9, 0.6, 0.4, 0.7, 0.3, 0.5, 0.2, 0.4];
    let fixed = 1.3; // κ²·rate held fixed: the Lindblad rates do not change
    let mut pts = Vec::new();
    for kappa in [1e-1, 1e-2, 1e-3] {
        let cp = general_coupling(kappa, amps, [0.0; 8]);
        let rate = fixed / (kappa * kappa);
        let wl = weak_limit(&cp, rate).unwrap();
        let lind = generator_full(&wl.rates, &ops).unwrap();
        let maps = maps_for(&cp, &ops).unwrap();
        let dist = (&encounter_generator(&maps, rate) - &lind).norm();
        pts.push((kappa.ln(), dist.ln()));
    }
    let slope = (pts[2].1 - pts[0].1) / (pts[2].0 - pts[0].0);
    assert!((slope - 2.0).abs() < 0.1, "slope {slope}");
}

#[test]
fn three_parameters_determine_maps() {
    let ops = bare();
    let a = EncounterCoupling::symmetric(0.9, 1.0, 0.6, 0.4, 0.0).unwrap();
    let s = 1.7;
    let b = EncounterCoupling::new(
        0.9 * s,
        [
            polar(1.0 / s, 1.1),
            polar(0.6 / s, -0.3),
            polar(0.6 / s, 2.0),
            polar(0.6 / s, 0.5),
        ],
        [polar(0.4 / s, 0.9), c(0.0), c(0.0), c(0.0)],
        SymmetryMode::TripletSymmetricNoTDephasing,
    )
    .unwrap();
    let ma = maps_for(&a, &ops).unwrap();
    let mb = maps_for(&b, &ops).unwrap();
    assert!(map_diff(&ma.a_0, &mb.a_0) < 1e-14);
    for (o, m) in &ma.clicks {
        assert!(map_diff(m, mb.map(*o).unwrap()) < 1e-14);
    }
}

fn amp() -> impl Strategy<Value = [f64; 8]> {
    prop::array::uniform8(0.0..1.5f64)
}

fn phases() -> impl Strategy<Value = [f64; 8]> {
    prop::array::uniform8(-PI..PI)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn environment_trace_reproduces_maps(kappa in 0.0..3.0f64, a in amp(), ph in phases()) {
        let ops = bare();
        let cp = general_coupling(kappa, a, ph);
        let maps = maps_for(&cp, &ops).unwrap();
        let h = interaction_hamiltonian(&cp, &ops);
        let u = expm_taylor(&h, kappa);
        let ne = environment_dim(&cp);
        prop_assert!(max_abs(&(encounter_unitary(&cp, &ops) - &u)) < 1e-10);
        let n = u.nrows();
        prop_assert!(max_abs(&(u.adjoint() * &u - CMat::identity(n, n))) < 1e-12);
        let k0: Vec<CMat> = std::iter::once(0).chain(5..9).map(|e| kraus_block(&u, ne, e)).collect();
        for seed in 0..3 {
            let rho = random_state(ops.dim(), seed);
            prop_assert!(max_abs(&(maps.a_0.apply(&rho) - kraus_apply(&k0, &rho))) < 1e-10);
            for ch in Channel::ALL {
                let kj = kraus_block(&u, ne, 1 + ch.index());
                let got = maps.clicks[ch.index()].1.apply(&rho);
                prop_assert!(max_abs(&(got - kraus_apply(&[kj], &rho))) < 1e-10);
            }
        }
    }

    #[test]
    fn maps_are_cp_and_sum_to_cpt(kappa in 0.0..4.0f64, a in amp(), ph in phases(),
                                  eff in prop::array::uniform4(0.0..=1.0f64), seed in 0u64..1000) {
        let ops = bare();
        let cp = general_coupling(kappa, a, ph);
        let maps = maps_for(&cp, &ops).unwrap();
        let det = with_detection(&maps, &DetectionEfficiencies::per_level(eff).unwrap()).unwrap();
        for m in [&maps, &det] {
            prop_assert!(m.min_choi_eigenvalue() >= -1e-10);
            prop_assert!(m.a_cpt.trace_preservation_defect() < 1e-12);
            let rho = random_state(ops.dim(), seed);
            let total = m.a_0.apply(&rho).trace().re
                + m.clicks.iter().map(|(_, x)| x.apply(&rho).trace().re).sum::<f64>();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
        prop_assert!(maps.params.range_violations().is_empty(), "{:?}", maps.params.range_violations());
    }

    #[test]
    fn symmetric_params_stay_in_range(kappa in 0.0..10.0f64, ps in 0.0..2.0f64, pt in 0.0..2.0f64,
                                      ds in 0.0..2.0f64, dt in 0.0..2.0f64) {
        let p = derive_map_params(&EncounterCoupling::symmetric(kappa, ps, pt, ds, dt).unwrap());
        prop_assert!(p.range_violations().is_empty(), "{:?}", p.range_violations());
        if let Some(phi) = p.phi {
            for j in 0..4 {
                prop_assert!((p.r_tilde[j] + p.d_tilde[j] - phi[j].sin().powi(2)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn maps_preserve_inicon(kappa in 0.0..3.0f64, a in amp(), seed in 0u64..1000) {
        let ops = nuc();
        let cp = general_coupling(kappa, a, [0.0; 8]);
        let maps = maps_for(&cp, &ops).unwrap();
        let rho = random_inicon_state(&ops, seed);
        for m in std::iter::once(&maps.a_0).chain(maps.clicks.iter().map(|(_, m)| m)) {
            let out = m.apply(&rho);
            prop_assert!(max_abs(&(&ops.q_r * &out * &ops.q_p)) < 1e-13);
        }
    }

    #[test]
    fn povm_pieces_sum(kappa in 0.1..3.0f64, ps in 0.1..2.0f64, pt in 0.0..2.0f64, ds in 0.0..1.0f64) {
        let ops = bare();
        let p = derive_map_params(&EncounterCoupling::symmetric(kappa, ps, pt, ds, 0.0).unwrap());
        prop_assume!(p.eta_tilde > 1e-6);
        let povm = effective_r_povm(&p, &ops).unwrap();
        for j in 0..2 {
            prop_assert!((povm.nu[j] + povm.mu[j] - p.eta_tilde_j[j]).abs() < 1e-14);
        }
        let sum = &povm.pi_s + &povm.pi_t + &povm.pi_0;
        prop_assert!(max_abs(&(sum - &ops.q_r)) < 1e-13);
    }
}
