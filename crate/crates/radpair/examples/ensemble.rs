//! Trajectory ensembles: the unconditional average over seeded trajectories
//! approaches the master equation with generator r(𝓐_CPT − 1).

use radpair::encounter::{maps_for, DetectionEfficiencies, EncounterCoupling};
use radpair::qcore::{build_subspace_ops, rk4, trace_distance};
use radpair::spinham::{build_hamiltonian, initial_state, Nucleus, SpinSystemSpec};
use radpair::stochastic::{ensemble_average, unconditional_generator, Conditioning, RateModel, TrajectorySetup};

fn main() -> radpair::Result<()> {
    let spec = SpinSystemSpec::zeeman([0.0, 0.0, 0.4]).with_nucleus(0, Nucleus::isotropic(0.5, 1.0)?);
    let layout = spec.layout()?;
    let ops = build_subspace_ops(&layout);
    let gen = build_hamiltonian(&spec, &layout)?;
    let maps = maps_for(&EncounterCoupling::symmetric(0.7, 1.0, 0.8, 0.2, 0.1)?, &ops)?;
    let rate = 0.5;
    let grid: Vec<f64> = (0..=4).map(|k| k as f64).collect();
    let setup = TrajectorySetup::new(
        &gen,
        &maps,
        &DetectionEfficiencies::perfect(),
        RateModel::constant(rate)?,
        grid.clone(),
        Conditioning::Unconditional,
    )?;
    let rho0 = initial_state(&layout).into_matrix();
    let res = ensemble_average(&setup, &rho0, &ops, 4000, 1, None)?;
    let l = unconditional_generator(&gen, &maps, rate).compacted();
    for (k, &t) in grid.iter().enumerate() {
        let me = rk4(|r| l.apply(r), &rho0, t, 1e-3);
        println!(
            "t = {t:.1}  trajectories ⟨Q_S⟩ = {:.4}  master equation ⟨Q_S⟩ = {:.4}  trace distance {:.4}",
            res.expectation(k, &ops.q_s),
            (&me * &ops.q_s).trace().re,
            trace_distance(&res.mean[k], &me)
        );
    }
    Ok(())
}
