//! One stochastic trajectory: Poisson encounters with von Neumann maps
//! interrupting coherent hyperfine evolution, with its click record.

use radpair::encounter::{maps_for, DetectionEfficiencies, EncounterCoupling};
use radpair::qcore::{build_subspace_ops, expectation};
use radpair::spinham::{build_hamiltonian, initial_state, Nucleus, SpinSystemSpec};
use radpair::stochastic::{run_trajectory, trajectory_rng, Conditioning, RateModel, TrajectorySetup};

fn main() -> radpair::Result<()> {
    let spec = SpinSystemSpec::zeeman([0.0, 0.0, 0.5]).with_nucleus(0, Nucleus::isotropic(0.5, 1.0)?);
    let layout = spec.layout()?;
    let ops = build_subspace_ops(&layout);
    let gen = build_hamiltonian(&spec, &layout)?;
    let maps = maps_for(&EncounterCoupling::symmetric(0.6, 1.0, 1.0, 0.0, 0.0)?, &ops)?;
    let grid: Vec<f64> = (0..=10).map(|k| k as f64).collect();
    let setup = TrajectorySetup::new(
        &gen,
        &maps,
        &DetectionEfficiencies::perfect(),
        RateModel::constant(1.0)?,
        grid.clone(),
        Conditioning::Unconditional,
    )?;
    let rho0 = initial_state(&layout).into_matrix();
    let traj = run_trajectory(&setup, &rho0, &ops, &mut trajectory_rng(42, 0))?;

    for (t, o) in &traj.record.events {
        println!("encounter at t = {t:.4}: {}", o.label());
    }
    for (t, rho) in grid.iter().zip(&traj.states) {
        if let Some(rho) = rho {
            println!(
                "t = {t:>4.1}  ⟨Q_S⟩ = {:.6}  ⟨Q_P⟩ = {:.6}",
                expectation(rho, &ops.q_s)?,
                expectation(rho, &ops.q_p)?
            );
        }
    }
    Ok(())
}
