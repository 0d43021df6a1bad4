//! A cloud of radical pairs observed through its click counts: the exact
//! single-pair update and the stochastic master equation driven by the same
//! click record.

use radpair::conditional::simulate_cloud;
use radpair::encounter::{maps_for, with_detection, DetectionEfficiencies, EncounterCoupling};
use radpair::qcore::{build_subspace_ops, expectation, HilbertLayout};
use radpair::spinham::initial_state;
use radpair::stochastic::trajectory_rng;

fn main() -> radpair::Result<()> {
    let layout = HilbertLayout::bare();
    let ops = build_subspace_ops(&layout);
    let maps = maps_for(&EncounterCoupling::symmetric(0.9, 1.0, 0.7, 0.1, 0.0)?, &ops)?;
    let maps = with_detection(&maps, &DetectionEfficiencies::collapsed(0.8, 0.5)?)?;
    let rho0 = initial_state(&layout).into_matrix();
    let (rate, dt) = (1.0, 0.01);
    let run = simulate_cloud(&rho0, &maps, 10_000, rate, dt, 500, &mut trajectory_rng(5, 0))?;
    println!(
        "{:>6} {:>6} {:>9} {:>12} {:>12}",
        "t", "clicks", "z", "⟨Q_S⟩ exact", "⟨Q_S⟩ SME"
    );
    for k in (0..run.t.len()).step_by(50) {
        println!(
            "{:>6.2} {:>6} {:>9.3} {:>12.6} {:>12.6}",
            run.t[k],
            run.l[k],
            run.z[k],
            expectation(&run.states_exact[k], &ops.q_s)?,
            expectation(&run.states_sme[k], &ops.q_s)?
        );
    }
    Ok(())
}
