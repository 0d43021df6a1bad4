//! Conditional dark evolution with imperfect detectors: the probability of
//! seeing no click and the reactant population given no click, for a
//! von Neumann encounter with a blind triplet detector.

use radpair::conditional::{dark_survival_time, DarkModel, DarkPopulations};
use radpair::encounter::{derive_map_params, DetectionEfficiencies, EncounterCoupling};

fn main() -> radpair::Result<()> {
    let params = derive_map_params(&EncounterCoupling::von_neumann());
    let eps = 1e-10;
    let pops = DarkPopulations::new(1.0 - eps, eps, 0.0)?;
    let ideal = DarkModel::new(&params, &DetectionEfficiencies::per_level([1.0, 0.0, 0.0, 0.0])?)?;
    let leaky = DarkModel::new(&params, &DetectionEfficiencies::per_level([0.9, 0.0, 0.0, 0.0])?)?;

    println!(
        "{:>6} {:>14} {:>14} {:>14} {:>14}",
        "rt", "p(D) η=1", "p(R|D) η=1", "p(D) η=0.9", "p(R|D) η=0.9"
    );
    for k in 0..=16 {
        let rt = 2.5 * k as f64;
        println!(
            "{rt:>6.1} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e}",
            ideal.p_dark(&pops, rt),
            ideal.p_reactant_given_dark(&pops, rt),
            leaky.p_dark(&pops, rt),
            leaky.p_reactant_given_dark(&pops, rt)
        );
    }
    println!(
        "ideal detector: p(R|D) = 1/2 at rt = ln((1 + ε)/ε) = {:.6}",
        ((1.0 + eps) / eps).ln()
    );

    let st = dark_survival_time(1.0, 0.99, 1.0)?;
    println!(
        "survival time for η = 0.99, q = 1: rt = {:.4} (approximation {:.4})",
        st.exact, st.approx
    );
    Ok(())
}
