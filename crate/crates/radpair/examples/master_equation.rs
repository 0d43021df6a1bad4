//! Reaction master equations: the closed-form solution for general
//! per-level recombination and dephasing rates, compared with the Haberkorn
//! special case, for a pair starting in a singlet–triplet superposition.

use num_complex::Complex64;
use radpair::qcore::{build_subspace_ops, expectation, CMat, HilbertLayout};
use radpair::reactops::{closed_form_full, ReactionRates};

fn main() -> radpair::Result<()> {
    let ops = build_subspace_ops(&HilbertLayout::bare());
    // (|S⟩ + |T0⟩)/√2 in the (S, T0, T+, T−, P) basis.
    let mut rho0 = CMat::zeros(5, 5);
    for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        rho0[(i, j)] = Complex64::new(0.5, 0.0);
    }
    let haberkorn = ReactionRates::haberkorn(1.0, 0.3)?;
    let general = ReactionRates::general([1.0, 0.3, 0.2, 0.4], [0.5, 0.1, 0.1, 0.1])?;

    println!(
        "{:>5} {:>20} {:>20} {:>20}",
        "t", "Q_S (Hab. / gen.)", "Q_P (Hab. / gen.)", "|ρ_S,T0| (Hab. / gen.)"
    );
    for k in 0..=10 {
        let t = 0.5 * k as f64;
        let a = closed_form_full(&rho0, &haberkorn, &ops, t)?;
        let b = closed_form_full(&rho0, &general, &ops, t)?;
        println!(
            "{t:>5.1} {:>9.6} / {:>8.6} {:>9.6} / {:>8.6} {:>9.6} / {:>8.6}",
            expectation(&a, &ops.q_s)?,
            expectation(&b, &ops.q_s)?,
            expectation(&a, &ops.q_p)?,
            expectation(&b, &ops.q_p)?,
            a[(0, 1)].norm(),
            b[(0, 1)].norm()
        );
    }
    Ok(())
}
