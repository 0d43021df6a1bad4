//! Encounter instruments: map coefficients and classes of the named
//! encounters, and the Lindblad rates of a weak encounter.

use std::f64::consts::{FRAC_PI_2, PI};

use radpair::encounter::{classify, derive_map_params, maps_for, weak_limit, EncounterCoupling};
use radpair::qcore::{build_subspace_ops, HilbertLayout};

fn main() -> radpair::Result<()> {
    let ops = build_subspace_ops(&HilbertLayout::bare());
    let named = [
        (
            "von Neumann",
            EncounterCoupling::symmetric(FRAC_PI_2, 1.0, 1.0, 0.0, 0.0)?,
        ),
        (
            "pure dephasing",
            EncounterCoupling::symmetric(FRAC_PI_2, 0.0, 0.0, 1.0, 0.0)?,
        ),
        ("Grover", EncounterCoupling::symmetric(PI, 0.0, 0.0, 1.0, 2.0)?),
        ("generic", EncounterCoupling::symmetric(0.7, 1.0, 0.5, 0.3, 0.1)?),
    ];
    for (name, cp) in &named {
        let p = derive_map_params(cp);
        let maps = maps_for(cp, &ops)?;
        println!(
            "{name:<15} {:<20} r̃_S = {:.4}  r̃_T = {:.4}  η̃ = {:.4}  min Choi eigenvalue = {:+.1e}",
            classify(&p).label(),
            p.r_tilde[0],
            p.r_tilde[1],
            p.eta_tilde,
            maps.min_choi_eigenvalue()
        );
    }

    let weak = EncounterCoupling::symmetric(0.05, 1.0, 0.5, 0.3, 0.0)?;
    let wl = weak_limit(&weak, 400.0)?;
    println!(
        "weak encounter κ = 0.05 at rate 400: r = {:?}, d = {:?}, relative error bound {:.1e}",
        wl.rates.r, wl.rates.d, wl.relative_error_bound
    );
    Ok(())
}
