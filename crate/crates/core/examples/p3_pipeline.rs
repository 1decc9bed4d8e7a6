//! Three-node path with a unit point mass in the middle: potential, truncation
//! levels, the extracted measures `nu_k` and the structure residuals.

use renormlab::lattice::{build_local_form, Conductance, LocalGrid};
use renormlab::measures::{decompose, tv_norm, SignedMeasure, Tag, TestDictionary};
use renormlab::renorm::{jump_lambda, structure_check, verify_renormalized};
use renormlab::green::GreenOperator;

fn main() -> renormlab::Result<()> {
    let form = build_local_form(&LocalGrid { dim: 1, n_per_side: 3, lower: 0.0, upper: 4.0, conductance: Conductance::Uniform(1.0) })?;
    let green = GreenOperator::with_defaults(form)?;
    let mu = SignedMeasure::dirac(3, 1, 1.0, Tag::Concentrated);
    let u = green.green_apply(&mu)?;
    println!("u = {u:?}");

    let ks = [0.25, 0.5, 0.75];
    let dict = TestDictionary::default_for(green.form().space());
    let report = verify_renormalized(green.form(), &u, &mu, &ks, &dict)?;
    let (_, mu_c) = decompose(&mu)?;
    println!("|mu_c| = {}", tv_norm(&mu_c));
    println!("{:>6} {:>28} {:>6} {:>10} {:>10}", "k", "nu_k", "|nu_k|", "E(T_k u)", "structure");
    for r in &report.records {
        println!(
            "{:>6} {:>28} {:>6} {:>10.4} {:>10.1e}",
            r.k,
            format!("{:?}", r.nu.masses()),
            r.tv,
            r.truncation_energy,
            r.structure.max()
        );
    }

    // the pure-jump measures behind the identities
    for a in [0.25, -0.25, 0.0] {
        println!("j_{a:<5} = {:?}", jump_lambda(green.form(), &u, a)?.masses());
    }
    let s = structure_check(green.form(), &u, &mu, 0.75)?;
    println!("largest structure residual at k = 0.75: {:e}", s.max());
    Ok(())
}
