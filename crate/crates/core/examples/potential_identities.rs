//! Potentials of a mixed measure on a 16x16 grid and the duality, very-weak
//! and resolvent identities they satisfy.

use renormlab::green::{resolvent_identity_residual, verify_potential_identities, GreenOperator};
use renormlab::lattice::{build_local_form, Conductance, LocalGrid};
use renormlab::measures::{SignedMeasure, Tag, TestDictionary};

fn main() -> renormlab::Result<()> {
    let form = build_local_form(&LocalGrid { dim: 2, n_per_side: 16, lower: 0.0, upper: 1.0, conductance: Conductance::Uniform(1.0) })?;
    let space = form.space().clone();
    let hill = space.integrate_density(|p| 3.0 * (-((p[0] - 0.35).powi(2) + (p[1] - 0.6).powi(2)) / (2.0 * 0.04)).exp());
    let mut mu = SignedMeasure::diffuse(hill);
    mu.add_atom(space.nearest(&[0.7, 0.3]).0, 0.5, Tag::Concentrated);
    mu.add_atom(space.nearest(&[0.25, 0.25]).0, -0.25, Tag::Diffuse);

    let green = GreenOperator::with_defaults(form)?;
    let u = green.green_apply(&mu)?;
    let sup = u.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    println!("{} nodes, direct solver: {}, sup |u| = {sup:.4}", u.len(), green.is_direct());

    let etas = TestDictionary::standard([0.0; 2], [1.0; 2], 2, 3).evaluate(&space);
    let report = verify_potential_identities(&green, &mu, &etas, 1e-9)?;
    let worst = report.entries.iter().map(|e| (e.duality.max(e.very_weak).max(e.lemma)) / e.scale).fold(0.0, f64::max);
    println!("{} test functions, worst scaled residual {worst:.2e}, passed: {}", etas.len(), report.passed);

    for (a, b) in [(0.5, 1.0), (1.0, 10.0), (0.0, 100.0)] {
        let r = resolvent_identity_residual(&green, a, b, &vec![1.0; u.len()])?;
        println!("resolvent identity a={a} b={b}: {r:.2e}");
    }
    Ok(())
}
