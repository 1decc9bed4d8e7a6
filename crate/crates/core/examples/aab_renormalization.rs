//! Renormalized formulation for diffuse data: `E(u, h(u) eta) = <mu, h(u) eta>`
//! for compactly supported `h`, and the decay of the energy near high levels.

use renormlab::green::GreenOperator;
use renormlab::lattice::{build_local_form, Conductance, LevelFunction, LocalGrid};
use renormlab::measures::{SignedMeasure, TestDictionary};
use renormlab::renorm::verify_aab;
use renormlab::sparse::norm_inf;

fn main() -> renormlab::Result<()> {
    let form = build_local_form(&LocalGrid { dim: 2, n_per_side: 16, lower: 0.0, upper: 1.0, conductance: Conductance::Uniform(1.0) })?;
    let space = form.space().clone();
    let density = space.integrate_density(|p| {
        let bump = (1.0 - ((p[0] - 0.4).powi(2) + (p[1] - 0.5).powi(2)) / 0.09).max(0.0);
        20.0 * bump - 8.0 * (-((p[0] - 0.75).powi(2) + (p[1] - 0.3).powi(2)) / 0.01).exp()
    });
    let mu = SignedMeasure::diffuse(density);
    let green = GreenOperator::with_defaults(form)?;
    let u = green.green_apply(&mu)?;
    let sup = norm_inf(&u);

    let m = 1.25 * sup;
    let hs = [LevelFunction::indicator(m), LevelFunction::hat(m), LevelFunction::bump(m)];
    let etas: Vec<Vec<f64>> = TestDictionary::standard([0.0; 2], [1.0; 2], 2, 3).evaluate(&space).into_iter().take(5).collect();
    let ks: Vec<f64> = [0.1, 0.3, 0.5, 0.7, 0.9, 1.0].iter().map(|q| q * sup).collect();
    let report = verify_aab(green.form(), &u, &mu, &hs, &etas, &ks, 1e-9)?;

    let worst = report.entries.iter().map(|e| e.residual / e.scale).fold(0.0, f64::max);
    println!("sup u = {sup:.4}; {} identities, worst scaled residual {worst:.2e}", report.entries.len());
    for (k, e) in &report.phi_energies {
        println!("k = {k:.4}: E(u, T_(k+1) u - T_k u) = {e:.6e}");
    }
    println!("nonincreasing: {}, vanishes past sup: {}", report.phi_nonincreasing, report.phi_vanishes);
    Ok(())
}
