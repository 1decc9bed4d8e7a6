//! Mesh refinement for a point mass: on the square and for the fractional
//! kernel with `alpha <= 1/2`, `nu_{k_h}` approaches the atom in the
//! bounded-Lipschitz distance while the discrete capacity of the atom's node decays.

use renormlab::green::SolverConfig;
use renormlab::renorm::{refinement_study, RefinementSetting, RefinementSpec};

fn show(label: &str, spec: &RefinementSpec) -> renormlab::Result<()> {
    let report = refinement_study(spec)?;
    println!("{label}");
    println!("{:>6} {:>10} {:>8} {:>10} {:>8} {:>10}", "res", "h", "sup u", "BL", "|nu|", "capacity");
    for m in &report.meshes {
        println!(
            "{:>6} {:>10.4e} {:>8.3} {:>10.4} {:>8.4} {:>10.4}",
            m.resolution, m.spacing, m.sup_u, m.bl_to_mu_c, m.nu_tv, m.atom_capacity
        );
    }
    println!("BL monotone: {}, capacity decreasing: {}\n", report.bl_monotone, report.capacity_decreasing);
    Ok(())
}

fn main() -> renormlab::Result<()> {
    let square = RefinementSpec {
        setting: RefinementSetting::Local2d { lower: 0.0, upper: 1.0 },
        resolutions: vec![7, 15, 31, 63],
        atoms: vec![([0.5, 0.5], 1.0)],
        theta: 0.5,
        dictionary_per_side: 4,
        solver: SolverConfig::default(),
        slack: 0.0,
    };
    show("unit square, delta at the centre", &square)?;

    let fractional = RefinementSpec {
        setting: RefinementSetting::Fractional1d { lower: 0.0, upper: 1.0, alpha: 0.5, c: 1.0 },
        resolutions: vec![31, 63, 127, 255],
        atoms: vec![([0.5, 0.0], 1.0)],
        ..square.clone()
    };
    show("fractional interval, alpha = 1/2", &fractional)?;

    // points carry capacity in one dimension; the study refuses
    let line = RefinementSpec { setting: RefinementSetting::Local1d { lower: 0.0, upper: 1.0 }, ..fractional };
    match refinement_study(&line) {
        Err(e) => println!("1d local: {e}"),
        Ok(_) => println!("1d local unexpectedly accepted"),
    }
    Ok(())
}
