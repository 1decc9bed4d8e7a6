//! The planar logarithmic potential: reconstructing the point mass from level
//! differences, the mass carried by each level line, and the occupation formula.

use renormlab::continuum::{level_line_mass, level_radius, occupation_check, reconstruction_check, ContinuumExample, LevelProfile, RadialFn};

fn main() -> renormlab::Result<()> {
    let ex = ContinuumExample::log2d();
    let one = RadialFn::constant(1.0);
    let bump = RadialFn::gaussian(0.5);

    println!("{:>5} {:>5} {:>14} {:>14}", "b", "c", "eta = 1", "gaussian");
    for (b, c) in [(0.1, 0.2), (0.5, 0.75), (1.0, 2.0), (2.0, 7.0), (5.0, 5.1)] {
        println!("{b:>5} {c:>5} {:>14.10} {:>14.10}", reconstruction_check(&ex, b, c, &one)?, reconstruction_check(&ex, b, c, &bump)?);
    }
    println!("(the gaussian column tends to 2 eta(0) = 2 as the levels grow)\n");

    for a in [0.25, 0.5, 1.0, 5.0] {
        println!("level {a:>5}: radius {:.6}, line mass {:.12}", level_radius(a), level_line_mass(&ex, a, &one)?);
    }

    let cases = [
        (LevelProfile::indicator(1.0, 2.0), RadialFn::constant(1.0)),
        (LevelProfile::bump(0.2, 0.6), RadialFn::gaussian(0.7)),
        (LevelProfile::indicator(0.1, 0.4), RadialFn::annular_cutoff(0.2, 0.9)),
    ];
    println!();
    for (phi, eta) in &cases {
        let r = occupation_check(&ex, phi, eta)?;
        println!("{} x {}: lhs {:.12}, rhs {:.12}, gap {:.1e}", phi.name(), eta.name(), r.lhs, r.rhs, r.gap());
    }
    Ok(())
}
