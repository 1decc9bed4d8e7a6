//! Semilinear problems `-A u = f(u) + mu` with nonincreasing `f`: unique
//! solutions from different starting points, and the comparison principle.

use renormlab::green::GreenOperator;
use renormlab::lattice::{build_local_form, Conductance, LocalGrid};
use renormlab::measures::{SignedMeasure, Tag};
use renormlab::renorm::{semilinear_uniqueness, solve_semilinear, SemilinearConfig};

fn main() -> renormlab::Result<()> {
    let p3 = build_local_form(&LocalGrid { dim: 1, n_per_side: 3, lower: 0.0, upper: 4.0, conductance: Conductance::Uniform(1.0) })?;
    let green = GreenOperator::with_defaults(p3)?;
    let delta = SignedMeasure::dirac(3, 1, 1.0, Tag::Concentrated);
    let cfg = SemilinearConfig::default();

    let linear = |_: usize, u: f64| -u;
    let w = semilinear_uniqueness(&green, &linear, &delta, cfg)?;
    println!("f = -u: u = {:?} (expected [1/7, 3/7, 1/7])", w.from_zero.u);
    println!("  iterations {} / {}, starts differ by {:.1e}", w.from_zero.iterations, w.from_potential.iterations, w.max_difference);

    let cubic = |_: usize, u: f64| -u * u * u;
    let w = semilinear_uniqueness(&green, &cubic, &delta.scaled(5.0), cfg)?;
    println!("f = -u^3, mu = 5 delta: u = {:?}, residual {:.1e}", w.from_zero.u, w.from_zero.residual);

    let grid = build_local_form(&LocalGrid { dim: 2, n_per_side: 12, lower: 0.0, upper: 1.0, conductance: Conductance::Uniform(1.0) })?;
    let space = grid.space().clone();
    let green = GreenOperator::with_defaults(grid)?;
    let tanh = |_: usize, u: f64| -(4.0 * u).tanh();
    let lower = SignedMeasure::diffuse(space.integrate_density(|p| 10.0 * (p[0] - 0.5)));
    let upper = SignedMeasure::diffuse(space.integrate_density(|p| 10.0 * (p[0] - 0.5) + 2.0 * p[1]));
    let zero = vec![0.0; space.len()];
    let u1 = solve_semilinear(&green, &tanh, &lower, &zero, cfg)?;
    let u2 = solve_semilinear(&green, &tanh, &upper, &zero, cfg)?;
    let worst = u1.u.iter().zip(&u2.u).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
    println!("tanh on 12x12: mu1 <= mu2 gives max(u1 - u2) = {worst:.2e}");
    Ok(())
}
