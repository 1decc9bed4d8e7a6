//! Equilibrium potentials and the penalized obstacle problem on a path.
//! As the running cost grows the value function collapses onto the obstacle;
//! without cost it is the smallest excessive majorant.

use renormlab::green::{capacity, excessive_majorant, is_excessive, GreenOperator, ObstacleConfig};
use renormlab::lattice::{build_local_form, Conductance, LocalGrid};

fn main() -> renormlab::Result<()> {
    let form = build_local_form(&LocalGrid { dim: 1, n_per_side: 3, lower: 0.0, upper: 4.0, conductance: Conductance::Uniform(1.0) })?;
    let green = GreenOperator::with_defaults(form)?;

    for set in [vec![0], vec![1], vec![0, 2], vec![0, 1, 2]] {
        let c = capacity(&green, &set)?;
        println!("cap({set:?}) = {:.4}, equilibrium potential {:?}", c.capacity, c.potential);
    }

    let h = [1.0, 0.0, 0.0];
    let g = [1.0; 3];
    for n in [0.0, 1.0, 10.0, 1e3, 1e9] {
        let v = excessive_majorant(&green, &h, n, &g, ObstacleConfig::default())?;
        println!("n = {n:>7.0e}: v = [{:.6}, {:.6}, {:.6}]", v[0], v[1], v[2]);
    }
    let reduite = excessive_majorant(&green, &h, 0.0, &g, ObstacleConfig::default())?;
    println!("reduite excessive: {}", is_excessive(green.form(), &reduite, 1e-10)?.excessive);

    // a wider grid with a two-bump obstacle
    let line = build_local_form(&LocalGrid { dim: 1, n_per_side: 40, lower: 0.0, upper: 1.0, conductance: Conductance::Uniform(1.0) })?;
    let xs: Vec<f64> = line.space().positions().iter().map(|p| p[0]).collect();
    let green = GreenOperator::with_defaults(line)?;
    let h: Vec<f64> = xs.iter().map(|x| (1.0 - ((x - 0.3) / 0.1).powi(2)).max(0.0) + 0.5 * (1.0 - ((x - 0.75) / 0.1).powi(2)).max(0.0)).collect();
    let v = excessive_majorant(&green, &h, 0.0, &vec![1.0; h.len()], ObstacleConfig::default())?;
    let contact = v.iter().zip(&h).filter(|(v, h)| (*v - *h).abs() < 1e-9 && **h > 0.0).count();
    println!("two bumps: sup v = {:.4}, contact nodes = {contact}", v.iter().cloned().fold(0.0, f64::max));
    Ok(())
}
