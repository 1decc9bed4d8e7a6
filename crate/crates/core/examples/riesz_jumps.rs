//! Jump densities of a truncated fractional potential: the lattice measure
//! `j_k(u)/m` against direct quadrature of the continuum kernel.

use renormlab::continuum::{cross_validate_riesz, QuadratureConfig};
use renormlab::green::GreenOperator;
use renormlab::lattice::{build_fractional_form, FractionalInterval};
use renormlab::measures::SignedMeasure;
use renormlab::sparse::norm_inf;

fn main() -> renormlab::Result<()> {
    let form = build_fractional_form(&FractionalInterval { lower: 0.0, upper: 1.0, n: 256, alpha: 0.5, c: 1.0 })?;
    let density = form.space().integrate_density(|p| (1.0 - ((p[0] - 0.5) / 0.3).powi(2)).max(0.0));
    let green = GreenOperator::with_defaults(form)?;
    let u = green.green_apply(&SignedMeasure::diffuse(density))?;
    let k = 0.5 * norm_inf(&u);
    println!("sup u = {:.5}, k = {k:.5}", norm_inf(&u));

    let nodes = [10, 25, 51, 102, 128, 153, 204, 230, 245];
    let cv = cross_validate_riesz(green.form(), &u, k, &nodes, QuadratureConfig::default())?;
    println!("{:>6} {:>8} {:>14} {:>14} {:>10}", "node", "x", "lattice", "quadrature", "rel err");
    for i in 0..nodes.len() {
        let rel = (cv.lattice[i] - cv.quadrature[i]).abs() / cv.quadrature[i].abs().max(f64::MIN_POSITIVE);
        println!("{:>6} {:>8.4} {:>14.6e} {:>14.6e} {:>10.2e}", nodes[i], cv.points[i], cv.lattice[i], cv.quadrature[i], rel);
    }
    println!("max relative error {:.2e}", cv.max_relative_error);
    Ok(())
}
