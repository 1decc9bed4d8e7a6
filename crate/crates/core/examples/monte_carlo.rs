//! The killed jump process behind a form: additive functionals against the
//! potential (Revuz) and optional stopping at the level sets of `u` (Dynkin).

use renormlab::green::GreenOperator;
use renormlab::lattice::{build_local_form, Conductance, LocalGrid};
use renormlab::measures::{SignedMeasure, Tag};
use renormlab::stochastic::{battery, dynkin_check, holding_time_calibration, revuz_check, McConfig, McEstimate};

fn show(name: &str, e: &McEstimate) {
    println!(
        "{name:<22} mean {:.5} +- {:.5} exact {:.5} ({:?})",
        e.mean,
        e.stderr,
        e.exact.unwrap_or(f64::NAN),
        e.status
    );
}

fn main() -> renormlab::Result<()> {
    let p3 = build_local_form(&LocalGrid { dim: 1, n_per_side: 3, lower: 0.0, upper: 4.0, conductance: Conductance::Uniform(1.0) })?;
    let green = GreenOperator::with_defaults(p3)?;
    let mu = SignedMeasure::dirac(3, 1, 1.0, Tag::Concentrated);
    let u = green.green_apply(&mu)?;
    let cfg = McConfig::new(10_000, 7, 0);
    show("p3 revuz eta=1", &revuz_check(&green, &mu, &[1.0; 3], 0, &cfg)?);
    let d = dynkin_check(&green, &u, &mu, 0.75, 0, &cfg)?;
    show("p3 dynkin k=0.75", &d.identity);
    println!("{:<22} stopped mean {:.5}, reduced value {:.5}", "", d.stopped_value.mean, d.reduced);

    let grid = build_local_form(&LocalGrid { dim: 2, n_per_side: 8, lower: 0.0, upper: 1.0, conductance: Conductance::Uniform(1.0) })?;
    let m = grid.weights().to_vec();
    let green = GreenOperator::with_defaults(grid)?;
    let mu = SignedMeasure::diffuse(m);
    let u = green.green_apply(&mu)?;
    let start = 9;
    let cfg = McConfig::new(10_000, 7, start);
    show("8x8 revuz eta=1", &revuz_check(&green, &mu, &vec![1.0; 64], start, &cfg)?);
    show("8x8 dynkin k=0.06", &dynkin_check(&green, &u, &mu, 0.06, start, &cfg)?.identity);

    let holding = holding_time_calibration(green.form(), 2000, 7, 3.0)?;
    println!("holding times inside 3 sigma at {}/{} nodes", holding.iter().filter(|e| !e.failed()).count(), holding.len());

    let seeds: Vec<u64> = (100..120).collect();
    let b = battery(&seeds, |s| Ok(vec![revuz_check(&green, &mu, &vec![1.0; 64], start, &McConfig::new(10_000, s, start))?]))?;
    println!("battery over {} seeds: pass rate {:.2}", seeds.len(), b.pass_rate);
    Ok(())
}
