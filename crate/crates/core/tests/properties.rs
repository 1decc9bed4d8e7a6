use proptest::prelude::*;

use renormlab::continuum::{reconstruction_check, ContinuumExample, RadialFn};
use renormlab::green::{capacity, excessive_majorant, GreenOperator, ObstacleConfig};
use renormlab::lattice::{build_fractional_form, build_local_form, energy, Conductance, DiscreteForm, FractionalInterval, LocalGrid};
use renormlab::measures::{decompose, tv_norm, SignedMeasure, Tag, TestDictionary};
use renormlab::renorm::{convexity_gap, extract_nu, jump_lambda, solve_semilinear, structure_check, truncate, verify_renormalized, SemilinearConfig};
use renormlab::sparse::norm_inf;
use renormlab::stochastic::pairwise_sum;

#[derive(Debug, Clone)]
enum Shape {
    Line(usize),
    Square(usize),
    Fractional(usize, f64),
}

fn shape() -> impl Strategy<Value = Shape> {
    prop_oneof![
        (2usize..14).prop_map(Shape::Line),
        (2usize..7).prop_map(Shape::Square),
        (3usize..20, 0.15f64..0.9).prop_map(|(n, a)| Shape::Fractional(n, a)),
    ]
}

fn build(s: &Shape) -> DiscreteForm {
    match *s {
        Shape::Line(n) => build_local_form(&LocalGrid { dim: 1, n_per_side: n, lower: 0.0, upper: 1.0, conductance: Conductance::Uniform(1.0) }),
        Shape::Square(n) => build_local_form(&LocalGrid { dim: 2, n_per_side: n, lower: 0.0, upper: 1.0, conductance: Conductance::Uniform(1.0) }),
        Shape::Fractional(n, alpha) => build_fractional_form(&FractionalInterval { lower: 0.0, upper: 1.0, n, alpha, c: 1.0 }),
    }
    .unwrap()
}

/// A form together with `count` node vectors drawn from `range`.
fn form_with(count: usize, range: std::ops::Range<f64>) -> impl Strategy<Value = (DiscreteForm, Vec<Vec<f64>>)> {
    shape().prop_flat_map(move |s| {
        let form = build(&s);
        let n = form.len();
        (Just(form), proptest::collection::vec(proptest::collection::vec(range.clone(), n), count))
    })
}

fn diffuse(form: &DiscreteForm, density: &[f64]) -> SignedMeasure {
    SignedMeasure::diffuse(density.iter().zip(form.weights()).map(|(d, m)| d * m).collect())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn convexity_gap_matches_its_definition(w in -3.0f64..3.0, v in -3.0f64..3.0, k in -3.0f64..3.0) {
        let s = if w - k > 0.0 { 1.0 } else { -1.0 };
        let direct = (v - k).abs() - (w - k).abs() - s * (v - w);
        let g = convexity_gap(w, v, k);
        prop_assert!(g >= 0.0);
        prop_assert!((g - direct).abs() <= 1e-12 * (1.0 + w.abs() + v.abs() + k.abs()));
    }

    #[test]
    fn jump_measures_are_nonnegative((form, us) in form_with(1, -2.0..2.0), a in -2.5f64..2.5) {
        let j = jump_lambda(&form, &us[0], a).unwrap();
        prop_assert!(j.masses().iter().all(|&m| m >= 0.0));
    }

    #[test]
    fn nu_closes_the_weak_identity((form, v) in form_with(3, -1.0..1.0), k in 0.0f64..1.5) {
        let green = GreenOperator::with_defaults(form.clone()).unwrap();
        let mu = diffuse(&form, &v[0]);
        let u = green.green_apply(&mu).unwrap();
        let nu = extract_nu(&form, &u, &mu, k).unwrap();
        let tk = truncate(&u, k).unwrap();
        for eta in &v[1..] {
            let lhs = energy(&form, &tk, eta).unwrap();
            let rhs = mu.pair(eta) + nu.pair(eta);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs() + tv_norm(&mu) + tv_norm(&nu)));
        }
    }

    #[test]
    fn truncation_energy_and_cross_bound((form, v) in form_with(1, -3.0..3.0), atom in 0.0f64..2.0) {
        let green = GreenOperator::with_defaults(form.clone()).unwrap();
        let mut mu = diffuse(&form, &v[0]);
        mu.add_atom(form.len() / 2, atom, Tag::Concentrated);
        let u = green.green_apply(&mu).unwrap();
        let sup = norm_inf(&u);
        prop_assume!(sup > 0.0);
        let ks: Vec<f64> = (1..=6).map(|i| sup * i as f64 / 5.0).collect();
        let report = verify_renormalized(&form, &u, &mu, &ks, &TestDictionary::default_for(form.space())).unwrap();
        let scale = report.records.iter().map(|r| r.truncation_energy).fold(1.0, f64::max);
        prop_assert!(report.truncation_energy_nondecreasing(1e-9 * scale));
        prop_assert!(report.cross_energy_bounded(1e-9));
    }

    #[test]
    fn structure_identities_for_diffuse_data((form, v) in form_with(1, -4.0..4.0), frac in 0.05f64..1.2) {
        let green = GreenOperator::with_defaults(form.clone()).unwrap();
        let mu = diffuse(&form, &v[0]);
        let u = green.green_apply(&mu).unwrap();
        let k = frac * norm_inf(&u);
        let s = structure_check(&form, &u, &mu, k).unwrap();
        prop_assert_eq!(s.concentrated_below_level, 0.0);
        prop_assert!(s.within(1e-10), "{:?}", s);
    }

    #[test]
    fn structure_identities_with_atoms_above_the_level((form, v) in form_with(1, 0.0..2.0), atom in 0.5f64..3.0, frac in 0.05f64..0.5) {
        let green = GreenOperator::with_defaults(form.clone()).unwrap();
        let mut mu = diffuse(&form, &v[0]);
        let x = form.len() / 2;
        mu.add_atom(x, atom, Tag::Concentrated);
        let u = green.green_apply(&mu).unwrap();
        let k = frac * u[x];
        let s = structure_check(&form, &u, &mu, k).unwrap();
        prop_assert!(s.within(1e-10), "{:?}", s);
    }

    #[test]
    fn green_is_symmetric_and_positive((form, _) in form_with(0, 0.0..1.0)) {
        let green = GreenOperator::with_defaults(form.clone()).unwrap();
        let n = form.len();
        let cols: Vec<Vec<f64>> = (0..n).map(|y| green.column(y).unwrap()).collect();
        for x in 0..n {
            for y in 0..n {
                prop_assert!((cols[y][x] - cols[x][y]).abs() <= 1e-10 * cols[x][x].abs().max(1.0));
                prop_assert!(cols[y][x] > 0.0);
            }
        }
    }

    #[test]
    fn maximum_principle((form, v) in form_with(1, 0.0..1.0)) {
        let green = GreenOperator::with_defaults(form.clone()).unwrap();
        let u = green.green_apply(&diffuse(&form, &v[0])).unwrap();
        prop_assert!(u.iter().all(|&x| x >= -1e-14));
    }

    #[test]
    fn semilinear_comparison((form, v) in form_with(2, -3.0..3.0), cubic in any::<bool>()) {
        let green = GreenOperator::with_defaults(form.clone()).unwrap();
        let mu1 = diffuse(&form, &v[0]);
        let bigger: Vec<f64> = v[0].iter().zip(&v[1]).map(|(a, b)| a + b.abs()).collect();
        let mu2 = diffuse(&form, &bigger);
        let f = move |_: usize, u: f64| if cubic { -u * u * u } else { -u.tanh() };
        let zero = vec![0.0; form.len()];
        let u1 = solve_semilinear(&green, &f, &mu1, &zero, SemilinearConfig::default()).unwrap();
        let u2 = solve_semilinear(&green, &f, &mu2, &zero, SemilinearConfig::default()).unwrap();
        prop_assert!(u1.u.iter().zip(&u2.u).all(|(a, b)| *a <= b + 1e-10));
    }

    #[test]
    fn obstacle_values_decrease_with_the_penalty((form, v) in form_with(1, -1.0..1.0)) {
        let green = GreenOperator::with_defaults(form.clone()).unwrap();
        let h = &v[0];
        let g = vec![1.0; form.len()];
        let mut prev: Option<Vec<f64>> = None;
        for n in [0.0, 0.3, 3.0, 300.0] {
            let vn = excessive_majorant(&green, h, n, &g, ObstacleConfig::default()).unwrap();
            prop_assert!(vn.iter().zip(h).all(|(a, b)| *a >= *b));
            if let Some(p) = &prev {
                prop_assert!(vn.iter().zip(p).all(|(a, b)| *a <= b + 1e-10));
            }
            prev = Some(vn);
        }
    }

    #[test]
    fn capacity_is_monotone_and_subadditive((form, _) in form_with(0, 0.0..1.0), seed in any::<u64>()) {
        let green = GreenOperator::with_defaults(form.clone()).unwrap();
        let n = form.len();
        let a: Vec<usize> = (0..n).filter(|i| (seed >> (i % 64)) & 1 == 1).collect();
        let b: Vec<usize> = (0..n).filter(|i| (seed >> ((i + 7) % 64)) & 1 == 1).collect();
        let union: Vec<usize> = (0..n).filter(|i| a.contains(i) || b.contains(i)).collect();
        let ca = capacity(&green, &a).unwrap().capacity;
        let cb = capacity(&green, &b).unwrap().capacity;
        let cu = capacity(&green, &union).unwrap().capacity;
        prop_assert!(ca <= cu + 1e-10 && cb <= cu + 1e-10);
        prop_assert!(cu <= ca + cb + 1e-10);
    }

    #[test]
    fn jordan_parts_recombine(masses in proptest::collection::vec(-5.0f64..5.0, 1..20), split in any::<u32>()) {
        let tags = (0..masses.len()).map(|i| Some(if (split >> (i % 32)) & 1 == 1 { Tag::Concentrated } else { Tag::Diffuse })).collect();
        let mu = SignedMeasure::from_parts(masses.clone(), tags).unwrap();
        let (d, c) = decompose(&mu).unwrap();
        for i in 0..masses.len() {
            prop_assert_eq!(d.masses()[i] + c.masses()[i], masses[i]);
        }
        prop_assert!((tv_norm(&mu.positive_part()) + tv_norm(&mu.negative_part()) - tv_norm(&mu)).abs() <= 1e-12);
    }

    #[test]
    fn pairwise_sum_agrees_with_naive(xs in proptest::collection::vec(-1e3f64..1e3, 0..500)) {
        let naive: f64 = xs.iter().sum();
        let scale: f64 = xs.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
        prop_assert!((pairwise_sum(&xs) - naive).abs() <= 1e-12 * scale);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn reconstruction_does_not_depend_on_the_levels(b in 0.05f64..3.0, gap in 0.01f64..4.0) {
        let v = reconstruction_check(&ContinuumExample::log2d(), b, b + gap, &RadialFn::constant(1.0)).unwrap();
        prop_assert!((v - 2.0).abs() <= 1e-8);
    }
}
