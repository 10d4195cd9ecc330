use proptest::prelude::*;
use soficlab_core::bernoulli::{
    coset_product, exact_mean, exact_variance, export_relation_data, phi_f, pushforward,
    sample_labels, variance_bound,
};
use soficlab_core::irs::subgroup_violation;
use soficlab_core::relation::{intersection_defect, BinSet};
use soficlab_core::{
    ActionSpec, ApproxHom, CylinderFunction, CylinderSet, Element, GroupSpec, Pattern, Permutation,
    StepFunction,
};

fn step() -> impl Strategy<Value = StepFunction> {
    prop::collection::vec(0.0f64..2.0, 1..6).prop_map(|v| StepFunction::new(v).unwrap())
}

fn z(v: i64) -> Element {
    Element::Lattice(vec![v])
}

/// Degree-`d` approximate homomorphism of `Z` from an arbitrary generator image.
fn z_action(d: usize, seed: u64) -> ApproxHom {
    let spec = GroupSpec::lattice(1);
    let w = spec.ball(3).unwrap();
    ApproxHom::from_action(&spec, &ActionSpec::RandomGenerators { d, seed }, d, &w).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn variance_respects_bound(
        d in 1usize..60,
        seed in any::<u64>(),
        fs in prop::collection::vec(step(), 0..4),
        shifts in prop::collection::vec(-3i64..=3, 4),
        bit in prop::option::of(-2i64..=2),
    ) {
        let sigma = z_action(d, seed);
        let mut labels = Vec::new();
        for (f, s) in fs.into_iter().zip(shifts) {
            if labels.iter().all(|(g, _): &(Element, StepFunction)| *g != z(s)) {
                labels.push((z(s), f));
            }
        }
        let f = CylinderFunction::new(labels, bit.map(z).into_iter().collect()).unwrap();
        let v = exact_variance(&sigma, &f).unwrap();
        prop_assert!(v >= -1e-12);
        prop_assert!(v <= variance_bound(d, &f) + 1e-12);
        let m = exact_mean(&sigma, &f).unwrap();
        prop_assert!(m >= 0.0 && m <= f.sup() + 1e-12);
    }

    #[test]
    fn labels_independent_of_degree_prefix(seed in any::<u64>(), d in 1usize..2000) {
        let a = sample_labels(d, seed);
        let b = sample_labels(d + 17, seed);
        prop_assert_eq!(&a.values[..], &b.values[..d]);
        prop_assert!(a.values.iter().all(|x| (0.0..1.0).contains(x)));
    }

    #[test]
    fn export_intersections_are_exact(d in 1usize..300, seed in any::<u64>(), m1 in 1u64..16, m2 in 1u64..16) {
        let sigma = z_action(d, seed);
        let x = sample_labels(d, seed ^ 1);
        let b1 = CylinderSet::label(z(0), BinSet::new(4, m1).unwrap()).with_bit(z(1), false);
        let b2 = CylinderSet::label(z(-1), BinSet::new(4, m2).unwrap()).with_bit(z(2), false);
        let both = b1.intersect(&b2).unwrap();
        let data = export_relation_data(&sigma, &x, &[b1.clone(), b2.clone(), both]).unwrap();
        prop_assert_eq!(intersection_defect(&data, &b1, &b2).unwrap(), 0.into());
    }

    #[test]
    fn pushforward_is_an_average(d in 1usize..100, seed in any::<u64>(), f in step()) {
        // with a single label at e the pushforward is the mean of f over the labels
        let sigma = z_action(d, seed);
        let x = sample_labels(d, seed);
        let c = CylinderFunction::new(vec![(z(0), f.clone())], vec![]).unwrap();
        let direct: f64 = x.values.iter().map(|&v| f.eval(v)).sum::<f64>() / d as f64;
        prop_assert!((pushforward(&sigma, &x, &c).unwrap() - direct).abs() < 1e-12);
    }
}

#[test]
fn phi_equals_coset_factor_on_all_consistent_patterns() {
    for spec in [GroupSpec::lattice(1), GroupSpec::lattice(2)] {
        let w = spec.ball(2).unwrap();
        let table = w.table(&spec);
        let e: Vec<Element> = spec.ball(1).unwrap().elements().to_vec();
        let f = CylinderFunction::new(
            e.iter()
                .enumerate()
                .map(|(i, g)| {
                    (
                        g.clone(),
                        StepFunction::new(vec![0.5 + i as f64, 0.25, 1.75]).unwrap(),
                    )
                })
                .collect(),
            vec![],
        )
        .unwrap();
        let mut checked = 0;
        for code in 0u64..1 << w.len() {
            let bits: Vec<bool> = (0..w.len()).map(|i| code >> i & 1 == 1).collect();
            let y = Pattern::from_bits(&bits);
            if subgroup_violation(&w, &table, &y).is_some() {
                continue;
            }
            let a = phi_f(&spec, &w, &y, &f).unwrap();
            let b = coset_product(&spec, &w, &y, &f).unwrap();
            assert!(
                (a - b).abs() <= 1e-12 * a.abs().max(b.abs()),
                "{y}: {a} vs {b}"
            );
            checked += 1;
        }
        assert!(checked >= 2);
    }
}

#[test]
fn fixed_point_free_generator_kills_bit_cylinder() {
    let spec = GroupSpec::lattice(1);
    let w = spec.ball(1).unwrap();
    let sigma =
        ApproxHom::from_generator_images(&spec, &[Permutation::rotation(30, 1)], &w).unwrap();
    let f = CylinderFunction::new(
        vec![(z(0), StepFunction::constant(1.0).unwrap())],
        vec![z(1)],
    )
    .unwrap();
    assert_eq!(pushforward(&sigma, &sample_labels(30, 1), &f).unwrap(), 0.0);
    assert_eq!(exact_mean(&sigma, &f).unwrap(), 0.0);
}
