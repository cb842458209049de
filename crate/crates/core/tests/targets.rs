use clusterlab::rng::StreamKey;
use clusterlab::*;
use proptest::prelude::*;

fn doubling() -> MapSystem {
    MapSystem::linear(2).unwrap()
}

#[test]
fn monte_carlo_matches_closed_forms() {
    let lin2 = IntervalMap::linear(2).unwrap();
    let cml = MapSystem::new(MapKind::Cml(CmlSpec::uniform(lin2, 3, 0.0).unwrap())).unwrap();
    let cases = [
        (doubling(), TargetSet::ball(0.3, 0.01)),
        (doubling(), TargetSet::ball(0.004, 0.01)),
        (MapSystem::torus(2).unwrap(), TargetSet::TorusStrip { rho: 0.01 }),
        (
            MapSystem::torus(3).unwrap(),
            TargetSet::Ball { center: vec![0.99, 0.5], rho: 0.05, metric: Metric::Circle },
        ),
        (cml, TargetSet::DiagonalStrip { nu: 0.05 }),
    ];
    for (i, (map, target)) in cases.iter().enumerate() {
        let exact = target.exact_measure(map).unwrap();
        let mc = target.measure_monte_carlo(map, 1_000_000, &StreamKey::new(9, "measure").derive(i as u64)).unwrap();
        assert!((mc.mean - exact).abs() < 4.0 * mc.std_error, "case {i}: {} vs {exact}", mc.mean);
    }
}

#[test]
fn closed_form_values() {
    assert!((TargetSet::ball(0.004, 0.01).exact_measure(&doubling()).unwrap() - 0.014).abs() < 1e-15);
    let torus = MapSystem::torus(2).unwrap();
    assert_eq!(TargetSet::TorusStrip { rho: 0.7 }.exact_measure(&torus), Some(1.0));
    let sine = MapSystem::new(MapKind::Interval(IntervalMap::sine_perturbed(2, 0.1).unwrap())).unwrap();
    assert_eq!(TargetSet::ball(0.5, 0.1).exact_measure(&sine), None);
}

#[test]
fn membership_is_closed() {
    let t = TargetSet::ball(0.5, 0.25);
    assert!(t.contains_point(&[0.25]) && t.contains_point(&[0.75]));
    assert!(!t.contains_point(&[0.7500001]));
    let strip = TargetSet::TorusStrip { rho: 0.25 };
    assert!(strip.contains_point(&[0.1, 0.75]));
    assert!(!strip.contains_point(&[0.1, 0.74]));
}

fn kind_and_point() -> impl Strategy<Value = (TargetSet, Vec<f64>)> {
    prop_oneof![
        (0.0f64..1.0, prop::collection::vec(0.0f64..1.0, 1))
            .prop_map(|(c, p)| (TargetSet::ball(c, 0.5), p)),
        (prop::collection::vec(0.0f64..1.0, 2), prop::collection::vec(0.0f64..1.0, 2)).prop_map(|(c, p)| {
            (TargetSet::Ball { center: c, rho: 0.5, metric: Metric::Circle }, p)
        }),
        prop::collection::vec(0.0f64..1.0, 2).prop_map(|p| (TargetSet::TorusStrip { rho: 0.5 }, p)),
        prop::collection::vec(0.0f64..1.0, 3).prop_map(|p| (TargetSet::DiagonalStrip { nu: 0.5 }, p)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn targets_nest((target, p) in kind_and_point(), r1 in 0.0f64..0.5, r2 in 0.0f64..0.5) {
        let (small, large) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        if target.with_radius(small).contains_point(&p) {
            prop_assert!(target.with_radius(large).contains_point(&p));
        }
    }
}
