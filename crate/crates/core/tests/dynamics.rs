use clusterlab::rng::StreamKey;
use clusterlab::*;
use proptest::prelude::*;
use statrs::function::gamma::gamma_ur;

fn key(tag: &str) -> StreamKey {
    StreamKey::new(2024, tag)
}

fn built_in_systems() -> Vec<MapSystem> {
    let lin2 = IntervalMap::linear(2).unwrap();
    let lin3 = IntervalMap::linear(3).unwrap();
    let pl = IntervalMap::piecewise_linear(vec![0.0, 0.2, 0.7, 1.0]).unwrap();
    let sine = IntervalMap::sine_perturbed(2, 0.1).unwrap();
    vec![
        MapSystem::linear(2).unwrap(),
        MapSystem::with_backend(MapKind::Interval(lin3.clone()), Backend::Float64Dither).unwrap(),
        MapSystem::new(MapKind::Interval(pl)).unwrap(),
        MapSystem::new(MapKind::Interval(sine.clone())).unwrap().with_burn_in(50),
        MapSystem::torus(3).unwrap(),
        MapSystem::with_backend(MapKind::TorusAffine { a: 2 }, Backend::Float64).unwrap(),
        MapSystem::new(MapKind::Cml(CmlSpec::uniform(lin2.clone(), 3, 0.0).unwrap())).unwrap(),
        MapSystem::new(MapKind::Cml(CmlSpec::uniform(lin2, 2, 0.1).unwrap())).unwrap().with_burn_in(50),
        MapSystem::new(MapKind::Cml(CmlSpec::new(sine, 2, 0.4, vec![0.3, 0.7]).unwrap()))
            .unwrap()
            .with_burn_in(50),
    ]
}

#[test]
fn every_built_in_map_stays_in_the_unit_cube() {
    for (i, sys) in built_in_systems().into_iter().enumerate() {
        let s0 = sys.sample_stationary(&key("closure"), i as u64).unwrap();
        orbit_visitor(&sys, s0, 100_000, |_, s| {
            for c in 0..s.dimension() {
                let x = s.coord(c);
                assert!((0.0..1.0).contains(&x), "system {i}: coordinate {x}");
            }
        });
    }
}

/// Kolmogorov distribution tail `P(K > x)`.
fn kolmogorov_tail(x: f64) -> f64 {
    if x < 0.3 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..100 {
        let t = (-2.0 * (k * k) as f64 * x * x).exp();
        s += if k % 2 == 1 { t } else { -t };
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[test]
fn stationary_samples_are_uniform() {
    for sys in [MapSystem::linear(2).unwrap(), MapSystem::torus(2).unwrap()] {
        let n = 1_000_000u64;
        let mut xs: Vec<f64> = (0..n).map(|i| sys.sample_stationary(&key("ks"), i).unwrap().coord(0)).collect();
        xs.sort_by(f64::total_cmp);
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, x)| ((i + 1) as f64 / n as f64 - x).max(x - i as f64 / n as f64))
            .fold(0.0, f64::max);
        let sn = (n as f64).sqrt();
        let p = kolmogorov_tail((sn + 0.12 + 0.11 / sn) * d);
        assert!(p > 0.01, "KS p-value {p}");
    }
}

#[test]
fn exact_digit_pairs_follow_the_shift() {
    // With B = a^2 bins, the bin of T(x) is (a·i + r) mod B for the bin i
    // of x and a uniform r < a; all other cells are empty.
    for a in [2u32, 3] {
        let sys = MapSystem::linear(a).unwrap();
        let bins: usize = if a == 2 { 16 } else { 9 };
        let n = 1_000_000u64;
        let mut grid = vec![0u64; bins * bins];
        for i in 0..n {
            let s = sys.sample_stationary(&key("pairs"), i).unwrap();
            let t = sys.step(&s);
            let bi = (s.coord(0) * bins as f64) as usize;
            let bj = (t.coord(0) * bins as f64) as usize;
            grid[bi * bins + bj] += 1;
        }
        let cell = 1.0 / (bins * a as usize) as f64;
        let mut chi = 0.0;
        let mut cells = 0;
        for i in 0..bins {
            for j in 0..bins {
                let allowed = (0..a as usize).any(|r| (a as usize * i + r) % bins == j);
                let o = grid[i * bins + j] as f64;
                if allowed {
                    let e = cell * n as f64;
                    chi += (o - e).powi(2) / e;
                    cells += 1;
                } else {
                    assert_eq!(o, 0.0, "a={a}: forbidden cell ({i},{j}) hit");
                }
            }
        }
        let p = gamma_ur((cells - 1) as f64 / 2.0, chi / 2.0);
        assert!(p > 0.01, "a={a}: chi-square p-value {p}");
    }
}

#[test]
fn sampling_is_reproducible_and_trials_differ() {
    let sys = MapSystem::linear(2).unwrap();
    let a = sys.sample_stationary(&key("det"), 7).unwrap();
    assert_eq!(a, sys.sample_stationary(&key("det"), 7).unwrap());
    for j in 0..1000 {
        if j == 7 {
            continue;
        }
        let b = sys.sample_stationary(&key("det"), j).unwrap();
        assert_ne!(a.digit_words().unwrap()[0], b.digit_words().unwrap()[0]);
    }
}

fn interval_map() -> impl Strategy<Value = IntervalMap> {
    prop_oneof![
        (2u32..6).prop_map(|a| IntervalMap::linear(a).unwrap()),
        (2u32..5, -0.12f64..0.12).prop_map(|(a, e)| IntervalMap::sine_perturbed(a, e).unwrap()),
        prop::collection::vec(0.05f64..1.0, 2..5).prop_map(|w| {
            let total: f64 = w.iter().sum();
            let mut breaks = vec![0.0];
            let mut acc = 0.0;
            for x in &w[..w.len() - 1] {
                acc += x / total;
                breaks.push(acc);
            }
            breaks.push(1.0);
            IntervalMap::piecewise_linear(breaks).unwrap()
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn chain_rule(map in interval_map(), x in 0.0f64..1.0, k in 1usize..8) {
        let whole = derivative_along(&map, x, k);
        prop_assume!(whole.is_ok());
        let mut y = x;
        let mut prod = 1.0;
        for _ in 0..k {
            prod *= derivative_along(&map, y, 1).unwrap();
            y = map.eval(y);
        }
        let whole = whole.unwrap();
        prop_assert!((whole - prod).abs() <= 1e-12 * whole);
        prop_assert!(whole >= map.min_derivative().powi(k as i32) * (1.0 - 1e-12));
    }

    #[test]
    fn lattice_keeps_the_diagonal(map in interval_map(), n in 2usize..6, gamma in 0.0f64..1.0,
                                  raw in prop::collection::vec(0.01f64..1.0, 6), x in 0.0f64..1.0) {
        let w: Vec<f64> = raw[..n].to_vec();
        let total: f64 = w.iter().sum();
        let w: Vec<f64> = w.iter().map(|v| v / total).collect();
        let Ok(spec) = CmlSpec::new(map, n, gamma, w) else { return Ok(()) };
        let sys = MapSystem::new(MapKind::Cml(spec)).unwrap();
        let s = sys.state_at(&vec![x; n], key("diag").stream(0)).unwrap();
        let p = sys.step(&s).point();
        prop_assert!(p.iter().all(|v| *v == p[0]));
    }
}
