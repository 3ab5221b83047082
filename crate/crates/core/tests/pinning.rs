use std::f64::consts::PI;

use glpin::grid::DomainSpec;
use glpin::pinning::*;
use glpin::Point;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn field(lambda: f64, delta: f64, omega: UnitInclusion) -> PinningField {
    let spec = PeriodicPinningSpec { b: 0.5, lambda, delta, omega };
    build_periodic(&spec, DomainSpec::rect(4.0, 4.0, 0.125)).unwrap()
}

#[test]
fn random_circles_obey_the_intersection_bound() {
    let lambda = 1.0 / (16.0 * PI);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    for _ in 0..25 {
        let delta = rng.random_range(0.05..0.4);
        let omega = if rng.random_bool(0.5) {
            UnitInclusion::Disc { radius: rng.random_range(0.05..0.45) }
        } else {
            UnitInclusion::Polygon { vertices: vec![Point::new(-0.4, -0.3), Point::new(0.45, -0.2), Point::new(0.1, 0.4), Point::new(-0.3, 0.2)] }
        };
        let f = field(lambda, delta, omega);
        for _ in 0..20 {
            let rho = rng.random_range(delta / 3.0..1.0);
            let c = Point::new(rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8));
            let len = circle_inclusion_length(&f, c, rho);
            assert!(len <= intersection_bound(lambda, rho), "delta {delta} rho {rho}: {len}");
            checked += 1;
        }
    }
    assert_eq!(checked, 500);
}

#[test]
fn exact_arc_lengths_match_angular_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for omega in [UnitInclusion::Disc { radius: 0.3 }, UnitInclusion::Polygon { vertices: vec![Point::new(-0.4, -0.4), Point::new(0.4, -0.3), Point::new(0.0, 0.45)] }] {
        let f = field(0.8, 0.3, omega);
        for _ in 0..20 {
            let c = Point::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
            let rho = rng.random_range(0.05..0.9);
            let exact = circle_inclusion_length(&f, c, rho);
            let sampled = sampled_arc_length(|p| f.geometry.contains(p), c, rho, 200_000);
            assert!((exact - sampled).abs() < 1e-3 * rho, "{exact} vs {sampled}");
        }
    }
}

#[test]
fn circle_examples() {
    let f = field(0.5, 0.25, UnitInclusion::Disc { radius: 0.25 });
    let c = f.geometry.inclusions[0].center;
    // Inclusion radius is 0.25 * 0.125.
    assert!((circle_inclusion_length(&f, c, 0.02) - 2.0 * PI * 0.02).abs() < 1e-12);
    // Midway between four inclusion centres there is nothing within 0.09.
    assert_eq!(circle_inclusion_length(&f, c + Point::new(0.125, 0.125), 0.05), 0.0);
}

#[test]
fn separated_subset_of_periodic_centres_matches_periodic_locally() {
    let dom = DomainSpec::disc(1.0, 1.0 / 64.0);
    let spec = PeriodicPinningSpec { b: 0.4, lambda: 0.5, delta: 0.25, omega: UnitInclusion::Disc { radius: 0.25 } };
    let per = build_periodic(&spec, dom).unwrap();
    // Every other lattice point, at least delta inside the disc.
    let chosen: Vec<Point> = per
        .geometry
        .inclusions
        .iter()
        .map(|i| i.center)
        .filter(|c| ((c.x / 0.5).round() - c.x / 0.5).abs() < 1e-9 && ((c.y / 0.5).round() - c.y / 0.5).abs() < 1e-9)
        .filter(|c| 1.0 - c.norm() >= 0.25)
        .collect();
    assert!(chosen.len() >= 5);
    let dil = DilutedPinningSpec {
        b: 0.4,
        lambda: 0.5,
        delta: 0.25,
        omega: spec.omega.clone(),
        centers: chosen.iter().map(|&center| ScaledCenter { center, level: 1 }).collect(),
        requirement: None,
    };
    let dil = build_diluted(&dil, dom).unwrap();
    let grid = per.grid().clone();
    for (k, &v) in dil.a.values.iter().enumerate() {
        let p = grid.point(k);
        let near = chosen.iter().any(|c| c.dist(p) < 0.125);
        let expect = if near { per.a.values[k] } else { 1.0 };
        assert_eq!(v, expect, "node {k} at {p:?}");
    }
}

proptest! {
    #[test]
    fn periodic_term_is_periodic(x in -0.6f64..0.6, y in -0.6f64..0.6, k in -1i32..=1, l in -1i32..=1) {
        let delta = 0.25;
        let f = field(0.6, delta, UnitInclusion::Disc { radius: 0.3 });
        let p = Point::new(x, y);
        let q = p + Point::new(k as f64 * delta, l as f64 * delta);
        // Both points are well inside the region tiled by interior cells.
        prop_assert_eq!(f.geometry.a(p), f.geometry.a(q));
    }

    #[test]
    fn sampled_values_are_b_or_one(lambda in 0.1f64..1.0, delta in 0.1f64..0.5) {
        let f = field(lambda, delta, UnitInclusion::Disc { radius: 0.25 });
        prop_assert!(f.a.values.iter().all(|&v| v == 0.5 || v == 1.0));
    }
}
