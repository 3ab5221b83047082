use std::sync::Arc;

use glpin::field::{ComplexField, ScalarField};
use glpin::grid::{DomainSpec, Grid};
use glpin::pinning::{build_periodic, PeriodicPinningSpec, UnitInclusion};
use glpin::vortex::*;
use glpin::Point;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn disc_grid(h: f64) -> Arc<Grid> {
    Arc::new(Grid::new(DomainSpec::disc(1.0, h)).unwrap())
}

fn vortices(grid: &Arc<Grid>, list: &[(Point, i32)], eps: f64) -> ComplexField {
    ComplexField::from_fn(grid.clone(), |p| list.iter().fold(Complex64::new(1.0, 0.0), |acc, &(c, d)| acc * synthetic_vortex(p, c, eps, d)))
}

#[test]
fn degree_of_simple_fields() {
    let g = disc_grid(1.0 / 64.0);
    let c = Point::new(0.1, -0.2);
    let v = vortices(&g, &[(c, 1)], 0.02);
    assert_eq!(degree_on_circle(&v, c, 0.3).unwrap(), 1);
    let conj = ComplexField::new(g.clone(), v.values.iter().map(|z| z.conj()).collect());
    assert_eq!(degree_on_circle(&conj, c, 0.3).unwrap(), -1);
    let one = ComplexField::from_fn(g.clone(), |_| Complex64::new(1.0, 0.0));
    assert_eq!(degree_on_circle(&one, Point::ORIGIN, 0.5).unwrap(), 0);
    let two = vortices(&g, &[(c, 2)], 0.02);
    assert_eq!(degree_on_circle(&two, c, 0.3).unwrap(), 2);
}

#[test]
fn degree_circle_through_a_core_is_an_error() {
    let g = disc_grid(1.0 / 64.0);
    let v = vortices(&g, &[(Point::new(0.3, 0.0), 1)], 0.05);
    assert!(degree_on_circle(&v, Point::ORIGIN, 0.3).is_err());
    assert!(degree_on_circle(&v, Point::ORIGIN, 0.99).is_err());
}

#[test]
fn detection_recovers_synthetic_vortices() {
    let g = disc_grid(1.0 / 128.0);
    let list = [(Point::new(-0.31, 0.27), 1), (Point::new(0.4, -0.1), 1), (Point::new(0.05, -0.5), -1)];
    let v = vortices(&g, &list, 0.02);
    let z = detect_zeros(&v, DetectOptions { min_radius: 0.06, ..Default::default() }).unwrap();
    assert_eq!(z.vortices.len(), 3);
    assert_eq!(z.total_degree(), 1);
    for (c, d) in list {
        let hit = z.vortices.iter().find(|v| v.position.dist(c) < 1e-3).expect("vortex found");
        assert_eq!(hit.degree, d);
    }
    assert!(z.phantom_dips.is_empty());
}

#[test]
fn separation_examples() {
    let eta = 0.1;
    let two = [Point::new(0.0, 0.0), Point::new(16.0 * eta, 0.0)];
    let s = separate(&two, eta).unwrap();
    assert_eq!(s.centers.len(), 2);
    assert_eq!(s.kappa, 1.0);

    let three = [Point::new(0.0, 0.0), Point::new(2.0 * eta, 0.0), Point::new(4.0 * eta, 0.0)];
    let s = separate(&three, eta).unwrap();
    assert_eq!(s.centers.len(), 1);
    assert!(check_cover(&three, eta, &s));

    let one = [Point::new(0.3, 0.3)];
    let s = separate(&one, eta).unwrap();
    assert_eq!((s.centers.len(), s.kappa), (1, 1.0));
}

/// Every input disc `B(x, eta)` lies inside one `B(y, kappa eta)`, i.e.
/// `|x - y| + eta <= kappa eta`.
fn check_cover(input: &[Point], eta: f64, s: &SeparationResult) -> bool {
    input
        .iter()
        .all(|x| s.centers.iter().any(|y| x.dist(*y) + eta <= s.kappa * eta * (1.0 + 1e-12)))
}

fn brute_force_ok(input: &[Point], eta: f64, s: &SeparationResult) -> bool {
    let n = input.len() as i32;
    let kappa_ok = (0..n).any(|k| 9f64.powi(k) == s.kappa);
    let subset = s.centers.iter().all(|y| input.contains(y));
    let mut separated = true;
    for i in 0..s.centers.len() {
        for j in i + 1..s.centers.len() {
            separated &= s.centers[i].dist(s.centers[j]) >= 8.0 * s.kappa * eta;
        }
    }
    // Covering checked pointwise on a fine sampling of every input disc.
    let mut covered = true;
    for x in input {
        for k in 0..64 {
            for r in [0.0, 0.5, 1.0] {
                let p = *x + Point::polar(r * eta, k as f64 * std::f64::consts::TAU / 64.0);
                covered &= s.centers.iter().any(|y| p.dist(*y) <= s.kappa * eta * (1.0 + 1e-12));
            }
        }
    }
    kappa_ok && subset && separated && covered && check_cover(input, eta, s)
}

#[test]
fn separation_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..1000 {
        let n = rng.random_range(1..=8);
        let eta = rng.random_range(0.005..0.2);
        let spread = rng.random_range(0.1..3.0);
        let pts: Vec<Point> = (0..n).map(|_| Point::new(rng.random_range(-spread..spread), rng.random_range(-spread..spread))).collect();
        let s = separate(&pts, eta).unwrap();
        assert!(brute_force_ok(&pts, eta, &s), "case {case}: {pts:?} eta {eta} -> {s:?}");
    }
}

#[test]
fn separation_process_stops_by_rule() {
    let pts = [Point::new(0.0, 0.0), Point::new(0.01, 0.0), Point::new(1.0, 0.0)];
    let t = separation_process(&pts, 0.05).unwrap();
    assert_eq!(t.stop_rule, "separated");
    let last = t.steps.last().unwrap();
    assert_eq!(last.centers.len(), 2);
    assert!((t.steps[0].eta_prime - 0.0025).abs() < 1e-15);
    assert!((t.steps[0].eta - 2.0 * t.steps[0].kappa * t.steps[0].eta_prime).abs() < 1e-15);

    let t = separation_process(&pts, 10.0).unwrap();
    assert_eq!(t.stop_rule, "single point");
}

#[test]
fn pinning_report_examples() {
    let spec = PeriodicPinningSpec { b: 0.5, lambda: 0.5, delta: 0.25, omega: UnitInclusion::Disc { radius: 0.25 } };
    let field = build_periodic(&spec, DomainSpec::disc(1.0, 1.0 / 64.0)).unwrap();
    let center = field.geometry.inclusions[0].center;
    let outside = center + Point::new(0.1, 0.1);
    let set = VortexSet {
        threshold: 0.5,
        vortices: vec![
            Vortex { position: center, degree: 1, circle_radius: 0.05 },
            Vortex { position: outside, degree: 1, circle_radius: 0.05 },
        ],
        phantom_dips: vec![],
        boundary_components: vec![],
    };
    let rep = pinning_report(&set, &field, spec.lambda * spec.delta);
    assert!(rep.zeros[0].inside);
    assert!((rep.zeros[0].normalized_distance - 0.25).abs() < 1e-12);
    assert!(!rep.zeros[1].inside);
    assert!((rep.min_pairwise_distance.unwrap() - 0.1 * 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn bad_discs_are_stable_under_the_constant() {
    let eps = 0.02;
    let g = disc_grid(1.0 / 128.0);
    let list = [(Point::new(-0.4, 0.1), 1), (Point::new(0.35, -0.2), 1)];
    let v = vortices(&g, &list, eps);
    let u = ScalarField::constant(g.clone(), 1.0);
    let all = classify_discs(&v, &u, eps, 0.5, 0.0).unwrap();
    let c0 = calibrated_c0(&all, eps);
    for f in [0.7, 1.0, 1.4] {
        let cl = classify_discs(&v, &u, eps, 0.5, f * c0).unwrap();
        assert!(!cl.bad.centers.is_empty());
        // Bad discs sit at the vortices only.
        for c in &cl.bad.centers {
            assert!(list.iter().any(|(p, _)| p.dist(*c) < 2.0 * cl.bad.radius), "stray bad disc at {c:?}");
        }
        for (p, _) in &list {
            assert!(cl.bad.centers.iter().any(|c| c.dist(*p) < cl.bad.radius));
        }
    }
}

#[test]
fn modulus_away_from_zeros() {
    let g = disc_grid(1.0 / 64.0);
    let c = Point::new(0.2, 0.1);
    let v = vortices(&g, &[(c, 1)], 0.01);
    let m = min_modulus_away(&v, &[c], 0.1).unwrap();
    assert_eq!(min_modulus_away(&v, &[c], 3.0), None);
    assert!(m > (0.1f64 / 0.01 - 0.05).tanh() - 1e-3 && m < 1.0);
}
