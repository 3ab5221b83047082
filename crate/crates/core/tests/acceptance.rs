//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers to run a subset, e.g.
//! `cargo test -p glpin --test acceptance -- 3 12`.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use glpin::experiment::{parse_toml, run_expansion, run_quantization, ExperimentConfig};
use glpin::field::ComplexField;
use glpin::gl::decoupling_residual;
use glpin::grid::DomainSpec;
use glpin::homog::{homogenized_matrix, CellField};
use glpin::pinning::*;
use glpin::s1::*;
use glpin::scalar::{profile_1d_closed_form, solve_1d_interface, solve_u, SolverParams};
use glpin::vortex::{separate, synthetic_vortex, SeparationResult};
use glpin::Point;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_interface_profile() -> Outcome {
    let b = 0.5;
    let p = solve_1d_interface(b, 20.0, 4096).map_err(|e| e.to_string())?;
    let mut sup: f64 = 0.0;
    for (x, u) in p.x.iter().zip(&p.u) {
        sup = sup.max((u - profile_1d_closed_form(b, *x).unwrap()).abs());
    }
    let at0 = profile_1d_closed_form(b, 0.0).unwrap();
    let formula = ((b * b + 1.0) / 2.0).sqrt();
    check(
        sup <= 1e-4 && (at0 - formula).abs() <= 1e-6,
        format!("sup deviation {sup:.2e}, |U(0) - sqrt((b^2+1)/2)| = {:.2e}", (at0 - formula).abs()),
    )
}

fn c2_maximum_principle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for case in 0..10 {
        let b = rng.random_range(0.2..0.9);
        let lambda = rng.random_range(0.2..1.0);
        let delta = [0.2, 0.25, 0.5][rng.random_range(0..3)];
        let omega = if rng.random_bool(0.5) {
            UnitInclusion::Disc { radius: rng.random_range(0.1..0.45) }
        } else {
            UnitInclusion::Polygon { vertices: vec![Point::new(-0.4, -0.35), Point::new(0.4, -0.25), Point::new(0.1, 0.4)] }
        };
        let eps = rng.random_range(0.02..0.08);
        let dom = if case % 2 == 0 { DomainSpec::disc(1.0, 1.0 / 64.0) } else { DomainSpec::rect(2.0, 1.5, 1.0 / 64.0) };
        let a = build_periodic(&PeriodicPinningSpec { b, lambda, delta, omega }, dom).map_err(|e| format!("case {case}: {e}"))?;
        let s = solve_u(&a, eps, &SolverParams::default()).map_err(|e| format!("case {case}: {e}"))?;
        let (lo, hi) = s.u.min_max();
        worst = worst.max(b - lo).max(hi - 1.0);
        if lo < b - 1e-10 || hi > 1.0 + 1e-10 {
            return Err(format!("case {case}: U in [{lo}, {hi}] with b = {b}"));
        }
    }
    Ok(format!("10 cases, worst violation {worst:.2e}"))
}

fn c3_decoupling() -> Outcome {
    let spec = PeriodicPinningSpec { b: 0.5, lambda: 0.5, delta: 0.25, omega: UnitInclusion::Disc { radius: 0.25 } };
    let eps = 0.05;
    let res: Vec<f64> = [1.0 / 32.0, 1.0 / 64.0]
        .iter()
        .map(|&h| {
            let a = build_periodic(&spec, DomainSpec::disc(1.0, h)).unwrap();
            let u = solve_u(&a, eps, &SolverParams::default()).unwrap();
            let v = ComplexField::from_fn(a.grid().clone(), |p| {
                synthetic_vortex(p, Point::new(0.2, 0.1), eps, 1) * synthetic_vortex(p, Point::new(-0.3, -0.2), eps, 1)
            });
            decoupling_residual(&u.u, &v, &a, eps).unwrap()
        })
        .collect();
    let factor = res[0] / res[1];
    check(factor >= 1.8, format!("residual {:.3e} -> {:.3e}, factor {factor:.2}", res[0], res[1]))
}

fn c4_circle_formula() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let b = rng.random_range(0.05..1.0);
        let t = rng.random_range(0.0..2.0 * PI);
        let c = circle_min(b, t).map_err(|e| e.to_string())?;
        let closed = 2.0 * PI * PI / (2.0 * PI + t * (1.0 / (b * b) - 1.0));
        worst = worst.max((c.numerical - closed).abs()).max((c.closed_form - closed).abs());
    }
    check(worst <= 1e-10, format!("20 cases, worst deviation {worst:.2e}"))
}

fn random_ring(rng: &mut ChaCha8Rng, b: f64, k: usize) -> RingSpec {
    let inner = 1.0;
    let outer = rng.random_range(1.5..8.0);
    let weight = if k % 2 == 0 {
        RingWeight::Sector { start: rng.random_range(0.0..6.0), width: rng.random_range(0.1..6.0) }
    } else {
        let discs = (0..3)
            .map(|_| {
                let r = rng.random_range(inner..outer);
                (Point::polar(r, rng.random_range(0.0..2.0 * PI)), rng.random_range(0.1..0.6) * r)
            })
            .collect();
        RingWeight::Discs { discs }
    };
    RingSpec::new(Point::ORIGIN, outer, inner, b, weight, 1)
}

fn c5_ring_laws() -> Outcome {
    let b = 0.5;
    let cb = calibrate_c_b(b).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut law, mut gap_ratio): (f64, f64) = (0.0, 0.0);
    for k in 0..20 {
        let spec = random_ring(&mut rng, b, k);
        let log = (spec.outer / spec.inner).ln();
        for mode in [RingMode::Degree, RingMode::Dirichlet] {
            let one = mu_ring(&spec, mode).map_err(|e| e.to_string())?.energy;
            if one < b * b * PI * log * (1.0 - 1e-3) || one > PI * log * (1.0 + 1e-3) {
                return Err(format!("ring {k} {mode:?}: mu = {one} outside [{}, {}]", b * b * PI * log, PI * log));
            }
            for d in [2, 3] {
                let m = mu_ring(&RingSpec { degree: d, ..spec.clone() }, mode).map_err(|e| e.to_string())?.energy;
                law = law.max((m - (d * d) as f64 * one).abs() / m);
            }
        }
        for d in [1, 2] {
            let s = RingSpec { degree: d, ..spec.clone() };
            let gap = mu_ring(&s, RingMode::Dirichlet).unwrap().energy - mu_ring(&s, RingMode::Degree).unwrap().energy;
            let cap = (d * d) as f64 * 2.0 * cb;
            if gap < -1e-10 || gap > cap {
                return Err(format!("ring {k} degree {d}: gap {gap} outside [0, {cap}]"));
            }
            gap_ratio = gap_ratio.max(gap / cap);
        }
    }
    check(law <= 1e-10, format!("degree law {law:.2e}, largest gap / (d^2 2 C_b) = {gap_ratio:.3}"))
}

fn separation_ok(input: &[Point], eta: f64, s: &SeparationResult) -> bool {
    let n = input.len() as i32;
    let kappa_ok = (0..n).any(|k| 9f64.powi(k) == s.kappa);
    let subset = s.centers.iter().all(|y| input.contains(y));
    let mut separated = true;
    for i in 0..s.centers.len() {
        for j in i + 1..s.centers.len() {
            separated &= s.centers[i].dist(s.centers[j]) >= 8.0 * s.kappa * eta;
        }
    }
    let covered = input.iter().all(|x| s.centers.iter().any(|y| x.dist(*y) + eta <= s.kappa * eta * (1.0 + 1e-12)));
    kappa_ok && subset && separated && covered
}

fn c6_separation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..1000 {
        let n = rng.random_range(1..=8);
        let eta = rng.random_range(0.005..0.2);
        let spread = rng.random_range(0.1..3.0);
        let pts: Vec<Point> = (0..n).map(|_| Point::new(rng.random_range(-spread..spread), rng.random_range(-spread..spread))).collect();
        let s = separate(&pts, eta).map_err(|e| e.to_string())?;
        if !separation_ok(&pts, eta, &s) {
            return Err(format!("case {case}: {pts:?} eta {eta} -> {s:?}"));
        }
    }
    Ok("1000 instances".into())
}

fn c7_circle_bound() -> Outcome {
    let lambda = 1.0 / (16.0 * PI);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..25 {
        let delta = rng.random_range(0.05..0.4);
        let omega = if rng.random_bool(0.5) {
            UnitInclusion::Disc { radius: rng.random_range(0.05..0.45) }
        } else {
            UnitInclusion::Polygon { vertices: vec![Point::new(-0.4, -0.3), Point::new(0.45, -0.2), Point::new(0.1, 0.4), Point::new(-0.3, 0.2)] }
        };
        let spec = PeriodicPinningSpec { b: 0.5, lambda, delta, omega };
        let f = build_periodic(&spec, DomainSpec::rect(4.0, 4.0, 0.125)).map_err(|e| e.to_string())?;
        for _ in 0..20 {
            let rho = rng.random_range(delta / 3.0..1.0);
            let c = Point::new(rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8));
            let ratio = circle_inclusion_length(&f, c, rho) / intersection_bound(lambda, rho);
            worst = worst.max(ratio);
        }
    }
    check(worst <= 1.0, format!("500 circles, largest length / bound = {worst:.3}"))
}

fn e<T>(r: glpin::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn c8_homogenization() -> Outcome {
    let c = e(homogenized_matrix(&e(CellField::constant(64, 0.36))?))?;
    let const_err = (c.entries[0][0] - 0.36).abs().max((c.entries[1][1] - 0.36).abs()).max(c.entries[0][1].abs());
    if const_err > 1e-10 {
        return Err(format!("constant cell off by {const_err:.2e}"));
    }
    let (h1, h2) = (0.25, 1.0);
    let lam = e(homogenized_matrix(&e(CellField::laminate(256, h1, h2))?))?;
    let harm = 2.0 / (1.0 / h1 + 1.0 / h2);
    let arith = 0.5 * (h1 + h2);
    let lam_err = (lam.entries[0][0] - harm).abs().max((lam.entries[1][1] - arith).abs());
    if lam_err > 1e-3 {
        return Err(format!("laminate off by {lam_err:.2e}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..10 {
        // 4 x 4 blocks of random conductivity.
        let blocks: Vec<f64> = (0..16).map(|_| rng.random_range(0.05..1.0)).collect();
        let cell = e(CellField::from_fn(32, 1, |p| blocks[((p.y * 4.0) as usize).min(3) * 4 + ((p.x * 4.0) as usize).min(3)]))?;
        let a = e(homogenized_matrix(&cell))?;
        let [l1, l2] = a.eigenvalues();
        if l1 < cell.harmonic_mean() - 1e-10 || l2 > cell.arithmetic_mean() + 1e-10 {
            return Err(format!("cell {case}: eigenvalues {l1}, {l2} outside [{}, {}]", cell.harmonic_mean(), cell.arithmetic_mean()));
        }
    }
    let omega = UnitInclusion::Disc { radius: 0.25 };
    let mut d = vec![];
    for l in [0.4, 0.2, 0.1] {
        d.push(e(homogenized_matrix(&e(CellField::inclusion(256, 0.5, l, &omega))?))?.distance_to_identity());
    }
    check(
        d[0] > d[1] && d[1] > d[2],
        format!("constant {const_err:.1e}, laminate {lam_err:.1e}, 10 Voigt-Reuss cells, |A - Id| {:.4} > {:.4} > {:.4}", d[0], d[1], d[2]),
    )
}

fn config(text: &str) -> ExperimentConfig {
    let (cfg, _): (ExperimentConfig, _) = parse_toml(text, true).expect("acceptance config parses");
    cfg
}

const QUANTIZATION: &str = r#"
eps = [0.01]
degree = 2
seed = 9

[domain]
h = 0.00390625
shape = { kind = "disc", radius = 1.0 }

[pinning]
kind = "periodic"
b = 0.5
lambda = 0.5
delta = 0.25
omega = { kind = "disc", radius = 0.25 }

[solver]
restarts = 3
"#;

fn c9_quantization() -> Outcome {
    let rec = run_quantization(&config(QUANTIZATION));
    if !rec.is_ok() {
        return Err(format!("{:?}", rec.status));
    }
    let q = &rec.quantization[0];
    let c = &q.checks;
    let nonzero = q.vortices.vortices.iter().filter(|v| v.degree != 0).count();
    let dist = c.min_normalized_distance.unwrap_or(f64::NAN);
    let pair = c.min_pairwise_distance.unwrap_or(f64::NAN);
    let modulus = c.min_modulus_away.unwrap_or(f64::NAN);
    let detail = format!(
        "zeros {nonzero}, degrees {:?}, inside {:?}, dist/(lambda delta) {dist:.3}, pair {pair:.3}, min |v| {modulus:.3} (best restart {})",
        q.vortices.vortices.iter().map(|v| v.degree).collect::<Vec<_>>(),
        c.all_inside,
        q.best_restart
    );
    check(
        nonzero == 2 && c.all_degree_one && c.all_inside == Some(true) && dist >= 0.1 && pair >= 0.2 && modulus >= 0.9,
        detail,
    )
}

fn c10_renormalized_energy() -> Outcome {
    let dom = DomainSpec::disc(1.0, 1.0 / 64.0);
    let w = |p: Point| renormalized_energy(&dom, &[p], None).map_err(|e| e.to_string());
    let s = 0.05;
    let gx = (w(Point::new(s, 0.0))?.extrapolated - w(Point::new(-s, 0.0))?.extrapolated) / (2.0 * s);
    let gy = (w(Point::new(0.0, s))?.extrapolated - w(Point::new(0.0, -s))?.extrapolated) / (2.0 * s);
    let grad = gx.hypot(gy);
    let at0 = w(Point::ORIGIN)?;
    let dir = Point::polar(1.0, 0.7);
    let mut ray = vec![];
    for t in [0.0, 0.15, 0.3, 0.45, 0.6] {
        ray.push(w(dir * t)?.extrapolated);
    }
    let increasing = ray.windows(2).all(|p| p[1] > p[0]);
    check(
        grad <= 1e-2 && at0.gap <= 1e-2 && increasing,
        format!("|grad W(0)| {grad:.2e}, route gap {:.2e}, ray {ray:.4?}", at0.gap),
    )
}

fn c11_i_j_comparison() -> Outcome {
    let dom = DomainSpec::disc(1.0, 1.0 / 64.0);
    let holes = vec![Point::new(-0.3, 0.1), Point::new(0.35, -0.05)];
    let rhos = [0.02, 0.01, 0.005];
    let g = BoundaryPhase::Degree(2);
    let (mut is, mut js) = (vec![], vec![]);
    for &rho in &rhos {
        let pd = PerforatedDomain::new(dom, holes.clone(), rho);
        is.push(minimize_i(&pd, &Weight::Uniform(1.0), &[1, 1], &g).map_err(|e| e.to_string())?.energy);
        js.push(minimize_j(&pd, &Weight::Uniform(1.0), &g).map_err(|e| e.to_string())?.energy);
    }
    let logs: Vec<f64> = rhos.iter().map(|r| r.ln().abs()).collect();
    let slope = |y: &[f64]| {
        let (mx, my) = (logs.iter().sum::<f64>() / 3.0, y.iter().sum::<f64>() / 3.0);
        let sxy: f64 = logs.iter().zip(y).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = logs.iter().map(|x| (x - mx) * (x - mx)).sum();
        sxy / sxx
    };
    let d = 2.0;
    let (si, sj) = (slope(&is), slope(&js));
    let gaps: Vec<f64> = is.iter().zip(&js).map(|(i, j)| j - i).collect();
    let ordered = gaps.iter().all(|&g| g >= -1e-9);
    // Bounded gap: its change over the sweep is a small fraction of the
    // log growth of either energy.
    let drift = (gaps[2] - gaps[0]).abs();
    let bounded = drift <= 0.05 * PI * d * (logs[2] - logs[0]);
    let slopes_ok = (si / (PI * d) - 1.0).abs() <= 0.05 && (sj / (PI * d) - 1.0).abs() <= 0.05;
    check(
        ordered && bounded && slopes_ok,
        format!("J - I {gaps:.4?}, slopes / (pi d): I {:.4}, J {:.4}", si / (PI * d), sj / (PI * d)),
    )
}

const EXPANSION: &str = r#"
eps = [0.02, 0.014, 0.01]
degree = 1
seed = 12

[domain]
h = 0.00390625
shape = { kind = "disc", radius = 1.0 }

[pinning]
kind = "periodic"
b = 0.5
lambda = 1.0
delta = 0.5
omega = { kind = "disc", radius = 0.25 }

[solver]
restarts = 1
"#;

fn c12_expansion() -> Outcome {
    let rec = run_expansion(&config(EXPANSION)).map_err(|e| e.to_string())?;
    let gamma = rec.gamma.as_ref().expect("expansion records gamma");
    let res: Vec<f64> = rec.expansion.iter().map(|r| r.residual.abs()).collect();
    let trend = res.windows(2).all(|w| w[1] <= w[0]);
    let consistent = (gamma.gamma - gamma.gamma_half).abs() <= 1e-3;
    check(
        trend && consistent,
        format!("|residual| {res:.5?}, gamma {:.5} (half-radius {:.5})", gamma.gamma, gamma.gamma_half),
    )
}

const CRITERIA: [(&str, fn() -> Outcome); 12] = [
    ("1d interface profile", c1_interface_profile),
    ("maximum principle", c2_maximum_principle),
    ("decoupling", c3_decoupling),
    ("circle formula", c4_circle_formula),
    ("ring laws", c5_ring_laws),
    ("separation", c6_separation),
    ("circle/inclusion bound", c7_circle_bound),
    ("homogenization", c8_homogenization),
    ("quantization", c9_quantization),
    ("renormalized energy", c10_renormalized_energy),
    ("I/J comparison", c11_i_j_comparison),
    ("energy expansion", c12_expansion),
];

fn main() -> ExitCode {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (k, (name, run)) in CRITERIA.iter().enumerate() {
        let n = k + 1;
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {n:>2} {name} ({secs:.1} s): {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL {n:>2} {name} ({secs:.1} s): {d}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
