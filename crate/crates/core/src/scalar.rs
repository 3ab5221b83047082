//! The scalar profile `U`: `-Delta U = eps^-2 U (a^2 - U^2)` with `U = 1` on
//! the boundary, the explicit 1D interface profile and closeness
//! diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::NodeRole;
use crate::io::HistoryRow;
use crate::linalg::{self, CgOptions};
use crate::pinning::PinningField;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// Tolerance on the dimensionless residual.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Initial step length of each Newton/descent step, in (0, 1].
    pub damping: f64,
    /// Multiples of epsilon solved first, largest first, when a solve stalls.
    pub continuation: Vec<f64>,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            tolerance: 1e-9,
            max_iterations: 200,
            damping: 1.0,
            continuation: vec![4.0, 2.0],
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::validation("solver tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::validation("max_iterations must be at least 1"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::validation("damping must lie in (0, 1]"));
        }
        if self.continuation.iter().any(|&c| !(c > 1.0)) {
            return Err(Error::validation("continuation factors must exceed 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ScalarSolution {
    pub u: ScalarField,
    pub history: Vec<HistoryRow>,
    pub residual: f64,
    pub energy: f64,
}

fn potential(a: f64, u: f64, inv_eps2: f64) -> f64 {
    let t = a * a - u * u;
    0.25 * inv_eps2 * t * t
}

/// Discrete energy `E(U)` for a real field.
pub fn scalar_energy(u: &ScalarField, a: &PinningField, eps: f64) -> f64 {
    let g = &u.grid;
    let inv_eps2 = 1.0 / (eps * eps);
    let mut dir = 0.0;
    let mut pot = 0.0;
    for k in 0..g.len() {
        if g.cx[k] > 0.0 {
            let d = u.values[k + 1] - u.values[k];
            dir += g.cx[k] * d * d;
        }
        if g.cy[k] > 0.0 {
            let d = u.values[k + g.nx] - u.values[k];
            dir += g.cy[k] * d * d;
        }
        if g.mass[k] > 0.0 {
            pot += g.mass[k] * potential(a.a.values[k], u.values[k], inv_eps2);
        }
    }
    0.5 * dir + pot
}

/// Energy gradient at interior nodes; the dimensionless residual is
/// `eps^2 max |g_n| / h^2`.
fn gradient(u: &[f64], a: &[f64], role: &[NodeRole], nx: usize, h: f64, inv_eps2: f64, g: &mut [f64]) -> f64 {
    let h2 = h * h;
    let mut res: f64 = 0.0;
    for k in 0..u.len() {
        if role[k] != NodeRole::Interior {
            g[k] = 0.0;
            continue;
        }
        let lap = 4.0 * u[k] - u[k - 1] - u[k + 1] - u[k - nx] - u[k + nx];
        let v = lap - h2 * inv_eps2 * u[k] * (a[k] * a[k] - u[k] * u[k]);
        g[k] = v;
        res = res.max(v.abs());
    }
    res / (h2 * inv_eps2)
}

/// Solves for `U` by damped Newton with a convexified Hessian, line search
/// on the discrete energy and projection onto `[b, 1]`. When the iteration
/// stalls, the solve is restarted from the solutions at larger epsilon given
/// by the continuation schedule.
pub fn solve_u(a: &PinningField, eps: f64, params: &SolverParams) -> Result<ScalarSolution> {
    params.validate()?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::validation(format!("epsilon must be positive, got {eps}")));
    }
    let grid = a.grid();
    if grid.h > 0.5 * eps {
        log::warn!("grid spacing {} does not resolve epsilon {} (h > eps/2)", grid.h, eps);
    }
    let init: Vec<f64> = (0..grid.len())
        .map(|k| match grid.role[k] {
            NodeRole::Interior => a.a.values[k].max(a.b()),
            _ => 1.0,
        })
        .collect();
    match newton(a, eps, params, init.clone()) {
        Ok(s) => Ok(s),
        Err(Error::NonConvergence { .. }) if !params.continuation.is_empty() => {
            let mut start = init;
            let mut history = Vec::new();
            for &f in &params.continuation {
                let s = newton(a, f * eps, params, start)?;
                history.extend(s.history.iter().copied());
                start = s.u.values;
            }
            let mut s = newton(a, eps, params, start)?;
            history.extend(s.history);
            s.history = history;
            Ok(s)
        }
        Err(e) => Err(e),
    }
}

fn newton(a: &PinningField, eps: f64, params: &SolverParams, init: Vec<f64>) -> Result<ScalarSolution> {
    let grid = a.grid().clone();
    let (nx, h) = (grid.nx, grid.h);
    let inv_eps2 = 1.0 / (eps * eps);
    let b = a.b();
    let av = &a.a.values;
    let role = &grid.role;
    let n = grid.len();
    let mut u = ScalarField::new(grid.clone(), init);
    let mut g = vec![0.0; n];
    let mut energy = scalar_energy(&u, a, eps);
    let mut history = Vec::new();
    let h2 = h * h;
    for it in 0..params.max_iterations {
        let res = gradient(&u.values, av, role, nx, h, inv_eps2, &mut g);
        history.push(HistoryRow { iteration: it, residual: res, energy });
        if res <= params.tolerance {
            return Ok(ScalarSolution { u, history, residual: res, energy });
        }
        let diag: Vec<f64> = (0..n)
            .map(|k| {
                if role[k] == NodeRole::Interior {
                    let uk = u.values[k];
                    4.0 + h2 * inv_eps2 * (3.0 * uk * uk - av[k] * av[k]).max(0.0)
                } else {
                    1.0
                }
            })
            .collect();
        let apply = |p: &[f64], y: &mut [f64]| {
            for k in 0..n {
                y[k] = if role[k] == NodeRole::Interior {
                    let mut s = diag[k] * p[k];
                    for m in [k - 1, k + 1, k - nx, k + nx] {
                        if role[m] == NodeRole::Interior {
                            s -= p[m];
                        }
                    }
                    s
                } else {
                    0.0
                };
            }
        };
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut step = vec![0.0; n];
        linalg::pcg(
            apply,
            linalg::jacobi(&diag),
            &rhs,
            &mut step,
            CgOptions { rel_tol: 1e-12, max_iter: 5000, ..Default::default() },
        )?;
        let slope = linalg::dot(&g, &step);
        // Projection onto [b, 1] only guards the early, far-from-solution
        // steps; near the solution it would stall the quadratic convergence.
        let (lo, hi) = if res > 1e-6 { (b, 1.0) } else { (f64::NEG_INFINITY, f64::INFINITY) };
        let mut t = params.damping;
        let mut accepted = false;
        let mut trial = u.clone();
        for _ in 0..40 {
            for k in 0..n {
                if role[k] == NodeRole::Interior {
                    trial.values[k] = (u.values[k] + t * step[k]).clamp(lo, hi);
                }
            }
            let e = scalar_energy(&trial, a, eps);
            // Below round-off the energy cannot rank steps; take the full one.
            let negligible = -slope <= 1e-13 * energy.abs();
            if negligible || e <= energy + 1e-4 * t * slope {
                energy = e;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConvergence {
                stage: "scalar Newton (line search)".into(),
                iterations: it,
                residual: res,
                energy,
            });
        }
        std::mem::swap(&mut u, &mut trial);
    }
    let res = gradient(&u.values, av, role, nx, h, inv_eps2, &mut g);
    if res <= params.tolerance {
        return Ok(ScalarSolution { u, history, residual: res, energy });
    }
    Err(Error::NonConvergence {
        stage: "scalar Newton".into(),
        iterations: params.max_iterations,
        residual: res,
        energy,
    })
}

/// Constants `(A, B)` of the explicit 1D profile.
pub fn profile_1d_constants(b: f64) -> Result<(f64, f64)> {
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::validation(format!("b must lie in (0, 1), got {b}")));
    }
    let bb = -(3.0 * b * b + 1.0 + 2.0 * b * (2.0 * (b * b + 1.0)).sqrt()) / (1.0 - b * b);
    let aa = (bb * (1.0 + b) + 1.0 - b) / (bb * (1.0 - b) + 1.0 + b);
    Ok((aa, bb))
}

/// The explicit heteroclinic profile joining `b` at minus infinity to 1 at
/// plus infinity.
pub fn profile_1d_closed_form(b: f64, x: f64) -> Result<f64> {
    let (aa, bb) = profile_1d_constants(b)?;
    let s2 = std::f64::consts::SQRT_2;
    Ok(if x >= 0.0 {
        let e = aa * (s2 * x).exp();
        if e.is_infinite() {
            1.0
        } else {
            (e - 1.0) / (e + 1.0)
        }
    } else {
        let e = bb * (-b * s2 * x).exp();
        if e.is_infinite() {
            b
        } else {
            b * (e - 1.0) / (e + 1.0)
        }
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Profile1d {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

fn reaction(b: f64, right: bool, u: f64) -> (f64, f64) {
    let c = if right { 1.0 } else { b * b };
    (u * (c - u * u), c - 3.0 * u * u)
}

/// Piecewise-linear finite elements for the two-sided ODE on [-L, L] with
/// `U(-L) = b`, `U(L) = 1`; elements cut by the interface are integrated
/// piecewise, so the derivative matching at 0 is built into the weak form.
pub fn solve_1d_interface(b: f64, half_length: f64, n: usize) -> Result<Profile1d> {
    if !(b > 0.0 && b <= 1.0) {
        return Err(Error::validation(format!("b must lie in (0, 1], got {b}")));
    }
    if !(half_length >= 10.0) {
        return Err(Error::validation(format!("half length must be at least 10, got {half_length}")));
    }
    if n < 1000 {
        return Err(Error::validation(format!("need at least 1000 grid points, got {n}")));
    }
    let l = half_length;
    let h = 2.0 * l / (n - 1) as f64;
    let x: Vec<f64> = (0..n).map(|k| -l + k as f64 * h).collect();
    let mut u: Vec<f64> = x.iter().map(|&t| b + (1.0 - b) * 0.5 * (1.0 + t.tanh())).collect();
    u[0] = b;
    u[n - 1] = 1.0;
    // 3-point Gauss on [0, 1].
    let gp = [0.5 - 0.5 * (0.6f64).sqrt(), 0.5, 0.5 + 0.5 * (0.6f64).sqrt()];
    let gw = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

    let assemble = |u: &[f64], res: &mut [f64], jl: &mut [f64], jd: &mut [f64], ju: &mut [f64]| {
        res.iter_mut().for_each(|v| *v = 0.0);
        jl.iter_mut().for_each(|v| *v = 0.0);
        jd.iter_mut().for_each(|v| *v = 0.0);
        ju.iter_mut().for_each(|v| *v = 0.0);
        for e in 0..n - 1 {
            let (xa, xb) = (x[e], x[e + 1]);
            let (ua, ub) = (u[e], u[e + 1]);
            res[e] += (ua - ub) / h;
            res[e + 1] += (ub - ua) / h;
            jd[e] += 1.0 / h;
            jd[e + 1] += 1.0 / h;
            ju[e] -= 1.0 / h;
            jl[e + 1] -= 1.0 / h;
            let pieces: Vec<(f64, f64, bool)> = if xa < 0.0 && xb > 0.0 {
                vec![(xa, 0.0, false), (0.0, xb, true)]
            } else {
                vec![(xa, xb, xa >= 0.0)]
            };
            for (s0, s1, right) in pieces {
                let len = s1 - s0;
                for q in 0..3 {
                    let xi = s0 + gp[q] * len;
                    let w = gw[q] * len;
                    let pb = (xi - xa) / h;
                    let pa = 1.0 - pb;
                    let (f, df) = reaction(b, right, ua * pa + ub * pb);
                    res[e] -= w * f * pa;
                    res[e + 1] -= w * f * pb;
                    jd[e] -= w * df * pa * pa;
                    jd[e + 1] -= w * df * pb * pb;
                    ju[e] -= w * df * pa * pb;
                    jl[e + 1] -= w * df * pa * pb;
                }
            }
        }
    };

    let mut res = vec![0.0; n];
    let (mut jl, mut jd, mut ju) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let interior_norm = |r: &[f64]| r[1..n - 1].iter().map(|v| v * v).sum::<f64>().sqrt();
    for _ in 0..100 {
        assemble(&u, &mut res, &mut jl, &mut jd, &mut ju);
        let rn = interior_norm(&res);
        if rn < 1e-10 {
            return Ok(Profile1d { x, u });
        }
        let m = n - 2;
        let rhs: Vec<f64> = res[1..n - 1].iter().map(|v| -v).collect();
        let mut lo = jl[1..n - 1].to_vec();
        let up = ju[1..n - 1].to_vec();
        lo[0] = 0.0;
        let mut dg = jd[1..n - 1].to_vec();
        // Keep the Newton matrix positive where the reaction destabilises it.
        for (k, d) in dg.iter_mut().enumerate() {
            let off = lo[k].abs() + if k + 1 < m { up[k].abs() } else { 0.0 };
            if *d < 0.5 * off {
                *d = 0.5 * off + 1.0 / h;
            }
        }
        let du = linalg::solve_tridiagonal(&lo, &dg, &up, &rhs)?;
        let mut t = 1.0;
        let mut trial = u.clone();
        loop {
            for k in 0..m {
                trial[k + 1] = u[k + 1] + t * du[k];
            }
            assemble(&trial, &mut res, &mut jl, &mut jd, &mut ju);
            if interior_norm(&res) < rn || t < 1e-6 {
                break;
            }
            t *= 0.5;
        }
        u = trial;
    }
    Err(Error::NonConvergence {
        stage: "1D interface Newton".into(),
        iterations: 100,
        residual: interior_norm(&res),
        energy: f64::NAN,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosenessEntry {
    pub r: f64,
    /// `None` when no node lies at distance at least `r` from the inclusion
    /// boundaries.
    pub max_deviation: Option<f64>,
    pub nodes: usize,
}

/// Maximum of `|U - a|` over nodes at distance at least `R` from the
/// inclusion boundaries, for each `R`.
pub fn closeness_report(u: &ScalarField, a: &PinningField, radii: &[f64]) -> Result<Vec<ClosenessEntry>> {
    if u.grid.len() != a.a.grid.len() || u.grid.nx != a.a.grid.nx {
        return Err(Error::validation("U and the pinning field must share a grid"));
    }
    let grid = &u.grid;
    let dist: Vec<(usize, f64)> = (0..grid.len())
        .filter(|&k| grid.is_active(k))
        .map(|k| (k, a.geometry.distance_to_inclusion_boundary(grid.point(k))))
        .collect();
    Ok(radii
        .iter()
        .map(|&r| {
            let mut m: Option<f64> = None;
            let mut count = 0;
            for &(k, d) in &dist {
                if d >= r {
                    count += 1;
                    let dev = (u.values[k] - a.a.values[k]).abs();
                    m = Some(m.map_or(dev, |x| x.max(dev)));
                }
            }
            ClosenessEntry { r, max_deviation: m, nodes: count }
        })
        .collect())
}

/// Least-squares slope of `ln(max deviation)` against `R`.
pub fn fit_decay_rate(entries: &[ClosenessEntry]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = entries
        .iter()
        .filter_map(|e| e.max_deviation.filter(|&v| v > 0.0).map(|v| (e.r, v.ln())))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}
