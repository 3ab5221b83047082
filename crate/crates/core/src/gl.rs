//! Discrete Ginzburg-Landau energies, boundary data, the minimizer of the
//! reduced energy `F` and the radial vortex profile.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, ScalarField};
use crate::geom::{wrap_angle, Point};
use crate::grid::{Grid, NodeRole, Shape};
use crate::io::HistoryRow;
use crate::linalg::{self, CgOptions};
use crate::pinning::{PinningField, PinningGeometry};

/// Dirichlet trace of degree `degree` on the boundary nodes of a grid.
#[derive(Debug, Clone)]
pub struct BoundaryData {
    pub degree: i32,
    pub grid: Arc<Grid>,
    /// Values on the whole grid; only boundary nodes are meaningful.
    pub values: Vec<Complex64>,
}

/// `g = exp(i d theta)` with `theta` the polar angle about the domain center.
pub fn make_boundary_data(d: i32, grid: &Arc<Grid>) -> BoundaryData {
    let c = grid.domain.center;
    let values = (0..grid.len())
        .map(|k| match grid.role[k] {
            NodeRole::Boundary => Complex64::from_polar(1.0, d as f64 * (grid.point(k) - c).angle()),
            _ => Complex64::new(1.0, 0.0),
        })
        .collect();
    BoundaryData {
        degree: d,
        grid: grid.clone(),
        values,
    }
}

/// Boundary nodes of the outer boundary component, sorted by polar angle.
pub fn outer_boundary_loop(grid: &Grid) -> Vec<usize> {
    let c = grid.domain.center;
    let cut = match grid.domain.shape {
        Shape::Annulus { radius, inner } => 0.5 * (radius + inner),
        _ => 0.0,
    };
    let mut nodes: Vec<(f64, usize)> = (0..grid.len())
        .filter(|&k| grid.role[k] == NodeRole::Boundary && (grid.point(k) - c).norm() >= cut)
        .map(|k| ((grid.point(k) - c).angle(), k))
        .collect();
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    nodes.into_iter().map(|x| x.1).collect()
}

impl BoundaryData {
    /// Winding number of the trace along the outer boundary.
    pub fn winding(&self) -> i32 {
        let lp = outer_boundary_loop(&self.grid);
        let n = lp.len();
        let total: f64 = (0..n)
            .map(|i| wrap_angle(self.values[lp[(i + 1) % n]].arg() - self.values[lp[i]].arg()))
            .sum();
        (total / (2.0 * PI)).round() as i32
    }

    pub fn validate(&self) -> Result<()> {
        for (k, z) in self.values.iter().enumerate() {
            if self.grid.role[k] == NodeRole::Boundary && (z.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::validation(format!("boundary value at node {k} is not unimodular")));
            }
        }
        if self.winding() != self.degree {
            return Err(Error::validation(format!(
                "boundary trace winds {} times, expected degree {}",
                self.winding(),
                self.degree
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub dirichlet: f64,
    pub potential: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    fn new(dirichlet: f64, potential: f64) -> Self {
        EnergyBreakdown {
            dirichlet,
            potential,
            total: dirichlet + potential,
        }
    }
}

/// Quartic functional `sum_e w_e |dv|^2 / 2 + sum_n k_n (c_n - |v_n|^2)^2`
/// on a grid, with unknowns at interior nodes.
struct Functional<'a> {
    grid: &'a Grid,
    wx: Vec<f64>,
    wy: Vec<f64>,
    k: Vec<f64>,
    c: Vec<f64>,
}

impl<'a> Functional<'a> {
    fn for_e(grid: &'a Grid, a: &[f64], eps: f64) -> Self {
        let q = 0.25 / (eps * eps);
        Functional {
            grid,
            wx: grid.cx.clone(),
            wy: grid.cy.clone(),
            k: grid.mass.iter().map(|m| m * q).collect(),
            c: a.iter().map(|v| v * v).collect(),
        }
    }

    fn for_f(grid: &'a Grid, u: &[f64], eps: f64) -> Self {
        let q = 0.25 / (eps * eps);
        let nx = grid.nx;
        let n = grid.len();
        let wx = (0..n)
            .map(|k| if grid.cx[k] > 0.0 { grid.cx[k] * 0.5 * (u[k] * u[k] + u[k + 1] * u[k + 1]) } else { 0.0 })
            .collect();
        let wy = (0..n)
            .map(|k| if grid.cy[k] > 0.0 { grid.cy[k] * 0.5 * (u[k] * u[k] + u[k + nx] * u[k + nx]) } else { 0.0 })
            .collect();
        Functional {
            grid,
            wx,
            wy,
            k: grid.mass.iter().zip(u).map(|(m, x)| m * q * x.powi(4)).collect(),
            c: vec![1.0; n],
        }
    }

    fn energy(&self, v: &[Complex64]) -> EnergyBreakdown {
        let nx = self.grid.nx;
        let mut dir = 0.0;
        let mut pot = 0.0;
        for k in 0..v.len() {
            if self.wx[k] > 0.0 {
                dir += self.wx[k] * (v[k + 1] - v[k]).norm_sqr();
            }
            if self.wy[k] > 0.0 {
                dir += self.wy[k] * (v[k + nx] - v[k]).norm_sqr();
            }
            if self.k[k] > 0.0 {
                let t = self.c[k] - v[k].norm_sqr();
                pot += self.k[k] * t * t;
            }
        }
        EnergyBreakdown::new(0.5 * dir, pot)
    }

    /// Gradient at interior nodes (zero elsewhere); returns the max-norm of
    /// the gradient divided by the node area.
    fn gradient(&self, v: &[Complex64], g: &mut [Complex64]) -> f64 {
        let nx = self.grid.nx;
        let h2 = self.grid.h * self.grid.h;
        let mut worst: f64 = 0.0;
        for k in 0..v.len() {
            if self.grid.role[k] != NodeRole::Interior {
                g[k] = Complex64::new(0.0, 0.0);
                continue;
            }
            let vk = v[k];
            let s = (vk - v[k + 1]) * self.wx[k]
                + (vk - v[k - 1]) * self.wx[k - 1]
                + (vk - v[k + nx]) * self.wy[k]
                + (vk - v[k - nx]) * self.wy[k - nx]
                - vk * (4.0 * self.k[k] * (self.c[k] - vk.norm_sqr()));
            g[k] = s;
            worst = worst.max(s.norm());
        }
        worst / h2
    }

    /// Coefficients of `t -> energy(v + t d)`, lowest degree first.
    fn line(&self, v: &[Complex64], d: &[Complex64]) -> [f64; 5] {
        let nx = self.grid.nx;
        let mut c = [0.0; 5];
        for k in 0..v.len() {
            if self.wx[k] > 0.0 {
                let dv = v[k + 1] - v[k];
                let dd = d[k + 1] - d[k];
                c[0] += 0.5 * self.wx[k] * dv.norm_sqr();
                c[1] += self.wx[k] * (dv.re * dd.re + dv.im * dd.im);
                c[2] += 0.5 * self.wx[k] * dd.norm_sqr();
            }
            if self.wy[k] > 0.0 {
                let dv = v[k + nx] - v[k];
                let dd = d[k + nx] - d[k];
                c[0] += 0.5 * self.wy[k] * dv.norm_sqr();
                c[1] += self.wy[k] * (dv.re * dd.re + dv.im * dd.im);
                c[2] += 0.5 * self.wy[k] * dd.norm_sqr();
            }
            if self.k[k] > 0.0 {
                let a = self.c[k] - v[k].norm_sqr();
                let b = -2.0 * (v[k].re * d[k].re + v[k].im * d[k].im);
                let q = -d[k].norm_sqr();
                let w = self.k[k];
                c[0] += w * a * a;
                c[1] += w * 2.0 * a * b;
                c[2] += w * (b * b + 2.0 * a * q);
                c[3] += w * 2.0 * b * q;
                c[4] += w * q * q;
            }
        }
        c
    }
}

fn check_same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a.nx != b.nx || a.ny != b.ny || a.h != b.h || a.x0 != b.x0 || a.y0 != b.y0 {
        return Err(Error::validation("fields must share a grid"));
    }
    Ok(())
}

/// `1/2 int |grad u|^2 + 1/(4 eps^2) int (a^2 - |u|^2)^2`.
pub fn energy_e(u: &ComplexField, a: &PinningField, eps: f64) -> Result<EnergyBreakdown> {
    check_same_grid(&u.grid, a.grid())?;
    Ok(Functional::for_e(&u.grid, &a.a.values, eps).energy(&u.values))
}

/// `1/2 int U^2 |grad v|^2 + 1/(4 eps^2) int U^4 (1 - |v|^2)^2`.
pub fn energy_f(v: &ComplexField, u: &ScalarField, eps: f64) -> Result<EnergyBreakdown> {
    check_same_grid(&v.grid, &u.grid)?;
    Ok(Functional::for_f(&v.grid, &u.values, eps).energy(&v.values))
}

/// `|E(U v) - E(U) - F(v)| / (1 + |E(U v)|)`.
pub fn decoupling_residual(u: &ScalarField, v: &ComplexField, a: &PinningField, eps: f64) -> Result<f64> {
    let uc = ComplexField::new(u.grid.clone(), u.values.iter().map(|&x| Complex64::new(x, 0.0)).collect());
    let e_uv = energy_e(&v.scaled_by(u), a, eps)?.total;
    let e_u = energy_e(&uc, a, eps)?.total;
    let f_v = energy_f(v, u, eps)?.total;
    Ok((e_uv - e_u - f_v).abs() / (1.0 + e_uv.abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizerParams {
    /// Tolerance on `eps^2 max|grad F| / h^2`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Iterations between two convergence-history rows.
    pub history_stride: usize,
}

impl Default for MinimizerParams {
    fn default() -> Self {
        MinimizerParams {
            tolerance: 1e-6,
            max_iterations: 50_000,
            history_stride: 25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlSolution {
    pub v: ComplexField,
    pub energy: EnergyBreakdown,
    pub initial_energy: f64,
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<HistoryRow>,
    pub seeds: Vec<Point>,
}

/// Core profile used by the initial guess.
fn core_profile(s: f64) -> f64 {
    s / (s * s + 1.0).sqrt()
}

/// Phase of `g` relative to the vortex seeds, unwrapped along the outer
/// boundary; errors if the seeds do not carry the degree of `g`.
fn boundary_phase(g: &BoundaryData, seeds: &[Point]) -> Result<Vec<(usize, f64)>> {
    let grid = &g.grid;
    let lp = outer_boundary_loop(grid);
    let raw: Vec<f64> = lp
        .iter()
        .map(|&k| {
            let p = grid.point(k);
            let s: f64 = seeds.iter().map(|c| (p - *c).angle()).sum();
            wrap_angle(g.values[k].arg() - s)
        })
        .collect();
    let mut out = Vec::with_capacity(lp.len());
    let mut acc = raw[0];
    out.push((lp[0], acc));
    for i in 1..lp.len() {
        acc += wrap_angle(raw[i] - raw[i - 1]);
        out.push((lp[i], acc));
    }
    let closing = acc + wrap_angle(raw[0] - raw[lp.len() - 1]) - raw[0];
    if closing.abs() > PI {
        return Err(Error::validation(format!(
            "{} vortex seeds do not match boundary degree {}",
            seeds.len(),
            g.degree
        )));
    }
    Ok(out)
}

/// Product of degree-one vortices at `seeds` times `exp(i psi)` with `psi`
/// the weighted-harmonic correction matching the trace `g`.
pub fn initial_guess(u: &ScalarField, eps: f64, g: &BoundaryData, seeds: &[Point]) -> Result<ComplexField> {
    let grid = u.grid.clone();
    check_same_grid(&grid, &g.grid)?;
    let n = grid.len();
    let nx = grid.nx;
    let mut psi = vec![0.0; n];
    for (k, val) in boundary_phase(g, seeds)? {
        psi[k] = val;
    }
    // Weighted Laplace problem for psi at interior nodes.
    let f = Functional::for_f(&grid, &u.values, eps);
    let interior = |k: usize| grid.role[k] == NodeRole::Interior;
    let diag: Vec<f64> = (0..n)
        .map(|k| if interior(k) { f.wx[k] + f.wx[k - 1] + f.wy[k] + f.wy[k - nx] } else { 1.0 })
        .collect();
    let mut rhs = vec![0.0; n];
    for k in 0..n {
        if interior(k) {
            for (m, w) in [(k + 1, f.wx[k]), (k - 1, f.wx[k - 1]), (k + nx, f.wy[k]), (k - nx, f.wy[k - nx])] {
                if !interior(m) {
                    rhs[k] += w * psi[m];
                }
            }
        }
    }
    let apply = |p: &[f64], y: &mut [f64]| {
        for k in 0..n {
            y[k] = if interior(k) {
                let mut s = diag[k] * p[k];
                for (m, w) in [(k + 1, f.wx[k]), (k - 1, f.wx[k - 1]), (k + nx, f.wy[k]), (k - nx, f.wy[k - nx])] {
                    if interior(m) {
                        s -= w * p[m];
                    }
                }
                s
            } else {
                0.0
            };
        }
    };
    let mut x = vec![0.0; n];
    linalg::pcg(apply, linalg::jacobi(&diag), &rhs, &mut x, CgOptions { rel_tol: 1e-8, max_iter: 20_000, ..Default::default() })?;
    let values = (0..n)
        .map(|k| match grid.role[k] {
            NodeRole::Boundary => g.values[k],
            NodeRole::Outside => Complex64::new(1.0, 0.0),
            NodeRole::Interior => {
                let p = grid.point(k);
                let mut z = Complex64::from_polar(1.0, x[k]);
                for c in seeds {
                    let r = p - *c;
                    let rn = r.norm();
                    if rn > 0.0 {
                        z *= Complex64::new(r.x / rn, r.y / rn) * core_profile(rn * u.values[k] / eps);
                    } else {
                        z = Complex64::new(0.0, 0.0);
                    }
                }
                z
            }
        })
        .collect();
    Ok(ComplexField::new(grid, values))
}

/// Minimum over `t > 0` of a quartic with coefficients `c` (lowest first).
fn quartic_argmin(c: &[f64; 5]) -> f64 {
    let p = |t: f64| c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * c[4])));
    let mut best_t = 0.0;
    let mut best = c[0];
    for t in cubic_roots(4.0 * c[4], 3.0 * c[3], 2.0 * c[2], c[1]) {
        if t > 0.0 && p(t) < best {
            best = p(t);
            best_t = t;
        }
    }
    best_t
}

/// Real roots of `a t^3 + b t^2 + c t + d`, polished by Newton steps.
fn cubic_roots(a: f64, b: f64, c: f64, d: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs()).max(d.abs());
    let mut roots = Vec::new();
    if a.abs() <= 1e-14 * scale {
        if b.abs() <= 1e-14 * scale {
            if c != 0.0 {
                roots.push(-d / c);
            }
        } else {
            let disc = c * c - 4.0 * b * d;
            if disc >= 0.0 {
                let s = disc.sqrt();
                let q = -0.5 * (c + s.copysign(c));
                if q != 0.0 {
                    roots.push(q / b);
                    roots.push(d / q);
                } else {
                    roots.push(0.0);
                }
            }
        }
    } else {
        let (b1, c1, d1) = (b / a, c / a, d / a);
        let q = (b1 * b1 - 3.0 * c1) / 9.0;
        let r = (2.0 * b1 * b1 * b1 - 9.0 * b1 * c1 + 27.0 * d1) / 54.0;
        if r * r < q * q * q {
            let th = (r / (q * q * q).sqrt()).clamp(-1.0, 1.0).acos();
            let sq = -2.0 * q.sqrt();
            for k in 0..3 {
                roots.push(sq * ((th + 2.0 * PI * k as f64) / 3.0).cos() - b1 / 3.0);
            }
        } else {
            let aa = -r.signum() * (r.abs() + (r * r - q * q * q).sqrt()).cbrt();
            let bb = if aa != 0.0 { q / aa } else { 0.0 };
            roots.push(aa + bb - b1 / 3.0);
        }
    }
    for t in roots.iter_mut() {
        for _ in 0..3 {
            let f = ((a * *t + b) * *t + c) * *t + d;
            let df = (3.0 * a * *t + 2.0 * b) * *t + c;
            if df != 0.0 {
                *t -= f / df;
            }
        }
    }
    roots
}

/// Minimizes the discrete `F` from the vortex seeds by Polak-Ribiere+
/// nonlinear conjugate gradients with exact line search (the energy is a
/// quartic polynomial along any line). Falls back to steepest descent when
/// the conjugate direction stops decreasing the energy.
pub fn minimize_f(u: &ScalarField, eps: f64, g: &BoundaryData, params: &MinimizerParams, seeds: &[Point]) -> Result<GlSolution> {
    g.validate()?;
    let grid = u.grid.clone();
    if grid.h > 0.5 * eps {
        log::warn!("grid spacing {} does not resolve epsilon {} (h > eps/2)", grid.h, eps);
    }
    if seeds.iter().any(|s| !grid.domain.contains(*s)) {
        return Err(Error::validation("vortex seed outside the domain"));
    }
    let v0 = initial_guess(u, eps, g, seeds)?;
    let func = Functional::for_f(&grid, &u.values, eps);
    let n = grid.len();
    let scale = eps * eps;
    let mut v = v0.values;
    let mut gr = vec![Complex64::new(0.0, 0.0); n];
    let mut res = func.gradient(&v, &mut gr) * scale;
    let initial_energy = func.energy(&v).total;
    let mut energy = initial_energy;
    let mut dir: Vec<Complex64> = gr.iter().map(|z| -z).collect();
    let mut history = vec![HistoryRow { iteration: 0, residual: res, energy }];
    let mut gg = gdot(&gr, &gr);
    let mut it = 0;
    while res > params.tolerance && it < params.max_iterations {
        it += 1;
        let coeffs = func.line(&v, &dir);
        let mut t = quartic_argmin(&coeffs);
        let mut predicted = coeffs[0] - eval4(&coeffs, t);
        if t <= 0.0 || predicted <= 0.0 {
            // Restart along steepest descent.
            dir = gr.iter().map(|z| -z).collect();
            let c2 = func.line(&v, &dir);
            t = quartic_argmin(&c2);
            predicted = c2[0] - eval4(&c2, t);
            if t <= 0.0 || predicted <= 0.0 {
                break;
            }
        }
        for k in 0..n {
            v[k] += dir[k] * t;
        }
        energy -= predicted;
        if it % 200 == 0 {
            energy = func.energy(&v).total;
        }
        let gr_old = std::mem::replace(&mut gr, vec![Complex64::new(0.0, 0.0); n]);
        res = func.gradient(&v, &mut gr) * scale;
        let gg_new = gdot(&gr, &gr);
        let beta = ((gg_new - gdot(&gr, &gr_old)) / gg).max(0.0);
        gg = gg_new;
        for k in 0..n {
            dir[k] = -gr[k] + dir[k] * beta;
        }
        if gdot(&dir, &gr) >= 0.0 {
            dir = gr.iter().map(|z| -z).collect();
        }
        if it % params.history_stride.max(1) == 0 {
            history.push(HistoryRow { iteration: it, residual: res, energy });
        }
    }
    let e = func.energy(&v);
    history.push(HistoryRow { iteration: it, residual: res, energy: e.total });
    if res > params.tolerance {
        return Err(Error::NonConvergence {
            stage: "minimize_F".into(),
            iterations: it,
            residual: res,
            energy: e.total,
        });
    }
    let vmax = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if vmax > 1.0 + 1e-6 {
        log::warn!("max |v| = {vmax} exceeds 1 + 1e-6");
    }
    Ok(GlSolution {
        v: ComplexField::new(grid, v),
        energy: e,
        initial_energy,
        iterations: it,
        residual: res,
        history,
        seeds: seeds.to_vec(),
    })
}

fn eval4(c: &[f64; 5], t: f64) -> f64 {
    c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * c[4])))
}

fn gdot(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// Radius of the regular `d`-gon minimizing the homogeneous renormalized
/// energy in a disc of radius `r` with trace `exp(i d theta)`.
pub fn polygon_radius(d: usize, r: f64) -> f64 {
    if d <= 1 {
        return 0.0;
    }
    let d = d as f64;
    r * ((d - 1.0) / (3.0 * d - 1.0)).powf(1.0 / (2.0 * d))
}

/// Vortex seeds: the regular `d`-gon optimal for the homogeneous problem,
/// each vertex snapped to the nearest inclusion center when a pinning
/// geometry is given (distinct inclusions).
pub fn vortex_seeds(geometry: Option<&PinningGeometry>, grid: &Grid, d: usize) -> Vec<Point> {
    let c = grid.domain.center;
    let r = polygon_radius(d, grid.domain.inradius());
    let targets: Vec<Point> = (0..d)
        .map(|i| c + Point::polar(r, 2.0 * PI * i as f64 / d as f64))
        .collect();
    match geometry {
        Some(geo) if geo.inclusions.len() >= d => {
            let mut taken = vec![false; geo.inclusions.len()];
            targets
                .iter()
                .map(|t| {
                    let (best, _) = geo
                        .inclusions
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| !taken[*i])
                        .map(|(i, inc)| (i, inc.center.dist(*t)))
                        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                        .unwrap();
                    taken[best] = true;
                    geo.inclusions[best].center
                })
                .collect()
        }
        _ => targets,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RadialProfile {
    pub r: Vec<f64>,
    pub f: Vec<f64>,
    /// Extrapolated core constant at `r_max` and at `r_max / 2`.
    pub gamma: f64,
    pub gamma_half: f64,
    /// `(R, E(u_0, B_R) - pi ln R)` at `r_max / 4`, `r_max / 2`, `r_max`.
    pub excess: Vec<(f64, f64)>,
}

/// Solves `f'' + f'/r - f/r^2 + f (1 - f^2) = 0`, `f(0) = 0`, with the
/// asymptotic value `1 - 1/(2R^2) - 9/(8R^4)` imposed at `R = r_max`, by
/// Newton relaxation of the centered finite-difference scheme.
pub fn radial_profile(r_max: f64, n: usize) -> Result<RadialProfile> {
    if !(r_max >= 20.0) {
        return Err(Error::validation(format!("r_max must be at least 20, got {r_max}")));
    }
    if n < 100 {
        return Err(Error::validation("radial profile needs at least 100 points"));
    }
    let dr = r_max / (n - 1) as f64;
    let r: Vec<f64> = (0..n).map(|k| k as f64 * dr).collect();
    let mut f: Vec<f64> = r.iter().map(|&x| x / (x * x + 2.0).sqrt()).collect();
    let rm2 = r_max * r_max;
    f[0] = 0.0;
    f[n - 1] = 1.0 - 0.5 / rm2 - 9.0 / (8.0 * rm2 * rm2);
    let residual = |f: &[f64], out: &mut [f64]| {
        for k in 1..n - 1 {
            let rk = r[k];
            out[k - 1] = (f[k + 1] - 2.0 * f[k] + f[k - 1]) / (dr * dr) + (f[k + 1] - f[k - 1]) / (2.0 * rk * dr)
                - f[k] / (rk * rk)
                + f[k] * (1.0 - f[k] * f[k]);
        }
    };
    let m = n - 2;
    let mut res = vec![0.0; m];
    let mut converged = false;
    for _ in 0..60 {
        residual(&f, &mut res);
        let rn = linalg::norm(&res) * dr;
        if rn < 1e-13 {
            converged = true;
            break;
        }
        let mut lo = vec![0.0; m];
        let mut di = vec![0.0; m];
        let mut up = vec![0.0; m];
        for k in 1..n - 1 {
            let rk = r[k];
            lo[k - 1] = 1.0 / (dr * dr) - 1.0 / (2.0 * rk * dr);
            up[k - 1] = 1.0 / (dr * dr) + 1.0 / (2.0 * rk * dr);
            di[k - 1] = -2.0 / (dr * dr) - 1.0 / (rk * rk) + 1.0 - 3.0 * f[k] * f[k];
        }
        let rhs: Vec<f64> = res.iter().map(|v| -v).collect();
        let step = linalg::solve_tridiagonal(&lo, &di, &up, &rhs)?;
        // Round-off floor: the residual of a converged profile scales like
        // 1/dr^2 times machine precision.
        if step.iter().fold(0.0f64, |m, v| m.max(v.abs())) < 1e-12 {
            converged = true;
            break;
        }
        let mut t = 1.0;
        loop {
            let mut trial = f.clone();
            for k in 0..m {
                trial[k + 1] += t * step[k];
            }
            let mut tr = vec![0.0; m];
            residual(&trial, &mut tr);
            if linalg::norm(&tr) * dr < rn || t < 1e-4 {
                f = trial;
                break;
            }
            t *= 0.5;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            stage: "radial profile".into(),
            iterations: 60,
            residual: linalg::norm(&res) * dr,
            energy: f64::NAN,
        });
    }
    // Energy in B_R by the midpoint rule on each interval.
    let excess_at = |big_r: f64| -> f64 {
        let kmax = (big_r / dr).round() as usize;
        let mut e = 0.0;
        for k in 0..kmax {
            let rm = 0.5 * (r[k] + r[k + 1]);
            let fm = 0.5 * (f[k] + f[k + 1]);
            let df = (f[k + 1] - f[k]) / dr;
            e += (df * df * rm + fm * fm / rm + 0.5 * (1.0 - fm * fm).powi(2) * rm) * dr;
        }
        PI * e - PI * (kmax as f64 * dr).ln()
    };
    let radii = [0.25 * r_max, 0.5 * r_max, r_max];
    let excess: Vec<(f64, f64)> = radii.iter().map(|&x| (x, excess_at(x))).collect();
    let rich = |lo: f64, hi: f64| (4.0 * hi - lo) / 3.0;
    Ok(RadialProfile {
        gamma: rich(excess[1].1, excess[2].1),
        gamma_half: rich(excess[0].1, excess[1].1),
        excess,
        r,
        f,
    })
}
