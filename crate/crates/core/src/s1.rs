//! Weighted Dirichlet problems for unimodular maps, solved in phase form.
//!
//! A map `w = e^{i(theta_0 + phi)}` is represented by its singular part
//! `theta_0 = sum d_i arg(x - x_i)` and a single-valued correction `phi`, so
//! every problem here is a linear elliptic solve for `phi`.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geom::{wrap_angle, Point};
use crate::grid::{DomainSpec, Shape};
use crate::linalg::{pcg, CgOptions, CgStats, Csr, Ic0};
use crate::mesh::{perforated_mesh, NodeKind, TriMesh};

// ---------------------------------------------------------------------------
// Quadratic functionals assembled from local terms.

/// Degree of freedom attached to a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Dof {
    Free(usize),
    Fixed(f64),
    /// `phi = u[idx] + shift`.
    Tied(usize, f64),
}

/// Local contribution `1/2 (s + 2 b.phi + phi^T k phi)` on `nodes`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LocalTerm<const K: usize> {
    pub nodes: [usize; K],
    pub k: [[f64; K]; K],
    pub b: [f64; K],
    pub s: f64,
}

fn local_value<const K: usize>(t: &LocalTerm<K>, phi: &[f64]) -> f64 {
    let p: [f64; K] = std::array::from_fn(|a| phi[t.nodes[a]]);
    let mut q = t.s;
    for a in 0..K {
        q += 2.0 * t.b[a] * p[a];
        for c in 0..K {
            q += t.k[a][c] * p[a] * p[c];
        }
    }
    0.5 * q
}

pub(crate) fn quadratic_energy<const K: usize>(terms: &[LocalTerm<K>], phi: &[f64]) -> f64 {
    terms.iter().map(|t| local_value(t, phi)).sum()
}

pub(crate) fn expand(dofs: &[Dof], u: &[f64]) -> Vec<f64> {
    dofs.iter()
        .map(|d| match *d {
            Dof::Free(i) => u[i],
            Dof::Fixed(v) => v,
            Dof::Tied(i, s) => u[i] + s,
        })
        .collect()
}

/// Gradient of the energy with respect to the unknowns at `phi`.
pub(crate) fn unknown_gradient<const K: usize>(terms: &[LocalTerm<K>], dofs: &[Dof], phi: &[f64], n: usize) -> Vec<f64> {
    let mut g = vec![0.0; n];
    for t in terms {
        for a in 0..K {
            let idx = match dofs[t.nodes[a]] {
                Dof::Free(i) | Dof::Tied(i, _) => i,
                Dof::Fixed(_) => continue,
            };
            let mut v = t.b[a];
            for c in 0..K {
                v += t.k[a][c] * phi[t.nodes[c]];
            }
            g[idx] += v;
        }
    }
    g
}

pub(crate) struct QuadraticSolution {
    pub phi: Vec<f64>,
    pub unknowns: Vec<f64>,
    pub energy: f64,
    pub stats: CgStats,
}

/// Minimises the assembled quadratic over the unknowns (IC(0)-preconditioned
/// conjugate gradients).
pub(crate) fn minimize_quadratic<const K: usize>(terms: &[LocalTerm<K>], dofs: &[Dof], n: usize, rel_tol: f64) -> Result<QuadraticSolution> {
    let offset: Vec<f64> = dofs
        .iter()
        .map(|d| match *d {
            Dof::Free(_) => 0.0,
            Dof::Fixed(v) => v,
            Dof::Tied(_, s) => s,
        })
        .collect();
    let mut trip = Vec::with_capacity(terms.len() * K * K);
    let mut rhs = vec![0.0; n];
    for t in terms {
        let idx: [Option<usize>; K] = std::array::from_fn(|a| match dofs[t.nodes[a]] {
            Dof::Free(i) | Dof::Tied(i, _) => Some(i),
            Dof::Fixed(_) => None,
        });
        for a in 0..K {
            let Some(ia) = idx[a] else { continue };
            let mut r = t.b[a];
            for c in 0..K {
                r += t.k[a][c] * offset[t.nodes[c]];
                if let Some(ic) = idx[c] {
                    trip.push((ia, ic, t.k[a][c]));
                }
            }
            rhs[ia] -= r;
        }
    }
    let a = Csr::from_triplets(n, trip);
    let pre = Ic0::new(&a);
    let mut u = vec![0.0; n];
    let stats = pcg(
        |x, y| a.matvec(x, y),
        |r, z| pre.solve(r, z),
        &rhs,
        &mut u,
        CgOptions { rel_tol, ..Default::default() },
    )?;
    let phi = expand(dofs, &u);
    let energy = quadratic_energy(terms, &phi);
    Ok(QuadraticSolution { phi, unknowns: u, energy, stats })
}

// ---------------------------------------------------------------------------
// Circle problem.

/// Piecewise-constant weight on the circle: `values[i]` on
/// `[breaks[i], breaks[i + 1])`, with `breaks` running from 0 to `2 pi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularProfile {
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleMin {
    pub closed_form: f64,
    pub numerical: f64,
}

impl AngularProfile {
    /// `b^2` on `[0, theta0)`, 1 elsewhere.
    pub fn two_level(b: f64, theta0: f64) -> Result<Self> {
        if !(b > 0.0 && b <= 1.0) {
            return Err(Error::validation(format!("b must lie in (0, 1], got {b}")));
        }
        if !(0.0..=2.0 * PI).contains(&theta0) {
            return Err(Error::validation(format!("theta0 must lie in [0, 2 pi], got {theta0}")));
        }
        let mut breaks = vec![0.0];
        let mut values = vec![];
        if theta0 > 0.0 {
            breaks.push(theta0);
            values.push(b * b);
        }
        if theta0 < 2.0 * PI {
            breaks.push(2.0 * PI);
            values.push(1.0);
        }
        Ok(AngularProfile { breaks, values })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.breaks.len() == self.values.len() + 1
            && !self.values.is_empty()
            && self.breaks[0] == 0.0
            && (self.breaks[self.breaks.len() - 1] - 2.0 * PI).abs() < 1e-12
            && self.breaks.windows(2).all(|w| w[1] > w[0])
            && self.values.iter().all(|&v| v > 0.0 && v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::validation("angular profile needs increasing breaks from 0 to 2 pi and positive values"))
        }
    }

    /// `2 pi^2 / int alpha^{-1}`.
    pub fn closed_form(&self) -> f64 {
        let inv: f64 = self.values.iter().zip(self.breaks.windows(2)).map(|(v, w)| (w[1] - w[0]) / v).sum();
        2.0 * PI * PI / inv
    }

    /// Minimum of `1/2 int alpha (1 + phi')^2` over periodic `phi`, with P1
    /// elements conforming to the breaks.
    pub fn numerical_min(&self, cells_per_segment: usize) -> Result<f64> {
        self.validate()?;
        let m = cells_per_segment.max(1);
        let segs = self.values.len();
        let n = segs * m;
        let mut terms = Vec::with_capacity(n);
        for s in 0..segs {
            let len = (self.breaks[s + 1] - self.breaks[s]) / m as f64;
            let w = self.values[s] / len;
            for c in 0..m {
                let e = s * m + c;
                terms.push(edge_term(e, (e + 1) % n, w, len));
            }
        }
        let mut dofs: Vec<Dof> = (0..n).map(|i| Dof::Free(i.saturating_sub(1))).collect();
        dofs[0] = Dof::Fixed(0.0);
        let sol = minimize_quadratic(&terms, &dofs, n - 1, 1e-14)?;
        Ok(sol.energy)
    }
}

/// `1/2 w (g + phi_b - phi_a)^2`.
fn edge_term(a: usize, b: usize, w: f64, g: f64) -> LocalTerm<2> {
    LocalTerm {
        nodes: [a, b],
        k: [[w, -w], [-w, w]],
        b: [-w * g, w * g],
        s: w * g * g,
    }
}

/// Minimal weighted Dirichlet energy of a degree-one map on the unit circle
/// for the weight `b^2` on an arc of length `theta0` and 1 elsewhere.
pub fn circle_min(b: f64, theta0: f64) -> Result<CircleMin> {
    let p = AngularProfile::two_level(b, theta0)?;
    Ok(CircleMin {
        closed_form: p.closed_form(),
        numerical: p.numerical_min(8)?,
    })
}

// ---------------------------------------------------------------------------
// Phase fields.

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularPoint {
    pub center: Point,
    pub degree: i32,
}

/// `theta_0 = sum d_i arg(T (x - x_i))` with a fixed linear map `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularPart {
    pub points: Vec<SingularPoint>,
    pub transform: [[f64; 2]; 2],
}

pub(crate) const IDENTITY: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];

fn apply(t: &[[f64; 2]; 2], p: Point) -> Point {
    Point::new(t[0][0] * p.x + t[0][1] * p.y, t[1][0] * p.x + t[1][1] * p.y)
}

impl SingularPart {
    pub fn new(points: Vec<SingularPoint>) -> Self {
        SingularPart { points, transform: IDENTITY }
    }

    pub fn unit(centers: &[Point]) -> Self {
        Self::new(centers.iter().map(|&c| SingularPoint { center: c, degree: 1 }).collect())
    }

    pub fn total_degree(&self) -> i32 {
        self.points.iter().map(|p| p.degree).sum()
    }

    /// Principal value of `theta_0` (multi-valued; use for unwrapping only).
    pub fn raw_value(&self, x: Point) -> f64 {
        self.points.iter().map(|p| p.degree as f64 * apply(&self.transform, x - p.center).angle()).sum()
    }

    pub fn gradient(&self, x: Point) -> Point {
        let t = &self.transform;
        let mut g = Point::ORIGIN;
        for p in &self.points {
            let y = apply(t, x - p.center);
            let n2 = y.norm2();
            // grad_y arg(y) = (-y2, y1)/|y|^2, pulled back by T^T.
            let gy = Point::new(-y.y / n2, y.x / n2);
            g = g + Point::new(t[0][0] * gy.x + t[1][0] * gy.y, t[0][1] * gy.x + t[1][1] * gy.y) * p.degree as f64;
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseField {
    pub singular: SingularPart,
    pub nodes: Vec<Point>,
    pub phi: Vec<f64>,
    /// P1 triangles carrying `phi` (empty for ring solutions).
    #[serde(default)]
    pub triangles: Vec<[usize; 3]>,
}

impl PhaseField {
    /// The represented map at node `k`.
    pub fn map_at(&self, k: usize) -> num_complex::Complex64 {
        num_complex::Complex64::from_polar(1.0, self.singular.raw_value(self.nodes[k]) + self.phi[k])
    }

    /// `1/2 int alpha |grad psi|^2` over the points of the triangles within
    /// `band` of the outer boundary of `dom` where `keep` holds. Each such
    /// triangle is split into `4^levels` pieces evaluated at their centroids.
    pub fn boundary_band_energy(&self, dom: &DomainSpec, band: f64, alpha: &Weight, keep: &(dyn Fn(Point) -> bool + Sync), levels: u32) -> f64 {
        let per: Vec<f64> = self
            .triangles
            .par_iter()
            .map(|t| {
                let p = t.map(|k| self.nodes[k]);
                let c = (p[0] + p[1] + p[2]) * (1.0 / 3.0);
                if dom.distance_to_boundary(c) > band {
                    return 0.0;
                }
                let area2 = (p[1] - p[0]).cross(p[2] - p[0]);
                let mut grad = Point::ORIGIN;
                for a in 0..3 {
                    let (b, cc) = (p[(a + 1) % 3], p[(a + 2) % 3]);
                    grad = grad + Point::new(b.y - cc.y, cc.x - b.x) * (self.phi[t[a]] / area2);
                }
                let mut acc = 0.0;
                let n = 1usize << levels;
                let (e1, e2) = ((p[1] - p[0]) * (1.0 / n as f64), (p[2] - p[0]) * (1.0 / n as f64));
                let small = 0.5 * area2 / (n * n) as f64;
                for i in 0..n {
                    for j in 0..n - i {
                        // Upward piece, then the downward one sharing its edge.
                        let base = p[0] + e1 * i as f64 + e2 * j as f64;
                        let mut cs = vec![base + (e1 + e2) * (1.0 / 3.0)];
                        if i + j + 1 < n {
                            cs.push(base + (e1 + e2) * (2.0 / 3.0));
                        }
                        for x in cs {
                            if keep(x) {
                                let g = self.singular.gradient(x) + grad;
                                acc += 0.5 * alpha.at(x) * g.norm2() * small;
                            }
                        }
                    }
                }
                acc
            })
            .collect();
        per.iter().sum()
    }
}

// ---------------------------------------------------------------------------
// Ring energies.

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RingWeight {
    /// Constant weight.
    Uniform { value: f64 },
    /// `b^2` on the angular sector `[start, start + width)`, 1 elsewhere.
    Sector { start: f64, width: f64 },
    /// `b^2` inside any of the discs, 1 elsewhere.
    Discs { discs: Vec<(Point, f64)> },
    /// `b^2` for `|x - x0| < radius`, 1 outside.
    InnerCore { radius: f64 },
    /// `U^2` sampled from a solution of the scalar problem.
    #[serde(skip)]
    Field(Arc<ScalarField>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RingSpec {
    pub center: Point,
    pub outer: f64,
    pub inner: f64,
    pub b: f64,
    pub weight: RingWeight,
    pub degree: i32,
    /// Radial cells; the angular count follows from square log-polar cells.
    pub layers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RingMode {
    /// Free phase on both circles.
    Degree,
    /// Phase constant on each circle, constants optimised.
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingResult {
    pub energy: f64,
    pub mode: RingMode,
    pub n_theta: usize,
    pub layers: usize,
    pub iterations: usize,
    pub residual: f64,
    pub phase: PhaseField,
}

impl RingSpec {
    pub fn new(center: Point, outer: f64, inner: f64, b: f64, weight: RingWeight, degree: i32) -> Self {
        RingSpec { center, outer, inner, b, weight, degree, layers: 32 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inner > 0.0 && self.outer > self.inner && self.outer.is_finite()) {
            return Err(Error::validation(format!("ring radii must satisfy R > r > 0, got R={} r={}", self.outer, self.inner)));
        }
        if !(self.b > 0.0 && self.b <= 1.0) {
            return Err(Error::validation(format!("b must lie in (0, 1], got {}", self.b)));
        }
        if self.layers < 16 {
            return Err(Error::Resolution(format!("ring resolved by {} radial layers; at least 16 required", self.layers)));
        }
        match &self.weight {
            RingWeight::Uniform { value } if !(*value >= self.b * self.b - 1e-15 && *value <= 1.0) => {
                Err(Error::validation(format!("uniform ring weight {value} outside [b^2, 1]")))
            }
            RingWeight::Discs { discs } if discs.iter().any(|d| !(d.1 > 0.0)) => Err(Error::validation("disc radii must be positive")),
            _ => Ok(()),
        }
    }

    pub fn weight_at(&self, p: Point) -> f64 {
        let low = self.b * self.b;
        match &self.weight {
            RingWeight::Uniform { value } => *value,
            RingWeight::Sector { start, width } => {
                let t = ((p - self.center).angle() - start).rem_euclid(2.0 * PI);
                if t < *width {
                    low
                } else {
                    1.0
                }
            }
            RingWeight::Discs { discs } => {
                if discs.iter().any(|(c, r)| p.dist(*c) < *r) {
                    low
                } else {
                    1.0
                }
            }
            RingWeight::InnerCore { radius } => {
                if p.dist(self.center) < *radius {
                    low
                } else {
                    1.0
                }
            }
            RingWeight::Field(u) => u.sample(p).map_or(1.0, |v| (v * v).clamp(low, 1.0)),
        }
    }

    pub fn n_theta(&self) -> usize {
        let ds = (self.outer / self.inner).ln() / self.layers as f64;
        (4 * ((2.0 * PI / ds / 4.0).round() as usize)).max(64)
    }
}

/// Minimal weighted Dirichlet energy on the ring with degree `spec.degree`.
///
/// In log-polar coordinates `(s, t)` the energy is conformal,
/// `1/2 int alpha (|d_s Phi|^2 + |d_t Phi|^2) ds dt`, and it is discretised on
/// square cells with the cell weight split evenly over the four cell edges.
/// The homogeneous energy is then exactly `pi d^2 ln(R/r)`.
pub fn mu_ring(spec: &RingSpec, mode: RingMode) -> Result<RingResult> {
    spec.validate()?;
    let l = spec.layers;
    let nt = spec.n_theta();
    let s0 = spec.inner.ln();
    let ds = (spec.outer / spec.inner).ln() / l as f64;
    let dt = 2.0 * PI / nt as f64;
    // Cell weights: mean over a 3x3 set of midpoints in (s, t).
    let cell: Vec<f64> = (0..l * nt)
        .into_par_iter()
        .map(|c| {
            let (i, k) = (c / nt, c % nt);
            let mut acc = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    let s = s0 + (i as f64 + (a as f64 + 0.5) / 3.0) * ds;
                    let t = (k as f64 + (b as f64 + 0.5) / 3.0) * dt;
                    acc += spec.weight_at(spec.center + Point::polar(s.exp(), t));
                }
            }
            acc / 9.0
        })
        .collect();
    let node = |i: usize, k: usize| i * nt + k % nt;
    let d = spec.degree as f64;
    let mut terms = Vec::with_capacity(2 * (l + 1) * nt);
    for i in 0..=l {
        for k in 0..nt {
            // Angular edge (i, k) -> (i, k + 1) borders cells (i - 1, k), (i, k).
            let mut w = 0.0;
            if i > 0 {
                w += 0.5 * cell[(i - 1) * nt + k];
            }
            if i < l {
                w += 0.5 * cell[i * nt + k];
            }
            terms.push(edge_term(node(i, k), node(i, k + 1), w * ds / dt, d * dt));
            if i < l {
                // Radial edge (i, k) -> (i + 1, k) borders cells (i, k - 1), (i, k).
                let w = 0.5 * (cell[i * nt + (k + nt - 1) % nt] + cell[i * nt + k]);
                terms.push(edge_term(node(i, k), node(i + 1, k), w * dt / ds, 0.0));
            }
        }
    }
    let n_nodes = (l + 1) * nt;
    let mut dofs = Vec::with_capacity(n_nodes);
    let mut n = 0;
    for i in 0..=l {
        for _ in 0..nt {
            let dof = match mode {
                RingMode::Degree if i == l && dofs.len() == l * nt => Dof::Fixed(0.0),
                RingMode::Dirichlet if i == l => Dof::Fixed(0.0),
                RingMode::Dirichlet if i == 0 => Dof::Tied(0, 0.0),
                _ => {
                    n += 1;
                    Dof::Free(n - 1 + usize::from(mode == RingMode::Dirichlet))
                }
            };
            dofs.push(dof);
        }
    }
    let n_unknowns = n + usize::from(mode == RingMode::Dirichlet);
    let sol = minimize_quadratic(&terms, &dofs, n_unknowns, 1e-13)?;
    let nodes = (0..n_nodes)
        .map(|c| spec.center + Point::polar((s0 + (c / nt) as f64 * ds).exp(), (c % nt) as f64 * dt))
        .collect();
    Ok(RingResult {
        energy: sol.energy,
        mode,
        n_theta: nt,
        layers: l,
        iterations: sol.stats.iterations,
        residual: sol.stats.residual,
        phase: PhaseField {
            singular: SingularPart::new(vec![SingularPoint { center: spec.center, degree: spec.degree }]),
            nodes,
            phi: sol.phi,
            triangles: vec![],
        },
    })
}

/// Empirical constant for the Dirichlet-versus-degree gap: the largest gap
/// observed over a fixed family of sector weights (the homogeneous ring has
/// no gap at all) with `ln(R/r) in {1, 2}` and sector widths
/// `{pi/2, pi, 3 pi/2}`.
pub fn calibrate_c_b(b: f64) -> Result<f64> {
    let mut best = 0.0f64;
    for &ratio in &[1.0f64, 2.0] {
        for &width in &[0.5 * PI, PI, 1.5 * PI] {
            let spec = RingSpec {
                layers: 16 * ratio as usize,
                ..RingSpec::new(Point::ORIGIN, ratio.exp(), 1.0, b, RingWeight::Sector { start: 0.0, width }, 1)
            };
            let gap = mu_ring(&spec, RingMode::Dirichlet)?.energy - mu_ring(&spec, RingMode::Degree)?.energy;
            best = best.max(gap);
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Perforated domains.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerforatedDomain {
    pub base: DomainSpec,
    pub holes: Vec<Point>,
    pub rho: f64,
}

impl PerforatedDomain {
    pub fn new(base: DomainSpec, holes: Vec<Point>, rho: f64) -> Self {
        PerforatedDomain { base, holes, rho }
    }

    /// Holes pairwise `8 rho` apart and inside the base domain; with
    /// `boundary_gap`, also `8 rho` away from its boundary.
    pub fn validate(&self, boundary_gap: bool) -> Result<()> {
        self.base.validate()?;
        if !(self.rho > 0.0) {
            return Err(Error::validation("hole radius must be positive"));
        }
        for (i, p) in self.holes.iter().enumerate() {
            let need = if boundary_gap { 8.0 * self.rho } else { self.rho };
            if !(self.base.distance_to_boundary(*p) > need - 1e-12) {
                return Err(Error::validation(format!("hole {i} at ({}, {}) is closer than {need} to the boundary", p.x, p.y)));
            }
            for (j, q) in self.holes.iter().enumerate().skip(i + 1) {
                if p.dist(*q) < 8.0 * self.rho - 1e-12 {
                    return Err(Error::validation(format!("holes {i} and {j} are closer than 8 rho")));
                }
            }
        }
        Ok(())
    }
}

/// Weight `alpha` of the phase problems.
#[derive(Clone, Copy)]
pub enum Weight<'a> {
    Uniform(f64),
    /// `U^2`, with 1 outside the grid's active cells.
    USquared(&'a ScalarField),
    Function(&'a (dyn Fn(Point) -> f64 + Sync)),
}

impl Weight<'_> {
    pub fn at(&self, p: Point) -> f64 {
        match self {
            Weight::Uniform(v) => *v,
            Weight::USquared(u) => u.sample(p).map_or(1.0, |v| v * v),
            Weight::Function(f) => f(p),
        }
    }
}

/// Boundary datum `g` on the outer boundary.
#[derive(Clone, Copy)]
pub enum BoundaryPhase<'a> {
    /// `g = e^{i d theta}`, `theta` the polar angle about the domain center.
    Degree(i32),
    /// `g = e^{i psi}` with a continuous single-valued `psi`.
    Phase(&'a (dyn Fn(Point) -> f64 + Sync)),
}

impl BoundaryPhase<'_> {
    fn raw(&self, dom: &DomainSpec, x: Point) -> f64 {
        match self {
            BoundaryPhase::Degree(d) => *d as f64 * (x - dom.center).angle(),
            BoundaryPhase::Phase(f) => f(x),
        }
    }

    pub fn degree(&self) -> i32 {
        match self {
            BoundaryPhase::Degree(d) => *d,
            BoundaryPhase::Phase(_) => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSolution {
    /// Energy over the perforated domain.
    pub energy: f64,
    /// Energy of the extension `e^{i d theta}` in the collar of the enlarged
    /// domain (a constant independent of the holes).
    pub collar_energy: Option<f64>,
    /// Optimal rotations `theta_i` (constrained problem only).
    pub rotations: Vec<f64>,
    /// Energy derivative with respect to each rotation (should vanish).
    pub rotation_residuals: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub nodes: usize,
    pub phase: PhaseField,
}

/// 7-point degree-5 rule on the reference triangle (barycentric, weight).
fn quadrature() -> [([f64; 3], f64); 7] {
    let s = 15f64.sqrt();
    let a1 = (6.0 - s) / 21.0;
    let a2 = (6.0 + s) / 21.0;
    let w1 = (155.0 - s) / 1200.0;
    let w2 = (155.0 + s) / 1200.0;
    let b1 = 1.0 - 2.0 * a1;
    let b2 = 1.0 - 2.0 * a2;
    [
        ([1.0 / 3.0; 3], 9.0 / 40.0),
        ([a1, a1, b1], w1),
        ([a1, b1, a1], w1),
        ([b1, a1, a1], w1),
        ([a2, a2, b2], w2),
        ([a2, b2, a2], w2),
        ([b2, a2, a2], w2),
    ]
}

/// Local terms of `1/2 int alpha (grad theta_0 + grad phi) . M (grad theta_0 + grad phi)`
/// on every triangle.
pub(crate) fn fe_terms(mesh: &TriMesh, singular: &SingularPart, coef: [[f64; 2]; 2], alpha: &Weight) -> Vec<LocalTerm<3>> {
    let q = quadrature();
    let mv = |p: Point| apply(&coef, p);
    mesh.triangles
        .par_iter()
        .map(|t| {
            let p = t.map(|k| mesh.nodes[k]);
            let area = 0.5 * (p[1] - p[0]).cross(p[2] - p[0]);
            let grads: [Point; 3] = std::array::from_fn(|a| {
                let (b, c) = (p[(a + 1) % 3], p[(a + 2) % 3]);
                Point::new(b.y - c.y, c.x - b.x) * (1.0 / (2.0 * area))
            });
            let (mut s, mut v, mut m) = (0.0, Point::ORIGIN, 0.0);
            for (bary, w) in q.iter() {
                let x = p[0] * bary[0] + p[1] * bary[1] + p[2] * bary[2];
                let wa = w * area * alpha.at(x);
                m += wa;
                if !singular.points.is_empty() {
                    let g = singular.gradient(x);
                    let mg = mv(g);
                    s += wa * g.dot(mg);
                    v = v + mg * wa;
                }
            }
            let k = std::array::from_fn(|a| std::array::from_fn(|c| m * grads[a].dot(mv(grads[c]))));
            let b = std::array::from_fn(|a| v.dot(grads[a]));
            LocalTerm { nodes: *t, k, b, s }
        })
        .collect()
}

/// Boundary values of `phi = psi - theta_0`, unwrapped continuously along the
/// outer boundary loop.
pub(crate) fn boundary_values(mesh: &TriMesh, singular: &SingularPart, g: &BoundaryPhase) -> Result<Vec<(usize, f64)>> {
    let c = mesh.domain.center;
    let mut loop_nodes: Vec<usize> = mesh.boundary_nodes().collect();
    loop_nodes.sort_by(|&a, &b| (mesh.nodes[a] - c).angle().total_cmp(&(mesh.nodes[b] - c).angle()));
    let raw = |k: usize| g.raw(&mesh.domain, mesh.nodes[k]) - singular.raw_value(mesh.nodes[k]);
    let mut out = Vec::with_capacity(loop_nodes.len());
    let mut prev = raw(loop_nodes[0]);
    prev = wrap_angle(prev);
    out.push((loop_nodes[0], prev));
    for &k in &loop_nodes[1..] {
        let r = raw(k);
        prev += wrap_angle(r - prev);
        out.push((k, prev));
    }
    let close = prev + wrap_angle(raw(loop_nodes[0]) - prev) - out[0].1;
    if close.abs() > PI {
        return Err(Error::validation(format!(
            "degree sum {} does not match the boundary degree {} (compatibility condition)",
            singular.total_degree(),
            g.degree()
        )));
    }
    Ok(out)
}

/// Hole treatment on the rims.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RimCondition {
    /// Free trace (degree problem).
    Natural,
    /// Trace a rigid rotation of `e^{i theta}`.
    Rotation,
}

pub(crate) struct FeSolve {
    pub mesh: TriMesh,
    pub solution: QuadraticSolution,
    pub rotations: Vec<f64>,
    pub rotation_residuals: Vec<f64>,
}

pub(crate) fn solve_phase_on_mesh(
    mesh: TriMesh,
    singular: &SingularPart,
    coef: [[f64; 2]; 2],
    alpha: &Weight,
    g: &BoundaryPhase,
    rims: RimCondition,
) -> Result<FeSolve> {
    let terms = fe_terms(&mesh, singular, coef, alpha);
    let bvals = boundary_values(&mesh, singular, g)?;
    let mut dofs = vec![Dof::Free(usize::MAX); mesh.nodes.len()];
    for (k, v) in bvals {
        dofs[k] = Dof::Fixed(v);
    }
    let n_holes = mesh.holes.len();
    let mut n = if rims == RimCondition::Rotation { n_holes } else { 0 };
    for k in 0..mesh.nodes.len() {
        match (mesh.kind[k], rims) {
            (NodeKind::Boundary, _) => {}
            (NodeKind::Rim(i), RimCondition::Rotation) => {
                // On the rim of hole i: theta_0 + phi = theta + c_i, so
                // phi = c_i - sum_{j != i} d_j arg(x - x_j), measured
                // relative to the direction of x_i to keep it continuous.
                let xi = mesh.holes[i].center;
                let x = mesh.nodes[k];
                let shift: f64 = singular
                    .points
                    .iter()
                    .filter(|p| p.center != xi)
                    .map(|p| -(p.degree as f64) * wrap_angle((x - p.center).angle() - (xi - p.center).angle()))
                    .sum();
                dofs[k] = Dof::Tied(i, shift);
            }
            _ => {
                dofs[k] = Dof::Free(n);
                n += 1;
            }
        }
    }
    let solution = minimize_quadratic(&terms, &dofs, n, 1e-12)?;
    let (rotations, rotation_residuals) = if rims == RimCondition::Rotation {
        let grad = unknown_gradient(&terms, &dofs, &solution.phi, n);
        (
            solution.unknowns[..n_holes].iter().map(|&c| wrap_angle(c)).collect(),
            grad[..n_holes].to_vec(),
        )
    } else {
        (vec![], vec![])
    };
    Ok(FeSolve { mesh, solution, rotations, rotation_residuals })
}

pub(crate) fn to_solution(fe: FeSolve, singular: SingularPart, collar: Option<f64>) -> PhaseSolution {
    PhaseSolution {
        energy: fe.solution.energy,
        collar_energy: collar,
        rotations: fe.rotations,
        rotation_residuals: fe.rotation_residuals,
        iterations: fe.solution.stats.iterations,
        residual: fe.solution.stats.residual,
        nodes: fe.mesh.nodes.len(),
        phase: PhaseField { singular, nodes: fe.mesh.nodes, phi: fe.solution.phi, triangles: fe.mesh.triangles },
    }
}

/// Energy of `e^{i d theta}` in the collar `Omega' \ Omega`, where `Omega'` is
/// `Omega` dilated by a fifth of its diameter.
pub fn collar_energy(dom: &DomainSpec, d: i32) -> f64 {
    let d2 = (d * d) as f64;
    match dom.shape {
        Shape::Disc { radius } => PI * d2 * ((radius + 0.4 * radius) / radius).ln(),
        Shape::Rect { width, height } => {
            let m = 0.2 * dom.diameter();
            let (hw, hh) = (0.5 * width, 0.5 * height);
            let dist = |p: Point| {
                let dx = (p.x.abs() - hw).max(0.0);
                let dy = (p.y.abs() - hh).max(0.0);
                dx.hypot(dy)
            };
            let n = 20_000;
            let mut acc = 0.0;
            for k in 0..n {
                let t = (k as f64 + 0.5) * 2.0 * PI / n as f64;
                let e = Point::polar(1.0, t);
                let r0 = (hw / e.x.abs()).min(hh / e.y.abs());
                let (mut lo, mut hi) = (r0, r0 + 2.0 * m);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if dist(e * mid) < m {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                acc += (0.5 * (lo + hi) / r0).ln();
            }
            0.5 * d2 * acc * 2.0 * PI / n as f64
        }
        Shape::Annulus { .. } => f64::NAN,
    }
}

/// Degree problem: minimal `1/2 int alpha |grad w|^2` over unimodular `w` with
/// `w = g` on the outer boundary and degree `degrees[i]` around hole `i`.
pub fn minimize_i(dom: &PerforatedDomain, alpha: &Weight, degrees: &[i32], g: &BoundaryPhase) -> Result<PhaseSolution> {
    dom.validate(false)?;
    if degrees.len() != dom.holes.len() {
        return Err(Error::validation("one degree per hole is required"));
    }
    let total: i32 = degrees.iter().sum();
    if total != g.degree() {
        return Err(Error::validation(format!(
            "degree sum {total} does not match the boundary degree {} (compatibility condition)",
            g.degree()
        )));
    }
    let singular = SingularPart::new(
        dom.holes
            .iter()
            .zip(degrees)
            .map(|(&center, &degree)| SingularPoint { center, degree })
            .collect(),
    );
    let mesh = perforated_mesh(&dom.base, &dom.holes, dom.rho)?;
    let fe = solve_phase_on_mesh(mesh, &singular, IDENTITY, alpha, g, RimCondition::Natural)?;
    let collar = matches!(g, BoundaryPhase::Degree(_)).then(|| collar_energy(&dom.base, g.degree()));
    Ok(to_solution(fe, singular, collar))
}

/// Constrained problem: traces on the hole boundaries are rigid rotations of
/// `e^{i theta}`, the rotations being optimised jointly with the bulk phase.
pub fn minimize_j(dom: &PerforatedDomain, alpha: &Weight, g: &BoundaryPhase) -> Result<PhaseSolution> {
    dom.validate(true)?;
    if dom.holes.len() as i32 != g.degree() {
        return Err(Error::validation(format!(
            "{} unit-degree holes do not match the boundary degree {} (compatibility condition)",
            dom.holes.len(),
            g.degree()
        )));
    }
    let singular = SingularPart::unit(&dom.holes);
    let mesh = perforated_mesh(&dom.base, &dom.holes, dom.rho)?;
    let fe = solve_phase_on_mesh(mesh, &singular, IDENTITY, alpha, g, RimCondition::Rotation)?;
    Ok(to_solution(fe, singular, None))
}

// ---------------------------------------------------------------------------
// Optimal centers.

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub initial_step: f64,
    /// Search stops when the step falls below this (the grid spacing by
    /// default).
    pub min_step: f64,
    pub max_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentersResult {
    pub centers: Vec<Point>,
    pub energy: f64,
    pub evaluations: usize,
    pub final_step: f64,
    /// Accepted configurations with their energies.
    pub history: Vec<(Vec<Point>, f64)>,
}

/// Compass search over the hole centers of the constrained problem. Every
/// sweep evaluates the `4 d` axis moves concurrently and accepts the best
/// improving one; moves leaving the admissible set are rejected.
pub fn optimal_centers_search(base: &DomainSpec, alpha: &Weight, rho: f64, init: &[Point], opts: SearchOptions) -> Result<CentersResult> {
    let d = init.len() as i32;
    let g = BoundaryPhase::Degree(d);
    let eval = |c: &[Point]| -> Option<f64> {
        let dom = PerforatedDomain::new(*base, c.to_vec(), rho);
        minimize_j(&dom, alpha, &g).ok().map(|s| s.energy)
    };
    PerforatedDomain::new(*base, init.to_vec(), rho).validate(true)?;
    let mut centers = init.to_vec();
    let mut energy = minimize_j(&PerforatedDomain::new(*base, centers.clone(), rho), alpha, &g)?.energy;
    let mut evaluations = 1;
    let mut step = opts.initial_step;
    let mut history = vec![(centers.clone(), energy)];
    while step >= opts.min_step && evaluations < opts.max_evaluations {
        let moves: Vec<Vec<Point>> = (0..centers.len())
            .flat_map(|i| {
                [Point::new(step, 0.0), Point::new(-step, 0.0), Point::new(0.0, step), Point::new(0.0, -step)]
                    .into_iter()
                    .map(move |dp| (i, dp))
            })
            .map(|(i, dp)| {
                let mut c = centers.clone();
                c[i] = c[i] + dp;
                c
            })
            .collect();
        let values: Vec<Option<f64>> = moves.par_iter().map(|c| eval(c)).collect();
        evaluations += moves.len();
        let best = values
            .iter()
            .enumerate()
            .filter_map(|(k, v)| v.map(|v| (k, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        match best {
            Some((k, v)) if v < energy => {
                centers = moves[k].clone();
                energy = v;
                history.push((centers.clone(), energy));
            }
            _ => step *= 0.5,
        }
    }
    Ok(CentersResult { centers, energy, evaluations, final_step: step, history })
}

// ---------------------------------------------------------------------------
// Renormalized energy.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenormalizedEnergy {
    /// Extrapolation route.
    pub extrapolated: f64,
    /// Direct route.
    pub direct: f64,
    pub gap: f64,
    pub rho: f64,
    /// `I(rho) - pi d |ln rho|` at `rho` and `rho / 2`.
    pub reduced: [f64; 2],
}

/// Hole radius used by the extrapolation route when none is given.
pub fn default_renorm_rho(dom: &DomainSpec, points: &[Point]) -> f64 {
    let mut r = 0.02 * dom.inradius();
    for (i, p) in points.iter().enumerate() {
        r = r.min(0.25 * dom.distance_to_boundary(*p));
        for q in &points[i + 1..] {
            r = r.min(p.dist(*q) / 16.0);
        }
    }
    r
}

/// Renormalized energy of unit-degree points for `g = e^{i d theta}`,
/// `d = points.len()`, by two independent routes: (a) Richardson
/// extrapolation of `I(rho) - pi d |ln rho|` from `rho` and `rho/2`; (b) the
/// boundary-integral expression with the harmonic correction `phi`:
/// `1/2 int L d_nu L - pi sum_{i != j} ln|a_i - a_j| + int L d_tau phi_0 + 1/2 int |grad phi|^2`,
/// `L = sum ln|x - a_i|`.
pub fn renormalized_energy(dom: &DomainSpec, points: &[Point], rho: Option<f64>) -> Result<RenormalizedEnergy> {
    if points.is_empty() {
        return Err(Error::validation("renormalized energy needs at least one point"));
    }
    for (i, p) in points.iter().enumerate() {
        if !(dom.distance_to_boundary(*p) > 0.0) {
            return Err(Error::validation(format!("point {i} is not inside the domain")));
        }
        for q in &points[i + 1..] {
            if p.dist(*q) == 0.0 {
                return Err(Error::validation("points must be distinct"));
            }
        }
    }
    let rho = rho.unwrap_or_else(|| default_renorm_rho(dom, points));
    let d = points.len() as i32;
    let g = BoundaryPhase::Degree(d);
    let degrees = vec![1; points.len()];
    let reduced: Vec<f64> = [rho, 0.5 * rho]
        .par_iter()
        .map(|&r| {
            let pd = PerforatedDomain::new(*dom, points.to_vec(), r);
            minimize_i(&pd, &Weight::Uniform(1.0), &degrees, &g).map(|s| s.energy - PI * d as f64 * r.ln().abs())
        })
        .collect::<Result<_>>()?;
    let extrapolated = (4.0 * reduced[1] - reduced[0]) / 3.0;
    let direct = renormalized_energy_direct(dom, points)?;
    Ok(RenormalizedEnergy {
        extrapolated,
        direct,
        gap: (extrapolated - direct).abs(),
        rho,
        reduced: [reduced[0], reduced[1]],
    })
}

/// Route (b) of [`renormalized_energy`].
pub fn renormalized_energy_direct(dom: &DomainSpec, points: &[Point]) -> Result<f64> {
    let c = dom.center;
    let n = points.len() as f64;
    let lfun = |x: Point| points.iter().map(|a| (x - *a).norm().ln()).sum::<f64>();
    let dtau_arg = |x: Point, p: Point, tau: Point| (x - p).cross(tau) / (x - p).norm2();
    // Boundary integrand: 1/2 L d_nu L + L d_tau phi_0.
    let integrand = |x: Point, nu: Point, tau: Point| {
        let l = lfun(x);
        let dnu: f64 = points.iter().map(|a| (x - *a).dot(nu) / (x - *a).norm2()).sum();
        let dphi0: f64 = n * dtau_arg(x, c, tau) - points.iter().map(|a| dtau_arg(x, *a, tau)).sum::<f64>();
        0.5 * l * dnu + l * dphi0
    };
    let boundary = match dom.shape {
        Shape::Disc { radius } => {
            let m = 16_384;
            let mut acc = 0.0;
            for k in 0..m {
                let t = 2.0 * PI * k as f64 / m as f64;
                let nu = Point::polar(1.0, t);
                acc += integrand(c + nu * radius, nu, nu.perp());
            }
            acc * 2.0 * PI * radius / m as f64
        }
        Shape::Rect { width, height } => {
            let (hw, hh) = (0.5 * width, 0.5 * height);
            let corners = [
                c + Point::new(-hw, -hh),
                c + Point::new(hw, -hh),
                c + Point::new(hw, hh),
                c + Point::new(-hw, hh),
            ];
            let (gx, gw) = gauss_legendre_8();
            let panels = 512;
            let mut acc = 0.0;
            for s in 0..4 {
                let (p0, p1) = (corners[s], corners[(s + 1) % 4]);
                let len = p0.dist(p1);
                let tau = (p1 - p0) * (1.0 / len);
                let nu = Point::new(tau.y, -tau.x);
                for pnl in 0..panels {
                    for q in 0..8 {
                        let u = (pnl as f64 + 0.5 + 0.5 * gx[q]) / panels as f64;
                        acc += 0.5 * gw[q] * len / panels as f64 * integrand(p0 + (p1 - p0) * u, nu, tau);
                    }
                }
            }
            acc
        }
        Shape::Annulus { .. } => return Err(Error::validation("renormalized energy supports discs and rectangles")),
    };
    let mut pair = 0.0;
    for (i, a) in points.iter().enumerate() {
        for (j, b) in points.iter().enumerate() {
            if i != j {
                pair += a.dist(*b).ln();
            }
        }
    }
    // phi harmonic with phi = phi_0 = d arg(x - c) - sum arg(x - a_i) on the boundary.
    let singular = SingularPart::unit(points);
    let phi0 = |x: Point| n * (x - c).angle() - singular.raw_value(x);
    let mesh = perforated_mesh(dom, &[], 0.0)?;
    let fe = solve_phase_on_mesh(
        mesh,
        &SingularPart::new(vec![]),
        IDENTITY,
        &Weight::Uniform(1.0),
        &BoundaryPhase::Phase(&phi0),
        RimCondition::Natural,
    )?;
    Ok(boundary - PI * pair + fe.solution.energy)
}

fn gauss_legendre_8() -> ([f64; 8], [f64; 8]) {
    let x = [
        -0.960_289_856_497_536_2,
        -0.796_666_477_413_626_7,
        -0.525_532_409_916_329,
        -0.183_434_642_495_649_8,
        0.183_434_642_495_649_8,
        0.525_532_409_916_329,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_2,
    ];
    let w = [
        0.101_228_536_290_376_26,
        0.222_381_034_453_374_47,
        0.313_706_645_877_887_3,
        0.362_683_783_378_362,
        0.362_683_783_378_362,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_47,
        0.101_228_536_290_376_26,
    ];
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_is_exact_for_quintics() {
        // Reference triangle (0,0), (1,0), (0,1): int x^p y^q = p! q! / (p+q+2)!.
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        for p in 0..=5u32 {
            for q in 0..=(5 - p) {
                let exact = fact(p) * fact(q) / fact(p + q + 2);
                let val: f64 = quadrature().iter().map(|(b, w)| 0.5 * w * b[1].powi(p as i32) * b[2].powi(q as i32)).sum();
                assert!((val - exact).abs() < 1e-15, "{p} {q}");
            }
        }
    }

    #[test]
    fn circle_min_trivial_cases() {
        assert!((circle_min(0.5, 0.0).unwrap().numerical - PI).abs() < 1e-12);
        let full = circle_min(0.5, 2.0 * PI).unwrap();
        assert!((full.closed_form - 0.25 * PI).abs() < 1e-12);
        assert!((full.numerical - 0.25 * PI).abs() < 1e-12);
    }

    #[test]
    fn homogeneous_ring_is_exact() {
        let spec = RingSpec::new(Point::ORIGIN, 1.0f64.exp(), 1.0, 0.5, RingWeight::Uniform { value: 1.0 }, 1);
        for mode in [RingMode::Degree, RingMode::Dirichlet] {
            let r = mu_ring(&spec, mode).unwrap();
            assert!((r.energy - PI).abs() < 1e-10, "{mode:?} {}", r.energy);
        }
    }

    #[test]
    fn under_resolved_ring_is_rejected() {
        let spec = RingSpec { layers: 8, ..RingSpec::new(Point::ORIGIN, 2.0, 1.0, 0.5, RingWeight::Uniform { value: 1.0 }, 1) };
        assert!(matches!(mu_ring(&spec, RingMode::Degree), Err(Error::Resolution(_))));
    }

    #[test]
    fn collar_energy_of_disc_matches_polar_integral() {
        let d = DomainSpec::disc(1.0, 0.05);
        assert!((collar_energy(&d, 2) - 4.0 * PI * 1.4f64.ln()).abs() < 1e-12);
        // A square: the polar quadrature must exceed the inscribed disc ring.
        let r = DomainSpec::rect(2.0, 2.0, 0.05);
        assert!(collar_energy(&r, 1) > 0.0);
    }
}
