//! Zeros and degrees of complex fields, energy-threshold disc coverings,
//! the ball separation procedure and pinning diagnostics.

use std::collections::VecDeque;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, ScalarField};
use crate::geom::{wrap_angle, Point};
use crate::grid::NodeRole;
use crate::pinning::PinningField;

/// Winding number of `v` along the circle `C(center, radius)`.
pub fn degree_on_circle(v: &ComplexField, center: Point, radius: f64) -> Result<i32> {
    if !(radius > 0.0) {
        return Err(Error::validation("degree circle radius must be positive"));
    }
    let h = v.grid.h;
    let mut m = ((8.0 * 2.0 * PI * radius / h).ceil() as usize).max(64);
    loop {
        let mut samples = Vec::with_capacity(m);
        for k in 0..m {
            let p = center + Point::polar(radius, 2.0 * PI * k as f64 / m as f64);
            let z = v
                .sample(p)
                .ok_or_else(|| Error::validation(format!("degree circle C(({}, {}), {radius}) leaves the domain", center.x, center.y)))?;
            if z.norm() < 0.1 {
                return Err(Error::validation("circle crosses vortex core (|v| < 0.1)"));
            }
            samples.push(z.arg());
        }
        let mut total = 0.0;
        let mut ok = true;
        for k in 0..m {
            let d = wrap_angle(samples[(k + 1) % m] - samples[k]);
            if d.abs() >= 0.5 * PI {
                ok = false;
                break;
            }
            total += d;
        }
        if ok {
            return Ok((total / (2.0 * PI)).round() as i32);
        }
        if m >= 1 << 20 {
            return Err(Error::validation("phase varies too fast along the degree circle"));
        }
        m *= 2;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vortex {
    pub position: Point,
    pub degree: i32,
    /// Radius of the circle used for the degree.
    pub circle_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VortexSet {
    pub threshold: f64,
    pub vortices: Vec<Vortex>,
    /// Low-modulus components of zero degree.
    pub phantom_dips: Vec<Point>,
    /// Components touching the boundary (not positioned); representative
    /// node positions.
    pub boundary_components: Vec<Point>,
}

impl VortexSet {
    pub fn total_degree(&self) -> i32 {
        self.vortices.iter().map(|v| v.degree).sum()
    }

    pub fn positions(&self) -> Vec<Point> {
        self.vortices.iter().map(|v| v.position).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DetectOptions {
    /// Modulus threshold tau.
    pub threshold: f64,
    /// Smallest degree-circle radius (3 eps is the usual choice).
    pub min_radius: f64,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions {
            threshold: 0.5,
            min_radius: 0.0,
        }
    }
}

/// Zero of the bilinear interpolant in cell (i, j), if any.
fn bilinear_zero(v: &ComplexField, i: usize, j: usize) -> Option<(Point, f64)> {
    let g = &v.grid;
    let k = g.idx(i, j);
    let (z00, z10, z01, z11) = (v.values[k], v.values[k + 1], v.values[k + g.nx], v.values[k + g.nx + 1]);
    let eval = |s: f64, t: f64| z00 * ((1.0 - s) * (1.0 - t)) + z10 * (s * (1.0 - t)) + z01 * ((1.0 - s) * t) + z11 * (s * t);
    let (mut s, mut t) = (0.5, 0.5);
    for _ in 0..30 {
        let f = eval(s, t);
        let ds = (z10 - z00) * (1.0 - t) + (z11 - z01) * t;
        let dt = (z01 - z00) * (1.0 - s) + (z11 - z10) * s;
        // Solve [ds dt] [a b]^T = -f as a real 2x2 system.
        let det = ds.re * dt.im - ds.im * dt.re;
        if det.abs() < 1e-300 {
            return None;
        }
        let a = (-f.re * dt.im + f.im * dt.re) / det;
        let b = (-ds.re * f.im + ds.im * f.re) / det;
        s += a;
        t += b;
        if !(s.is_finite() && t.is_finite()) || s.abs() > 4.0 || t.abs() > 4.0 {
            return None;
        }
        if a.abs() + b.abs() < 1e-13 {
            break;
        }
    }
    let tol = 1e-9;
    if s < -tol || s > 1.0 + tol || t < -tol || t > 1.0 + tol {
        return None;
    }
    let residual = eval(s, t).norm();
    Some((Point::new(g.x0 + (i as f64 + s) * g.h, g.y0 + (j as f64 + t) * g.h), residual))
}

/// Locates the connected components of `{|v| < tau}`, positions each by the
/// modulus-weighted centroid refined to the nearest zero of the bilinear
/// interpolant, and computes its degree on the smallest admissible circle.
pub fn detect_zeros(v: &ComplexField, opts: DetectOptions) -> Result<VortexSet> {
    let tau = opts.threshold;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::validation(format!("threshold must lie in (0, 1), got {tau}")));
    }
    let g = &v.grid;
    let n = g.len();
    let low: Vec<bool> = (0..n).map(|k| g.is_active(k) && v.values[k].norm() < tau).collect();
    let mut seen = vec![false; n];
    let mut out = VortexSet {
        threshold: tau,
        vortices: vec![],
        phantom_dips: vec![],
        boundary_components: vec![],
    };
    for start in 0..n {
        if !low[start] || seen[start] {
            continue;
        }
        let mut comp = vec![];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(k) = queue.pop_front() {
            comp.push(k);
            let (i, j) = g.ij(k);
            let mut nb = Vec::with_capacity(4);
            if i > 0 {
                nb.push(k - 1);
            }
            if i + 1 < g.nx {
                nb.push(k + 1);
            }
            if j > 0 {
                nb.push(k - g.nx);
            }
            if j + 1 < g.ny {
                nb.push(k + g.nx);
            }
            for m in nb {
                if low[m] && !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            }
        }
        if comp.iter().any(|&k| g.role[k] == NodeRole::Boundary) {
            out.boundary_components.push(g.point(comp[0]));
            continue;
        }
        let mut wsum = 0.0;
        let mut c = Point::ORIGIN;
        for &k in &comp {
            let w = tau - v.values[k].norm();
            wsum += w;
            c = c + g.point(k) * w;
        }
        let centroid = c * (1.0 / wsum);
        let extent = comp.iter().map(|&k| g.point(k).dist(centroid)).fold(0.0, f64::max);
        // Sub-grid refinement: zeros of the bilinear interpolant in cells
        // touching the component.
        let mut best: Option<(Point, f64)> = None;
        for &k in &comp {
            let (i, j) = g.ij(k);
            for (ci, cj) in [(i, j), (i.wrapping_sub(1), j), (i, j.wrapping_sub(1)), (i.wrapping_sub(1), j.wrapping_sub(1))] {
                if ci >= g.nx || cj >= g.ny || !g.cell_is_active(ci, cj) {
                    continue;
                }
                if let Some((p, r)) = bilinear_zero(v, ci, cj) {
                    if r < 1e-8 && best.is_none_or(|(q, _)| p.dist(centroid) < q.dist(centroid)) {
                        best = Some((p, r));
                    }
                }
            }
        }
        let position = best.map_or(centroid, |b| b.0);
        let mut radius = (4.0 * g.h).max(opts.min_radius).max(extent + 2.0 * g.h);
        let mut degree = None;
        for _ in 0..12 {
            match degree_on_circle(v, position, radius) {
                Ok(d) => {
                    degree = Some(d);
                    break;
                }
                Err(_) => radius *= 1.3,
            }
        }
        match degree {
            Some(0) => out.phantom_dips.push(position),
            Some(d) => out.vortices.push(Vortex { position, degree: d, circle_radius: radius }),
            None => out.boundary_components.push(position),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscFamily {
    pub centers: Vec<Point>,
    pub radius: f64,
    /// Local energies `F(v, B(x_i, r) inside the domain)`.
    pub energies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscClassification {
    pub good: DiscFamily,
    pub bad: DiscFamily,
    pub threshold: f64,
}

/// Centers of a covering of the discrete domain by discs of radius `r`: a
/// greedy (lexicographic) maximal `r/2`-separated set of grid nodes, so the
/// quarter-radius discs are disjoint and every node is within `r/2` of a
/// center.
pub fn covering_centers(grid: &crate::grid::Grid, r: f64) -> Vec<Point> {
    let cell = 0.5 * r;
    let mut buckets: std::collections::HashMap<(i64, i64), Vec<Point>> = Default::default();
    let mut centers = vec![];
    for k in 0..grid.len() {
        if !grid.is_active(k) {
            continue;
        }
        let p = grid.point(k);
        let key = ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
        let mut near = false;
        'outer: for di in -1..=1 {
            for dj in -1..=1 {
                if let Some(list) = buckets.get(&(key.0 + di, key.1 + dj)) {
                    if list.iter().any(|q| q.dist(p) < cell) {
                        near = true;
                        break 'outer;
                    }
                }
            }
        }
        if !near {
            buckets.entry(key).or_default().push(p);
            centers.push(p);
        }
    }
    centers
}

/// Per-node energy density of `F` (edges split evenly between endpoints).
fn node_energy(v: &ComplexField, u: &ScalarField, eps: f64) -> Vec<f64> {
    let g = &v.grid;
    let nx = g.nx;
    let q = 0.25 / (eps * eps);
    let mut e = vec![0.0; g.len()];
    for k in 0..g.len() {
        let uk2 = u.values[k] * u.values[k];
        if g.cx[k] > 0.0 {
            let w = 0.5 * (uk2 + u.values[k + 1].powi(2));
            let d = 0.25 * w * (v.values[k + 1] - v.values[k]).norm_sqr();
            e[k] += d;
            e[k + 1] += d;
        }
        if g.cy[k] > 0.0 {
            let w = 0.5 * (uk2 + u.values[k + nx].powi(2));
            let d = 0.25 * w * (v.values[k + nx] - v.values[k]).norm_sqr();
            e[k] += d;
            e[k + nx] += d;
        }
        if g.mass[k] > 0.0 {
            let t = 1.0 - v.values[k].norm_sqr();
            e[k] += g.mass[k] * q * uk2 * uk2 * t * t;
        }
    }
    e
}

/// `c0` putting the threshold at half the largest disc energy of `all` (a
/// classification computed with any `c0`).
pub fn calibrated_c0(all: &DiscClassification, eps: f64) -> f64 {
    let top = all.good.energies.iter().chain(&all.bad.energies).fold(0.0f64, |m, e| m.max(*e));
    0.5 * top / eps.ln().abs()
}

/// Splits the covering by discs of radius `eps^alpha` into good and bad discs:
/// a disc is bad when its energy exceeds `c0 |ln eps|`.
pub fn classify_discs(v: &ComplexField, u: &ScalarField, eps: f64, alpha: f64, c0: f64) -> Result<DiscClassification> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::validation("epsilon must lie in (0, 1)"));
    }
    if !(alpha > 0.0) {
        return Err(Error::validation("disc exponent must be positive"));
    }
    let g = &v.grid;
    let r = eps.powf(alpha);
    let density = node_energy(v, u, eps);
    let threshold = c0 * eps.ln().abs();
    let centers = covering_centers(g, r);
    let mut good = DiscFamily { centers: vec![], radius: r, energies: vec![] };
    let mut bad = good.clone();
    let span = (r / g.h).ceil() as isize + 1;
    for c in centers {
        let ci = ((c.x - g.x0) / g.h).round() as isize;
        let cj = ((c.y - g.y0) / g.h).round() as isize;
        let mut e = 0.0;
        for j in (cj - span).max(0)..=(cj + span).min(g.ny as isize - 1) {
            for i in (ci - span).max(0)..=(ci + span).min(g.nx as isize - 1) {
                let k = g.idx(i as usize, j as usize);
                if g.point(k).dist(c) < r {
                    e += density[k];
                }
            }
        }
        let fam = if e > threshold { &mut bad } else { &mut good };
        fam.centers.push(c);
        fam.energies.push(e);
    }
    Ok(DiscClassification { good, bad, threshold })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationResult {
    pub centers: Vec<Point>,
    pub kappa: f64,
    /// Number of merge rounds (kappa = 9^merges).
    pub merges: u32,
}

fn lexicographic(points: &[Point]) -> Vec<Point> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    p
}

fn min_pairwise(points: &[Point]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            m = m.min(points[i].dist(points[j]));
        }
    }
    m
}

/// Selects a subset `y` and `kappa in {9^0, ..., 9^(N-1)}` such that the
/// discs `B(x_i, eta)` are covered by the discs `B(y_j, kappa eta)` and the
/// `y_j` are `8 kappa eta` apart. While two selected centers are too close,
/// a greedy maximal `8 kappa eta`-separated subset (lexicographic order) is
/// kept and kappa is multiplied by 9.
pub fn separate(centers: &[Point], eta: f64) -> Result<SeparationResult> {
    if centers.is_empty() {
        return Err(Error::validation("separation needs at least one center"));
    }
    if !(eta > 0.0) {
        return Err(Error::validation("eta must be positive"));
    }
    let mut sel = lexicographic(centers);
    let mut kappa = 1.0;
    let mut merges = 0;
    while sel.len() > 1 && min_pairwise(&sel) < 8.0 * kappa * eta {
        let mut keep: Vec<Point> = vec![];
        for p in &sel {
            if keep.iter().all(|q| q.dist(*p) >= 8.0 * kappa * eta) {
                keep.push(*p);
            }
        }
        sel = keep;
        kappa *= 9.0;
        merges += 1;
    }
    Ok(SeparationResult { centers: sel, kappa, merges })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationStep {
    pub step: usize,
    pub eta_prime: f64,
    pub kappa: f64,
    pub eta: f64,
    pub centers: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationTrace {
    pub eta_stop: f64,
    pub initial: Vec<Point>,
    pub steps: Vec<SeparationStep>,
    /// "single point" or "separated".
    pub stop_rule: String,
}

/// Iterated separation: at step k, `eta'_k` is a quarter of the minimal
/// distance among the current points and [`separate`] is applied at
/// scale `eta'_k`. Stops when one point remains or the selected points are
/// more than `4 eta_stop` apart.
pub fn separation_process(points: &[Point], eta_stop: f64) -> Result<SeparationTrace> {
    if points.is_empty() {
        return Err(Error::validation("separation needs at least one center"));
    }
    let mut cur = lexicographic(points);
    let mut steps = vec![];
    let stop_rule = loop {
        if cur.len() == 1 {
            break "single point";
        }
        if min_pairwise(&cur) > 4.0 * eta_stop {
            break "separated";
        }
        let eta_prime = 0.25 * min_pairwise(&cur);
        if !(eta_prime > 0.0) {
            return Err(Error::validation("separation process needs distinct points"));
        }
        let s = separate(&cur, eta_prime)?;
        cur = s.centers.clone();
        steps.push(SeparationStep {
            step: steps.len() + 1,
            eta_prime,
            kappa: s.kappa,
            eta: 2.0 * s.kappa * eta_prime,
            centers: s.centers,
        });
    };
    Ok(SeparationTrace {
        eta_stop,
        initial: points.to_vec(),
        steps,
        stop_rule: stop_rule.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroPinning {
    pub position: Point,
    pub degree: i32,
    pub inside: bool,
    /// Distance to the inclusion boundaries divided by `lambda delta`.
    pub normalized_distance: f64,
    pub level: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinningReport {
    pub zeros: Vec<ZeroPinning>,
    pub min_pairwise_distance: Option<f64>,
    pub min_boundary_distance: Option<f64>,
}

pub fn pinning_report(zeros: &VortexSet, field: &PinningField, scale: f64) -> PinningReport {
    let geo = &field.geometry;
    let dom = &field.grid().domain;
    let items: Vec<ZeroPinning> = zeros
        .vortices
        .iter()
        .map(|z| {
            let host = geo.host(z.position);
            ZeroPinning {
                position: z.position,
                degree: z.degree,
                inside: host.is_some(),
                normalized_distance: geo.distance_to_inclusion_boundary(z.position) / scale,
                level: host.map(|i| geo.inclusions[i].level),
            }
        })
        .collect();
    let pos = zeros.positions();
    PinningReport {
        min_pairwise_distance: (pos.len() > 1).then(|| min_pairwise(&pos)),
        min_boundary_distance: pos.iter().map(|p| dom.distance_to_boundary(*p)).reduce(f64::min),
        zeros: items,
    }
}

/// Smallest modulus over nodes farther than `radius` from every zero, or
/// `None` when the balls cover every node.
pub fn min_modulus_away(v: &ComplexField, zeros: &[Point], radius: f64) -> Option<f64> {
    let g = &v.grid;
    (0..g.len())
        .filter(|&k| g.is_active(k))
        .filter(|&k| zeros.iter().all(|z| g.point(k).dist(*z) >= radius))
        .map(|k| v.values[k].norm())
        .min_by(f64::total_cmp)
}

/// Synthetic vortex `(x - c)/|x - c| tanh(|x - c| / eps)`, conjugated for
/// negative degree.
pub fn synthetic_vortex(p: Point, c: Point, eps: f64, degree: i32) -> Complex64 {
    let r = p - c;
    let n = r.norm();
    if n == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let z = Complex64::new(r.x / n, r.y / n) * (n / eps).tanh();
    let mut out = Complex64::new(1.0, 0.0);
    for _ in 0..degree.unsigned_abs() {
        out *= if degree > 0 { z } else { z.conj() };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_far_centers_are_kept() {
        let s = separate(&[Point::ORIGIN, Point::new(16.0, 0.0)], 1.0).unwrap();
        assert_eq!(s.kappa, 1.0);
        assert_eq!(s.centers.len(), 2);
    }

    #[test]
    fn single_center_is_identity() {
        let s = separate(&[Point::new(0.3, 0.2)], 0.1).unwrap();
        assert_eq!(s.kappa, 1.0);
        assert_eq!(s.centers, vec![Point::new(0.3, 0.2)]);
    }

    #[test]
    fn process_stops_on_separated_pairs() {
        let pts = [Point::new(0.0, 0.0), Point::new(0.0, 0.1), Point::new(0.0, 10.0), Point::new(0.05, 10.0)];
        let t = separation_process(&pts, 1.0).unwrap();
        assert_eq!(t.steps.len(), 1);
        assert_eq!(t.stop_rule, "separated");
        assert_eq!(t.steps[0].centers.len(), 2);
        assert!(t.steps[0].kappa >= 9.0);
    }
}
