//! Pinning geometries and the pinning term `a_eps`.
//!
//! Inclusions are translated and scaled copies of a unit inclusion `omega`.
//! Membership and circle intersections use the exact geometry; the grid
//! sampling is only used by the PDE solvers.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geom::{dist_to_segment, Point};
use crate::grid::{DomainSpec, Grid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UnitInclusion {
    Disc { radius: f64 },
    /// Convex polygon, vertices in counter-clockwise order.
    Polygon { vertices: Vec<Point> },
}

impl Default for UnitInclusion {
    fn default() -> Self {
        UnitInclusion::Disc { radius: 0.25 }
    }
}

impl UnitInclusion {
    pub fn validate(&self) -> Result<()> {
        match self {
            UnitInclusion::Disc { radius } => {
                if !(radius.is_finite() && *radius > 0.0 && *radius < 0.5) {
                    return Err(Error::validation(format!(
                        "unit inclusion radius must lie in (0, 1/2), got {radius}"
                    )));
                }
            }
            UnitInclusion::Polygon { vertices } => {
                let n = vertices.len();
                if n < 3 {
                    return Err(Error::validation("polygon inclusion needs at least 3 vertices"));
                }
                for v in vertices {
                    if !(v.x.abs() < 0.5 && v.y.abs() < 0.5) {
                        return Err(Error::validation(format!(
                            "polygon vertex ({}, {}) outside the open unit cell",
                            v.x, v.y
                        )));
                    }
                }
                for k in 0..n {
                    let a = vertices[k];
                    let b = vertices[(k + 1) % n];
                    let c = vertices[(k + 2) % n];
                    if (b - a).cross(c - b) <= 0.0 {
                        return Err(Error::validation(
                            "polygon inclusion must be strictly convex and counter-clockwise",
                        ));
                    }
                    // The origin must lie strictly inside.
                    if (b - a).cross(Point::ORIGIN - a) <= 0.0 {
                        return Err(Error::validation("polygon inclusion must contain the origin"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Radius of a disc about the origin containing the inclusion.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            UnitInclusion::Disc { radius } => *radius,
            UnitInclusion::Polygon { vertices } => vertices.iter().map(|v| v.norm()).fold(0.0, f64::max),
        }
    }

    /// Closed-set membership in unit coordinates.
    pub fn contains(&self, q: Point) -> bool {
        match self {
            UnitInclusion::Disc { radius } => q.norm2() <= radius * radius,
            UnitInclusion::Polygon { vertices } => {
                let n = vertices.len();
                (0..n).all(|k| (vertices[(k + 1) % n] - vertices[k]).cross(q - vertices[k]) >= 0.0)
            }
        }
    }

    /// Unsigned distance to the boundary of the inclusion, unit coordinates.
    pub fn boundary_distance(&self, q: Point) -> f64 {
        match self {
            UnitInclusion::Disc { radius } => (q.norm() - radius).abs(),
            UnitInclusion::Polygon { vertices } => {
                let n = vertices.len();
                (0..n)
                    .map(|k| dist_to_segment(q, vertices[k], vertices[(k + 1) % n]))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Length of the part of the circle C(c, r) inside the inclusion, unit
    /// coordinates.
    pub fn arc_length_inside(&self, c: Point, r: f64) -> f64 {
        match self {
            UnitInclusion::Disc { radius } => disc_arc_length(c.norm(), r, *radius),
            UnitInclusion::Polygon { vertices } => {
                let n = vertices.len();
                let mut angles = vec![];
                for k in 0..n {
                    let a = vertices[k] - c;
                    let d = vertices[(k + 1) % n] - vertices[k];
                    // |a + t d| = r
                    let qa = d.norm2();
                    let qb = 2.0 * a.dot(d);
                    let qc = a.norm2() - r * r;
                    let disc = qb * qb - 4.0 * qa * qc;
                    if disc < 0.0 {
                        continue;
                    }
                    let s = disc.sqrt();
                    for t in [(-qb - s) / (2.0 * qa), (-qb + s) / (2.0 * qa)] {
                        if (0.0..=1.0).contains(&t) {
                            angles.push((a + d * t).angle().rem_euclid(TAU));
                        }
                    }
                }
                if angles.is_empty() {
                    return if self.contains(c + Point::new(r, 0.0)) { TAU * r } else { 0.0 };
                }
                angles.sort_by(f64::total_cmp);
                let m = angles.len();
                let mut len = 0.0;
                for k in 0..m {
                    let t0 = angles[k];
                    let t1 = if k + 1 < m { angles[k + 1] } else { angles[0] + TAU };
                    if t1 - t0 <= 0.0 {
                        continue;
                    }
                    let mid = 0.5 * (t0 + t1);
                    if self.contains(c + Point::polar(r, mid)) {
                        len += (t1 - t0) * r;
                    }
                }
                len
            }
        }
    }
}

/// Length of C(0-offset d, r) inside a disc of radius `big` when the centers
/// are `d` apart.
fn disc_arc_length(d: f64, r: f64, big: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    if d + r <= big {
        return TAU * r;
    }
    if d >= r + big || d + big <= r {
        return 0.0;
    }
    let cos_half = ((r * r + d * d - big * big) / (2.0 * r * d)).clamp(-1.0, 1.0);
    2.0 * r * cos_half.acos()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inclusion {
    pub center: Point,
    /// Physical size factor `lambda * delta^level`.
    pub scale: f64,
    pub level: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPinningSpec {
    pub b: f64,
    pub lambda: f64,
    pub delta: f64,
    #[serde(default)]
    pub omega: UnitInclusion,
}

impl PeriodicPinningSpec {
    pub fn validate(&self) -> Result<()> {
        check_b_lambda(self.b, self.lambda)?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::validation(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        self.omega.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledCenter {
    pub center: Point,
    /// Scale index j >= 1: the inclusion has size `lambda * delta^j`.
    pub level: u32,
}

/// Requirement of at least `d` scale-1 centers pairwise `eta` apart and `eta`
/// away from the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeRequirement {
    pub d: usize,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilutedPinningSpec {
    pub b: f64,
    pub lambda: f64,
    pub delta: f64,
    #[serde(default)]
    pub omega: UnitInclusion,
    pub centers: Vec<ScaledCenter>,
    #[serde(default)]
    pub requirement: Option<SizeRequirement>,
}

fn check_b_lambda(b: f64, lambda: f64) -> Result<()> {
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::validation(format!("b must lie in (0, 1), got {b}")));
    }
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::validation(format!("lambda must lie in (0, 1], got {lambda}")));
    }
    Ok(())
}

/// Checks the separation and boundary-distance hypotheses of a diluted
/// pinning specification. The error message lists every offending pair.
pub fn validate_separation(spec: &DilutedPinningSpec, dom: &DomainSpec) -> Result<()> {
    check_b_lambda(spec.b, spec.lambda)?;
    if !(spec.delta > 0.0 && spec.delta < 1.0) {
        return Err(Error::validation(format!("delta must lie in (0, 1), got {}", spec.delta)));
    }
    spec.omega.validate()?;
    let mut problems = Vec::new();
    for (i, c) in spec.centers.iter().enumerate() {
        if c.level == 0 {
            problems.push(format!("center {i} has scale index 0"));
            continue;
        }
        let r = spec.delta.powi(c.level as i32);
        if dom.distance_to_boundary(c.center) < r {
            problems.push(format!(
                "center {i} at ({}, {}) is closer than delta^{} to the boundary",
                c.center.x, c.center.y, c.level
            ));
        }
    }
    for i in 0..spec.centers.len() {
        for j in i + 1..spec.centers.len() {
            let (a, b) = (spec.centers[i], spec.centers[j]);
            let need = spec.delta.powi(a.level as i32) + spec.delta.powi(b.level as i32);
            let dist = a.center.dist(b.center);
            if dist < need {
                problems.push(format!("pair ({i}, {j}): distance {dist:.6e} < required {need:.6e}"));
            }
        }
    }
    if let Some(req) = spec.requirement {
        let mut chosen: Vec<Point> = Vec::new();
        for c in spec.centers.iter().filter(|c| c.level == 1) {
            if dom.distance_to_boundary(c.center) >= req.eta
                && chosen.iter().all(|p| p.dist(c.center) >= req.eta)
            {
                chosen.push(c.center);
            }
        }
        if chosen.len() < req.d {
            problems.push(format!(
                "only {} scale-1 centers are eta-separated and eta away from the boundary, need {}",
                chosen.len(),
                req.d
            ));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(format!("separation hypothesis violated: {}", problems.join("; "))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PinningKind {
    Periodic,
    Diluted,
}

/// Exact inclusion geometry with a bucket index for point queries.
#[derive(Debug, Clone)]
pub struct PinningGeometry {
    pub kind: PinningKind,
    pub b: f64,
    pub lambda: f64,
    pub delta: f64,
    pub omega: UnitInclusion,
    pub inclusions: Vec<Inclusion>,
    bucket: f64,
    index: HashMap<(i64, i64), Vec<usize>>,
}

impl PinningGeometry {
    pub fn new(kind: PinningKind, b: f64, lambda: f64, delta: f64, omega: UnitInclusion, inclusions: Vec<Inclusion>) -> Self {
        let reach = omega.bounding_radius();
        let bucket = inclusions
            .iter()
            .map(|c| 2.0 * c.scale * reach)
            .fold(0.0, f64::max)
            .max(1e-9);
        let mut index: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (n, inc) in inclusions.iter().enumerate() {
            let r = inc.scale * reach;
            let (i0, j0) = key(inc.center - Point::new(r, r), bucket);
            let (i1, j1) = key(inc.center + Point::new(r, r), bucket);
            for i in i0..=i1 {
                for j in j0..=j1 {
                    index.entry((i, j)).or_default().push(n);
                }
            }
        }
        PinningGeometry {
            kind,
            b,
            lambda,
            delta,
            omega,
            inclusions,
            bucket,
            index,
        }
    }

    /// Inclusion hosting `p`, if any.
    pub fn host(&self, p: Point) -> Option<usize> {
        self.index.get(&key(p, self.bucket)).and_then(|list| {
            list.iter()
                .copied()
                .find(|&n| {
                    let inc = &self.inclusions[n];
                    self.omega.contains((p - inc.center) * (1.0 / inc.scale))
                })
        })
    }

    pub fn contains(&self, p: Point) -> bool {
        self.host(p).is_some()
    }

    /// The pinning term at `p`.
    pub fn a(&self, p: Point) -> f64 {
        if self.contains(p) {
            self.b
        } else {
            1.0
        }
    }

    /// Distance from `p` to the boundary of the union of inclusions.
    pub fn distance_to_inclusion_boundary(&self, p: Point) -> f64 {
        if let Some(n) = self.host(p) {
            let inc = &self.inclusions[n];
            return inc.scale * self.omega.boundary_distance((p - inc.center) * (1.0 / inc.scale));
        }
        self.inclusions
            .iter()
            .map(|inc| inc.scale * self.omega.boundary_distance((p - inc.center) * (1.0 / inc.scale)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Length of C(center, rho) inside the inclusions, optionally restricted to
    /// one scale index.
    pub fn circle_length(&self, center: Point, rho: f64, level: Option<u32>) -> f64 {
        let reach = self.omega.bounding_radius();
        self.inclusions
            .iter()
            .filter(|inc| level.is_none_or(|l| inc.level == l))
            .filter(|inc| {
                let d = inc.center.dist(center);
                let r = inc.scale * reach;
                d <= rho + r && d + r >= rho
            })
            .map(|inc| inc.scale * self.omega.arc_length_inside((center - inc.center) * (1.0 / inc.scale), rho / inc.scale))
            .sum()
    }
}

fn key(p: Point, bucket: f64) -> (i64, i64) {
    ((p.x / bucket).floor() as i64, (p.y / bucket).floor() as i64)
}

/// Grid sampling of `a_eps` together with the exact geometry.
#[derive(Debug, Clone)]
pub struct PinningField {
    pub geometry: Arc<PinningGeometry>,
    pub a: ScalarField,
}

impl PinningField {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.a.grid
    }

    pub fn b(&self) -> f64 {
        self.geometry.b
    }

    fn sample(geometry: PinningGeometry, dom: DomainSpec) -> Result<Self> {
        let grid = Arc::new(Grid::new(dom)?);
        let geometry = Arc::new(geometry);
        let a = ScalarField::from_fn(grid, |p| geometry.a(p));
        Ok(PinningField { geometry, a })
    }

    /// Pinning term identically equal to 1 (no inclusions).
    pub fn uniform(dom: DomainSpec, b: f64) -> Result<Self> {
        PinningField::sample(
            PinningGeometry::new(PinningKind::Periodic, b, 1.0, 0.5, UnitInclusion::default(), vec![]),
            dom,
        )
    }
}

/// Inclusions `delta (k, l) + lambda delta omega` for every cell
/// `delta (k, l) + delta Y` contained in the domain.
pub fn periodic_inclusions(spec: &PeriodicPinningSpec, dom: &DomainSpec) -> Result<Vec<Inclusion>> {
    spec.validate()?;
    dom.validate()?;
    let d = spec.delta;
    let reach = 0.5 * dom.diameter() + d;
    let kmax = (reach / d).ceil() as i64 + 1;
    let c0 = dom.center;
    let (k0x, k0y) = ((c0.x / d).round() as i64, (c0.y / d).round() as i64);
    let mut out = Vec::new();
    for l in k0y - kmax..=k0y + kmax {
        for k in k0x - kmax..=k0x + kmax {
            let center = Point::new(k as f64 * d, l as f64 * d);
            let inside = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]
                .iter()
                .all(|&(sx, sy)| dom.contains(center + Point::new(sx * d, sy * d)));
            if inside {
                out.push(Inclusion {
                    center,
                    scale: spec.lambda * d,
                    level: 1,
                });
            }
        }
    }
    if out.is_empty() {
        return Err(Error::NoInteriorCell { delta: d });
    }
    Ok(out)
}

pub fn build_periodic(spec: &PeriodicPinningSpec, dom: DomainSpec) -> Result<PinningField> {
    let inclusions = periodic_inclusions(spec, &dom)?;
    PinningField::sample(
        PinningGeometry::new(PinningKind::Periodic, spec.b, spec.lambda, spec.delta, spec.omega.clone(), inclusions),
        dom,
    )
}

pub fn build_diluted(spec: &DilutedPinningSpec, dom: DomainSpec) -> Result<PinningField> {
    dom.validate()?;
    validate_separation(spec, &dom)?;
    let inclusions = spec
        .centers
        .iter()
        .map(|c| Inclusion {
            center: c.center,
            scale: spec.lambda * spec.delta.powi(c.level as i32),
            level: c.level,
        })
        .collect();
    PinningField::sample(
        PinningGeometry::new(PinningKind::Diluted, spec.b, spec.lambda, spec.delta, spec.omega.clone(), inclusions),
        dom,
    )
}

/// `|ln(lambda delta)|^3 / |ln eps|`.
pub fn validate_scaling(eps: f64, lambda: f64, delta: f64) -> Result<f64> {
    let ld = lambda * delta;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::validation(format!("epsilon must lie in (0, 1), got {eps}")));
    }
    if !(ld > 0.0 && ld < 1.0) {
        return Err(Error::validation(format!("lambda * delta must lie in (0, 1), got {ld}")));
    }
    Ok(ld.ln().abs().powi(3) / eps.ln().abs())
}

/// `H^1(C(center, rho) inside omega_eps)`.
pub fn circle_inclusion_length(field: &PinningField, center: Point, rho: f64) -> f64 {
    field.geometry.circle_length(center, rho, None)
}

/// Circle length restricted to the inclusions of one scale.
pub fn circle_inclusion_length_at_level(field: &PinningField, center: Point, rho: f64, level: u32) -> f64 {
    field.geometry.circle_length(center, rho, Some(level))
}

/// Arc length of C(center, rho) inside an arbitrary set by uniform angular
/// sampling; used to cross-check the exact computation.
pub fn sampled_arc_length(inside: impl Fn(Point) -> bool, center: Point, rho: f64, samples: usize) -> f64 {
    let hits = (0..samples)
        .filter(|&k| inside(center + Point::polar(rho, (k as f64 + 0.5) * TAU / samples as f64)))
        .count();
    TAU * rho * hits as f64 / samples as f64
}

/// Bound `16 pi^2 lambda rho` on circle/inclusion intersections.
pub fn intersection_bound(lambda: f64, rho: f64) -> f64 {
    16.0 * PI * PI * lambda * rho
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> PeriodicPinningSpec {
        PeriodicPinningSpec {
            b: 0.5,
            lambda: 0.5,
            delta: 0.25,
            omega: UnitInclusion::Disc { radius: 0.25 },
        }
    }

    fn dom() -> DomainSpec {
        DomainSpec::disc(1.0, 1.0 / 64.0)
    }

    #[test]
    fn cell_center_is_pinned_and_corner_is_not() {
        let f = build_periodic(&spec(), dom()).unwrap();
        let g = &f.geometry;
        assert_eq!(g.a(Point::new(0.25, 0.5)), 0.5);
        assert_eq!(g.a(Point::new(0.125, 0.125)), 1.0);
        // Cells straddling the boundary carry nothing.
        assert!(g.inclusions.iter().all(|i| i.center.norm() + 0.125 * 2f64.sqrt() <= 1.0 + 1e-12));
    }

    #[test]
    fn sampled_values_are_b_or_one() {
        let f = build_periodic(&spec(), dom()).unwrap();
        assert!(f.a.values.iter().all(|&v| v == 0.5 || v == 1.0));
        assert!(f.a.values.iter().any(|&v| v == 0.5));
    }

    #[test]
    fn full_scale_inclusion_radius() {
        let mut s = spec();
        s.lambda = 1.0;
        let f = build_periodic(&s, dom()).unwrap();
        let g = &f.geometry;
        assert!(g.contains(Point::new(0.25 + 0.0624, 0.0)));
        assert!(!g.contains(Point::new(0.25 + 0.0626, 0.0)));
    }

    #[test]
    fn no_interior_cell() {
        let mut s = spec();
        s.delta = 0.9;
        let r = build_periodic(&s, DomainSpec::disc(0.5, 0.05));
        assert!(matches!(r, Err(Error::NoInteriorCell { .. })));
    }

    #[test]
    fn diluted_two_scales() {
        let spec = DilutedPinningSpec {
            b: 0.5,
            lambda: 0.5,
            delta: 0.1,
            omega: UnitInclusion::default(),
            centers: vec![
                ScaledCenter { center: Point::ORIGIN, level: 1 },
                ScaledCenter { center: Point::new(1.0, 0.0), level: 2 },
            ],
            requirement: None,
        };
        let f = build_diluted(&spec, DomainSpec::disc(2.0, 1.0 / 32.0)).unwrap();
        assert_eq!(f.geometry.a(Point::new(1.0, 0.0)), 0.5);
        assert_eq!(f.geometry.a(Point::new(1.0, 0.0012)), 0.5);
        assert_eq!(f.geometry.a(Point::new(1.0, 0.0013)), 1.0);
    }

    #[test]
    fn diluted_separation_violation_lists_pair() {
        let d = 0.1;
        let spec = DilutedPinningSpec {
            b: 0.5,
            lambda: 0.5,
            delta: d,
            omega: UnitInclusion::default(),
            centers: vec![
                ScaledCenter { center: Point::ORIGIN, level: 1 },
                ScaledCenter { center: Point::new(0.5 * (d + d * d), 0.0), level: 2 },
            ],
            requirement: None,
        };
        let err = build_diluted(&spec, DomainSpec::disc(2.0, 1.0 / 32.0)).unwrap_err();
        match err {
            Error::Validation(m) => assert!(m.contains("pair (0, 1)")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn polygon_arc_length_matches_sampling() {
        let omega = UnitInclusion::Polygon {
            vertices: vec![
                Point::new(-0.3, -0.2),
                Point::new(0.35, -0.25),
                Point::new(0.2, 0.3),
                Point::new(-0.25, 0.2),
            ],
        };
        omega.validate().unwrap();
        for &(c, r) in &[(Point::new(0.0, 0.0), 0.27), (Point::new(0.3, 0.1), 0.2), (Point::new(-0.1, 0.05), 0.1)] {
            let exact = omega.arc_length_inside(c, r);
            let approx = sampled_arc_length(|p| omega.contains(p), c, r, 400_000);
            assert!((exact - approx).abs() < 1e-4, "{exact} vs {approx}");
        }
    }

    #[test]
    fn disc_arc_length_limits() {
        assert!((disc_arc_length(0.0, 0.1, 0.2) - TAU * 0.1).abs() < 1e-15);
        assert_eq!(disc_arc_length(1.0, 0.1, 0.2), 0.0);
        assert_eq!(disc_arc_length(0.0, 0.5, 0.2), 0.0);
    }

    #[test]
    fn scaling_ratio_domain_errors() {
        assert!(validate_scaling(1.0, 0.5, 0.5).is_err());
        assert!(validate_scaling(0.1, 1.0, 1.0).is_err());
        let eps: f64 = 1e-3;
        let r = validate_scaling(eps, eps.sqrt(), eps.sqrt()).unwrap();
        assert!((r - eps.ln().abs().powi(2)).abs() < 1e-9);
    }
}
