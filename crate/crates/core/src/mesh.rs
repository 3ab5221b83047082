//! Boundary-fitted P1 triangle meshes of perforated domains.
//!
//! The bulk is a Cartesian lattice of spacing `h` with union-jack diagonals.
//! Each hole `B(x_i, rho)` is surrounded by a log-polar ring mesh reaching out
//! to a radius comparable to `h`; lattice cells meeting that ring are removed
//! and the gap between the ring and the lattice staircase is closed by a
//! zipper triangulation. Discs get the same treatment at the outer boundary,
//! which carries `~2 pi R / h` nodes placed exactly on the circle.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{wrap_angle, Point};
use crate::grid::{DomainSpec, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Interior,
    /// On the outer boundary.
    Boundary,
    /// On the rim of hole `i`.
    Rim(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoleRing {
    pub center: Point,
    pub radius: f64,
    /// Vertex radius of the rim polygon.
    pub rim_radius: f64,
    pub outer_radius: f64,
    pub n_theta: usize,
    pub layers: usize,
    pub rim: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct TriMesh {
    pub domain: DomainSpec,
    pub nodes: Vec<Point>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub kind: Vec<NodeKind>,
    pub holes: Vec<HoleRing>,
}

impl TriMesh {
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.nodes[a], self.nodes[b], self.nodes[c])
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn boundary_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&k| self.kind[k] == NodeKind::Boundary)
    }
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * (b - a).cross(c - a)
}

/// Ring radius, angular resolution and layer count used around a hole of
/// radius `rho` in a lattice of spacing `h`.
pub fn ring_layout(rho: f64, h: f64) -> (f64, usize, usize) {
    let outer = (2.0 * rho).max(rho + 3.0 * h);
    let n_theta = (4 * ((2.0 * PI * outer / h / 4.0).round() as usize)).max(32);
    let rim = rim_radius(rho, n_theta);
    let layers = ((outer / rim).ln() / (2.0 * PI / n_theta as f64)).ceil().max(2.0) as usize;
    (outer, n_theta, layers)
}

/// Vertex radius of the inscribed `n`-gon whose exterior has the same
/// logarithmic capacity integral as the exterior of the circle of radius
/// `rho` (mean of `ln |x|` over the polygon boundary angle equals `ln rho`).
pub fn rim_radius(rho: f64, n: usize) -> f64 {
    rho * (PI * PI / (3.0 * (n * n) as f64)).exp()
}

#[derive(Clone, Copy, PartialEq)]
enum Cell {
    Outside,
    Core,
    Removed(usize),
}

struct Lattice {
    origin: Point,
    h: f64,
    nx: usize,
    ny: usize,
}

impl Lattice {
    fn node(&self, i: usize, j: usize) -> Point {
        Point::new(self.origin.x + i as f64 * self.h, self.origin.y + j as f64 * self.h)
    }

    fn cell_distance(&self, i: usize, j: usize, p: Point) -> f64 {
        let lo = self.node(i, j);
        let dx = (lo.x - p.x).max(0.0).max(p.x - lo.x - self.h);
        let dy = (lo.y - p.y).max(0.0).max(p.y - lo.y - self.h);
        dx.hypot(dy)
    }
}

fn too_close(i: usize) -> Error {
    Error::Resolution(format!("points too close for the grid (hole {i} collides with another hole or the boundary)"))
}

/// Meshes `dom` minus the closed discs `B(holes[i], rho)`.
pub fn perforated_mesh(dom: &DomainSpec, holes: &[Point], rho: f64) -> Result<TriMesh> {
    dom.validate()?;
    let h = dom.h;
    let c = dom.center;
    let (lat, disc_radius) = match dom.shape {
        Shape::Disc { radius } => {
            let k = (radius / h).ceil() as usize;
            (
                Lattice { origin: c - Point::new(k as f64 * h, k as f64 * h), h, nx: 2 * k, ny: 2 * k },
                Some(radius),
            )
        }
        Shape::Rect { width, height } => {
            let (fx, fy) = (width / h, height / h);
            if (fx - fx.round()).abs() > 1e-9 * fx || (fy - fy.round()).abs() > 1e-9 * fy {
                return Err(Error::validation("rectangle sides must be integer multiples of h"));
            }
            (
                Lattice {
                    origin: c - Point::new(0.5 * width, 0.5 * height),
                    h,
                    nx: fx.round() as usize,
                    ny: fy.round() as usize,
                },
                None,
            )
        }
        Shape::Annulus { .. } => return Err(Error::validation("perforated meshes support discs and rectangles")),
    };
    if !holes.is_empty() && !(rho > 0.0) {
        return Err(Error::validation("hole radius must be positive"));
    }
    let (nx, ny) = (lat.nx, lat.ny);
    let cid = |i: usize, j: usize| j * nx + i;
    let mut cells = vec![Cell::Core; nx * ny];
    if let Some(r) = disc_radius {
        let lim = r - 0.5 * h;
        for j in 0..ny {
            for i in 0..nx {
                let inside = [(0, 0), (1, 0), (0, 1), (1, 1)]
                    .iter()
                    .all(|&(a, b)| lat.node(i + a, j + b).dist(c) <= lim);
                if !inside {
                    cells[cid(i, j)] = Cell::Outside;
                }
            }
        }
    }

    let (ring_r, n_theta, layers) = ring_layout(rho, h);
    let clear = ring_r + 0.5 * h;
    for (hi, &p) in holes.iter().enumerate() {
        if !p.is_finite() || !dom.contains(p) {
            return Err(Error::validation(format!("hole center {hi} lies outside the domain")));
        }
        let lo_i = ((p.x - clear - lat.origin.x) / h).floor() as isize - 1;
        let hi_i = ((p.x + clear - lat.origin.x) / h).ceil() as isize + 1;
        let lo_j = ((p.y - clear - lat.origin.y) / h).floor() as isize - 1;
        let hi_j = ((p.y + clear - lat.origin.y) / h).ceil() as isize + 1;
        for j in lo_j..=hi_j {
            for i in lo_i..=hi_i {
                let inside_lat = i >= 0 && j >= 0 && (i as usize) < nx && (j as usize) < ny;
                let hit = inside_lat && lat.cell_distance(i as usize, j as usize, p) <= clear;
                if !inside_lat {
                    // Cells outside the lattice range must not meet the ring.
                    let lo = lat.node(0, 0);
                    let q = Point::new(lo.x + i as f64 * h, lo.y + j as f64 * h);
                    let dx = (q.x - p.x).max(0.0).max(p.x - q.x - h);
                    let dy = (q.y - p.y).max(0.0).max(p.y - q.y - h);
                    if dx.hypot(dy) <= clear {
                        return Err(too_close(hi));
                    }
                    continue;
                }
                if hit {
                    let k = cid(i as usize, j as usize);
                    match cells[k] {
                        Cell::Core => cells[k] = Cell::Removed(hi),
                        _ => return Err(too_close(hi)),
                    }
                }
            }
        }
    }
    // Every neighbour of a removed cell must be a kept lattice cell or removed
    // by the same hole, so that each staircase loop is surrounded by bulk.
    for j in 0..ny {
        for i in 0..nx {
            if let Cell::Removed(hi) = cells[cid(i, j)] {
                for dj in -1isize..=1 {
                    for di in -1isize..=1 {
                        let (a, b) = (i as isize + di, j as isize + dj);
                        if a < 0 || b < 0 || a as usize >= nx || b as usize >= ny {
                            return Err(too_close(hi));
                        }
                        match cells[cid(a as usize, b as usize)] {
                            Cell::Core => {}
                            Cell::Removed(o) if o == hi => {}
                            _ => return Err(too_close(hi)),
                        }
                    }
                }
            }
        }
    }

    let nid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut index = vec![usize::MAX; (nx + 1) * (ny + 1)];
    let mut nodes = vec![];
    let mut kind = vec![];
    let mut triangles: Vec<[usize; 3]> = vec![];
    let cell_at = |i: isize, j: isize| -> Cell {
        if i < 0 || j < 0 || i as usize >= nx || j as usize >= ny {
            Cell::Outside
        } else {
            cells[cid(i as usize, j as usize)]
        }
    };
    for j in 0..=ny {
        for i in 0..=nx {
            let around = [
                cell_at(i as isize - 1, j as isize - 1),
                cell_at(i as isize, j as isize - 1),
                cell_at(i as isize - 1, j as isize),
                cell_at(i as isize, j as isize),
            ];
            if around.contains(&Cell::Core) {
                index[nid(i, j)] = nodes.len();
                nodes.push(lat.node(i, j));
                let on_rect_edge = disc_radius.is_none() && (i == 0 || j == 0 || i == nx || j == ny);
                kind.push(if on_rect_edge { NodeKind::Boundary } else { NodeKind::Interior });
            }
        }
    }
    for j in 0..ny {
        for i in 0..nx {
            if cells[cid(i, j)] != Cell::Core {
                continue;
            }
            let n00 = index[nid(i, j)];
            let n10 = index[nid(i + 1, j)];
            let n01 = index[nid(i, j + 1)];
            let n11 = index[nid(i + 1, j + 1)];
            if (i + j) % 2 == 0 {
                triangles.push([n00, n10, n11]);
                triangles.push([n00, n11, n01]);
            } else {
                triangles.push([n00, n10, n01]);
                triangles.push([n10, n11, n01]);
            }
        }
    }

    // Staircase loop around a set of cells: lattice nodes shared by a cell of
    // the set and a kept cell, sorted by angle about `center`.
    let staircase = |nodes: &[Point], inside: &dyn Fn(Cell) -> bool, center: Point, tag: usize| -> Result<Vec<(usize, f64)>> {
        let mut out = vec![];
        for j in 0..=ny {
            for i in 0..=nx {
                let (a, b) = (i as isize, j as isize);
                let around = [cell_at(a - 1, b - 1), cell_at(a, b - 1), cell_at(a, b), cell_at(a - 1, b)];
                let ins: Vec<bool> = around.iter().map(|&x| inside(x)).collect();
                let kept = around.iter().any(|&x| x == Cell::Core);
                if !kept || !ins.iter().any(|&x| x) {
                    continue;
                }
                let count = ins.iter().filter(|&&x| x).count();
                if count == 4 {
                    continue;
                }
                if count == 2 && ins[0] == ins[2] {
                    return Err(too_close(tag));
                }
                let k = index[nid(i, j)];
                out.push((k, (nodes[k] - center).angle()));
            }
        }
        out.sort_by(|x, y| x.1.total_cmp(&y.1));
        Ok(out)
    };

    let mut rings = vec![];
    for (hi, &p) in holes.iter().enumerate() {
        let rim_r = rim_radius(rho, n_theta);
        let base = nodes.len();
        for l in 0..=layers {
            let r = rim_r * (ring_r / rim_r).powf(l as f64 / layers as f64);
            for k in 0..n_theta {
                nodes.push(p + Point::polar(r, 2.0 * PI * k as f64 / n_theta as f64));
                kind.push(if l == 0 { NodeKind::Rim(hi) } else { NodeKind::Interior });
            }
        }
        let at = |l: usize, k: usize| base + l * n_theta + k % n_theta;
        for l in 0..layers {
            for k in 0..n_theta {
                let (a, b, cc, d) = (at(l, k), at(l + 1, k), at(l + 1, k + 1), at(l, k + 1));
                if (l + k) % 2 == 0 {
                    triangles.push([a, b, cc]);
                    triangles.push([a, cc, d]);
                } else {
                    triangles.push([a, b, d]);
                    triangles.push([b, cc, d]);
                }
            }
        }
        let mut inner: Vec<(usize, f64)> = (0..n_theta).map(|k| (at(layers, k), (nodes[at(layers, k)] - p).angle())).collect();
        inner.sort_by(|x, y| x.1.total_cmp(&y.1));
        let outer = staircase(&nodes, &|x| x == Cell::Removed(hi), p, hi)?;
        zipper(&inner, &outer, &nodes, &mut triangles).map_err(|_| too_close(hi))?;
        rings.push(HoleRing {
            center: p,
            radius: rho,
            rim_radius: rim_r,
            outer_radius: ring_r,
            n_theta,
            layers,
            rim: (0..n_theta).map(|k| at(0, k)).collect(),
        });
    }

    if let Some(r) = disc_radius {
        let nb = 4 * ((2.0 * PI * r / h / 4.0).ceil() as usize);
        let base = nodes.len();
        for k in 0..nb {
            nodes.push(c + Point::polar(r, 2.0 * PI * k as f64 / nb as f64));
            kind.push(NodeKind::Boundary);
        }
        let mut outer: Vec<(usize, f64)> = (0..nb).map(|k| (base + k, (nodes[base + k] - c).angle())).collect();
        outer.sort_by(|x, y| x.1.total_cmp(&y.1));
        let inner = staircase(&nodes, &|x| x != Cell::Outside, c, usize::MAX)?;
        zipper(&inner, &outer, &nodes, &mut triangles)
            .map_err(|_| Error::Resolution("outer boundary zipper failed; grid too coarse for the disc".into()))?;
    }

    for t in &triangles {
        if signed_area(nodes[t[0]], nodes[t[1]], nodes[t[2]]) <= 0.0 {
            return Err(Error::Resolution("mesh generation produced an inverted triangle".into()));
        }
    }
    Ok(TriMesh { domain: *dom, nodes, triangles, kind, holes: rings })
}

/// Triangulates the band between two loops that are star-shaped about a
/// common point, both given as (node, angle) sorted by angle. Starting from
/// the edge joining `inner[s]` to the angularly closest outer node, a dynamic
/// program over the (inner, outer) index grid picks the sequence of triangles
/// with positive orientation minimising the total length of the new edges.
fn zipper(inner: &[(usize, f64)], outer: &[(usize, f64)], nodes: &[Point], tris: &mut Vec<[usize; 3]>) -> Result<()> {
    let (n, m) = (inner.len(), outer.len());
    if n < 3 || m < 3 {
        return Err(Error::Resolution("degenerate zipper loop".into()));
    }
    let step = (n / 8).max(1);
    for s in (0..n).step_by(step) {
        let a0 = inner[s].1;
        let t = (0..m)
            .min_by(|&x, &y| wrap_angle(outer[x].1 - a0).abs().total_cmp(&wrap_angle(outer[y].1 - a0).abs()))
            .unwrap();
        if let Some(band) = zip_from(n, m, nodes, |i| inner[(s + i) % n].0, |j| outer[(t + j) % m].0) {
            tris.extend(band);
            return Ok(());
        }
    }
    Err(Error::Resolution("inverted zipper triangle".into()))
}

fn zip_from(n: usize, m: usize, nodes: &[Point], a: impl Fn(usize) -> usize, b: impl Fn(usize) -> usize) -> Option<Vec<[usize; 3]>> {
    let scale = nodes[a(0)].dist(nodes[b(0)]).max(1e-300);
    let valid = |t: [usize; 3]| signed_area(nodes[t[0]], nodes[t[1]], nodes[t[2]]) > 1e-12 * scale * scale;
    let w = m + 1;
    let mut cost = vec![f64::INFINITY; (n + 1) * w];
    // 1: reached by advancing the inner loop, 2: the outer loop.
    let mut from = vec![0u8; (n + 1) * w];
    cost[0] = 0.0;
    for i in 0..=n {
        for j in 0..=m {
            let here = cost[i * w + j];
            if !here.is_finite() {
                continue;
            }
            if i < n && valid([a(i), b(j), a(i + 1)]) {
                let c = here + nodes[a(i + 1)].dist(nodes[b(j)]);
                let k = (i + 1) * w + j;
                if c < cost[k] {
                    cost[k] = c;
                    from[k] = 1;
                }
            }
            if j < m && valid([a(i), b(j), b(j + 1)]) {
                let c = here + nodes[a(i)].dist(nodes[b(j + 1)]);
                let k = i * w + j + 1;
                if c < cost[k] {
                    cost[k] = c;
                    from[k] = 2;
                }
            }
        }
    }
    if !cost[n * w + m].is_finite() {
        return None;
    }
    let mut out = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if from[i * w + j] == 1 {
            out.push([a(i - 1), b(j), a(i)]);
            i -= 1;
        } else {
            out.push([a(i), b(j - 1), b(j)]);
            j -= 1;
        }
    }
    out.reverse();
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn edge_counts(m: &TriMesh) -> HashMap<(usize, usize), usize> {
        let mut e = HashMap::new();
        for t in &m.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *e.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        e
    }

    fn polygon_area(r: f64, n: usize) -> f64 {
        0.5 * n as f64 * r * r * (2.0 * PI / n as f64).sin()
    }

    #[test]
    fn disc_with_holes_tiles_the_perforated_polygon() {
        let dom = DomainSpec::disc(1.0, 1.0 / 32.0);
        let holes = [Point::new(0.3, 0.1), Point::new(-0.4, -0.2)];
        let m = perforated_mesh(&dom, &holes, 0.01).unwrap();
        let nb = m.boundary_nodes().count();
        let mut expect = polygon_area(1.0, nb);
        for hr in &m.holes {
            expect -= polygon_area(hr.rim_radius, hr.n_theta);
        }
        assert!((m.area() - expect).abs() < 1e-12, "{} vs {expect}", m.area());
        // Each edge is shared by at most two triangles; boundary edges are the
        // outer polygon and the rims.
        let e = edge_counts(&m);
        assert!(e.values().all(|&c| c <= 2));
        let single = e.values().filter(|&&c| c == 1).count();
        assert_eq!(single, nb + m.holes.iter().map(|h| h.n_theta).sum::<usize>());
    }

    #[test]
    fn rectangle_mesh_is_conforming() {
        let dom = DomainSpec::rect(1.0, 0.5, 1.0 / 64.0);
        let m = perforated_mesh(&dom, &[Point::new(0.1, 0.0)], 0.02).unwrap();
        let expect = 0.5 - polygon_area(m.holes[0].rim_radius, m.holes[0].n_theta);
        assert!((m.area() - expect).abs() < 1e-12);
        assert_eq!(m.boundary_nodes().count(), 2 * (64 + 32));
    }

    #[test]
    fn close_holes_are_rejected() {
        let dom = DomainSpec::disc(1.0, 1.0 / 32.0);
        let err = perforated_mesh(&dom, &[Point::new(0.0, 0.0), Point::new(0.1, 0.0)], 0.01).unwrap_err();
        assert!(err.to_string().contains("too close"), "{err}");
        let err = perforated_mesh(&dom, &[Point::new(0.97, 0.0)], 0.01).unwrap_err();
        assert!(err.to_string().contains("too close"), "{err}");
    }

    #[test]
    fn unaligned_rectangle_is_rejected() {
        assert!(perforated_mesh(&DomainSpec::rect(1.0, 0.5, 0.3), &[], 0.0).is_err());
    }
}
