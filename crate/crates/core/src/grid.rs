//! Uniform Cartesian node grids over a disc or a rectangle.
//!
//! A cell is active when its four corners lie in the closed domain. Nodes
//! touched by an active cell are part of the discrete domain; a node is
//! interior when all four surrounding cells are active and a boundary
//! (Dirichlet) node otherwise. Discrete energies use the 5-point structure:
//! every edge with an interior endpoint carries weight 1 and every interior
//! node an area h^2, so Euler-Lagrange equations are the standard 5-point
//! scheme.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point;

const INSIDE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Disc { radius: f64 },
    Rect { width: f64, height: f64 },
    /// Disc of radius `radius` with a concentric hole of radius `inner`.
    Annulus { radius: f64, inner: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub shape: Shape,
    #[serde(default)]
    pub center: Point,
    /// Grid spacing.
    pub h: f64,
    /// Width of the collar added around the domain (the enlarged domain).
    #[serde(default)]
    pub margin: f64,
}

impl DomainSpec {
    pub fn disc(radius: f64, h: f64) -> Self {
        DomainSpec {
            shape: Shape::Disc { radius },
            center: Point::ORIGIN,
            h,
            margin: 0.0,
        }
    }

    pub fn rect(width: f64, height: f64, h: f64) -> Self {
        DomainSpec {
            shape: Shape::Rect { width, height },
            center: Point::ORIGIN,
            h,
            margin: 0.0,
        }
    }

    pub fn with_center(mut self, c: Point) -> Self {
        self.center = c;
        self
    }

    pub fn with_margin(mut self, m: f64) -> Self {
        self.margin = m;
        self
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok_pos = |v: f64| v.is_finite() && v > 0.0;
        match self.shape {
            Shape::Disc { radius } if !ok_pos(radius) => {
                return Err(Error::validation(format!("disc radius must be positive, got {radius}")))
            }
            Shape::Rect { width, height } if !ok_pos(width) || !ok_pos(height) => {
                return Err(Error::validation(format!(
                    "rectangle sides must be positive, got {width} x {height}"
                )))
            }
            Shape::Annulus { radius, inner } if !(ok_pos(inner) && inner < radius) => {
                return Err(Error::validation(format!(
                    "annulus radii must satisfy 0 < inner < outer, got {inner}, {radius}"
                )))
            }
            _ => {}
        }
        if !ok_pos(self.h) {
            return Err(Error::validation(format!("grid spacing must be positive, got {}", self.h)));
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(Error::validation(format!("margin must be non-negative, got {}", self.margin)));
        }
        if !self.center.is_finite() {
            return Err(Error::validation("domain center must be finite"));
        }
        if self.h > 0.25 * self.inradius() {
            return Err(Error::Resolution(format!(
                "grid spacing {} too coarse for a domain of inradius {}",
                self.h,
                self.inradius()
            )));
        }
        Ok(())
    }

    /// Radius of the largest disc centered at `center` inside the domain.
    pub fn inradius(&self) -> f64 {
        match self.shape {
            Shape::Disc { radius } => radius,
            Shape::Rect { width, height } => 0.5 * width.min(height),
            Shape::Annulus { radius, inner } => 0.5 * (radius - inner),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self.shape {
            Shape::Disc { radius } | Shape::Annulus { radius, .. } => 2.0 * radius,
            Shape::Rect { width, height } => width.hypot(height),
        }
    }

    pub fn area(&self) -> f64 {
        match self.shape {
            Shape::Disc { radius } => std::f64::consts::PI * radius * radius,
            Shape::Rect { width, height } => width * height,
            Shape::Annulus { radius, inner } => std::f64::consts::PI * (radius * radius - inner * inner),
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        self.contains_dilated(p, 0.0)
    }

    /// Membership in the domain dilated by `m`.
    pub fn contains_dilated(&self, p: Point, m: f64) -> bool {
        let q = p - self.center;
        match self.shape {
            Shape::Disc { radius } => q.norm() <= (radius + m) * (1.0 + INSIDE_TOL),
            Shape::Annulus { radius, inner } => {
                let r = q.norm();
                r <= (radius + m) * (1.0 + INSIDE_TOL) && r >= (inner - m) * (1.0 - INSIDE_TOL)
            }
            Shape::Rect { width, height } => {
                let tx = (0.5 * width + m) * (1.0 + INSIDE_TOL);
                let ty = (0.5 * height + m) * (1.0 + INSIDE_TOL);
                q.x.abs() <= tx && q.y.abs() <= ty
            }
        }
    }

    /// Unsigned distance from an interior point to the boundary (negative
    /// outside).
    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        let q = p - self.center;
        match self.shape {
            Shape::Disc { radius } => radius - q.norm(),
            Shape::Annulus { radius, inner } => (radius - q.norm()).min(q.norm() - inner),
            Shape::Rect { width, height } => {
                let dx = 0.5 * width - q.x.abs();
                let dy = 0.5 * height - q.y.abs();
                if dx >= 0.0 && dy >= 0.0 {
                    dx.min(dy)
                } else {
                    -Point::new(dx.min(0.0), dy.min(0.0)).norm()
                }
            }
        }
    }

    /// Nearest point of the boundary.
    pub fn project_to_boundary(&self, p: Point) -> Point {
        let q = p - self.center;
        match self.shape {
            Shape::Disc { radius } => {
                let n = q.norm();
                let dir = if n > 0.0 { q * (1.0 / n) } else { Point::new(1.0, 0.0) };
                self.center + dir * radius
            }
            Shape::Annulus { radius, inner } => {
                let n = q.norm();
                let dir = if n > 0.0 { q * (1.0 / n) } else { Point::new(1.0, 0.0) };
                let r = if radius - n <= n - inner { radius } else { inner };
                self.center + dir * r
            }
            Shape::Rect { width, height } => {
                let (hx, hy) = (0.5 * width, 0.5 * height);
                let cx = q.x.clamp(-hx, hx);
                let cy = q.y.clamp(-hy, hy);
                let inside = q.x.abs() <= hx && q.y.abs() <= hy;
                let r = if inside {
                    if hx - q.x.abs() <= hy - q.y.abs() {
                        Point::new(hx.copysign(q.x), q.y)
                    } else {
                        Point::new(q.x, hy.copysign(q.y))
                    }
                } else {
                    Point::new(cx, cy)
                };
                self.center + r
            }
        }
    }

    /// Polar angle of `p` about the domain center.
    pub fn polar_angle(&self, p: Point) -> f64 {
        (p - self.center).angle()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeRole {
    Interior,
    Boundary,
    Outside,
}

/// Node grid with the discrete domain structure.
#[derive(Debug, Clone)]
pub struct Grid {
    pub domain: DomainSpec,
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub x0: f64,
    pub y0: f64,
    pub role: Vec<NodeRole>,
    /// Active flag of cell (i, j), index `j * (nx - 1) + i`.
    pub cell_active: Vec<bool>,
    /// Weight (0 or 1) of the edge from node n to n + 1.
    pub cx: Vec<f64>,
    /// Weight of the edge from node n to n + nx.
    pub cy: Vec<f64>,
    /// Area attached to each node (h^2 on interior nodes, 0 elsewhere).
    pub mass: Vec<f64>,
}

impl Grid {
    pub fn new(domain: DomainSpec) -> Result<Self> {
        domain.validate()?;
        let h = domain.h;
        let (hx, hy) = match domain.shape {
            Shape::Disc { radius } | Shape::Annulus { radius, .. } => (radius, radius),
            Shape::Rect { width, height } => (0.5 * width, 0.5 * height),
        };
        let kx = ((hx + domain.margin) / h - 1e-9).ceil() as usize;
        let ky = ((hy + domain.margin) / h - 1e-9).ceil() as usize;
        let nx = 2 * kx + 1;
        let ny = 2 * ky + 1;
        let x0 = domain.center.x - kx as f64 * h;
        let y0 = domain.center.y - ky as f64 * h;

        let n = nx * ny;
        let inside: Vec<bool> = (0..n)
            .map(|k| {
                let p = Point::new(x0 + (k % nx) as f64 * h, y0 + (k / nx) as f64 * h);
                domain.contains(p)
            })
            .collect();

        let ncx = nx - 1;
        let mut cell_active = vec![false; ncx * (ny - 1)];
        let mut cells_at_node = vec![0u8; n];
        for j in 0..ny - 1 {
            for i in 0..ncx {
                let a = j * nx + i;
                if inside[a] && inside[a + 1] && inside[a + nx] && inside[a + nx + 1] {
                    cell_active[j * ncx + i] = true;
                    for c in [a, a + 1, a + nx, a + nx + 1] {
                        cells_at_node[c] += 1;
                    }
                }
            }
        }
        let role: Vec<NodeRole> = cells_at_node
            .iter()
            .map(|&c| match c {
                4 => NodeRole::Interior,
                0 => NodeRole::Outside,
                _ => NodeRole::Boundary,
            })
            .collect();
        let interior = |k: usize| role[k] == NodeRole::Interior;
        let active = |k: usize| role[k] != NodeRole::Outside;
        let mut cx = vec![0.0; n];
        let mut cy = vec![0.0; n];
        for k in 0..n {
            let i = k % nx;
            if i + 1 < nx && active(k) && active(k + 1) && (interior(k) || interior(k + 1)) {
                cx[k] = 1.0;
            }
            if k + nx < n && active(k) && active(k + nx) && (interior(k) || interior(k + nx)) {
                cy[k] = 1.0;
            }
        }
        let mass = (0..n).map(|k| if interior(k) { h * h } else { 0.0 }).collect();
        if !role.contains(&NodeRole::Interior) {
            return Err(Error::Resolution("grid has no interior node".into()));
        }
        Ok(Grid {
            domain,
            nx,
            ny,
            h,
            x0,
            y0,
            role,
            cell_active,
            cx,
            cy,
            mass,
        })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    pub fn point(&self, k: usize) -> Point {
        let (i, j) = self.ij(k);
        Point::new(self.x0 + i as f64 * self.h, self.y0 + j as f64 * self.h)
    }

    pub fn is_active(&self, k: usize) -> bool {
        self.role[k] != NodeRole::Outside
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.role[k] == NodeRole::Interior).collect()
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.role[k] == NodeRole::Boundary).collect()
    }

    pub fn cell_is_active(&self, i: usize, j: usize) -> bool {
        i + 1 < self.nx && j + 1 < self.ny && self.cell_active[j * (self.nx - 1) + i]
    }

    /// Active cell containing `p` and the local coordinates in [0, 1]^2.
    pub fn locate(&self, p: Point) -> Option<(usize, usize, f64, f64)> {
        let fx = (p.x - self.x0) / self.h;
        let fy = (p.y - self.y0) / self.h;
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let i = (fx.floor() as usize).min(self.nx.saturating_sub(2));
        let j = (fy.floor() as usize).min(self.ny.saturating_sub(2));
        let (s, t) = (fx - i as f64, fy - j as f64);
        if s > 1.0 + 1e-9 || t > 1.0 + 1e-9 || !self.cell_is_active(i, j) {
            return None;
        }
        Some((i, j, s.clamp(0.0, 1.0), t.clamp(0.0, 1.0)))
    }

    /// Number of interior nodes times h^2.
    pub fn discrete_area(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// The four neighbours of an interior node.
    pub fn neighbours(&self, k: usize) -> [usize; 4] {
        [k - 1, k + 1, k - self.nx, k + self.nx]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disc_grid_is_symmetric_and_covers_the_disc() {
        let g = Grid::new(DomainSpec::disc(1.0, 1.0 / 32.0)).unwrap();
        assert_eq!(g.nx, 65);
        let c = g.idx(32, 32);
        assert!(g.point(c).norm() < 1e-15);
        assert_eq!(g.role[c], NodeRole::Interior);
        for k in 0..g.len() {
            let (i, j) = g.ij(k);
            let mirror = g.idx(g.nx - 1 - i, j);
            assert_eq!(g.role[k], g.role[mirror]);
        }
        let area = g.discrete_area();
        assert!(area < std::f64::consts::PI && area > std::f64::consts::PI - 0.4);
    }

    #[test]
    fn edges_between_boundary_nodes_carry_no_weight() {
        let g = Grid::new(DomainSpec::rect(1.0, 1.0, 0.125)).unwrap();
        assert_eq!(g.nx, 9);
        assert_eq!(g.cx[g.idx(3, 0)], 0.0);
        assert_eq!(g.cy[g.idx(3, 0)], 1.0);
        assert_eq!(g.cx[g.idx(3, 3)], 1.0);
        assert!((g.discrete_area() - 49.0 / 64.0).abs() < 1e-12);
    }

    #[test]
    fn rect_projection() {
        let d = DomainSpec::rect(2.0, 1.0, 0.1);
        let p = d.project_to_boundary(Point::new(0.9, 0.1));
        assert_eq!(p, Point::new(1.0, 0.1));
        assert!((d.distance_to_boundary(Point::new(0.2, 0.3)) - 0.2).abs() < 1e-15);
    }
}
