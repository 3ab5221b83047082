//! Periodic cell problems, the homogenized matrix, the unfolding operator and
//! the phase equation with constant anisotropic coefficients.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::DomainSpec;
use crate::linalg::{pcg, CgOptions, Csr, Ic0};
use crate::mesh::perforated_mesh;
use crate::pinning::UnitInclusion;
use crate::s1::{solve_phase_on_mesh, to_solution, BoundaryPhase, PhaseSolution, RimCondition, SingularPart, SingularPoint, Weight};
use crate::Point;

/// Pixel values of a coefficient on the unit cell `(0,1)^2`, periodic;
/// pixel `(i, j)` covers `[i/n, (i+1)/n] x [j/n, (j+1)/n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellField {
    pub n: usize,
    pub values: Vec<f64>,
}

impl CellField {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 || values.len() != n * n {
            return Err(Error::validation(format!("cell field needs n >= 2 and n^2 values, got n={n}, {} values", values.len())));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0 && *v <= 1.0)) {
            return Err(Error::validation("cell field values must lie in (0, 1]"));
        }
        Ok(CellField { n, values })
    }

    pub fn constant(n: usize, c: f64) -> Result<Self> {
        Self::new(n, vec![c; n * n])
    }

    /// `h1` for `y1 < 1/2`, `h2` otherwise.
    pub fn laminate(n: usize, h1: f64, h2: f64) -> Result<Self> {
        Self::from_fn(n, 1, |y| if y.x < 0.5 { h1 } else { h2 })
    }

    /// Pixel means of `f` over `s x s` sub-samples.
    pub fn from_fn(n: usize, s: usize, f: impl Fn(Point) -> f64 + Sync) -> Result<Self> {
        let s = s.max(1);
        let values = (0..n * n)
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k % n, k / n);
                let mut acc = 0.0;
                for a in 0..s {
                    for b in 0..s {
                        let y = Point::new(
                            (i as f64 + (a as f64 + 0.5) / s as f64) / n as f64,
                            (j as f64 + (b as f64 + 0.5) / s as f64) / n as f64,
                        );
                        acc += f(y);
                    }
                }
                acc / (s * s) as f64
            })
            .collect();
        Self::new(n, values)
    }

    /// `(a^lambda)^2` on the unit cell: `b^2` inside the inclusion `lambda omega`
    /// centred at the cell corners (a quarter at each corner), 1 elsewhere.
    pub fn inclusion(n: usize, b: f64, lambda: f64, omega: &UnitInclusion) -> Result<Self> {
        omega.validate()?;
        if !(lambda > 0.0 && lambda <= 1.0) || !(b > 0.0 && b <= 1.0) {
            return Err(Error::validation("inclusion cell needs 0 < lambda <= 1 and 0 < b <= 1"));
        }
        Self::from_fn(n, 4, |y| {
            let q = Point::new(y.x - y.x.round(), y.y - y.y.round()) * (1.0 / lambda);
            if omega.contains(q) {
                b * b
            } else {
                1.0
            }
        })
    }

    /// Exchange of `y1` and `y2`.
    pub fn transposed(&self) -> Self {
        let n = self.n;
        CellField { n, values: (0..n * n).map(|k| self.values[(k % n) * n + k / n]).collect() }
    }

    pub fn arithmetic_mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn harmonic_mean(&self) -> f64 {
        self.values.len() as f64 / self.values.iter().map(|v| 1.0 / v).sum::<f64>()
    }
}

/// Edge between pixel `a` and its neighbour `b` in direction `dir`, with
/// harmonic-mean conductance.
fn edges(h: &CellField) -> Vec<(usize, usize, usize, f64)> {
    let n = h.n;
    let mut e = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let a = j * n + i;
            for (dir, b) in [(0, j * n + (i + 1) % n), (1, ((j + 1) % n) * n + i)] {
                let (ha, hb) = (h.values[a], h.values[b]);
                e.push((dir, a, b, 2.0 * ha * hb / (ha + hb)));
            }
        }
    }
    e
}

/// Corrector `chi_j`: zero-mean periodic solution of
/// `div(H grad chi_j) = d_j H`, i.e. the minimiser of `int H |e_j - grad chi|^2`.
pub fn solve_cell(h: &CellField, j: usize) -> Result<CellField> {
    let chi = solve_cell_raw(h, j)?;
    Ok(CellField { n: h.n, values: chi })
}

fn solve_cell_raw(h: &CellField, j: usize) -> Result<Vec<f64>> {
    if j > 1 {
        return Err(Error::validation("corrector index must be 0 or 1"));
    }
    let n = h.n;
    let dy = 1.0 / n as f64;
    let mut trip = Vec::with_capacity(8 * n * n);
    let mut rhs = vec![0.0; n * n];
    for (dir, a, b, w) in edges(h) {
        trip.extend([(a, a, w), (b, b, w), (a, b, -w), (b, a, -w)]);
        if dir == j {
            // d/d chi of 1/2 w (chi_b - chi_a - dy)^2 at chi = 0.
            rhs[b] += w * dy;
            rhs[a] -= w * dy;
        }
    }
    let a = Csr::from_triplets(n * n, trip);
    let pre = Ic0::new(&a);
    let mut x = vec![0.0; n * n];
    let stats = pcg(
        |u, v| a.matvec(u, v),
        |r, z| pre.solve(r, z),
        &rhs,
        &mut x,
        CgOptions { rel_tol: 1e-12, mean_zero: true, ..Default::default() },
    )?;
    log::debug!("cell problem {j}: {} iterations, residual {:e}", stats.iterations, stats.residual);
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogenizedMatrix {
    pub entries: [[f64; 2]; 2],
    /// `|A_12 - A_21|` before symmetrisation.
    pub asymmetry: f64,
}

impl HomogenizedMatrix {
    pub fn eigenvalues(&self) -> [f64; 2] {
        sym_eigen(self.entries).0
    }

    /// Entrywise max distance to the identity.
    pub fn distance_to_identity(&self) -> f64 {
        let e = self.entries;
        (e[0][0] - 1.0).abs().max((e[1][1] - 1.0).abs()).max(e[0][1].abs()).max(e[1][0].abs())
    }
}

/// `A_ij = int H (delta_ij - d_i chi_j)`, evaluated on the edges of direction
/// `i`, symmetrised.
pub fn homogenized_matrix(h: &CellField) -> Result<HomogenizedMatrix> {
    let chi: Vec<Vec<f64>> = [0usize, 1].par_iter().map(|&j| solve_cell_raw(h, j)).collect::<Result<_>>()?;
    let n = h.n;
    let dy = 1.0 / n as f64;
    let area = dy * dy;
    let mut a = [[0.0; 2]; 2];
    for (dir, p, q, w) in edges(h) {
        for (jj, c) in chi.iter().enumerate() {
            let delta = if dir == jj { 1.0 } else { 0.0 };
            a[dir][jj] += w * area * (delta - (c[q] - c[p]) / dy);
        }
    }
    let asym = (a[0][1] - a[1][0]).abs();
    if asym > 1e-10 {
        log::warn!("homogenized matrix asymmetry {asym:e}");
    }
    let off = 0.5 * (a[0][1] + a[1][0]);
    a[0][1] = off;
    a[1][0] = off;
    Ok(HomogenizedMatrix { entries: a, asymmetry: asym })
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a symmetric 2x2 matrix.
fn sym_eigen(m: [[f64; 2]; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
    let (a, b, d) = (m[0][0], 0.5 * (m[0][1] + m[1][0]), m[1][1]);
    let tr = 0.5 * (a + d);
    let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let (l1, l2) = (tr - r, tr + r);
    let theta = 0.5 * (2.0 * b).atan2(a - d);
    let (c, s) = (theta.cos(), theta.sin());
    // Column for l2 is (c, s), for l1 is (-s, c).
    ([l1, l2], [[-s, c], [c, s]])
}

/// `M^{-1/2}` for a symmetric positive definite `M`.
pub fn inverse_sqrt(m: [[f64; 2]; 2]) -> Result<[[f64; 2]; 2]> {
    let ([l1, l2], v) = sym_eigen(m);
    if !(l1 > 0.0) {
        return Err(Error::validation("coefficient matrix must be positive definite"));
    }
    let (f1, f2) = (l1.powf(-0.5), l2.powf(-0.5));
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = f1 * v[i][0] * v[j][0] + f2 * v[i][1] * v[j][1];
        }
    }
    Ok(out)
}

/// `T_delta(phi)(x, y) = phi(delta [x/delta] + delta y)` sampled on the
/// `m x m` lattice of the unit cell, for the delta-cells inside the discrete
/// domain; zero on the remaining boundary layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnfoldedField {
    pub delta: f64,
    /// Grid steps per delta-cell.
    pub m: usize,
    /// Integer delta-cell coordinates `[x/delta]`.
    pub cells: Vec<(i64, i64)>,
    /// `m^2` samples per cell, `y = (p/m, q/m)` at index `q m + p`.
    pub values: Vec<Vec<f64>>,
}

impl UnfoldedField {
    pub fn eval(&self, x: Point, p: usize, q: usize) -> f64 {
        let key = ((x.x / self.delta).floor() as i64, (x.y / self.delta).floor() as i64);
        self.cells.iter().position(|&c| c == key).map_or(0.0, |k| self.values[k][q * self.m + p])
    }

    /// `int_{Omega_0 x Y} T_delta phi` (each sample carries `delta^2 / m^2`).
    pub fn integral(&self) -> f64 {
        let w = self.delta * self.delta / (self.m * self.m) as f64;
        let mut acc = 0.0;
        for cell in &self.values {
            for v in cell {
                acc += v * w;
            }
        }
        acc
    }
}

fn unfold_layout(field: &ScalarField, delta: f64) -> Result<(usize, Vec<(i64, i64, usize, usize)>)> {
    let g = &field.grid;
    let ratio = delta / g.h;
    if !(delta > 0.0) || (ratio - ratio.round()).abs() > 1e-9 * ratio || ratio.round() < 1.0 {
        return Err(Error::validation(format!("delta = {delta} is not a positive multiple of h = {}", g.h)));
    }
    let m = ratio.round() as usize;
    let (ox, oy) = (g.x0 / g.h, g.y0 / g.h);
    if (ox - ox.round()).abs() > 1e-9 || (oy - oy.round()).abs() > 1e-9 {
        return Err(Error::validation("grid nodes are not aligned with the delta lattice"));
    }
    let (ox, oy) = (ox.round() as i64, oy.round() as i64);
    let mi = m as i64;
    let lo_x = (ox).div_euclid(mi);
    let lo_y = (oy).div_euclid(mi);
    let hi_x = (ox + g.nx as i64).div_euclid(mi);
    let hi_y = (oy + g.ny as i64).div_euclid(mi);
    let mut cells = vec![];
    for cy in lo_y..=hi_y {
        for cx in lo_x..=hi_x {
            // Local grid index of the cell's lower-left node.
            let (i0, j0) = (cx * mi - ox, cy * mi - oy);
            if i0 < 0 || j0 < 0 || i0 + mi >= g.nx as i64 || j0 + mi >= g.ny as i64 {
                continue;
            }
            let (i0, j0) = (i0 as usize, j0 as usize);
            let full = (0..m).all(|q| (0..m).all(|p| g.cell_is_active(i0 + p, j0 + q)));
            if full {
                cells.push((cx, cy, i0, j0));
            }
        }
    }
    Ok((m, cells))
}

/// Unfolding of a grid field; requires `delta / h` and the grid origin to be
/// aligned with the delta lattice.
pub fn unfold(field: &ScalarField, delta: f64) -> Result<UnfoldedField> {
    let (m, cells) = unfold_layout(field, delta)?;
    let g = &field.grid;
    let values = cells
        .iter()
        .map(|&(_, _, i0, j0)| {
            let mut v = Vec::with_capacity(m * m);
            for q in 0..m {
                for p in 0..m {
                    v.push(field.values[g.idx(i0 + p, j0 + q)]);
                }
            }
            v
        })
        .collect();
    Ok(UnfoldedField { delta, m, cells: cells.iter().map(|c| (c.0, c.1)).collect(), values })
}

/// `int_{Omega~} phi` with the same sample set and summation order as
/// [`UnfoldedField::integral`].
pub fn integral_over_cells(field: &ScalarField, delta: f64) -> Result<f64> {
    let (m, cells) = unfold_layout(field, delta)?;
    let g = &field.grid;
    let w = g.h * g.h;
    let mut acc = 0.0;
    for &(_, _, i0, j0) in &cells {
        for q in 0..m {
            for p in 0..m {
                acc += field.values[g.idx(i0 + p, j0 + q)] * w;
            }
        }
    }
    Ok(acc)
}

/// Phase solution of `-div(A grad(theta_0 + phi)) = 0` with the adapted
/// singular part `theta_0 = sum arg(A^{-1/2}(x - a_i))`, which is itself
/// A-harmonic. Points are excised by holes of radius `core` with the natural
/// condition; with `A = Id` this is exactly the degree problem.
pub fn homogenized_phase(a: [[f64; 2]; 2], dom: &DomainSpec, points: &[Point], g: &BoundaryPhase, core: f64) -> Result<PhaseSolution> {
    let t = inverse_sqrt(a)?;
    for (i, p) in points.iter().enumerate() {
        if points[i + 1..].iter().any(|q| q == p) {
            return Err(Error::validation("points must be distinct"));
        }
    }
    let singular = SingularPart {
        points: points.iter().map(|&center| SingularPoint { center, degree: 1 }).collect(),
        transform: t,
    };
    let mesh = perforated_mesh(dom, points, core)?;
    let fe = solve_phase_on_mesh(mesh, &singular, a, &Weight::Uniform(1.0), g, RimCondition::Natural)?;
    Ok(to_solution(fe, singular, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_sqrt_of_diagonal_and_rotated() {
        let t = inverse_sqrt([[4.0, 0.0], [0.0, 9.0]]).unwrap();
        assert!((t[0][0] - 0.5).abs() < 1e-15 && (t[1][1] - 1.0 / 3.0).abs() < 1e-15 && t[0][1].abs() < 1e-15);
        let m = [[2.0, 0.7], [0.7, 1.3]];
        let t = inverse_sqrt(m).unwrap();
        // t m t = Id.
        let mul = |a: [[f64; 2]; 2], b: [[f64; 2]; 2]| {
            let mut c = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
                }
            }
            c
        };
        let id = mul(mul(t, m), t);
        assert!((id[0][0] - 1.0).abs() < 1e-14 && (id[1][1] - 1.0).abs() < 1e-14 && id[0][1].abs() < 1e-14);
    }

    #[test]
    fn constant_cell_has_zero_corrector() {
        let h = CellField::constant(16, 0.3).unwrap();
        let chi = solve_cell(&h, 0).unwrap();
        assert!(chi.values.iter().all(|v| v.abs() < 1e-14));
    }
}
