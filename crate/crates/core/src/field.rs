use std::sync::Arc;

use num_complex::Complex64;

use crate::geom::Point;
use crate::grid::Grid;

/// Real values at the nodes of a grid. Values at outside nodes are kept but
/// carry no meaning.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ComplexField {
    pub grid: Arc<Grid>,
    pub values: Vec<Complex64>,
}

fn bilinear<T>(grid: &Grid, values: &[T], p: Point) -> Option<T>
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    let (i, j, s, t) = grid.locate(p)?;
    let k = grid.idx(i, j);
    let nx = grid.nx;
    Some(
        values[k] * ((1.0 - s) * (1.0 - t))
            + values[k + 1] * (s * (1.0 - t))
            + values[k + nx] * ((1.0 - s) * t)
            + values[k + nx + 1] * (s * t),
    )
}

impl ScalarField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        assert_eq!(grid.len(), values.len());
        ScalarField { grid, values }
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let n = grid.len();
        ScalarField { grid, values: vec![c; n] }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(Point) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| f(grid.point(k))).collect();
        ScalarField { grid, values }
    }

    /// Bilinear interpolation inside the active cells.
    pub fn sample(&self, p: Point) -> Option<f64> {
        bilinear(&self.grid, &self.values, p)
    }

    /// Extremes over the discrete domain.
    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (k, &v) in self.values.iter().enumerate() {
            if self.grid.is_active(k) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .enumerate()
            .filter(|(k, _)| self.grid.is_active(*k))
            .map(|(_, (a, b))| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl ComplexField {
    pub fn new(grid: Arc<Grid>, values: Vec<Complex64>) -> Self {
        assert_eq!(grid.len(), values.len());
        ComplexField { grid, values }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(Point) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|k| f(grid.point(k))).collect();
        ComplexField { grid, values }
    }

    pub fn sample(&self, p: Point) -> Option<Complex64> {
        bilinear(&self.grid, &self.values, p)
    }

    pub fn modulus(&self) -> ScalarField {
        ScalarField::new(self.grid.clone(), self.values.iter().map(|z| z.norm()).collect())
    }

    pub fn re(&self) -> ScalarField {
        ScalarField::new(self.grid.clone(), self.values.iter().map(|z| z.re).collect())
    }

    pub fn im(&self) -> ScalarField {
        ScalarField::new(self.grid.clone(), self.values.iter().map(|z| z.im).collect())
    }

    /// Pointwise product with a real field on the same grid.
    pub fn scaled_by(&self, u: &ScalarField) -> ComplexField {
        let values = self.values.iter().zip(&u.values).map(|(z, &s)| z * s).collect();
        ComplexField::new(self.grid.clone(), values)
    }
}
