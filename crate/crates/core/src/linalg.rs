//! Small linear-algebra kernels: preconditioned conjugate gradients, sparse
//! symmetric matrices with an incomplete Cholesky factor, tridiagonal solves.

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iter: usize,
    /// Project iterates onto mean-zero vectors (singular periodic problems).
    pub mean_zero: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-300,
            max_iter: 20_000,
            mean_zero: false,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CgStats {
    pub iterations: usize,
    pub residual: f64,
}

fn project_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Preconditioned CG for a symmetric positive (semi-)definite operator.
pub fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    precond: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    opts: CgOptions,
) -> Result<CgStats> {
    let n = b.len();
    let mut r = vec![0.0; n];
    let mut rhs = b.to_vec();
    if opts.mean_zero {
        project_mean(&mut rhs);
        project_mean(x);
    }
    apply(x, &mut r);
    for i in 0..n {
        r[i] = rhs[i] - r[i];
    }
    let bnorm = norm(&rhs);
    let target = (opts.rel_tol * bnorm).max(opts.abs_tol);
    let mut rn = norm(&r);
    if rn <= target || bnorm == 0.0 && rn == 0.0 {
        return Ok(CgStats { iterations: 0, residual: rn });
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    if opts.mean_zero {
        project_mean(&mut z);
    }
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    for it in 1..=opts.max_iter {
        apply(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            return Err(Error::NonConvergence {
                stage: "conjugate gradients (operator not positive)".into(),
                iterations: it,
                residual: rn,
                energy: f64::NAN,
            });
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        rn = norm(&r);
        if rn <= target {
            if opts.mean_zero {
                project_mean(x);
            }
            return Ok(CgStats { iterations: it, residual: rn });
        }
        precond(&r, &mut z);
        if opts.mean_zero {
            project_mean(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NonConvergence {
        stage: "conjugate gradients".into(),
        iterations: opts.max_iter,
        residual: rn / bnorm.max(f64::MIN_POSITIVE),
        energy: f64::NAN,
    })
}

/// Jacobi preconditioner from a diagonal.
pub fn jacobi(diag: &[f64]) -> impl Fn(&[f64], &mut [f64]) + '_ {
    move |r, z| {
        for i in 0..r.len() {
            z[i] = if diag[i] > 0.0 { r[i] / diag[i] } else { r[i] };
        }
    }
}

/// Symmetric sparse matrix in compressed-row form (full pattern stored).
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl Csr {
    /// Builds from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> Csr {
        t.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col = Vec::with_capacity(t.len());
        let mut val: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *val.last_mut().unwrap() += v;
            } else {
                col.push(c);
                val.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Csr { n, row_ptr, col, val }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.val[k] * x[self.col[k]];
            }
            y[i] = s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .find(|&k| self.col[k] == i)
                    .map_or(0.0, |k| self.val[k])
            })
            .collect()
    }
}

/// Zero fill-in incomplete Cholesky factor L (lower, row-wise) with
/// A ~ L L^T. Falls back to a diagonal shift when a pivot breaks down.
#[derive(Debug, Clone)]
pub struct Ic0 {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl Ic0 {
    pub fn new(a: &Csr) -> Ic0 {
        let mut shift = 0.0;
        loop {
            if let Some(f) = Ic0::try_factor(a, shift) {
                return f;
            }
            shift = if shift == 0.0 { 1e-3 } else { shift * 4.0 };
        }
    }

    fn try_factor(a: &Csr, shift: f64) -> Option<Ic0> {
        let n = a.n;
        let mut row_ptr = vec![0usize; n + 1];
        let mut col = Vec::new();
        let mut val = Vec::new();
        for i in 0..n {
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                if a.col[k] <= i {
                    col.push(a.col[k]);
                    val.push(if a.col[k] == i { a.val[k] * (1.0 + shift) } else { a.val[k] });
                }
            }
            row_ptr[i + 1] = col.len();
        }
        // Position of the diagonal in each row (last entry, columns sorted).
        let mut marker = vec![usize::MAX; n];
        for i in 0..n {
            let (s, e) = (row_ptr[i], row_ptr[i + 1]);
            for k in s..e {
                marker[col[k]] = k;
            }
            for k in s..e - 1 {
                let j = col[k];
                // L_ij = (A_ij - sum_{m<j} L_im L_jm) / L_jj
                let mut sum = val[k];
                for kk in row_ptr[j]..row_ptr[j + 1] - 1 {
                    let m = col[kk];
                    let pos = marker[m];
                    if pos != usize::MAX && pos >= s && pos < k {
                        sum -= val[pos] * val[kk];
                    }
                }
                val[k] = sum / val[row_ptr[j + 1] - 1];
            }
            let mut d = val[e - 1];
            for k in s..e - 1 {
                d -= val[k] * val[k];
            }
            if !(d > 0.0) || col[e - 1] != i {
                return None;
            }
            val[e - 1] = d.sqrt();
            for k in s..e {
                marker[col[k]] = usize::MAX;
            }
        }
        Some(Ic0 { n, row_ptr, col, val })
    }

    pub fn solve(&self, r: &[f64], z: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut v = r[i];
            for k in s..e - 1 {
                v -= self.val[k] * z[self.col[k]];
            }
            z[i] = v / self.val[e - 1];
        }
        for i in (0..n).rev() {
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
            z[i] /= self.val[e - 1];
            let zi = z[i];
            for k in s..e - 1 {
                z[self.col[k]] -= self.val[k] * zi;
            }
        }
    }
}

/// Solves a tridiagonal system; `lower[0]` and `upper[n-1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut den = diag[0];
    if den == 0.0 {
        return Err(Error::validation("singular tridiagonal system"));
    }
    c[0] = upper[0] / den;
    d[0] = rhs[0] / den;
    for i in 1..n {
        den = diag[i] - lower[i] * c[i - 1];
        if den == 0.0 {
            return Err(Error::validation("singular tridiagonal system"));
        }
        c[i] = if i + 1 < n { upper[i] / den } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / den;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> Csr {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        Csr::from_triplets(n, t)
    }

    #[test]
    fn ic0_is_exact_for_tridiagonal() {
        let a = laplace_1d(50);
        let ic = Ic0::new(&a);
        let b: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut x = vec![0.0; 50];
        ic.solve(&b, &mut x);
        let mut ax = vec![0.0; 50];
        a.matvec(&x, &mut ax);
        for i in 0..50 {
            assert!((ax[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn pcg_matches_thomas() {
        let n = 200;
        let a = laplace_1d(n);
        let b: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64).collect();
        let mut x = vec![0.0; n];
        let d = a.diagonal();
        pcg(|v, y| a.matvec(v, y), jacobi(&d), &b, &mut x, CgOptions { rel_tol: 1e-13, ..Default::default() }).unwrap();
        let t = solve_tridiagonal(&vec![-1.0; n], &vec![2.0; n], &vec![-1.0; n], &b).unwrap();
        for i in 0..n {
            assert!((x[i] - t[i]).abs() < 1e-8 * t[i].abs().max(1.0));
        }
    }
}
