//! Compressed sparse rows and Jacobi-preconditioned conjugate gradients.

use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {:.3e})", .residual_history.last().copied().unwrap_or(f64::NAN))]
    NotConverged {
        iterations: usize,
        residual_history: Vec<f64>,
    },
    #[error("conjugate gradient broke down at iteration {iteration}: p^T A p = {curvature:e}")]
    Breakdown { iteration: usize, curvature: f64 },
    #[error("non-positive diagonal entry {value:e} in row {row}")]
    BadDiagonal { row: usize, value: f64 },
    #[error("dimension mismatch: matrix has {rows} rows, vector has {len}")]
    Dimension { rows: usize, len: usize },
}

// rows above this use the thread pool for products
const PAR_ROWS: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Square matrix from per-row `(col, value)` lists; duplicates are summed
    /// and columns sorted.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        Self::from_rows_rect(rows, n)
    }

    /// Matrix with `ncols` columns from per-row `(col, value)` lists.
    pub fn from_rows_rect(rows: Vec<Vec<(usize, f64)>>, ncols: usize) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            let start = cols.len();
            for (c, v) in r {
                debug_assert!(c < ncols);
                if cols.len() > start && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix {
            n,
            ncols,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_rows((0..n).map(|i| vec![(i, 1.0)]).collect())
    }

    pub fn from_dense(a: &[Vec<f64>]) -> Self {
        Self::from_rows(
            a.iter()
                .map(|r| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(c, &v)| (c, v)).collect())
                .collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(p) => self.vals[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }

    pub fn is_symmetric(&self) -> bool {
        self.n == self.ncols
            && (0..self.n).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }

    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for p in self.row_ptr[i]..self.row_ptr[i + 1] {
            s += self.vals[p] * x[self.cols[p]];
        }
        s
    }

    /// `y = A x`. Each row is summed in the same order regardless of
    /// threading, so results are bit-identical.
    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        if self.n >= PAR_ROWS {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = self.row_dot(i, x));
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = self.row_dot(i, x);
            }
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_into(x, &mut y);
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solve `A x = b` for SPD `A`, starting from the contents of `x`.
///
/// Stops when `||b - A x|| <= tol * ||b||`; a zero right-hand side yields
/// `x = 0`.
pub fn pcg(a: &CsrMatrix, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<SolveStats, SolverError> {
    let n = a.n();
    assert_eq!(n, a.ncols(), "conjugate gradient needs a square matrix");
    for len in [b.len(), x.len()] {
        if len != n {
            return Err(SolverError::Dimension { rows: n, len });
        }
    }
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.fill(0.0);
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut inv_diag = Vec::with_capacity(n);
    for (row, d) in a.diagonal().into_iter().enumerate() {
        if !(d > 0.0) {
            return Err(SolverError::BadDiagonal { row, value: d });
        }
        inv_diag.push(1.0 / d);
    }

    let mut r = a.mul(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut rel = norm(&r) / bnorm;
    let mut history = vec![rel];
    if rel <= tol {
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: rel,
        });
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        a.mul_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(SolverError::Breakdown {
                iteration: it,
                curvature: pap,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = norm(&r) / bnorm;
        history.push(rel);
        if rel <= tol {
            return Ok(SolveStats {
                iterations: it,
                relative_residual: rel,
            });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(SolverError::NotConverged {
        iterations: max_iter,
        residual_history: history,
    })
}

/// Gaussian elimination with partial pivoting. Reference solver for tests.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .expect("non-empty");
        m.swap(col, piv);
        x.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f != 0.0 {
                for c in col..n {
                    m[row][c] -= f * m[col][c];
                }
                x[row] -= f * x[col];
            }
        }
    }
    for col in (0..n).rev() {
        let mut s = x[col];
        for c in col + 1..n {
            s -= m[col][c] * x[c];
        }
        x[col] = s / m[col][col];
    }
    x
}
