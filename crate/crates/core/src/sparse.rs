//! Minimal sparse kernels for the assembled systems: CSR storage, a
//! Jacobi-preconditioned conjugate gradient, a damped Richardson fallback,
//! and the Thomas algorithm for the tridiagonal one-dimensional case.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl Csr {
    /// Build from unsorted triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &mut Vec<(usize, usize, f64)>) -> Csr {
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col = Vec::with_capacity(triplets.len());
        let mut val = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in triplets.iter() {
            if last == Some((r, c)) {
                *val.last_mut().unwrap() += v;
            } else {
                col.push(c);
                val.push(v);
                last = Some((r, c));
            }
            row_ptr[r + 1] = col.len();
        }
        // forward-fill rows without entries
        for i in 1..=n {
            if row_ptr[i] < row_ptr[i - 1] {
                row_ptr[i] = row_ptr[i - 1];
            }
        }
        Csr { n, row_ptr, col, val }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.val[k] * x[self.col[k]];
            }
            y[r] = s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.col[k] == r {
                    d[r] = self.val[k];
                }
            }
        }
        d
    }

    /// Symmetrize in place as (A + A^T)/2; returns the largest asymmetry
    /// found relative to the largest entry.
    pub fn symmetrize(&mut self) -> f64 {
        let mut max_entry = 0.0f64;
        let mut max_gap = 0.0f64;
        let at = |m: &Csr, r: usize, c: usize| -> f64 {
            for k in m.row_ptr[r]..m.row_ptr[r + 1] {
                if m.col[k] == c {
                    return m.val[k];
                }
            }
            0.0
        };
        let snapshot = self.clone();
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col[k];
                let vt = at(&snapshot, c, r);
                max_entry = max_entry.max(self.val[k].abs());
                max_gap = max_gap.max((self.val[k] - vt).abs());
                self.val[k] = 0.5 * (self.val[k] + vt);
            }
        }
        if max_entry > 0.0 {
            max_gap / max_entry
        } else {
            0.0
        }
    }
}

/// Jacobi-preconditioned conjugate gradient; returns the iterate and the
/// final relative residual.
pub fn cg(a: &Csr, b: &[f64], x0: Option<&[f64]>, tol: f64, max_iter: usize) -> (Vec<f64>, f64) {
    let n = a.n;
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let mut r = vec![0.0; n];
    a.matvec(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let d = a.diagonal();
    let inv_d: Vec<f64> = d.iter().map(|&v| if v.abs() > 1e-300 { 1.0 / v } else { 1.0 }).collect();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let mut z: Vec<f64> = r.iter().zip(&inv_d).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    let mut rel = (r.iter().map(|v| v * v).sum::<f64>()).sqrt() / bnorm;
    for _ in 0..max_iter {
        if rel <= tol {
            break;
        }
        a.matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_d[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rel = (r.iter().map(|v| v * v).sum::<f64>()).sqrt() / bnorm;
    }
    (x, rel)
}

/// Damped Jacobi sweeps; the stationary fallback for matrices that fail the
/// symmetry tolerance.
pub fn damped_jacobi(a: &Csr, b: &[f64], x0: Option<&[f64]>, omega: f64, sweeps: usize) -> Vec<f64> {
    let n = a.n;
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let d = a.diagonal();
    let mut ax = vec![0.0; n];
    for _ in 0..sweeps {
        a.matvec(&x, &mut ax);
        for i in 0..n {
            if d[i].abs() > 1e-300 {
                x[i] += omega * (b[i] - ax[i]) / d[i];
            }
        }
    }
    x
}

/// Thomas algorithm for a tridiagonal CSR system.
pub fn solve_tridiagonal(a: &Csr, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.n;
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    for r in 0..n {
        for k in a.row_ptr[r]..a.row_ptr[r + 1] {
            let c = a.col[k];
            if c + 1 == r {
                sub[r] = a.val[k];
            } else if c == r {
                diag[r] = a.val[k];
            } else if c == r + 1 {
                sup[r] = a.val[k];
            } else if a.val[k] != 0.0 {
                return Err(Error::invalid("matrix is not tridiagonal"));
            }
        }
    }
    let mut x = b.to_vec();
    for r in 1..n {
        if diag[r - 1].abs() < 1e-300 {
            return Err(Error::invalid("zero pivot in tridiagonal solve"));
        }
        let f = sub[r] / diag[r - 1];
        diag[r] -= f * sup[r - 1];
        x[r] -= f * x[r - 1];
    }
    if diag[n - 1].abs() < 1e-300 {
        return Err(Error::invalid("zero pivot in tridiagonal solve"));
    }
    x[n - 1] /= diag[n - 1];
    for r in (0..n - 1).rev() {
        x[r] = (x[r] - sup[r] * x[r + 1]) / diag[r];
    }
    Ok(x)
}
