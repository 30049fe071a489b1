//! Minimal dense complex linear algebra: LU with partial pivoting exposing the
//! log-determinant as a sum of principal-branch pivot logarithms, plus
//! forward substitution with unit lower-triangular matrices. Matrices are
//! row-major `Vec<Complex64>`.

use crate::error::{Error, Result};
use num_complex::Complex64;

pub const PIVOT_TOL: f64 = 1e-14;

/// LU factorization with partial pivoting of an n×n complex matrix (in place).
/// Returns the pivot row order and the number of row swaps.
pub struct Lu {
    pub n: usize,
    pub data: Vec<Complex64>,
    pub piv: Vec<usize>,
    pub swaps: usize,
}

pub fn lu_factor(mut a: Vec<Complex64>, n: usize) -> Result<Lu> {
    assert_eq!(a.len(), n * n);
    let mut piv: Vec<usize> = (0..n).collect();
    let mut swaps = 0usize;
    for k in 0..n {
        // Pivot search on column k.
        let mut p = k;
        let mut best = a[k * n + k].norm();
        for r in k + 1..n {
            let m = a[r * n + k].norm();
            if m > best {
                best = m;
                p = r;
            }
        }
        if best < PIVOT_TOL {
            return Err(Error::Singular(format!(
                "LU pivot magnitude {best:.3e} below tolerance at step {k}"
            )));
        }
        if p != k {
            for c in 0..n {
                a.swap(k * n + c, p * n + c);
            }
            piv.swap(k, p);
            swaps += 1;
        }
        let pivot = a[k * n + k];
        for r in k + 1..n {
            let factor = a[r * n + k] / pivot;
            a[r * n + k] = factor;
            for c in k + 1..n {
                let akc = a[k * n + c];
                a[r * n + c] -= factor * akc;
            }
        }
    }
    Ok(Lu {
        n,
        data: a,
        piv,
        swaps,
    })
}

impl Lu {
    /// log det = Σ Log(u_kk) + swaps·iπ, each log on the principal branch.
    /// Summing pivot-wise (rather than taking log of the product) keeps the
    /// value continuous in the matrix entries at moderate dimensions.
    pub fn log_det(&self) -> Complex64 {
        let n = self.n;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..n {
            acc += self.data[k * n + k].ln();
        }
        if self.swaps % 2 == 1 {
            acc += Complex64::new(0.0, std::f64::consts::PI);
        }
        acc
    }

    /// Solve A x = b using the stored factorization.
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<Complex64> = self.piv.iter().map(|&p| b[p]).collect();
        for k in 0..n {
            for r in k + 1..n {
                let factor = self.data[r * n + k];
                let xk = x[k];
                x[r] -= factor * xk;
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for c in k + 1..n {
                s -= self.data[k * n + c] * x[c];
            }
            x[k] = s / self.data[k * n + k];
        }
        x
    }
}

/// Solve (I − b·G) x = rhs where G is lower triangular (real, row-major;
/// diagonal entries allowed) and b complex, by forward substitution.
/// Overwrites `rhs`.
pub fn solve_unit_lower(g: &[f64], n: usize, b: Complex64, rhs: &mut [Complex64]) {
    debug_assert_eq!(g.len(), n * n);
    debug_assert_eq!(rhs.len(), n);
    for i in 0..n {
        let mut s = rhs[i];
        for j in 0..i {
            // (I − bG)_{ij} = −b g_{ij} for j < i.
            s += b * g[i * n + j] * rhs[j];
        }
        let d = g[i * n + i];
        rhs[i] = if d == 0.0 {
            s
        } else {
            s / (1.0 - b * d)
        };
    }
}
