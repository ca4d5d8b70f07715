use std::sync::Arc;

use faer::linalg::solvers::Solve;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{dot, norm2, Matrix};
use crate::error::{Error, Result};

fn check_shape(first_col: &[f64], first_row: &[f64], len: usize) -> Result<()> {
    let n = first_col.len();
    if n == 0 || first_row.len() != n || len != n {
        return Err(Error::Contract(format!(
            "toeplitz shapes: column {n}, row {}, vector {len}",
            first_row.len()
        )));
    }
    if first_col[0] != first_row[0] {
        return Err(Error::Contract("first_col[0] must equal first_row[0]".into()));
    }
    Ok(())
}

fn dense_toeplitz(first_col: &[f64], first_row: &[f64]) -> Matrix {
    let n = first_col.len();
    Matrix::from_fn(n, n, |i, j| if i >= j { first_col[i - j] } else { first_row[j - i] })
}

/// Toeplitz matrix-vector product through a circulant embedding of size `2n`.
pub fn toeplitz_matvec(first_col: &[f64], first_row: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    check_shape(first_col, first_row, x.len())?;
    let n = x.len();
    let m = 2 * n;
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let mut col = vec![Complex64::new(0.0, 0.0); m];
    for i in 0..n {
        col[i].re = first_col[i];
    }
    for j in 1..n {
        col[m - j].re = first_row[j];
    }
    fwd.process(&mut col);
    let mut buf: Vec<Complex64> = (0..m)
        .map(|i| Complex64::new(if i < n { x[i] } else { 0.0 }, 0.0))
        .collect();
    fwd.process(&mut buf);
    for (b, c) in buf.iter_mut().zip(&col) {
        *b *= c;
    }
    inv.process(&mut buf);
    Ok(buf[..n].iter().map(|z| z.re / m as f64).collect())
}

fn relative_residual(first_col: &[f64], first_row: &[f64], x: &[f64], rhs: &[f64]) -> f64 {
    let t = dense_toeplitz(first_col, first_row);
    let r: Vec<f64> = t.matvec(x).iter().zip(rhs).map(|(a, b)| a - b).collect();
    norm2(&r) / norm2(rhs).max(f64::MIN_POSITIVE)
}

/// Solves a general Toeplitz system `T x = rhs`.
///
/// Levinson-Trench recursion in `O(n^2)`; falls back to a dense pivoted LU when a
/// leading principal minor is singular or the recursion loses accuracy.
pub fn toeplitz_solve(first_col: &[f64], first_row: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    check_shape(first_col, first_row, rhs.len())?;
    if rhs.iter().all(|v| *v == 0.0) {
        return Ok(vec![0.0; rhs.len()]);
    }
    if let Some(x) = levinson(first_col, first_row, rhs) {
        if x.iter().all(|v| v.is_finite()) && relative_residual(first_col, first_row, &x, rhs) <= 1e-10 {
            return Ok(x);
        }
    }
    let t = dense_toeplitz(first_col, first_row);
    let b = Matrix::from_fn(rhs.len(), 1, |i, _| rhs[i]);
    let x: Vec<f64> = t.view().partial_piv_lu().solve(b.view()).col(0).iter().copied().collect();
    let res = relative_residual(first_col, first_row, &x, rhs);
    if !res.is_finite() || res > 1e-8 {
        return Err(Error::SolverFailure(res));
    }
    Ok(x)
}

// Levinson-Trench recursion for a nonsymmetric Toeplitz matrix. Returns None on a
// vanishing leading minor.
fn levinson(first_col: &[f64], first_row: &[f64], y: &[f64]) -> Option<Vec<f64>> {
    let n = y.len();
    // r(n + i - j) = T[i][j] for 1-based i, j.
    let r = |k: isize| -> f64 {
        let d = k - n as isize;
        if d >= 0 {
            first_col[d as usize]
        } else {
            first_row[(-d) as usize]
        }
    };
    let ni = n as isize;
    let r0 = r(ni);
    if r0 == 0.0 {
        return None;
    }
    let mut x = vec![0.0; n + 1];
    let mut g = vec![0.0; n + 1];
    let mut h = vec![0.0; n + 1];
    x[1] = y[0] / r0;
    if n == 1 {
        return Some(vec![x[1]]);
    }
    g[1] = r(ni - 1) / r0;
    h[1] = r(ni + 1) / r0;
    for m in 1..=n {
        let m1 = m + 1;
        let mut sxn = -y[m1 - 1];
        let mut sd = -r0;
        for j in 1..=m {
            let rj = r(ni + m1 as isize - j as isize);
            sxn += rj * x[j];
            sd += rj * g[m - j + 1];
        }
        if sd == 0.0 {
            return None;
        }
        x[m1] = sxn / sd;
        for j in 1..=m {
            x[j] -= x[m1] * g[m - j + 1];
        }
        if m1 == n {
            return Some(x[1..].to_vec());
        }
        let mut sgn = -r(ni - m1 as isize);
        let mut shn = -r(ni + m1 as isize);
        let mut sgd = -r0;
        for j in 1..=m {
            sgn += r(ni + j as isize - m1 as isize) * g[j];
            shn += r(ni + m1 as isize - j as isize) * h[j];
            sgd += r(ni + j as isize - m1 as isize) * h[m - j + 1];
        }
        if sgd == 0.0 {
            return None;
        }
        g[m1] = sgn / sgd;
        h[m1] = shn / sd;
        let pp = g[m1];
        let qq = h[m1];
        let mut k = m;
        for j in 1..=m.div_ceil(2) {
            let (pt1, pt2, qt1, qt2) = (g[j], g[k], h[j], h[k]);
            g[j] = pt1 - pp * qt2;
            g[k] = pt2 - pp * qt1;
            h[j] = qt1 - qq * pt2;
            h[k] = qt2 - qq * pt1;
            k -= 1;
        }
    }
    None
}

/// Symmetric Toeplitz operator with FFT products and a circulant-preconditioned
/// conjugate-gradient solver.
#[derive(Clone)]
pub struct SymmetricToeplitz {
    first_col: Vec<f64>,
    embed: Vec<Complex64>,
    precond: Option<Vec<f64>>,
    fwd2: Arc<dyn Fft<f64>>,
    inv2: Arc<dyn Fft<f64>>,
    fwd1: Arc<dyn Fft<f64>>,
    inv1: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SymmetricToeplitz {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SymmetricToeplitz").field("n", &self.first_col.len()).finish()
    }
}

impl SymmetricToeplitz {
    pub fn new(first_col: &[f64]) -> Result<Self> {
        let n = first_col.len();
        if n == 0 || first_col.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("toeplitz column must be nonempty and finite".into()));
        }
        let mut planner = FftPlanner::new();
        let fwd2 = planner.plan_fft_forward(2 * n);
        let inv2 = planner.plan_fft_inverse(2 * n);
        let fwd1 = planner.plan_fft_forward(n);
        let inv1 = planner.plan_fft_inverse(n);
        let mut embed = vec![Complex64::new(0.0, 0.0); 2 * n];
        for i in 0..n {
            embed[i].re = first_col[i];
        }
        for j in 1..n {
            embed[2 * n - j].re = first_col[j];
        }
        fwd2.process(&mut embed);
        // T. Chan's optimal circulant approximation.
        let mut chan: Vec<Complex64> = (0..n)
            .map(|j| {
                let wrap = if j == 0 { 0.0 } else { first_col[n - j] };
                Complex64::new(((n - j) as f64 * first_col[j] + j as f64 * wrap) / n as f64, 0.0)
            })
            .collect();
        fwd1.process(&mut chan);
        let eigs: Vec<f64> = chan.iter().map(|z| z.re).collect();
        let top = eigs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let precond = if eigs.iter().all(|&e| e > 1e-12 * top) { Some(eigs) } else { None };
        Ok(Self { first_col: first_col.to_vec(), embed, precond, fwd2, inv2, fwd1, inv1 })
    }

    pub fn n(&self) -> usize {
        self.first_col.len()
    }

    pub fn first_col(&self) -> &[f64] {
        &self.first_col
    }

    pub fn to_dense(&self) -> Matrix {
        dense_toeplitz(&self.first_col, &self.first_col)
    }

    /// `T x` in `O(n log n)`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        assert_eq!(x.len(), n, "toeplitz apply shape mismatch");
        let mut buf: Vec<Complex64> = (0..2 * n)
            .map(|i| Complex64::new(if i < n { x[i] } else { 0.0 }, 0.0))
            .collect();
        self.fwd2.process(&mut buf);
        for (b, e) in buf.iter_mut().zip(&self.embed) {
            *b *= e;
        }
        self.inv2.process(&mut buf);
        let scale = 1.0 / (2 * n) as f64;
        buf[..n].iter().map(|z| z.re * scale).collect()
    }

    fn precondition(&self, r: &[f64]) -> Vec<f64> {
        let Some(eigs) = &self.precond else {
            return r.to_vec();
        };
        let n = self.n();
        let mut buf: Vec<Complex64> = r.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd1.process(&mut buf);
        for (b, e) in buf.iter_mut().zip(eigs) {
            *b /= e;
        }
        self.inv1.process(&mut buf);
        buf.iter().map(|z| z.re / n as f64).collect()
    }

    /// Preconditioned conjugate gradients for `T x = rhs`, assuming `T` positive definite.
    /// Returns the solution and the iteration count.
    pub fn solve(&self, rhs: &[f64], tol: f64) -> Result<(Vec<f64>, usize)> {
        let n = self.n();
        if rhs.len() != n {
            return Err(Error::Contract("toeplitz solve shape mismatch".into()));
        }
        let bnorm = norm2(rhs);
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return Ok((x, 0));
        }
        let mut r = rhs.to_vec();
        let mut z = self.precondition(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let max_iter = 2 * n + 100;
        for it in 1..=max_iter {
            let q = self.apply(&p);
            let pq = dot(&p, &q);
            if pq <= 0.0 || !pq.is_finite() {
                return Err(Error::SolverFailure(norm2(&r) / bnorm));
            }
            let alpha = rz / pq;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            let res = norm2(&r) / bnorm;
            if res <= tol {
                return Ok((x, it));
            }
            z = self.precondition(&r);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::SolverFailure(norm2(&r) / bnorm))
    }
}
