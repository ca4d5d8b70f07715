use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::Side;

use super::Matrix;
use crate::error::{Error, Result};

/// Eigenvalues in nondecreasing order with orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymmetricEigen {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// `Q f(Λ) Q^T`, symmetrized.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.values.len();
        let fv: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let scaled = Matrix::from_fn(n, n, |i, j| self.vectors[(i, j)] * fv[j]);
        let mut out = scaled.matmul_t(&self.vectors);
        out.symmetrize();
        out
    }
}

fn symmetry_tolerance(m: &Matrix) -> f64 {
    1e-10 * m.max_abs().max(1.0)
}

/// Eigendecomposition of a symmetric matrix (asymmetry up to 1e-10, relative to scale).
pub fn symmetric_eigen(m: &Matrix) -> Result<SymmetricEigen> {
    if !m.is_square() {
        return Err(Error::Contract(format!("eigen of non-square {}x{}", m.rows(), m.cols())));
    }
    let asym = m.asymmetry();
    if asym > symmetry_tolerance(m) {
        return Err(Error::Contract(format!("matrix is not symmetric (deviation {asym:e})")));
    }
    let evd = m
        .view()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Internal(format!("eigendecomposition failed: {e:?}")))?;
    let values: Vec<f64> = evd.S().column_vector().iter().copied().collect();
    let vectors = Matrix::from_faer(evd.U());
    Ok(SymmetricEigen { values, vectors })
}

/// Symmetric PSD square root. Eigenvalues in `[-tol, 0)` are clamped to zero.
pub fn psd_sqrt(m: &Matrix) -> Result<Matrix> {
    let eig = symmetric_eigen(m)?;
    let tol = 1e-10 * eig.max().abs().max(1.0);
    if eig.min() < -tol {
        return Err(Error::NotPsd(eig.min()));
    }
    Ok(eig.apply(|l| l.max(0.0).sqrt()))
}

/// Moore-Penrose pseudoinverse. Singular values below `max(rows, cols) * σ_max * 1e-12`
/// are treated as zero.
pub fn pinv(m: &Matrix) -> Matrix {
    let svd = match m.view().thin_svd() {
        Ok(s) => s,
        Err(_) => return pinv_via_eigen(m),
    };
    let s: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    let smax = s.first().copied().unwrap_or(0.0);
    let cutoff = m.rows().max(m.cols()) as f64 * smax * 1e-12;
    let u = svd.U();
    let v = svd.V();
    let k = s.len();
    let inv: Vec<f64> = s.iter().map(|&x| if x > cutoff { 1.0 / x } else { 0.0 }).collect();
    let vs = Matrix::from_fn(m.cols(), k, |i, j| v[(i, j)] * inv[j]);
    let ut = Matrix::from_fn(k, m.rows(), |i, j| u[(j, i)]);
    vs.matmul(&ut)
}

// Fallback used only if the SVD iteration fails to converge: pinv(M) = pinv(M^T M) M^T.
fn pinv_via_eigen(m: &Matrix) -> Matrix {
    let g = m.gram();
    let eig = symmetric_eigen(&g).expect("gram matrix is symmetric");
    let cutoff = m.rows().max(m.cols()) as f64 * eig.max().abs() * 1e-24;
    let ginv = eig.apply(|l| if l > cutoff { 1.0 / l } else { 0.0 });
    ginv.matmul_t(m)
}

/// Largest singular value.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.rows() == 1 || m.cols() == 1 {
        return m.frobenius_norm();
    }
    match m.view().singular_values() {
        Ok(s) => s.first().copied().unwrap_or(0.0),
        Err(_) => {
            let g = if m.rows() >= m.cols() { m.gram() } else { m.transpose().gram() };
            symmetric_eigen(&g).map(|e| e.max().max(0.0).sqrt()).unwrap_or(f64::NAN)
        }
    }
}

/// Lower Cholesky factor `L` with `L L^T = m`.
pub fn cholesky(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() || m.asymmetry() > symmetry_tolerance(m) {
        return Err(Error::Contract("cholesky needs a symmetric matrix".into()));
    }
    let llt = m.view().llt(Side::Lower).map_err(|_| Error::NotPd)?;
    let l = llt.L();
    Ok(Matrix::from_fn(m.rows(), m.cols(), |i, j| if j <= i { l[(i, j)] } else { 0.0 }))
}

/// Solves `a X = b` for symmetric positive-definite `a`.
pub fn spd_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows() != b.rows() || !a.is_square() {
        return Err(Error::Contract("spd_solve shape mismatch".into()));
    }
    let llt = a.view().llt(Side::Lower).map_err(|_| Error::NotPd)?;
    let x = llt.solve(b.view());
    Ok(Matrix::from_faer(x.as_ref()))
}

/// Inverse of a symmetric positive-definite matrix.
pub fn spd_inverse(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::Contract("spd_inverse needs a square matrix".into()));
    }
    let llt = a.view().llt(Side::Lower).map_err(|_| Error::NotPd)?;
    let mut inv = Matrix::from_faer(llt.inverse().as_ref());
    inv.symmetrize();
    Ok(inv)
}

/// Minimum-Frobenius-norm decoder `A C^+`.
///
/// Uses the normal equations when `C` has full column rank and falls back to
/// the SVD pseudoinverse otherwise. Fails if `A` is not reproduced by the
/// result, which happens when the row space of `A` leaves that of `C`.
pub fn min_norm_decoder(a: &Matrix, c: &Matrix) -> Result<Matrix> {
    if a.cols() != c.cols() {
        return Err(Error::Contract(format!(
            "decoder shapes: A has {} columns, C has {}",
            a.cols(),
            c.cols()
        )));
    }
    let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);
    if c.rows() >= c.cols() {
        if let Ok(y) = spd_solve(&c.gram(), &a.transpose()) {
            let b = c.matmul(&y).transpose();
            if b.matmul(c).sub(a).frobenius_norm() <= 1e-10 * scale {
                return Ok(b);
            }
        }
    }
    let b = a.matmul(&pinv(c));
    let err = b.matmul(c).sub(a).frobenius_norm() / scale;
    if err > 1e-8 {
        return Err(Error::RankDeficient(format!(
            "encoder cannot reproduce the workload (relative error {err:e})"
        )));
    }
    Ok(b)
}
