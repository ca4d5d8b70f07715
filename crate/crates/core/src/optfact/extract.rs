use serde::Serialize;

use crate::error::{Error, Result};
use crate::matcore::{cholesky, min_norm_decoder, Matrix};
use crate::participation::{
    sensitivity, sensitivity_from_gram, ParticipationSchema, SensMethod, BRUTE_FORCE_MAX_K, NONNEG_TOL,
};

/// A factorization `A = B C` with the sensitivity of `C` under `schema`.
#[derive(Debug, Clone, Serialize)]
pub struct Factorization {
    #[serde(skip)]
    pub b: Matrix,
    #[serde(skip)]
    pub c: Matrix,
    pub sens: f64,
    pub schema: ParticipationSchema,
    pub sens_method: SensMethod,
}

impl Factorization {
    /// Builds a factorization and computes the sensitivity of `c` with `method`.
    pub fn new(b: Matrix, c: Matrix, schema: ParticipationSchema, method: SensMethod) -> Result<Self> {
        if b.cols() != c.rows() {
            return Err(Error::Contract(format!(
                "B is {}x{} but C has {} rows",
                b.rows(),
                b.cols(),
                c.rows()
            )));
        }
        let sens = sensitivity(&c, &schema, method)?.value;
        Ok(Self { b, c, sens, schema, sens_method: method })
    }

    /// Sensitivity recomputed from `c`.
    pub fn recompute_sens(&self) -> Result<f64> {
        Ok(sensitivity(&self.c, &self.schema, self.sens_method)?.value)
    }

    /// `sens^2 ‖B‖_F^2`.
    pub fn loss(&self) -> f64 {
        self.sens * self.sens * self.b.frobenius_norm_sq()
    }

    pub fn reconstruction_error(&self, a: &Matrix) -> f64 {
        self.b.matmul(&self.c).rel_error(a)
    }
}

/// Exact method when possible: the nonnegative fast path if `x` allows it, brute
/// force for moderate `k`, the spectral bound otherwise.
pub(crate) fn auto_method(x: &Matrix, schema: &ParticipationSchema) -> SensMethod {
    let nonneg = schema.patterns.iter().all(|p| {
        let g = x.principal(p);
        let tol = NONNEG_TOL * g.diagonal().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        (0..g.rows()).all(|a| (0..g.cols()).all(|b| a == b || g[(a, b)] >= -tol))
    });
    if nonneg {
        SensMethod::Nonneg
    } else if schema.k <= BRUTE_FORCE_MAX_K {
        SensMethod::Brute
    } else {
        SensMethod::Upper
    }
}

/// Lower-triangular `C` with `C^T C = x`: the Cholesky factor of `x` with rows and
/// columns reversed.
pub(crate) fn reversed_cholesky(x: &Matrix) -> Result<Matrix> {
    let n = x.rows();
    let jxj = Matrix::from_fn(n, n, |i, j| x[(n - 1 - i, n - 1 - j)]);
    let l = cholesky(&jxj).map_err(|_| Error::NotPd)?;
    Ok(Matrix::from_fn(n, n, |i, j| l[(n - 1 - j, n - 1 - i)]))
}

/// Factorization of `a` whose encoder has Gram matrix `x`; `B = A C^+`.
pub fn extract_factorization(x: &Matrix, a: &Matrix, schema: &ParticipationSchema) -> Result<Factorization> {
    extract_with_method(x, a, schema, auto_method(x, schema))
}

pub fn extract_with_method(
    x: &Matrix,
    a: &Matrix,
    schema: &ParticipationSchema,
    method: SensMethod,
) -> Result<Factorization> {
    if !x.is_square() || x.rows() != a.cols() || x.rows() != schema.n {
        return Err(Error::Contract("X, A and the schema disagree in size".into()));
    }
    if x.asymmetry() > 1e-10 * x.max_abs().max(1.0) {
        return Err(Error::Contract("X must be symmetric".into()));
    }
    let c = reversed_cholesky(x)?;
    let b = min_norm_decoder(a, &c)?;
    let sens = sensitivity_from_gram(x, schema, method)?.value;
    Ok(Factorization { b, c, sens, schema: schema.clone(), sens_method: method })
}
