use super::ConstraintSet;
use crate::error::{Error, Result};
use crate::matcore::{symmetric_eigen, Matrix};

/// Partial derivatives of the dual function.
#[derive(Debug, Clone, PartialEq)]
pub struct DualGradient {
    /// `u^T X u - 1` per corner.
    pub v: Vec<f64>,
    /// `-X[i,j]` per constrained pair.
    pub w: Vec<f64>,
}

/// Everything derived from one multiplier vector `(v, w)`.
#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub u: Matrix,
    pub x: Matrix,
    pub dual: f64,
    /// Gradient over `(v, w)` concatenated.
    pub grad: Vec<f64>,
    /// `tr((U^{1/2} M U^{1/2})^{1/2})`.
    pub sqrt_trace: f64,
    pub rescued: bool,
}

/// `U = sum_u v_u u u^T - W~`, where `W~[i,j] = W~[j,i] = w_p / 2` on pair `p = (i, j)`.
pub fn u_matrix(v: &[f64], w: &[f64], cs: &ConstraintSet) -> Result<Matrix> {
    if v.len() != cs.corners.len() || w.len() != cs.pairs.len() {
        return Err(Error::Contract(format!(
            "expected {} corner and {} pair multipliers, got {} and {}",
            cs.corners.len(),
            cs.pairs.len(),
            v.len(),
            w.len()
        )));
    }
    let mut u = Matrix::zeros(cs.n, cs.n);
    for (corner, &vu) in cs.corners.iter().zip(v) {
        if vu == 0.0 {
            continue;
        }
        for &(a, sa) in corner {
            for &(b, sb) in corner {
                u[(a, b)] += vu * sa * sb;
            }
        }
    }
    for (&(i, j), &wp) in cs.pairs.iter().zip(w) {
        u[(i, j)] -= 0.5 * wp;
        u[(j, i)] -= 0.5 * wp;
    }
    Ok(u)
}

const RESCUE_THRESHOLD: f64 = 1e-10;

/// Evaluates the dual at `vars = (v, w)` for `m = A^T A`.
pub(crate) fn evaluate(m: &Matrix, cs: &ConstraintSet, vars: &[f64]) -> Result<Evaluation> {
    let nc = cs.corners.len();
    if vars.len() != cs.num_vars() {
        return Err(Error::Contract("multiplier vector has the wrong length".into()));
    }
    if vars.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Contract("multipliers must be finite and nonnegative".into()));
    }
    let (v, w) = vars.split_at(nc);
    let u = u_matrix(v, w, cs)?;
    let n = cs.n;
    let mut rescued = false;

    let (x, sqrt_trace) = if cs.diagonal_u() {
        let mut d = u.diagonal();
        let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
        if dmin < RESCUE_THRESHOLD {
            if dmin < -RESCUE_THRESHOLD {
                return Err(Error::RankDeficient("U is not positive definite".into()));
            }
            let eps = 1e-9 * d.iter().sum::<f64>() / n as f64;
            d.iter_mut().for_each(|x| *x += eps);
            rescued = true;
            if d.iter().any(|x| *x <= 0.0) {
                return Err(Error::RankDeficient("U collapsed to zero".into()));
            }
        }
        let h: Vec<f64> = d.iter().map(|x| x.sqrt()).collect();
        let mut k = Matrix::from_fn(n, n, |i, j| h[i] * m[(i, j)] * h[j]);
        k.symmetrize();
        let keig = symmetric_eigen(&k)?;
        let sqrt_trace: f64 = keig.values.iter().map(|l| l.max(0.0).sqrt()).sum();
        let k_half = keig.apply(|l| l.max(0.0).sqrt());
        (Matrix::from_fn(n, n, |i, j| k_half[(i, j)] / (h[i] * h[j])), sqrt_trace)
    } else {
        let mut eig = symmetric_eigen(&u)?;
        let lmin = eig.min();
        let lmax = eig.max().max(0.0);
        if lmin < RESCUE_THRESHOLD {
            if lmin < -1e-8 * lmax.max(1.0) {
                return Err(Error::RankDeficient(format!("U has eigenvalue {lmin:e}")));
            }
            let eps = 1e-9 * u.trace() / n as f64;
            eig.values.iter_mut().for_each(|l| *l += eps);
            rescued = true;
            if eig.min() <= 0.0 {
                return Err(Error::RankDeficient("U is singular".into()));
            }
            log::debug!("shifted U by {eps:e} to keep it invertible");
        }
        let u_half = eig.apply(f64::sqrt);
        let u_inv_half = eig.apply(|l| 1.0 / l.sqrt());
        let mut k = u_half.matmul(m).matmul(&u_half);
        k.symmetrize();
        let keig = symmetric_eigen(&k)?;
        let k_half = keig.apply(|l| l.max(0.0).sqrt());
        let sqrt_trace: f64 = keig.values.iter().map(|l| l.max(0.0).sqrt()).sum();
        let mut x = u_inv_half.matmul(&k_half).matmul(&u_inv_half);
        x.symmetrize();
        (x, sqrt_trace)
    };

    let dual = 2.0 * sqrt_trace - v.iter().sum::<f64>();
    let mut grad = Vec::with_capacity(vars.len());
    grad.extend((0..nc).map(|c| cs.corner_value(c, &x) - 1.0));
    grad.extend(cs.pairs.iter().map(|&(i, j)| -x[(i, j)]));
    Ok(Evaluation { u, x, dual, grad, sqrt_trace, rescued })
}

fn concat(v: &[f64], w: &[f64]) -> Vec<f64> {
    v.iter().chain(w).copied().collect()
}

/// Minimizer `X = U^{-1/2} (U^{1/2} A^T A U^{1/2})^{1/2} U^{-1/2}` of the Lagrangian.
pub fn x_from_duals(v: &[f64], w: &[f64], a: &Matrix, cs: &ConstraintSet) -> Result<Matrix> {
    Ok(evaluate(&a.gram(), cs, &concat(v, w))?.x)
}

/// `g(v, W) = 2 tr((U^{1/2} A^T A U^{1/2})^{1/2}) - sum_u v_u`.
pub fn dual_value(v: &[f64], w: &[f64], a: &Matrix, cs: &ConstraintSet) -> Result<f64> {
    Ok(evaluate(&a.gram(), cs, &concat(v, w))?.dual)
}

pub fn dual_gradient(v: &[f64], w: &[f64], a: &Matrix, cs: &ConstraintSet) -> Result<DualGradient> {
    let e = evaluate(&a.gram(), cs, &concat(v, w))?;
    let (gv, gw) = e.grad.split_at(v.len());
    Ok(DualGradient { v: gv.to_vec(), w: gw.to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optfact::ConstraintMode;
    use crate::participation::{make_schema, ParticipationSchema};
    use crate::workloads::prefix_workload;

    #[test]
    fn identity_workload_single_participation() {
        let n = 4;
        let cs = ConstraintSet::new(&ParticipationSchema::single(n), ConstraintMode::FullCorners).unwrap();
        let a = Matrix::identity(n);
        let x = x_from_duals(&vec![1.0; n], &[], &a, &cs).unwrap();
        assert!(x.max_abs_diff(&Matrix::identity(n)) < 1e-12);
        let g = dual_value(&vec![1.0; n], &[], &a, &cs).unwrap();
        assert!((g - n as f64).abs() < 1e-12);
        let grad = dual_gradient(&vec![4.0; n], &[], &a, &cs).unwrap();
        assert!(grad.v.iter().all(|d| (d + 0.5).abs() < 1e-12));
    }

    #[test]
    fn stationarity_equation_holds() {
        let schema = make_schema(6, 3, 2).unwrap();
        let a = prefix_workload(6);
        for mode in ConstraintMode::ALL {
            let cs = ConstraintSet::new(&schema, mode).unwrap();
            let v: Vec<f64> = (0..cs.corners.len()).map(|i| 1.0 + 0.3 * i as f64).collect();
            let w: Vec<f64> = cs.pairs.iter().map(|&(i, j)| if (j - i) % 2 == 0 { 0.5 } else { 0.05 }).collect();
            let e = evaluate(&a.gram(), &cs, &concat(&v, &w)).unwrap();
            let xux = e.x.matmul(&e.u).matmul(&e.x);
            assert!(xux.rel_error(&a.gram()) < 1e-7, "{mode}");
        }
    }

    #[test]
    fn indefinite_u_is_rejected() {
        let cs = ConstraintSet::new(&make_schema(4, 2, 2).unwrap(), ConstraintMode::ElementwiseNonneg).unwrap();
        let v = vec![1.0, 1.0];
        let w = vec![10.0; cs.pairs.len()];
        let err = x_from_duals(&v, &w, &prefix_workload(4), &cs).unwrap_err();
        assert!(matches!(err, Error::RankDeficient(_)));
    }
}
