//! Participation schemas and sensitivity of an encoder under them.
//!
//! Under `(k, b)`-participation with `n = k b` steps, a single example touches the
//! steps `{i, i+b, ..., i+(k-1)b}`. Sensitivity is the largest `‖C u‖` over sign
//! vectors `u` supported on one such pattern.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::matcore::{dot, symmetric_eigen, Matrix};

/// Largest `k` accepted by [`sens_brute`].
pub const BRUTE_FORCE_MAX_K: usize = 20;

/// Tolerance below zero still accepted as nonnegative on participation pairs.
pub const NONNEG_TOL: f64 = 1e-12;

/// Pattern set of a `(k, b)` schema. Indices are stored 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipationSchema {
    pub n: usize,
    pub k: usize,
    pub b: usize,
    pub patterns: Vec<Vec<usize>>,
}

/// Builds the `(k, b)` schema on `n = k b` steps.
pub fn make_schema(n: usize, k: usize, b: usize) -> Result<ParticipationSchema> {
    if k == 0 || b == 0 || n != k * b {
        return Err(Error::InvalidSchema(format!("need n = k * b with k, b >= 1 (n={n}, k={k}, b={b})")));
    }
    let patterns = (0..b).map(|i| (0..k).map(|j| i + j * b).collect()).collect();
    Ok(ParticipationSchema { n, k, b, patterns })
}

impl ParticipationSchema {
    /// Each step is its own pattern.
    pub fn single(n: usize) -> Self {
        make_schema(n, 1, n).expect("n >= 1")
    }

    /// One pattern containing every step.
    pub fn every_step(n: usize) -> Self {
        make_schema(n, n, 1).expect("n >= 1")
    }

    /// Patterns with 1-based step indices.
    pub fn patterns_one_based(&self) -> Vec<Vec<usize>> {
        self.patterns.iter().map(|p| p.iter().map(|i| i + 1).collect()).collect()
    }

    /// Distinct unordered pairs `(i, j)`, `i < j`, that share a pattern.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for p in &self.patterns {
            for (a, &i) in p.iter().enumerate() {
                for &j in &p[a + 1..] {
                    out.push((i.min(j), i.max(j)));
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Number of sign corners `b 2^(k-1)`, saturating.
    pub fn corner_count(&self) -> usize {
        if self.k > 60 {
            return usize::MAX;
        }
        self.b.saturating_mul(1usize << (self.k - 1))
    }

    fn check_columns(&self, c: &Matrix) -> Result<()> {
        if c.cols() != self.n {
            return Err(Error::Contract(format!(
                "encoder has {} columns but the schema has {} steps",
                c.cols(),
                self.n
            )));
        }
        Ok(())
    }
}

/// Sign vectors whose convex hull bounds the difference of neighboring streams.
#[derive(Debug, Clone, PartialEq)]
pub struct CornerSet {
    pub vectors: Vec<Vec<f64>>,
    pub restricted_nonneg: bool,
}

/// Enumerates the corners of `schema`: `b` indicator vectors when `restricted_nonneg`,
/// otherwise all `b 2^(k-1)` sign patterns with the first entry fixed to +1.
pub fn corner_set(schema: &ParticipationSchema, restricted_nonneg: bool) -> Result<CornerSet> {
    let n = schema.n;
    let mut vectors = Vec::new();
    if restricted_nonneg {
        for p in &schema.patterns {
            let mut u = vec![0.0; n];
            p.iter().for_each(|&i| u[i] = 1.0);
            vectors.push(u);
        }
    } else {
        if schema.k > BRUTE_FORCE_MAX_K {
            return Err(Error::TooLarge { k: schema.k, limit: BRUTE_FORCE_MAX_K });
        }
        for p in &schema.patterns {
            for mask in 0..(1usize << (schema.k - 1)) {
                let mut u = vec![0.0; n];
                for (pos, &i) in p.iter().enumerate() {
                    let neg = pos > 0 && (mask >> (pos - 1)) & 1 == 1;
                    u[i] = if neg { -1.0 } else { 1.0 };
                }
                vectors.push(u);
            }
        }
    }
    Ok(CornerSet { vectors, restricted_nonneg })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensMethod {
    Brute,
    Nonneg,
    Upper,
}

impl std::str::FromStr for SensMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brute" => Ok(Self::Brute),
            "nonneg" => Ok(Self::Nonneg),
            "upper" => Ok(Self::Upper),
            other => Err(Error::InvalidArgument(format!("unknown sensitivity method `{other}`"))),
        }
    }
}

impl std::fmt::Display for SensMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Brute => "brute",
            Self::Nonneg => "nonneg",
            Self::Upper => "upper",
        })
    }
}

/// Sensitivity value with the pattern (0-based index) that attains it and, for the
/// exact methods, the maximizing sign vector over that pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub value: f64,
    pub method: SensMethod,
    pub pattern: usize,
    pub signs: Option<Vec<i8>>,
}

/// `C[:, π]^T C[:, π]` for every pattern.
fn pattern_grams(c: &Matrix, schema: &ParticipationSchema, exec: Execution) -> Vec<Matrix> {
    exec.map(&schema.patterns, |p| c.select_columns(p).gram())
}

fn grams_from_x(x: &Matrix, schema: &ParticipationSchema) -> Vec<Matrix> {
    schema.patterns.iter().map(|p| x.principal(p)).collect()
}

fn argmax(values: &[(f64, Option<Vec<i8>>)]) -> (usize, f64, Option<Vec<i8>>) {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if v.0 > values[best].0 {
            best = i;
        }
    }
    (best, values[best].0, values[best].1.clone())
}

/// Maximum of `u^T X u` over sign vectors with `u_0 = +1`, by Gray-code walk.
fn max_sign_quadratic(x: &Matrix) -> (f64, Vec<i8>) {
    let k = x.rows();
    let mut u = vec![1.0f64; k];
    let mut xu: Vec<f64> = (0..k).map(|i| x.row(i).iter().sum()).collect();
    let mut q: f64 = xu.iter().sum();
    let mut best = q;
    let mut best_u = u.clone();
    let total = 1usize << (k - 1);
    for t in 1..total {
        let j = t.trailing_zeros() as usize + 1;
        let uj = u[j];
        q += -4.0 * uj * xu[j] + 4.0 * x[(j, j)];
        for (i, v) in xu.iter_mut().enumerate() {
            *v -= 2.0 * uj * x[(i, j)];
        }
        u[j] = -uj;
        if t % 4096 == 0 {
            xu = x.matvec(&u);
            q = dot(&u, &xu);
        }
        if q > best {
            best = q;
            best_u.copy_from_slice(&u);
        }
    }
    // Re-evaluate the winner exactly.
    let exact = dot(&best_u, &x.matvec(&best_u));
    (exact.max(0.0), best_u.iter().map(|&s| s as i8).collect())
}

fn brute_from_grams(grams: &[Matrix], k: usize, exec: Execution) -> Result<Sensitivity> {
    if k > BRUTE_FORCE_MAX_K {
        return Err(Error::TooLarge { k, limit: BRUTE_FORCE_MAX_K });
    }
    let vals = exec.map(grams, |g| {
        let (q, s) = max_sign_quadratic(g);
        (q, Some(s))
    });
    let (pattern, q, signs) = argmax(&vals);
    Ok(Sensitivity { value: q.sqrt(), method: SensMethod::Brute, pattern, signs })
}

fn nonneg_from_grams(grams: &[Matrix], schema: &ParticipationSchema) -> Result<Sensitivity> {
    let mut vals = Vec::with_capacity(grams.len());
    for (g, p) in grams.iter().zip(&schema.patterns) {
        let tol = NONNEG_TOL * g.diagonal().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut total = 0.0;
        for a in 0..g.rows() {
            for bb in 0..g.cols() {
                let v = g[(a, bb)];
                if a != bb && v < 0.0 {
                    if v < -tol {
                        return Err(Error::NonnegViolated { i: p[a], j: p[bb], value: v });
                    }
                    continue;
                }
                total += v;
            }
        }
        vals.push((total.max(0.0), Some(vec![1i8; g.rows()])));
    }
    let (pattern, q, signs) = argmax(&vals);
    Ok(Sensitivity { value: q.sqrt(), method: SensMethod::Nonneg, pattern, signs })
}

fn upper_from_grams(grams: &[Matrix], k: usize, exec: Execution) -> Sensitivity {
    let vals = exec.map(grams, |g| {
        let lmax = if g.rows() == 1 {
            g[(0, 0)]
        } else {
            symmetric_eigen(g).map(|e| e.max()).unwrap_or(f64::NAN)
        };
        (lmax.max(0.0), None)
    });
    let (pattern, l, _) = argmax(&vals);
    Sensitivity { value: l.sqrt() * (k as f64).sqrt(), method: SensMethod::Upper, pattern, signs: None }
}

/// Exact sensitivity by enumerating every sign corner.
pub fn sens_brute(c: &Matrix, schema: &ParticipationSchema) -> Result<f64> {
    sens_brute_certified(c, schema, Execution::default()).map(|s| s.value)
}

pub fn sens_brute_certified(
    c: &Matrix,
    schema: &ParticipationSchema,
    exec: Execution,
) -> Result<Sensitivity> {
    schema.check_columns(c)?;
    if schema.k > BRUTE_FORCE_MAX_K {
        return Err(Error::TooLarge { k: schema.k, limit: BRUTE_FORCE_MAX_K });
    }
    brute_from_grams(&pattern_grams(c, schema, exec), schema.k, exec)
}

/// Exact sensitivity `max_π sqrt(1^T X[π,π] 1)`, valid when `X = C^T C` is
/// nonnegative on participation pairs.
pub fn sens_nonneg_fastpath(c: &Matrix, schema: &ParticipationSchema) -> Result<f64> {
    sens_nonneg_certified(c, schema, Execution::default()).map(|s| s.value)
}

pub fn sens_nonneg_certified(
    c: &Matrix,
    schema: &ParticipationSchema,
    exec: Execution,
) -> Result<Sensitivity> {
    schema.check_columns(c)?;
    nonneg_from_grams(&pattern_grams(c, schema, exec), schema)
}

/// Spectral upper bound `sqrt(k) max_π ‖C[:, π]‖_2`.
pub fn sens_upper(c: &Matrix, schema: &ParticipationSchema) -> f64 {
    sens_upper_certified(c, schema, Execution::default()).value
}

pub fn sens_upper_certified(c: &Matrix, schema: &ParticipationSchema, exec: Execution) -> Sensitivity {
    assert_eq!(c.cols(), schema.n, "encoder columns must match schema steps");
    upper_from_grams(&pattern_grams(c, schema, exec), schema.k, exec)
}

/// Sensitivity with the requested method.
pub fn sensitivity(c: &Matrix, schema: &ParticipationSchema, method: SensMethod) -> Result<Sensitivity> {
    let exec = Execution::default();
    match method {
        SensMethod::Brute => sens_brute_certified(c, schema, exec),
        SensMethod::Nonneg => sens_nonneg_certified(c, schema, exec),
        SensMethod::Upper => {
            schema.check_columns(c)?;
            Ok(sens_upper_certified(c, schema, exec))
        }
    }
}

/// Sensitivity of any encoder `C` with `C^T C = x`, computed from `x` alone.
pub fn sensitivity_from_gram(x: &Matrix, schema: &ParticipationSchema, method: SensMethod) -> Result<Sensitivity> {
    if x.rows() != schema.n || !x.is_square() {
        return Err(Error::Contract("gram matrix does not match the schema".into()));
    }
    let grams = grams_from_x(x, schema);
    let exec = Execution::default();
    match method {
        SensMethod::Brute => brute_from_grams(&grams, schema.k, exec),
        SensMethod::Nonneg => nonneg_from_grams(&grams, schema),
        SensMethod::Upper => Ok(upper_from_grams(&grams, schema.k, exec)),
    }
}

/// True iff `C^T C >= -1e-12` on every pair of distinct steps sharing a pattern.
pub fn check_pairwise_nonneg(c: &Matrix, schema: &ParticipationSchema) -> bool {
    if c.cols() != schema.n {
        return false;
    }
    pattern_grams(c, schema, Execution::default()).iter().all(|g| {
        (0..g.rows()).all(|a| (0..g.cols()).all(|b| a == b || g[(a, b)] >= -NONNEG_TOL))
    })
}

/// `‖C G‖_F` for a contribution matrix `G` whose rows have norm at most 1.
pub fn vector_sens_check(c: &Matrix, g: &Matrix) -> Result<f64> {
    if c.cols() != g.rows() {
        return Err(Error::Contract(format!("C has {} columns, G has {} rows", c.cols(), g.rows())));
    }
    for i in 0..g.rows() {
        let norm = dot(g.row(i), g.row(i)).sqrt();
        if norm > 1.0 + 1e-12 {
            return Err(Error::Contract(format!("row {i} of G has norm {norm} > 1")));
        }
    }
    Ok(c.matmul(g).frobenius_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workloads::prefix_workload;

    #[test]
    fn schema_examples() {
        let s = make_schema(6, 3, 2).unwrap();
        assert_eq!(s.patterns_one_based(), vec![vec![1, 3, 5], vec![2, 4, 6]]);
        let s = make_schema(4, 1, 4).unwrap();
        assert_eq!(s.patterns_one_based(), vec![vec![1], vec![2], vec![3], vec![4]]);
        let s = make_schema(3, 3, 1).unwrap();
        assert_eq!(s.patterns_one_based(), vec![vec![1, 2, 3]]);
        assert!(matches!(make_schema(7, 3, 2), Err(Error::InvalidSchema(_))));
        assert_eq!(make_schema(6, 3, 2).unwrap().pairs(), vec![(0, 2), (0, 4), (1, 3), (1, 5), (2, 4), (3, 5)]);
    }

    #[test]
    fn corner_counts() {
        let s = make_schema(6, 3, 2).unwrap();
        let full = corner_set(&s, false).unwrap();
        assert_eq!(full.vectors.len(), 8);
        assert!(full.vectors.iter().all(|u| u[0] == 1.0 || u[1] == 1.0));
        assert_eq!(corner_set(&s, true).unwrap().vectors.len(), 2);
    }

    #[test]
    fn brute_examples() {
        let s = make_schema(4, 2, 2).unwrap();
        assert!((sens_brute(&Matrix::identity(4), &s).unwrap() - 2f64.sqrt()).abs() < 1e-14);
        let s = make_schema(2, 2, 1).unwrap();
        assert!((sens_brute(&prefix_workload(2), &s).unwrap() - 5f64.sqrt()).abs() < 1e-14);
        let c = Matrix::from_rows(&[[1.0, 3.0], [2.0, -1.0]]).unwrap();
        let col_max = c.column_norms().into_iter().fold(0.0, f64::max);
        let single = ParticipationSchema::single(2);
        assert!((sens_brute(&c, &single).unwrap() - col_max).abs() < 1e-14);
        let big = make_schema(21, 21, 1).unwrap();
        assert!(matches!(sens_brute(&Matrix::identity(21), &big), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn certificate_points_at_maximizer() {
        let c = Matrix::from_rows(&[[1.0, 0.0, -1.0, 0.0], [0.0, 1.0, 0.0, 1.0]]).unwrap();
        let s = make_schema(4, 2, 2).unwrap();
        let cert = sens_brute_certified(&c, &s, Execution::Sequential).unwrap();
        assert_eq!(cert.pattern, 0);
        assert_eq!(cert.signs, Some(vec![1, -1]));
        assert!((cert.value - 2.0).abs() < 1e-14);
    }

    #[test]
    fn nonneg_and_upper_examples() {
        let s = make_schema(6, 3, 2).unwrap();
        let i6 = Matrix::identity(6);
        assert!((sens_nonneg_fastpath(&i6, &s).unwrap() - 3f64.sqrt()).abs() < 1e-14);
        assert!((sens_upper(&i6, &s) - 3f64.sqrt()).abs() < 1e-12);
        let c = Matrix::from_rows(&[[1.0, 2.0, 0.5], [0.0, -1.0, 3.0]]).unwrap();
        let col_max = c.column_norms().into_iter().fold(0.0, f64::max);
        assert!((sens_upper(&c, &ParticipationSchema::single(3)) - col_max).abs() < 1e-12);
    }

    #[test]
    fn pairwise_check_detects_violation() {
        let s = make_schema(4, 2, 2).unwrap();
        assert!(check_pairwise_nonneg(&Matrix::identity(4), &s));
        // Columns 0 and 2 share a pattern; make their inner product -0.1.
        let mut c = Matrix::identity(4);
        c[(0, 2)] = -0.1;
        assert!(!check_pairwise_nonneg(&c, &s));
        assert!(matches!(sens_nonneg_fastpath(&c, &s), Err(Error::NonnegViolated { .. })));
    }

    #[test]
    fn vector_counterexample() {
        let r = 24f64.sqrt();
        let c = Matrix::from_rows(&[[2.0, 1.0, 1.0], [1.0, 2.0, -1.0], [1.0, -1.0, 2.0]])
            .unwrap()
            .scale(1.0 / r);
        let g = Matrix::from_rows(&[[2.0, 1.0], [2.0, -1.0], [1.0, 2.0]])
            .unwrap()
            .scale(1.0 / 5f64.sqrt());
        let scalar = sens_brute(&c, &ParticipationSchema::every_step(3)).unwrap();
        assert!((scalar - 1.0).abs() < 1e-12);
        let vector = vector_sens_check(&c, &g).unwrap();
        assert!((vector - 1.1f64.sqrt()).abs() < 1e-12);
        assert!(vector_sens_check(&c, &Matrix::from_rows(&[[1.1], [0.0], [0.0]]).unwrap()).is_err());
    }
}
