//! Optimal factorizations through the Lagrange dual of
//! `min tr(A^T A X^{-1})` subject to `u^T X u <= 1` on every corner `u`.
//!
//! Three constraint regimes are supported: every sign corner, nonnegative corners
//! plus `X[i,j] >= 0` on pairs sharing a pattern, and nonnegative corners plus
//! `X >= 0` everywhere off the diagonal.

mod dual;
mod extract;
mod solver;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::Matrix;
use crate::participation::{corner_set, ParticipationSchema, SensMethod};

pub use dual::{dual_gradient, dual_value, u_matrix, x_from_duals, DualGradient};
pub use extract::{extract_factorization, extract_with_method, Factorization};
pub use solver::{solve, solve_with_gram, Method, SolveOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMode {
    FullCorners,
    PairwiseNonneg,
    ElementwiseNonneg,
}

impl ConstraintMode {
    pub const ALL: [ConstraintMode; 3] =
        [ConstraintMode::FullCorners, ConstraintMode::PairwiseNonneg, ConstraintMode::ElementwiseNonneg];

    /// Sensitivity method that is exact for solutions of this mode.
    pub fn sens_method(self) -> SensMethod {
        match self {
            ConstraintMode::FullCorners => SensMethod::Brute,
            _ => SensMethod::Nonneg,
        }
    }
}

impl std::str::FromStr for ConstraintMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_corners" | "full-corners" | "full" => Ok(Self::FullCorners),
            "pairwise_nonneg" | "pairwise-nonneg" | "pairwise" => Ok(Self::PairwiseNonneg),
            "elementwise_nonneg" | "elementwise-nonneg" | "elementwise" => Ok(Self::ElementwiseNonneg),
            other => Err(Error::InvalidArgument(format!("unknown constraint mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for ConstraintMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::FullCorners => "full_corners",
            Self::PairwiseNonneg => "pairwise_nonneg",
            Self::ElementwiseNonneg => "elementwise_nonneg",
        })
    }
}

/// A corner stored by its support: `(index, sign)` pairs.
pub type SparseCorner = Vec<(usize, f64)>;

/// Corner constraints and nonnegativity pairs of one constraint regime.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub n: usize,
    pub mode: ConstraintMode,
    pub corners: Vec<SparseCorner>,
    /// Index pairs `(i, j)`, `i < j`, constrained to `X[i,j] >= 0`.
    pub pairs: Vec<(usize, usize)>,
}

/// Upper limit on `b 2^(k-1)` in full-corner mode.
pub const MAX_FULL_CORNERS: usize = 1 << 20;

impl ConstraintSet {
    pub fn new(schema: &ParticipationSchema, mode: ConstraintMode) -> Result<Self> {
        let n = schema.n;
        let nonneg = mode != ConstraintMode::FullCorners;
        if !nonneg && schema.corner_count() > MAX_FULL_CORNERS {
            return Err(Error::InvalidArgument(format!(
                "full-corner mode needs b 2^(k-1) <= 2^20 (k={}, b={})",
                schema.k, schema.b
            )));
        }
        let dense = corner_set(schema, nonneg)?;
        let corners = dense
            .vectors
            .iter()
            .map(|u| u.iter().enumerate().filter(|(_, s)| **s != 0.0).map(|(i, s)| (i, *s)).collect())
            .collect();
        let pairs = match mode {
            ConstraintMode::FullCorners => Vec::new(),
            ConstraintMode::PairwiseNonneg => schema.pairs(),
            ConstraintMode::ElementwiseNonneg => {
                (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
            }
        };
        Ok(Self { n, mode, corners, pairs })
    }

    pub fn num_vars(&self) -> usize {
        self.corners.len() + self.pairs.len()
    }

    /// `u^T X u` for corner `c`.
    pub fn corner_value(&self, c: usize, x: &Matrix) -> f64 {
        let u = &self.corners[c];
        let mut acc = 0.0;
        for &(a, sa) in u {
            for &(b, sb) in u {
                acc += sa * sb * x[(a, b)];
            }
        }
        acc
    }

    pub fn max_corner_value(&self, x: &Matrix) -> f64 {
        (0..self.corners.len()).map(|c| self.corner_value(c, x)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest `X[i,j]` over constrained pairs, or `+inf` when there are none.
    pub fn min_constrained_entry(&self, x: &Matrix) -> f64 {
        self.pairs.iter().map(|&(i, j)| x[(i, j)]).fold(f64::INFINITY, f64::min)
    }

    /// True when `U` is diagonal for every choice of multipliers.
    fn diagonal_u(&self) -> bool {
        self.pairs.is_empty() && self.corners.iter().all(|c| c.len() == 1)
    }
}

/// Multipliers and derived quantities of the dual problem at the returned iterate.
#[derive(Debug, Clone, Serialize)]
pub struct DualState {
    pub mode: ConstraintMode,
    /// Corner multipliers, one per corner of the constraint set.
    pub v: Vec<f64>,
    /// Pair multipliers, aligned with `ConstraintSet::pairs`.
    pub w: Vec<f64>,
    #[serde(skip)]
    pub u: Matrix,
    /// Lagrangian minimizer `X(v, W)`.
    #[serde(skip)]
    pub x: Matrix,
    /// Feasible primal point scaled to unit sensitivity.
    #[serde(skip)]
    pub x_primal: Matrix,
    pub dual_value: f64,
    pub primal_value: f64,
    pub gap: f64,
    pub rel_gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest `|u^T X u - 1|` over corners with positive multiplier.
    pub kkt_residual: f64,
    /// Smallest entry of `x_primal`.
    pub min_x_entry: f64,
    /// Smallest entry of `x_primal` over distinct steps sharing a pattern.
    pub min_pair_entry: f64,
    /// Evaluations that needed a diagonal shift to keep `U` invertible.
    pub rescues: usize,
}
