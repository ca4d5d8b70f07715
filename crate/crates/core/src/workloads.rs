//! Lower-triangular workload matrices: prefix sums, heavy-ball momentum, and
//! momentum with a linear learning-rate cooldown.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadKind {
    Prefix,
    Momentum,
    MomentumCooldown,
}

impl std::str::FromStr for WorkloadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prefix" => Ok(Self::Prefix),
            "momentum" => Ok(Self::Momentum),
            "momentum_cooldown" | "momentum-cooldown" => Ok(Self::MomentumCooldown),
            other => Err(Error::InvalidArgument(format!("unknown workload kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for WorkloadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Prefix => "prefix",
            Self::Momentum => "momentum",
            Self::MomentumCooldown => "momentum_cooldown",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub n: usize,
    pub kind: WorkloadKind,
    pub beta: f64,
    pub cooldown_fraction: f64,
    pub cooldown_floor: f64,
}

impl WorkloadSpec {
    pub fn prefix(n: usize) -> Self {
        Self { n, kind: WorkloadKind::Prefix, beta: 0.0, cooldown_fraction: 0.25, cooldown_floor: 0.05 }
    }

    pub fn momentum(n: usize, beta: f64) -> Self {
        Self { kind: WorkloadKind::Momentum, beta, ..Self::prefix(n) }
    }

    pub fn momentum_cooldown(n: usize, beta: f64, fraction: f64, floor: f64) -> Self {
        Self {
            n,
            kind: WorkloadKind::MomentumCooldown,
            beta,
            cooldown_fraction: fraction,
            cooldown_floor: floor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("workload needs n >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::InvalidArgument(format!("beta {} outside [0, 1)", self.beta)));
        }
        if !(self.cooldown_floor > 0.0 && self.cooldown_floor <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "cooldown floor {} outside (0, 1]",
                self.cooldown_floor
            )));
        }
        if !(0.0..1.0).contains(&self.cooldown_fraction) {
            return Err(Error::InvalidArgument(format!(
                "cooldown fraction {} outside [0, 1)",
                self.cooldown_fraction
            )));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Matrix> {
        self.validate()?;
        match self.kind {
            WorkloadKind::Prefix => Ok(prefix_workload(self.n)),
            WorkloadKind::Momentum => momentum_workload(self.n, self.beta),
            WorkloadKind::MomentumCooldown => momentum_cooldown_workload(self),
        }
    }
}

/// All-ones lower triangle.
pub fn prefix_workload(n: usize) -> Matrix {
    Matrix::from_fn(n, n, |i, j| if j <= i { 1.0 } else { 0.0 })
}

/// Heavy-ball momentum with cumulative output: `A[i,j] = sum_{t=j..i} beta^(t-j)`.
pub fn momentum_workload(n: usize, beta: f64) -> Result<Matrix> {
    WorkloadSpec::momentum(n, beta).validate()?;
    Ok(weighted_momentum(n, beta, &vec![1.0; n]))
}

/// Momentum with learning-rate multipliers: `A[i,j] = sum_{t=j..i} eta_t beta^(t-j)`.
pub fn momentum_cooldown_workload(spec: &WorkloadSpec) -> Result<Matrix> {
    spec.validate()?;
    let eta = cooldown_schedule(spec.n, spec.cooldown_fraction, spec.cooldown_floor);
    Ok(weighted_momentum(spec.n, spec.beta, &eta))
}

/// Learning-rate multipliers: 1 up to step `t0 = ceil((1 - fraction) n)`, then
/// `1 - (1 - floor)(t - t0)/(n - t0)` for 1-based steps `t > t0`.
pub fn cooldown_schedule(n: usize, fraction: f64, floor: f64) -> Vec<f64> {
    let t0 = (((1.0 - fraction) * n as f64) - 1e-9).ceil().max(0.0) as usize;
    (1..=n)
        .map(|t| {
            if t <= t0 {
                1.0
            } else {
                1.0 - (1.0 - floor) * (t - t0) as f64 / (n - t0) as f64
            }
        })
        .collect()
}

fn weighted_momentum(n: usize, beta: f64, eta: &[f64]) -> Matrix {
    let powers: Vec<f64> = (0..n as i32).map(|d| beta.powi(d)).collect();
    let mut a = Matrix::zeros(n, n);
    for j in 0..n {
        let mut acc = 0.0;
        for i in j..n {
            acc += eta[i] * powers[i - j];
            a[(i, j)] = acc;
        }
    }
    a
}
