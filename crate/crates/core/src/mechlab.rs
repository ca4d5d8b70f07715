//! Evaluation of factorization mechanisms: loss, per-step variance, normalization,
//! correlated noise, zCDP accounting, and the MAT64 interchange format.

use std::io::{Read, Write};
use std::path::Path;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::matcore::Matrix;
use crate::optfact::Factorization;
use crate::participation::{sensitivity, ParticipationSchema, SensMethod};

/// `sens(C)^2 ‖B‖_F^2`.
pub fn loss(b: &Matrix, c: &Matrix, schema: &ParticipationSchema, method: SensMethod) -> Result<f64> {
    if b.cols() != c.rows() {
        return Err(Error::Contract(format!("B has {} columns but C has {} rows", b.cols(), c.rows())));
    }
    let s = sensitivity(c, schema, method)?.value;
    Ok(s * s * b.frobenius_norm_sq())
}

/// Per-step noise variance `sens^2 ‖B[i, :]‖^2`.
pub fn variance_profile(b: &Matrix, sens: f64) -> Vec<f64> {
    b.row_norms_sq().into_iter().map(|r| sens * sens * r).collect()
}

/// Rescales to unit sensitivity: `(sens B, C / sens)`.
pub fn normalize(f: &Factorization) -> Result<Factorization> {
    if !(f.sens > 0.0) || !f.sens.is_finite() {
        return Err(Error::Degenerate(format!("cannot normalize sensitivity {}", f.sens)));
    }
    Ok(Factorization {
        b: f.b.scale(f.sens),
        c: f.c.scale(1.0 / f.sens),
        sens: 1.0,
        schema: f.schema.clone(),
        sens_method: f.sens_method,
    })
}

fn uniform_open(x: u64) -> f64 {
    ((x >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

fn box_muller(a: u64, b: u64) -> f64 {
    let u1 = uniform_open(a);
    let u2 = uniform_open(b);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Standard normal keyed by `(seed, row, col)`, independent of evaluation order.
pub fn keyed_normal(seed: u64, row: u64, col: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row);
    rng.set_word_pos(col as u128 * 4);
    let a = rng.next_u64();
    let b = rng.next_u64();
    box_muller(a, b)
}

/// Fills `out[j]` with `keyed_normal(seed, row, j)`.
pub fn fill_normals(seed: u64, row: u64, out: &mut [f64]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row);
    for v in out.iter_mut() {
        let a = rng.next_u64();
        let b = rng.next_u64();
        *v = box_muller(a, b);
    }
}

/// `B Z` for `Z` of shape `B.cols() x d` with i.i.d. `N(0, sigma^2)` entries,
/// `Z[r, c]` keyed by `(seed, r, c)`.
pub fn sample_noise(b: &Matrix, d: usize, sigma: f64, seed: u64) -> Result<Matrix> {
    sample_noise_with(b, d, sigma, seed, Execution::default())
}

pub fn sample_noise_with(b: &Matrix, d: usize, sigma: f64, seed: u64, exec: Execution) -> Result<Matrix> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma must be finite and nonnegative, got {sigma}")));
    }
    if d == 0 {
        return Err(Error::InvalidArgument("noise dimension must be at least 1".into()));
    }
    if sigma == 0.0 {
        return Ok(Matrix::zeros(b.rows(), d));
    }
    let mut z = Matrix::zeros(b.cols(), d);
    exec.for_each_chunk(z.as_mut_slice(), d, |r, row| {
        fill_normals(seed, r as u64, row);
        row.iter_mut().for_each(|v| *v *= sigma);
    });
    Ok(b.matmul_with(&z, exec))
}

/// `ρ = sens^2 / (2 sigma^2)` for the Gaussian mechanism.
pub fn zcdp(sens: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    Ok(sens * sens / (2.0 * sigma * sigma))
}

/// Noise multiplier achieving `ρ`-zCDP at sensitivity `sens`.
pub fn sigma_for_zcdp(sens: f64, rho: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
    }
    Ok(sens / (2.0 * rho).sqrt())
}

/// `ε = ρ + 2 sqrt(ρ ln(1/δ))`.
pub fn zcdp_to_epsilon(rho: f64, delta: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(rho + 2.0 * (rho * (1.0 / delta).ln()).sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct MechanismReport {
    pub mechanism_name: String,
    pub n: usize,
    pub k: usize,
    pub b: usize,
    /// Total squared error at unit noise multiplier.
    pub loss: f64,
    pub root_loss: f64,
    pub sens: f64,
    pub sens_method: SensMethod,
    pub per_iterate_variance: Vec<f64>,
    pub zcdp_rho: f64,
    pub epsilon_at_delta: f64,
}

impl MechanismReport {
    /// Report for `f` run with noise multiplier `sigma`, with `ε` at `delta`.
    pub fn new(name: &str, f: &Factorization, sigma: f64, delta: f64) -> Result<Self> {
        let loss = f.loss();
        let zcdp_rho = zcdp(f.sens, sigma)?;
        Ok(Self {
            mechanism_name: name.to_string(),
            n: f.schema.n,
            k: f.schema.k,
            b: f.schema.b,
            loss,
            root_loss: loss.sqrt(),
            sens: f.sens,
            sens_method: f.sens_method,
            per_iterate_variance: variance_profile(&f.b, f.sens),
            zcdp_rho,
            epsilon_at_delta: zcdp_to_epsilon(zcdp_rho, delta)?,
        })
    }
}

/// Row of a loss table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub mechanism: String,
    pub n: usize,
    pub k: usize,
    pub b: usize,
    pub stamps: usize,
    pub decoder: String,
    pub sens: f64,
    pub sens_method: SensMethod,
    pub loss: f64,
    pub root_loss: f64,
}

pub const LOSS_CSV_HEADER: &str = "mechanism,n,k,b,stamps,decoder,sens,sens_method,loss,root_loss";

const MAT64_MAGIC: &str = "MFDP1";

/// `MFDP1 <rows> <cols>\n` followed by little-endian `f64` values in row-major order.
pub fn encode_mat64(m: &Matrix) -> Vec<u8> {
    let header = format!("{MAT64_MAGIC} {} {}\n", m.rows(), m.cols());
    let mut out = Vec::with_capacity(header.len() + 8 * m.as_slice().len());
    out.extend_from_slice(header.as_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_mat64(bytes: &[u8]) -> Result<Matrix> {
    let nl = bytes
        .iter()
        .position(|&c| c == b'\n')
        .ok_or_else(|| Error::Format("missing MAT64 header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::Format("header is not ASCII".into()))?;
    let parts: Vec<&str> = header.split(' ').collect();
    if parts.len() != 3 || parts[0] != MAT64_MAGIC {
        return Err(Error::Format(format!("bad MAT64 header `{header}`")));
    }
    let dim = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad dimension `{s}`")));
    let (rows, cols) = (dim(parts[1])?, dim(parts[2])?);
    let body = &bytes[nl + 1..];
    let expected = rows.checked_mul(cols).and_then(|c| c.checked_mul(8));
    if expected != Some(body.len()) {
        return Err(Error::Format(format!("payload has {} bytes, expected {rows}x{cols} f64", body.len())));
    }
    let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Matrix::new(rows, cols, data)
}

pub fn write_mat64(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_mat64(m))?;
    Ok(())
}

pub fn read_mat64(path: impl AsRef<Path>) -> Result<Matrix> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    decode_mat64(&buf)
}

/// Comma-separated rows with round-trip float formatting.
pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
