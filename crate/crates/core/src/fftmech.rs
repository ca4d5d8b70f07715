//! Prefix sums through the `2n`-point circulant embedding of the prefix matrix.
//!
//! With `v = (1, ..., 1, 0, ..., 0)` of length `2n`, the circulant generated by `v`
//! has the prefix-sum matrix as its top-left block and is diagonalized by the DFT.
//! The mechanism adds `F^* Σ^{1/2} w` noise; its real-valued form uses the real
//! circulant `M = F^* Σ^{1/2} F` with encoder `C_F = M[:, :n]` and decoder
//! `B_F = M[:n, :]`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::matcore::{min_norm_decoder, Matrix, SymmetricToeplitz};
use crate::mechlab::fill_normals;
use crate::participation::{sensitivity, ParticipationSchema, SensMethod, Sensitivity};
use crate::workloads::prefix_workload;

/// Largest tolerated imaginary part when forming real matrices from complex transforms.
pub const IMAG_TOL: f64 = 1e-10;

/// Circulant embedding of the `n`-step prefix-sum matrix.
#[derive(Debug, Clone)]
pub struct CirculantSpec {
    pub n: usize,
    /// `n` ones followed by `n` zeros.
    pub v: Vec<f64>,
    /// Unnormalized DFT of `v`.
    pub sigma_eigs: Vec<Complex64>,
}

impl CirculantSpec {
    pub fn new(n: usize) -> Result<Self> {
        check_n(n)?;
        let v = (0..2 * n).map(|i| if i < n { 1.0 } else { 0.0 }).collect();
        Ok(Self { n, v, sigma_eigs: dft_eigs(n) })
    }

    /// `‖DFT(v)‖_1`.
    pub fn l1_norm(&self) -> f64 {
        dft_l1(self.n)
    }

    /// Dense `2n x 2n` circulant with first column `v`.
    pub fn circulant(&self) -> Matrix {
        let m = 2 * self.n;
        Matrix::from_fn(m, m, |i, j| self.v[(i + m - j) % m])
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("need n >= 1".into()));
    }
    Ok(())
}

/// Closed-form DFT of `v`: `n` at index 0, 0 at other even indices, and
/// `2 / (1 - exp(-iπk/n))` at odd `k`.
pub fn dft_eigs(n: usize) -> Vec<Complex64> {
    (0..2 * n)
        .map(|k| {
            if k == 0 {
                Complex64::new(n as f64, 0.0)
            } else if k % 2 == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                let e = Complex64::from_polar(1.0, -PI * k as f64 / n as f64);
                Complex64::new(2.0, 0.0) / (Complex64::new(1.0, 0.0) - e)
            }
        })
        .collect()
}

/// `‖DFT(v)‖_1 = n + sum over odd k < 2n of 1 / sin(πk / 2n)`.
pub fn dft_l1(n: usize) -> f64 {
    let nf = n as f64;
    nf + (1..2 * n).step_by(2).map(|k| 1.0 / (PI * k as f64 / (2.0 * nf)).sin()).sum::<f64>()
}

/// Upper bound on the expected MSE of the complex release.
pub fn mse_analytic(n: usize, rho: f64, kappa: f64) -> f64 {
    let nf = n as f64;
    let l1 = dft_l1(n);
    kappa * kappa * l1 * l1 / (2.0 * rho * nf * nf)
}

/// Exact expected MSE of the real part of the release, `κ² ‖v‖_1² / (16 ρ n²)`.
pub fn mse_real_part(n: usize, rho: f64, kappa: f64) -> f64 {
    mse_analytic(n, rho, kappa) / 8.0
}

/// Lower bound on the expected MSE of any `ρ`-zCDP prefix-sum factorization with
/// unit per-step sensitivity.
pub fn mse_lower_bound(n: usize, rho: f64) -> f64 {
    let nf = n as f64;
    let t = 2.0 + ((2.0 * nf + 1.0) / 3.0).ln() + (2.0 * nf + 1.0).ln() / (2.0 * nf);
    t * t / (2.0 * rho * PI * PI)
}

/// Standard deviation multiplier `sqrt(κ² ‖v‖_1 / (4 n ρ))` applied to `F^* Σ^{1/2} w`.
pub fn noise_scale(n: usize, rho: f64, kappa: f64) -> f64 {
    (kappa * kappa * dft_l1(n) / (4.0 * n as f64 * rho)).sqrt()
}

/// Reusable FFT plans and `Σ^{1/2}` for one `n`.
#[derive(Clone)]
pub struct FftMechanism {
    n: usize,
    sqrt_eigs: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftMechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftMechanism").field("n", &self.n).finish()
    }
}

impl FftMechanism {
    pub fn new(n: usize) -> Result<Self> {
        check_n(n)?;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(2 * n);
        let inv = planner.plan_fft_inverse(2 * n);
        let sqrt_eigs = dft_eigs(n).into_iter().map(|z| z.sqrt()).collect();
        Ok(Self { n, sqrt_eigs, fwd, inv })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Unit-scale noise `Re(F^* Σ^{1/2} w)[:n]` for standard complex normal `w`
    /// (real and imaginary parts of variance 1/2) drawn from `stream`.
    pub fn unit_noise(&self, seed: u64, stream: u64) -> Vec<f64> {
        let m = 2 * self.n;
        let mut normals = vec![0.0; 2 * m];
        fill_normals(seed, stream, &mut normals);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut buf: Vec<Complex64> = (0..m)
            .map(|i| Complex64::new(normals[i] * h, normals[m + i] * h) * self.sqrt_eigs[i])
            .collect();
        self.inv.process(&mut buf);
        let s = 1.0 / (m as f64).sqrt();
        buf[..self.n].iter().map(|z| z.re * s).collect()
    }

    /// Circulant product `M x` for `M = F^* Σ^{1/2} F`, or `M^T x` when `transpose`.
    fn circulant_apply(&self, x: &[f64], transpose: bool) -> Vec<f64> {
        let m = 2 * self.n;
        let mut buf: Vec<Complex64> = (0..m)
            .map(|i| Complex64::new(x.get(i).copied().unwrap_or(0.0), 0.0))
            .collect();
        self.fwd.process(&mut buf);
        for (b, e) in buf.iter_mut().zip(&self.sqrt_eigs) {
            *b *= if transpose { e.conj() } else { *e };
        }
        self.inv.process(&mut buf);
        buf.iter().map(|z| z.re / m as f64).collect()
    }

    /// `B_F z`: the real-valued mechanism's decoded noise for a length-`2n` input.
    pub fn decode_noise(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != 2 * self.n {
            return Err(Error::Contract(format!("expected {} noise entries, got {}", 2 * self.n, z.len())));
        }
        let mut out = self.circulant_apply(z, false);
        out.truncate(self.n);
        Ok(out)
    }

    /// `C_F x` for a length-`n` input.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::Contract(format!("expected {} steps, got {}", self.n, x.len())));
        }
        Ok(self.circulant_apply(x, false))
    }

    /// `C_F^T y` for a length-`2n` input.
    pub fn encode_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != 2 * self.n {
            return Err(Error::Contract(format!("expected {} entries, got {}", 2 * self.n, y.len())));
        }
        let mut out = self.circulant_apply(y, true);
        out.truncate(self.n);
        Ok(out)
    }

    /// First column of `C_F^T C_F`, the top-left block of the circulant with
    /// eigenvalues `|λ_k|`.
    pub fn gram_first_col(&self) -> Vec<f64> {
        let m = 2 * self.n;
        let mut buf: Vec<Complex64> = self.sqrt_eigs.iter().map(|z| Complex64::new(z.norm_sqr(), 0.0)).collect();
        self.inv.process(&mut buf);
        buf[..self.n].iter().map(|z| z.re / m as f64).collect()
    }
}

/// Prefix sums of `x` plus the mechanism's noise at `ρ`-zCDP for per-step bound `κ`.
pub fn fft_prefix_release(x: &[f64], rho: f64, kappa: f64, seed: u64) -> Result<Vec<f64>> {
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument(format!("privacy budget rho must be positive, got {rho}")));
    }
    if !(kappa > 0.0) {
        return Err(Error::InvalidArgument(format!("kappa must be positive, got {kappa}")));
    }
    if let Some(i) = x.iter().position(|v| v.abs() > kappa) {
        return Err(Error::Contract(format!("|x[{i}]| exceeds kappa")));
    }
    let n = x.len();
    let mech = FftMechanism::new(n)?;
    let scale = noise_scale(n, rho, kappa);
    let noise = if scale.is_finite() { mech.unit_noise(seed, 0) } else { vec![f64::NAN; n] };
    let mut acc = 0.0;
    Ok(x.iter()
        .zip(noise)
        .map(|(v, z)| {
            acc += v;
            acc + scale * z
        })
        .collect())
}

/// Mean and standard error of a Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarlo {
    pub mean: f64,
    pub std_err: f64,
    pub trials: usize,
}

impl MonteCarlo {
    pub fn from_samples(samples: &[f64]) -> Self {
        let t = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / t;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (t - 1.0).max(1.0);
        Self { mean, std_err: (var / t).sqrt(), trials: samples.len() }
    }

    /// `|mean - target|` in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target).abs() / self.std_err
    }
}

/// Empirical MSE of the release over `trials` independent noise draws; trial `t`
/// uses noise stream `t`.
pub fn fft_release_mse_monte_carlo(
    n: usize,
    rho: f64,
    kappa: f64,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<MonteCarlo> {
    if trials < 2 {
        return Err(Error::InvalidArgument("need at least two trials".into()));
    }
    let mech = FftMechanism::new(n)?;
    let s2 = noise_scale(n, rho, kappa).powi(2);
    let samples = exec.map_range(trials, |t| {
        let z = mech.unit_noise(seed, t as u64);
        s2 * z.iter().map(|v| v * v).sum::<f64>() / n as f64
    });
    Ok(MonteCarlo::from_samples(&samples))
}

/// Real `2n x 2n` circulant `F^* Σ^{1/2} F` with its largest imaginary residual.
fn sqrt_circulant(n: usize) -> Result<Matrix> {
    check_n(n)?;
    let m = 2 * n;
    let mut col: Vec<Complex64> = dft_eigs(n).into_iter().map(|z| z.sqrt()).collect();
    FftPlanner::new().plan_fft_inverse(m).process(&mut col);
    col.iter_mut().for_each(|z| *z /= m as f64);
    let scale = col.iter().fold(1.0f64, |a, z| a.max(z.re.abs()));
    let imag = col.iter().fold(0.0f64, |a, z| a.max(z.im.abs()));
    if imag > IMAG_TOL * scale {
        return Err(Error::Internal(format!("imaginary residual {imag:e} in the real encoder")));
    }
    Ok(Matrix::from_fn(m, m, |i, j| col[(i + m - j) % m].re))
}

/// Real encoder `C_F` of shape `2n x n`.
pub fn real_fft_encoder(n: usize) -> Result<Matrix> {
    Ok(sqrt_circulant(n)?.leading_columns(n))
}

/// Decoder `B_F` of shape `n x 2n`; `B_F C_F` is the prefix matrix.
pub fn fft_decoder(n: usize) -> Result<Matrix> {
    Ok(sqrt_circulant(n)?.leading_rows(n))
}

/// Least-norm decoder `S C_F^+` with `S` the prefix matrix, as a dense `n x 2n` matrix.
pub fn fft_optimal_decoder_dense(n: usize) -> Result<Matrix> {
    min_norm_decoder(&prefix_workload(n), &real_fft_encoder(n)?)
}

/// Applies `S C_F^+` in `O(n log n)` per conjugate-gradient iteration:
/// `C_F^+ y = T^{-1} C_F^T y` with the symmetric Toeplitz `T = C_F^T C_F`.
#[derive(Debug, Clone)]
pub struct FftOptimalDecoder {
    mech: FftMechanism,
    gram: SymmetricToeplitz,
    tol: f64,
}

impl FftOptimalDecoder {
    pub fn new(n: usize) -> Result<Self> {
        let mech = FftMechanism::new(n)?;
        let gram = SymmetricToeplitz::new(&mech.gram_first_col())?;
        Ok(Self { mech, gram, tol: 1e-12 })
    }

    pub fn n(&self) -> usize {
        self.mech.n
    }

    /// Decodes a length-`2n` vector; also returns the solver iteration count.
    pub fn decode_with_iterations(&self, y: &[f64]) -> Result<(Vec<f64>, usize)> {
        let rhs = self.mech.encode_transpose(y)?;
        let (mut x, iters) = self.gram.solve(&rhs, self.tol)?;
        let mut acc = 0.0;
        for v in x.iter_mut() {
            acc += *v;
            *v = acc;
        }
        Ok((x, iters))
    }

    pub fn decode(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.decode_with_iterations(y)?.0)
    }
}

/// `S C_F^+ y` for a length-`2n` input.
pub fn fft_optimal_decode(y: &[f64], n: usize) -> Result<Vec<f64>> {
    if y.len() != 2 * n {
        return Err(Error::Contract(format!("expected {} entries, got {}", 2 * n, y.len())));
    }
    FftOptimalDecoder::new(n)?.decode(y)
}

/// Sensitivity of `C_F` under `schema`: exact by enumeration when there are at most
/// `2^16` sign corners, the spectral bound otherwise.
pub fn fft_multi_epoch_sens(n: usize, schema: &ParticipationSchema) -> Result<Sensitivity> {
    if schema.n != n {
        return Err(Error::Contract("schema does not cover n steps".into()));
    }
    let c = real_fft_encoder(n)?;
    let method = if schema.corner_count() <= 1 << 16 { SensMethod::Brute } else { SensMethod::Upper };
    sensitivity(&c, schema, method)
}

/// Row of the analytic MSE table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MseRow {
    pub n: usize,
    pub analytic_mse: f64,
    pub lower_bound: f64,
    pub ratio: f64,
}

pub fn mse_table(ns: &[usize], rho: f64, kappa: f64) -> Vec<MseRow> {
    ns.iter()
        .map(|&n| {
            let analytic_mse = mse_analytic(n, rho, kappa);
            let lower_bound = kappa * kappa * mse_lower_bound(n, rho);
            MseRow { n, analytic_mse, lower_bound, ratio: analytic_mse / lower_bound }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_dft(v: &[f64]) -> Vec<Complex64> {
        let m = v.len();
        (0..m)
            .map(|k| {
                v.iter()
                    .enumerate()
                    .map(|(j, &x)| x * Complex64::from_polar(1.0, -2.0 * PI * (j * k) as f64 / m as f64))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn eigenvalue_examples() {
        let e = dft_eigs(1);
        assert!((e[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((e[1] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let e = dft_eigs(2);
        assert_eq!(e[0].re, 2.0);
        assert_eq!(e[2].norm(), 0.0);
        assert!((e[1].norm() - 2f64.sqrt()).abs() < 1e-14 && (e[3].norm() - 2f64.sqrt()).abs() < 1e-14);
        for n in [1, 3, 8, 13] {
            let spec = CirculantSpec::new(n).unwrap();
            let direct = direct_dft(&spec.v);
            for (a, b) in spec.sigma_eigs.iter().zip(&direct) {
                assert!((a - b).norm() < 1e-10);
            }
            let l1: f64 = direct.iter().map(|z| z.norm()).sum();
            assert!((l1 - spec.l1_norm()).abs() < 1e-9);
        }
    }

    #[test]
    fn mse_formulas() {
        assert!((mse_analytic(1, 1.0, 1.0) - 2.0).abs() < 1e-14);
        let lb = (2.0 + 3f64.ln() / 2.0).powi(2) / (2.0 * PI * PI);
        assert!((mse_lower_bound(1, 1.0) - lb).abs() < 1e-14);
        assert!(mse_analytic(64, 2.0, 1.0) < mse_analytic(64, 1.0, 1.0));
    }

    #[test]
    fn circulant_top_left_is_prefix() {
        let spec = CirculantSpec::new(5).unwrap();
        let c = spec.circulant();
        let s = prefix_workload(5);
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(c[(i, j)], s[(i, j)]);
            }
        }
    }

    #[test]
    fn real_factorization() {
        for n in [1, 2, 7, 16] {
            let c = real_fft_encoder(n).unwrap();
            let b = fft_decoder(n).unwrap();
            assert_eq!(c.shape(), (2 * n, n));
            assert!(b.matmul(&c).rel_error(&prefix_workload(n)) < 1e-12);
        }
        let c = real_fft_encoder(1).unwrap();
        // sqrt of diag(1, 1) is the identity, so C_F = E.
        assert!((c[(0, 0)] - 1.0).abs() < 1e-15 && c[(1, 0)].abs() < 1e-15);
    }

    #[test]
    fn fast_products_match_dense() {
        let n = 9;
        let mech = FftMechanism::new(n).unwrap();
        let c = real_fft_encoder(n).unwrap();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let y: Vec<f64> = (0..2 * n).map(|i| (i as f64 * 0.3).cos()).collect();
        let cx = c.matvec(&x);
        for (a, b) in mech.encode(&x).unwrap().iter().zip(&cx) {
            assert!((a - b).abs() < 1e-12);
        }
        let cty = c.t_matvec(&y);
        for (a, b) in mech.encode_transpose(&y).unwrap().iter().zip(&cty) {
            assert!((a - b).abs() < 1e-12);
        }
        let g = c.gram();
        for (j, t) in mech.gram_first_col().iter().enumerate() {
            assert!((g[(j, 0)] - t).abs() < 1e-12);
        }
    }

    #[test]
    fn release_without_noise_is_exact() {
        let x = [0.5, -1.0, 1.0, 0.25];
        let out = fft_prefix_release(&x, f64::INFINITY, 1.0, 3).unwrap();
        assert_eq!(out, vec![0.5, -0.5, 0.5, 0.75]);
        assert!(fft_prefix_release(&x, 0.0, 1.0, 3).is_err());
    }

    #[test]
    fn optimal_decode_small() {
        let n = 6;
        let dense = fft_optimal_decoder_dense(n).unwrap();
        let y: Vec<f64> = (0..2 * n).map(|i| ((i * i) as f64).sin()).collect();
        let fast = fft_optimal_decode(&y, n).unwrap();
        let want = dense.matvec(&y);
        for (a, b) in fast.iter().zip(&want) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(fft_optimal_decode(&vec![0.0; 2 * n], n).unwrap().iter().all(|v| *v == 0.0));
    }
}
