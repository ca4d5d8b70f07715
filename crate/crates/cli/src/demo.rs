//! Private mean estimation with correlated noise.
//!
//! The dataset is split into `b` fixed batches that are visited in the same order in
//! each of `k` epochs. Every step clips the examples of its batch to norm `zeta`,
//! averages them, and the model follows `theta_t = (1/b) sum_{s<=t} g_s`, so after
//! each epoch `theta` advances by the dataset mean. The private run releases the
//! gradient prefix sums through a unit-sensitivity factorization `(B, C)` with noise
//! `zeta sigma B z / batch` and `sigma = 1 / sqrt(2 rho)`.

use mfdp::mechlab::{fill_normals, normalize, sample_noise, sigma_for_zcdp};
use mfdp::optfact::{solve, ConstraintMode, Factorization, SolveOptions};
use mfdp::participation::{make_schema, ParticipationSchema, SensMethod};
use mfdp::treestamp::{online_honaker_decoder, tree_encoder};
use mfdp::workloads::prefix_workload;
use mfdp::{Error, Matrix, Result};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq)]
pub struct DemoConfig {
    pub n: usize,
    pub k: usize,
    pub b: usize,
    pub dim: usize,
    pub batch: usize,
    pub zeta: f64,
    pub rho: f64,
    pub seeds: usize,
    pub seed: u64,
    pub mechanisms: Vec<String>,
}

impl DemoConfig {
    pub fn validate(&self) -> Result<ParticipationSchema> {
        if self.dim == 0 || self.batch == 0 || self.seeds == 0 {
            return Err(Error::InvalidArgument("dim, batch and seeds must be positive".into()));
        }
        if !(self.zeta > 0.0) || !(self.rho > 0.0) {
            return Err(Error::InvalidArgument("zeta and rho must be positive".into()));
        }
        make_schema(self.n, self.k, self.b)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoMetrics {
    pub mechanism: String,
    /// `sens^2 ‖B‖_F^2` of the normalized factorization.
    pub loss: f64,
    /// Mean over seeds of `‖theta_t - theta*_t‖^2` per step.
    pub per_step_error: Vec<f64>,
    /// Mean over seeds of the per-coordinate squared error averaged over steps.
    pub final_mse: f64,
    /// Standard error of `final_mse` across seeds.
    pub final_mse_se: f64,
    /// Per-seed values behind `final_mse`.
    pub per_seed_mse: Vec<f64>,
}

/// Fixed dataset of `b * batch` examples in `dim` dimensions.
pub fn dataset(cfg: &DemoConfig) -> Matrix {
    let m = cfg.b * cfg.batch;
    let mut data = Matrix::zeros(m, cfg.dim);
    for i in 0..m {
        // Rows of the data generator live far away from the noise streams.
        fill_normals(cfg.seed, (1u64 << 40) + i as u64, data.row_mut(i));
        data.row_mut(i).iter_mut().for_each(|v| *v = 0.5 + 0.4 * *v);
    }
    data
}

/// Per-step averages of clipped examples, `n x dim`.
pub fn clipped_batch_means(cfg: &DemoConfig, data: &Matrix) -> Matrix {
    let mut g = Matrix::zeros(cfg.n, cfg.dim);
    for t in 0..cfg.n {
        let batch = t % cfg.b;
        let row = g.row_mut(t);
        for e in batch * cfg.batch..(batch + 1) * cfg.batch {
            let x = data.row(e);
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = if norm > cfg.zeta { cfg.zeta / norm } else { 1.0 };
            for (r, v) in row.iter_mut().zip(x) {
                *r += scale * v / cfg.batch as f64;
            }
        }
    }
    g
}

/// Noise-free trajectory `theta_t`, `n x dim`.
pub fn exact_trajectory(cfg: &DemoConfig, g: &Matrix) -> Matrix {
    g.cumsum_rows().scale(1.0 / cfg.b as f64)
}

/// Unit-sensitivity factorization of the prefix workload for a named mechanism.
pub fn mechanism(name: &str, schema: &ParticipationSchema) -> Result<Factorization> {
    let n = schema.n;
    let a = prefix_workload(n);
    let f = match name {
        "optimal" => solve(&a, schema, ConstraintMode::PairwiseNonneg, &SolveOptions::default())?.0,
        "honaker" => {
            let (spec, _) = tree_encoder(n)?;
            Factorization::new(online_honaker_decoder(n, true)?, spec.embedded(), schema.clone(), SensMethod::Nonneg)?
        }
        "independent" => Factorization::new(a, Matrix::identity(n), schema.clone(), SensMethod::Nonneg)?,
        other => return Err(Error::InvalidArgument(format!("unknown mechanism `{other}`"))),
    };
    normalize(&f)
}

/// Runs every requested mechanism over `cfg.seeds` noise seeds.
pub fn demo_train(cfg: &DemoConfig) -> Result<Vec<DemoMetrics>> {
    demo_train_with_sigma(cfg, sigma_for_zcdp(1.0, cfg.rho)?)
}

/// Same as [`demo_train`] with an explicit noise multiplier (0 disables noise).
pub fn demo_train_with_sigma(cfg: &DemoConfig, sigma: f64) -> Result<Vec<DemoMetrics>> {
    let schema = cfg.validate()?;
    let data = dataset(cfg);
    let g = clipped_batch_means(cfg, &data);
    let exact = exact_trajectory(cfg, &g);
    let scale = cfg.zeta / (cfg.batch as f64 * cfg.b as f64);
    let mut out = Vec::new();
    for name in &cfg.mechanisms {
        let f = mechanism(name, &schema)?;
        let mut per_step = vec![0.0; cfg.n];
        let mut per_seed = Vec::with_capacity(cfg.seeds);
        for j in 0..cfg.seeds {
            let z = sample_noise(&f.b, cfg.dim, sigma, cfg.seed.wrapping_add(j as u64))?;
            let mut total = 0.0;
            for t in 0..cfg.n {
                let err: f64 = (0..cfg.dim)
                    .map(|c| {
                        let private = exact[(t, c)] + scale * z[(t, c)];
                        (private - exact[(t, c)]).powi(2)
                    })
                    .sum();
                per_step[t] += err / cfg.seeds as f64;
                total += err;
            }
            per_seed.push(total / (cfg.n * cfg.dim) as f64);
        }
        let mean = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
        let var = per_seed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (per_seed.len().max(2) - 1) as f64;
        out.push(DemoMetrics {
            mechanism: name.clone(),
            loss: f.loss(),
            per_step_error: per_step,
            final_mse: mean,
            final_mse_se: (var / per_seed.len() as f64).sqrt(),
            per_seed_mse: per_seed,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> DemoConfig {
        DemoConfig {
            n: 12,
            k: 3,
            b: 4,
            dim: 3,
            batch: 2,
            zeta: 1.0,
            rho: 1.0,
            seeds: 3,
            seed: 5,
            mechanisms: vec!["honaker".into(), "independent".into()],
        }
    }

    #[test]
    fn zero_noise_tracks_running_mean() {
        let c = cfg();
        let m = demo_train_with_sigma(&c, 0.0).unwrap();
        assert!(m.iter().all(|r| r.final_mse == 0.0));
        let data = dataset(&c);
        let g = clipped_batch_means(&c, &data);
        let theta = exact_trajectory(&c, &g);
        // theta_t * b / (t + 1) is the running mean of the batch means seen so far.
        for t in 0..c.n {
            let seen: Vec<usize> = (0..=t).collect();
            for d in 0..c.dim {
                let mean = seen.iter().map(|&s| g[(s, d)]).sum::<f64>() / (t + 1) as f64;
                assert!((theta[(t, d)] * c.b as f64 / (t + 1) as f64 - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_schedule() {
        let mut c = cfg();
        c.b = 5;
        assert!(demo_train(&c).is_err());
    }
}
