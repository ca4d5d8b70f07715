//! Acceptance suite. Prints one PASS/FAIL line per criterion and asserts every
//! criterion except the known-unattainable Monte Carlo match against the closed-form
//! upper bound.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use mfdp::fftmech::{
    fft_decoder, fft_optimal_decoder_dense, fft_release_mse_monte_carlo, mse_analytic, mse_lower_bound,
    mse_real_part, real_fft_encoder, FftOptimalDecoder,
};
use mfdp::optfact::{solve, ConstraintMode, SolveOptions};
use mfdp::participation::{make_schema, sens_brute, sens_nonneg_fastpath, sens_upper, vector_sens_check};
use mfdp::treestamp::{build_stamped, online_honaker_decoder, optimal_tree_decoder, tree_encoder, Family};
use mfdp::workloads::{momentum_workload, prefix_workload};
use mfdp::{Execution, Matrix, ParticipationSchema};
use mfdp_cli::demo::{demo_train, DemoConfig};
use mfdp_cli::report::{report_table1, report_table3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Outcome {
    failures: Vec<String>,
}

impl Outcome {
    fn record(&mut self, name: &str, pass: bool, detail: String, enforced: bool) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass && enforced {
            self.failures.push(name.to_string());
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn table3(out: &mut Outcome) {
    let rows = report_table3(6, 3, 2, 0.95, 1e-6).unwrap();
    let expected = [6.461, 6.461, 6.461, 16.114, 16.131, 16.134];
    let tol = [0.005, 0.005, 0.005, 0.02, 0.02, 0.02];
    let mut pass = rows.len() == 6;
    let mut worst: f64 = 0.0;
    for ((r, e), t) in rows.iter().zip(expected).zip(tol) {
        worst = worst.max((r.root_loss - e).abs() / t);
        pass &= (r.root_loss - e).abs() <= t;
    }
    let full_min = rows[3].min_x_entry;
    let pair_min = rows[4].min_pair_entry;
    pass &= (full_min - -0.031).abs() <= 0.0015 && pair_min >= -1e-3;
    let losses: Vec<String> = rows.iter().map(|r| format!("{:.3}", r.root_loss)).collect();
    out.record(
        "1 small optimal factorizations",
        pass,
        format!(
            "root losses [{}], worst/tol {worst:.2}, full-corner min X {full_min:.4}, pairwise min on pairs {pair_min:.1e}",
            losses.join(", ")
        ),
        true,
    );
}

fn counterexample(out: &mut Outcome) {
    let c = Matrix::from_rows(&[[2.0, 1.0, 1.0], [1.0, 2.0, -1.0], [1.0, -1.0, 2.0]])
        .unwrap()
        .scale(1.0 / 24f64.sqrt());
    let g = Matrix::from_rows(&[[2.0, 1.0], [2.0, -1.0], [1.0, 2.0]]).unwrap().scale(1.0 / 5f64.sqrt());
    let scalar = sens_brute(&c, &ParticipationSchema::every_step(3)).unwrap();
    let vector = vector_sens_check(&c, &g).unwrap();
    let pass = (scalar - 1.0).abs() <= 1e-9 && (vector - 1.1f64.sqrt()).abs() <= 1e-9;
    out.record("2 vector counterexample", pass, format!("scalar {scalar:.12}, vector {vector:.12}"), true);
}

fn table1(out: &mut Outcome) {
    let families = [Family::OnlineHonaker, Family::OptimalHonaker, Family::Fft, Family::FftOptimal];
    let stamps = [1, 2, 5, 10, 20];
    let expected = [
        [5.8e6, 3.3e6, 2.1e6, 2.0e6, 2.1e6],
        [2.4e6, 1.6e6, 1.2e6, 1.4e6, 1.8e6],
        [2.3e6, 1.8e6, 1.6e6, 1.9e6, 2.5e6],
        [2.2e6, 1.5e6, 1.1e6, 1.2e6, 1.7e6],
    ];
    let argmins = [10, 5, 5, 5];
    let rows = report_table1(2000, 20, 100, &families, &stamps).unwrap();
    let mut pass = rows.len() == 20;
    let mut worst: f64 = 0.0;
    for (f, family) in families.iter().enumerate() {
        let fam = &rows[f * 5..f * 5 + 5];
        for (r, e) in fam.iter().zip(expected[f]) {
            worst = worst.max(rel(r.loss, e));
            pass &= rel(r.loss, e) <= 0.05;
        }
        let best = fam.iter().min_by(|a, b| a.loss.total_cmp(&b.loss)).unwrap().stamps;
        if best != argmins[f] {
            println!("  {family}: best stamp count {best}, expected {}", argmins[f]);
            pass = false;
        }
    }
    out.record(
        "3 stamped prefix-sum losses",
        pass,
        format!("20 rows, worst relative deviation {:.2}%, argmins match: {pass}", 100.0 * worst),
        true,
    );
}

fn duality(out: &mut Outcome) {
    let opts = SolveOptions { gap_tol: 1e-9, ..Default::default() };
    let mut worst_gap: f64 = 0.0;
    let mut worst_kkt: f64 = 0.0;
    let mut certified = true;
    let mut cases = 0;
    for n in [6, 12, 24] {
        for k in [2, 3] {
            let schema = make_schema(n, k, n / k).unwrap();
            for a in [prefix_workload(n), momentum_workload(n, 0.95).unwrap()] {
                for mode in ConstraintMode::ALL {
                    let (_, st) = solve(&a, &schema, mode, &opts).unwrap();
                    worst_gap = worst_gap.max(st.rel_gap);
                    worst_kkt = worst_kkt.max(st.kkt_residual);
                    certified &= st.dual_value <= st.primal_value;
                    cases += 1;
                }
            }
        }
    }
    let pass = worst_gap <= 1e-4 && worst_kkt <= 1e-6 && certified;
    out.record(
        "4 duality certificates",
        pass,
        format!("{cases} solves, max relative gap {worst_gap:.1e}, max KKT residual {worst_kkt:.1e}"),
        true,
    );
}

fn fft_consistency(out: &mut Outcome) {
    let (rho, kappa) = (1.0, 1.0);
    let mut z_upper: f64 = 0.0;
    let mut z_exact: f64 = 0.0;
    let mut ratio_upper: f64 = 0.0;
    for n in [8, 64, 512] {
        let mc = fft_release_mse_monte_carlo(n, rho, kappa, 10_000, 7, Execution::default()).unwrap();
        z_upper = z_upper.max(mc.z_score(mse_analytic(n, rho, kappa)));
        z_exact = z_exact.max(mc.z_score(mse_real_part(n, rho, kappa)));
        ratio_upper = ratio_upper.max(mse_analytic(n, rho, kappa) / mc.mean);
    }
    out.record(
        "5a Monte Carlo vs closed-form upper bound",
        z_upper <= 3.0,
        format!("max |z| {z_upper:.1}; the bound exceeds the measured MSE by up to {ratio_upper:.2}x (not enforced)"),
        false,
    );
    out.record(
        "5b Monte Carlo vs exact real-part MSE",
        z_exact <= 3.0,
        format!("max |z| {z_exact:.2} at n = 8, 64, 512 with 10^4 trials"),
        true,
    );
    let mut worst_analytic: f64 = 0.0;
    let mut worst_empirical: f64 = 0.0;
    let mut n = 16;
    while n <= 4096 {
        let lb = mse_lower_bound(n, rho);
        worst_analytic = worst_analytic.max(mse_analytic(n, rho, kappa) / lb);
        let mc = fft_release_mse_monte_carlo(n, rho, kappa, 2_000, 9, Execution::default()).unwrap();
        worst_empirical = worst_empirical.max(mc.mean / lb);
        n *= 2;
    }
    out.record(
        "5c ratios to the lower bound",
        worst_analytic <= 7.0 && worst_empirical <= 1.3,
        format!("n = 16..4096: closed form / bound <= {worst_analytic:.3}, empirical / bound <= {worst_empirical:.3}"),
        true,
    );
}

fn fft_fast_decoder(out: &mut Outcome) {
    let mut worst: f64 = 0.0;
    for n in [16, 64, 256, 512] {
        let y: Vec<f64> = (0..2 * n).map(|i| ((i * 37 % 101) as f64 / 50.0 - 1.0) * (1.0 + (i % 3) as f64)).collect();
        let dense = fft_optimal_decoder_dense(n).unwrap().matvec(&y);
        let fast = FftOptimalDecoder::new(n).unwrap().decode(&y).unwrap();
        let num: f64 = dense.iter().zip(&fast).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = dense.iter().map(|a| a * a).sum::<f64>().sqrt();
        worst = worst.max(num / den);
    }
    let time = |n: usize| {
        let dec = FftOptimalDecoder::new(n).unwrap();
        let y: Vec<f64> = (0..2 * n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut best = f64::INFINITY;
        for _ in 0..7 {
            let t = Instant::now();
            std::hint::black_box(dec.decode(std::hint::black_box(&y)).unwrap());
            best = best.min(t.elapsed().as_secs_f64());
        }
        best
    };
    let ratio = time(4096) / time(1024);
    out.record(
        "6 fast optimal FFT decoder",
        worst <= 1e-6 && ratio <= 10.0,
        format!("max relative error {worst:.1e} at n = 16..512, time(4096)/time(1024) = {ratio:.2}"),
        true,
    );
}

fn sensitivity_suite(out: &mut Outcome) {
    let mut rng = StdRng::seed_from_u64(2024);
    let mut random_matrix = |rows: usize, cols: usize, lo: f64| {
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(lo..1.0))
    };
    let mut fast_ok = true;
    let mut upper_ok = true;
    for t in 0..200 {
        let k = 1 + t % 4;
        let b = 1 + (t / 4) % 4;
        let n = k * b;
        let schema = make_schema(n, k, b).unwrap();
        let c = random_matrix(n + 1, n, 0.0);
        let brute = sens_brute(&c, &schema).unwrap();
        fast_ok &= (sens_nonneg_fastpath(&c, &schema).unwrap() - brute).abs() <= 1e-10 * brute.max(1.0);
        let signed = random_matrix(n + 1, n, -1.0);
        upper_ok &= sens_upper(&signed, &schema) >= sens_brute(&signed, &schema).unwrap() * (1.0 - 1e-12);
    }
    let n16 = ParticipationSchema::every_step(16);
    let big = random_matrix(18, 16, 0.0);
    fast_ok &= (sens_nonneg_fastpath(&big, &n16).unwrap() - sens_brute(&big, &n16).unwrap()).abs() <= 1e-10;

    let mut rng = StdRng::seed_from_u64(99);
    let mut unit_rows = |m: usize, d: usize| {
        let mut g = Matrix::from_fn(m, d, |_, _| rng.random_range(-1.0..1.0));
        for i in 0..m {
            let norm = g.row(i).iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            g.row_mut(i).iter_mut().for_each(|v| *v /= norm);
        }
        g
    };
    let mut rng_c = StdRng::seed_from_u64(5);
    let mut draw_c = |rows: usize, cols: usize, lo: f64| Matrix::from_fn(rows, cols, |_, _| rng_c.random_range(lo..1.0));
    let holds = |c: &Matrix, g: &Matrix| {
        let scalar = sens_brute(c, &ParticipationSchema::every_step(c.cols())).unwrap();
        vector_sens_check(c, g).unwrap() <= scalar * (1.0 + 1e-12)
    };
    let (mut small_k, mut nonneg, mut colinear, mut orthogonal) = (0, 0, 0, 0);
    for t in 0..500 {
        let k = 1 + t % 2;
        small_k += holds(&draw_c(4, k, -1.0), &unit_rows(k, 3)) as usize;
        nonneg += holds(&draw_c(5, 4, 0.0), &unit_rows(4, 3)) as usize;
        let dir = unit_rows(1, 3);
        let dn = dir.row(0).iter().map(|v| v * v).sum::<f64>().sqrt();
        let w = unit_rows(4, 1);
        let g = Matrix::from_fn(4, 3, |i, j| w[(i, 0)] * dir[(0, j)] / dn);
        colinear += holds(&draw_c(5, 4, -1.0), &g) as usize;
        let q = orthonormal(&unit_rows(3, 3));
        let w = unit_rows(3, 1);
        let g = Matrix::from_fn(3, 3, |i, j| w[(i, 0)] * q[(i, j)]);
        orthogonal += holds(&draw_c(5, 3, -1.0), &g) as usize;
    }
    let mut half_pi = 0;
    for _ in 0..1000 {
        let c = draw_c(6, 5, -1.0);
        let scalar = sens_brute(&c, &ParticipationSchema::every_step(5)).unwrap();
        let v = vector_sens_check(&c.scale(1.0 / scalar), &unit_rows(5, 4)).unwrap();
        half_pi += (v <= std::f64::consts::FRAC_PI_2) as usize;
    }
    let pass = fast_ok && upper_ok && [small_k, nonneg, colinear, orthogonal] == [500; 4] && half_pi == 1000;
    out.record(
        "7 sensitivity oracles",
        pass,
        format!(
            "fast path = brute on 201 instances: {fast_ok}, upper >= brute: {upper_ok}, reductions {small_k}/{nonneg}/{colinear}/{orthogonal} of 500, half-pi bound {half_pi}/1000"
        ),
        true,
    );
}

fn orthonormal(m: &Matrix) -> Matrix {
    let mut q = m.clone();
    for i in 0..q.rows() {
        for j in 0..i {
            let p: f64 = (0..q.cols()).map(|t| q[(i, t)] * q[(j, t)]).sum();
            for t in 0..q.cols() {
                q[(i, t)] -= p * q[(j, t)];
            }
        }
        let norm = q.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        q.row_mut(i).iter_mut().for_each(|v| *v /= norm);
    }
    q
}

fn reconstruction(out: &mut Outcome) {
    let mut worst: f64 = 0.0;
    let mut check = |b: &Matrix, c: &Matrix, a: &Matrix| worst = worst.max(b.matmul(c).sub(a).frobenius_norm() / a.frobenius_norm());
    for n in [6, 12] {
        let schema = make_schema(n, 3, n / 3).unwrap();
        for a in [prefix_workload(n), momentum_workload(n, 0.95).unwrap()] {
            for mode in ConstraintMode::ALL {
                let (f, _) = solve(&a, &schema, mode, &SolveOptions::default()).unwrap();
                check(&f.b, &f.c, &a);
            }
        }
    }
    for n in [1, 5, 16, 33] {
        let s = prefix_workload(n);
        let (spec, _) = tree_encoder(n).unwrap();
        check(&online_honaker_decoder(n, true).unwrap(), &spec.embedded(), &s);
        check(&online_honaker_decoder(n, false).unwrap(), &spec.embedded(), &s);
        check(&optimal_tree_decoder(n).unwrap(), &spec.embedded(), &s);
        check(&fft_decoder(n).unwrap(), &real_fft_encoder(n).unwrap(), &s);
        check(&fft_optimal_decoder_dense(n).unwrap(), &real_fft_encoder(n).unwrap(), &s);
    }
    for family in Family::ALL {
        let m = build_stamped(family, 8, 3).unwrap();
        check(&m.b, &m.c, &prefix_workload(24));
    }
    let pass_rec = worst <= 1e-8;

    let dir = tempfile::tempdir().unwrap();
    let commands: Vec<Vec<String>> = vec![
        vec!["workload", "--n", "12", "--workload", "momentum-cooldown"],
        vec!["factorize", "--n", "6", "--k", "3", "--workload", "momentum"],
        vec!["tree", "--n", "11", "--format", "csv"],
        vec!["fft", "--n", "32", "--seed", "4"],
        vec!["fft", "--n", "16", "--emit", "encoder"],
        vec!["fft", "--n", "64", "--emit", "mse-table"],
        vec!["noise", "--decoder", "RUN/B.mat64", "--dim", "3", "--seed", "8"],
        vec!["sweep-stamps", "--n", "40", "--k", "2", "--stamps", "1,2,4"],
        vec!["repro-table3"],
        vec!["demo-train", "--n", "12", "--k", "3", "--seeds", "4"],
        vec!["account", "--sigma", "1.5"],
    ]
    .into_iter()
    .map(|c| c.into_iter().map(String::from).collect())
    .collect();
    let run_all = |root: &Path| -> Vec<(String, Vec<u8>)> {
        let mut files = Vec::new();
        for (i, cmd) in commands.iter().enumerate() {
            let out_dir = root.join(format!("c{i}"));
            let args: Vec<String> =
                cmd.iter().map(|a| a.replace("RUN", &root.join("c1").display().to_string())).collect();
            let mut full = args.clone();
            if cmd[0] != "account" {
                full.extend(["--out-dir".to_string(), out_dir.display().to_string()]);
            }
            let output = Command::new(env!("CARGO_BIN_EXE_mfdp")).args(&full).output().unwrap();
            assert!(output.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&output.stderr));
            let stdout = String::from_utf8(output.stdout).unwrap().replace(&root.display().to_string(), "ROOT");
            files.push((format!("{i}:stdout"), stdout.into_bytes()));
            if out_dir.exists() {
                let mut entries: Vec<_> = std::fs::read_dir(&out_dir).unwrap().map(|e| e.unwrap().path()).collect();
                entries.sort();
                for p in entries {
                    files.push((format!("{i}:{}", p.file_name().unwrap().to_string_lossy()), std::fs::read(&p).unwrap()));
                }
            }
        }
        files
    };
    let first = run_all(&dir.path().join("a"));
    let second = run_all(&dir.path().join("b"));
    let identical = first == second;
    out.record(
        "8 reconstruction and determinism",
        pass_rec && identical,
        format!("max relative reconstruction error {worst:.1e}; {} CLI outputs byte-identical across reruns: {identical}", first.len()),
        true,
    );
}

fn demo_ordering(out: &mut Outcome) {
    let cfg = DemoConfig {
        n: 64,
        k: 4,
        b: 16,
        dim: 8,
        batch: 4,
        zeta: 1.0,
        rho: 1.0,
        seeds: 50,
        seed: 0,
        mechanisms: vec!["optimal".into(), "honaker".into(), "independent".into()],
    };
    let m = demo_train(&cfg).unwrap();
    // One-sided paired test at 95% over the shared noise seeds.
    let better = |lo: &[f64], hi: &[f64]| {
        let d: Vec<f64> = hi.iter().zip(lo).map(|(h, l)| h - l).collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
        mean / (var / d.len() as f64).sqrt()
    };
    let t1 = better(&m[0].per_seed_mse, &m[1].per_seed_mse);
    let t2 = better(&m[1].per_seed_mse, &m[2].per_seed_mse);
    let crit = 1.677;
    out.record(
        "demo ordering optimal < honaker < independent",
        t1 > crit && t2 > crit,
        format!(
            "final MSE {:.2e} / {:.2e} / {:.2e}, paired t {t1:.1} and {t2:.1} (critical {crit})",
            m[0].final_mse, m[1].final_mse, m[2].final_mse
        ),
        true,
    );
}

#[test]
fn acceptance() {
    let mut out = Outcome { failures: Vec::new() };
    table3(&mut out);
    counterexample(&mut out);
    table1(&mut out);
    duality(&mut out);
    fft_consistency(&mut out);
    fft_fast_decoder(&mut out);
    sensitivity_suite(&mut out);
    reconstruction(&mut out);
    demo_ordering(&mut out);
    assert!(out.failures.is_empty(), "failed criteria: {:?}", out.failures);
}
