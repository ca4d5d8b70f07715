//! Command implementations behind the `mfdp` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod demo;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};

use mfdp::fftmech::{
    fft_decoder, fft_optimal_decoder_dense, fft_prefix_release, mse_table, real_fft_encoder,
};
use mfdp::mechlab::{
    matrix_to_csv, read_mat64, sample_noise, sigma_for_zcdp, write_mat64, zcdp, zcdp_to_epsilon, LossRow,
    MechanismReport,
};
use mfdp::optfact::{solve, ConstraintMode, Factorization, SolveOptions};
use mfdp::participation::{make_schema, sensitivity, ParticipationSchema, SensMethod};
use mfdp::treestamp::{online_honaker_decoder, optimal_tree_decoder, tree_encoder, Family};
use mfdp::workloads::{WorkloadKind, WorkloadSpec};
use mfdp::{Error, Matrix};
use serde::Serialize;
use serde_json::json;

use args::{Cli, Command, FftEmit, Format, Output, SchemaArgs, WorkloadArgs};

/// Failure classes mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or inputs; exit code 2.
    Usage(String),
    /// Numerical or I/O failure; exit code 1.
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Failure(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Contract(_)
            | Error::InvalidSchema(_)
            | Error::InvalidArgument(_)
            | Error::UnsupportedWorkload(_)
            | Error::TooLarge { .. }
            | Error::Format(_) => CliError::Usage(e.to_string()),
            _ => CliError::Failure(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> CliResult<T> {
    s.parse::<T>().map_err(CliError::from)
}

fn schema_for(n: usize, args: &SchemaArgs) -> CliResult<ParticipationSchema> {
    schema_from(n, args.k, args.b)
}

fn schema_from(n: usize, k: usize, b: Option<usize>) -> CliResult<ParticipationSchema> {
    if k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    let b = b.unwrap_or(n / k);
    Ok(make_schema(n, k, b)?)
}

fn workload_spec(w: &WorkloadArgs) -> CliResult<WorkloadSpec> {
    let kind: WorkloadKind = parse(&w.workload)?;
    let spec = WorkloadSpec {
        n: w.n,
        kind,
        beta: if kind == WorkloadKind::Prefix { 0.0 } else { w.beta },
        cooldown_fraction: w.cooldown_fraction,
        cooldown_floor: w.cooldown_floor,
    };
    spec.validate()?;
    Ok(spec)
}

fn prepare(out: &Output) -> CliResult<()> {
    fs::create_dir_all(&out.out_dir)?;
    Ok(())
}

/// Writes `m` as `<stem>.mat64` or `<stem>.csv` and returns the path.
fn write_matrix(out: &Output, stem: &str, m: &Matrix) -> CliResult<PathBuf> {
    prepare(out)?;
    let path = match out.format {
        Format::Mat64 => {
            let p = out.out_dir.join(format!("{stem}.mat64"));
            write_mat64(&p, m)?;
            p
        }
        Format::Csv => {
            let p = out.out_dir.join(format!("{stem}.csv"));
            fs::write(&p, matrix_to_csv(m))?;
            p
        }
    };
    Ok(path)
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Failure(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn read_matrix(path: &Path) -> CliResult<Matrix> {
    read_mat64(path).map_err(|e| match e {
        Error::Io(io) => usage(format!("cannot read {}: {io}", path.display())),
        other => other.into(),
    })
}

fn families(names: &[String]) -> CliResult<Vec<Family>> {
    names.iter().map(|s| parse::<Family>(s)).collect()
}

fn write_loss_table(path: &Path, rows: &[LossRow]) -> CliResult<()> {
    write_rows(path, rows)
}

/// Runs one parsed command.
pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Workload { workload, output } => {
            let spec = workload_spec(&workload)?;
            let a = spec.build()?;
            let path = write_matrix(&output, "workload", &a)?;
            print_json(&json!({ "workload": spec, "path": path }));
        }
        Command::Sensitivity { input, schema, method } => {
            let c = read_matrix(&input)?;
            let schema = schema_for(c.cols(), &schema)?;
            let s = sensitivity(&c, &schema, parse::<SensMethod>(&method)?)?;
            print_json(&json!({ "sensitivity": s.value, "method": s.method, "pattern": s.pattern, "signs": s.signs }));
        }
        Command::Factorize { workload, schema, mode, gap_tol, max_iter, output } => {
            let spec = workload_spec(&workload)?;
            let a = spec.build()?;
            let schema = schema_for(spec.n, &schema)?;
            let mode: ConstraintMode = parse(&mode)?;
            let opts = SolveOptions { gap_tol, max_iter, ..Default::default() };
            let (f, st) = match solve(&a, &schema, mode, &opts) {
                Ok(r) => r,
                Err(Error::NotConverged(st)) => {
                    prepare(&output)?;
                    write_json(&output.out_dir.join("diagnostics.json"), &json!({ "converged": false, "state": st }))?;
                    return Err(CliError::Failure(format!("no convergence: relative gap {:e}", st.rel_gap)));
                }
                Err(e) => return Err(e.into()),
            };
            write_matrix(&output, "B", &f.b)?;
            write_matrix(&output, "C", &f.c)?;
            let diag = json!({
                "workload": spec,
                "k": schema.k,
                "b": schema.b,
                "mode": mode,
                "dual_value": st.dual_value,
                "primal_value": st.primal_value,
                "rel_gap": st.rel_gap,
                "iterations": st.iterations,
                "kkt_residual": st.kkt_residual,
                "min_x_entry": st.min_x_entry,
                "min_pair_entry": st.min_pair_entry,
                "sensitivity": f.sens,
                "sens_method": f.sens_method,
                "loss": f.loss(),
                "root_loss": f.loss().sqrt(),
            });
            write_json(&output.out_dir.join("diagnostics.json"), &diag)?;
            print_json(&diag);
        }
        Command::Loss { decoder, encoder, schema, method, sigma, delta } => {
            let b = read_matrix(&decoder)?;
            let c = read_matrix(&encoder)?;
            let schema = schema_for(c.cols(), &schema)?;
            let f = Factorization::new(b, c, schema, parse(&method)?)?;
            let report = MechanismReport::new("input", &f, sigma, delta)?;
            print_json(&serde_json::to_value(report).expect("serializable"));
        }
        Command::SweepStamps { families: names, n, k, b, stamps, output } => {
            let b = b.unwrap_or(n / k.max(1));
            let rows = report::report_table1(n, k, b, &families(&names)?, &stamps)?;
            prepare(&output)?;
            write_loss_table(&output.out_dir.join("sweep.csv"), &rows)?;
            print_argmins(&rows);
        }
        Command::Fft { n, rho, kappa, seed, emit, input, output } => fft_command(n, rho, kappa, seed, emit, input, &output)?,
        Command::Tree { n, no_completion, output } => {
            let (spec, _) = tree_encoder(n)?;
            write_matrix(&output, "tree_encoder", &spec.embedded())?;
            write_matrix(&output, "online_decoder", &online_honaker_decoder(n, !no_completion)?)?;
            write_matrix(&output, "optimal_decoder", &optimal_tree_decoder(n)?)?;
            print_json(&json!({ "n": n, "leaves": spec.leaves, "nodes": spec.node_count }));
        }
        Command::Noise { decoder, dim, sigma, seed, output } => {
            let b = read_matrix(&decoder)?;
            let z = sample_noise(&b, dim, sigma, seed)?;
            let path = write_matrix(&output, "noise", &z)?;
            print_json(&json!({ "rows": z.rows(), "cols": z.cols(), "path": path }));
        }
        Command::Account { sens, sigma, rho, delta } => {
            let (sigma, rho) = match (sigma, rho) {
                (Some(s), None) => (s, zcdp(sens, s)?),
                (None, Some(r)) => (sigma_for_zcdp(sens, r)?, r),
                _ => return Err(usage("give exactly one of --sigma and --rho")),
            };
            print_json(&json!({
                "sens": sens,
                "sigma": sigma,
                "rho": rho,
                "delta": delta,
                "epsilon": zcdp_to_epsilon(rho, delta)?,
            }));
        }
        Command::DemoTrain { n, k, b, dim, batch, zeta, rho, seeds, seed, mechanisms, output } => {
            let cfg = demo::DemoConfig {
                n,
                k,
                b: b.unwrap_or(n / k.max(1)),
                dim,
                batch,
                zeta,
                rho,
                seeds,
                seed,
                mechanisms,
            };
            let metrics = demo::demo_train(&cfg)?;
            prepare(&output)?;
            let summary: Vec<_> = metrics
                .iter()
                .map(|m| json!({ "mechanism": m.mechanism, "loss": m.loss, "final_mse": m.final_mse, "final_mse_se": m.final_mse_se }))
                .collect();
            write_json(&output.out_dir.join("demo_train.json"), &serde_json::to_value(&metrics).expect("serializable"))?;
            print_json(&json!(summary));
        }
        Command::ReproTable1 { n, k, b, stamps, families: names, output } => {
            let b = b.unwrap_or(n / k.max(1));
            let rows = report::report_table1(n, k, b, &families(&names)?, &stamps)?;
            prepare(&output)?;
            write_loss_table(&output.out_dir.join("table1.csv"), &rows)?;
            print_argmins(&rows);
        }
        Command::ReproTable3 { n, k, b, beta, gap_tol, output } => {
            let b = b.unwrap_or(n / k.max(1));
            let rows = report::report_table3(n, k, b, beta, gap_tol)?;
            prepare(&output)?;
            write_rows(&output.out_dir.join("table3.csv"), &rows)?;
            for r in &rows {
                println!("{} {}: root_loss {:.3} min_x {:.3}", r.workload, r.mode, r.root_loss, r.min_x_entry);
            }
        }
    }
    Ok(())
}

fn print_argmins(rows: &[LossRow]) {
    let mut seen: Vec<String> = Vec::new();
    for r in rows {
        let family = r.mechanism.split('(').next().unwrap_or("").to_string();
        if seen.contains(&family) {
            continue;
        }
        let best = rows
            .iter()
            .filter(|x| x.mechanism.starts_with(&format!("{family}(")))
            .min_by(|a, b| a.loss.total_cmp(&b.loss))
            .expect("family has rows");
        println!("{family}: best stamps {} with loss {:.3e}", best.stamps, best.loss);
        seen.push(family);
    }
}

fn fft_command(
    n: usize,
    rho: f64,
    kappa: f64,
    seed: u64,
    emit: FftEmit,
    input: Option<PathBuf>,
    output: &Output,
) -> CliResult<()> {
    match emit {
        FftEmit::Release => {
            let x = match input {
                Some(p) => {
                    let m = read_matrix(&p)?;
                    if m.rows() != 1 && m.cols() != 1 {
                        return Err(usage("release input must be a vector"));
                    }
                    m.into_vec()
                }
                None => vec![kappa; n],
            };
            let y = fft_prefix_release(&x, rho, kappa, seed)?;
            let path = write_matrix(output, "release", &Matrix::new(y.len(), 1, y)?)?;
            print_json(&json!({ "n": x.len(), "rho": rho, "kappa": kappa, "seed": seed, "path": path }));
        }
        FftEmit::Encoder => {
            write_matrix(output, "fft_encoder", &real_fft_encoder(n)?)?;
            write_matrix(output, "fft_decoder", &fft_decoder(n)?)?;
            write_matrix(output, "fft_optimal_decoder", &fft_optimal_decoder_dense(n)?)?;
            print_json(&json!({ "n": n, "encoder_rows": 2 * n }));
        }
        FftEmit::MseTable => {
            if n == 0 {
                return Err(usage("--n must be at least 1"));
            }
            let ns: Vec<usize> = std::iter::successors(Some(1usize), |&m| m.checked_mul(2)).take_while(|&m| m <= n).collect();
            let rows = mse_table(&ns, rho, kappa);
            prepare(output)?;
            write_rows(&output.out_dir.join("mse_table.csv"), &rows)?;
            for r in &rows {
                println!("{},{:e},{:e},{:.4}", r.n, r.analytic_mse, r.lower_bound, r.ratio);
            }
        }
    }
    Ok(())
}
