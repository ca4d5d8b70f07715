use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "mfdp", version, about = "Matrix-factorization mechanisms for private prefix sums")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Mat64,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FftEmit {
    Release,
    Encoder,
    MseTable,
}

#[derive(Debug, Clone, Args)]
pub struct Output {
    /// Directory for written files.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Matrix file format.
    #[arg(long, value_enum, default_value_t = Format::Mat64)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct WorkloadArgs {
    /// Number of steps.
    #[arg(long)]
    pub n: usize,
    /// prefix, momentum or momentum-cooldown.
    #[arg(long, default_value = "prefix")]
    pub workload: String,
    /// Momentum coefficient.
    #[arg(long, default_value_t = 0.95)]
    pub beta: f64,
    /// Fraction of steps in the learning-rate cooldown.
    #[arg(long, default_value_t = 0.25)]
    pub cooldown_fraction: f64,
    /// Final learning-rate multiplier of the cooldown.
    #[arg(long, default_value_t = 0.05)]
    pub cooldown_floor: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SchemaArgs {
    /// Maximum participations per example.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Steps between participations; defaults to n / k.
    #[arg(long)]
    pub b: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a workload matrix.
    Workload {
        #[command(flatten)]
        workload: WorkloadArgs,
        #[command(flatten)]
        output: Output,
    },
    /// Sensitivity of an encoder read from a MAT64 file.
    Sensitivity {
        /// Encoder matrix (MAT64).
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        schema: SchemaArgs,
        /// brute, nonneg or upper.
        #[arg(long, default_value = "brute")]
        method: String,
    },
    /// Optimal factorization of a workload under (k, b)-participation.
    Factorize {
        #[command(flatten)]
        workload: WorkloadArgs,
        #[command(flatten)]
        schema: SchemaArgs,
        /// full-corners, pairwise-nonneg or elementwise-nonneg.
        #[arg(long, default_value = "pairwise-nonneg")]
        mode: String,
        /// Relative duality gap target.
        #[arg(long, default_value_t = 1e-6)]
        gap_tol: f64,
        #[arg(long, default_value_t = 50_000)]
        max_iter: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Loss of a factorization read from MAT64 files.
    Loss {
        /// Decoder matrix (MAT64).
        #[arg(long)]
        decoder: PathBuf,
        /// Encoder matrix (MAT64).
        #[arg(long)]
        encoder: PathBuf,
        #[command(flatten)]
        schema: SchemaArgs,
        #[arg(long, default_value = "brute")]
        method: String,
        /// Noise multiplier used for the privacy columns of the report.
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 1e-5)]
        delta: f64,
    },
    /// Loss of stamped prefix-sum mechanisms for several stamp counts.
    SweepStamps {
        /// online-honaker, optimal-honaker, fft, fft-optimal or mf-k1; repeatable.
        #[arg(long = "family", value_delimiter = ',', default_values_t = ["online_honaker".to_string(), "optimal_honaker".to_string(), "fft".to_string(), "fft_optimal".to_string()])]
        families: Vec<String>,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long)]
        b: Option<usize>,
        /// Comma-separated stamp counts; empty means 1.
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 5, 10, 20])]
        stamps: Vec<usize>,
        #[command(flatten)]
        output: Output,
    },
    /// FFT mechanism utilities.
    Fft {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = FftEmit::Release)]
        emit: FftEmit,
        /// Stream to release (MAT64 vector); defaults to all entries equal to kappa.
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Binary-tree encoder with online and least-norm decoders.
    Tree {
        #[arg(long)]
        n: usize,
        /// Disable the last-step completion of the online decoder.
        #[arg(long)]
        no_completion: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Correlated noise B Z for a decoder read from a MAT64 file.
    Noise {
        #[arg(long)]
        decoder: PathBuf,
        /// Columns of Z.
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// zCDP accounting for the Gaussian mechanism.
    Account {
        #[arg(long, default_value_t = 1.0)]
        sens: f64,
        #[arg(long)]
        sigma: Option<f64>,
        /// Target rho; reports the noise multiplier that achieves it.
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long, default_value_t = 1e-5)]
        delta: f64,
    },
    /// Private mean estimation with several mechanisms at equal rho.
    DemoTrain {
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long)]
        b: Option<usize>,
        /// Dimension of the examples.
        #[arg(long, default_value_t = 8)]
        dim: usize,
        /// Examples per batch.
        #[arg(long, default_value_t = 4)]
        batch: usize,
        /// Clipping norm.
        #[arg(long, default_value_t = 1.0)]
        zeta: f64,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        /// Noise seeds per mechanism.
        #[arg(long, default_value_t = 50)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// optimal, honaker, independent; comma-separated.
        #[arg(long, value_delimiter = ',', default_values_t = ["optimal".to_string(), "honaker".to_string(), "independent".to_string()])]
        mechanisms: Vec<String>,
        #[command(flatten)]
        output: Output,
    },
    /// Prefix-sum loss table for stamped mechanism families.
    ReproTable1 {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long)]
        b: Option<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 5, 10, 20])]
        stamps: Vec<usize>,
        /// Families to include; comma-separated.
        #[arg(long, value_delimiter = ',', default_values_t = ["online_honaker".to_string(), "optimal_honaker".to_string(), "fft".to_string(), "fft_optimal".to_string(), "mf_k1".to_string()])]
        families: Vec<String>,
        #[command(flatten)]
        output: Output,
    },
    /// Optimal root-loss for prefix and momentum workloads in every constraint mode.
    ReproTable3 {
        #[arg(long, default_value_t = 6)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        b: Option<usize>,
        #[arg(long, default_value_t = 0.95)]
        beta: f64,
        #[arg(long, default_value_t = 1e-6)]
        gap_tol: f64,
        #[command(flatten)]
        output: Output,
    },
}
