use std::path::PathBuf;
use std::process::ExitCode;

use bssmf::Error;
use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Parser, Debug)]
#[command(
    name = "bssmf",
    version,
    about = "Bounded simplex-structured matrix factorization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Factorize a dense CSV or MatrixMarket matrix.
    Factorize(FactorizeArgs),
    /// Run the matrix-completion protocol on MovieLens ratings.
    Complete(CompleteArgs),
    /// Score saved factors on the observed cells of a matrix.
    Eval(EvalArgs),
    /// Check the SSC necessary condition on a factor.
    CheckSsc(CheckSscArgs),
    /// Match the columns of two W factors and report MRSA.
    Mrsa(MrsaArgs),
    /// Generate a synthetic ground-truth instance.
    Synth(SynthArgs),
    /// Compare objective traces of plain, centered and offset data.
    CenterDemo(CenterDemoArgs),
}

#[derive(Args, Debug)]
pub struct FactorizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// csv or mtx; detected from the extension when omitted.
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub rank: usize,
    #[arg(long, default_value = "bssmf")]
    pub variant: String,
    /// `infer`, `lo:hi`, or a CSV file with one `a,b` row per data row.
    #[arg(long, default_value = "infer", allow_hyphen_values = true)]
    pub bounds: String,
    #[arg(long, default_value_t = 500)]
    pub outer: usize,
    #[arg(long, default_value_t = 20)]
    pub inner_w: usize,
    #[arg(long, default_value_t = 20)]
    pub inner_h: usize,
    #[arg(long, default_value_t = 1e-7)]
    pub rel_tol: f64,
    #[arg(long)]
    pub no_extrapolation: bool,
    #[arg(long)]
    pub center: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run seeds `seed..seed+N` and keep the lowest objective.
    #[arg(long, default_value_t = 1)]
    pub seed_sweep: u64,
    #[arg(long, default_value = "out/")]
    pub out_prefix: String,
}

#[derive(Args, Debug)]
pub struct CompleteArgs {
    #[arg(long)]
    pub ratings: PathBuf,
    /// dat (ml-1m) or tsv (ml-100k); detected from the extension when omitted.
    #[arg(long)]
    pub flavor: Option<String>,
    /// One rank or a comma-separated list.
    #[arg(long, default_value = "5")]
    pub rank: String,
    /// One variant or a comma-separated list.
    #[arg(long, default_value = "bssmf")]
    pub variant: String,
    #[arg(long, default_value_t = 50)]
    pub split_test_users: usize,
    #[arg(long, default_value_t = 0.8)]
    pub known_fraction: f64,
    #[arg(long, default_value_t = 5)]
    pub min_item_ratings: usize,
    /// Number of solver initializations per cell.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Disable mean-centering of BSSMF fits.
    #[arg(long)]
    pub no_center: bool,
    #[arg(long, default_value = "report.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub w: PathBuf,
    #[arg(long)]
    pub h: PathBuf,
    /// Ratings to score, as MatrixMarket (observed cells) or dense CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// `lo:hi`; when given, predictions are asserted to lie in the bounds.
    #[arg(long, allow_hyphen_values = true)]
    pub bounds: Option<String>,
}

#[derive(Args, Debug)]
pub struct CheckSscArgs {
    #[arg(long)]
    pub factor: PathBuf,
    /// h (r×n matrix), w-stacked (m×r W with --bounds) or w-plain (m×r W).
    #[arg(long, default_value = "h")]
    pub role: String,
    #[arg(long, allow_hyphen_values = true)]
    pub bounds: Option<String>,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MrsaArgs {
    #[arg(long = "true")]
    pub truth: PathBuf,
    #[arg(long)]
    pub est: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    pub m: usize,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub rank: usize,
    #[arg(long, default_value_t = 0.30)]
    pub h_zeros: f64,
    #[arg(long, default_value_t = 0.0)]
    pub p01: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "synth/")]
    pub out_prefix: String,
}

#[derive(Args, Debug)]
pub struct CenterDemoArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub rank: usize,
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value = "infer", allow_hyphen_values = true)]
    pub bounds: String,
    #[arg(long, default_value_t = 100)]
    pub outer: usize,
    #[arg(long, default_value_t = 20)]
    pub inner: usize,
    #[arg(long, default_value = "center_demo.csv")]
    pub out: PathBuf,
}

/// Process exit status for each failure class.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::UnsupportedVariant(_) | Error::Shape { .. } => 2,
        Error::Io { .. } | Error::Parse { .. } => 3,
        Error::SscRegeneration { .. } => 11,
        Error::Degenerate(_)
        | Error::Infeasible(_)
        | Error::RankDeficient(_)
        | Error::EmptyMask(_)
        | Error::Numerical(_) => 1,
    }
}

fn configure_threads() -> Result<(), Error> {
    if let Ok(v) = std::env::var("BSSMF_THREADS") {
        let n: usize = v.parse().map_err(|_| {
            Error::Config(format!(
                "BSSMF_THREADS must be a positive integer, got '{v}'"
            ))
        })?;
        if n == 0 {
            return Err(Error::Config("BSSMF_THREADS must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| match cli.command {
        Command::Factorize(a) => commands::factorize(&a),
        Command::Complete(a) => commands::complete(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::CheckSsc(a) => commands::check_ssc(&a),
        Command::Mrsa(a) => commands::mrsa(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::CenterDemo(a) => commands::center_demo(&a),
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
