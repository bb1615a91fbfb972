mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "robust-capture", version, about = "Robust maximum-capture facility location under MNL and nested logit")]
struct Cli {
    /// Worker threads for zone- and sample-level work; 1 gives a serial reference run.
    #[arg(long, global = true, env = "ROBUST_CAPTURE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random instance to a JSON file.
    Generate(GenerateArgs),
    /// Solve one approach on an instance and print the selection.
    Solve(SolveArgs),
    /// Run RO, DET1, DET2 and SA and write evaluation CSVs.
    Compare(CompareArgs),
    /// Run the property suites against independent oracles.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Mnl,
    Nested,
}

#[derive(Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 100)]
    pub zones: usize,
    #[arg(long, default_value_t = 50)]
    pub locations: usize,
    #[arg(long, default_value_t = 5)]
    pub capacity: usize,
    /// Customer types per zone.
    #[arg(long, default_value_t = 5)]
    pub types: usize,
    #[arg(long, value_enum, default_value_t = ModelArg::Mnl)]
    pub model: ModelArg,
    /// Number of nests (nested model). Defaults to the length of --mu, or 5.
    #[arg(long)]
    pub nests: Option<usize>,
    /// Dissimilarity parameters, one per nest. Defaults to 1.1, 1.2, ...
    #[arg(long, value_delimiter = ',')]
    pub mu: Option<Vec<f64>>,
    /// Random if omitted; the seed used is printed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long, default_value = "instance.json")]
    pub output: std::path::PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum SolverArg {
    Auto,
    Ggx,
    Oa,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ApproachArg {
    Ro,
    Det1,
    Det2,
    Sa,
}

#[derive(Args)]
pub struct Tolerances {
    /// Adversary stationarity tolerance.
    #[arg(long, default_value_t = 1e-8)]
    pub adversary_tol: f64,
    #[arg(long, default_value_t = 500)]
    pub adversary_max_iter: usize,
    /// GGX relative acceptance threshold for a move.
    #[arg(long, default_value_t = 1e-9)]
    pub accept_tol: f64,
    /// Outer-approximation relative stopping gap.
    #[arg(long, default_value_t = 1e-6)]
    pub eps_stop: f64,
    /// Outer-approximation wall-clock limit in seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
}

#[derive(Args)]
pub struct SamplingArgs {
    /// Sampled utility scenarios solved by SA.
    #[arg(long, default_value_t = 10)]
    pub sa_candidates: usize,
    /// Samples used to score each SA candidate.
    #[arg(long, default_value_t = 1000)]
    pub sa_worstcase_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct SolveArgs {
    #[arg(short, long)]
    pub instance: std::path::PathBuf,
    #[arg(long, value_enum, default_value_t = ApproachArg::Ro)]
    pub approach: ApproachArg,
    /// Radius of the proportion set around the nominal mixture.
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    /// `auto` picks outer approximation for MNL and GGX otherwise.
    #[arg(long, value_enum, default_value_t = SolverArg::Auto)]
    pub solver: SolverArg,
    /// Override the instance capacity.
    #[arg(long)]
    pub capacity: Option<usize>,
    /// Append a one-row CSV with the result.
    #[arg(short, long)]
    pub output: Option<std::path::PathBuf>,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    #[command(flatten)]
    pub tolerances: Tolerances,
}

#[derive(Args)]
pub struct CompareArgs {
    #[arg(short, long)]
    pub instance: std::path::PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub epsilon: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "ro,det1,det2,sa")]
    pub approaches: Vec<ApproachArg>,
    #[arg(long, value_enum, default_value_t = SolverArg::Ggx)]
    pub solver: SolverArg,
    /// Evaluation samples per epsilon, shared by all approaches.
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
    #[arg(short, long, default_value = "results")]
    pub out: std::path::PathBuf,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    #[command(flatten)]
    pub tolerances: Tolerances,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// Suites to run (comma separated); all by default.
    #[arg(long, value_delimiter = ',')]
    pub suite: Vec<String>,
    /// Number of locations, for suites that take one.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Generate(args) => commands::generate(args),
        Command::Solve(args) => commands::solve(args),
        Command::Compare(args) => commands::compare(args),
        Command::Verify(args) => commands::verify(args),
    };
    match result {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
