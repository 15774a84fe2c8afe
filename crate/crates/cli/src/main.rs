mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ghsplat::Error;

#[derive(Parser)]
#[command(
    name = "ghsplat",
    version,
    about = "Differentiable Gaussian-Hermite splatting on the CPU"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit splats to a target image
    Fit(FitArgs),
    /// Render a scene file
    Render(RenderArgs),
    /// Compare analytic gradients with central finite differences
    Gradcheck(GradcheckArgs),
    /// Print the Hermite orthogonality matrix
    Ortho,
    /// Fit the same target under several rank caps
    AblateRank(AblateArgs),
    /// Fit the same target with every kernel kind
    CompareKernels(CompareArgs),
    /// Write a procedural target image
    Synth(SynthArgs),
}

#[derive(Args, Clone)]
pub struct FitOptions {
    /// Target image (PPM, or PNG by extension)
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub splats: usize,
    #[arg(long, default_value_t = 3000)]
    pub steps: usize,
    /// Steps before Hermite coefficients are optimized
    #[arg(long, default_value_t = 1000)]
    pub phase1: usize,
    #[arg(long, default_value_t = 1000)]
    pub rank_period: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Weight of the D-SSIM term
    #[arg(long, default_value_t = 0.2)]
    pub lambda_ssim: f64,
    /// Background as `r,g,b` in [0, 1], or `random` for a new color every step
    #[arg(long, default_value = "0,0,0")]
    pub background: String,
    /// Record elapsed milliseconds in the metrics trace
    #[arg(long)]
    pub wall_time: bool,
}

#[derive(Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub fit: FitOptions,
    /// gaussian, gaussian-gl, ges or gh
    #[arg(long, default_value = "gh")]
    pub kernel: String,
    #[arg(long, default_value_t = 9)]
    pub max_rank: usize,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Camera file overriding the scene's camera (3D scenes)
    #[arg(long)]
    pub camera: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the depth map of a 3D scene; defaults next to `--out`
    #[arg(long)]
    pub depth_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of random scenes
    #[arg(long, default_value_t = 4)]
    pub scenes: usize,
    #[arg(long, default_value_t = 5)]
    pub splats: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Finite-difference step in raw parameter units
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

#[derive(Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub fit: FitOptions,
    /// Comma-separated rank caps
    #[arg(long, default_value = "0,3,6,9")]
    pub ranks: String,
    /// Optional CSV directory, one trace per rank
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub fit: FitOptions,
    #[arg(long, default_value_t = 9)]
    pub max_rank: usize,
    /// Optional CSV directory, one trace per kernel
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SynthArgs {
    /// triangle or textured
    #[arg(long, default_value = "triangle")]
    pub kind: String,
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Failure categories mapped onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Io(String),
    Check(String),
    Divergence(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Io(_) => 2,
            Failure::Check(_) => 3,
            Failure::Divergence(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Io(m) | Failure::Check(m) | Failure::Divergence(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io { .. } | Error::Parse { .. } => Failure::Io(msg),
            Error::Divergence { .. } | Error::NonFiniteGradient { .. } => Failure::Divergence(msg),
            Error::Domain(_) | Error::Geometry(_) | Error::Argument(_) => Failure::Usage(msg),
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("GHSPLAT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| {
        Failure::Usage(format!(
            "GHSPLAT_THREADS must be a non-negative integer, got '{raw}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(format!("cannot configure thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Render(a) => commands::render(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Ortho => commands::ortho(),
        Command::AblateRank(a) => commands::ablate_rank(a),
        Command::CompareKernels(a) => commands::compare_kernels(a),
        Command::Synth(a) => commands::synth(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
