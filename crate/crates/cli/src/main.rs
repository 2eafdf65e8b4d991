mod commands;
mod config;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "qptsim", version, about = "Simulated NMR quantum process tomography")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Incoherent supermatrix of a pulse schedule over an RF histogram.
    SimulatePulse(SimulatePulseArgs),
    /// Design a strongly modulating pulse for a gate.
    DesignPulse(DesignPulseArgs),
    /// Simulated process tomography of the QFT.
    RunQpt(RunQptArgs),
    /// Error decomposition of a run-qpt result.
    Analyze(AnalyzeArgs),
    /// Nearest completely positive trace-preserving map.
    ProjectCptp(ProjectArgs),
    /// Eigenvalue spectra of supermatrices as CSV.
    Spectrum(SpectrumArgs),
    /// Concatenated versus composed pulses under RF inhomogeneity.
    DemoIncoherence(DemoArgs),
}

#[derive(Debug, Args)]
pub struct SimulatePulseArgs {
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long)]
    pub schedule: PathBuf,
    #[arg(long)]
    pub histogram: PathBuf,
    /// Output matrix; `.txt` selects the text form.
    #[arg(long)]
    pub out: PathBuf,
    /// Average over spectator configurations too.
    #[arg(long)]
    pub spectators: bool,
    /// Gate label or unitary matrix file to report the fidelity against.
    #[arg(long)]
    pub target: Option<String>,
}

#[derive(Debug, Args)]
pub struct DesignPulseArgs {
    /// Gate label (e.g. `x90:1`, `-y90:1,2`) or unitary matrix file.
    #[arg(long)]
    pub target: String,
    #[arg(long, default_value_t = 6)]
    pub kmax: usize,
    /// Objective evaluations per optimization stage.
    #[arg(long, default_value_t = 40_000)]
    pub budget: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long)]
    pub histogram: PathBuf,
    /// Output schedule file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    /// Most design chains; later chains run only while below the floor.
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    #[arg(long, default_value_t = 10_000.0)]
    pub nominal_rf_hz: f64,
    #[arg(long)]
    pub spectators: bool,
}

#[derive(Debug, Args)]
pub struct RunQptArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Output directory of run-qpt.
    #[arg(long)]
    pub run: PathBuf,
    /// Extra reference supermatrices, labeled by file stem.
    #[arg(long, num_args = 0..)]
    pub references: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Seed of the rotation fit (default: the run's seed).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Trace-preservation tolerance of the iteration.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    /// One label per input (default: file stems).
    #[arg(long = "label")]
    pub labels: Vec<String>,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long)]
    pub library: PathBuf,
    /// RF histogram file; a symmetric two-bin histogram is used otherwise.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    /// Relative spread of the two-bin histogram.
    #[arg(long, default_value_t = 0.1)]
    pub spread: f64,
    #[arg(long, default_value = "-y90:1")]
    pub first: String,
    #[arg(long, default_value = "x180:1,2")]
    pub second: String,
    #[arg(long)]
    pub spectators: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Core(qptsim::Error),
    Io(std::io::Error),
    /// Inputs do not match the manifest that describes them.
    Integrity(String),
    Usage(String),
}

impl CliError {
    fn category(&self) -> &'static str {
        match self {
            CliError::Core(e) => match e.category() {
                qptsim::ErrorCategory::Config => "config",
                qptsim::ErrorCategory::Numerical => "numerical",
                qptsim::ErrorCategory::Io => "io",
            },
            CliError::Io(_) => "io",
            CliError::Integrity(_) => "integrity",
            CliError::Usage(_) => "config",
        }
    }

    fn exit_code(&self) -> u8 {
        match self.category() {
            "numerical" => 3,
            "io" => 4,
            _ => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
            CliError::Integrity(m) | CliError::Usage(m) => f.write_str(m),
        }
    }
}

impl From<qptsim::Error> for CliError {
    fn from(e: qptsim::Error) -> Self {
        match e {
            qptsim::Error::Io(io) => CliError::Io(io),
            other => CliError::Core(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::SimulatePulse(a) => commands::simulate_pulse(&a),
        Command::DesignPulse(a) => commands::design_pulse(&a),
        Command::RunQpt(a) => commands::run_qpt(&a),
        Command::Analyze(a) => commands::analyze(&a),
        Command::ProjectCptp(a) => commands::project_cptp(&a),
        Command::Spectrum(a) => commands::spectrum(&a),
        Command::DemoIncoherence(a) => commands::demo_incoherence(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({ "error": { "category": e.category(), "message": e.to_string() } });
            eprintln!("{record}");
            ExitCode::from(e.exit_code())
        }
    }
}
