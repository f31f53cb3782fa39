//! Command-line pipeline: simulate, ingest, chsh, bounds, certify, extract.

pub mod commands;
pub mod error;
pub mod inputs;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use error::{exit, CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "speqrng", version, about = "Min-entropy certification for a single-photon-entanglement QRNG")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Configuration file; the bundled measurement set when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Use the full start counts (3000 for e_P, 10000 for e_I).
    #[arg(long, global = true)]
    pub paper_scale: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic time-tagged events for the four settings.
    Simulate(SimulateArgs),
    /// Bin one event file into symbols and summarise it.
    Ingest(IngestArgs),
    /// Estimate the CHSH value.
    Chsh(ChshArgs),
    /// Compute the non-ideality bounds for one trust level.
    Bounds(BoundsArgs),
    /// Certified min-entropy and bit rate.
    Certify(CertifyArgs),
    /// Toeplitz-hash raw bits into uniform bits.
    Extract(ExtractArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Visibility of the source state.
    #[arg(long, default_value_t = 1.0)]
    pub v: f64,
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.0)]
    pub pi1: f64,
    #[arg(long, default_value_t = 0.0)]
    pub pi2: f64,
    /// Choose the visibility so that |I| equals this value.
    #[arg(long, conflicts_with = "v")]
    pub target_chsh: Option<f64>,
    /// Lossless balanced optics instead of the configured components.
    #[arg(long)]
    pub ideal_components: bool,
    /// Detectors without dead time or afterpulses.
    #[arg(long)]
    pub ideal_detector: bool,
    /// Photon rate at the detectors, Hz.
    #[arg(long, default_value_t = 177_000.0)]
    pub rate_hz: f64,
    /// Acquisition time per setting, s.
    #[arg(long, default_value_t = 5.0)]
    pub duration_s: f64,
    #[arg(long, default_value_t = 1000)]
    pub afterpulse_delay_ns: u64,
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    /// Event CSV (`timestamp_ns,channel`) or QSYM file.
    #[arg(long)]
    pub input: PathBuf,
    /// Setting label `x,y`.
    #[arg(long)]
    pub setting: String,
    #[arg(long)]
    pub bin_ns: Option<u64>,
    #[arg(long)]
    pub duration_s: Option<f64>,
    /// Sub-intervals for the probability series.
    #[arg(long)]
    pub subintervals: Option<usize>,
    /// Also write the symbols as a QSYM file.
    #[arg(long)]
    pub qsym: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Directory with `events_x{x}_y{y}.csv` or `symbols_x{x}_y{y}.qsym`
    /// files; the configured count table when omitted.
    #[arg(long)]
    pub events_dir: Option<PathBuf>,
    #[arg(long)]
    pub bin_ns: Option<u64>,
    /// Acquisition time of each setting, s.
    #[arg(long)]
    pub duration_s: Option<f64>,
    #[arg(long)]
    pub subintervals: Option<usize>,
    /// Skip the detector-memory correction of the probabilities.
    #[arg(long)]
    pub no_markov: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ChshArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizerArgs {
    #[arg(long)]
    pub starts_ep: Option<usize>,
    #[arg(long)]
    pub starts_ei: Option<usize>,
    /// Points per axis of the (α, β) grid.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub refine_evals: Option<usize>,
    /// Monte Carlo samples of the component uncertainties.
    #[arg(long, default_value_t = speqrng::bounds::DEFAULT_MC_SAMPLES)]
    pub n_mc: usize,
}

#[derive(Debug, Clone, Args)]
pub struct BoundsArgs {
    #[arg(long, default_value = "general_rho")]
    pub trust: String,
    #[arg(long)]
    pub ideal_components: bool,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CertifyArgs {
    #[arg(long, default_value = "general_rho")]
    pub trust: String,
    #[command(flatten)]
    pub data: DataArgs,
    /// Bound cache written by `bounds`.
    #[arg(long, conflicts_with_all = ["compute_bounds", "reference_bounds"])]
    pub bounds: Option<PathBuf>,
    /// Run the optimizer now.
    #[arg(long, conflicts_with = "reference_bounds")]
    pub compute_bounds: bool,
    /// Use the published bounds stored in the configuration.
    #[arg(long)]
    pub reference_bounds: bool,
    /// Override e_P (standard error 0).
    #[arg(long)]
    pub e_p: Option<f64>,
    /// Override e_I (standard error 0).
    #[arg(long)]
    pub e_i: Option<f64>,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ExtractArgs {
    /// QSYM or event CSV file; each symbol contributes its polarisation bit.
    #[arg(long)]
    pub input: PathBuf,
    /// Certified min-entropy per raw bit.
    #[arg(long)]
    pub h_min: f64,
    #[arg(long, default_value_t = speqrng::extract::DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Packed seed bits; derived from `--seed` when omitted (testing only).
    #[arg(long)]
    pub seed_file: Option<PathBuf>,
    /// Hash independent blocks of this many raw bits, reusing the seed.
    #[arg(long)]
    pub block_bits: Option<usize>,
    #[arg(long)]
    pub bin_ns: Option<u64>,
    #[arg(long)]
    pub duration_s: Option<f64>,
    /// Output file; `<out-dir>/extracted.bin` by default.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Runs one command and returns the path of its JSON report.
pub fn run(cli: &Cli) -> CliResult<PathBuf> {
    let ctx = commands::Context::new(&cli.global)?;
    match &cli.command {
        Command::Simulate(a) => commands::simulate(&ctx, a),
        Command::Ingest(a) => commands::ingest(&ctx, a),
        Command::Chsh(a) => commands::chsh(&ctx, a),
        Command::Bounds(a) => commands::bounds(&ctx, a),
        Command::Certify(a) => commands::certify(&ctx, a),
        Command::Extract(a) => commands::extract(&ctx, a),
    }
}
