use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ildae_core::selection::PolicyKind;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "ildae",
    version,
    about = "Difficulty scoring, budgeted selection and difficulty-aware reports"
)]
pub struct Cli {
    /// TOML file with default flag values. Keys are long flag names (with
    /// dashes or underscores); a `[subcommand]` table applies to one
    /// subcommand only. Flags on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the ensemble training manifest.
    Manifest(ManifestArgs),
    /// Compute difficulty scores from an ensemble prediction log.
    Score(ScoreArgs),
    /// Select a budgeted evaluation subset.
    Select(SelectArgs),
    /// Sweep selection fidelity over policies, budgets and replicates.
    Fidelity(FidelityArgs),
    /// Difficulty-sliced reports.
    Report {
        #[command(subcommand)]
        kind: ReportCommand,
    },
    /// Flag the easiest and hardest instances for curation.
    Flag(FlagArgs),
    /// Generate a synthetic world and run the full pipeline on it.
    Simulate(SimulateArgs),
    /// Run the curation HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum ReportCommand {
    /// Candidate accuracy per equal-width difficulty bin.
    Regions(RegionsArgs),
    /// Difficulty statistics per gold label.
    Labels(LabelsArgs),
    /// Rank agreement of plain and weighted accuracy with OOD accuracy.
    Ood(OodArgs),
    /// Before/after accuracy on flagged instances.
    Repair(RepairArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ManifestArgs {
    /// Output manifest document.
    #[arg(long)]
    pub out: PathBuf,
    /// Training-data percentages for partial-data runs.
    #[arg(long, value_delimiter = ',', default_values_t = ildae_core::difficulty::DEFAULT_DATA_FRACTIONS.to_vec())]
    pub data_fractions: Vec<f64>,
    /// Label-corruption percentages for corrupted-data runs.
    #[arg(long, value_delimiter = ',', default_values_t = ildae_core::difficulty::DEFAULT_CORRUPTION_FRACTIONS.to_vec())]
    pub corruption_fractions: Vec<f64>,
    /// Checkpoints per configuration.
    #[arg(long, default_value_t = ildae_core::difficulty::DEFAULT_EPOCHS)]
    pub epochs: u32,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    /// Ensemble prediction log (JSONL).
    #[arg(long)]
    pub log: PathBuf,
    /// Manifest the log must conform to.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Mask missing (run, instance) pairs instead of failing.
    #[arg(long)]
    pub lenient: bool,
    /// Output difficulty CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyArg {
    Banded,
    Random,
    #[value(alias = "length")]
    LengthHeuristic,
}

impl From<PolicyArg> for PolicyKind {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Banded => PolicyKind::Banded,
            PolicyArg::Random => PolicyKind::Random,
            PolicyArg::LengthHeuristic => PolicyKind::LengthHeuristic,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct BandArgs {
    /// Low/high band edges on the difficulty scale.
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.8])]
    pub band_edges: Vec<f64>,
    /// Budget shares of the low, moderate and high bands.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.8, 0.1])]
    pub band_shares: Vec<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct SelectArgs {
    /// Difficulty CSV.
    #[arg(long)]
    pub difficulty: PathBuf,
    /// Instance metadata (JSONL); required by the length policy.
    #[arg(long)]
    pub instances: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "banded")]
    pub policy: PolicyArg,
    /// Number of instances to select.
    #[arg(long, conflicts_with = "percent", required_unless_present = "percent")]
    pub budget: Option<usize>,
    /// Budget as a percentage of the instance count.
    #[arg(long)]
    pub percent: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub bands: BandArgs,
    /// Output selection plan document.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FidelityArgs {
    /// Candidate correctness log (JSONL).
    #[arg(long)]
    pub correctness: PathBuf,
    /// Difficulty CSV.
    #[arg(long)]
    pub difficulty: PathBuf,
    /// Instance metadata (JSONL); required by the length policy.
    #[arg(long)]
    pub instances: Option<PathBuf>,
    /// Policies to compare.
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["banded", "random"])]
    pub policies: Vec<PolicyArg>,
    /// Budget percentages (columns of the grid).
    #[arg(long, value_delimiter = ',', default_values_t = ildae_core::sweep::DEFAULT_BUDGET_PERCENTAGES.to_vec())]
    pub budgets: Vec<f64>,
    /// Replicates per cell.
    #[arg(long, default_value_t = ildae_core::sweep::DEFAULT_REPLICATES)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; results do not depend on this.
    #[arg(long, default_value_t = 1)]
    #[serde(skip)]
    pub workers: usize,
    #[command(flatten)]
    pub bands: BandArgs,
    /// Output sweep document.
    #[arg(long)]
    pub out: PathBuf,
    /// Plot-ready CSV of the grid.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct RegionsArgs {
    #[arg(long)]
    pub correctness: PathBuf,
    #[arg(long)]
    pub difficulty: PathBuf,
    #[arg(long, default_value_t = ildae_core::analytics::DEFAULT_REGION_BINS)]
    pub bins: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct LabelsArgs {
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long)]
    pub difficulty: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct OodArgs {
    /// In-domain candidate correctness log.
    #[arg(long)]
    pub correctness: PathBuf,
    #[arg(long)]
    pub difficulty: PathBuf,
    /// CSV `candidate_id,accuracy` of out-of-domain accuracies.
    #[arg(long)]
    pub ood_accuracies: PathBuf,
    /// Weighting strength for the headline comparison.
    #[arg(long, default_value_t = ildae_core::types::WeightingParams::DEFAULT_MU)]
    pub mu: f64,
    /// Grid of mu values for the sweep.
    #[arg(long, value_delimiter = ',', default_values_t = ildae_core::analytics::default_mu_grid())]
    pub mu_grid: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RepairArgs {
    /// Correctness log on the original instances.
    #[arg(long)]
    pub before: PathBuf,
    /// Correctness log on the edited instances.
    #[arg(long)]
    pub after: PathBuf,
    /// Flag set document.
    #[arg(long)]
    pub flags: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FlagArgs {
    #[arg(long)]
    pub difficulty: PathBuf,
    /// Number of easiest instances to flag as trivial.
    #[arg(long, default_value_t = ildae_core::curation::DEFAULT_FLAG_COUNT)]
    pub k_low: usize,
    /// Number of hardest instances to flag as potentially erroneous.
    #[arg(long, default_value_t = ildae_core::curation::DEFAULT_FLAG_COUNT)]
    pub k_high: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Output directory; created if missing.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub n_instances: usize,
    #[arg(long, default_value_t = 27)]
    pub n_candidates: usize,
    /// Standard deviation of the confidence noise.
    #[arg(long, default_value_t = 0.05)]
    pub noise_sd: f64,
    /// Fraction of instances stored with a wrong gold label.
    #[arg(long, default_value_t = 0.0)]
    pub mislabel_rate: f64,
    /// Shift of the OOD latent difficulty.
    #[arg(long, default_value_t = 1.0)]
    pub ood_shift: f64,
    /// Budget percentages for the fidelity sweep.
    #[arg(long, value_delimiter = ',', default_values_t = ildae_core::sweep::DEFAULT_BUDGET_PERCENTAGES.to_vec())]
    pub budgets: Vec<f64>,
    #[arg(long, default_value_t = ildae_core::sweep::DEFAULT_REPLICATES)]
    pub replicates: usize,
    /// Worker threads; results do not depend on this.
    #[arg(long, default_value_t = 1)]
    #[serde(skip)]
    pub workers: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    /// Directory with instances.jsonl, difficulty.csv, optional flags.json,
    /// and the edit log edits.jsonl. Defaults to $ILDAE_DATA_DIR.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Bind address. Defaults to $ILDAE_ADDR or 127.0.0.1:8080.
    #[arg(long)]
    pub addr: Option<SocketAddr>,
    /// Remote predictor URL. Defaults to $ILDAE_PREDICTOR_URL; the built-in
    /// stub is used when neither is set.
    #[arg(long)]
    pub predictor_url: Option<String>,
    /// Seed of the built-in stub predictor.
    #[arg(long, default_value_t = 0)]
    pub stub_seed: u64,
    /// Shared bearer token. Defaults to $ILDAE_TOKEN.
    #[arg(long)]
    #[serde(skip)]
    pub token: Option<String>,
    /// Predictor timeout in milliseconds.
    #[arg(long, default_value_t = 10_000)]
    pub timeout_ms: u64,
    /// Maximum concurrent predictor calls.
    #[arg(long, default_value_t = 8)]
    pub concurrency: usize,
}
