//! Batch experiment driver for multilevel-coded covert PPM.

pub mod channel_spec;
pub mod commands;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "mlcppm", version, about = "Multilevel-coded PPM covert communication experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-level mutual informations for Bob and Willie.
    Tables(TablesArgs),
    /// Rate plan and throughput summary.
    Plan(PlanCmd),
    /// Chained end-to-end blocks.
    Simulate(SimulateArgs),
    /// Threshold-test detection of a linear code.
    Detect(DetectArgs),
    /// Covertness measurements.
    #[command(subcommand)]
    Covertness(CovertnessCmd),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Unit {
    Bits,
    Nats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Degraded {
    Auto,
    Yes,
    No,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Resolvability {
    Genie,
    Extractor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CodeKind {
    Identity,
    Random,
}

#[derive(Debug, Args)]
pub struct TablesArgs {
    #[arg(long)]
    pub bob: String,
    /// Defaults to Bob's channel.
    #[arg(long)]
    pub willie: Option<String>,
    #[arg(long, default_value_t = 16)]
    pub levels: usize,
    #[arg(long, value_enum, default_value_t = Unit::Bits)]
    pub unit: Unit,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub bob: String,
    #[arg(long)]
    pub willie: String,
    /// Number of levels q; the PPM order is 2^q.
    #[arg(long, default_value_t = 4)]
    pub levels: usize,
    /// Covertness target δ in nats.
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    /// Chain length B.
    #[arg(long, default_value_t = 1)]
    pub blocks: usize,
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    /// Blocklength override.
    #[arg(long)]
    pub ell: Option<usize>,
    /// share:F, floor:R or fixed:U.
    #[arg(long, default_value = "share:0.01")]
    pub u_policy: String,
    #[arg(long, value_enum, default_value_t = Degraded::Auto)]
    pub degraded: Degraded,
    #[arg(long, value_enum, default_value_t = Unit::Bits)]
    pub unit: Unit,
}

#[derive(Debug, Args)]
pub struct PlanCmd {
    #[command(flatten)]
    pub plan: PlanArgs,
    /// Rate-plan JSON destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SessionArgs {
    #[arg(long)]
    pub seed: u64,
    /// Monte-Carlo trials per polar code construction.
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, value_enum, default_value_t = Resolvability::Genie)]
    pub resolvability: Resolvability,
    /// Extra seed length per level in bits for the extractor.
    #[arg(long, default_value_t = 0.05)]
    pub margin: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub plan: PlanArgs,
    #[command(flatten)]
    pub session: SessionArgs,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub willie: String,
    /// Generator matrix file: one row of 0/1 characters per line.
    #[arg(long, conflicts_with_all = ["n", "k", "code"])]
    pub generator: Option<PathBuf>,
    #[arg(long, default_value_t = 1024)]
    pub n: usize,
    #[arg(long, default_value_t = 128)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = CodeKind::Identity)]
    pub code: CodeKind,
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum CovertnessCmd {
    /// Exact divergences of a tiny codebook by full enumeration.
    Exact(ExactArgs),
    /// Sampled per-level TV and test advantage for a planned session.
    Estimate(EstimateArgs),
}

#[derive(Debug, Args)]
pub struct ExactArgs {
    #[arg(long)]
    pub willie: String,
    #[arg(long, default_value_t = 1)]
    pub levels: usize,
    #[arg(long, default_value_t = 1)]
    pub ell: usize,
    /// uniform, zero or random:N.
    #[arg(long, default_value = "zero")]
    pub codebook: String,
    /// Output-enumeration budget.
    #[arg(long)]
    pub budget: Option<u128>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub plan: PlanArgs,
    #[command(flatten)]
    pub session: SessionArgs,
    /// Sampled blocks per hybrid.
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    #[arg(long, default_value_t = 16)]
    pub bins: usize,
    /// Send uniform bits on every level.
    #[arg(long)]
    pub uniform_control: bool,
    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
