//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use evoroute_core::{Phase, Policy};

#[derive(Debug, Parser)]
#[command(
    name = "evoroute",
    version,
    about = "Step-level model routing for agentic workflows"
)]
pub struct Cli {
    /// Log filter, e.g. `info` or `evoroute_core=debug`.
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Populate an experience base with uniformly routed simulator tasks.
    Coldstart(ColdstartArgs),
    /// Evaluate routing policies on simulated tasks and write a report CSV.
    Simulate(SimulateArgs),
    /// Route one sub-task against an experience base without committing.
    Route(RouteArgs),
    /// Inspect or move experience-base files.
    #[command(subcommand)]
    Kb(KbCommand),
    /// Compare report CSVs.
    Report(ReportArgs),
    /// Run the HTTP gateway.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PhaseArg {
    Inference,
    Optimization,
}

impl From<PhaseArg> for Phase {
    fn from(p: PhaseArg) -> Self {
        match p {
            PhaseArg::Inference => Phase::Inference,
            PhaseArg::Optimization => Phase::Optimization,
        }
    }
}

#[derive(Debug, Args)]
pub struct ColdstartArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub tasks: u64,
    #[arg(long)]
    pub seed: u64,
    /// Experience-base file; created or extended.
    #[arg(long)]
    pub kb: PathBuf,
    /// Config file; defaults to the bundled planted pool.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// `evoroute`, `random` or `fixed:<model>`; repeat for a paired comparison.
    #[arg(long, required = true, value_parser = parse_policy)]
    pub policy: Vec<Policy>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub episodes: u64,
    #[arg(long, value_enum, default_value = "inference")]
    pub phase: PhaseArg,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Summary CSV; the selection-share table goes next to it as `*.shares.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Starting experience base, read only. Without it a fresh cold start runs.
    #[arg(long)]
    pub kb: Option<PathBuf>,
    /// Cold-start tasks run when `--kb` is absent.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub coldstart_tasks: u64,
    /// Also write a selection-share bar chart.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct RouteArgs {
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub role: String,
    #[arg(long)]
    pub instruction: String,
    #[arg(long, default_value = "cli")]
    pub episode: String,
    #[arg(long, default_value_t = 0)]
    pub step: u32,
    #[arg(long, value_enum, default_value = "inference")]
    pub phase: PhaseArg,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `keyword = tool` lines replacing the built-in keyword table.
    #[arg(long)]
    pub keywords: Option<PathBuf>,
    /// Defaults to the config's `rng_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum KbCommand {
    /// Write the records as canonical JSON Lines.
    Export {
        #[arg(long)]
        kb: PathBuf,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Append the trajectories of another file.
    Import {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print record, generation and per-model counts.
    Stats {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Baseline and candidate summary CSVs; rows are paired by position.
    #[arg(long, num_args = 2, value_names = ["A", "B"], required = true)]
    pub compare: Vec<PathBuf>,
    /// Also write a three-panel bar chart.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Listen address; overrides EVOROUTE_BIND.
    #[arg(long)]
    pub bind: Option<String>,
    /// Overrides EVOROUTE_KB_PATH.
    #[arg(long)]
    pub kb: Option<PathBuf>,
    /// Overrides EVOROUTE_CONFIG.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub keywords: Option<PathBuf>,
    #[arg(long, default_value_t = 3600)]
    pub idle_ttl_secs: u64,
}
