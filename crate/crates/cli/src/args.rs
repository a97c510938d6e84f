use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fairrank_core::{ModelKind, RerankConfig};

pub const DEFAULT_PORT: u16 = 8714;

#[derive(Debug, Parser)]
#[command(name = "fairrank", version, about = "Fair top-k ranking: measure, audit and mitigate bias")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train, rank and measure; prints the run record.
    Run(RunArgs),
    /// Correlation of every feature with the sensitive attribute, strongest first.
    Audit(DataArgs),
    /// Retrain with one feature perturbed and report the measure drops.
    Perturb(PerturbArgs),
    /// Comparison rows for runs stored in a state directory.
    Compare(CompareArgs),
    /// Start the JSON HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Candidate CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// JSON schema describing the CSV.
    #[arg(long)]
    pub schema: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Logistic,
    Acf,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Logistic => ModelKind::Logistic,
            ModelArg::Acf => ModelKind::AcfLogistic,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Features to use (comma list). Defaults to every schema feature.
    #[arg(long, value_delimiter = ',')]
    pub features: Vec<String>,
    /// Features to leave out (comma list).
    #[arg(long, value_delimiter = ',')]
    pub exclude: Vec<String>,
    #[arg(long, value_enum, default_value = "logistic")]
    pub model: ModelArg,
    /// Top-k selection size.
    #[arg(long)]
    pub k: usize,
    /// Neighbourhood size for rNN.
    #[arg(long, default_value_t = fairrank_core::space::DEFAULT_H)]
    pub h: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Randomized fair re-ranking, e.g. `p=0.5,seed=1`.
    #[arg(long, value_parser = parse_rerank)]
    pub rerank: Option<RerankConfig>,
    /// Keep the session (datasets and runs) in this directory.
    #[arg(long, env = "FAIRSIGHT_STATE_DIR")]
    pub state_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PerturbArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Feature whose column is rotated before retraining.
    #[arg(long)]
    pub feature: String,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[arg(long, env = "FAIRSIGHT_STATE_DIR")]
    pub state_dir: PathBuf,
    /// Run ids to compare (comma list). Defaults to all stored runs.
    #[arg(long, value_delimiter = ',')]
    pub ids: Vec<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    /// 0 picks a free port.
    #[arg(long, default_value_t = DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, env = "FAIRSIGHT_STATE_DIR")]
    pub state_dir: Option<PathBuf>,
}

/// Parses `p=<f>,seed=<i>`; both keys are required.
pub fn parse_rerank(s: &str) -> Result<RerankConfig, String> {
    let (mut p, mut seed) = (None, None);
    for part in s.split(',') {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got `{part}`"))?;
        match key.trim() {
            "p" => p = Some(value.trim().parse::<f64>().map_err(|e| format!("p: {e}"))?),
            "seed" => seed = Some(value.trim().parse::<u64>().map_err(|e| format!("seed: {e}"))?),
            other => return Err(format!("unknown key `{other}`")),
        }
    }
    let cfg = RerankConfig {
        p: p.ok_or("missing p")?,
        seed: seed.ok_or("missing seed")?,
    };
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}
