use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ocanomaly::features::{AggregationKind, DEFAULT_EPSILON, DEFAULT_MAX_DISTINCT};
use ocanomaly::oracle::{DEFAULT_MAX_EVENTS, DEFAULT_WHISKER};
use ocanomaly::reduce::{DEFAULT_FASTMAP_DIMS, DEFAULT_PIVOT_ITERS};
use ocanomaly::synthgen::AnomalyKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "ocanomaly", version, about = "Anomaly detection over object-centric event logs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Command {
    /// Generate a synthetic purchase-to-pay log with planted anomalies.
    Generate(GenerateArgs),
    /// Extract, normalize and variance-filter a feature table.
    Features(FeaturesArgs),
    /// Score objects and write lifecycle abstractions of the most anomalous.
    Detect(DetectArgs),
    /// Aggregate object scores into a ranked table of feature values.
    Aggregate(AggregateArgs),
    /// Summarize the feature table and ask an oracle which values are unusual.
    Abstract(AbstractArgs),
    /// Rerun the command recorded in a run manifest and compare outputs.
    #[serde(skip)]
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Features(_) => "features",
            Command::Detect(_) => "detect",
            Command::Aggregate(_) => "aggregate",
            Command::Abstract(_) => "abstract",
            Command::Replay(_) => "replay",
        }
    }

    pub fn out_dir_mut(&mut self) -> &mut PathBuf {
        match self {
            Command::Generate(a) => &mut a.out_dir,
            Command::Features(a) => &mut a.out_dir,
            Command::Detect(a) => &mut a.out_dir,
            Command::Aggregate(a) => &mut a.out_dir,
            Command::Abstract(a) => &mut a.out_dir,
            Command::Replay(a) => a.out_dir.get_or_insert_with(PathBuf::new),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Generate(a) => Some(a.seed),
            Command::Detect(a) => Some(a.detector.seed),
            Command::Aggregate(a) if a.scores.is_none() => Some(a.detector.seed),
            _ => None,
        }
    }

    /// Input paths read by the command, in a fixed order.
    pub fn inputs(&self) -> Vec<PathBuf> {
        match self {
            Command::Generate(_) => Vec::new(),
            Command::Features(a) => vec![a.features.input.clone()],
            Command::Detect(a) => vec![a.features.input.clone()],
            Command::Aggregate(a) => std::iter::once(a.features.input.clone())
                .chain(a.scores.clone())
                .collect(),
            Command::Abstract(a) => vec![a.features.input.clone()],
            Command::Replay(a) => vec![a.manifest.clone()],
        }
    }

    pub fn inputs_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            Command::Generate(_) => Vec::new(),
            Command::Features(a) => vec![&mut a.features.input],
            Command::Detect(a) => vec![&mut a.features.input],
            Command::Aggregate(a) => std::iter::once(&mut a.features.input)
                .chain(a.scores.as_mut())
                .collect(),
            Command::Abstract(a) => vec![&mut a.features.input],
            Command::Replay(a) => vec![&mut a.manifest],
        }
    }
}

/// `Kind=rate` pair for `generate --rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateArg {
    pub kind: AnomalyKind,
    pub rate: f64,
}

impl FromStr for RateArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rate) = s
            .split_once('=')
            .ok_or_else(|| format!("expected KIND=RATE, got {s:?}"))?;
        let kind = kind.trim().parse::<AnomalyKind>().map_err(|e| e.to_string())?;
        let rate = rate
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("rate {rate:?}: {e}"))?;
        Ok(RateArg { kind, rate })
    }
}

impl fmt::Display for RateArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.kind, self.rate)
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GenerateArgs {
    /// Number of purchase orders.
    #[arg(long, default_value_t = 500)]
    pub orders: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Planted anomaly rate as KIND=RATE, repeatable.
    #[arg(long = "rate", value_name = "KIND=RATE")]
    pub rates: Vec<RateArg>,
    /// Mean gap between consecutive events of one order, in seconds.
    #[arg(long)]
    pub mean_gap_secs: Option<f64>,
    /// Mean gap between the starts of consecutive orders, in seconds.
    #[arg(long)]
    pub mean_interarrival_secs: Option<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FeatureArgs {
    /// OCEL 2.0 JSON log.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub object_type: String,
    /// Append aggregated features of interacting objects of this type.
    #[arg(long)]
    pub propagate: Option<String>,
    #[arg(long, default_value_t = AggregationKind::Mean)]
    pub agg: AggregationKind,
    /// Add co-birth and co-death counts.
    #[arg(long)]
    pub cobirth: bool,
    #[arg(long, default_value_t = 0.0)]
    pub min_variance: f64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FeaturesArgs {
    #[command(flatten)]
    pub features: FeatureArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detector {
    Iforest,
    Lof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reducer {
    None,
    Pca,
    Fastmap,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DetectorArgs {
    /// Defaults to lof with `--reducer fastmap` and iforest otherwise.
    #[arg(long, value_enum)]
    pub detector: Option<Detector>,
    #[arg(long, value_enum, default_value_t = Reducer::None)]
    pub reducer: Reducer,
    /// Target dimension of the reduction, capped at the column count.
    #[arg(long, default_value_t = DEFAULT_FASTMAP_DIMS)]
    pub dims: usize,
    #[arg(long, default_value_t = DEFAULT_PIVOT_ITERS)]
    pub pivot_iters: usize,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[arg(long, default_value_t = 256)]
    pub subsample: usize,
    /// LOF neighborhood size, capped at one less than the row count.
    #[arg(long, default_value_t = 20)]
    pub lof_k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl DetectorArgs {
    pub fn resolved_detector(&self) -> Detector {
        self.detector.unwrap_or(match self.reducer {
            Reducer::Fastmap => Detector::Lof,
            _ => Detector::Iforest,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DetectArgs {
    #[command(flatten)]
    pub features: FeatureArgs,
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// Number of most anomalous objects whose lifecycles are written.
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    /// Longest lifecycle printed in full.
    #[arg(long, default_value_t = DEFAULT_MAX_EVENTS)]
    pub max_events: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AggregateArgs {
    #[command(flatten)]
    pub features: FeatureArgs,
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// Use object scores from this CSV (object_id,score) instead of detecting.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub top_n: usize,
    /// Features with more distinct values are reported as a whole column.
    #[arg(long, default_value_t = DEFAULT_MAX_DISTINCT)]
    pub max_distinct: usize,
    /// Report identical indicator columns separately.
    #[arg(long)]
    pub no_merge: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    Statistical,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AbstractArgs {
    #[command(flatten)]
    pub features: FeatureArgs,
    #[arg(long, value_enum, default_value_t = OracleKind::Statistical)]
    pub oracle: OracleKind,
    /// Fence width in interquartile ranges for the statistical oracle.
    #[arg(long, default_value_t = DEFAULT_WHISKER)]
    pub whisker: f64,
    /// Also export the raw feature table; with `--oracle llm`, send it instead
    /// of the summary.
    #[arg(long)]
    pub raw_table: bool,
    /// Chat-completions URL of an OpenAI-compatible endpoint.
    #[arg(long)]
    pub llm_url: Option<String>,
    #[arg(long)]
    pub llm_model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "OCANOMALY_LLM_KEY")]
    pub llm_key_env: String,
    #[arg(long, default_value_t = 60)]
    pub timeout_secs: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct ReplayArgs {
    /// The run.json written by an earlier run.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where to write the rerun's outputs; a temporary directory by default.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}
