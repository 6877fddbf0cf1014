use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use netevo::embed::{Features, Prior, TrainConfig};
use netevo::neighbors::{BaselineSimilarity, Method};
use netevo::synth::SynthConfig;

#[derive(Debug, Parser)]
#[command(name = "netevo", version, about = "Predict brain network evolution from a baseline observation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Experiment seed; every random draw derives from it
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Output directory, created if missing
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    #[arg(long, global = true, value_enum, default_value_t = Verbosity::Normal)]
    pub verbosity: Verbosity,

    /// Overwrite existing result files
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Verbosity {
    Quiet,
    Normal,
    Debug,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic clustered longitudinal population
    Generate(GenerateArgs),
    /// Estimate the population template at one timepoint
    Cbt(CbtArgs),
    /// Embed a single network
    Embed(EmbedArgs),
    /// Predict one subject's follow-up networks from the rest of the population
    Predict(PredictArgs),
    /// Leave-one-out evaluation of the neighbor-selection methods
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 40)]
    pub subjects: usize,
    #[arg(long, default_value_t = 35)]
    pub rois: usize,
    #[arg(long, default_value_t = 4)]
    pub clusters: usize,
    #[arg(long, default_value_t = 2)]
    pub timepoints: usize,
    /// Per-entry thickness noise standard deviation
    #[arg(long, default_value_t = 0.05)]
    pub within_cluster_noise: f64,
    /// Minimum L2 distance between cluster prototypes
    #[arg(long, default_value_t = 3.0)]
    pub between_cluster_separation: f64,
    /// Standard deviation of each cluster's per-timepoint drift
    #[arg(long, default_value_t = 0.3)]
    pub drift_scale: f64,
}

impl GenerateArgs {
    pub fn config(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            n_subjects: self.subjects,
            n_rois: self.rois,
            n_clusters: self.clusters,
            n_timepoints: self.timepoints,
            within_cluster_noise: self.within_cluster_noise,
            between_cluster_separation: self.between_cluster_separation,
            drift_scale: self.drift_scale,
            seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct CbtArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Timepoint label [default: the baseline]
    #[arg(long)]
    pub timepoint: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PriorArg {
    Gaussian,
    DataRows,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeaturesArg {
    Identity,
    Ones,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimilarityArg {
    Dot,
    Cosine,
}

impl From<SimilarityArg> for BaselineSimilarity {
    fn from(s: SimilarityArg) -> Self {
        match s {
            SimilarityArg::Dot => BaselineSimilarity::Dot,
            SimilarityArg::Cosine => BaselineSimilarity::Cosine,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 0.005)]
    pub learning_rate_encoder: f64,
    #[arg(long, default_value_t = 0.005)]
    pub learning_rate_discriminator: f64,
    #[arg(long, default_value_t = 30)]
    pub iterations: usize,
    /// Standard deviation of the hidden-layer training noise
    #[arg(long, default_value_t = 0.1)]
    pub noise_sigma: f64,
    /// Embedding width per node
    #[arg(long = "h", default_value_t = 16)]
    pub h: usize,
    #[arg(long, default_value_t = 1.0)]
    pub adversarial_weight: f64,
    #[arg(long, value_enum, default_value_t = PriorArg::Gaussian)]
    pub prior: PriorArg,
    #[arg(long, value_enum, default_value_t = FeaturesArg::Identity)]
    pub features: FeaturesArg,
}

impl TrainArgs {
    pub fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate_encoder: self.learning_rate_encoder,
            learning_rate_discriminator: self.learning_rate_discriminator,
            iterations: self.iterations,
            noise_sigma: self.noise_sigma,
            h: self.h,
            adversarial_weight: self.adversarial_weight,
            prior: match self.prior {
                PriorArg::Gaussian => Prior::Gaussian,
                PriorArg::DataRows => Prior::DataRows,
            },
            features: match self.features {
                FeaturesArg::Identity => Features::Identity,
                FeaturesArg::Ones => Features::Ones,
            },
            seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Matrix CSV
    #[arg(long)]
    pub matrix: PathBuf,
    /// Identifier mixed into the noise seed and used in file names [default: file stem]
    #[arg(long)]
    pub subject_id: Option<String>,
    #[command(flatten)]
    pub train: TrainArgs,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: netevo::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Id of the subject to predict; all other subjects are the reference
    #[arg(long)]
    pub subject: String,
    /// resnets, esnets, snets or random-selection
    #[arg(long, value_parser = parse_method, default_value = "resnets")]
    pub method: Method,
    /// Number of neighbors
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = SimilarityArg::Dot)]
    pub similarity: SimilarityArg,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Comma-separated methods
    #[arg(long, value_parser = parse_method, value_delimiter = ',', default_value = "resnets,esnets,snets")]
    pub methods: Vec<Method>,
    /// Comma-separated neighborhood sizes
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    pub k: Vec<usize>,
    #[arg(long, value_enum, default_value_t = SimilarityArg::Dot)]
    pub similarity: SimilarityArg,
    #[command(flatten)]
    pub train: TrainArgs,
}
