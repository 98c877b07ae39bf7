//! Command-line surface: one subcommand per analysis artifact.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "ddp",
    version,
    about = "SVD-based layer decomposition and dataset profiling for CNNs",
    after_help = "Set DDP_LOG=info (or debug) for run diagnostics."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a self-contained model (and dataset) fixture
    Fixture(FixtureArgs),
    /// Write per-layer SVD factors (U, S, V) and a summary table
    Decompose(DecomposeArgs),
    /// Gram-spectrum histograms, power-law fits, and singular-value counts
    Spectrum(SpectrumArgs),
    /// Per-layer tail exponents and the capacity metric
    Alpha(AlphaArgs),
    /// Forward passes over a dataset producing the signal profile
    Profile(ProfileArgs),
    /// Class hypergraphs and semantic hierarchies from a stored profile
    Hypergraph(HypergraphArgs),
    /// Rank dataset images by weighted signal response
    Exemplars(ExemplarsArgs),
    /// Stage-by-stage heatmaps of one conv layer applied to one image
    DecomposeImage(DecomposeImageArgs),
}

#[derive(Args, Debug)]
pub struct FixtureArgs {
    /// Architecture to generate: mnist or vgg16-conv
    #[arg(long, default_value = "mnist")]
    pub arch: String,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Number of synthetic dataset images (mnist only)
    #[arg(long, default_value_t = 100)]
    pub images: usize,
    /// Seed for all generated randomness
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct DecomposeArgs {
    /// Model manifest path
    #[arg(long)]
    pub model: PathBuf,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated layer ids (default: every conv layer)
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<String>>,
    /// Also write the unfolded weight matrix of each layer
    #[arg(long)]
    pub dump_matrix: bool,
}

#[derive(Args, Debug)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated layer ids (default: every linear layer)
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<String>>,
    /// Matrization to analyze: w1 (unfolded) or w2 (Toeplitz)
    #[arg(long, default_value = "w1", value_parser = ["w1", "w2"])]
    pub matrization: String,
    /// Worker threads (0 = all cores)
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Also write the analyzed matrices as tensor containers
    #[arg(long)]
    pub dump_matrix: bool,
}

#[derive(Args, Debug)]
pub struct AlphaArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated layer ids (default: every linear layer)
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<String>>,
    /// Select the averaged capacity variant as the headline value
    #[arg(long)]
    pub mean: bool,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Args, Debug)]
pub struct ProfileArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset directory (labels.csv plus <image_id>.ddpt tensors)
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated layer ids (default: every linear layer)
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<String>>,
    /// Quantile fractions for the per-layer threshold table
    #[arg(long, value_delimiter = ',', default_values_t = [0.85, 0.95])]
    pub quantiles: Vec<f64>,
    /// Pool thresholds over a seed-fixed subsample of this many images (0 = all)
    #[arg(long, default_value_t = 0)]
    pub sample: usize,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct HypergraphArgs {
    /// Directory holding profile.csv and layers.csv (also receives output)
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated layer ids (default: every profiled layer)
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<String>>,
    /// Quantile fractions defining the signal thresholds
    #[arg(long, value_delimiter = ',', default_values_t = [0.85, 0.95])]
    pub quantiles: Vec<f64>,
    /// Class percentages in (50, 100]
    #[arg(long, value_delimiter = ',', default_values_t = [75.0])]
    pub percentiles: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct ExemplarsArgs {
    /// Directory holding profile.csv and layers.csv (also receives output)
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset directory; top-ranked image tensors are copied from here
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Single layer id to rank against
    #[arg(long)]
    pub layers: String,
    /// Weighted vector indices, e.g. "0:1.0,3:0.5" ("3" means weight 1)
    #[arg(long)]
    pub weights: String,
    /// How many images to keep
    #[arg(long, default_value_t = 5)]
    pub topk: usize,
}

#[derive(Args, Debug)]
pub struct DecomposeImageArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Single conv layer id to decompose
    #[arg(long)]
    pub layers: String,
    /// Verify the staged reconstruction identities and fail on mismatch
    #[arg(long)]
    pub check: bool,
    /// Image tensor (.ddpt)
    pub image: PathBuf,
}
