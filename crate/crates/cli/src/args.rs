//! Command-line surface.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use leap::ect::{DEFAULT_DIRECTIONS, DEFAULT_SHARPNESS, DEFAULT_THRESHOLDS};
use leap::encoders::leap::DEFAULT_PE_DIM;
use leap::train::LossKind;
use leap::{Backbone, LeapConfig, ModelConfig, PeSpec, ProjectionKind, Task, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "leap", version, about = "Local Euler characteristic transform encodings for graphs")]
pub struct Cli {
    /// Seed for every random choice (directions, initialization, splits).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact and smoothed Euler characteristic transforms of one graph.
    Ect(EctArgs),
    /// Append positional encodings to every graph of a dataset.
    Encode(EncodeArgs),
    /// Generate the synthetic edge-count dataset.
    Synth(SynthArgs),
    /// Cross-validated training and evaluation.
    Train(TrainArgs),
    /// Train over a grid of encoder settings, one table row per cell.
    Ablate(AblateArgs),
}

/// Hop levels such as `1`, `2` or `1+2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HopSpec(pub Vec<usize>);

impl FromStr for HopSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let hops = s
            .split('+')
            .map(|part| match part.trim().parse::<usize>() {
                Ok(0) | Err(_) => Err(format!("invalid hop level `{part}` (expected e.g. 1, 2 or 1+2)")),
                Ok(h) => Ok(h),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self(hops))
    }
}

impl fmt::Display for HopSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        f.write_str(&parts.join("+"))
    }
}

fn parse_projection(s: &str) -> Result<ProjectionKind, String> {
    s.parse().map_err(|e: leap::Error| e.to_string())
}

fn parse_backbone(s: &str) -> Result<Backbone, String> {
    s.parse().map_err(|e: leap::Error| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PeKind {
    None,
    Rwpe,
    Lape,
    /// LEAP with learnable directions.
    #[value(alias = "leap-l")]
    Leap,
    /// LEAP with fixed directions.
    LeapF,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Ce,
    Mse,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Ce => LossKind::CrossEntropy,
            LossArg::Mse => LossKind::Mse,
        }
    }
}

/// Encoder settings shared by `encode` and `train`.
#[derive(Debug, Clone, Args)]
pub struct LeapArgs {
    /// Number of directions |Θ|.
    #[arg(long, default_value_t = DEFAULT_DIRECTIONS)]
    pub dirs: usize,
    /// Number of thresholds |T|.
    #[arg(long, default_value_t = DEFAULT_THRESHOLDS)]
    pub thresholds: usize,
    /// Sigmoid sharpness λ of the smoothed transform.
    #[arg(long, default_value_t = DEFAULT_SHARPNESS)]
    pub sharpness: f64,
    /// Neighborhood radius; `1+2` concatenates both levels.
    #[arg(long, default_value = "1")]
    pub hops: HopSpec,
    /// Encoding dimension k.
    #[arg(long, default_value_t = DEFAULT_PE_DIM)]
    pub pe_dim: usize,
    /// Projection from local transforms to encodings.
    #[arg(long, value_parser = parse_projection, default_value = "linear")]
    pub proj: ProjectionKind,
    /// Train the directions (default: on for leap, off for leap-f).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub learn_directions: Option<bool>,
}

impl LeapArgs {
    pub fn config(&self, fixed_by_default: bool) -> LeapConfig {
        LeapConfig {
            hops: self.hops.0.clone(),
            directions: self.dirs,
            thresholds: self.thresholds,
            sharpness: self.sharpness,
            projection: self.proj,
            dim: self.pe_dim,
            learn_directions: self.learn_directions.unwrap_or(!fixed_by_default),
            seed: 0,
        }
    }

    pub fn pe_spec(&self, kind: PeKind) -> PeSpec {
        match kind {
            PeKind::None => PeSpec::None,
            PeKind::Rwpe => PeSpec::Rwpe { dim: self.pe_dim },
            PeKind::Lape => PeSpec::Lape { dim: self.pe_dim },
            PeKind::Leap => PeSpec::Leap(self.config(false)),
            PeKind::LeapF => PeSpec::Leap(self.config(true)),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Backbone: gcn, gat or nomp.
    #[arg(long, value_parser = parse_backbone, default_value = "gcn")]
    pub backbone: Backbone,
    /// Message-passing layers (default 5).
    #[arg(long)]
    pub layers: Option<usize>,
    /// Hidden width (default 32).
    #[arg(long)]
    pub hidden: Option<usize>,
}

impl ModelArgs {
    pub fn config(&self, feature_dim: usize, task: Task, pe: PeSpec, seed: u64) -> ModelConfig {
        let mut config = ModelConfig::standard(self.backbone, feature_dim, task, pe);
        config.layers = self.layers.unwrap_or(config.layers);
        config.hidden = self.hidden.unwrap_or(config.hidden);
        config.seed = seed;
        config
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Cross-validation folds.
    #[arg(long, default_value_t = TrainConfig::default().folds)]
    pub folds: usize,
    /// Maximum epochs per fold.
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    pub batch_size: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = TrainConfig::default().lr)]
    pub lr: f64,
    /// Early-stopping patience in epochs.
    #[arg(long, default_value_t = TrainConfig::default().patience)]
    pub patience: usize,
    /// Share of each training split held out for early stopping.
    #[arg(long, default_value_t = TrainConfig::default().val_fraction)]
    pub val_fraction: f64,
    /// Use plain instead of class-stratified folds.
    #[arg(long)]
    pub no_stratify: bool,
    /// Loss (default: ce for classification, mse for regression).
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
}

impl FitArgs {
    pub fn config(&self, task: Task, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            patience: self.patience,
            folds: self.folds,
            val_fraction: self.val_fraction,
            stratified: !self.no_stratify,
            seed,
            loss: self.loss.map_or_else(|| LossKind::for_task(task), Into::into),
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct EctArgs {
    /// Graphs as JSON lines.
    #[arg(long)]
    pub input: PathBuf,
    /// Zero-based line of the graph to transform.
    #[arg(long, default_value_t = 0)]
    pub graph: usize,
    /// Emit the exact transform (default: both exact and smoothed).
    #[arg(long)]
    pub exact: bool,
    /// Emit the smoothed transform (default: both exact and smoothed).
    #[arg(long)]
    pub smooth: bool,
    #[arg(long, default_value_t = DEFAULT_DIRECTIONS)]
    pub dirs: usize,
    #[arg(long, default_value_t = DEFAULT_THRESHOLDS)]
    pub thresholds: usize,
    #[arg(long, default_value_t = DEFAULT_SHARPNESS)]
    pub sharpness: f64,
    /// Lowest threshold (default: just below every projection).
    #[arg(long, allow_hyphen_values = true)]
    pub t_min: Option<f64>,
    /// Highest threshold (default: just above every projection).
    #[arg(long, allow_hyphen_values = true)]
    pub t_max: Option<f64>,
    /// Transform the normalized neighborhood of this node instead.
    #[arg(long)]
    pub node: Option<usize>,
    /// Neighborhood radius for --node.
    #[arg(long, default_value_t = 1)]
    pub hops: usize,
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Dataset as JSON lines or a TU directory.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "leap")]
    pub pe: PeKind,
    /// Parameter file written by `train` (required for leap).
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Use a randomly initialized LEAP encoder instead of trained parameters.
    #[arg(long)]
    pub untrained: bool,
    #[command(flatten)]
    pub leap: LeapArgs,
    /// Output JSON lines (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of graphs.
    #[arg(long, default_value_t = leap::data::SyntheticSpec::default().count)]
    pub count: usize,
    /// Output JSON lines (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset as JSON lines or a TU directory.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value = "leap")]
    pub pe: PeKind,
    #[command(flatten)]
    pub leap: LeapArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Metrics report (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where to save the parameters of the best fold.
    #[arg(long)]
    pub params_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Dataset as JSON lines or a TU directory.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Train directions in every cell.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value = "true")]
    pub learn_directions: bool,
    /// Hop settings to sweep, e.g. `1,2,1+2`.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub hops: Vec<HopSpec>,
    /// Encoding dimensions to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [DEFAULT_PE_DIM])]
    pub pe_dim: Vec<usize>,
    /// Direction counts to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [DEFAULT_DIRECTIONS])]
    pub dirs: Vec<usize>,
    /// Threshold counts to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [DEFAULT_THRESHOLDS])]
    pub thresholds: Vec<usize>,
    /// Sharpness values to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [DEFAULT_SHARPNESS])]
    pub sharpness: Vec<f64>,
    /// Projections to sweep.
    #[arg(long, value_delimiter = ',', value_parser = parse_projection, default_value = "linear")]
    pub proj: Vec<ProjectionKind>,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Result table as JSON lines; existing rows are kept and their cells skipped.
    #[arg(long)]
    pub out: PathBuf,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn hop_specs() {
        assert_eq!("1+2".parse::<HopSpec>().unwrap(), HopSpec(vec![1, 2]));
        assert_eq!("2".parse::<HopSpec>().unwrap().to_string(), "2");
        assert!("0".parse::<HopSpec>().is_err());
        assert!("1+x".parse::<HopSpec>().is_err());
    }

    #[test]
    fn defaults_follow_the_library() {
        let cli = Cli::parse_from(["leap", "train", "--input", "x.jsonl"]);
        let Command::Train(t) = cli.command else { panic!() };
        let leap = t.leap.config(false);
        assert_eq!(leap, LeapConfig::default());
        let fit = t.fit.config(Task::Classification { classes: 2 }, 0);
        assert_eq!(fit, TrainConfig::default());
        assert!(!t.leap.config(true).learn_directions);
    }
}
