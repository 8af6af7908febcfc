//! Command-line definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use latentslam_core::domain::ImageShape;

#[derive(Debug, Parser)]
#[command(name = "latentslam", version, about = "Latent-space SLAM on simulated aliased warehouses")]
#[command(propagate_version = true)]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Flat `key = value` file. Keys are long flag names without the leading
    /// dashes; flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic warehouse dataset.
    Simulate(SimulateArgs),
    /// Train the latent state-space model on a dataset.
    Train(TrainArgs),
    /// Run SLAM over one dataset sequence.
    Slam(SlamArgs),
    /// Score a SLAM run against ground truth.
    Eval(EvalArgs),
    /// Render a map or a report stream as SVG.
    Plot(PlotArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Train(_) => "train",
            Command::Slam(_) => "slam",
            Command::Eval(_) => "eval",
            Command::Plot(_) => "plot",
        }
    }
}

fn parse_shape(s: &str) -> Result<ImageShape, String> {
    let parts: Vec<&str> = s.split('x').collect();
    let nums: Result<Vec<usize>, _> = parts.iter().map(|p| p.trim().parse::<usize>()).collect();
    match nums.as_deref() {
        Ok([h, w, c]) if *h > 0 && *w > 0 && (*c == 1 || *c == 3) => Ok(ImageShape::new(*h, *w, *c)),
        _ => Err(format!("expected HEIGHTxWIDTHxCHANNELS with 1 or 3 channels, got `{s}`")),
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Dataset directory to create.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,

    /// JSON simulator configuration. The flags below override its fields.
    #[arg(long, value_name = "FILE")]
    pub spec: Option<PathBuf>,

    /// Number of flights (sequences).
    #[arg(long)]
    pub flights: Option<usize>,

    /// Frames per flight.
    #[arg(long)]
    pub frames: Option<usize>,

    /// Cross-aisle visual similarity in [0, 1].
    #[arg(long)]
    pub aliasing: Option<f64>,

    /// Observation shape, e.g. `64x64x3` or `16x16x1`.
    #[arg(long, value_parser = parse_shape, value_name = "HxWxC")]
    pub image: Option<ImageShape>,

    /// Odometry noise std per frame, metres.
    #[arg(long)]
    pub odometry_std_xy: Option<f64>,

    /// Odometry heading noise std per frame, radians.
    #[arg(long)]
    pub odometry_std_theta: Option<f64>,

    /// Per-frame probability of an odometry reset.
    #[arg(long)]
    pub reset_probability: Option<f64>,

    /// Std of additive per-pixel sensor noise.
    #[arg(long)]
    pub pixel_noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory.
    #[arg(long, value_name = "DIR")]
    pub dataset: PathBuf,

    /// Checkpoint file to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    /// Per-epoch loss CSV [default: the checkpoint path with a `.loss.csv` extension].
    #[arg(long, value_name = "FILE")]
    pub log: Option<PathBuf>,

    /// Continue from this checkpoint (weights, optimizer state, epoch count).
    #[arg(long, value_name = "FILE", conflicts_with_all = ["latent_dim", "hidden", "channels"])]
    pub resume: Option<PathBuf>,

    /// Total number of epochs; a resumed run trains only the remainder.
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,

    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-4)]
    pub learning_rate: f64,

    /// Sequence windows per gradient step.
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,

    /// Frames per training window.
    #[arg(long, default_value_t = 16)]
    pub sequence_length: usize,

    /// Weight on the KL term (1 trains the plain free energy).
    #[arg(long, default_value_t = 1.0)]
    pub kl_weight: f64,

    /// Latent dimension [default: 32].
    #[arg(long)]
    pub latent_dim: Option<usize>,

    /// Hidden units of the MLP heads [default: 256].
    #[arg(long)]
    pub hidden: Option<usize>,

    /// Conv encoder channels, comma separated [default: 32,64,128,256].
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct SlamArgs {
    /// Dataset directory.
    #[arg(long, value_name = "DIR")]
    pub dataset: PathBuf,

    /// Trained model checkpoint.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,

    /// Output directory for map.json, reports.jsonl, edges.csv and summary.json.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,

    /// Sequence to process [default: the first in the manifest].
    #[arg(long)]
    pub sequence: Option<String>,

    /// Process only the first N frames.
    #[arg(long, value_name = "N")]
    pub max_frames: Option<usize>,

    /// Cosine distance below which a latent matches a view cell.
    #[arg(long)]
    pub view_threshold: Option<f64>,

    /// Pose-cell agreement radius for re-entering an experience, in cells.
    #[arg(long)]
    pub match_radius: Option<usize>,

    /// Activity injected by a matched view cell.
    #[arg(long)]
    pub injection_energy: Option<f64>,

    /// Global inhibition subtracted per attractor iteration.
    #[arg(long)]
    pub inhibit: Option<f64>,

    /// Excitation kernel width in x/y cells.
    #[arg(long)]
    pub excite_sigma_xy: Option<f64>,

    /// Excitation kernel width in heading cells.
    #[arg(long)]
    pub excite_sigma_theta: Option<f64>,

    /// Attractor iterations per frame.
    #[arg(long)]
    pub can_iterations: Option<usize>,

    /// Relaxation sweeps per trigger.
    #[arg(long)]
    pub relax_iterations: Option<usize>,

    /// Relaxation step size in [0, 0.5].
    #[arg(long)]
    pub relax_alpha: Option<f64>,

    /// Relax after every frame rather than only on loop closures.
    #[arg(long)]
    pub relax_every_frame: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Map file written by `slam`.
    #[arg(long, value_name = "FILE")]
    pub map: PathBuf,

    /// Dataset directory the map was built from.
    #[arg(long, value_name = "DIR")]
    pub dataset: PathBuf,

    /// Frame reports [default: reports.jsonl next to the map].
    #[arg(long, value_name = "FILE")]
    pub reports: Option<PathBuf>,

    /// Metrics JSON destination [default: standard output].
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,

    /// Ground-truth radius for revisits and false closures, metres.
    #[arg(long, default_value_t = 1.0)]
    pub revisit_radius: f64,

    /// Frames that must separate a revisit from the original visit.
    #[arg(long, default_value_t = 50)]
    pub revisit_gap: usize,

    /// Position tolerance for same-place pairs, metres.
    #[arg(long, default_value_t = 0.3)]
    pub place_tolerance: f64,

    /// Heading tolerance for same-place pairs, degrees.
    #[arg(long, default_value_t = 10.0)]
    pub place_heading_deg: f64,

    /// Minimum frame gap within one sequence for same-place pairs.
    #[arg(long, default_value_t = 30)]
    pub place_gap: usize,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Map file to draw.
    #[arg(long, value_name = "FILE", required_unless_present = "reports", conflicts_with = "reports")]
    pub map: Option<PathBuf>,

    /// Frame report stream to draw (decoded pose trace).
    #[arg(long, value_name = "FILE")]
    pub reports: Option<PathBuf>,

    /// SVG file to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    /// Overlay the dead-reckoning trace of this dataset's sequence.
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<PathBuf>,

    /// Sequence for the overlay [default: the first in the manifest].
    #[arg(long, requires = "dataset")]
    pub sequence: Option<String>,

    /// Image width in pixels.
    #[arg(long, default_value_t = 800)]
    pub width: u32,
}
