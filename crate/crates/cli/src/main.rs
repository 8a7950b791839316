use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
#[cfg(test)]
use clap::CommandFactory;

mod commands;

/// Contact-field labeling pipeline: synthesize, filter, label, solve and
/// evaluate tool-use episodes stored as JSONL.
#[derive(Debug, Parser)]
#[command(name = "contact-field", version, help_expected = true)]
struct Cli {
    /// Worker threads for frame-level parallelism (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Seed for every randomized stage; overrides seeds in config files.
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scraping episode with ground-truth labels.
    Synth(SynthArgs),
    /// Smooth the tactile channels of an episode.
    Filter(FilterArgs),
    /// Label an episode from scene geometry and sparse contacts.
    LabelSim(LabelSimArgs),
    /// Label an episode from table height and the tactile wrench.
    LabelReal(LabelRealArgs),
    /// Solve per-frame contact forces for explicit candidate sets.
    SolveForces(SolveForcesArgs),
    /// Compare predicted contact fields against reference fields.
    Eval(EvalArgs),
    /// Fit the tactile force scale against a reference wrench.
    Calibrate(CalibrateArgs),
    /// Write one frame's labeled point cloud as ASCII PLY.
    ExportPly(ExportPlyArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// JSON generator configuration; omitted keys take their defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output episode (JSONL); frames carry ground-truth labels.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Number of frames, overriding the configuration.
    #[arg(long, value_name = "N")]
    frames: Option<usize>,
    /// Also write the per-frame sparse contacts (JSONL, one array per line).
    #[arg(long, value_name = "PATH")]
    contacts: Option<PathBuf>,
    /// Also write the injected wrenches and contact sets (JSONL).
    #[arg(long, value_name = "PATH")]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FilterArgs {
    /// Input episode (JSONL).
    #[arg(long, value_name = "PATH")]
    episode: PathBuf,
    /// YAML or JSON filter configuration (defaults when omitted).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output episode (JSONL).
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct LabelSimArgs {
    /// Environment SDF scene (JSON array of primitives).
    #[arg(long, value_name = "PATH")]
    scene: PathBuf,
    /// Sparse contacts, one JSON array per frame (JSONL).
    #[arg(long, value_name = "PATH")]
    contacts: PathBuf,
    /// Input episode (JSONL).
    #[arg(long, value_name = "PATH")]
    episode: PathBuf,
    /// Output contact fields (JSONL).
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Sharpness exponent of the probability decay.
    #[arg(long, default_value_t = 1.7)]
    k_sharpness: f64,
    /// Clearance at which contact probability is one half (m).
    #[arg(long, default_value_t = 0.005)]
    half_prob_depth: f64,
    /// Locality of the force interpolation kernel (1/m).
    #[arg(long, default_value_t = 50.0)]
    lambda_dist: f64,
    /// Clearance at which extrapolated forces vanish (m).
    #[arg(long, default_value_t = 0.005)]
    d_thresh: f64,
    /// Percentile of nonzero force magnitudes to clip at.
    #[arg(long, default_value_t = 98.0)]
    clip_percentile: f64,
    /// Disable magnitude clipping.
    #[arg(long)]
    no_clip: bool,
}

#[derive(Debug, Args)]
struct LabelRealArgs {
    /// Input episode (JSONL).
    #[arg(long, value_name = "PATH")]
    episode: PathBuf,
    /// YAML or JSON filter and gating configuration (defaults when omitted).
    #[arg(long, value_name = "PATH")]
    filter_config: Option<PathBuf>,
    /// Table height in meters, or `from-frames` to use each frame's value.
    #[arg(long, default_value = "from-frames", value_name = "Z|from-frames")]
    table_z: String,
    /// Output contact fields (JSONL).
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Per-frame diagnostics (JSONL); defaults to `<out>.diag.jsonl`.
    #[arg(long, value_name = "PATH")]
    diagnostics: Option<PathBuf>,
    /// Height band above the table treated as potential contact (m).
    #[arg(long, default_value_t = 0.004)]
    epsilon_height: f64,
    /// Ridge weight of the force solver.
    #[arg(long, default_value_t = 0.01)]
    lambda: f64,
    /// Probability offset inside the ridge weight.
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Tactile force scale from `calibrate`.
    #[arg(long, default_value_t = 1.0)]
    calibration: f64,
}

#[derive(Debug, Args)]
struct SolveForcesArgs {
    /// Episode the candidates belong to (JSONL); supplies tactile wrenches.
    #[arg(long, value_name = "PATH")]
    episode: PathBuf,
    /// Candidate sets, one `{"t", "candidates", "wrench"?}` record per frame.
    #[arg(long, value_name = "PATH")]
    candidates: PathBuf,
    /// Ridge weight.
    #[arg(long, default_value_t = 0.01)]
    lambda: f64,
    /// Probability offset inside the ridge weight.
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Tactile force scale applied when the wrench comes from markers.
    #[arg(long, default_value_t = 1.0)]
    calibration: f64,
    /// Output solutions (JSONL).
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Predicted fields (field JSONL or labeled episode).
    #[arg(long, value_name = "PATH")]
    pred: PathBuf,
    /// Reference fields (field JSONL or labeled episode).
    #[arg(long, value_name = "PATH")]
    gt: PathBuf,
    /// Write the JSON report here as well as to stdout.
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
    /// Probability threshold for contact classification.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Episode with tactile markers (JSONL).
    #[arg(long, value_name = "PATH")]
    episode: PathBuf,
    /// Reference wrench JSON `{"force": [..], "torque": [..]}` in the gripper frame.
    #[arg(long, value_name = "PATH")]
    reference: PathBuf,
    /// Frame index to calibrate on (default: the frame with the largest signal).
    #[arg(long, value_name = "INDEX")]
    frame: Option<usize>,
    /// Write `{"scale", "frame"}` here as well as to stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExportPlyArgs {
    /// Episode supplying the tool points (JSONL).
    #[arg(long, value_name = "PATH")]
    episode: PathBuf,
    /// Contact fields to attach (default: the episode's own labels).
    #[arg(long, value_name = "PATH")]
    fields: Option<PathBuf>,
    /// Frame index to export.
    #[arg(long, default_value_t = 0)]
    frame: usize,
    /// Output PLY path.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let io = e
                .chain()
                .any(|c| c.downcast_ref::<contact_field::Error>().is_some_and(|e| e.is_io()));
            ExitCode::from(if io { 2 } else { 1 })
        }
    }
}
