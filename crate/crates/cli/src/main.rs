//! `flowtrack`: generate synthetic samples, track points, evaluate and
//! build annotations.
//!
//! Exit codes: 0 ok, 2 configuration or input error, 3 I/O, 4 shape
//! mismatch, 5 nothing left to evaluate.

mod annotate;
mod commands;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use flowtrack_core::{InferenceMode, SupportMode};

#[derive(Parser)]
#[command(name = "flowtrack", version, about = "Long-term 3D point tracking on RGB-D video")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render every `[[sample]]` of a TOML scene file into OUT/<name>.
    Generate {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write seeded random weights for a configuration.
    InitWeights {
        #[arg(long)]
        random_seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Track a sample's query points.
    Track {
        sample: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Weight directory written by `init-weights` (or trained elsewhere).
        #[arg(long, conflicts_with = "random_seed")]
        weights: Option<PathBuf>,
        /// Use seeded random weights instead of a weight directory.
        #[arg(long)]
        random_seed: Option<u64>,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
    },
    /// Compare predicted trajectories with ground truth.
    Eval {
        /// Trajectory directory.
        pred: PathBuf,
        /// Trajectory or sample directory.
        gt: PathBuf,
        /// Image size `HxW`; taken from the sample when GT is one.
        #[arg(long, value_parser = parse_resolution)]
        resolution: Option<(usize, usize)>,
        /// Drop ground-truth entries at or beyond this depth (m).
        #[arg(long)]
        depth_cap: Option<f64>,
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build ground-truth trajectories from poses, LiDAR points or stereo tracks.
    Annotate {
        #[arg(long, value_enum)]
        mode: AnnotateMode,
        /// Pose log (background and vehicle modes).
        #[arg(long)]
        poses: Option<PathBuf>,
        /// `x y z [box]` lines, or a pedestrian track file in pedestrian mode.
        #[arg(long)]
        points: PathBuf,
        /// `fx,fy,cx,cy`, attached to LiDAR trajectories for the uvd columns.
        #[arg(long, value_parser = parse_intrinsics)]
        intrinsics: Option<[f64; 4]>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Run configuration: defaults, then `--config`, then individual flags.
#[derive(clap::Args, Clone, Default)]
struct ConfigArgs {
    /// RunConfig as TOML or JSON (e.g. a previous run_config.json).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// `none`, `loc`, `glo` or `loc,glo`.
    #[arg(long, value_parser = parse_support)]
    support: Option<SupportMode>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    block_pairs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    One,
    All,
}

impl From<Mode> for InferenceMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::One => InferenceMode::One,
            Mode::All => InferenceMode::All,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    /// Tracker uv lifted through the depth maps.
    Tap,
    /// Chained two-frame scene flow (the sample's ground-truth flow).
    Sf,
}

#[derive(Clone, Copy, ValueEnum)]
enum AnnotateMode {
    Background,
    Vehicle,
    Pedestrian,
}

fn parse_resolution(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or("expected HxW")?;
    let dim = |v: &str| v.trim().parse::<usize>().ok().filter(|v| *v > 0).ok_or(format!("bad size `{v}`"));
    Ok((dim(h)?, dim(w)?))
}

fn parse_support(s: &str) -> Result<SupportMode, String> {
    let mut mode = SupportMode::NONE;
    for part in s.split(',').map(str::trim) {
        match part {
            "none" => {}
            "loc" | "local" => mode.local = true,
            "glo" | "global" => mode.global = true,
            other => return Err(format!("unknown support set `{other}`")),
        }
    }
    Ok(mode)
}

fn parse_intrinsics(s: &str) -> Result<[f64; 4], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad number `{p}`")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| "expected fx,fy,cx,cy".to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate { spec, out } => commands::generate(&spec, &out),
        Command::InitWeights { random_seed, out, config } => commands::init_weights(random_seed, &out, &config),
        Command::Track {
            sample,
            out,
            weights,
            random_seed,
            config,
            baseline,
        } => commands::track(&sample, &out, weights.as_deref(), random_seed, &config, baseline),
        Command::Eval {
            pred,
            gt,
            resolution,
            depth_cap,
            out,
        } => commands::eval(&pred, &gt, resolution, depth_cap, out.as_deref()),
        Command::Annotate {
            mode,
            poses,
            points,
            intrinsics,
            out,
        } => annotate::run(mode, poses.as_deref(), &points, intrinsics, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code(&e))
        }
    }
}
