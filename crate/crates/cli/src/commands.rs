use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use flowtrack_core::io::Container;
use flowtrack_core::metrics::evaluate;
use flowtrack_core::synthdata::{self, generate as render_sample, SpecFile};
use flowtrack_core::tracker::{baseline_sf_chain, baseline_tap, random_weights};
use flowtrack_core::{trajectory, Error, ModelWeights, RunConfig, TrajectorySet, Tracker};

use crate::{Baseline, ConfigArgs};

pub const TRAJECTORY_CSV: &str = "trajectories.csv";
pub const RUN_CONFIG: &str = "run_config.json";

pub fn generate(spec: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
    let file: SpecFile = toml::from_str(&text).with_context(|| format!("parsing {}", spec.display()))?;
    for (i, sample) in file.sample.iter().enumerate() {
        let name = sample.name.clone().unwrap_or_else(|| format!("sample_{i:03}"));
        if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
            return Err(Error::Config(format!("sample name `{name}` is not a plain directory name")).into());
        }
        let record = render_sample(sample).with_context(|| format!("sample `{name}`"))?;
        let dir = out.join(&name);
        synthdata::write_sample(&record, &dir).with_context(|| format!("writing {}", dir.display()))?;
        let gt = &record.trajectories;
        let visible = gt.valid.iter().filter(|v| **v).count() as f64 / gt.valid.len().max(1) as f64;
        println!(
            "{name}: {} frames, {}x{}, {} queries, {:.1}% visible, {} outlier pixels",
            record.video.frames(),
            record.video.height(),
            record.video.width(),
            gt.num_points(),
            100.0 * visible,
            record.outliers.iter().filter(|o| **o != 0).count(),
        );
    }
    Ok(())
}

/// Defaults, then the config file, then individual flags.
pub fn run_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        None => RunConfig::default(),
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            if path.extension().is_some_and(|e| e == "json") {
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            } else {
                toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
        }
    };
    if let Some(m) = args.mode {
        cfg.mode = m.into();
    }
    if let Some(s) = args.support {
        cfg.support = s;
    }
    if let Some(v) = args.window {
        cfg.window = v;
    }
    if let Some(v) = args.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = args.block_pairs {
        cfg.block_pairs = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn init_weights(seed: u64, out: &Path, args: &ConfigArgs) -> Result<()> {
    let mut cfg = run_config(args)?;
    cfg.weight_seed = Some(seed);
    let w = random_weights(&cfg, seed);
    w.write(out).with_context(|| format!("writing {}", out.display()))?;
    write_config(&cfg, out)?;
    println!("{} tensors, {} parameters -> {}", w.len(), w.param_count(), out.display());
    Ok(())
}

fn write_config(cfg: &RunConfig, out: &Path) -> Result<()> {
    let path = out.join(RUN_CONFIG);
    fs::write(&path, serde_json::to_string_pretty(cfg)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn build_tracker(cfg: &mut RunConfig, weights: Option<&Path>, seed: Option<u64>) -> Result<Tracker> {
    let w = match (weights, seed) {
        (Some(dir), _) => ModelWeights::read(dir).with_context(|| format!("reading weights {}", dir.display()))?,
        (None, Some(seed)) => {
            cfg.weight_seed = Some(seed);
            random_weights(cfg, seed)
        }
        (None, None) => bail!(Error::Config("pass --weights or --random-seed".into())),
    };
    Ok(Tracker::from_weights(&w, cfg)?)
}

pub fn track(
    sample: &Path,
    out: &Path,
    weights: Option<&Path>,
    seed: Option<u64>,
    args: &ConfigArgs,
    baseline: Option<Baseline>,
) -> Result<()> {
    let mut cfg = run_config(args)?;
    let record = synthdata::read_sample(sample).with_context(|| format!("reading sample {}", sample.display()))?;
    let queries = record.queries.view();
    let traj = match baseline {
        Some(Baseline::Sf) => baseline_sf_chain(&record.video, queries, &record.flow_source())?,
        Some(Baseline::Tap) => baseline_tap(&build_tracker(&mut cfg, weights, seed)?, &record.video, queries)?,
        None => build_tracker(&mut cfg, weights, seed)?.track(&record.video, queries)?,
    };
    traj.write(out).with_context(|| format!("writing {}", out.display()))?;
    let csv = out.join(TRAJECTORY_CSV);
    fs::write(&csv, traj.to_csv()).with_context(|| format!("writing {}", csv.display()))?;
    write_config(&cfg, out)?;
    println!(
        "tracked {} points over {} frames -> {}",
        traj.num_points(),
        traj.num_frames(),
        out.display()
    );
    Ok(())
}

/// Trajectories from a trajectory directory, or the ground truth of a
/// sample directory together with its image size.
fn load_trajectories(dir: &Path) -> Result<(TrajectorySet, Option<(usize, usize)>)> {
    let c = Container::read(dir).with_context(|| format!("reading {}", dir.display()))?;
    if c.kind == synthdata::CONTAINER_KIND {
        let r = synthdata::from_container(&c)?;
        let size = (r.video.height(), r.video.width());
        return Ok((r.trajectories, Some(size)));
    }
    if c.kind != trajectory::CONTAINER_KIND {
        return Err(Error::CorruptManifest(format!("{}: unexpected `{}` container", dir.display(), c.kind)).into());
    }
    Ok((TrajectorySet::from_container(&c)?, None))
}

pub fn eval(
    pred: &Path,
    gt: &Path,
    resolution: Option<(usize, usize)>,
    depth_cap: Option<f64>,
    out: Option<&Path>,
) -> Result<()> {
    let (p, _) = load_trajectories(pred)?;
    let (g, size) = load_trajectories(gt)?;
    let Some((h, w)) = resolution.or(size) else {
        bail!(Error::Config("--resolution is required unless GT is a sample".into()));
    };
    let report = evaluate(&p, &g, h, w, depth_cap)?;
    print!("{}", report.to_text());
    if let Some(path) = out {
        fs::write(path, report.to_json() + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
