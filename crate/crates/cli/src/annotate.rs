use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use flowtrack_core::annotate::{lidar_trajectories, parse_points, PedestrianTrack};
use flowtrack_core::{CameraIntrinsics, Error, PoseLog};

use crate::commands::TRAJECTORY_CSV;
use crate::AnnotateMode;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn run(mode: AnnotateMode, poses: Option<&Path>, points: &Path, intrinsics: Option<[f64; 4]>, out: &Path) -> Result<()> {
    let traj = match mode {
        AnnotateMode::Pedestrian => PedestrianTrack::parse(&read(points)?)
            .with_context(|| format!("parsing {}", points.display()))?
            .trajectory()?,
        AnnotateMode::Background | AnnotateMode::Vehicle => {
            let poses = poses.ok_or_else(|| Error::Config("--poses is required in this mode".into()))?;
            let log = PoseLog::parse(&read(poses)?).with_context(|| format!("parsing {}", poses.display()))?;
            let pts = parse_points(&read(points)?).with_context(|| format!("parsing {}", points.display()))?;
            let mut traj = lidar_trajectories(&pts, &log, matches!(mode, AnnotateMode::Vehicle))?;
            if let Some(k) = intrinsics {
                traj.intrinsics = Some(CameraIntrinsics::from_slice(&k)?);
            }
            traj
        }
    };
    traj.write(out).with_context(|| format!("writing {}", out.display()))?;
    let csv = out.join(TRAJECTORY_CSV);
    fs::write(&csv, traj.to_csv()).with_context(|| format!("writing {}", csv.display()))?;
    println!("{} points over {} frames -> {}", traj.num_points(), traj.num_frames(), out.display());
    Ok(())
}
