//! Two ways of getting 3D trajectories without predicting depth: lift 2D
//! tracks by reading the depth map, or chain two-frame scene flow.

use nalgebra::Vector3;
use ndarray::{s, Array2, Array3, Array4, ArrayView2, Axis};

use super::{queries_to_uvd, Tracker};
use crate::error::{Error, Result};
use crate::geometry::{bilinear_sample, uvd_to_xyz, xyz_to_uvd, Point3, Uvd};
use crate::trajectory::{CoordFrame, TrajectorySet};
use crate::updater::Updater;
use crate::video::RgbdVideo;

/// Runs the tracker, keeps only its image-plane trajectories and reads each
/// frame's depth map under them.
///
/// Depth at or below the configured minimum (including the zero sentinel)
/// is raised to that minimum.
pub fn baseline_tap<U: Updater>(
    tracker: &Tracker<U>,
    video: &RgbdVideo,
    queries: ArrayView2<'_, f64>,
) -> Result<TrajectorySet> {
    let k = video.intrinsics;
    let min_depth = tracker.config().min_depth;
    let query_uvd = queries_to_uvd(queries, video)?;
    let prepared = tracker.prepare(video)?;
    let uvd = tracker.track_prepared(&prepared, video, query_uvd.view(), &mut ())?;
    let (n, frames, _) = uvd.dim();
    let mut xyz = Array3::zeros((n, frames, 3));
    for a in 0..n {
        for t in 0..frames {
            let (u, v) = (uvd[[a, t, 0]], uvd[[a, t, 1]]);
            let mut d = bilinear_sample(video.depth.index_axis(Axis(0), t), u, v);
            if !(d > min_depth) {
                d = min_depth;
            }
            let q = query_uvd.row(a);
            if [u, v, d] == [q[0], q[1], q[2]] {
                xyz.slice_mut(s![a, t, ..]).assign(&queries.row(a));
            } else {
                let p = uvd_to_xyz(Uvd::new(u, v, d), &k)?;
                xyz.slice_mut(s![a, t, ..]).assign(&ndarray::arr1(&[p.x, p.y, p.z]));
            }
        }
    }
    TrajectorySet::all_valid(xyz, CoordFrame::Camera, Some(k))
}

/// Two-frame 3D motion, frame `t` to `t + 1`.
pub trait FlowSource {
    /// Camera-frame displacement of the surface seen at pixel `(u, v)` of
    /// frame `t` (0-based).
    fn flow(&self, t: usize, u: f64, v: f64) -> Result<Vector3<f64>>;
}

/// Dense per-pixel flow fields, `(T - 1) x H x W x 3`, sampled at the
/// nearest pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseFlow {
    pub flow: Array4<f32>,
}

impl FlowSource for DenseFlow {
    fn flow(&self, t: usize, u: f64, v: f64) -> Result<Vector3<f64>> {
        let (steps, h, w, _) = self.flow.dim();
        if t >= steps {
            return Err(Error::FrameOutOfRange { frame: t, len: steps });
        }
        let nearest = |x: f64, len: usize| {
            if x.is_nan() {
                0
            } else {
                x.round().clamp(0.0, (len - 1) as f64) as usize
            }
        };
        let (i, j) = (nearest(v, h), nearest(u, w));
        let f = self.flow.slice(s![t, i, j, ..]);
        Ok(Vector3::new(f[0] as f64, f[1] as f64, f[2] as f64))
    }
}

/// Chains two-frame flow through the video: move each point by the flow
/// at its pixel, project, and take the next frame's depth at the new
/// pixel. Where that depth is unusable the flowed depth is kept; a point
/// that leaves the front of the camera is invalid from then on.
pub fn baseline_sf_chain(video: &RgbdVideo, queries: ArrayView2<'_, f64>, flow: &dyn FlowSource) -> Result<TrajectorySet> {
    let k = video.intrinsics;
    let query_uvd = queries_to_uvd(queries, video)?;
    let n = queries.nrows();
    let frames = video.frames();
    let mut xyz = Array3::from_elem((n, frames, 3), f64::NAN);
    let mut valid = Array2::from_elem((n, frames), false);
    for a in 0..n {
        xyz.slice_mut(s![a, 0, ..]).assign(&queries.row(a));
        valid[[a, 0]] = true;
        let mut p = Point3::new(queries[[a, 0]], queries[[a, 1]], queries[[a, 2]]);
        let mut uv = (query_uvd[[a, 0]], query_uvd[[a, 1]]);
        for t in 0..frames - 1 {
            let moved = p + flow.flow(t, uv.0, uv.1)?;
            let Ok(proj) = xyz_to_uvd(&moved, &k) else { break };
            let d = bilinear_sample(video.depth.index_axis(Axis(0), t + 1), proj.u, proj.v);
            p = if d > 0.0 && d.is_finite() {
                uvd_to_xyz(Uvd::new(proj.u, proj.v, d), &k)?
            } else {
                moved
            };
            uv = (proj.u, proj.v);
            xyz.slice_mut(s![a, t + 1, ..]).assign(&ndarray::arr1(&[p.x, p.y, p.z]));
            valid[[a, t + 1]] = true;
        }
    }
    TrajectorySet::new(xyz, valid, CoordFrame::Camera, Some(k))
}
