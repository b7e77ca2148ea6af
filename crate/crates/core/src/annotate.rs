//! Ground-truth construction for real recordings: LiDAR points carried
//! through ego and box poses, stereo pedestrian tracks, nearest-neighbour
//! depth completion and visibility masks.
//!
//! Frames are 0-based in the API and 1-based in text files.

use std::collections::BTreeMap;

use nalgebra::Matrix4;
use ndarray::{Array2, Array3, ArrayView2, ArrayView3};

use crate::error::{Error, Result};
use crate::geometry::{uvd_to_xyz, xyz_to_uvd, CameraIntrinsics, Point3, RigidTransform, Uvd};
use crate::trajectory::{CoordFrame, TrajectorySet};

/// Default depth agreement required for a visible entry, meters.
pub const TAU_OCC: f64 = 0.2;

/// Per-frame poses of the ego vehicle and of tracked boxes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoseLog {
    /// Ego-to-world, one per frame.
    pub ego: Vec<RigidTransform>,
    /// World-to-box per box id; `None` where the box was not annotated.
    pub boxes: BTreeMap<String, Vec<Option<RigidTransform>>>,
}

impl PoseLog {
    pub fn new(ego: Vec<RigidTransform>) -> Self {
        Self {
            ego,
            boxes: BTreeMap::new(),
        }
    }

    pub fn frames(&self) -> usize {
        self.ego.len()
    }

    pub fn with_box(mut self, id: impl Into<String>, poses: Vec<Option<RigidTransform>>) -> Self {
        self.boxes.insert(id.into(), poses);
        self
    }

    fn ego_at(&self, t: usize) -> Result<&RigidTransform> {
        self.ego.get(t).ok_or(Error::FrameOutOfRange { frame: t, len: self.ego.len() })
    }

    fn box_at(&self, id: &str, t: usize) -> Result<&RigidTransform> {
        let poses = self.boxes.get(id).ok_or_else(|| Error::UnknownBox(id.to_string()))?;
        poses
            .get(t)
            .and_then(Option::as_ref)
            .ok_or(Error::FrameOutOfRange { frame: t, len: poses.len() })
    }

    /// Parses blocks of a header line followed by four rows of a
    /// row-major 4x4 matrix:
    ///
    /// ```text
    /// ego <frame>
    /// box <id> <frame>
    /// ```
    ///
    /// Ego frames must run contiguously from 1. Blank lines and `#`
    /// comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let mut ego = BTreeMap::new();
        let mut boxes: BTreeMap<String, BTreeMap<usize, RigidTransform>> = BTreeMap::new();
        while let Some((line, header)) = lines.next() {
            let words: Vec<&str> = header.split_whitespace().collect();
            let frame = |w: &str| -> Result<usize> {
                match w.parse::<usize>() {
                    Ok(f) if f >= 1 => Ok(f - 1),
                    _ => Err(parse_err(line, format!("bad frame number `{w}`"))),
                }
            };
            let slot = match words.as_slice() {
                ["ego", f] => ego.entry(frame(f)?),
                ["box", id, f] => boxes.entry(id.to_string()).or_default().entry(frame(f)?),
                _ => return Err(parse_err(line, format!("expected `ego <frame>` or `box <id> <frame>`, found `{header}`"))),
            };
            if matches!(slot, std::collections::btree_map::Entry::Occupied(_)) {
                return Err(parse_err(line, "duplicate pose".into()));
            }
            let mut m = Matrix4::zeros();
            for r in 0..4 {
                let (row_line, row) = lines.next().ok_or_else(|| parse_err(line, "pose block ends early".into()))?;
                let vals = numbers(row_line, row)?;
                if vals.len() != 4 {
                    return Err(parse_err(row_line, format!("expected 4 numbers, found {}", vals.len())));
                }
                for (c, v) in vals.into_iter().enumerate() {
                    m[(r, c)] = v;
                }
            }
            slot.or_insert(RigidTransform::from_matrix(&m).map_err(|e| parse_err(line, e.to_string()))?);
        }
        if ego.is_empty() {
            return Err(parse_err(0, "no ego poses".into()));
        }
        if let Some((i, _)) = ego.keys().enumerate().find(|(i, f)| i != *f) {
            return Err(parse_err(0, format!("ego pose for frame {} is missing", i + 1)));
        }
        let frames = ego.len();
        let boxes = boxes
            .into_iter()
            .map(|(id, poses)| {
                if let Some(&f) = poses.keys().find(|f| **f >= frames) {
                    return Err(parse_err(0, format!("box `{id}` has a pose for frame {} beyond the ego log", f + 1)));
                }
                let mut seq = vec![None; frames];
                for (f, p) in poses {
                    seq[f] = Some(p);
                }
                Ok((id, seq))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            ego: ego.into_values().collect(),
            boxes,
        })
    }
}

fn parse_err(line: usize, msg: String) -> Error {
    Error::Parse { line, msg }
}

fn numbers(line: usize, text: &str) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|w| w.parse::<f64>().map_err(|_| parse_err(line, format!("bad number `{w}`"))))
        .collect()
}

/// Static-world point `x` observed in the ego frame at frame 0, expressed
/// in the ego frame at frame `t`: `W_t^-1 W_0 x`.
pub fn project_background(x: &Point3, poses: &PoseLog, t: usize) -> Result<Point3> {
    let w0 = poses.ego_at(0)?;
    let wt = poses.ego_at(t)?;
    if wt == w0 {
        return Ok(*x);
    }
    Ok(wt.inverse().apply(&w0.apply(x)))
}

/// Point `x` on box `id`, observed at frame 0, expressed in the ego frame
/// at frame `t`: `W_t^-1 B_t^-1 B_0 W_0 x`.
pub fn project_vehicle(x: &Point3, poses: &PoseLog, id: &str, t: usize) -> Result<Point3> {
    let b0 = poses.box_at(id, 0)?;
    let bt = poses.box_at(id, t)?;
    let w0 = poses.ego_at(0)?;
    let wt = poses.ego_at(t)?;
    if bt == b0 {
        return project_background(x, poses, t);
    }
    let world = bt.inverse().apply(&b0.apply(&w0.apply(x)));
    Ok(wt.inverse().apply(&world))
}

/// Stereo depth `fx * baseline / disparity`.
pub fn disparity_to_depth(fx: f64, baseline: f64, disparity: f64) -> Result<f64> {
    if !(disparity > 0.0) {
        return Err(Error::NonPositiveDisparity(disparity));
    }
    Ok(fx * baseline / disparity)
}

/// One-point trajectory from a left-image track and per-frame disparities.
/// Frames whose disparity is not positive are invalid.
pub fn assemble_pedestrian_trajectory(
    uv: ArrayView2<'_, f64>,
    disparities: &[f64],
    baseline: f64,
    k: &CameraIntrinsics,
) -> Result<TrajectorySet> {
    let frames = uv.nrows();
    if uv.ncols() != 2 || disparities.len() != frames {
        return Err(Error::ShapeMismatch(format!(
            "track is {:?} with {} disparities",
            uv.dim(),
            disparities.len()
        )));
    }
    let mut positions = Array3::from_elem((1, frames, 3), f64::NAN);
    let mut valid = Array2::from_elem((1, frames), false);
    for t in 0..frames {
        let Ok(d) = disparity_to_depth(k.fx, baseline, disparities[t]) else { continue };
        let Ok(p) = uvd_to_xyz(Uvd::new(uv[[t, 0]], uv[[t, 1]], d), k) else { continue };
        if p.iter().all(|c| c.is_finite()) {
            positions[[0, t, 0]] = p.x;
            positions[[0, t, 1]] = p.y;
            positions[[0, t, 2]] = p.z;
            valid[[0, t]] = true;
        }
    }
    TrajectorySet::new(positions, valid, CoordFrame::Camera, Some(*k))
}

/// A parsed stereo pedestrian track.
#[derive(Debug, Clone, PartialEq)]
pub struct PedestrianTrack {
    pub intrinsics: CameraIntrinsics,
    pub baseline: f64,
    /// `T x 2`.
    pub uv: Array2<f64>,
    pub disparities: Vec<f64>,
}

impl PedestrianTrack {
    /// Parses `intrinsics fx fy cx cy`, `baseline b`, then one `u v disparity`
    /// line per frame.
    pub fn parse(text: &str) -> Result<Self> {
        let (mut k, mut baseline) = (None, None);
        let mut rows = vec![];
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.split('#').next().unwrap_or("").trim();
            if l.is_empty() {
                continue;
            }
            if let Some(rest) = l.strip_prefix("intrinsics") {
                let v = numbers(line, rest)?;
                if v.len() != 4 {
                    return Err(parse_err(line, "intrinsics needs fx fy cx cy".into()));
                }
                k = Some(CameraIntrinsics::from_slice(&v).map_err(|e| parse_err(line, e.to_string()))?);
            } else if let Some(rest) = l.strip_prefix("baseline") {
                match numbers(line, rest)?.as_slice() {
                    [b] if *b > 0.0 => baseline = Some(*b),
                    _ => return Err(parse_err(line, "baseline needs one positive number".into())),
                }
            } else {
                let v = numbers(line, l)?;
                if v.len() != 3 {
                    return Err(parse_err(line, format!("expected `u v disparity`, found {} numbers", v.len())));
                }
                rows.push([v[0], v[1], v[2]]);
            }
        }
        let intrinsics = k.ok_or_else(|| parse_err(0, "missing `intrinsics` line".into()))?;
        let baseline = baseline.ok_or_else(|| parse_err(0, "missing `baseline` line".into()))?;
        let uv = Array2::from_shape_fn((rows.len(), 2), |(t, c)| rows[t][c]);
        Ok(Self {
            intrinsics,
            baseline,
            uv,
            disparities: rows.iter().map(|r| r[2]).collect(),
        })
    }

    pub fn trajectory(&self) -> Result<TrajectorySet> {
        assemble_pedestrian_trajectory(self.uv.view(), &self.disparities, self.baseline, &self.intrinsics)
    }
}

/// A LiDAR point at frame 1, optionally attached to a box.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedPoint {
    pub position: Point3,
    pub box_id: Option<String>,
}

/// Parses `x y z [box-id]` lines.
pub fn parse_points(text: &str) -> Result<Vec<AnnotatedPoint>> {
    let mut out = vec![];
    for (i, raw) in text.lines().enumerate() {
        let l = raw.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        let words: Vec<&str> = l.split_whitespace().collect();
        if !(3..=4).contains(&words.len()) {
            return Err(parse_err(i + 1, "expected `x y z [box-id]`".into()));
        }
        let v = numbers(i + 1, &words[..3].join(" "))?;
        out.push(AnnotatedPoint {
            position: Point3::new(v[0], v[1], v[2]),
            box_id: words.get(3).map(|s| s.to_string()),
        });
    }
    Ok(out)
}

/// Carries every point through all frames of the log; points without a
/// box (or all points when `use_boxes` is false) follow the static world.
pub fn lidar_trajectories(points: &[AnnotatedPoint], poses: &PoseLog, use_boxes: bool) -> Result<TrajectorySet> {
    let frames = poses.frames();
    let mut positions = Array3::zeros((points.len(), frames, 3));
    for (a, p) in points.iter().enumerate() {
        for t in 0..frames {
            let x = match (&p.box_id, use_boxes) {
                (Some(id), true) => project_vehicle(&p.position, poses, id, t)?,
                _ => project_background(&p.position, poses, t)?,
            };
            positions[[a, t, 0]] = x.x;
            positions[[a, t, 1]] = x.y;
            positions[[a, t, 2]] = x.z;
        }
    }
    TrajectorySet::new(positions, Array2::from_elem((points.len(), frames), true), CoordFrame::Camera, None)
}

/// A sparse depth sample at pixel position `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseDepth {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Drops samples that land on masked (foreground) pixels.
pub fn exclude_masked(sparse: &[SparseDepth], mask: ArrayView2<'_, bool>) -> Vec<SparseDepth> {
    let (h, w) = mask.dim();
    sparse
        .iter()
        .filter(|s| {
            let (i, j) = (s.v.round(), s.u.round());
            !(i >= 0.0 && j >= 0.0 && (i as usize) < h && (j as usize) < w && mask[[i as usize, j as usize]])
        })
        .copied()
        .collect()
}

/// Orders candidates by squared distance, then by smallest `v`, then `u`.
fn better(d2: f64, s: &SparseDepth, best: Option<(f64, &SparseDepth)>) -> bool {
    match best {
        None => true,
        Some((bd, b)) => (d2, s.v, s.u) < (bd, b.v, b.u),
    }
}

/// Fills an `H x W` map with the depth of the nearest sample (Euclidean in
/// pixels); ties go to the sample with the smallest `v`, then `u`.
/// Samples with non-finite fields are ignored.
pub fn densify_depth(sparse: &[SparseDepth], height: usize, width: usize) -> Result<Array2<f32>> {
    let pts: Vec<SparseDepth> = sparse
        .iter()
        .filter(|s| s.u.is_finite() && s.v.is_finite() && s.depth.is_finite())
        .copied()
        .collect();
    if pts.is_empty() {
        return Err(Error::EmptySparseSet);
    }
    if height == 0 || width == 0 {
        return Ok(Array2::zeros((height, width)));
    }
    // Bucket grid over the joint extent of samples and image, sized for
    // about one sample per cell; rings are searched outwards until no
    // unvisited cell can hold a closer sample.
    let (mut u0, mut v0) = (0.0f64, 0.0f64);
    let (mut u1, mut v1) = ((width - 1) as f64, (height - 1) as f64);
    for s in &pts {
        u0 = u0.min(s.u);
        v0 = v0.min(s.v);
        u1 = u1.max(s.u);
        v1 = v1.max(s.v);
    }
    let area = (u1 - u0 + 1.0) * (v1 - v0 + 1.0);
    let cell = (area / pts.len() as f64).sqrt().max(1.0);
    let cols = ((u1 - u0) / cell).floor() as usize + 1;
    let rows = ((v1 - v0) / cell).floor() as usize + 1;
    let index = |u: f64, v: f64| {
        (
            (((v - v0) / cell).floor() as usize).min(rows - 1),
            (((u - u0) / cell).floor() as usize).min(cols - 1),
        )
    };
    let mut buckets: Vec<Vec<usize>> = vec![vec![]; rows * cols];
    for (n, s) in pts.iter().enumerate() {
        let (r, c) = index(s.u, s.v);
        buckets[r * cols + c].push(n);
    }
    let max_ring = rows.max(cols);
    Ok(Array2::from_shape_fn((height, width), |(i, j)| {
        let (u, v) = (j as f64, i as f64);
        let (r0, c0) = index(u, v);
        let mut best: Option<(f64, &SparseDepth)> = None;
        for ring in 0..=max_ring {
            if let Some((bd, _)) = best {
                let reach = (ring as f64 - 1.0) * cell;
                if reach > 0.0 && reach * reach > bd {
                    break;
                }
            }
            let (r0, c0, ring) = (r0 as isize, c0 as isize, ring as isize);
            for r in (r0 - ring)..=(r0 + ring) {
                if r < 0 || r >= rows as isize {
                    continue;
                }
                let edge = r == r0 - ring || r == r0 + ring;
                let step = if edge { 1 } else { (2 * ring).max(1) as usize };
                for c in ((c0 - ring)..=(c0 + ring)).step_by(step) {
                    if c < 0 || c >= cols as isize {
                        continue;
                    }
                    for &n in &buckets[r as usize * cols + c as usize] {
                        let s = &pts[n];
                        let d2 = (s.u - u).powi(2) + (s.v - v).powi(2);
                        if better(d2, s, best) {
                            best = Some((d2, s));
                        }
                    }
                }
            }
        }
        best.map_or(0.0, |(_, s)| s.depth as f32)
    }))
}

/// Straightforward `O(P * H * W)` version of [`densify_depth`].
pub fn densify_depth_brute(sparse: &[SparseDepth], height: usize, width: usize) -> Result<Array2<f32>> {
    let pts: Vec<&SparseDepth> = sparse
        .iter()
        .filter(|s| s.u.is_finite() && s.v.is_finite() && s.depth.is_finite())
        .collect();
    if pts.is_empty() {
        return Err(Error::EmptySparseSet);
    }
    Ok(Array2::from_shape_fn((height, width), |(i, j)| {
        let mut best: Option<(f64, &SparseDepth)> = None;
        for s in &pts {
            let d2 = (s.u - j as f64).powi(2) + (s.v - i as f64).powi(2);
            if better(d2, s, best) {
                best = Some((d2, s));
            }
        }
        best.map_or(0.0, |(_, s)| s.depth as f32)
    }))
}

/// Visibility of each trajectory entry against completed depth maps
/// (`T x H x W`): the projection must fall inside the image and the depth
/// at the nearest pixel must be within `tau` of the point's depth. Entries
/// already invalid stay invalid.
pub fn occlusion_mask(depth: ArrayView3<'_, f32>, traj: &TrajectorySet, k: &CameraIntrinsics, tau: f64) -> Result<Array2<bool>> {
    let (frames, h, w) = depth.dim();
    if traj.num_frames() != frames {
        return Err(Error::ShapeMismatch(format!(
            "{} depth frames for {}-frame trajectories",
            frames,
            traj.num_frames()
        )));
    }
    let uvd = match traj.frame {
        CoordFrame::Uvd => traj.clone(),
        CoordFrame::Camera => TrajectorySet {
            intrinsics: Some(*k),
            ..traj.clone()
        }
        .to_uvd()?,
    };
    Ok(Array2::from_shape_fn((traj.num_points(), frames), |(a, t)| {
        if !uvd.valid[[a, t]] {
            return false;
        }
        let [u, v, d] = uvd.point(a, t);
        if !(u >= 0.0 && v >= 0.0 && u <= (w - 1) as f64 && v <= (h - 1) as f64) {
            return false;
        }
        let z = depth[[t, v.round() as usize, u.round() as usize]] as f64;
        (z - d).abs() < tau
    }))
}

/// Camera-frame point at pixel `(u, v)` with the depth read from `depth`.
pub fn backproject(depth: ArrayView2<'_, f32>, u: usize, v: usize, k: &CameraIntrinsics) -> Result<Point3> {
    uvd_to_xyz(Uvd::new(u as f64, v as f64, depth[[v, u]] as f64), k)
}

/// Pixel position and depth of a camera-frame point.
pub fn project(p: &Point3, k: &CameraIntrinsics) -> Result<Uvd> {
    xyz_to_uvd(p, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Vector3, Vector4};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng) -> RigidTransform {
        let mut v = || Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let (a, t) = (v(), v());
        RigidTransform::from_axis_angle(a, t)
    }

    fn hom(p: &Point3) -> Vector4<f64> {
        Vector4::new(p.x, p.y, p.z, 1.0)
    }

    fn close(a: &Point3, b: &Vector4<f64>) -> bool {
        (a.x - b.x).abs() < 1e-12 * (1.0 + b.x.abs())
            && (a.y - b.y).abs() < 1e-12 * (1.0 + b.y.abs())
            && (a.z - b.z).abs() < 1e-12 * (1.0 + b.z.abs())
    }

    #[test]
    fn poses_match_matrix_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let ego = vec![random_pose(&mut rng), random_pose(&mut rng)];
            let boxes = vec![Some(random_pose(&mut rng)), Some(random_pose(&mut rng))];
            let log = PoseLog::new(ego.clone()).with_box("car", boxes.clone());
            let x = Point3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(0.5..20.0));
            let (w1, wt) = (ego[0].to_matrix(), ego[1].to_matrix());
            let (b1, bt) = (boxes[0].unwrap().to_matrix(), boxes[1].unwrap().to_matrix());
            let bg = wt.try_inverse().unwrap() * w1 * hom(&x);
            assert!(close(&project_background(&x, &log, 1).unwrap(), &bg));
            let veh = wt.try_inverse().unwrap() * bt.try_inverse().unwrap() * b1 * w1 * hom(&x);
            assert!(close(&project_vehicle(&x, &log, "car", 1).unwrap(), &veh));
        }
    }

    #[test]
    fn translated_ego_shifts_points() {
        let log = PoseLog::new(vec![RigidTransform::identity(), RigidTransform::from_translation(Vector3::new(1.0, 0.0, 0.0))]);
        let x = Point3::new(0.5, 0.25, 4.0);
        assert_eq!(project_background(&x, &log, 1).unwrap(), Point3::new(-0.5, 0.25, 4.0));
        assert_eq!(project_background(&x, &log, 0).unwrap(), x);
        assert!(matches!(project_background(&x, &log, 2), Err(Error::FrameOutOfRange { frame: 2, len: 2 })));
    }

    #[test]
    fn still_box_reduces_to_background() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ego: Vec<_> = (0..4).map(|_| random_pose(&mut rng)).collect();
        let b = random_pose(&mut rng);
        let log = PoseLog::new(ego).with_box("van", vec![Some(b); 4]);
        let x = Point3::new(1.0, -0.5, 7.0);
        for t in 0..4 {
            assert_eq!(project_vehicle(&x, &log, "van", t).unwrap(), project_background(&x, &log, t).unwrap());
        }
        assert!(matches!(project_vehicle(&x, &log, "bus", 0), Err(Error::UnknownBox(_))));
    }

    #[test]
    fn moving_box_with_still_ego() {
        // World-to-box: the box origin sits at the world position c_t.
        let c = |x: f64| RigidTransform::from_translation(Vector3::new(-x, 0.0, 0.0));
        let log = PoseLog::new(vec![RigidTransform::identity(); 3]).with_box("car", vec![Some(c(0.0)), Some(c(0.5)), None]);
        let x = Point3::new(1.0, 0.0, 6.0);
        assert_eq!(project_vehicle(&x, &log, "car", 1).unwrap(), Point3::new(1.5, 0.0, 6.0));
        assert!(matches!(project_vehicle(&x, &log, "car", 2), Err(Error::FrameOutOfRange { .. })));
    }

    #[test]
    fn groupoid_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ego: Vec<_> = (0..3).map(|_| random_pose(&mut rng)).collect();
        let x = Point3::new(0.3, 0.1, 5.0);
        let direct = project_background(&x, &PoseLog::new(ego.clone()), 2).unwrap();
        let mid = project_background(&x, &PoseLog::new(ego.clone()), 1).unwrap();
        let via = project_background(&mid, &PoseLog::new(ego[1..].to_vec()), 1).unwrap();
        assert!((direct - via).norm() < 1e-12);
    }

    #[test]
    fn disparity_arithmetic() {
        assert_eq!(disparity_to_depth(100.0, 0.5, 10.0).unwrap(), 5.0);
        assert_eq!(disparity_to_depth(100.0, 0.5, 20.0).unwrap(), 2.5);
        assert!(matches!(disparity_to_depth(100.0, 0.5, 0.0), Err(Error::NonPositiveDisparity(_))));
        assert!(matches!(disparity_to_depth(100.0, 0.5, -1.0), Err(Error::NonPositiveDisparity(_))));
    }

    #[test]
    fn pedestrian_on_principal_axis() {
        let k = CameraIntrinsics::new(100.0, 100.0, 32.0, 24.0).unwrap();
        let uv = ndarray::arr2(&[[32.0, 24.0], [32.0, 24.0], [32.0, 24.0]]);
        let tr = assemble_pedestrian_trajectory(uv.view(), &[10.0, 5.0, 0.0], 0.5, &k).unwrap();
        assert_eq!(tr.point(0, 0), [0.0, 0.0, 5.0]);
        assert_eq!(tr.point(0, 1), [0.0, 0.0, 10.0]);
        assert_eq!(tr.valid.row(0).to_vec(), vec![true, true, false]);
    }

    #[test]
    fn pedestrian_file_parses() {
        let text = "# left track\nintrinsics 100 100 32 24\nbaseline 0.5\n32 24 10\n42 24 10\n";
        let p = PedestrianTrack::parse(text).unwrap();
        let tr = p.trajectory().unwrap();
        assert_eq!(tr.point(0, 1), [0.5, 0.0, 5.0]);
        assert!(matches!(PedestrianTrack::parse("baseline 0.5\n1 2 3\n"), Err(Error::Parse { .. })));
        assert!(matches!(PedestrianTrack::parse("intrinsics 1 1 0 0\nbaseline 1\n1 2\n"), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn pose_file_parses() {
        let text = "ego 1\n1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n\
                    ego 2\n1 0 0 1\n0 1 0 0\n0 0 1 0\n0 0 0 1\n\
                    box car 2\n1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n";
        let log = PoseLog::parse(text).unwrap();
        assert_eq!(log.frames(), 2);
        assert_eq!(log.ego[1].translation, Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(log.boxes["car"], vec![None, Some(RigidTransform::identity())]);
        let gap = "ego 2\n1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n";
        assert!(matches!(PoseLog::parse(gap), Err(Error::Parse { .. })));
        let skew = "ego 1\n2 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n";
        assert!(matches!(PoseLog::parse(skew), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn points_file_parses() {
        let pts = parse_points("1 2 3\n4 5 6 car\n").unwrap();
        assert_eq!(pts[1].box_id.as_deref(), Some("car"));
        assert!(parse_points("1 2\n").is_err());
    }

    #[test]
    fn densify_examples() {
        let one = [SparseDepth { u: 3.0, v: 2.0, depth: 7.0 }];
        assert!(densify_depth(&one, 5, 6).unwrap().iter().all(|d| *d == 7.0));
        assert!(matches!(densify_depth(&[], 5, 6), Err(Error::EmptySparseSet)));
        // Left/right halves split at u = 3.5; column 3.5 does not exist,
        // so check the tie case with an odd gap as well.
        let two = [SparseDepth { u: 1.0, v: 4.0, depth: 1.0 }, SparseDepth { u: 5.0, v: 3.0, depth: 2.0 }];
        let m = densify_depth(&two, 8, 8).unwrap();
        assert_eq!(m, densify_depth_brute(&two, 8, 8).unwrap());
        assert_eq!(m[[3, 5]], 2.0);
        assert_eq!(m[[4, 1]], 1.0);
        // (3, 3.5) is equidistant: the sample with smaller v wins.
        let tie = [SparseDepth { u: 1.0, v: 4.0, depth: 1.0 }, SparseDepth { u: 5.0, v: 3.0, depth: 2.0 }];
        let d = densify_depth(&tie, 8, 8).unwrap();
        let d1 = (3.0f64 - 1.0).powi(2) + (3.0f64 - 4.0).powi(2);
        let d2 = (3.0f64 - 5.0).powi(2) + (3.0f64 - 3.0).powi(2);
        assert!(d1 > d2 && d[[3, 3]] == 2.0);
    }

    #[test]
    fn exact_ties_prefer_smaller_v_then_u() {
        let pts = [
            SparseDepth { u: 4.0, v: 2.0, depth: 1.0 },
            SparseDepth { u: 0.0, v: 2.0, depth: 2.0 },
            SparseDepth { u: 2.0, v: 4.0, depth: 3.0 },
        ];
        let m = densify_depth(&pts, 5, 5).unwrap();
        // Pixel (2, 2) is 2 px from all three.
        assert_eq!(m[[2, 2]], 2.0);
        assert_eq!(m, densify_depth_brute(&pts, 5, 5).unwrap());
    }

    #[test]
    fn foreground_mask_drops_samples() {
        let mut mask = Array2::from_elem((4, 4), false);
        mask[[1, 1]] = true;
        let pts = [SparseDepth { u: 1.2, v: 0.9, depth: 1.0 }, SparseDepth { u: 3.0, v: 3.0, depth: 2.0 }];
        assert_eq!(exclude_masked(&pts, mask.view()), vec![pts[1]]);
    }

    fn plane_traj(z: f64) -> (TrajectorySet, CameraIntrinsics) {
        let k = CameraIntrinsics::new(10.0, 10.0, 4.0, 4.0).unwrap();
        let mut pos = Array3::zeros((2, 3, 3));
        for t in 0..3 {
            pos[[0, t, 2]] = z;
            pos[[1, t, 0]] = 100.0;
            pos[[1, t, 2]] = z;
        }
        (TrajectorySet::new(pos, Array2::from_elem((2, 3), true), CoordFrame::Camera, Some(k)).unwrap(), k)
    }

    #[test]
    fn occluder_frame_is_masked() {
        let (tr, k) = plane_traj(3.0);
        let mut depth = Array3::from_elem((3, 9, 9), 3.05f32);
        depth.index_axis_mut(ndarray::Axis(0), 1).fill(2.0);
        let m = occlusion_mask(depth.view(), &tr, &k, TAU_OCC).unwrap();
        assert_eq!(m.row(0).to_vec(), vec![true, false, true]);
        assert_eq!(m.row(1).to_vec(), vec![false; 3], "outside the image");
    }

    proptest! {
        #[test]
        fn densify_matches_brute_force(
            h in 1usize..=16,
            w in 1usize..=16,
            pts in prop::collection::vec((-3.0f64..19.0, -3.0f64..19.0, 0.1f64..50.0, any::<bool>()), 1..40),
        ) {
            // Half the samples snap to integer positions to exercise ties.
            let sparse: Vec<SparseDepth> = pts
                .iter()
                .map(|&(u, v, depth, snap)| if snap {
                    SparseDepth { u: u.round(), v: v.round(), depth }
                } else {
                    SparseDepth { u, v, depth }
                })
                .collect();
            prop_assert_eq!(densify_depth(&sparse, h, w).unwrap(), densify_depth_brute(&sparse, h, w).unwrap());
        }

        #[test]
        fn disparity_round_trip(fx in 10.0f64..2000.0, b in 0.05f64..2.0, c in 0.01f64..500.0) {
            let d = disparity_to_depth(fx, b, c).unwrap();
            prop_assert!((fx * b / d - c).abs() <= 1e-12 * c.max(1.0));
        }

        #[test]
        fn mask_is_monotone_in_tau(
            zs in prop::collection::vec(0.5f64..5.0, 6),
            noise in prop::collection::vec(0.0f32..1.0, 3 * 81),
            t1 in 0.0f64..1.0,
            extra in 0.0f64..1.0,
        ) {
            let k = CameraIntrinsics::new(10.0, 10.0, 4.0, 4.0).unwrap();
            let mut pos = Array3::zeros((2, 3, 3));
            for (n, z) in zs.iter().enumerate() {
                pos[[n / 3, n % 3, 0]] = 0.1 * n as f64;
                pos[[n / 3, n % 3, 2]] = *z;
            }
            let tr = TrajectorySet::new(pos, Array2::from_elem((2, 3), true), CoordFrame::Camera, Some(k)).unwrap();
            let depth = Array3::from_shape_vec((3, 9, 9), noise.iter().map(|n| 0.5 + 4.5 * n).collect()).unwrap();
            let a = occlusion_mask(depth.view(), &tr, &k, t1).unwrap();
            let b = occlusion_mask(depth.view(), &tr, &k, t1 + extra).unwrap();
            prop_assert!(a.iter().zip(b.iter()).all(|(x, y)| !*x || *y));
        }
    }
}
