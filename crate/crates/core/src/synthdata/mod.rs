//! Deterministic synthetic RGB-D videos with exact ground-truth
//! trajectories, visibility masks, depth outliers and two-frame flow.

pub mod render;
pub mod scene;

use std::path::Path;

use nalgebra::Vector3;
use ndarray::{s, Array2, Array3, Array4, ArrayView3, Axis};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use scene::{BodySpec, Motion, OutlierPolicy, OutlierSpec, SceneSpec, ShapeKind, SpecFile};

use crate::error::{Error, Result};
use crate::geometry::{bilinear_sample, uvd_to_xyz, xyz_to_uvd, CameraIntrinsics, Point3, RigidTransform, Uvd};
use crate::io::container::Container;
use crate::tracker::DenseFlow;
use crate::trajectory::{CoordFrame, TrajectorySet};
use crate::video::RgbdVideo;
use render::{textures, FrameScene};

pub const CONTAINER_KIND: &str = "sample";
/// Largest gap between rendered depth and true depth for a visible entry.
pub const VISIBILITY_TOL: f64 = 1e-3;

/// A generated (or loaded) sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub video: RgbdVideo,
    /// `N x 3` camera-frame query points, visible in frame 1.
    pub queries: Array2<f64>,
    /// Ground-truth camera-frame trajectories; `valid` marks visible entries.
    pub trajectories: TrajectorySet,
    /// `(T - 1) x H x W x 3`: displacement from frame `t` to `t + 1` of the
    /// surface seen at each pixel of frame `t`.
    pub flow: Array4<f32>,
    /// `T x H x W`, 1 where the depth map was corrupted.
    pub outliers: Array3<u8>,
}

impl SampleRecord {
    pub fn intrinsics(&self) -> CameraIntrinsics {
        self.video.intrinsics
    }

    pub fn flow_source(&self) -> DenseFlow {
        DenseFlow {
            flow: self.flow.clone(),
        }
    }
}

/// Motion of a body between frame 1 and 0-based frame `t`, in world
/// coordinates: `pose(t) * pose(0)^-1`, written so that a still body gives
/// an exact identity.
fn body_motion(b: &BodySpec, t: usize) -> RigidTransform {
    let k = t as f64;
    let spin = RigidTransform::from_axis_angle(Vector3::from(b.motion.angular_velocity) * k, Vector3::zeros());
    let p0 = Vector3::from(b.position);
    RigidTransform {
        rotation: spin.rotation,
        translation: (p0 + Vector3::from(b.motion.velocity) * k) - spin.rotation * p0,
    }
}

/// Camera-frame position at frame `t` of the point `x0` (camera frame,
/// frame 1) attached to body `b`.
fn point_at(spec: &SceneSpec, b: &BodySpec, x0: &Point3, t: usize) -> Point3 {
    let world = body_motion(b, t).apply(x0);
    spec.camera_pose(t).inverse().apply(&world)
}

/// Moves a camera-frame point on body `b` from frame `t` to `t + 1`.
fn step_point(spec: &SceneSpec, b: &BodySpec, x: &Point3, t: usize) -> Point3 {
    let world = spec.camera_pose(t).apply(x);
    let at_start = body_motion(b, t).inverse().apply(&world);
    spec.camera_pose(t + 1).inverse().apply(&body_motion(b, t + 1).apply(&at_start))
}

/// Whether body `body` is the visible surface at `x` in frame `t`.
fn visible(scene: &FrameScene<'_>, clean_depth: ndarray::ArrayView2<'_, f32>, k: &CameraIntrinsics, body: usize, x: &Point3) -> bool {
    let Ok(q) = xyz_to_uvd(x, k) else { return false };
    let (h, w) = clean_depth.dim();
    if !(q.u >= 0.0 && q.v >= 0.0 && q.u <= (w - 1) as f64 && q.v <= (h - 1) as f64) {
        return false;
    }
    let Some(hit) = scene.cast(q.u, q.v) else { return false };
    hit.body == body
        && (hit.depth - q.d).abs() <= 1e-6 * q.d.max(1.0)
        && (bilinear_sample(clean_depth, q.u, q.v) - q.d).abs() < VISIBILITY_TOL
}

/// Renders `spec`.
pub fn generate(spec: &SceneSpec) -> Result<SampleRecord> {
    spec.validate()?;
    let (h, w, frames) = (spec.height, spec.width, spec.frames);
    let k = spec.intrinsics()?;
    let tex = textures(spec);
    let scenes: Vec<FrameScene<'_>> = (0..frames).map(|t| FrameScene::new(spec, &tex, t)).collect();

    let mut rgb = Array4::zeros((frames, 3, h, w));
    let mut depth = Array3::zeros((frames, h, w));
    for (t, scene) in scenes.iter().enumerate() {
        let (c, d) = scene.render(h, w);
        rgb.index_axis_mut(Axis(0), t).assign(&c);
        depth.index_axis_mut(Axis(0), t).assign(&d);
    }

    // Queries: pixel centres of frame 1 whose surface is cleanly visible.
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(2);
    let mut queries = Array2::zeros((spec.queries, 3));
    let mut owners = Vec::with_capacity(spec.queries);
    let mut tries = 0;
    while owners.len() < spec.queries {
        tries += 1;
        if tries > 1000 * spec.queries.max(1) {
            return Err(Error::DegenerateSpec("too few visible pixels to place queries".into()));
        }
        let (i, j) = (rng.random_range(0..h), rng.random_range(0..w));
        let Some(hit) = scenes[0].cast(j as f64, i as f64) else { continue };
        let x = uvd_to_xyz(Uvd::new(j as f64, i as f64, hit.depth), &k)?;
        if !visible(&scenes[0], depth.index_axis(Axis(0), 0), &k, hit.body, &x) {
            continue;
        }
        queries.row_mut(owners.len()).assign(&ndarray::arr1(&[x.x, x.y, x.z]));
        owners.push(hit.body);
    }

    let n = spec.queries;
    let mut positions = Array3::zeros((n, frames, 3));
    let mut valid = Array2::from_elem((n, frames), false);
    for (a, &b) in owners.iter().enumerate() {
        let x0 = Point3::new(queries[[a, 0]], queries[[a, 1]], queries[[a, 2]]);
        for t in 0..frames {
            let x = if t == 0 { x0 } else { point_at(spec, &spec.bodies[b], &x0, t) };
            positions.slice_mut(s![a, t, ..]).assign(&ndarray::arr1(&[x.x, x.y, x.z]));
            valid[[a, t]] = spec.bodies[b].exists_at(t) && visible(&scenes[t], depth.index_axis(Axis(0), t), &k, b, &x);
        }
    }

    let mut flow = Array4::zeros((frames.saturating_sub(1), h, w, 3));
    for t in 0..frames.saturating_sub(1) {
        for i in 0..h {
            for j in 0..w {
                let Some(hit) = scenes[t].cast(j as f64, i as f64) else { continue };
                let x = uvd_to_xyz(Uvd::new(j as f64, i as f64, hit.depth), &k)?;
                let next = step_point(spec, &spec.bodies[hit.body], &x, t);
                let d = next - x;
                flow.slice_mut(s![t, i, j, ..]).assign(&ndarray::arr1(&[d.x as f32, d.y as f32, d.z as f32]));
            }
        }
    }

    let mut outliers = Array3::zeros((frames, h, w));
    let count = (spec.outliers.fraction * (h * w) as f64).round() as usize;
    if count > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(3);
        for t in 0..frames {
            for idx in sample(&mut rng, h * w, count) {
                let (i, j) = (idx / w, idx % w);
                outliers[[t, i, j]] = 1;
                corrupt(&mut depth[[t, i, j]], spec.outliers.policy, spec.outliers.magnitude);
            }
        }
    }

    Ok(SampleRecord {
        video: RgbdVideo::new(rgb, depth, k)?,
        queries,
        trajectories: TrajectorySet::new(positions, valid, CoordFrame::Camera, Some(k))?,
        flow,
        outliers,
    })
}

fn corrupt(d: &mut f32, policy: OutlierPolicy, magnitude: f64) {
    match policy {
        OutlierPolicy::Sentinel => *d = 0.0,
        OutlierPolicy::Offset => *d += magnitude as f32,
    }
}

/// Corrupts depth under the ground-truth trajectories: a seeded
/// `fraction` of the visible (point, frame) entries get `magnitude` meters
/// added at the nearest pixel. Returns the number of entries hit.
pub fn inject_query_outliers(record: &mut SampleRecord, fraction: f64, magnitude: f64, seed: u64) -> Result<usize> {
    let k = record.intrinsics();
    let gt = &record.trajectories;
    let entries: Vec<(usize, usize)> = gt.valid.indexed_iter().filter(|(_, v)| **v).map(|(e, _)| e).collect();
    let count = ((fraction * (gt.num_points() * gt.num_frames()) as f64).round() as usize).min(entries.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(4);
    let (h, w) = (record.video.height(), record.video.width());
    for idx in sample(&mut rng, entries.len(), count) {
        let (a, t) = entries[idx];
        let [x, y, z] = gt.point(a, t);
        let q = xyz_to_uvd(&Point3::new(x, y, z), &k)?;
        let i = (q.v.round().max(0.0) as usize).min(h - 1);
        let j = (q.u.round().max(0.0) as usize).min(w - 1);
        if record.outliers[[t, i, j]] == 0 {
            record.outliers[[t, i, j]] = 1;
            corrupt(&mut record.video.depth[[t, i, j]], OutlierPolicy::Offset, magnitude);
        }
    }
    Ok(count)
}

/// Flow field from frame `t` to `t + 1` (0-based), `H x W x 3`.
pub fn gt_flow(record: &SampleRecord, t: usize) -> Result<ArrayView3<'_, f32>> {
    let steps = record.flow.dim().0;
    if t >= steps {
        return Err(Error::FrameOutOfRange { frame: t, len: steps });
    }
    Ok(record.flow.index_axis(Axis(0), t))
}

pub fn to_container(record: &SampleRecord) -> Container {
    let mut c = Container::new(CONTAINER_KIND);
    c.push_u8("rgb", record.video.rgb.clone().into_dyn());
    c.push_f32("depth", record.video.depth.clone().into_dyn());
    c.push_f64("intrinsics", ndarray::arr1(&record.intrinsics().to_array()).into_dyn());
    c.push_f64("queries", record.queries.clone().into_dyn());
    c.push_f64("trajectory.positions", record.trajectories.positions.clone().into_dyn());
    c.push_u8("trajectory.valid", record.trajectories.valid.mapv(u8::from).into_dyn());
    c.push_f32("flow", record.flow.clone().into_dyn());
    c.push_u8("outliers", record.outliers.clone().into_dyn());
    c
}

pub fn from_container(c: &Container) -> Result<SampleRecord> {
    if c.kind != CONTAINER_KIND {
        return Err(Error::CorruptManifest(format!("expected a `{CONTAINER_KIND}` container, found `{}`", c.kind)));
    }
    fn dim<A: Clone, D: ndarray::Dimension>(a: &ndarray::ArrayD<A>, name: &str) -> Result<ndarray::Array<A, D>> {
        a.clone()
            .into_dimensionality()
            .map_err(|_| Error::CorruptManifest(format!("`{name}` has rank {}", a.ndim())))
    }
    let k = CameraIntrinsics::from_slice(c.f64("intrinsics")?.as_slice().unwrap_or(&[]))?;
    let video = RgbdVideo::new(dim(c.u8("rgb")?, "rgb")?, dim(c.f32("depth")?, "depth")?, k)
        .map_err(|e| Error::CorruptManifest(e.to_string()))?;
    let valid: Array2<u8> = dim(c.u8("trajectory.valid")?, "trajectory.valid")?;
    let trajectories = TrajectorySet::new(
        dim(c.f64("trajectory.positions")?, "trajectory.positions")?,
        valid.mapv(|v| v != 0),
        CoordFrame::Camera,
        Some(k),
    )?;
    let queries: Array2<f64> = dim(c.f64("queries")?, "queries")?;
    let flow: Array4<f32> = dim(c.f32("flow")?, "flow")?;
    let outliers: Array3<u8> = dim(c.u8("outliers")?, "outliers")?;
    let (t, h, w) = video.depth.dim();
    if queries.dim() != (trajectories.num_points(), 3)
        || trajectories.num_frames() != t
        || flow.dim() != (t.saturating_sub(1), h, w, 3)
        || outliers.dim() != (t, h, w)
    {
        return Err(Error::CorruptManifest("sample tensors disagree in shape".into()));
    }
    Ok(SampleRecord {
        video,
        queries,
        trajectories,
        flow,
        outliers,
    })
}

pub fn write_sample(record: &SampleRecord, dir: &Path) -> Result<()> {
    to_container(record).write(dir)
}

pub fn read_sample(dir: &Path) -> Result<SampleRecord> {
    from_container(&Container::read(dir)?)
}
