//! End-to-end tracking over a whole video, plus the two lifting baselines.
//!
//! Trajectories are kept as full-resolution `(u, v, d)` from window to
//! window and converted to camera xyz once at the end. An entry that no
//! iteration moved is returned as the caller's query xyz, untouched by the
//! projection round trip.

mod baselines;
pub mod support;
pub mod windows;

use ndarray::{s, Array2, Array3, Array4, ArrayView2, ArrayView3, Axis};

pub use baselines::{baseline_sf_chain, baseline_tap, DenseFlow, FlowSource};
pub use support::{sample_support_points, support_depths};
pub use windows::{chain_segments, init_window, plan_windows, split_windows, WindowPlan};

use crate::config::{InferenceMode, RunConfig};
use crate::error::{Error, Result};
use crate::features::{downsample_depth, FeatureEncoder, ENCODER_STRIDE};
use crate::fim::{fim_iterate, FimParams, WindowState};
use crate::geometry::{bilinear_sample_channels, uvd_to_xyz, xyz_to_uvd, Point3, Uvd};
use crate::trajectory::{CoordFrame, TrajectorySet};
use crate::updater::{TransformerUpdater, Updater};
use crate::video::RgbdVideo;
use crate::weights::{ModelWeights, WeightSpec};

/// Instrumentation called once per window, before the first iteration.
pub trait TrackObserver {
    /// `template` is the window's initial `N x S x c_f` template, `init`
    /// its initial downscaled uvd trajectories.
    fn window_started(&mut self, index: usize, start: usize, template: ArrayView3<'_, f32>, init: ArrayView3<'_, f64>);
}

impl TrackObserver for () {
    fn window_started(&mut self, _: usize, _: usize, _: ArrayView3<'_, f32>, _: ArrayView3<'_, f64>) {}
}

/// Frame features and downsampled depth, computed once per video.
#[derive(Debug, Clone)]
pub struct PreparedVideo {
    /// `T x c_f x H/s x W/s`
    pub features: Array4<f32>,
    /// `T x H/s x W/s`
    pub depth: Array3<f32>,
    pub height: usize,
    pub width: usize,
}

/// An encoder plus an updater, run with one configuration.
pub struct Tracker<U = TransformerUpdater> {
    cfg: RunConfig,
    encoder: FeatureEncoder,
    updater: U,
}

/// Every tensor the encoder and updater need under `cfg`.
pub fn weight_specs(cfg: &RunConfig) -> Vec<WeightSpec> {
    let mut specs = FeatureEncoder::weight_specs(&cfg.encoder());
    specs.extend(TransformerUpdater::weight_specs(&cfg.updater()));
    specs
}

/// Seeded random weights for `cfg`.
pub fn random_weights(cfg: &RunConfig, seed: u64) -> ModelWeights {
    ModelWeights::random(&weight_specs(cfg), seed)
}

impl Tracker<TransformerUpdater> {
    pub fn from_weights(weights: &ModelWeights, cfg: &RunConfig) -> Result<Self> {
        let encoder = FeatureEncoder::from_weights(weights, &cfg.encoder())?;
        let updater = TransformerUpdater::from_weights(weights, &cfg.updater())?;
        Self::new(encoder, updater, cfg)
    }
}

impl<U: Updater> Tracker<U> {
    pub fn new(encoder: FeatureEncoder, updater: U, cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.stride != ENCODER_STRIDE {
            return Err(Error::Config(format!(
                "the encoder downsamples by {ENCODER_STRIDE}, config asks for {}",
                cfg.stride
            )));
        }
        if encoder.feature_dim() != cfg.feature_dim {
            return Err(Error::Config("encoder width disagrees with feature_dim".into()));
        }
        Ok(Self {
            cfg: cfg.clone(),
            encoder,
            updater,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn updater(&self) -> &U {
        &self.updater
    }

    pub fn prepare(&self, video: &RgbdVideo) -> Result<PreparedVideo> {
        Ok(PreparedVideo {
            features: self.encoder.encode(video.rgb.view())?,
            depth: downsample_depth(video.depth.view(), self.cfg.stride)?,
            height: video.height(),
            width: video.width(),
        })
    }

    /// Camera-frame trajectories of `queries` (`N x 3` xyz, visible in
    /// frame 1) over every frame of `video`.
    pub fn track(&self, video: &RgbdVideo, queries: ArrayView2<'_, f64>) -> Result<TrajectorySet> {
        self.track_observed(video, queries, &mut ())
    }

    pub fn track_observed(
        &self,
        video: &RgbdVideo,
        queries: ArrayView2<'_, f64>,
        observer: &mut dyn TrackObserver,
    ) -> Result<TrajectorySet> {
        let k = video.intrinsics;
        let query_uvd = queries_to_uvd(queries, video)?;
        let prepared = self.prepare(video)?;
        let uvd = self.track_prepared(&prepared, video, query_uvd.view(), observer)?;
        let (n, frames, _) = uvd.dim();
        let mut xyz = Array3::zeros(uvd.dim());
        for a in 0..n {
            for t in 0..frames {
                let e = uvd.slice(s![a, t, ..]);
                if e == query_uvd.row(a) {
                    xyz.slice_mut(s![a, t, ..]).assign(&queries.row(a));
                } else {
                    let p = uvd_to_xyz(Uvd::new(e[0], e[1], e[2]), &k)?;
                    xyz.slice_mut(s![a, t, ..]).assign(&ndarray::arr1(&[p.x, p.y, p.z]));
                }
            }
        }
        TrajectorySet::all_valid(xyz, CoordFrame::Camera, Some(k))
    }

    /// Full-resolution uvd trajectories (`N x T x 3`) of `query_uvd`, with
    /// support points added and dropped according to the configured mode.
    pub fn track_prepared(
        &self,
        prepared: &PreparedVideo,
        video: &RgbdVideo,
        query_uvd: ArrayView2<'_, f64>,
        observer: &mut dyn TrackObserver,
    ) -> Result<Array3<f64>> {
        let n = query_uvd.nrows();
        let frames = prepared.features.dim().0;
        let with_support = |q: ArrayView2<'_, f64>| -> Result<Array2<f64>> {
            let uv: Vec<[f64; 2]> = q.rows().into_iter().map(|r| [r[0], r[1]]).collect();
            let extra = sample_support_points(&uv, prepared.height, prepared.width, self.cfg.support);
            let depths = support_depths(video.depth.index_axis(Axis(0), 0), &extra)?;
            let mut all = Array2::zeros((q.nrows() + extra.len(), 3));
            all.slice_mut(s![..q.nrows(), ..]).assign(&q);
            for (i, (p, d)) in extra.iter().zip(depths).enumerate() {
                all.row_mut(q.nrows() + i).assign(&ndarray::arr1(&[p[0], p[1], d]));
            }
            Ok(all)
        };
        match self.cfg.mode {
            InferenceMode::All => {
                let points = with_support(query_uvd)?;
                let out = self.track_points(prepared, points.view(), observer)?;
                Ok(out.slice(s![..n, .., ..]).to_owned())
            }
            InferenceMode::One => {
                let mut out = Array3::zeros((n, frames, 3));
                for a in 0..n {
                    let points = with_support(query_uvd.slice(s![a..a + 1, ..]))?;
                    let one = self.track_points(prepared, points.view(), observer)?;
                    out.slice_mut(s![a, .., ..]).assign(&one.slice(s![0, .., ..]));
                }
                Ok(out)
            }
        }
    }

    /// Tracks exactly the given points (`N x 3` full-resolution uvd)
    /// through every window and chains the results.
    pub fn track_points(
        &self,
        prepared: &PreparedVideo,
        points: ArrayView2<'_, f64>,
        observer: &mut dyn TrackObserver,
    ) -> Result<Array3<f64>> {
        let cfg = &self.cfg;
        let frames = prepared.features.dim().0;
        let plan = plan_windows(frames, cfg.window)?;
        let s = cfg.stride as f64;
        let template = sample_template(prepared.features.index_axis(Axis(0), 0), points, s);
        let mut q0 = Array3::zeros((points.nrows(), cfg.window, template.ncols()));
        for t in 0..cfg.window {
            q0.index_axis_mut(Axis(1), t).assign(&template);
        }
        let params = FimParams::from(cfg);
        let mut segments: Vec<Array3<f64>> = Vec::with_capacity(plan.len());
        for (i, &start) in plan.starts.iter().enumerate() {
            let mut p = init_window(&plan, i, segments.last().map(|p| p.view()), points)?;
            scale_uv(&mut p, 1.0 / s);
            let mut state = WindowState {
                q: q0.clone(),
                p,
                iteration: 0,
            };
            observer.window_started(i, start, state.q.view(), state.p.view());
            let range = start - 1..start - 1 + cfg.window;
            let features = prepared.features.slice(s![range.clone(), .., .., ..]);
            let depth = prepared.depth.slice(s![range, .., ..]);
            for _ in 0..cfg.iterations {
                state = fim_iterate(&state, features, depth, &self.updater, &params)?;
            }
            scale_uv(&mut state.p, s);
            segments.push(state.p);
        }
        chain_segments(&plan, &segments)
    }
}

/// Builds the default transformer tracker and runs it.
pub fn track(
    video: &RgbdVideo,
    queries: ArrayView2<'_, f64>,
    weights: &ModelWeights,
    cfg: &RunConfig,
) -> Result<TrajectorySet> {
    Tracker::from_weights(weights, cfg)?.track(video, queries)
}

fn queries_to_uvd(queries: ArrayView2<'_, f64>, video: &RgbdVideo) -> Result<Array2<f64>> {
    if queries.ncols() != 3 {
        return Err(Error::ShapeMismatch(format!("queries {:?}, expected N x 3", queries.shape())));
    }
    let mut out = Array2::zeros((queries.nrows(), 3));
    for (q, mut o) in queries.rows().into_iter().zip(out.rows_mut()) {
        let uvd = xyz_to_uvd(&Point3::new(q[0], q[1], q[2]), &video.intrinsics)?;
        o.assign(&ndarray::arr1(&[uvd.u, uvd.v, uvd.d]));
    }
    Ok(out)
}

fn scale_uv(p: &mut Array3<f64>, factor: f64) {
    p.slice_mut(s![.., .., ..2]).mapv_inplace(|v| v * factor);
}

/// Template feature of each point: frame-1 features bilinearly sampled at
/// `uv / s`. `features` is `c_f x h x w`, `points` full-resolution uvd.
pub fn sample_template(features: ArrayView3<'_, f32>, points: ArrayView2<'_, f64>, s: f64) -> Array2<f32> {
    let c = features.dim().0;
    let mut out = Array2::zeros((points.nrows(), c));
    for (p, mut row) in points.rows().into_iter().zip(out.rows_mut()) {
        bilinear_sample_channels(features, p[0] / s, p[1] / s, row.as_slice_mut().unwrap());
    }
    out
}
