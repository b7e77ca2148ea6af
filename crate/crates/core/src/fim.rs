//! One refinement iteration: assemble appearance correlation, depth
//! residual and motion features, run the updater, apply its residuals.

use ndarray::{concatenate, s, Array2, Array3, ArrayView3, ArrayView4, Axis, Zip};

use crate::config::RunConfig;
use crate::correlation::{build_pyramid, lookup};
use crate::error::{Error, Result};
use crate::geometry::bilinear_sample;
use crate::updater::{encoding::write_2d, Updater};

/// Template features and downscaled trajectories of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowState {
    /// `N x S x c_f`
    pub q: Array3<f32>,
    /// `N x S x 3`: `(u / s, v / s, d)`.
    pub p: Array3<f64>,
    /// Completed iterations.
    pub iteration: usize,
}

/// Inverse-depth difference between depth sampled along the trajectory and
/// the predicted depth, `1 / sampled - 1 / predicted`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthResidualFeature {
    /// `N x S`
    pub values: Array2<f32>,
    /// False where the sampled depth was non-positive or non-finite; the
    /// residual is zero there.
    pub valid: Array2<bool>,
}

/// Displacements relative to the window's first frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionFeatures {
    /// `N x S x (2 + c_o)`: `[du, dv, encoding(du, dv)]`.
    pub uv: Array3<f32>,
    /// `N x S`: `dd`.
    pub d: Array2<f32>,
}

/// Knobs of the iteration, taken from [`RunConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FimParams {
    pub radius: usize,
    pub levels: usize,
    pub motion_dim: usize,
    pub min_depth: f64,
}

impl From<&RunConfig> for FimParams {
    fn from(c: &RunConfig) -> Self {
        Self {
            radius: c.radius,
            levels: c.levels,
            motion_dim: c.motion_dim,
            min_depth: c.min_depth,
        }
    }
}

impl Default for FimParams {
    fn default() -> Self {
        Self::from(&RunConfig::default())
    }
}

/// `p` is `N x S x 3` downscaled uvd, `depth` the matching `S x h x w`
/// downsampled depth maps.
pub fn depth_residual(p: ArrayView3<'_, f64>, depth: ArrayView3<'_, f32>) -> Result<DepthResidualFeature> {
    let (n, frames, _) = p.dim();
    if depth.dim().0 != frames {
        return Err(Error::ShapeMismatch(format!(
            "{frames} trajectory frames vs {} depth maps",
            depth.dim().0
        )));
    }
    let mut values = Array2::zeros((n, frames));
    let mut valid = Array2::from_elem((n, frames), false);
    for a in 0..n {
        for t in 0..frames {
            let predicted = p[[a, t, 2]];
            if !(predicted > 0.0) {
                return Err(Error::NonPositivePrediction { point: a, frame: t });
            }
            let sampled = bilinear_sample(depth.index_axis(Axis(0), t), p[[a, t, 0]], p[[a, t, 1]]);
            if sampled > 0.0 && sampled.is_finite() {
                values[[a, t]] = (1.0 / sampled - 1.0 / predicted) as f32;
                valid[[a, t]] = true;
            }
        }
    }
    Ok(DepthResidualFeature { values, valid })
}

pub fn motion_features(p: ArrayView3<'_, f64>, motion_dim: usize) -> Result<MotionFeatures> {
    let (n, frames, _) = p.dim();
    let mut uv = Array3::zeros((n, frames, 2 + motion_dim));
    let mut d = Array2::zeros((n, frames));
    for a in 0..n {
        for t in 0..frames {
            let du = p[[a, t, 0]] - p[[a, 0, 0]];
            let dv = p[[a, t, 1]] - p[[a, 0, 1]];
            uv[[a, t, 0]] = du as f32;
            uv[[a, t, 1]] = dv as f32;
            let mut row = uv.slice_mut(s![a, t, 2..]);
            write_2d(du, dv, row.as_slice_mut().unwrap())?;
            d[[a, t]] = (p[[a, t, 2]] - p[[a, 0, 2]]) as f32;
        }
    }
    Ok(MotionFeatures { uv, d })
}

/// Concatenates `[correlation, depth residual, uv motion, depth motion]`.
pub fn assemble_input(
    correlation: &Array3<f32>,
    residual: &DepthResidualFeature,
    motion: &MotionFeatures,
) -> Array3<f32> {
    concatenate(
        Axis(2),
        &[
            correlation.view(),
            residual.values.view().insert_axis(Axis(2)),
            motion.uv.view(),
            motion.d.view().insert_axis(Axis(2)),
        ],
    )
    .expect("feature blocks share N x S")
}

/// Builds the updater input for `state`.
pub fn iteration_input(
    state: &WindowState,
    features: ArrayView4<'_, f32>,
    depth: ArrayView3<'_, f32>,
    params: &FimParams,
) -> Result<Array3<f32>> {
    let pyr = build_pyramid(state.q.view(), features, params.levels)?;
    let corr = lookup(&pyr, state.p.slice(s![.., .., ..2]), params.radius);
    let residual = depth_residual(state.p.view(), depth)?;
    let motion = motion_features(state.p.view(), params.motion_dim)?;
    Ok(assemble_input(&corr, &residual, &motion))
}

/// One refinement step: `Q += dQ`, `P += dP`, with updated depths at or
/// below `min_depth` clamped to `min_depth`.
pub fn fim_iterate(
    state: &WindowState,
    features: ArrayView4<'_, f32>,
    depth: ArrayView3<'_, f32>,
    updater: &dyn Updater,
    params: &FimParams,
) -> Result<WindowState> {
    let x = iteration_input(state, features, depth, params)?;
    let r = updater.update(x.view(), state.p.view())?;
    if r.delta_p.dim() != state.p.dim() || r.delta_q.dim() != state.q.dim() {
        return Err(Error::ShapeMismatch("updater residual shapes".into()));
    }
    let q = &state.q + &r.delta_q;
    let mut p = state.p.clone();
    Zip::from(&mut p).and(&r.delta_p).for_each(|p, dp| *p += *dp as f64);
    for mut row in p.rows_mut() {
        if row[2] <= params.min_depth {
            row[2] = params.min_depth;
        }
    }
    Ok(WindowState {
        q,
        p,
        iteration: state.iteration + 1,
    })
}
