//! 2D and 3D trajectory accuracy metrics.
//!
//! 2D errors are measured after rescaling pixel coordinates to a 256 x 256
//! image. Entries that are invalid in the ground truth are ignored by every
//! statistic; invalid or behind-camera predictions count as infinitely
//! wrong.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;
use crate::trajectory::TrajectorySet;

/// Side of the normalized image used for 2D metrics.
pub const NORMALIZED_SIZE: f64 = 256.0;
pub const THRESHOLDS_2D: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];
pub const THRESHOLDS_3D: [f64; 4] = [0.10, 0.20, 0.40, 0.80];
pub const SURVIVAL_2D: f64 = 16.0;
pub const SURVIVAL_3D: f64 = 0.50;

/// `(u, v)` in a `height x width` image to the 256 x 256 frame.
pub fn normalize_2d(uv: [f64; 2], height: usize, width: usize) -> [f64; 2] {
    [uv[0] * NORMALIZED_SIZE / width as f64, uv[1] * NORMALIZED_SIZE / height as f64]
}

pub fn denormalize_2d(uv: [f64; 2], height: usize, width: usize) -> [f64; 2] {
    [uv[0] * width as f64 / NORMALIZED_SIZE, uv[1] * height as f64 / NORMALIZED_SIZE]
}

fn check(errors: ArrayView2<'_, f64>, valid: ArrayView2<'_, bool>) -> Result<()> {
    if errors.dim() != valid.dim() {
        return Err(Error::ShapeMismatch(format!(
            "errors {:?} vs mask {:?}",
            errors.shape(),
            valid.shape()
        )));
    }
    if !valid.iter().any(|v| *v) {
        return Err(Error::NoValidPoints);
    }
    Ok(())
}

fn valid_errors<'a>(errors: ArrayView2<'a, f64>, valid: ArrayView2<'a, bool>) -> impl Iterator<Item = f64> + 'a {
    errors.into_iter().zip(valid).filter(|(_, v)| **v).map(|(e, _)| *e)
}

/// Mean over `thresholds` of the percentage of valid entries whose error
/// is below the threshold.
pub fn delta_avg(errors: ArrayView2<'_, f64>, valid: ArrayView2<'_, bool>, thresholds: &[f64]) -> Result<f64> {
    check(errors, valid)?;
    let all: Vec<f64> = valid_errors(errors, valid).collect();
    let pct = |th: f64| 100.0 * all.iter().filter(|e| **e < th).count() as f64 / all.len() as f64;
    Ok(thresholds.iter().map(|t| pct(*t)).sum::<f64>() / thresholds.len() as f64)
}

/// Percentage of a trajectory's valid frames before its first error above
/// `threshold` (the failing frame counts as lost), averaged over
/// trajectories with at least one valid frame.
pub fn survival(errors: ArrayView2<'_, f64>, valid: ArrayView2<'_, bool>, threshold: f64) -> Result<f64> {
    check(errors, valid)?;
    let mut sum = 0.0;
    let mut tracks = 0usize;
    for (row, mask) in errors.rows().into_iter().zip(valid.rows()) {
        let seq: Vec<f64> = row.iter().zip(mask).filter(|(_, v)| **v).map(|(e, _)| *e).collect();
        if seq.is_empty() {
            continue;
        }
        let kept = seq.iter().position(|e| !(*e <= threshold)).unwrap_or(seq.len());
        sum += 100.0 * kept as f64 / seq.len() as f64;
        tracks += 1;
    }
    Ok(sum / tracks as f64)
}

/// Median over all valid entries; an even count takes the midpoint.
pub fn mae(errors: ArrayView2<'_, f64>, valid: ArrayView2<'_, bool>) -> Result<f64> {
    check(errors, valid)?;
    let mut all: Vec<f64> = valid_errors(errors, valid).collect();
    all.sort_by(f64::total_cmp);
    let m = all.len() / 2;
    Ok(if all.len() % 2 == 1 {
        all[m]
    } else {
        0.5 * (all[m - 1] + all[m])
    })
}

/// Mean error over valid entries.
pub fn epe(errors: ArrayView2<'_, f64>, valid: ArrayView2<'_, bool>) -> Result<f64> {
    check(errors, valid)?;
    let all: Vec<f64> = valid_errors(errors, valid).collect();
    Ok(all.iter().sum::<f64>() / all.len() as f64)
}

/// Euclidean distance per entry of two camera-frame trajectory sets.
pub fn errors_3d(pred: &TrajectorySet, gt: &TrajectorySet) -> Result<Array2<f64>> {
    let (pred, gt) = (pred.to_camera()?, gt.to_camera()?);
    same_shape(&pred, &gt)?;
    Ok(Array2::from_shape_fn(gt.valid.dim(), |(a, t)| {
        if !pred.valid[[a, t]] {
            return f64::INFINITY;
        }
        let (p, g) = (pred.point(a, t), gt.point(a, t));
        ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2) + (p[2] - g[2]).powi(2)).sqrt()
    }))
}

/// Pixel distance per entry in the normalized frame, both sets projected
/// with `k`.
pub fn errors_2d(pred: &TrajectorySet, gt: &TrajectorySet, k: &CameraIntrinsics, height: usize, width: usize) -> Result<Array2<f64>> {
    let (pred, gt) = (pred.to_camera()?, gt.to_camera()?);
    same_shape(&pred, &gt)?;
    let project = |p: [f64; 3]| -> Option<[f64; 2]> {
        (p[2] > 0.0).then(|| normalize_2d([k.fx * p[0] / p[2] + k.cx, k.fy * p[1] / p[2] + k.cy], height, width))
    };
    Ok(Array2::from_shape_fn(gt.valid.dim(), |(a, t)| {
        match (pred.valid[[a, t]].then(|| project(pred.point(a, t))).flatten(), project(gt.point(a, t))) {
            (Some(p), Some(g)) => ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2)).sqrt(),
            _ => f64::INFINITY,
        }
    }))
}

fn same_shape(pred: &TrajectorySet, gt: &TrajectorySet) -> Result<()> {
    if pred.positions.dim() != gt.positions.dim() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.positions.shape(),
            gt.positions.shape()
        )));
    }
    Ok(())
}

/// Every metric of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub delta2d_avg: f64,
    pub survival2d_16: f64,
    pub mae2d: f64,
    #[serde(rename = "delta3d_0.10")]
    pub delta3d_010: f64,
    #[serde(rename = "delta3d_0.20")]
    pub delta3d_020: f64,
    #[serde(rename = "delta3d_0.40")]
    pub delta3d_040: f64,
    #[serde(rename = "delta3d_0.80")]
    pub delta3d_080: f64,
    pub delta3d_avg: f64,
    #[serde(rename = "survival3d_0.50")]
    pub survival3d_050: f64,
    pub mae3d: f64,
    pub epe3d: f64,
}

impl EvalReport {
    pub fn fields(&self) -> [(&'static str, f64); 11] {
        [
            ("delta2d_avg", self.delta2d_avg),
            ("survival2d_16", self.survival2d_16),
            ("mae2d", self.mae2d),
            ("delta3d_0.10", self.delta3d_010),
            ("delta3d_0.20", self.delta3d_020),
            ("delta3d_0.40", self.delta3d_040),
            ("delta3d_0.80", self.delta3d_080),
            ("delta3d_avg", self.delta3d_avg),
            ("survival3d_0.50", self.survival3d_050),
            ("mae3d", self.mae3d),
            ("epe3d", self.epe3d),
        ]
    }

    /// `key: value` lines, six decimals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.fields() {
            let _ = writeln!(out, "{k}: {v:.6}");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Full metric suite. Ground-truth entries at or beyond `depth_cap` (in
/// camera z) are dropped. Intrinsics come from the ground truth, falling
/// back to the prediction.
pub fn evaluate(
    pred: &TrajectorySet,
    gt: &TrajectorySet,
    height: usize,
    width: usize,
    depth_cap: Option<f64>,
) -> Result<EvalReport> {
    let k = gt
        .intrinsics
        .or(pred.intrinsics)
        .ok_or_else(|| Error::Config("no intrinsics for 2D metrics".into()))?;
    let gt_cam = gt.to_camera()?;
    let e3 = errors_3d(pred, &gt_cam)?;
    let e2 = errors_2d(pred, &gt_cam, &k, height, width)?;
    let valid = Array2::from_shape_fn(gt_cam.valid.dim(), |(a, t)| {
        let z = gt_cam.positions[[a, t, 2]];
        gt_cam.valid[[a, t]] && z > 0.0 && depth_cap.is_none_or(|cap| z < cap)
    });
    let (e2, e3, valid) = (e2.view(), e3.view(), valid.view());
    let d3: Vec<f64> = THRESHOLDS_3D
        .iter()
        .map(|t| delta_avg(e3, valid, &[*t]))
        .collect::<Result<_>>()?;
    Ok(EvalReport {
        delta2d_avg: delta_avg(e2, valid, &THRESHOLDS_2D)?,
        survival2d_16: survival(e2, valid, SURVIVAL_2D)?,
        mae2d: mae(e2, valid)?,
        delta3d_010: d3[0],
        delta3d_020: d3[1],
        delta3d_040: d3[2],
        delta3d_080: d3[3],
        delta3d_avg: delta_avg(e3, valid, &THRESHOLDS_3D)?,
        survival3d_050: survival(e3, valid, SURVIVAL_3D)?,
        mae3d: mae(e3, valid)?,
        epe3d: epe(e3, valid)?,
    })
}
