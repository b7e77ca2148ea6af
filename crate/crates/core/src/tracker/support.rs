//! Auxiliary points tracked next to the queries to give cross-space
//! attention more context.

use ndarray::ArrayView2;

use crate::config::SupportMode;
use crate::error::{Error, Result};
use crate::geometry::bilinear_sample;

/// Points per side of each support grid.
pub const GRID: usize = 6;
/// Side of the square neighbourhood of local support points, in pixels.
pub const LOCAL_EXTENT: f64 = 50.0;

fn grid_coords(start: f64, extent: f64) -> impl Iterator<Item = f64> {
    let cell = extent / GRID as f64;
    (0..GRID).map(move |i| start + (i as f64 + 0.5) * cell)
}

/// A `6 x 6` grid over the whole image, each point centred in its cell.
pub fn global_grid(height: usize, width: usize) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(GRID * GRID);
    for v in grid_coords(0.0, (height - 1) as f64) {
        for u in grid_coords(0.0, (width - 1) as f64) {
            out.push([u, v]);
        }
    }
    out
}

/// A `6 x 6` grid over the 50 x 50 neighbourhood of `(u, v)`, clamped to
/// the image.
pub fn local_grid(u: f64, v: f64, height: usize, width: usize) -> Vec<[f64; 2]> {
    let half = LOCAL_EXTENT / 2.0;
    let mut out = Vec::with_capacity(GRID * GRID);
    for y in grid_coords(v - half, LOCAL_EXTENT) {
        for x in grid_coords(u - half, LOCAL_EXTENT) {
            out.push([x.clamp(0.0, (width - 1) as f64), y.clamp(0.0, (height - 1) as f64)]);
        }
    }
    out
}

/// Global grid first (if enabled), then one local grid per query.
pub fn sample_support_points(queries: &[[f64; 2]], height: usize, width: usize, mode: SupportMode) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    if height == 0 || width == 0 {
        return out;
    }
    if mode.global {
        out.extend(global_grid(height, width));
    }
    if mode.local {
        for q in queries {
            out.extend(local_grid(q[0], q[1], height, width));
        }
    }
    out
}

/// Depth under each support point. Where the map holds no usable depth
/// the mean of the map's valid pixels stands in.
pub fn support_depths(depth: ArrayView2<'_, f32>, points: &[[f64; 2]]) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Ok(vec![]);
    }
    let valid: Vec<f64> = depth
        .iter()
        .filter(|d| **d > 0.0 && d.is_finite())
        .map(|d| *d as f64)
        .collect();
    if valid.is_empty() {
        return Err(Error::NoValidDepth(0));
    }
    let fallback = valid.iter().sum::<f64>() / valid.len() as f64;
    Ok(points
        .iter()
        .map(|p| {
            let d = bilinear_sample(depth, p[0], p[1]);
            if d > 0.0 && d.is_finite() {
                d
            } else {
                fallback
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn global_grid_on_256() {
        let g = global_grid(256, 256);
        assert_eq!(g.len(), 36);
        let cell = 255.0 / 6.0;
        let xs: Vec<f64> = (0..6).map(|i| (i as f64 + 0.5) * cell).collect();
        assert_eq!(g[0], [xs[0], xs[0]]);
        assert_eq!(g[35], [xs[5], xs[5]]);
        assert_eq!(g[0][0], 21.25);
        assert_eq!(g[35][0], 233.75);
        for (i, p) in g.iter().enumerate() {
            assert_eq!(*p, [xs[i % 6], xs[i / 6]]);
        }
    }

    #[test]
    fn local_grid_stays_within_neighbourhood() {
        let g = local_grid(128.0, 100.0, 256, 256);
        assert_eq!(g.len(), 36);
        for p in &g {
            assert!((p[0] - 128.0).abs() <= 25.0 && (p[1] - 100.0).abs() <= 25.0);
        }
        let corner = local_grid(0.0, 0.0, 64, 64);
        assert!(corner.iter().all(|p| p[0] >= 0.0 && p[1] >= 0.0));
        assert!(corner.iter().any(|p| p[0] == 0.0));
    }

    #[test]
    fn counts_per_mode() {
        let q: Vec<[f64; 2]> = (0..5).map(|i| [10.0 * i as f64, 20.0]).collect();
        assert_eq!(sample_support_points(&q, 64, 96, SupportMode::NONE).len(), 0);
        assert_eq!(sample_support_points(&q, 64, 96, SupportMode::GLOBAL).len(), 36);
        assert_eq!(sample_support_points(&q, 64, 96, SupportMode::LOCAL).len(), 5 * 36);
        assert_eq!(q.len() + sample_support_points(&q, 64, 96, SupportMode::BOTH).len(), 5 + 36 + 5 * 36);
    }

    #[test]
    fn depths_fall_back_to_mean() {
        let mut d = Array2::from_elem((4, 4), 2.0f32);
        d[[0, 0]] = 0.0;
        d[[3, 3]] = 4.0;
        let z = support_depths(d.view(), &[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        assert_eq!(z[1], 2.0);
        assert!((z[0] - (2.0 * 14.0 + 4.0) / 15.0).abs() < 1e-12);
        let empty = Array2::<f32>::zeros((2, 2));
        assert!(matches!(support_depths(empty.view(), &[[0.0, 0.0]]), Err(Error::NoValidDepth(0))));
    }
}
