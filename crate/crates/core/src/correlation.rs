//! Multi-level appearance correlation between template features and frame
//! features, with radius-`r` neighbourhood lookup along trajectories.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Array3, Array4, ArrayView3, ArrayView4, Axis};

use crate::error::{Error, Result};
use crate::geometry::bilinear_sample;

/// `levels[i]` is `N x S x (h / 2^i) x (w / 2^i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationPyramid {
    pub levels: Vec<Array4<f32>>,
}

impl CorrelationPyramid {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Spatial `(h, w)` of each level.
    pub fn level_shapes(&self) -> Vec<(usize, usize)> {
        self.levels.iter().map(|l| (l.dim().2, l.dim().3)).collect()
    }
}

/// Output width of [`lookup`]: `levels * (2r + 1)^2`.
pub fn lookup_width(levels: usize, radius: usize) -> usize {
    levels * (2 * radius + 1).pow(2)
}

/// 2x2 average pooling, stride 2. Odd trailing rows/columns are dropped.
fn avg_pool2(x: &Array4<f32>) -> Array4<f32> {
    let (n, t, h, w) = x.dim();
    let (ho, wo) = (h / 2, w / 2);
    Array4::from_shape_fn((n, t, ho, wo), |(a, b, i, j)| {
        let (y, xx) = (2 * i, 2 * j);
        (x[[a, b, y, xx]] + x[[a, b, y, xx + 1]] + x[[a, b, y + 1, xx]] + x[[a, b, y + 1, xx + 1]]) * 0.25
    })
}

/// Dot products between each template vector `q[n, t, :]` and every feature
/// vector of frame `t`, followed by `levels - 1` rounds of 2x2 pooling.
///
/// `q` is `N x S x c_f`, `f` is `S x c_f x h x w`.
pub fn build_pyramid(q: ArrayView3<'_, f32>, f: ArrayView4<'_, f32>, levels: usize) -> Result<CorrelationPyramid> {
    let (n, frames, c) = q.dim();
    let (f_frames, f_c, h, w) = f.dim();
    if frames != f_frames || c != f_c {
        return Err(Error::ShapeMismatch(format!(
            "template {:?} vs features {:?}",
            q.shape(),
            f.shape()
        )));
    }
    if levels == 0 || (h >> (levels - 1)) == 0 || (w >> (levels - 1)) == 0 {
        return Err(Error::ShapeMismatch(format!(
            "{h}x{w} map cannot hold {levels} pyramid levels"
        )));
    }
    let mut first = Array4::<f32>::zeros((n, frames, h, w));
    let mut scores = Array2::<f32>::zeros((n, h * w));
    for t in 0..frames {
        let qt = q.slice(s![.., t, ..]);
        let ft = f.index_axis(Axis(0), t);
        let ft = ft.to_shape((c, h * w)).unwrap();
        general_mat_mul(1.0, &qt, &ft, 0.0, &mut scores);
        first
            .slice_mut(s![.., t, .., ..])
            .assign(&scores.view().into_shape_with_order((n, h, w)).unwrap());
    }
    let mut pyramid = vec![first];
    for _ in 1..levels {
        let next = avg_pool2(pyramid.last().unwrap());
        pyramid.push(next);
    }
    Ok(CorrelationPyramid { levels: pyramid })
}

/// Samples a `(2r + 1)^2` grid around each trajectory point on every level
/// and concatenates the levels.
///
/// `p_uv` holds feature-resolution coordinates, `N x S x 2`. Level `i`
/// samples at `p_uv / 2^i + (dx, dy)` for `dy, dx` in `-r..=r` (row-major,
/// `dy` outer).
pub fn lookup(pyr: &CorrelationPyramid, p_uv: ArrayView3<'_, f64>, radius: usize) -> Array3<f32> {
    let (n, frames, _) = p_uv.dim();
    let r = radius as isize;
    let per_level = (2 * radius + 1).pow(2);
    let mut out = Array3::<f32>::zeros((n, frames, pyr.num_levels() * per_level));
    for (li, level) in pyr.levels.iter().enumerate() {
        let scale = (1u64 << li) as f64;
        for a in 0..n {
            for t in 0..frames {
                let map = level.slice(s![a, t, .., ..]);
                let cx = p_uv[[a, t, 0]] / scale;
                let cy = p_uv[[a, t, 1]] / scale;
                let mut k = li * per_level;
                for dy in -r..=r {
                    for dx in -r..=r {
                        out[[a, t, k]] = bilinear_sample(map, cx + dx as f64, cy + dy as f64) as f32;
                        k += 1;
                    }
                }
            }
        }
    }
    out
}
