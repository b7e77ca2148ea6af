//! Sliding-window partition, per-window initialization and chaining.

use ndarray::{s, Array3, ArrayView2, ArrayView3, Axis};

use crate::error::{Error, Result};

/// Windows of `window` frames covering `frames` frames. Starts are 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowPlan {
    pub frames: usize,
    pub window: usize,
    pub starts: Vec<usize>,
}

impl WindowPlan {
    pub fn step(&self) -> usize {
        self.window / 2
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    /// Inclusive 1-based `(first, last)` frame of each window.
    pub fn windows(&self) -> Vec<(usize, usize)> {
        self.starts.iter().map(|&s| (s, s + self.window - 1)).collect()
    }

    /// Frames shared by window `index` and its predecessor.
    pub fn overlap(&self, index: usize) -> usize {
        if index == 0 {
            0
        } else {
            self.starts[index - 1] + self.window - self.starts[index]
        }
    }
}

/// Starts at frame 1 and advances by `window / 2`. When the last regular
/// window would stop short of `frames`, a final window is anchored at
/// `frames - window + 1`.
pub fn plan_windows(frames: usize, window: usize) -> Result<WindowPlan> {
    if window < 2 || !window.is_multiple_of(2) {
        return Err(Error::Config(format!("window size {window} must be even and >= 2")));
    }
    if frames < window {
        return Err(Error::VideoTooShort { frames, window });
    }
    let step = window / 2;
    let last = frames - window + 1;
    let mut starts: Vec<usize> = (1..=last).step_by(step).collect();
    if *starts.last().unwrap() != last {
        starts.push(last);
    }
    Ok(WindowPlan {
        frames,
        window,
        starts,
    })
}

/// Initial trajectories of window `index`.
///
/// The first window replicates `queries` (`N x 3`). Later windows copy the
/// frames they share with the previous window's result and fill the rest
/// with that result's final frame. Works in any coordinate system.
pub fn init_window(
    plan: &WindowPlan,
    index: usize,
    prev: Option<ArrayView3<'_, f64>>,
    queries: ArrayView2<'_, f64>,
) -> Result<Array3<f64>> {
    let n = queries.nrows();
    let len = plan.window;
    if index == 0 {
        let mut out = Array3::zeros((n, len, 3));
        for t in 0..len {
            out.index_axis_mut(Axis(1), t).assign(&queries);
        }
        return Ok(out);
    }
    let prev = prev.ok_or(Error::MissingPrevious(index))?;
    if prev.dim() != (n, len, 3) {
        return Err(Error::ShapeMismatch(format!(
            "previous window {:?}, expected ({n}, {len}, 3)",
            prev.shape()
        )));
    }
    let overlap = plan.overlap(index);
    let mut out = Array3::zeros((n, len, 3));
    out.slice_mut(s![.., ..overlap, ..])
        .assign(&prev.slice(s![.., len - overlap.., ..]));
    let last = prev.index_axis(Axis(1), len - 1);
    for t in overlap..len {
        out.index_axis_mut(Axis(1), t).assign(&last);
    }
    Ok(out)
}

/// Writes each window's `N x S x 3` segment into an `N x T x 3` result in
/// plan order, so frames covered by two windows keep the later one.
pub fn chain_segments(plan: &WindowPlan, segments: &[Array3<f64>]) -> Result<Array3<f64>> {
    if segments.len() != plan.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} segments for {} windows",
            segments.len(),
            plan.len()
        )));
    }
    let n = segments.first().map_or(0, |s| s.dim().0);
    let mut out = Array3::zeros((n, plan.frames, 3));
    for (&start, seg) in plan.starts.iter().zip(segments) {
        if seg.dim() != (n, plan.window, 3) {
            return Err(Error::ShapeMismatch(format!("segment {:?}", seg.shape())));
        }
        out.slice_mut(s![.., start - 1..start - 1 + plan.window, ..]).assign(seg);
    }
    Ok(out)
}

/// Cuts a chained `N x T x 3` result back into per-window segments.
pub fn split_windows(plan: &WindowPlan, chained: ArrayView3<'_, f64>) -> Vec<Array3<f64>> {
    plan.starts
        .iter()
        .map(|&start| chained.slice(s![.., start - 1..start - 1 + plan.window, ..]).to_owned())
        .collect()
}
