//! Sinusoidal positional encodings.

use ndarray::{Array2, ArrayView3};

use crate::error::{Error, Result};

/// `c`-channel 1D encoding: channel `2i` is `sin(coord / 10000^(2i/c))`,
/// channel `2i + 1` the matching cosine.
pub fn sin_encoding_1d(coord: f64, c: usize) -> Result<Vec<f32>> {
    if !c.is_multiple_of(2) {
        return Err(Error::OddChannelCount(c));
    }
    let mut out = vec![0.0; c];
    write_1d(coord, &mut out);
    Ok(out)
}

fn write_1d(coord: f64, out: &mut [f32]) {
    let c = out.len() as f64;
    for (i, pair) in out.chunks_exact_mut(2).enumerate() {
        let angle = coord / 10000f64.powf(2.0 * i as f64 / c);
        pair[0] = angle.sin() as f32;
        pair[1] = angle.cos() as f32;
    }
}

/// Two 1D encodings of `c / 2` channels each, `u` first.
pub fn sin_encoding_2d(u: f64, v: f64, c: usize) -> Result<Vec<f32>> {
    let mut out = vec![0.0; c];
    write_2d(u, v, &mut out)?;
    Ok(out)
}

pub(crate) fn write_2d(u: f64, v: f64, out: &mut [f32]) -> Result<()> {
    let c = out.len();
    if !c.is_multiple_of(4) {
        return Err(Error::BadChannelCount(c));
    }
    let (a, b) = out.split_at_mut(c / 2);
    write_1d(u, a);
    write_1d(v, b);
    Ok(())
}

/// Temporal (`S x c`) and spatial (`N x c`) encodings for a window of
/// trajectories `p` (`N x S x 3`, uv first).
///
/// Time uses window-relative indices `1..=S`; space uses each trajectory's
/// first-frame uv.
pub fn build_positional(p: ArrayView3<'_, f64>, c: usize) -> Result<(Array2<f32>, Array2<f32>)> {
    let (n, frames, _) = p.dim();
    if !c.is_multiple_of(4) {
        return Err(Error::BadChannelCount(c));
    }
    let mut time = Array2::zeros((frames, c));
    for (t, mut row) in time.rows_mut().into_iter().enumerate() {
        write_1d((t + 1) as f64, row.as_slice_mut().unwrap());
    }
    let mut space = Array2::zeros((n, c));
    for (a, mut row) in space.rows_mut().into_iter().enumerate() {
        write_2d(p[[a, 0, 0]], p[[a, 0, 1]], row.as_slice_mut().unwrap())?;
    }
    Ok((time, space))
}
