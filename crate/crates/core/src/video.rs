use ndarray::{s, Array3, Array4, ArrayView3, ArrayView4};

use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;

/// `T` RGB frames (`T x 3 x H x W`, 8-bit) with metric depth maps
/// (`T x H x W`) and pinhole intrinsics.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbdVideo {
    pub rgb: Array4<u8>,
    pub depth: Array3<f32>,
    pub intrinsics: CameraIntrinsics,
}

impl RgbdVideo {
    pub fn new(rgb: Array4<u8>, depth: Array3<f32>, intrinsics: CameraIntrinsics) -> Result<Self> {
        let (t, c, h, w) = rgb.dim();
        if c != 3 || depth.dim() != (t, h, w) {
            return Err(Error::ShapeMismatch(format!(
                "rgb {:?} and depth {:?} disagree",
                rgb.shape(),
                depth.shape()
            )));
        }
        intrinsics.validate()?;
        Ok(Self {
            rgb,
            depth,
            intrinsics,
        })
    }

    pub fn frames(&self) -> usize {
        self.rgb.dim().0
    }

    pub fn height(&self) -> usize {
        self.rgb.dim().2
    }

    pub fn width(&self) -> usize {
        self.rgb.dim().3
    }

    pub fn rgb_range(&self, start: usize, len: usize) -> ArrayView4<'_, u8> {
        self.rgb.slice(s![start..start + len, .., .., ..])
    }

    pub fn depth_range(&self, start: usize, len: usize) -> ArrayView3<'_, f32> {
        self.depth.slice(s![start..start + len, .., ..])
    }
}
