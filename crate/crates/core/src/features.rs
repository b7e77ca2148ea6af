//! Convolutional feature encoder and depth-map downsampling.
//!
//! The encoder reduces resolution by exactly 8: a stride-2 7x7 stem, then
//! four residual stages of two blocks each with strides (1, 2, 2, 1). The
//! stem plus the strided 3x3 convolution and the strided 1x1 skip projection
//! of stages 2 and 3 make five downsampling layers in total. Residual
//! blocks use instance normalization, so a frame's features never depend on
//! other frames in the batch.

use ndarray::{Array3, Array4, ArrayView3, ArrayView4, Axis};

use crate::config::EncoderConfig;
use crate::error::{Error, Result};
use crate::geometry::bilinear_sample;
use crate::nn::{relu_inplace, Conv2d, InstanceNorm};
use crate::weights::{ModelWeights, WeightSpec};

/// Total downsampling factor of [`FeatureEncoder`].
pub const ENCODER_STRIDE: usize = 8;

/// `S x c_f x h x w` feature maps.
pub type FeatureMaps = Array4<f32>;

/// `S x h x w` depth maps at feature resolution (meters). May contain
/// non-positive outlier sentinels.
pub type DownsampledDepth = Array3<f32>;

#[derive(Debug, Clone)]
struct ResidualBlock {
    conv1: Conv2d,
    norm1: InstanceNorm,
    conv2: Conv2d,
    norm2: InstanceNorm,
    skip: Option<(Conv2d, InstanceNorm)>,
}

/// `(input, output, stride)` for the eight residual blocks.
fn block_plan(cfg: &EncoderConfig) -> [(usize, usize, usize); 8] {
    let [w0, w1, w2] = cfg.widths;
    [
        (w0, w0, 1),
        (w0, w0, 1),
        (w0, w1, 2),
        (w1, w1, 1),
        (w1, w2, 2),
        (w2, w2, 1),
        (w2, w2, 1),
        (w2, w2, 1),
    ]
}

impl ResidualBlock {
    fn specs(prefix: &str, input: usize, output: usize, stride: usize) -> Vec<WeightSpec> {
        let mut v = Conv2d::specs(&format!("{prefix}.conv1"), input, output, 3);
        v.extend(InstanceNorm::specs(&format!("{prefix}.norm1"), output));
        v.extend(Conv2d::specs(&format!("{prefix}.conv2"), output, output, 3));
        v.extend(InstanceNorm::specs(&format!("{prefix}.norm2"), output));
        if stride != 1 || input != output {
            v.extend(Conv2d::specs(&format!("{prefix}.skip"), input, output, 1));
            v.extend(InstanceNorm::specs(&format!("{prefix}.skip_norm"), output));
        }
        v
    }

    fn load(w: &ModelWeights, prefix: &str, input: usize, output: usize, stride: usize) -> Result<Self> {
        let skip = if stride != 1 || input != output {
            Some((
                Conv2d::load(w, &format!("{prefix}.skip"), input, output, 1, stride)?,
                InstanceNorm::load(w, &format!("{prefix}.skip_norm"), output)?,
            ))
        } else {
            None
        };
        Ok(Self {
            conv1: Conv2d::load(w, &format!("{prefix}.conv1"), input, output, 3, stride)?,
            norm1: InstanceNorm::load(w, &format!("{prefix}.norm1"), output)?,
            conv2: Conv2d::load(w, &format!("{prefix}.conv2"), output, output, 3, 1)?,
            norm2: InstanceNorm::load(w, &format!("{prefix}.norm2"), output)?,
            skip,
        })
    }

    fn forward(&self, x: Array3<f32>) -> Array3<f32> {
        let mut y = self.conv1.forward(x.view());
        self.norm1.forward_inplace(&mut y);
        relu_inplace(&mut y);
        let mut y = self.conv2.forward(y.view());
        self.norm2.forward_inplace(&mut y);
        relu_inplace(&mut y);
        let shortcut = match &self.skip {
            Some((conv, norm)) => {
                let mut s = conv.forward(x.view());
                norm.forward_inplace(&mut s);
                s
            }
            None => x,
        };
        let mut out = y + shortcut;
        relu_inplace(&mut out);
        out
    }
}

#[derive(Debug, Clone)]
pub struct FeatureEncoder {
    cfg: EncoderConfig,
    stem: Conv2d,
    stem_norm: InstanceNorm,
    blocks: Vec<ResidualBlock>,
    head: Conv2d,
}

impl FeatureEncoder {
    pub fn weight_specs(cfg: &EncoderConfig) -> Vec<WeightSpec> {
        let mut v = Conv2d::specs("encoder.stem", 3, cfg.widths[0], 7);
        v.extend(InstanceNorm::specs("encoder.stem_norm", cfg.widths[0]));
        for (i, (input, output, stride)) in block_plan(cfg).into_iter().enumerate() {
            v.extend(ResidualBlock::specs(&format!("encoder.block{i}"), input, output, stride));
        }
        v.extend(Conv2d::specs("encoder.head", cfg.widths[2], cfg.feature_dim, 1));
        v
    }

    pub fn from_weights(w: &ModelWeights, cfg: &EncoderConfig) -> Result<Self> {
        let blocks = block_plan(cfg)
            .into_iter()
            .enumerate()
            .map(|(i, (input, output, stride))| {
                ResidualBlock::load(w, &format!("encoder.block{i}"), input, output, stride)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            cfg: *cfg,
            stem: Conv2d::load(w, "encoder.stem", 3, cfg.widths[0], 7, 2)?,
            stem_norm: InstanceNorm::load(w, "encoder.stem_norm", cfg.widths[0])?,
            blocks,
            head: Conv2d::load(w, "encoder.head", cfg.widths[2], cfg.feature_dim, 1, 1)?,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.cfg.feature_dim
    }

    /// One `3 x H x W` frame in `[-1, 1]` to `c_f x H/8 x W/8`.
    pub fn encode_frame(&self, frame: ArrayView3<'_, f32>) -> Result<Array3<f32>> {
        let (c, h, w) = frame.dim();
        if c != 3 || h % ENCODER_STRIDE != 0 || w % ENCODER_STRIDE != 0 || h == 0 || w == 0 {
            return Err(Error::ShapeMismatch(format!(
                "frame {c}x{h}x{w}: need 3 channels and sides divisible by {ENCODER_STRIDE}"
            )));
        }
        let mut x = self.stem.forward(frame);
        self.stem_norm.forward_inplace(&mut x);
        relu_inplace(&mut x);
        for b in &self.blocks {
            x = b.forward(x);
        }
        Ok(self.head.forward(x.view()))
    }

    /// `S x 3 x H x W` 8-bit frames to `S x c_f x H/8 x W/8`.
    pub fn encode(&self, frames: ArrayView4<'_, u8>) -> Result<FeatureMaps> {
        let (n, _, h, w) = frames.dim();
        let mut out = Array4::zeros((n, self.cfg.feature_dim, h / ENCODER_STRIDE, w / ENCODER_STRIDE));
        for (t, frame) in frames.outer_iter().enumerate() {
            let x = frame.mapv(|v| v as f32 * (2.0 / 255.0) - 1.0);
            out.index_axis_mut(Axis(0), t).assign(&self.encode_frame(x.view())?);
        }
        Ok(out)
    }
}

/// Builds the encoder from `weights` and encodes `frames`.
pub fn encode_frames(
    frames: ArrayView4<'_, u8>,
    weights: &ModelWeights,
    cfg: &EncoderConfig,
) -> Result<FeatureMaps> {
    FeatureEncoder::from_weights(weights, cfg)?.encode(frames)
}

/// Bilinear downsampling by `s`: output pixel `(i, j)` samples the input at
/// `(s * j, s * i)`, the same mapping trajectories use (`u / s`).
pub fn downsample_depth(depths: ArrayView3<'_, f32>, s: usize) -> Result<DownsampledDepth> {
    let (n, h, w) = depths.dim();
    if s == 0 || h % s != 0 || w % s != 0 {
        return Err(Error::ShapeMismatch(format!(
            "depth {h}x{w} is not divisible by {s}"
        )));
    }
    let (ho, wo) = (h / s, w / s);
    let mut out = Array3::zeros((n, ho, wo));
    for t in 0..n {
        let src = depths.index_axis(Axis(0), t);
        for i in 0..ho {
            for j in 0..wo {
                out[[t, i, j]] = bilinear_sample(src, (j * s) as f64, (i * s) as f64) as f32;
            }
        }
    }
    Ok(out)
}
