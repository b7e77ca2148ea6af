//! Minimal dense layers on `ndarray`, single precision.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Array3, ArrayView2, ArrayView3, Axis, Ix1, Ix2, Ix4};

use crate::error::Result;
use crate::weights::{Init, ModelWeights, WeightSpec};

const NORM_EPS: f32 = 1e-5;

/// Fully connected layer. Weight stored `[out, in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Array2<f32>,
    pub bias: Array1<f32>,
}

impl Linear {
    pub fn specs(prefix: &str, input: usize, output: usize) -> Vec<WeightSpec> {
        vec![
            WeightSpec::new(format!("{prefix}.weight"), &[output, input], Init::Uniform { fan_in: input }),
            WeightSpec::new(format!("{prefix}.bias"), &[output], Init::Uniform { fan_in: input }),
        ]
    }

    pub fn load(w: &ModelWeights, prefix: &str, input: usize, output: usize) -> Result<Self> {
        Ok(Self {
            weight: w
                .get(&format!("{prefix}.weight"), &[output, input])?
                .into_dimensionality::<Ix2>()
                .unwrap()
                .to_owned(),
            bias: w
                .get(&format!("{prefix}.bias"), &[output])?
                .into_dimensionality::<Ix1>()
                .unwrap()
                .to_owned(),
        })
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    /// `rows x in` to `rows x out`.
    pub fn forward(&self, x: ArrayView2<'_, f32>) -> Array2<f32> {
        let mut out = Array2::zeros((x.nrows(), self.weight.nrows()));
        out.rows_mut().into_iter().for_each(|mut r| r.assign(&self.bias));
        general_mat_mul(1.0, &x, &self.weight.t(), 1.0, &mut out);
        out
    }
}

/// Layer normalization over the last axis.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Array1<f32>,
    pub beta: Array1<f32>,
}

impl LayerNorm {
    pub fn specs(prefix: &str, dim: usize) -> Vec<WeightSpec> {
        vec![
            WeightSpec::new(format!("{prefix}.weight"), &[dim], Init::Ones),
            WeightSpec::new(format!("{prefix}.bias"), &[dim], Init::Zeros),
        ]
    }

    pub fn load(w: &ModelWeights, prefix: &str, dim: usize) -> Result<Self> {
        let get = |n: &str| -> Result<Array1<f32>> {
            Ok(w.get(&format!("{prefix}.{n}"), &[dim])?
                .into_dimensionality::<Ix1>()
                .unwrap()
                .to_owned())
        };
        Ok(Self {
            gamma: get("weight")?,
            beta: get("bias")?,
        })
    }

    pub fn forward(&self, x: ArrayView2<'_, f32>) -> Array2<f32> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            let n = row.len() as f32;
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
            let inv = 1.0 / (var + NORM_EPS).sqrt();
            for ((v, g), b) in row.iter_mut().zip(&self.gamma).zip(&self.beta) {
                *v = (*v - mean) * inv * g + b;
            }
        }
        out
    }
}

/// Tanh-form GELU.
pub fn gelu(x: f32) -> f32 {
    const C: f32 = 0.797_884_6; // sqrt(2 / pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

pub fn relu_inplace(x: &mut Array3<f32>) {
    x.mapv_inplace(|v| v.max(0.0));
}

/// 2D convolution with zero padding `k / 2`, weight stored `[out, in, k, k]`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    /// Flattened to `[out, in * k * k]`.
    pub weight: Array2<f32>,
    pub bias: Array1<f32>,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv2d {
    pub fn specs(prefix: &str, input: usize, output: usize, kernel: usize) -> Vec<WeightSpec> {
        let fan_in = input * kernel * kernel;
        vec![
            WeightSpec::new(format!("{prefix}.weight"), &[output, input, kernel, kernel], Init::Uniform { fan_in }),
            WeightSpec::new(format!("{prefix}.bias"), &[output], Init::Uniform { fan_in }),
        ]
    }

    pub fn load(
        w: &ModelWeights,
        prefix: &str,
        input: usize,
        output: usize,
        kernel: usize,
        stride: usize,
    ) -> Result<Self> {
        let weight = w
            .get(&format!("{prefix}.weight"), &[output, input, kernel, kernel])?
            .into_dimensionality::<Ix4>()
            .unwrap()
            .to_owned()
            .into_shape_with_order((output, input * kernel * kernel))
            .unwrap();
        let bias = w
            .get(&format!("{prefix}.bias"), &[output])?
            .into_dimensionality::<Ix1>()
            .unwrap()
            .to_owned();
        Ok(Self {
            weight,
            bias,
            kernel,
            stride,
        })
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        let pad = self.kernel / 2;
        (
            (h + 2 * pad - self.kernel) / self.stride + 1,
            (w + 2 * pad - self.kernel) / self.stride + 1,
        )
    }

    /// `C x H x W` to `out x Ho x Wo` via im2col and one GEMM.
    pub fn forward(&self, x: ArrayView3<'_, f32>) -> Array3<f32> {
        let (c, h, w) = x.dim();
        let k = self.kernel;
        let pad = k / 2;
        let (ho, wo) = self.output_size(h, w);
        let mut cols = Array2::<f32>::zeros((c * k * k, ho * wo));
        for ci in 0..c {
            let plane = x.index_axis(Axis(0), ci);
            for ky in 0..k {
                for kx in 0..k {
                    let mut row = cols.row_mut((ci * k + ky) * k + kx);
                    let row = row.as_slice_mut().unwrap();
                    for oy in 0..ho {
                        let iy = (oy * self.stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = plane.row(iy as usize);
                        let dst = &mut row[oy * wo..(oy + 1) * wo];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                *d = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        let out_c = self.weight.nrows();
        let mut out = Array2::<f32>::zeros((out_c, ho * wo));
        for (mut row, b) in out.rows_mut().into_iter().zip(&self.bias) {
            row.fill(*b);
        }
        general_mat_mul(1.0, &self.weight, &cols, 1.0, &mut out);
        out.into_shape_with_order((out_c, ho, wo)).unwrap()
    }
}

/// Per-channel affine instance normalization, in place.
#[derive(Debug, Clone)]
pub struct InstanceNorm {
    pub gamma: Array1<f32>,
    pub beta: Array1<f32>,
}

impl InstanceNorm {
    pub fn specs(prefix: &str, channels: usize) -> Vec<WeightSpec> {
        LayerNorm::specs(prefix, channels)
    }

    pub fn load(w: &ModelWeights, prefix: &str, channels: usize) -> Result<Self> {
        let ln = LayerNorm::load(w, prefix, channels)?;
        Ok(Self {
            gamma: ln.gamma,
            beta: ln.beta,
        })
    }

    pub fn forward_inplace(&self, x: &mut Array3<f32>) {
        for ((mut plane, g), b) in x.outer_iter_mut().zip(&self.gamma).zip(&self.beta) {
            let n = plane.len() as f64;
            let mean = plane.iter().map(|v| *v as f64).sum::<f64>() / n;
            let var = plane.iter().map(|v| (*v as f64 - mean).powi(2)).sum::<f64>() / n;
            let inv = 1.0 / (var + NORM_EPS as f64).sqrt();
            plane.mapv_inplace(|v| (((v as f64 - mean) * inv) as f32) * g + b);
        }
    }
}
