//! Multi-head self-attention and the pre-norm transformer block.

use std::cmp::Ordering;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Array3, ArrayView2};

use crate::error::Result;
use crate::nn::{gelu, LayerNorm, Linear};
use crate::weights::{ModelWeights, WeightSpec};

/// Which axis a block attends over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockAxis {
    /// One sequence per trajectory, `S` tokens long.
    Time,
    /// One sequence per frame, `N` tokens long.
    Space,
}

/// Row-wise softmax with max subtraction, in place.
pub fn softmax_rows(x: &mut Array2<f32>) {
    for mut row in x.rows_mut() {
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f32;
        row.mapv_inplace(|v| {
            let e = (v - max).exp();
            sum += e;
            e
        });
        let inv = 1.0 / sum;
        row.mapv_inplace(|v| v * inv);
    }
}

fn lexicographic(a: ArrayView2<'_, f32>, i: usize, j: usize) -> Ordering {
    a.row(i)
        .iter()
        .zip(a.row(j).iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

#[derive(Debug, Clone)]
pub struct TransformerBlock {
    pub axis: BlockAxis,
    heads: usize,
    norm1: LayerNorm,
    qkv: Linear,
    proj: Linear,
    norm2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
}

impl TransformerBlock {
    pub fn specs(prefix: &str, width: usize, mlp_ratio: usize) -> Vec<WeightSpec> {
        let mut v = LayerNorm::specs(&format!("{prefix}.norm1"), width);
        v.extend(Linear::specs(&format!("{prefix}.attn.qkv"), width, 3 * width));
        v.extend(Linear::specs(&format!("{prefix}.attn.proj"), width, width));
        v.extend(LayerNorm::specs(&format!("{prefix}.norm2"), width));
        v.extend(Linear::specs(&format!("{prefix}.mlp.fc1"), width, mlp_ratio * width));
        v.extend(Linear::specs(&format!("{prefix}.mlp.fc2"), mlp_ratio * width, width));
        v
    }

    pub fn load(
        w: &ModelWeights,
        prefix: &str,
        axis: BlockAxis,
        width: usize,
        heads: usize,
        mlp_ratio: usize,
    ) -> Result<Self> {
        Ok(Self {
            axis,
            heads,
            norm1: LayerNorm::load(w, &format!("{prefix}.norm1"), width)?,
            qkv: Linear::load(w, &format!("{prefix}.attn.qkv"), width, 3 * width)?,
            proj: Linear::load(w, &format!("{prefix}.attn.proj"), width, width)?,
            norm2: LayerNorm::load(w, &format!("{prefix}.norm2"), width)?,
            fc1: Linear::load(w, &format!("{prefix}.mlp.fc1"), width, mlp_ratio * width)?,
            fc2: Linear::load(w, &format!("{prefix}.mlp.fc2"), mlp_ratio * width, width)?,
        })
    }

    /// Token indices (into the flattened `N * S` grid) of each sequence.
    fn sequences(&self, n: usize, frames: usize) -> Vec<Vec<usize>> {
        match self.axis {
            BlockAxis::Time => (0..n).map(|a| (0..frames).map(|t| a * frames + t).collect()).collect(),
            BlockAxis::Space => (0..frames).map(|t| (0..n).map(|a| a * frames + t).collect()).collect(),
        }
    }

    /// `x += MHSA(LN(x)); x += MLP(LN(x))` over `N x S x c` tokens.
    ///
    /// Keys and values are visited in an order fixed by token content, not
    /// by position, so reordering the tokens of a sequence reorders the
    /// output without changing a single bit.
    pub fn forward(&self, x: &mut Array3<f32>, probe: &mut dyn FnMut(BlockAxis, ArrayView2<'_, f32>)) {
        let (n, frames, c) = x.dim();
        let d = c / self.heads;
        let scale = 1.0 / (d as f32).sqrt();
        let mut flat = x.view_mut().into_shape_with_order((n * frames, c)).unwrap();

        let h = self.norm1.forward(flat.view());
        let qkv = self.qkv.forward(h.view());
        let mut attn = Array2::<f32>::zeros((n * frames, c));
        for seq in self.sequences(n, frames) {
            let len = seq.len();
            let mut keys = seq.clone();
            keys.sort_by(|&i, &j| lexicographic(h.view(), i, j));
            let mut q = Array2::<f32>::zeros((len, d));
            let mut k = Array2::<f32>::zeros((len, d));
            let mut v = Array2::<f32>::zeros((len, d));
            let mut scores = Array2::<f32>::zeros((len, len));
            let mut out = Array2::<f32>::zeros((len, d));
            for head in 0..self.heads {
                let cols = head * d..(head + 1) * d;
                for (row, &tok) in seq.iter().enumerate() {
                    q.row_mut(row).assign(&qkv.slice(s![tok, cols.clone()]));
                }
                for (row, &tok) in keys.iter().enumerate() {
                    k.row_mut(row).assign(&qkv.slice(s![tok, c + cols.start..c + cols.end]));
                    v.row_mut(row).assign(&qkv.slice(s![tok, 2 * c + cols.start..2 * c + cols.end]));
                }
                general_mat_mul(scale, &q, &k.t(), 0.0, &mut scores);
                softmax_rows(&mut scores);
                probe(self.axis, scores.view());
                general_mat_mul(1.0, &scores, &v, 0.0, &mut out);
                for (row, &tok) in seq.iter().enumerate() {
                    attn.slice_mut(s![tok, cols.clone()]).assign(&out.row(row));
                }
            }
        }
        flat += &self.proj.forward(attn.view());

        let h = self.norm2.forward(flat.view());
        let mut hidden = self.fc1.forward(h.view());
        hidden.mapv_inplace(gelu);
        flat += &self.fc2.forward(hidden.view());
    }
}
