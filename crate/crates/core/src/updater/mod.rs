//! Transformer updater: predicts trajectory and template residuals from the
//! per-iteration input features.
//!
//! The input (`N x S x input_dim`) is projected to the transformer width,
//! summed with temporal and spatial sinusoidal encodings, and refined by
//! `2M` blocks alternating cross-time and cross-space attention (time
//! first). A linear head splits into `dP` (3 channels) and an intermediate
//! feature, which goes through layer norm, a linear layer and GELU to
//! give `dQ`.

mod attention;
pub mod encoding;

use ndarray::{s, Array3, ArrayView2, ArrayView3};

pub use attention::{softmax_rows, BlockAxis, TransformerBlock};
pub use encoding::{build_positional, sin_encoding_1d, sin_encoding_2d};

use crate::config::UpdaterConfig;
use crate::error::{Error, Result};
use crate::nn::{gelu, LayerNorm, Linear};
use crate::weights::{ModelWeights, WeightSpec};

/// Tensors that produce the residuals. Zeroing them turns every refinement
/// iteration into a no-op.
pub const OUTPUT_HEAD_PREFIXES: [&str; 2] = ["updater.head.", "updater.q_head.fc."];

/// Residuals for one refinement iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    /// `N x S x 3` update of the downscaled uvd trajectories.
    pub delta_p: Array3<f32>,
    /// `N x S x c_f` update of the template features.
    pub delta_q: Array3<f32>,
}

/// Anything that maps iteration inputs to residuals. The transformer is the
/// real implementation; tests plug in stubs.
pub trait Updater {
    /// `x_in` is `N x S x input_dim`, `p` the current downscaled uvd
    /// trajectories `N x S x 3`.
    fn update(&self, x_in: ArrayView3<'_, f32>, p: ArrayView3<'_, f64>) -> Result<Residuals>;
}

#[derive(Debug, Clone)]
pub struct TransformerUpdater {
    cfg: UpdaterConfig,
    input: Linear,
    blocks: Vec<TransformerBlock>,
    head: Linear,
    q_norm: LayerNorm,
    q_fc: Linear,
}

impl TransformerUpdater {
    pub fn weight_specs(cfg: &UpdaterConfig) -> Vec<WeightSpec> {
        let mut v = Linear::specs("updater.input", cfg.input_dim, cfg.width);
        for i in 0..2 * cfg.block_pairs {
            v.extend(TransformerBlock::specs(&format!("updater.blocks.{i}"), cfg.width, cfg.mlp_ratio));
        }
        v.extend(Linear::specs("updater.head", cfg.width, 3 + cfg.intermediate_dim));
        v.extend(LayerNorm::specs("updater.q_head.norm", cfg.intermediate_dim));
        v.extend(Linear::specs("updater.q_head.fc", cfg.intermediate_dim, cfg.template_dim));
        v
    }

    pub fn from_weights(w: &ModelWeights, cfg: &UpdaterConfig) -> Result<Self> {
        if !cfg.width.is_multiple_of(cfg.heads) || !cfg.width.is_multiple_of(4) {
            return Err(Error::Config(format!(
                "width {} must be divisible by 4 and by {} heads",
                cfg.width, cfg.heads
            )));
        }
        let blocks = (0..2 * cfg.block_pairs)
            .map(|i| {
                let axis = if i % 2 == 0 { BlockAxis::Time } else { BlockAxis::Space };
                TransformerBlock::load(w, &format!("updater.blocks.{i}"), axis, cfg.width, cfg.heads, cfg.mlp_ratio)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            cfg: *cfg,
            input: Linear::load(w, "updater.input", cfg.input_dim, cfg.width)?,
            blocks,
            head: Linear::load(w, "updater.head", cfg.width, 3 + cfg.intermediate_dim)?,
            q_norm: LayerNorm::load(w, "updater.q_head.norm", cfg.intermediate_dim)?,
            q_fc: Linear::load(w, "updater.q_head.fc", cfg.intermediate_dim, cfg.template_dim)?,
        })
    }

    pub fn config(&self) -> &UpdaterConfig {
        &self.cfg
    }

    pub fn forward(&self, x_in: ArrayView3<'_, f32>, p: ArrayView3<'_, f64>) -> Result<Residuals> {
        self.forward_with_probe(x_in, p, &mut |_, _| {})
    }

    /// As [`forward`](Self::forward), handing every attention map to `probe`.
    pub fn forward_with_probe(
        &self,
        x_in: ArrayView3<'_, f32>,
        p: ArrayView3<'_, f64>,
        probe: &mut dyn FnMut(BlockAxis, ArrayView2<'_, f32>),
    ) -> Result<Residuals> {
        let (n, frames, width) = x_in.dim();
        if width != self.cfg.input_dim || p.dim() != (n, frames, 3) {
            return Err(Error::ShapeMismatch(format!(
                "updater input {:?} / trajectories {:?}, expected width {}",
                x_in.shape(),
                p.shape(),
                self.cfg.input_dim
            )));
        }
        let c = self.cfg.width;
        let flat_in = x_in.to_shape((n * frames, width)).unwrap();
        let mut x = self
            .input
            .forward(flat_in.view())
            .into_shape_with_order((n, frames, c))
            .unwrap();
        let (time, space) = build_positional(p, c)?;
        for ((a, t, ch), v) in x.indexed_iter_mut() {
            *v += time[[t, ch]] + space[[a, ch]];
        }
        for b in &self.blocks {
            b.forward(&mut x, probe);
        }

        let flat = x.into_shape_with_order((n * frames, c)).unwrap();
        let head = self.head.forward(flat.view());
        let delta_p = head
            .slice(s![.., ..3])
            .to_owned()
            .into_shape_with_order((n, frames, 3))
            .unwrap();
        let inter = head.slice(s![.., 3..]);
        let mut dq = self.q_fc.forward(self.q_norm.forward(inter).view());
        dq.mapv_inplace(gelu);
        let delta_q = dq
            .into_shape_with_order((n, frames, self.cfg.template_dim))
            .unwrap();
        Ok(Residuals { delta_p, delta_q })
    }
}

impl Updater for TransformerUpdater {
    fn update(&self, x_in: ArrayView3<'_, f32>, p: ArrayView3<'_, f64>) -> Result<Residuals> {
        self.forward(x_in, p)
    }
}

/// Builds the transformer from `weights` and runs one forward pass.
pub fn updater_forward(
    x_in: ArrayView3<'_, f32>,
    p: ArrayView3<'_, f64>,
    weights: &ModelWeights,
    cfg: &UpdaterConfig,
) -> Result<Residuals> {
    TransformerUpdater::from_weights(weights, cfg)?.forward(x_in, p)
}

/// Sum of `dP` over all entries; a smooth scalar probe of the forward graph.
pub fn delta_p_sum(r: &Residuals) -> f64 {
    r.delta_p.iter().map(|v| *v as f64).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;

    fn small_cfg() -> UpdaterConfig {
        UpdaterConfig {
            input_dim: 12,
            width: 16,
            block_pairs: 2,
            heads: 2,
            mlp_ratio: 2,
            intermediate_dim: 8,
            template_dim: 6,
        }
    }

    fn inputs(n: usize, frames: usize, width: usize) -> (Array3<f32>, Array3<f64>) {
        let x = Array::from_shape_fn((n, frames, width), |(a, t, c)| ((a * 31 + t * 7 + c * 3) % 19) as f32 / 9.0 - 1.0);
        let p = Array::from_shape_fn((n, frames, 3), |(a, t, k)| (a * 3 + k) as f64 + 0.25 * t as f64 + 1.0);
        (x, p)
    }

    #[test]
    fn shapes_and_determinism() {
        let cfg = small_cfg();
        let w = ModelWeights::random(&TransformerUpdater::weight_specs(&cfg), 9);
        let (x, p) = inputs(3, 4, 12);
        let a = updater_forward(x.view(), p.view(), &w, &cfg).unwrap();
        let b = updater_forward(x.view(), p.view(), &w, &cfg).unwrap();
        assert_eq!(a.delta_p.dim(), (3, 4, 3));
        assert_eq!(a.delta_q.dim(), (3, 4, 6));
        assert_eq!(a, b);
    }

    #[test]
    fn zeroed_heads_give_zero_residuals() {
        let cfg = small_cfg();
        let mut w = ModelWeights::random(&TransformerUpdater::weight_specs(&cfg), 9);
        w.zero_prefixed(&OUTPUT_HEAD_PREFIXES);
        let (x, p) = inputs(2, 4, 12);
        let r = updater_forward(x.view(), p.view(), &w, &cfg).unwrap();
        assert!(r.delta_p.iter().all(|v| *v == 0.0));
        assert!(r.delta_q.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn wrong_input_width_is_rejected() {
        let cfg = small_cfg();
        let w = ModelWeights::random(&TransformerUpdater::weight_specs(&cfg), 9);
        let (x, p) = inputs(2, 4, 11);
        assert!(matches!(updater_forward(x.view(), p.view(), &w, &cfg), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn single_point_runs() {
        let cfg = small_cfg();
        let w = ModelWeights::random(&TransformerUpdater::weight_specs(&cfg), 2);
        let (x, p) = inputs(1, 4, 12);
        let r = updater_forward(x.view(), p.view(), &w, &cfg).unwrap();
        assert!(r.delta_p.iter().chain(r.delta_q.iter()).all(|v| v.is_finite()));
    }
}
