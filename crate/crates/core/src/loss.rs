//! Unrolled training loss over refinement iterates, and a central-difference
//! gradient probe for checking it.

use ndarray::{ArrayView2, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};

/// How per-entry terms are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Sum,
    /// Divide by the number of unmasked entries.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Discount of earlier iterations.
    pub gamma: f64,
    /// Weight of the inverse-depth term.
    pub alpha: f64,
    pub reduction: Reduction,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            gamma: 0.8,
            alpha: 250.0,
            reduction: Reduction::Sum,
        }
    }
}

impl From<&RunConfig> for LossConfig {
    fn from(c: &RunConfig) -> Self {
        Self {
            gamma: c.gamma,
            alpha: c.alpha,
            reduction: Reduction::Sum,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(self.alpha > 0.0) {
            return Err(Error::Config(format!(
                "gamma {} must lie in (0, 1] and alpha {} be positive",
                self.gamma, self.alpha
            )));
        }
        Ok(())
    }
}

/// `sum_i gamma^(n - i) * (|uv_i - uv_gt|_1 + alpha * |1/d_i - 1/d_gt|)`
/// over every unmasked point and frame.
///
/// `iterates[i]` and `gt` are `N x S x 3` `(u, v, d)`; `mask` (`N x S`)
/// drops entries where false.
pub fn window_loss(
    iterates: &[ArrayView3<'_, f64>],
    gt: ArrayView3<'_, f64>,
    mask: Option<ArrayView2<'_, bool>>,
    cfg: &LossConfig,
) -> Result<f64> {
    cfg.validate()?;
    let (n, frames, c) = gt.dim();
    if c != 3 || mask.is_some_and(|m| m.dim() != (n, frames)) {
        return Err(Error::ShapeMismatch(format!("ground truth {:?}", gt.shape())));
    }
    if let Some(p) = iterates.iter().find(|p| p.dim() != gt.dim()) {
        return Err(Error::ShapeMismatch(format!("iterate {:?} vs {:?}", p.shape(), gt.shape())));
    }
    let keep = |a: usize, t: usize| mask.is_none_or(|m| m[[a, t]]);
    let mut count = 0usize;
    for a in 0..n {
        for t in 0..frames {
            if !keep(a, t) {
                continue;
            }
            count += 1;
            let bad = std::iter::once(gt[[a, t, 2]])
                .chain(iterates.iter().map(|p| p[[a, t, 2]]))
                .find(|d| !(*d > 0.0));
            if let Some(d) = bad {
                return Err(Error::NonPositiveDepth(d));
            }
        }
    }
    let iters = iterates.len();
    let mut total = 0.0;
    for (i, p) in iterates.iter().enumerate() {
        let weight = cfg.gamma.powi((iters - 1 - i) as i32);
        let mut term = 0.0;
        for a in 0..n {
            for t in 0..frames {
                if !keep(a, t) {
                    continue;
                }
                term += (p[[a, t, 0]] - gt[[a, t, 0]]).abs()
                    + (p[[a, t, 1]] - gt[[a, t, 1]]).abs()
                    + cfg.alpha * (1.0 / p[[a, t, 2]] - 1.0 / gt[[a, t, 2]]).abs();
            }
        }
        total += weight * term;
    }
    Ok(match cfg.reduction {
        Reduction::Sum => total,
        Reduction::Mean if count > 0 => total / count as f64,
        Reduction::Mean => 0.0,
    })
}

/// Sum over sliding windows.
pub fn total_loss(window_losses: &[f64]) -> Result<f64> {
    if window_losses.is_empty() {
        return Err(Error::EmptyList);
    }
    Ok(window_losses.iter().sum())
}

/// Which iterate entry [`fd_gradient`] perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Probe {
    pub iteration: usize,
    pub point: usize,
    pub frame: usize,
    /// 0 = u, 1 = v, 2 = d.
    pub coord: usize,
}

/// Central difference `(L(x + h) - L(x - h)) / 2h` of [`window_loss`] with
/// respect to one iterate coordinate.
///
/// Fails with [`Error::KinkProximity`] when the coordinate lies within
/// `10 h` of its ground truth, where the L1 term is not differentiable.
pub fn fd_gradient(
    iterates: &[ArrayView3<'_, f64>],
    gt: ArrayView3<'_, f64>,
    mask: Option<ArrayView2<'_, bool>>,
    cfg: &LossConfig,
    probe: Probe,
    h: f64,
) -> Result<f64> {
    let Probe {
        iteration,
        point,
        frame,
        coord,
    } = probe;
    if iteration >= iterates.len() || coord > 2 || point >= gt.dim().0 || frame >= gt.dim().1 {
        return Err(Error::ShapeMismatch(format!("probe {probe:?} out of range")));
    }
    let idx = [point, frame, coord];
    let residual = iterates[iteration][idx] - gt[idx];
    if residual.abs() <= 10.0 * h {
        return Err(Error::KinkProximity { residual, step: h });
    }
    let shifted = |delta: f64| -> Result<f64> {
        let mut owned = iterates[iteration].to_owned();
        owned[idx] += delta;
        let mut views = iterates.to_vec();
        views[iteration] = owned.view();
        window_loss(&views, gt, mask, cfg)
    };
    Ok((shifted(h)? - shifted(-h)?) / (2.0 * h))
}
