//! The two training loss families and their combination.
//!
//! Teaching: per-block weighted cross-entropy against the pseudo label,
//! with class weights balancing the skewed edge/non-edge distribution.
//! The per-pixel term is negated relative to the bare log expressions so
//! that minimization is well-posed. Regularization: per-block pixel-wise
//! squared difference between the predictions for an image and for its
//! perturbed counterpart. Both families weight blocks by the same `delta`
//! vector; the combined objective adds the consistency term scaled by `mu`.
//!
//! Losses are summed (not averaged) over pixels; every operation returns
//! exact gradients with respect to the probability maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryEdgeMap, EdgeProbMap};

/// Probabilities are clamped into `[EPS, 1 - EPS]` before any logarithm.
pub const EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Positive/negative balance factor for the class weights.
    pub lambda: f64,
    /// Per-block weights, one per side output (fused last).
    pub delta: Vec<f64>,
    /// Trade-off weight on the consistency term.
    pub mu: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 1.1,
            delta: vec![0.7, 0.7, 1.1, 1.1, 0.3, 0.3, 1.3],
            mu: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidParam {
                name: "lambda",
                reason: format!("{} must be > 0", self.lambda),
            });
        }
        if self.delta.iter().any(|&d| !(d >= 0.0)) {
            return Err(Error::InvalidParam {
                name: "delta",
                reason: "entries must be >= 0".into(),
            });
        }
        if !(self.mu >= 0.0) {
            return Err(Error::InvalidParam {
                name: "mu",
                reason: format!("{} must be >= 0", self.mu),
            });
        }
        Ok(())
    }
}

/// Class-balancing weights derived from one label map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassWeights {
    /// Weight on the non-edge (background) term.
    pub alpha: f64,
    /// Weight on the edge term.
    pub beta: f64,
}

/// `alpha = lambda * |Y+| / (|Y+| + |Y-|)`, `beta = |Y-| / (|Y+| + |Y-|)`.
/// Degenerate all-edge / all-background labels zero out one class instead
/// of erroring so a round can proceed.
pub fn class_weights(label: &BinaryEdgeMap, lambda: f64) -> ClassWeights {
    let pos = label.count_edges() as f64;
    let total = (label.height * label.width) as f64;
    if total == 0.0 {
        return ClassWeights {
            alpha: 0.0,
            beta: 0.0,
        };
    }
    let neg = total - pos;
    ClassWeights {
        alpha: lambda * pos / total,
        beta: neg / total,
    }
}

/// Weighted cross-entropy over one block, summed over pixels:
/// `-alpha * ln(1 - p)` on background pixels, `-beta * ln(p)` on edges.
/// Returns the summed loss and the gradient with respect to the predictions.
pub fn wce_block(
    pred: &EdgeProbMap,
    label: &BinaryEdgeMap,
    weights: &ClassWeights,
) -> Result<(f64, Vec<f64>)> {
    if pred.height != label.height || pred.width != label.width {
        return Err(Error::DimensionMismatch(
            pred.height,
            pred.width,
            label.height,
            label.width,
        ));
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.data.len()];
    for (i, (&p, &y)) in pred.data.iter().zip(&label.data).enumerate() {
        let p = p.clamp(EPS, 1.0 - EPS);
        if y {
            loss -= weights.beta * p.ln();
            grad[i] = -weights.beta / p;
        } else {
            loss -= weights.alpha * (1.0 - p).ln();
            grad[i] = weights.alpha / (1.0 - p);
        }
    }
    Ok((loss, grad))
}

/// Delta-weighted sum of `wce_block` over all side outputs; one set of
/// class weights is computed from the label and shared across blocks.
pub fn wce_multi_layer(
    preds: &[EdgeProbMap],
    label: &BinaryEdgeMap,
    cfg: &LossConfig,
) -> Result<(f64, Vec<Vec<f64>>)> {
    if preds.len() != cfg.delta.len() {
        return Err(Error::LayerCountMismatch {
            got: preds.len(),
            want: cfg.delta.len(),
        });
    }
    let weights = class_weights(label, cfg.lambda);
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(preds.len());
    for (pred, &delta) in preds.iter().zip(&cfg.delta) {
        let (loss, mut grad) = wce_block(pred, label, &weights)?;
        total += delta * loss;
        for g in &mut grad {
            *g *= delta;
        }
        grads.push(grad);
    }
    Ok((total, grads))
}

/// Pixel-wise squared difference between the two predictions of one block.
/// Returns the loss and the gradients for (clean, perturbed).
pub fn mlc_block(
    pred: &EdgeProbMap,
    pred_perturbed: &EdgeProbMap,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if pred.height != pred_perturbed.height || pred.width != pred_perturbed.width {
        return Err(Error::DimensionMismatch(
            pred.height,
            pred.width,
            pred_perturbed.height,
            pred_perturbed.width,
        ));
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.data.len()];
    let mut grad_p = vec![0.0; pred.data.len()];
    for (i, (&a, &b)) in pred.data.iter().zip(&pred_perturbed.data).enumerate() {
        let d = a - b;
        loss += d * d;
        grad[i] = 2.0 * d;
        grad_p[i] = -2.0 * d;
    }
    Ok((loss, grad, grad_p))
}

/// Delta-weighted sum of `mlc_block` over all side outputs.
pub fn mlc_multi_layer(
    preds: &[EdgeProbMap],
    preds_perturbed: &[EdgeProbMap],
    cfg: &LossConfig,
) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    if preds.len() != cfg.delta.len() || preds_perturbed.len() != cfg.delta.len() {
        return Err(Error::LayerCountMismatch {
            got: preds.len().min(preds_perturbed.len()),
            want: cfg.delta.len(),
        });
    }
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(preds.len());
    let mut grads_p = Vec::with_capacity(preds.len());
    for ((a, b), &delta) in preds.iter().zip(preds_perturbed).zip(&cfg.delta) {
        let (loss, mut ga, mut gb) = mlc_block(a, b)?;
        total += delta * loss;
        for g in ga.iter_mut().chain(gb.iter_mut()) {
            *g *= delta;
        }
        grads.push(ga);
        grads_p.push(gb);
    }
    Ok((total, grads, grads_p))
}

/// Combined objective: teaching on the clean predictions plus `mu` times
/// the consistency term between clean and perturbed predictions.
pub fn total_loss(
    preds: &[EdgeProbMap],
    preds_perturbed: &[EdgeProbMap],
    label: &BinaryEdgeMap,
    cfg: &LossConfig,
) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let (wce, mut grads) = wce_multi_layer(preds, label, cfg)?;
    let (mlc, mlc_grads, mut grads_p) = mlc_multi_layer(preds, preds_perturbed, cfg)?;
    for (dst, src) in grads.iter_mut().zip(&mlc_grads) {
        for (d, &s) in dst.iter_mut().zip(src) {
            *d += cfg.mu * s;
        }
    }
    for gp in &mut grads_p {
        for g in gp.iter_mut() {
            *g *= cfg.mu;
        }
    }
    Ok((wce + cfg.mu * mlc, grads, grads_p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label_with(pos: usize, total: usize) -> BinaryEdgeMap {
        assert_eq!(total % 10, 0);
        let w = 10;
        let h = total / 10;
        let mut data = vec![false; total];
        for item in data.iter_mut().take(pos) {
            *item = true;
        }
        BinaryEdgeMap::new(h, w, data)
    }

    fn map_of(h: usize, w: usize, vals: &[f64]) -> EdgeProbMap {
        EdgeProbMap::new(h, w, vals.to_vec())
    }

    #[test]
    fn class_weights_match_hand_computation() {
        let cw = class_weights(&label_with(100, 1000), 1.1);
        assert!((cw.alpha - 0.11).abs() < 1e-12);
        assert!((cw.beta - 0.9).abs() < 1e-12);
    }

    #[test]
    fn class_weights_degenerate_labels() {
        let all_edge = class_weights(&label_with(1000, 1000), 1.1);
        assert!((all_edge.alpha - 1.1).abs() < 1e-12);
        assert_eq!(all_edge.beta, 0.0);
        let all_bg = class_weights(&label_with(0, 1000), 1.1);
        assert_eq!(all_bg.alpha, 0.0);
        assert!((all_bg.beta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn class_weights_partition_identity() {
        for (pos, total) in [(1, 30), (7, 50), (123, 400)] {
            let cw = class_weights(&label_with(pos, total), 1.1);
            assert!((cw.alpha / 1.1 + cw.beta - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn wce_all_edge_high_confidence() {
        let label = BinaryEdgeMap::new(2, 2, vec![true; 4]);
        let pred = map_of(2, 2, &[0.999; 4]);
        let weights = ClassWeights {
            alpha: 0.0,
            beta: 1.0,
        };
        let (loss, _) = wce_block(&pred, &label, &weights).unwrap();
        assert!((loss - (-4.0 * 0.999f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn wce_zero_weights_zero_loss() {
        let label = label_with(3, 10);
        let pred = map_of(1, 10, &[0.3; 10]);
        let weights = ClassWeights {
            alpha: 0.0,
            beta: 0.0,
        };
        let (loss, grad) = wce_block(&pred, &label, &weights).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn wce_gradient_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let label = BinaryEdgeMap::new(4, 4, (0..16).map(|_| rng.gen_bool(0.4)).collect());
        let vals: Vec<f64> = (0..16).map(|_| rng.gen_range(0.05..0.95)).collect();
        let pred = map_of(4, 4, &vals);
        let weights = class_weights(&label, 1.1);
        let (_, grad) = wce_block(&pred, &label, &weights).unwrap();
        let h = 1e-6;
        for i in 0..16 {
            let mut hi = vals.clone();
            hi[i] += h;
            let mut lo = vals.clone();
            lo[i] -= h;
            let (lh, _) = wce_block(&map_of(4, 4, &hi), &label, &weights).unwrap();
            let (ll, _) = wce_block(&map_of(4, 4, &lo), &label, &weights).unwrap();
            let fd = (lh - ll) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-4, "pixel {i}");
        }
    }

    #[test]
    fn wce_clamps_extreme_probabilities() {
        let label = BinaryEdgeMap::new(1, 2, vec![true, false]);
        let pred = map_of(1, 2, &[0.0, 1.0]);
        let weights = ClassWeights {
            alpha: 1.0,
            beta: 1.0,
        };
        let (loss, grad) = wce_block(&pred, &label, &weights).unwrap();
        assert!(loss.is_finite());
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn wce_multi_layer_linearity() {
        let label = label_with(4, 20);
        let pred = map_of(2, 10, &[0.4; 20]);
        let single = LossConfig {
            lambda: 1.1,
            delta: vec![1.0],
            mu: 1.0,
        };
        let (one, _) = wce_multi_layer(std::slice::from_ref(&pred), &label, &single).unwrap();
        let double = LossConfig {
            lambda: 1.1,
            delta: vec![0.7, 1.3],
            mu: 1.0,
        };
        let (two, grads) =
            wce_multi_layer(&[pred.clone(), pred.clone()], &label, &double).unwrap();
        assert!((two - 2.0 * one).abs() < 1e-9);
        // Per-map gradients carry their own delta.
        assert!((grads[0][0] / grads[1][0] - 0.7 / 1.3).abs() < 1e-9);

        let zero = LossConfig {
            lambda: 1.1,
            delta: vec![0.0, 0.0],
            mu: 1.0,
        };
        let (z, _) = wce_multi_layer(&[pred.clone(), pred], &label, &zero).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn mlc_block_values_and_symmetry() {
        let a = map_of(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let b = map_of(2, 2, &[0.5, 0.5, 0.6, 0.5]);
        let (loss, ga, gb) = mlc_block(&a, &b).unwrap();
        assert!((loss - 0.01).abs() < 1e-12);
        assert!((ga[2] + 0.2).abs() < 1e-12);
        assert!((gb[2] - 0.2).abs() < 1e-12);
        // Swapping arguments keeps the loss and swaps gradient roles.
        let (loss2, ga2, gb2) = mlc_block(&b, &a).unwrap();
        assert_eq!(loss, loss2);
        assert_eq!(ga, gb2);
        assert_eq!(gb, ga2);

        let (zero, gz, _) = mlc_block(&a, &a).unwrap();
        assert_eq!(zero, 0.0);
        assert!(gz.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn mlc_multi_layer_selection_and_scaling() {
        let a = map_of(1, 4, &[0.1, 0.2, 0.3, 0.4]);
        let b = map_of(1, 4, &[0.4, 0.3, 0.2, 0.1]);
        let pick_last = LossConfig {
            lambda: 1.1,
            delta: vec![0.0, 1.0],
            mu: 1.0,
        };
        let (selected, _, _) =
            mlc_multi_layer(&[b.clone(), a.clone()], &[b.clone(), b.clone()], &pick_last)
                .unwrap();
        let (block, _, _) = mlc_block(&a, &b).unwrap();
        assert!((selected - block).abs() < 1e-12);

        let doubled = LossConfig {
            lambda: 1.1,
            delta: vec![0.0, 2.0],
            mu: 1.0,
        };
        let (twice, _, _) =
            mlc_multi_layer(&[b.clone(), a.clone()], &[b.clone(), b], &doubled).unwrap();
        assert!((twice - 2.0 * selected).abs() < 1e-12);
    }

    #[test]
    fn total_loss_reduces_to_wce() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let label = BinaryEdgeMap::new(4, 4, (0..16).map(|_| rng.gen_bool(0.3)).collect());
        let preds: Vec<EdgeProbMap> = (0..2)
            .map(|_| map_of(4, 4, &(0..16).map(|_| rng.gen_range(0.1..0.9)).collect::<Vec<_>>()))
            .collect();
        let perturbed: Vec<EdgeProbMap> = (0..2)
            .map(|_| map_of(4, 4, &(0..16).map(|_| rng.gen_range(0.1..0.9)).collect::<Vec<_>>()))
            .collect();
        let cfg = LossConfig {
            lambda: 1.1,
            delta: vec![0.7, 1.3],
            mu: 0.0,
        };
        let (combined, grads, grads_p) =
            total_loss(&preds, &perturbed, &label, &cfg).unwrap();
        let (wce_only, wce_grads) = wce_multi_layer(&preds, &label, &cfg).unwrap();
        assert!((combined - wce_only).abs() < 1e-12);
        assert_eq!(grads, wce_grads);
        assert!(grads_p.iter().all(|g| g.iter().all(|&v| v == 0.0)));

        // Identical branches: the consistency term vanishes at any mu.
        let cfg = LossConfig {
            mu: 3.7,
            ..cfg
        };
        let (same, _, _) = total_loss(&preds, &preds, &label, &cfg).unwrap();
        assert!((same - wce_only).abs() < 1e-12);
    }

    #[test]
    fn delta_scaling_scales_total_loss() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let label = BinaryEdgeMap::new(4, 4, (0..16).map(|_| rng.gen_bool(0.3)).collect());
        let preds: Vec<EdgeProbMap> = (0..3)
            .map(|_| map_of(4, 4, &(0..16).map(|_| rng.gen_range(0.1..0.9)).collect::<Vec<_>>()))
            .collect();
        let perturbed: Vec<EdgeProbMap> = (0..3)
            .map(|_| map_of(4, 4, &(0..16).map(|_| rng.gen_range(0.1..0.9)).collect::<Vec<_>>()))
            .collect();
        let cfg = LossConfig {
            lambda: 1.1,
            delta: vec![0.7, 1.1, 1.3],
            mu: 0.8,
        };
        let scaled = LossConfig {
            delta: cfg.delta.iter().map(|d| d * 2.5).collect(),
            ..cfg.clone()
        };
        let (base, _, _) = total_loss(&preds, &perturbed, &label, &cfg).unwrap();
        let (big, _, _) = total_loss(&preds, &perturbed, &label, &scaled).unwrap();
        assert!((big - 2.5 * base).abs() < 1e-9);
    }

    #[test]
    fn mlc_is_nonnegative_and_zero_iff_equal() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        for _ in 0..20 {
            let a: Vec<f64> = (0..16).map(|_| rng.gen()).collect();
            let b: Vec<f64> = (0..16).map(|_| rng.gen()).collect();
            let (loss, _, _) = mlc_block(&map_of(4, 4, &a), &map_of(4, 4, &b)).unwrap();
            assert!(loss >= 0.0);
            assert_eq!(loss == 0.0, a == b);
        }
    }
}
