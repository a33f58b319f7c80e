//! One-to-one correspondence between predicted and ground-truth edge
//! pixels within a tolerance radius, greedy shortest-pair-first.

use crate::error::{Error, Result};
use crate::raster::BinaryEdgeMap;

/// Pooled counting unit for precision/recall.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MatchCounts {
    /// Matched predicted pixels (precision numerator).
    pub matched_pred: usize,
    /// Matched ground-truth pixels (recall numerator).
    pub matched_gt: usize,
    pub num_pred: usize,
    pub num_gt: usize,
}

impl MatchCounts {
    pub fn add(&mut self, other: &MatchCounts) {
        self.matched_pred += other.matched_pred;
        self.matched_gt += other.matched_gt;
        self.num_pred += other.num_pred;
        self.num_gt += other.num_gt;
    }

    pub fn precision(&self) -> f64 {
        if self.num_pred == 0 {
            0.0
        } else {
            self.matched_pred as f64 / self.num_pred as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.num_gt == 0 {
            0.0
        } else {
            self.matched_gt as f64 / self.num_gt as f64
        }
    }

    pub fn f_measure(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    }
}

/// Greedy matching: candidate pairs within `max_dist_frac` times the image
/// diagonal are taken shortest first (ties broken by pixel scan order),
/// each pixel used at most once.
pub fn match_edges(
    pred: &BinaryEdgeMap,
    gt: &BinaryEdgeMap,
    max_dist_frac: f64,
) -> Result<MatchCounts> {
    if pred.height != gt.height || pred.width != gt.width {
        return Err(Error::DimensionMismatch(
            pred.height,
            pred.width,
            gt.height,
            gt.width,
        ));
    }
    let (h, w) = (pred.height, pred.width);
    let max_dist = max_dist_frac * ((h * h + w * w) as f64).sqrt();
    let max_d2 = max_dist * max_dist;
    let pred_px = pred.edge_pixels();
    let gt_px = gt.edge_pixels();
    if pred_px.is_empty() || gt_px.is_empty() {
        return Ok(MatchCounts {
            matched_pred: 0,
            matched_gt: 0,
            num_pred: pred_px.len(),
            num_gt: gt_px.len(),
        });
    }

    // Bucket ground-truth pixels on a grid so only nearby cells are probed.
    let cell = (max_dist.ceil() as usize).max(1);
    let gw = w.div_ceil(cell);
    let gh = h.div_ceil(cell);
    let mut grid: Vec<Vec<usize>> = vec![Vec::new(); gh * gw];
    for (i, &(y, x)) in gt_px.iter().enumerate() {
        grid[(y / cell) * gw + (x / cell)].push(i);
    }

    // d2 as integer squared pixel distance keeps the sort exact.
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for (pi, &(py, px)) in pred_px.iter().enumerate() {
        let cy = py / cell;
        let cx = px / cell;
        let y0 = cy.saturating_sub(1);
        let x0 = cx.saturating_sub(1);
        for gy in y0..=(cy + 1).min(gh - 1) {
            for gx in x0..=(cx + 1).min(gw - 1) {
                for &gi in &grid[gy * gw + gx] {
                    let (ty, tx) = gt_px[gi];
                    let dy = py as isize - ty as isize;
                    let dx = px as isize - tx as isize;
                    let d2 = (dy * dy + dx * dx) as usize;
                    if (d2 as f64) <= max_d2 {
                        pairs.push((d2, pi, gi));
                    }
                }
            }
        }
    }
    pairs.sort_unstable();

    let mut pred_used = vec![false; pred_px.len()];
    let mut gt_used = vec![false; gt_px.len()];
    let mut matched = 0usize;
    for &(_, pi, gi) in &pairs {
        if !pred_used[pi] && !gt_used[gi] {
            pred_used[pi] = true;
            gt_used[gi] = true;
            matched += 1;
        }
    }
    Ok(MatchCounts {
        matched_pred: matched,
        matched_gt: matched,
        num_pred: pred_px.len(),
        num_gt: gt_px.len(),
    })
}
