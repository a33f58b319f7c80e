//! Probability-map binarization: union of a local-mean adaptive threshold
//! and a global fixed threshold.

use crate::raster::{BinaryEdgeMap, EdgeProbMap};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdaptiveParams {
    /// Side of the square block used for the local mean (odd).
    pub block: usize,
    /// A pixel passes the adaptive branch when it exceeds the local mean by
    /// more than this offset, so flat regions are rejected.
    pub offset: f64,
    /// Global threshold for the second branch of the union.
    pub t_global: f64,
}

impl Default for AdaptiveParams {
    fn default() -> Self {
        Self {
            block: 33,
            offset: 0.02,
            t_global: 0.5,
        }
    }
}

/// Local mean over a block neighborhood, computed with an integral image;
/// windows are clipped at the borders.
fn local_means(prob: &EdgeProbMap, block: usize) -> Vec<f64> {
    let (h, w) = (prob.height, prob.width);
    let mut integral = vec![0.0; (h + 1) * (w + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += prob.get(y, x);
            integral[(y + 1) * (w + 1) + (x + 1)] = integral[y * (w + 1) + (x + 1)] + row;
        }
    }
    let r = (block / 2) as isize;
    let mut means = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let y0 = (y - r).max(0) as usize;
            let x0 = (x - r).max(0) as usize;
            let y1 = ((y + r) as usize + 1).min(h);
            let x1 = ((x + r) as usize + 1).min(w);
            let sum = integral[y1 * (w + 1) + x1] - integral[y0 * (w + 1) + x1]
                - integral[y1 * (w + 1) + x0]
                + integral[y0 * (w + 1) + x0];
            means[y as usize * w + x as usize] = sum / ((y1 - y0) * (x1 - x0)) as f64;
        }
    }
    means
}

pub fn adaptive_binarize_with(prob: &EdgeProbMap, params: &AdaptiveParams) -> BinaryEdgeMap {
    let (h, w) = (prob.height, prob.width);
    let means = local_means(prob, params.block.max(1) | 1);
    let mut out = BinaryEdgeMap::empty(h, w);
    for i in 0..h * w {
        let p = prob.data[i];
        out.data[i] = p > means[i] + params.offset || p > params.t_global;
    }
    out
}

/// Binarization with the default block/offset/global-threshold parameters.
pub fn adaptive_binarize(prob: &EdgeProbMap) -> BinaryEdgeMap {
    adaptive_binarize_with(prob, &AdaptiveParams::default())
}
