//! Edge thinning of probability maps before evaluation.
//!
//! Orientation is estimated from smoothed gradients of the map (Gaussian
//! sigma 1, then Sobel). A pixel is suppressed when it fails the local
//! maximum test on the smoothed response along its quantized gradient
//! direction and along the direction of strongest negative curvature; the
//! curvature direction keeps crest pixels alive where the gradient
//! degenerates to zero. Surviving pixels keep their original probability.
//! Suppression passes repeat until a full pass changes nothing, which makes
//! the operation idempotent by construction.

use crate::imgproc::sobel_gradients;
use crate::raster::{EdgeProbMap, Image};

const DIRS: [(isize, isize); 4] = [(0, 1), (-1, 1), (-1, 0), (-1, -1)];

fn quantize(angle: f64) -> usize {
    let deg = angle.to_degrees().rem_euclid(180.0);
    if !(22.5..157.5).contains(&deg) {
        0
    } else if deg < 67.5 {
        1
    } else if deg < 112.5 {
        2
    } else {
        3
    }
}

/// One suppression sweep; returns (new map, changed).
fn suppress_pass(prob: &EdgeProbMap) -> (EdgeProbMap, bool) {
    let (h, w) = (prob.height, prob.width);
    let smoothed = crate::imgproc::gaussian_blur(
        &Image::from_clamped(h, w, 1, prob.data.clone()).expect("prob map is finite"),
        5,
        1.0,
    )
    .expect("odd kernel");
    let response: Vec<f64> = smoothed.data().to_vec();
    let grad = sobel_gradients(&smoothed);

    // Out-of-bounds neighbors disqualify a direction from the curvature
    // pick (treated as infinitely strong); fully clipped corners fall back
    // to the first direction deterministically.
    let resp_at = |y: isize, x: isize| -> f64 {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            f64::INFINITY
        } else {
            response[y as usize * w + x as usize]
        }
    };
    // True when an in-bounds neighbor along `dir` has strictly greater
    // smoothed response.
    let beaten = |y: usize, x: usize, dir: usize| -> bool {
        let r = response[y * w + x];
        let (dy, dx) = DIRS[dir];
        for sign in [1isize, -1] {
            let ny = y as isize + sign * dy;
            let nx = x as isize + sign * dx;
            if ny >= 0 && nx >= 0 && ny < h as isize && nx < w as isize
                && response[ny as usize * w + nx as usize] > r
            {
                return true;
            }
        }
        false
    };
    let curvature_dir = |y: usize, x: usize| -> usize {
        let mut best = 0;
        let mut best_sum = f64::INFINITY;
        for (d, &(dy, dx)) in DIRS.iter().enumerate() {
            let sum = resp_at(y as isize + dy, x as isize + dx)
                + resp_at(y as isize - dy, x as isize - dx);
            if sum < best_sum {
                best_sum = sum;
                best = d;
            }
        }
        best
    };

    let mut out = prob.clone();
    let mut changed = false;
    for y in 0..h {
        for x in 0..w {
            let v = prob.get(y, x);
            if v == 0.0 {
                continue;
            }
            let m = grad.mag(y, x);
            let primary = if m > 1e-12 {
                quantize(grad.dir(y, x))
            } else {
                curvature_dir(y, x)
            };
            let secondary = curvature_dir(y, x);
            if beaten(y, x, primary) && beaten(y, x, secondary) {
                out.set(y, x, 0.0);
                changed = true;
            }
        }
    }
    (out, changed)
}

/// Thin a probability map to (near) single-pixel ridges.
pub fn nms_thin(prob: &EdgeProbMap) -> EdgeProbMap {
    let mut cur = prob.clone();
    loop {
        let (next, changed) = suppress_pass(&cur);
        cur = next;
        if !changed {
            return cur;
        }
    }
}
