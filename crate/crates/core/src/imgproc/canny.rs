//! Canny edge detector: Sobel gradients, directional non-maximum
//! suppression, and two-threshold hysteresis linking.

use crate::error::{Error, Result};
use crate::raster::{BinaryEdgeMap, GradientField, Image};

use super::filter::to_grayscale;

/// 3×3 Sobel gradients with replicate padding on a grayscale image.
///
/// The magnitude scale matches the usual 8-bit convention once divided by
/// the value range: an ideal unit step produces magnitude 4.
pub fn sobel_gradients(gray: &Image) -> GradientField {
    debug_assert_eq!(gray.channels(), 1);
    let (h, w) = (gray.height(), gray.width());
    let mut magnitude = vec![0.0; h * w];
    let mut direction = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let p = |dy: isize, dx: isize| gray.get_clamped(y + dy, x + dx, 0);
            let gx = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1))
                - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            let gy = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1))
                - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let idx = y as usize * w + x as usize;
            magnitude[idx] = gx.hypot(gy);
            direction[idx] = gy.atan2(gx);
        }
    }
    GradientField {
        height: h,
        width: w,
        magnitude,
        direction,
    }
}

/// Quantize an angle in radians to one of 4 direction bins:
/// 0 = E-W, 1 = NE-SW, 2 = N-S, 3 = NW-SE.
pub(crate) fn quantize_direction(angle: f64) -> usize {
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

/// Neighbor offsets (dy, dx) for each quantized direction bin.
pub(crate) const DIR_OFFSETS: [(isize, isize); 4] = [(0, 1), (-1, 1), (-1, 0), (-1, -1)];

/// Directional non-maximum suppression of the gradient magnitude.
///
/// A pixel survives when its magnitude strictly exceeds the forward
/// neighbor and is at least the backward neighbor along its quantized
/// gradient direction; equal-magnitude plateaus of width two keep exactly
/// one ridge pixel.
fn non_maximum_suppression(grad: &GradientField) -> Vec<f64> {
    let (h, w) = (grad.height, grad.width);
    let mut out = vec![0.0; h * w];
    let at = |y: isize, x: isize| -> f64 {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            grad.magnitude[y as usize * w + x as usize]
        }
    };
    for y in 0..h {
        for x in 0..w {
            let m = grad.mag(y, x);
            if m == 0.0 {
                continue;
            }
            let bin = quantize_direction(grad.dir(y, x));
            let (dy, dx) = DIR_OFFSETS[bin];
            let fwd = at(y as isize + dy, x as isize + dx);
            let bwd = at(y as isize - dy, x as isize - dx);
            if m > fwd && m >= bwd {
                out[y * w + x] = m;
            }
        }
    }
    out
}

/// Hysteresis: pixels at or above `high` seed edges; pixels in `[low, high)`
/// survive only when 8-connected to a seed through other surviving pixels.
fn hysteresis(thinned: &[f64], h: usize, w: usize, low: f64, high: f64) -> BinaryEdgeMap {
    let mut edges = BinaryEdgeMap::empty(h, w);
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if thinned[y * w + x] >= high && !edges.get(y, x) {
                edges.set(y, x, true);
                stack.push((y, x));
                while let Some((cy, cx)) = stack.pop() {
                    for dy in -1isize..=1 {
                        for dx in -1isize..=1 {
                            if dy == 0 && dx == 0 {
                                continue;
                            }
                            let ny = cy as isize + dy;
                            let nx = cx as isize + dx;
                            if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                                continue;
                            }
                            let (ny, nx) = (ny as usize, nx as usize);
                            if !edges.get(ny, nx) && thinned[ny * w + nx] >= low {
                                edges.set(ny, nx, true);
                                stack.push((ny, nx));
                            }
                        }
                    }
                }
            }
        }
    }
    edges
}

/// Full Canny pass over a 1- or 3-channel image.
pub fn canny(img: &Image, low: f64, high: f64) -> Result<BinaryEdgeMap> {
    if !(0.0 <= low && low <= high) {
        return Err(Error::ThresholdOrder { low, high });
    }
    let gray = to_grayscale(img)?;
    let grad = sobel_gradients(&gray);
    let thinned = non_maximum_suppression(&grad);
    Ok(hysteresis(&thinned, gray.height(), gray.width(), low, high))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vertical_step(h: usize, w: usize, col: usize) -> Image {
        let mut data = vec![0.0; h * w];
        for y in 0..h {
            for x in col..w {
                data[y * w + x] = 1.0;
            }
        }
        Image::new(h, w, 1, data).unwrap()
    }

    #[test]
    fn constant_image_has_no_edges() {
        let img = Image::filled(16, 16, 1, 0.5).unwrap();
        let edges = canny(&img, 0.1, 0.2).unwrap();
        assert_eq!(edges.count_edges(), 0);
    }

    #[test]
    fn vertical_step_yields_single_column() {
        // An ideal step has Sobel response 4 on the two columns flanking the
        // discontinuity; NMS must keep exactly one of them.
        let img = vertical_step(12, 12, 6);
        let edges = canny(&img, 0.5, 1.0).unwrap();
        let mut cols = std::collections::BTreeSet::new();
        for (y, x) in edges.edge_pixels() {
            cols.insert(x);
            let _ = y;
        }
        assert_eq!(cols.len(), 1, "expected one edge column, got {cols:?}");
        let col = *cols.iter().next().unwrap();
        assert!(col == 5 || col == 6, "edge column {col} not at the step");
        // Every row crossed by the step is detected.
        assert_eq!(edges.count_edges(), 12);
    }

    #[test]
    fn rejects_inverted_thresholds() {
        let img = Image::filled(4, 4, 1, 0.0).unwrap();
        assert!(canny(&img, 0.9, 0.1).is_err());
    }

    #[test]
    fn hysteresis_is_monotone_in_thresholds() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let data: Vec<f64> = (0..32 * 32).map(|_| rng.gen::<f64>()).collect();
            let img = Image::new(32, 32, 1, data).unwrap();
            let loose = canny(&img, 20.0 / 255.0, 40.0 / 255.0).unwrap();
            let strict = canny(&img, 200.0 / 255.0, 300.0 / 255.0).unwrap();
            assert!(strict.is_subset_of(&loose));
        }
    }

    #[test]
    fn output_is_thin_along_gradient_direction() {
        // No edge pixel may have edge pixels on both sides along its own
        // quantized gradient direction. Checked on corner-free boundaries
        // (sharp 90-degree junction pixels legitimately touch edges of
        // other orientations on both sides).
        let mut scenes: Vec<Image> = Vec::new();
        scenes.push(vertical_step(24, 24, 11));
        // Diagonal step.
        let mut diag = vec![0.0; 24 * 24];
        for y in 0..24 {
            for x in 0..24 {
                if x + y > 23 {
                    diag[y * 24 + x] = 1.0;
                }
            }
        }
        scenes.push(Image::new(24, 24, 1, diag).unwrap());
        // Bright disk on a dark field.
        let mut disk = vec![0.05; 32 * 32];
        for y in 0..32 {
            for x in 0..32 {
                let d2 = (y as f64 - 15.5).powi(2) + (x as f64 - 15.5).powi(2);
                if d2 <= 100.0 {
                    disk[y * 32 + x] = 0.9;
                }
            }
        }
        scenes.push(Image::new(32, 32, 1, disk).unwrap());

        for img in &scenes {
            let (h, w) = (img.height(), img.width());
            let gray = to_grayscale(img).unwrap();
            let grad = sobel_gradients(&gray);
            let edges = canny(img, 0.3, 0.6).unwrap();
            assert!(edges.count_edges() > 0);
            for (y, x) in edges.edge_pixels() {
                let bin = quantize_direction(grad.dir(y, x));
                let (dy, dx) = DIR_OFFSETS[bin];
                let is_edge = |yy: isize, xx: isize| {
                    yy >= 0
                        && xx >= 0
                        && yy < h as isize
                        && xx < w as isize
                        && edges.get(yy as usize, xx as usize)
                };
                let both = is_edge(y as isize + dy, x as isize + dx)
                    && is_edge(y as isize - dy, x as isize - dx);
                assert!(!both, "thick edge at ({y},{x})");
            }
        }
    }
}
