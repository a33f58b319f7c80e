//! Color conversion, blurring, and resampling.

use crate::error::{Error, Result};
use crate::raster::{BinaryEdgeMap, Image};

/// ITU-R BT.601 luma; 1-channel input is returned unchanged.
pub fn to_grayscale(img: &Image) -> Result<Image> {
    match img.channels() {
        1 => Ok(img.clone()),
        3 => {
            let (h, w) = (img.height(), img.width());
            let mut data = Vec::with_capacity(h * w);
            let src = img.data();
            for px in src.chunks_exact(3) {
                data.push(0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]);
            }
            Image::from_clamped(h, w, 1, data)
        }
        c => Err(Error::ChannelCount(c)),
    }
}

/// The default blur width for a given odd kernel size, matching the common
/// `0.3 * ((k - 1) / 2 - 1) + 0.8` convention.
pub fn gaussian_sigma_for_kernel(kernel: usize) -> f64 {
    0.3 * ((kernel as f64 - 1.0) / 2.0 - 1.0) + 0.8
}

fn gaussian_kernel_1d(kernel: usize, sigma: f64) -> Vec<f64> {
    let radius = (kernel / 2) as isize;
    let mut weights: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    weights
}

/// Separable Gaussian convolution with edge-replicate padding.
pub fn gaussian_blur(img: &Image, kernel: usize, sigma: f64) -> Result<Image> {
    if kernel % 2 == 0 || kernel == 0 {
        return Err(Error::KernelSize(kernel));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidParam {
            name: "sigma",
            reason: format!("{sigma} must be > 0"),
        });
    }
    if kernel == 1 {
        return Ok(img.clone());
    }
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let weights = gaussian_kernel_1d(kernel, sigma);
    let radius = (kernel / 2) as isize;

    // Horizontal pass, then vertical.
    let mut mid = vec![0.0; h * w * c];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (i, &wk) in weights.iter().enumerate() {
                    let sx = x as isize + i as isize - radius;
                    acc += wk * img.get_clamped(y as isize, sx, ch);
                }
                mid[(y * w + x) * c + ch] = acc;
            }
        }
    }
    let at = |y: isize, x: isize, ch: usize| -> f64 {
        let y = y.clamp(0, h as isize - 1) as usize;
        let x = x.clamp(0, w as isize - 1) as usize;
        mid[(y * w + x) * c + ch]
    };
    let mut out = vec![0.0; h * w * c];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (i, &wk) in weights.iter().enumerate() {
                    let sy = y as isize + i as isize - radius;
                    acc += wk * at(sy, x as isize, ch);
                }
                out[(y * w + x) * c + ch] = acc;
            }
        }
    }
    Image::from_clamped(h, w, c, out)
}

/// Gaussian blur with the conventional sigma for the kernel size.
pub fn gaussian_blur_default(img: &Image, kernel: usize) -> Result<Image> {
    gaussian_blur(img, kernel, gaussian_sigma_for_kernel(kernel))
}

/// Bilateral filter: Gaussian in space times Gaussian in intensity
/// difference, normalized per pixel. The intensity distance for color
/// images is the L1 distance across channels.
pub fn bilateral_filter(
    img: &Image,
    diameter: usize,
    sigma_color: f64,
    sigma_space: f64,
) -> Result<Image> {
    if diameter % 2 == 0 || diameter == 0 {
        return Err(Error::KernelSize(diameter));
    }
    if !(sigma_color > 0.0) || !(sigma_space > 0.0) {
        return Err(Error::InvalidParam {
            name: "sigma_color/sigma_space",
            reason: "must be > 0".into(),
        });
    }
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let radius = (diameter / 2) as isize;
    let mut space_w = vec![0.0; diameter * diameter];
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let d2 = (dy * dy + dx * dx) as f64;
            space_w[((dy + radius) * diameter as isize + dx + radius) as usize] =
                (-d2 / (2.0 * sigma_space * sigma_space)).exp();
        }
    }

    let mut out = vec![0.0; h * w * c];
    let inv_2sc2 = 1.0 / (2.0 * sigma_color * sigma_color);
    for y in 0..h {
        for x in 0..w {
            let mut acc = vec![0.0; c];
            let mut norm = 0.0;
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    let sw =
                        space_w[((dy + radius) * diameter as isize + dx + radius) as usize];
                    let mut dist = 0.0;
                    for ch in 0..c {
                        dist += (img.get_clamped(y as isize + dy, x as isize + dx, ch)
                            - img.get(y, x, ch))
                        .abs();
                    }
                    let wgt = sw * (-dist * dist * inv_2sc2).exp();
                    norm += wgt;
                    for ch in 0..c {
                        acc[ch] += wgt * img.get_clamped(y as isize + dy, x as isize + dx, ch);
                    }
                }
            }
            for ch in 0..c {
                out[(y * w + x) * c + ch] = acc[ch] / norm;
            }
        }
    }
    Image::from_clamped(h, w, c, out)
}

/// Bilinear resize (half-pixel-center convention, clamped taps).
pub fn bilinear_resize(img: &Image, new_h: usize, new_w: usize) -> Result<Image> {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    if new_h == h && new_w == w {
        return Ok(img.clone());
    }
    let sy = h as f64 / new_h as f64;
    let sx = w as f64 / new_w as f64;
    let mut out = vec![0.0; new_h * new_w * c];
    for y in 0..new_h {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let wy = fy - y0 as f64;
        for x in 0..new_w {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let wx = fx - x0 as f64;
            for ch in 0..c {
                let v = (1.0 - wy) * (1.0 - wx) * img.get(y0, x0, ch)
                    + (1.0 - wy) * wx * img.get(y0, x1, ch)
                    + wy * (1.0 - wx) * img.get(y1, x0, ch)
                    + wy * wx * img.get(y1, x1, ch);
                out[(y * new_w + x) * c + ch] = v;
            }
        }
    }
    Image::from_clamped(new_h, new_w, c, out)
}

/// Nearest-neighbor resize for binary maps.
pub fn nearest_resize(map: &BinaryEdgeMap, new_h: usize, new_w: usize) -> BinaryEdgeMap {
    if new_h == map.height && new_w == map.width {
        return map.clone();
    }
    let sy = map.height as f64 / new_h as f64;
    let sx = map.width as f64 / new_w as f64;
    let mut out = BinaryEdgeMap::empty(new_h, new_w);
    for y in 0..new_h {
        let src_y = (((y as f64 + 0.5) * sy - 0.5).round().max(0.0) as usize).min(map.height - 1);
        for x in 0..new_w {
            let src_x =
                (((x as f64 + 0.5) * sx - 0.5).round().max(0.0) as usize).min(map.width - 1);
            out.set(y, x, map.get(src_y, src_x));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn grayscale_of_gray_triplet_is_fixed_point() {
        let img = Image::filled(3, 3, 3, 0.42).unwrap();
        let g = to_grayscale(&img).unwrap();
        assert_eq!(g.channels(), 1);
        for &v in g.data() {
            assert!(approx(v, 0.42, 1e-12));
        }
    }

    #[test]
    fn grayscale_of_pure_red() {
        let mut data = vec![0.0; 3];
        data[0] = 1.0;
        let img = Image::new(1, 1, 3, data).unwrap();
        let g = to_grayscale(&img).unwrap();
        assert!(approx(g.get(0, 0, 0), 0.299, 1e-12));
    }

    #[test]
    fn grayscale_of_single_channel_is_identity() {
        let img = Image::new(2, 2, 1, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(to_grayscale(&img).unwrap(), img);
    }

    #[test]
    fn blur_preserves_constants() {
        let img = Image::filled(7, 9, 1, 0.625).unwrap();
        let out = gaussian_blur(&img, 5, 1.1).unwrap();
        for &v in out.data() {
            assert!(approx(v, 0.625, 1e-12));
        }
    }

    #[test]
    fn blur_rejects_even_kernel() {
        let img = Image::filled(4, 4, 1, 0.5).unwrap();
        assert!(matches!(
            gaussian_blur(&img, 4, 1.0),
            Err(Error::KernelSize(4))
        ));
    }

    #[test]
    fn blur_kernel_one_is_identity() {
        let img = Image::new(2, 3, 1, vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]).unwrap();
        assert_eq!(gaussian_blur(&img, 1, 1.0).unwrap(), img);
    }

    #[test]
    fn blur_of_impulse_is_separable_kernel() {
        // Unit impulse in the middle of a 9x9 zero image; the response must
        // equal the outer product of the normalized 1-D kernel.
        let mut data = vec![0.0; 81];
        data[4 * 9 + 4] = 1.0;
        let img = Image::new(9, 9, 1, data).unwrap();
        let sigma = gaussian_sigma_for_kernel(5);
        let out = gaussian_blur(&img, 5, sigma).unwrap();
        let k = gaussian_kernel_1d(5, sigma);
        for dy in -2i64..=2 {
            for dx in -2i64..=2 {
                let expected = k[(dy + 2) as usize] * k[(dx + 2) as usize];
                let got = out.get((4 + dy) as usize, (4 + dx) as usize, 0);
                assert!(approx(got, expected, 1e-12), "at {dy},{dx}");
            }
        }
        // Far from the impulse everything stays zero.
        assert!(approx(out.get(0, 0, 0), 0.0, 1e-15));
    }

    #[test]
    fn bilateral_preserves_constants() {
        let img = Image::filled(6, 6, 3, 0.3).unwrap();
        let out = bilateral_filter(&img, 5, 0.2, 50.0).unwrap();
        for &v in out.data() {
            assert!(approx(v, 0.3, 1e-12));
        }
    }

    #[test]
    fn bilateral_preserves_step_with_tiny_color_sigma() {
        let mut data = vec![0.0; 8 * 8];
        for y in 0..8 {
            for x in 4..8 {
                data[y * 8 + x] = 1.0;
            }
        }
        let img = Image::new(8, 8, 1, data).unwrap();
        let out = bilateral_filter(&img, 5, 1e-4, 50.0).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let expect = if x >= 4 { 1.0 } else { 0.0 };
                assert!(approx(out.get(y, x, 0), expect, 1e-9));
            }
        }
    }

    #[test]
    fn bilateral_reduces_noise_variance_on_plateau() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let data: Vec<f64> = (0..49).map(|_| 0.5 + rng.gen_range(-0.1..0.1)).collect();
        let img = Image::new(7, 7, 1, data.clone()).unwrap();
        let out = bilateral_filter(&img, 5, 0.2, 10.0).unwrap();

        // Brute-force reference on the same patch.
        let reference = {
            let mut res = vec![0.0; 49];
            for y in 0..7i64 {
                for x in 0..7i64 {
                    let center = data[(y * 7 + x) as usize];
                    let (mut acc, mut norm) = (0.0, 0.0);
                    for dy in -2i64..=2 {
                        for dx in -2i64..=2 {
                            let sy = (y + dy).clamp(0, 6) as usize;
                            let sx = (x + dx).clamp(0, 6) as usize;
                            let v = data[sy * 7 + sx];
                            let sw = (-((dy * dy + dx * dx) as f64) / (2.0 * 100.0)).exp();
                            let cw = (-((v - center).abs().powi(2)) / (2.0 * 0.04)).exp();
                            acc += sw * cw * v;
                            norm += sw * cw;
                        }
                    }
                    res[(y * 7 + x) as usize] = acc / norm;
                }
            }
            res
        };
        for i in 0..49 {
            assert!(approx(out.data()[i], reference[i], 1e-12));
        }

        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
        };
        assert!(var(out.data()) < var(&data));
    }

    #[test]
    fn resize_identity_when_same_size() {
        let img = Image::filled(5, 4, 3, 0.7).unwrap();
        assert_eq!(bilinear_resize(&img, 5, 4).unwrap(), img);
    }

    #[test]
    fn resize_preserves_constants() {
        let img = Image::filled(10, 10, 1, 0.55).unwrap();
        let out = bilinear_resize(&img, 7, 13).unwrap();
        for &v in out.data() {
            assert!(approx(v, 0.55, 1e-12));
        }
    }
}
