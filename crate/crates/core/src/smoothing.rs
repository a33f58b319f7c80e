//! The perturbation generator: Gaussian blur followed by L0 gradient
//! minimization, plus the patch-distance diagnostic map.
//!
//! L0 minimization solves
//!
//! ```text
//!   min_S  sum_p (S_p - I_p)^2  +  lambda0 * #{ p : |dxS_p| + |dyS_p| != 0 }
//! ```
//!
//! by half-quadratic splitting: an auxiliary gradient field (h, v) is
//! hard-thresholded per pixel, then S is recovered by a screened-Poisson
//! solve in the frequency domain with periodic boundary. The penalty weight
//! beta starts at `2 * lambda0` and is multiplied by `kappa` each outer
//! iteration until it exceeds `beta_max`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::imgproc::gaussian_blur;
use crate::raster::Image;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct L0Params {
    /// Smoothing strength: weight on the gradient-L0 term.
    pub lambda0: f64,
    /// Growth rate of the splitting weight beta per outer iteration.
    pub kappa: f64,
    /// Solver stops once beta exceeds this cap.
    pub beta_max: f64,
}

impl Default for L0Params {
    fn default() -> Self {
        Self {
            lambda0: 0.02,
            kappa: 2.0,
            beta_max: 1e5,
        }
    }
}

impl L0Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda0 > 0.0) {
            return Err(Error::InvalidParam {
                name: "lambda0",
                reason: format!("{} must be > 0", self.lambda0),
            });
        }
        if !(self.kappa > 1.0) {
            return Err(Error::InvalidParam {
                name: "kappa",
                reason: format!("{} must be > 1", self.kappa),
            });
        }
        if !(self.beta_max > 2.0 * self.lambda0) {
            return Err(Error::InvalidParam {
                name: "beta_max",
                reason: format!("{} must exceed 2*lambda0", self.beta_max),
            });
        }
        Ok(())
    }
}

/// In-place 2D FFT (rows then columns). `inverse` includes 1/(h*w).
fn fft2(data: &mut [Complex<f64>], h: usize, w: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft_w = if inverse {
        planner.plan_fft_inverse(w)
    } else {
        planner.plan_fft_forward(w)
    };
    let fft_h = if inverse {
        planner.plan_fft_inverse(h)
    } else {
        planner.plan_fft_forward(h)
    };
    for row in data.chunks_exact_mut(w) {
        fft_w.process(row);
    }
    let mut col = vec![Complex::default(); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = data[y * w + x];
        }
        fft_h.process(&mut col);
        for y in 0..h {
            data[y * w + x] = col[y];
        }
    }
    if inverse {
        let scale = 1.0 / (h * w) as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

/// Forward differences with periodic wrap, matching the frequency-domain
/// operator exactly.
fn forward_gradients(s: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let xn = (x + 1) % w;
            let yn = (y + 1) % h;
            gx[y * w + x] = s[y * w + xn] - s[y * w + x];
            gy[y * w + x] = s[yn * w + x] - s[y * w + x];
        }
    }
    (gx, gy)
}

/// Screened-Poisson solve of one channel:
/// `(1 + beta (Dx^T Dx + Dy^T Dy)) S = I + beta (Dx^T h + Dy^T v)`.
fn solve_channel(
    plane_fft: &[Complex<f64>],
    hx: &[f64],
    vy: &[f64],
    denom: &[f64],
    beta: f64,
    h: usize,
    w: usize,
) -> Vec<f64> {
    // Divergence div = Dx^T h + Dy^T v computed spatially.
    let mut div: Vec<Complex<f64>> = vec![Complex::default(); h * w];
    for y in 0..h {
        for x in 0..w {
            let xp = (x + w - 1) % w;
            let yp = (y + h - 1) % h;
            let d = (hx[y * w + xp] - hx[y * w + x]) + (vy[yp * w + x] - vy[y * w + x]);
            div[y * w + x] = Complex::new(d, 0.0);
        }
    }
    fft2(&mut div, h, w, false);
    for i in 0..h * w {
        div[i] = (plane_fft[i] + beta * div[i]) / (1.0 + beta * denom[i]);
    }
    fft2(&mut div, h, w, true);
    div.iter().map(|c| c.re).collect()
}

fn l0_smooth_plane(plane: &[f64], h: usize, w: usize, params: &L0Params) -> Vec<f64> {
    // |F(Dx)|^2 + |F(Dy)|^2 for periodic forward differences.
    let mut denom = vec![0.0; h * w];
    for v in 0..h {
        let sy = (std::f64::consts::PI * v as f64 / h as f64).sin();
        for u in 0..w {
            let sx = (std::f64::consts::PI * u as f64 / w as f64).sin();
            denom[v * w + u] = 4.0 * (sx * sx + sy * sy);
        }
    }
    let mut plane_fft: Vec<Complex<f64>> =
        plane.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft2(&mut plane_fft, h, w, false);

    let mut s = plane.to_vec();
    let mut beta = 2.0 * params.lambda0;
    while beta <= params.beta_max {
        let (mut hx, mut vy) = forward_gradients(&s, h, w);
        let cutoff = params.lambda0 / beta;
        for i in 0..h * w {
            if hx[i] * hx[i] + vy[i] * vy[i] <= cutoff {
                hx[i] = 0.0;
                vy[i] = 0.0;
            }
        }
        s = solve_channel(&plane_fft, &hx, &vy, &denom, beta, h, w);
        beta *= params.kappa;
    }
    s
}

/// L0 gradient minimization, per channel independently. Odd image sides are
/// replicate-padded to the next even size before the transforms and cropped
/// back afterwards.
pub fn l0_smooth(img: &Image, params: &L0Params) -> Result<Image> {
    params.validate()?;
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let ph = h + h % 2;
    let pw = w + w % 2;
    let mut planes = Vec::with_capacity(c);
    for ch in 0..c {
        let mut padded = vec![0.0; ph * pw];
        for y in 0..ph {
            for x in 0..pw {
                padded[y * pw + x] =
                    img.get(y.min(h - 1), x.min(w - 1), ch);
            }
        }
        let smoothed = l0_smooth_plane(&padded, ph, pw, params);
        let mut cropped = vec![0.0; h * w];
        for y in 0..h {
            cropped[y * w..(y + 1) * w].copy_from_slice(&smoothed[y * pw..y * pw + w]);
        }
        planes.push(cropped);
    }
    Image::from_planes(h, w, &planes)
}

/// The training-time perturbation: 5×5 Gaussian blur then L0 smoothing with
/// default parameters, clamped back into `[0, 1]`.
pub fn perturb(img: &Image) -> Result<Image> {
    let blurred = gaussian_blur(img, 5, crate::imgproc::gaussian_sigma_for_kernel(5))?;
    l0_smooth(&blurred, &L0Params::default())
}

/// Count of pixels whose forward-difference gradient is (numerically)
/// nonzero; the discrete term the L0 objective penalizes.
pub fn nonzero_gradient_count(img: &Image, tol: f64) -> usize {
    let (h, w) = (img.height(), img.width());
    let mut count = 0;
    for ch in 0..img.channels() {
        let plane = img.plane(ch);
        let (gx, gy) = forward_gradients(&plane, h, w);
        for i in 0..h * w {
            if gx[i].abs() + gy[i].abs() > tol {
                count += 1;
            }
        }
    }
    count
}

/// The true L0 objective: data term plus `lambda0` times the nonzero
/// gradient count (with tolerance `tol` standing in for exact zero).
pub fn l0_objective(s: &Image, reference: &Image, lambda0: f64, tol: f64) -> f64 {
    let data: f64 = s
        .data()
        .iter()
        .zip(reference.data())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    data + lambda0 * nonzero_gradient_count(s, tol) as f64
}

/// Mean Euclidean distance between the patch centered at each pixel and its
/// 8 neighboring patches offset by one patch stride. Patch sampling clamps
/// to the image border.
pub fn patch_distance_map(img: &Image, patch: usize) -> Result<Vec<f64>> {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    if patch == 0 || patch > h || patch > w {
        return Err(Error::PatchTooLarge {
            patch,
            extent: h.min(w),
        });
    }
    let half = patch as isize / 2;
    let lo = -half;
    let hi = patch as isize - half;
    let stride = patch as isize;
    let offsets: Vec<(isize, isize)> = (-1..=1)
        .flat_map(|dy| (-1..=1).map(move |dx| (dy * stride, dx * stride)))
        .filter(|&(dy, dx)| dy != 0 || dx != 0)
        .collect();
    let mut out = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut total = 0.0;
            for &(oy, ox) in &offsets {
                let mut sq = 0.0;
                for py in lo..hi {
                    for px in lo..hi {
                        for ch in 0..c {
                            let a = img.get_clamped(y + py, x + px, ch);
                            let b = img.get_clamped(y + oy + py, x + ox + px, ch);
                            sq += (a - b) * (a - b);
                        }
                    }
                }
                total += sq.sqrt();
            }
            out[y as usize * w + x as usize] = total / offsets.len() as f64;
        }
    }
    Ok(out)
}
