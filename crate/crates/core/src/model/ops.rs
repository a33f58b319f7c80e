//! Dense planar tensors and the differentiable primitives of the backbone:
//! 3×3/1×1 convolution, 2×2 average pooling, bilinear upsampling, SiLU and
//! the logistic function. Every primitive has an exact adjoint.

use crate::raster::Image;

/// A C×H×W planar buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn from_planes(h: usize, w: usize, planes: Vec<Vec<f64>>) -> Self {
        let c = planes.len();
        let mut data = Vec::with_capacity(c * h * w);
        for p in planes {
            debug_assert_eq!(p.len(), h * w);
            data.extend_from_slice(&p);
        }
        Self { c, h, w, data }
    }

    /// Interleaved image to planar; grayscale is replicated to 3 channels so
    /// the network always sees a fixed input depth.
    pub fn from_image(img: &Image) -> Self {
        let (h, w) = (img.height(), img.width());
        let planes = match img.channels() {
            1 => {
                let p = img.plane(0);
                vec![p.clone(), p.clone(), p]
            }
            _ => (0..3).map(|c| img.plane(c)).collect(),
        };
        Self::from_planes(h, w, planes)
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &[f64] {
        &self.data[c * self.h * self.w..(c + 1) * self.h * self.w]
    }

    #[inline]
    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let hw = self.h * self.w;
        &mut self.data[c * hw..(c + 1) * hw]
    }

    /// Replicate-pad to `(new_h, new_w)` (bottom/right growth only).
    pub fn pad_replicate(&self, new_h: usize, new_w: usize) -> Self {
        let mut out = Self::zeros(self.c, new_h, new_w);
        for c in 0..self.c {
            for y in 0..new_h {
                let sy = y.min(self.h - 1);
                for x in 0..new_w {
                    let sx = x.min(self.w - 1);
                    out.data[(c * new_h + y) * new_w + x] =
                        self.data[(c * self.h + sy) * self.w + sx];
                }
            }
        }
        out
    }
}

/// A stride-1 convolution with zero padding (odd kernel).
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    /// Weights indexed `[out_c][in_c][ky][kx]`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Gradient buffers for one convolution.
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Conv2d {
    pub fn zeros(in_c: usize, out_c: usize, k: usize) -> Self {
        debug_assert!(k % 2 == 1);
        Self {
            in_c,
            out_c,
            k,
            w: vec![0.0; out_c * in_c * k * k],
            b: vec![0.0; out_c],
        }
    }

    pub fn forward(&self, input: &FeatureMap) -> FeatureMap {
        debug_assert_eq!(input.c, self.in_c);
        let (h, w) = (input.h, input.w);
        let hw = h * w;
        let r = (self.k / 2) as isize;
        let mut out = FeatureMap::zeros(self.out_c, h, w);
        for oc in 0..self.out_c {
            let bias = self.b[oc];
            let out_plane = out.plane_mut(oc);
            out_plane.fill(bias);
            for ic in 0..self.in_c {
                let in_plane = &input.data[ic * hw..(ic + 1) * hw];
                for ky in 0..self.k {
                    let dy = ky as isize - r;
                    let y0 = (-dy).max(0) as usize;
                    let y1 = ((h as isize - dy).min(h as isize)).max(0) as usize;
                    for kx in 0..self.k {
                        let dx = kx as isize - r;
                        let x0 = (-dx).max(0) as usize;
                        let x1 = ((w as isize - dx).min(w as isize)).max(0) as usize;
                        let wv = self.w[((oc * self.in_c + ic) * self.k + ky) * self.k + kx];
                        for y in y0..y1 {
                            let src = ((y as isize + dy) as usize) * w;
                            let dst = y * w;
                            for x in x0..x1 {
                                out_plane[dst + x] +=
                                    wv * in_plane[src + (x as isize + dx) as usize];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Returns (parameter gradients, input gradient).
    pub fn backward(&self, input: &FeatureMap, d_out: &FeatureMap) -> (ConvGrads, FeatureMap) {
        debug_assert_eq!(d_out.c, self.out_c);
        let (h, w) = (input.h, input.w);
        let hw = h * w;
        let r = (self.k / 2) as isize;
        let mut grads = ConvGrads {
            w: vec![0.0; self.w.len()],
            b: vec![0.0; self.out_c],
        };
        let mut d_in = FeatureMap::zeros(self.in_c, h, w);
        for oc in 0..self.out_c {
            let d_plane = &d_out.data[oc * hw..(oc + 1) * hw];
            grads.b[oc] = d_plane.iter().sum();
            for ic in 0..self.in_c {
                let in_plane = &input.data[ic * hw..(ic + 1) * hw];
                let din_plane = &mut d_in.data[ic * hw..(ic + 1) * hw];
                for ky in 0..self.k {
                    let dy = ky as isize - r;
                    let y0 = (-dy).max(0) as usize;
                    let y1 = ((h as isize - dy).min(h as isize)).max(0) as usize;
                    for kx in 0..self.k {
                        let dx = kx as isize - r;
                        let x0 = (-dx).max(0) as usize;
                        let x1 = ((w as isize - dx).min(w as isize)).max(0) as usize;
                        let widx = ((oc * self.in_c + ic) * self.k + ky) * self.k + kx;
                        let wv = self.w[widx];
                        let mut dw = 0.0;
                        for y in y0..y1 {
                            let src = ((y as isize + dy) as usize) * w;
                            let dst = y * w;
                            for x in x0..x1 {
                                let g = d_plane[dst + x];
                                let sidx = src + (x as isize + dx) as usize;
                                dw += g * in_plane[sidx];
                                din_plane[sidx] += wv * g;
                            }
                        }
                        grads.w[widx] += dw;
                    }
                }
            }
        }
        (grads, d_in)
    }
}

/// 2×2 average pooling with stride 2 (even input sides required).
pub fn avg_pool2(input: &FeatureMap) -> FeatureMap {
    debug_assert!(input.h % 2 == 0 && input.w % 2 == 0);
    let (oh, ow) = (input.h / 2, input.w / 2);
    let mut out = FeatureMap::zeros(input.c, oh, ow);
    for c in 0..input.c {
        let src = input.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..oh {
            for x in 0..ow {
                let i = (2 * y) * input.w + 2 * x;
                dst[y * ow + x] =
                    0.25 * (src[i] + src[i + 1] + src[i + input.w] + src[i + input.w + 1]);
            }
        }
    }
    out
}

pub fn avg_pool2_backward(d_out: &FeatureMap) -> FeatureMap {
    let (ih, iw) = (d_out.h * 2, d_out.w * 2);
    let mut d_in = FeatureMap::zeros(d_out.c, ih, iw);
    for c in 0..d_out.c {
        let src = d_out.plane(c);
        let dst = d_in.plane_mut(c);
        for y in 0..d_out.h {
            for x in 0..d_out.w {
                let g = 0.25 * src[y * d_out.w + x];
                let i = (2 * y) * iw + 2 * x;
                dst[i] += g;
                dst[i + 1] += g;
                dst[i + iw] += g;
                dst[i + iw + 1] += g;
            }
        }
    }
    d_in
}

/// Tap positions and weights for one output axis of a bilinear resize
/// (half-pixel-center convention, clamped).
fn bilinear_taps(dst: usize, src: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let f = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = f.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, f - i0 as f64)
        })
        .collect()
}

pub fn bilinear_upsample(input: &FeatureMap, out_h: usize, out_w: usize) -> FeatureMap {
    let ys = bilinear_taps(out_h, input.h);
    let xs = bilinear_taps(out_w, input.w);
    let mut out = FeatureMap::zeros(input.c, out_h, out_w);
    for c in 0..input.c {
        let src = input.plane(c);
        let dst = out.plane_mut(c);
        for (y, &(y0, y1, wy)) in ys.iter().enumerate() {
            for (x, &(x0, x1, wx)) in xs.iter().enumerate() {
                dst[y * out_w + x] = (1.0 - wy) * (1.0 - wx) * src[y0 * input.w + x0]
                    + (1.0 - wy) * wx * src[y0 * input.w + x1]
                    + wy * (1.0 - wx) * src[y1 * input.w + x0]
                    + wy * wx * src[y1 * input.w + x1];
            }
        }
    }
    out
}

pub fn bilinear_upsample_backward(
    d_out: &FeatureMap,
    in_h: usize,
    in_w: usize,
) -> FeatureMap {
    let ys = bilinear_taps(d_out.h, in_h);
    let xs = bilinear_taps(d_out.w, in_w);
    let mut d_in = FeatureMap::zeros(d_out.c, in_h, in_w);
    for c in 0..d_out.c {
        let src = d_out.plane(c);
        let dst = d_in.plane_mut(c);
        for (y, &(y0, y1, wy)) in ys.iter().enumerate() {
            for (x, &(x0, x1, wx)) in xs.iter().enumerate() {
                let g = src[y * d_out.w + x];
                dst[y0 * in_w + x0] += (1.0 - wy) * (1.0 - wx) * g;
                dst[y0 * in_w + x1] += (1.0 - wy) * wx * g;
                dst[y1 * in_w + x0] += wy * (1.0 - wx) * g;
                dst[y1 * in_w + x1] += wy * wx * g;
            }
        }
    }
    d_in
}

/// Numerically stable logistic, clamped to the open interval so the
/// output never collapses to an exact 0 or 1.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(1e-12, 1.0 - 1e-12)
}

#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub fn silu_deriv(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}
