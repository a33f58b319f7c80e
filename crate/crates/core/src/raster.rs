//! Basic raster containers shared by every stage of the pipeline.
//!
//! All pixel data is stored row-major. `Image` is interleaved (HWC) with
//! values in `[0, 1]`; probability maps and binary maps are single-plane.

use crate::error::{Error, Result};

/// An H×W×C raster with floating values in `[0, 1]` (1 or 3 channels).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::ChannelCount(channels));
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidParam {
                name: "data",
                reason: format!(
                    "length {} does not match {}x{}x{}",
                    data.len(),
                    height,
                    width,
                    channels
                ),
            });
        }
        if !data.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)) {
            return Err(Error::NonFinite("image data outside [0,1]"));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds an image, clamping values into `[0, 1]`. Non-finite input is
    /// still rejected.
    pub fn from_clamped(
        height: usize,
        width: usize,
        channels: usize,
        mut data: Vec<f64>,
    ) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image data"));
        }
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Self::new(height, width, channels, data)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Sample with replicate (clamp-to-edge) out-of-bounds handling.
    #[inline]
    pub fn get_clamped(&self, y: isize, x: isize, c: usize) -> f64 {
        let y = y.clamp(0, self.height as isize - 1) as usize;
        let x = x.clamp(0, self.width as isize - 1) as usize;
        self.get(y, x, c)
    }

    /// One channel as a planar H×W buffer.
    pub fn plane(&self, c: usize) -> Vec<f64> {
        (0..self.height * self.width)
            .map(|i| self.data[i * self.channels + c])
            .collect()
    }

    pub fn from_planes(height: usize, width: usize, planes: &[Vec<f64>]) -> Result<Self> {
        let channels = planes.len();
        let mut data = vec![0.0; height * width * channels];
        for (c, p) in planes.iter().enumerate() {
            if p.len() != height * width {
                return Err(Error::DimensionMismatch(height, width, p.len(), 1));
            }
            for i in 0..height * width {
                data[i * channels + c] = p[i];
            }
        }
        Self::from_clamped(height, width, channels, data)
    }
}

/// An H×W boolean raster; `true` marks an edge pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryEdgeMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl BinaryEdgeMap {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), height * width, "binary map size mismatch");
        Self {
            height,
            width,
            data,
        }
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self::new(height, width, vec![false; height * width])
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count_edges(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    /// True when every edge pixel of `self` is also an edge pixel of `other`.
    pub fn is_subset_of(&self, other: &BinaryEdgeMap) -> bool {
        self.height == other.height
            && self.width == other.width
            && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    /// Coordinates of every edge pixel in scan order.
    pub fn edge_pixels(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(y, x) {
                    out.push((y, x));
                }
            }
        }
        out
    }
}

/// An H×W probability raster in `[0, 1]`; one network side output.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeProbMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl EdgeProbMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), height * width, "prob map size mismatch");
        Self {
            height,
            width,
            data,
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::new(height, width, vec![0.0; height * width])
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Binarize keeping pixels with probability `>= t`.
    pub fn threshold(&self, t: f64) -> BinaryEdgeMap {
        BinaryEdgeMap::new(
            self.height,
            self.width,
            self.data.iter().map(|&p| p >= t).collect(),
        )
    }
}

/// Per-pixel gradient magnitude and direction (radians).
#[derive(Debug, Clone)]
pub struct GradientField {
    pub height: usize,
    pub width: usize,
    pub magnitude: Vec<f64>,
    pub direction: Vec<f64>,
}

impl GradientField {
    #[inline]
    pub fn mag(&self, y: usize, x: usize) -> f64 {
        self.magnitude[y * self.width + x]
    }

    #[inline]
    pub fn dir(&self, y: usize, x: usize) -> f64 {
        self.direction[y * self.width + x]
    }
}
