//! Classical image-processing kernels.
//!
//! Everything here is a pure function over `[0, 1]` rasters. Canny threshold
//! arguments follow the same convention: callers quoting thresholds on the
//! 0–255 gradient scale divide by 255 at this boundary.

mod binarize;
mod canny;
mod components;
mod filter;

pub use binarize::{adaptive_binarize, adaptive_binarize_with, AdaptiveParams};
pub use canny::{canny, sobel_gradients};
pub use components::{connected_components, connectivity_filter, Labeling};
pub use filter::{
    bilateral_filter, bilinear_resize, gaussian_blur, gaussian_blur_default,
    gaussian_sigma_for_kernel, nearest_resize, to_grayscale,
};

use crate::error::{Error, Result};
use crate::raster::BinaryEdgeMap;

/// Element-wise logical AND of two edge maps.
pub fn hadamard_mask(a: &BinaryEdgeMap, b: &BinaryEdgeMap) -> Result<BinaryEdgeMap> {
    if a.height != b.height || a.width != b.width {
        return Err(Error::DimensionMismatch(a.height, a.width, b.height, b.width));
    }
    Ok(BinaryEdgeMap::new(
        a.height,
        a.width,
        a.data.iter().zip(&b.data).map(|(&x, &y)| x && y).collect(),
    ))
}
