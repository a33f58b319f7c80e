//! Self-training edge detection toolkit.
//!
//! The pipeline bootstraps pseudo labels from a conservative Canny pass,
//! trains a small multi-scale edge network with deeply supervised weighted
//! cross-entropy, regularizes it with a multi-layer consistency loss against
//! an edge-preserving smoothed copy of each image, and then alternates
//! between re-labelling (binarize, mask by over-detected Canny, drop small
//! components) and re-training until the pseudo-label edge count stabilizes.
//!
//! Modules follow the stages of that loop:
//! - [`imgproc`]: grayscale, blurs, Canny, binarization, component labelling
//! - [`smoothing`]: Gaussian + L0 gradient minimization perturbation
//! - [`model`]: the trainable multi-scale network (forward/backward/Adam)
//! - [`losses`]: weighted cross-entropy and consistency losses
//! - [`selftrain`]: the bootstrapping and round loop
//! - [`eval`]: NMS thinning, pixel correspondence, ODS/OIS/AP
//! - [`synth`]: deterministic synthetic corpus with exact boundaries

pub mod config;
pub mod error;
pub mod eval;
pub mod image_io;
pub mod imgproc;
pub mod losses;
pub mod model;
pub mod raster;
pub mod selftrain;
pub mod smoothing;
pub mod synth;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use raster::{BinaryEdgeMap, EdgeProbMap, GradientField, Image};
