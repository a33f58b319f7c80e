//! Boundary-evaluation harness: probability-map thinning, predicted/ground
//! truth pixel correspondence within a tolerance radius, and the standard
//! dataset metrics (ODS, OIS, AP) with PR curves.

mod matching;
mod metrics;
mod nms;

pub use matching::{match_edges, MatchCounts};
pub use metrics::{ods_ois_ap, pr_at_threshold, MetricsReport, PRPoint};
pub use nms::nms_thin;

/// Matching radius as a fraction of the image diagonal.
pub const DEFAULT_MAX_DIST_FRAC: f64 = 0.0075;

/// Number of evenly spaced thresholds used for the metric sweeps.
pub const DEFAULT_NUM_THRESHOLDS: usize = 99;
