//! Dataset metrics over thinned probability maps: threshold sweeps pooled
//! across images, optimal-dataset-scale and optimal-image-scale F-measures,
//! and average precision by trapezoidal integration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryEdgeMap, EdgeProbMap};

use super::matching::{match_edges, MatchCounts};

/// One point of the pooled precision/recall curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PRPoint {
    #[serde(rename = "t")]
    pub threshold: f64,
    #[serde(rename = "p")]
    pub precision: f64,
    #[serde(rename = "r")]
    pub recall: f64,
    #[serde(rename = "f")]
    pub f_measure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ods: f64,
    pub ois: f64,
    pub ap: f64,
    /// Threshold attaining the ODS optimum.
    pub ods_threshold: f64,
    pub curve: Vec<PRPoint>,
}

fn point_from(counts: &MatchCounts, t: f64) -> PRPoint {
    PRPoint {
        threshold: t,
        precision: counts.precision(),
        recall: counts.recall(),
        f_measure: counts.f_measure(),
    }
}

/// Binarize every (thinned) probability map at `t` (keeping `p >= t`),
/// match per image, pool counts over the dataset.
pub fn pr_at_threshold(
    probs: &[EdgeProbMap],
    gts: &[BinaryEdgeMap],
    t: f64,
    max_dist_frac: f64,
) -> Result<PRPoint> {
    if probs.is_empty() || probs.len() != gts.len() {
        return Err(Error::Config(format!(
            "prediction/ground-truth count mismatch: {} vs {}",
            probs.len(),
            gts.len()
        )));
    }
    let mut pooled = MatchCounts::default();
    for (prob, gt) in probs.iter().zip(gts) {
        pooled.add(&match_edges(&prob.threshold(t), gt, max_dist_frac)?);
    }
    Ok(point_from(&pooled, t))
}

/// Per-image, per-threshold match counts for the sweep.
fn sweep_counts(
    probs: &[EdgeProbMap],
    gts: &[BinaryEdgeMap],
    thresholds: &[f64],
    max_dist_frac: f64,
) -> Result<Vec<Vec<MatchCounts>>> {
    use rayon::prelude::*;
    probs
        .par_iter()
        .zip(gts.par_iter())
        .map(|(prob, gt)| {
            thresholds
                .iter()
                .map(|&t| match_edges(&prob.threshold(t), gt, max_dist_frac))
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

/// Area under the pooled PR curve: points with at least one prediction are
/// sorted by recall, precision is replaced by its monotone envelope, and
/// the curve is integrated by trapezoids with the leftmost precision
/// extended down to recall zero.
fn average_precision(points: &[PRPoint]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.recall, p.precision))
        .collect();
    if pts.is_empty() {
        return 0.0;
    }
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite PR values"));
    // Collapse duplicate recalls to their best precision.
    let mut unique: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for (r, p) in pts {
        match unique.last_mut() {
            Some(last) if last.0 == r => last.1 = last.1.max(p),
            _ => unique.push((r, p)),
        }
    }
    // Monotone envelope: non-increasing precision as recall grows.
    for i in (0..unique.len().saturating_sub(1)).rev() {
        unique[i].1 = unique[i].1.max(unique[i + 1].1);
    }
    let mut ap = unique[0].0 * unique[0].1; // anchor down to recall 0
    for win in unique.windows(2) {
        ap += (win[1].0 - win[0].0) * (win[0].1 + win[1].1) / 2.0;
    }
    ap
}

/// Full metric sweep. `probs` must already be thinned.
pub fn ods_ois_ap(
    probs: &[EdgeProbMap],
    gts: &[BinaryEdgeMap],
    num_thresholds: usize,
    max_dist_frac: f64,
) -> Result<MetricsReport> {
    if probs.is_empty() || probs.len() != gts.len() {
        return Err(Error::Config(format!(
            "prediction/ground-truth count mismatch: {} vs {}",
            probs.len(),
            gts.len()
        )));
    }
    let thresholds: Vec<f64> = (1..=num_thresholds)
        .map(|i| i as f64 / (num_thresholds + 1) as f64)
        .collect();
    let per_image = sweep_counts(probs, gts, &thresholds, max_dist_frac)?;

    // Pooled curve and the shared-threshold optimum.
    let mut curve = Vec::with_capacity(thresholds.len());
    let mut ods = 0.0;
    let mut ods_threshold = thresholds[0];
    for (ti, &t) in thresholds.iter().enumerate() {
        let mut pooled = MatchCounts::default();
        for counts in &per_image {
            pooled.add(&counts[ti]);
        }
        let point = point_from(&pooled, t);
        if point.f_measure > ods {
            ods = point.f_measure;
            ods_threshold = t;
        }
        curve.push(point);
    }

    // Per-image optimal thresholds; counts pooled, F recomputed.
    let mut ois_counts = MatchCounts::default();
    for counts in &per_image {
        let best = counts
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| {
                a.f_measure()
                    .partial_cmp(&b.f_measure())
                    .expect("finite F")
                    // Prefer the lower threshold on ties.
                    .then(ib.cmp(&ia))
            })
            .map(|(_, c)| *c)
            .unwrap_or_default();
        ois_counts.add(&best);
    }
    let ois = ois_counts.f_measure();

    let predictive: Vec<PRPoint> = curve
        .iter()
        .zip(&thresholds)
        .enumerate()
        .filter(|(ti, _)| per_image.iter().any(|c| c[*ti].num_pred > 0))
        .map(|(_, (p, _))| *p)
        .collect();
    let ap = average_precision(&predictive);

    Ok(MetricsReport {
        ods,
        ois,
        ap,
        ods_threshold,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_prob(map: &BinaryEdgeMap) -> EdgeProbMap {
        EdgeProbMap::new(
            map.height,
            map.width,
            map.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }

    fn cross_map() -> BinaryEdgeMap {
        let mut m = BinaryEdgeMap::empty(8, 8);
        for i in 0..8 {
            m.set(3, i, true);
            m.set(i, 5, true);
        }
        m
    }

    #[test]
    fn perfect_predictions_score_one() {
        let gts = vec![cross_map(), {
            let mut m = BinaryEdgeMap::empty(8, 8);
            m.set(0, 0, true);
            m.set(7, 7, true);
            m
        }];
        let probs: Vec<EdgeProbMap> = gts.iter().map(binary_prob).collect();
        let report = ods_ois_ap(&probs, &gts, 99, 0.0075).unwrap();
        assert!((report.ods - 1.0).abs() < 1e-12);
        assert!((report.ois - 1.0).abs() < 1e-12);
        assert!((report.ap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn f_measure_formula() {
        let c = MatchCounts {
            matched_pred: 6,
            matched_gt: 6,
            num_pred: 10,
            num_gt: 20,
        };
        // P = 0.6, R = 0.3 -> F = 0.4.
        assert!((c.f_measure() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn empty_prediction_set_scores_zero() {
        let gt = cross_map();
        let prob = EdgeProbMap::new(8, 8, vec![0.4; 64]);
        let point = pr_at_threshold(&[prob], &[gt], 0.9, 0.0075).unwrap();
        assert_eq!(point.precision, 0.0);
        assert_eq!(point.recall, 0.0);
        assert_eq!(point.f_measure, 0.0);
    }

    #[test]
    fn ois_dominates_ods_single_image() {
        let mut gt = BinaryEdgeMap::empty(8, 8);
        for i in 0..8 {
            gt.set(4, i, true);
        }
        let mut prob = EdgeProbMap::zeros(8, 8);
        for i in 0..8 {
            prob.set(4, i, 0.6);
            prob.set(1, i, 0.3); // spurious weaker line
        }
        let report = ods_ois_ap(&[prob], &[gt], 99, 0.0075).unwrap();
        assert!(report.ois >= report.ods);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert!(ods_ois_ap(&[], &[], 99, 0.0075).is_err());
    }

    #[test]
    fn metrics_match_exhaustive_enumeration() {
        // Hand-built two-image fixture with probabilities on the 0.05 grid
        // so the 99-threshold sweep realizes every distinct prediction set.
        let mut gt1 = BinaryEdgeMap::empty(8, 8);
        let mut p1 = EdgeProbMap::zeros(8, 8);
        for i in 0..8 {
            gt1.set(2, i, true);
            p1.set(2, i, 0.8); // true line, strong
            p1.set(6, i, 0.4); // false line, weak
        }
        let mut gt2 = BinaryEdgeMap::empty(8, 8);
        let mut p2 = EdgeProbMap::zeros(8, 8);
        for i in 0..8 {
            gt2.set(5, i, true);
        }
        for i in 0..4 {
            p2.set(5, i, 0.6); // half the true line, medium
        }
        p2.set(0, 0, 0.2); // isolated false positive

        let probs = vec![p1, p2];
        let gts = vec![gt1, gt2];
        let report = ods_ois_ap(&probs, &gts, 99, 0.0075).unwrap();

        // Exhaustive oracle over all distinct probability values.
        let mut values: Vec<f64> = probs
            .iter()
            .flat_map(|p| p.data.iter().copied())
            .filter(|&v| v > 0.0)
            .collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        let mut best_f = 0.0f64;
        let mut per_image_best = vec![(0.0f64, MatchCounts::default()); 2];
        let mut oracle_points = Vec::new();
        for &t in &values {
            let mut pooled = MatchCounts::default();
            for (i, (p, g)) in probs.iter().zip(&gts).enumerate() {
                let c = match_edges(&p.threshold(t), g, 0.0075).unwrap();
                if c.f_measure() > per_image_best[i].0 {
                    per_image_best[i] = (c.f_measure(), c);
                }
                pooled.add(&c);
            }
            best_f = best_f.max(pooled.f_measure());
            if pooled.num_pred > 0 {
                oracle_points.push(point_from(&pooled, t));
            }
        }
        let mut ois_pool = MatchCounts::default();
        for (_, c) in &per_image_best {
            ois_pool.add(c);
        }
        assert!((report.ods - best_f).abs() < 1e-12);
        assert!((report.ois - ois_pool.f_measure()).abs() < 1e-12);
        assert!((report.ap - average_precision(&oracle_points)).abs() < 1e-12);
        assert!(report.ois >= report.ods);
    }
}
