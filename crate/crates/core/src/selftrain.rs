//! Bootstrapping and the iterative self-training loop.
//!
//! Phase one trains from scratch against conservative Canny pseudo labels.
//! Each later round predicts fused edge maps, re-derives labels (binarize,
//! intersect with the frozen over-detected Canny map, drop small
//! components), then trains for a fixed number of epochs with the combined
//! teaching + consistency loss. The loop stops once the pseudo-label edge
//! count grows by less than the termination percentage.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::image_io;
use crate::imgproc::{
    adaptive_binarize_with, bilateral_filter, bilinear_resize, canny, connectivity_filter,
    gaussian_blur, gaussian_sigma_for_kernel, hadamard_mask, nearest_resize, AdaptiveParams,
};
use crate::losses::{total_loss, wce_multi_layer};
use crate::model::ops::FeatureMap;
use crate::model::{adam_step, save_checkpoint, Gradients, NetworkParams};
use crate::raster::{BinaryEdgeMap, EdgeProbMap, Image};
use crate::smoothing::perturb;

/// Per-image pseudo labels plus the frozen over-detected Canny maps.
#[derive(Debug, Clone)]
pub struct PseudoLabelStore {
    pub names: Vec<String>,
    pub labels: Vec<BinaryEdgeMap>,
    /// Upper bound C: permissive Canny on the blurred image, computed once.
    pub cmaps: Vec<BinaryEdgeMap>,
}

impl PseudoLabelStore {
    pub fn total_edges(&self) -> u64 {
        self.labels.iter().map(|l| l.count_edges() as u64).sum()
    }
}

/// Round bookkeeping: the index, the edge-count series (starting with the
/// initial labels), and the training knobs that drive termination.
#[derive(Debug, Clone)]
pub struct RoundState {
    pub round_index: usize,
    pub edge_counts: Vec<u64>,
    pub checkpoint_path: Option<PathBuf>,
    pub epochs_per_round: usize,
    pub termination_pct: f64,
}

/// Per-round record written to `round_k/stats.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: usize,
    pub n_edge: u64,
    pub losses: Vec<f64>,
    pub wall_time_s: f64,
}

/// The shared pre-blur: Gaussian then bilateral.
pub fn blur_chain(img: &Image, cfg: &RunConfig) -> Result<Image> {
    let blurred = gaussian_blur(img, cfg.blur_kernel, gaussian_sigma_for_kernel(cfg.blur_kernel))?;
    bilateral_filter(
        &blurred,
        cfg.bilateral_diameter,
        cfg.bilateral_sigma_color_scaled(),
        cfg.bilateral_sigma_space,
    )
}

/// Reads a dataset directory; undecodable files are skipped with a warning.
pub fn load_images(paths: &[PathBuf]) -> (Vec<Image>, Vec<String>) {
    let mut images = Vec::new();
    let mut names = Vec::new();
    for path in paths {
        match image_io::load_image(path) {
            Ok(img) => {
                let stem = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| format!("img_{}", images.len()));
                images.push(img);
                names.push(stem);
            }
            Err(e) => log::warn!("skipping {}: {e}", path.display()),
        }
    }
    (images, names)
}

/// Initial pseudo labels from conservative Canny, plus the frozen
/// permissive maps used as the per-image upper bound in every round.
pub fn make_initial_labels(
    images: &[Image],
    names: &[String],
    cfg: &RunConfig,
) -> Result<PseudoLabelStore> {
    let (hi_low, hi_high) = cfg.canny_high_scaled();
    let (lo_low, lo_high) = cfg.canny_low_scaled();
    let pairs: Vec<(BinaryEdgeMap, BinaryEdgeMap)> = images
        .par_iter()
        .map(|img| {
            let blurred = blur_chain(img, cfg)?;
            let label = canny(&blurred, hi_low, hi_high)?;
            let cmap = canny(&blurred, lo_low, lo_high)?;
            Ok((label, cmap))
        })
        .collect::<Result<_>>()?;
    let (labels, cmaps) = pairs.into_iter().unzip();
    Ok(PseudoLabelStore {
        names: names.to_vec(),
        labels,
        cmaps,
    })
}

/// Binarize a fused prediction, clip it by the permissive Canny map, and
/// drop components below `min_size`.
pub fn post_process(
    pred_fused: &EdgeProbMap,
    cmap: &BinaryEdgeMap,
    min_size: usize,
    adaptive: &AdaptiveParams,
) -> Result<BinaryEdgeMap> {
    let binarized = adaptive_binarize_with(pred_fused, adaptive);
    let masked = hadamard_mask(&binarized, cmap)?;
    Ok(connectivity_filter(&masked, min_size))
}

/// True when the relative edge growth `(N_k - N_{k-1}) / N_k` falls below
/// `t_pct` percent. Empty labels terminate immediately.
pub fn should_terminate(edge_counts: &[u64], t_pct: f64) -> bool {
    if edge_counts.len() < 2 {
        return false;
    }
    let last = edge_counts[edge_counts.len() - 1];
    let prev = edge_counts[edge_counts.len() - 2];
    if last == 0 {
        return true;
    }
    let growth = (last as f64 - prev as f64) / last as f64;
    growth < t_pct / 100.0
}

/// Inputs resized once for the whole run.
pub struct TrainSet {
    inputs: Vec<FeatureMap>,
    /// Perturbed counterparts, present when consistency is in use.
    perturbed: Vec<Option<FeatureMap>>,
}

impl TrainSet {
    /// Resizes every image (and, when `with_perturbed`, its smoothed
    /// counterpart) to the training input size.
    pub fn prepare(images: &[Image], cfg: &RunConfig, with_perturbed: bool) -> Result<Self> {
        let inputs: Vec<FeatureMap> = images
            .par_iter()
            .map(|img| resize_to_input(img, cfg))
            .collect::<Result<_>>()?;
        let perturbed: Vec<Option<FeatureMap>> = if with_perturbed {
            images
                .par_iter()
                .map(|img| Ok(Some(resize_to_input(&perturb(img)?, cfg)?)))
                .collect::<Result<_>>()?
        } else {
            vec![None; images.len()]
        };
        Ok(Self { inputs, perturbed })
    }
}

fn resize_to_input(img: &Image, cfg: &RunConfig) -> Result<FeatureMap> {
    let (th, tw) = cfg.backbone.input_size;
    Ok(FeatureMap::from_image(&bilinear_resize(img, th, tw)?))
}

fn resize_labels(labels: &[BinaryEdgeMap], cfg: &RunConfig) -> Vec<BinaryEdgeMap> {
    let (th, tw) = cfg.backbone.input_size;
    labels.iter().map(|l| nearest_resize(l, th, tw)).collect()
}

/// Runs `epochs` over the set; one Adam step per batch, gradients averaged
/// over batch items. Returns the mean per-item loss of each epoch.
fn train_epochs(
    params: &mut NetworkParams,
    set: &TrainSet,
    labels: &[BinaryEdgeMap],
    cfg: &RunConfig,
    epochs: usize,
    consistency: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let n = set.inputs.len();
    let mut epoch_losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<Result<(f64, Gradients)>> = batch
                .par_iter()
                .map(|&i| {
                    let (outs, trace) =
                        params.forward_padded_with_trace(&set.inputs[i])?;
                    if consistency {
                        let xp = set.perturbed[i]
                            .as_ref()
                            .expect("perturbed inputs prepared");
                        let (outs_p, trace_p) = params.forward_padded_with_trace(xp)?;
                        let (loss, gx, gxp) =
                            total_loss(&outs.maps, &outs_p.maps, &labels[i], &cfg.loss)?;
                        let mut grads = params.backward(&trace, &gx)?;
                        grads.add_assign(&params.backward(&trace_p, &gxp)?);
                        Ok((loss, grads))
                    } else {
                        let (loss, gx) = wce_multi_layer(&outs.maps, &labels[i], &cfg.loss)?;
                        let grads = params.backward(&trace, &gx)?;
                        Ok((loss, grads))
                    }
                })
                .collect();
            let mut batch_grads: Option<Gradients> = None;
            let mut batch_loss = 0.0;
            for r in results {
                let (loss, grads) = r?;
                batch_loss += loss;
                match &mut batch_grads {
                    Some(acc) => acc.add_assign(&grads),
                    None => batch_grads = Some(grads),
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            let mut grads = batch_grads.expect("non-empty batch");
            grads.scale(1.0 / batch.len() as f64);
            adam_step(params, &grads, cfg.learning_rate)?;
            epoch_loss += batch_loss;
        }
        epoch_losses.push(epoch_loss / n as f64);
    }
    Ok(epoch_losses)
}

/// Phase one: fresh seeded weights trained with the teaching loss only.
pub fn phase_one_train(
    images: &[Image],
    store: &PseudoLabelStore,
    cfg: &RunConfig,
    epochs: usize,
) -> Result<(NetworkParams, Vec<f64>)> {
    let mut params = NetworkParams::init(cfg.backbone, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_5EED);
    let inputs: Vec<FeatureMap> = images
        .par_iter()
        .map(|img| resize_to_input(img, cfg))
        .collect::<Result<_>>()?;
    let set = TrainSet {
        perturbed: vec![None; inputs.len()],
        inputs,
    };
    let labels = resize_labels(&store.labels, cfg);
    let losses = train_epochs(&mut params, &set, &labels, cfg, epochs, false, &mut rng)?;
    Ok((params, losses))
}

/// Fused-map inference for every image at native resolution.
pub fn infer_fused(params: &NetworkParams, images: &[Image]) -> Result<Vec<EdgeProbMap>> {
    images
        .par_iter()
        .map(|img| Ok(params.forward_padded(img)?.fused().clone()))
        .collect()
}

/// One round: predict, re-label, record the edge count, then train.
#[allow(clippy::too_many_arguments)]
pub fn run_round(
    params: &mut NetworkParams,
    images: &[Image],
    set: &TrainSet,
    store: &mut PseudoLabelStore,
    state: &mut RoundState,
    cfg: &RunConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let fused = infer_fused(params, images)?;
    let new_labels: Vec<BinaryEdgeMap> = fused
        .par_iter()
        .zip(store.cmaps.par_iter())
        .map(|(pred, cmap)| post_process(pred, cmap, cfg.min_component, &cfg.adaptive))
        .collect::<Result<_>>()?;
    store.labels = new_labels;
    state.round_index += 1;
    state.edge_counts.push(store.total_edges());

    let labels = resize_labels(&store.labels, cfg);
    let consistency = cfg.loss.mu > 0.0;
    train_epochs(
        params,
        set,
        &labels,
        cfg,
        state.epochs_per_round,
        consistency,
        rng,
    )
}

fn write_round_artifacts(
    out_dir: &Path,
    round: usize,
    params: &NetworkParams,
    store: &PseudoLabelStore,
    stats: &RoundStats,
) -> Result<PathBuf> {
    let round_dir = out_dir.join(format!("round_{round}"));
    let labels_dir = round_dir.join("labels");
    std::fs::create_dir_all(&labels_dir)?;
    for (name, label) in store.names.iter().zip(&store.labels) {
        image_io::save_binary_png(label, &labels_dir.join(format!("{name}.png")))?;
    }
    let ckpt = round_dir.join("checkpoint.bin");
    save_checkpoint(params, &ckpt)?;
    let json = serde_json::to_string_pretty(stats)?;
    std::fs::write(round_dir.join("stats.json"), json)?;
    Ok(ckpt)
}

/// The full loop. Writes `round_k/{labels,checkpoint.bin,stats.json}` under
/// `out_dir` for phase one (round 0) and every self-training round, and
/// returns the final parameters, the final label store, and the history.
pub fn self_train(
    images: &[Image],
    names: &[String],
    cfg: &RunConfig,
    out_dir: &Path,
) -> Result<(NetworkParams, PseudoLabelStore, Vec<RoundStats>)> {
    cfg.validate(false)?;
    if images.is_empty() {
        return Err(Error::EmptyDataset(cfg.dataset_dir.clone()));
    }
    let started = Instant::now();
    let mut store = make_initial_labels(images, names, cfg)?;
    let mut state = RoundState {
        round_index: 0,
        edge_counts: vec![store.total_edges()],
        checkpoint_path: None,
        epochs_per_round: cfg.epochs_per_round,
        termination_pct: cfg.termination_pct,
    };
    log::info!(
        "initial labels: {} edge pixels across {} images",
        state.edge_counts[0],
        images.len()
    );

    let (mut params, phase1_losses) =
        phase_one_train(images, &store, cfg, cfg.epochs_phase1)?;
    let mut history = vec![RoundStats {
        round: 0,
        n_edge: state.edge_counts[0],
        losses: phase1_losses,
        wall_time_s: started.elapsed().as_secs_f64(),
    }];
    state.checkpoint_path =
        Some(write_round_artifacts(out_dir, 0, &params, &store, &history[0])?);

    if cfg.max_rounds == 0 {
        return Ok((params, store, history));
    }

    // Perturbed counterparts are loop-invariant; compute them once.
    let consistency = cfg.loss.mu > 0.0;
    let set = TrainSet::prepare(images, cfg, consistency)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x2ED6_E2ED);

    for round in 1..=cfg.max_rounds {
        let round_started = Instant::now();
        let losses = run_round(&mut params, images, &set, &mut store, &mut state, cfg, &mut rng)?;
        let stats = RoundStats {
            round,
            n_edge: *state.edge_counts.last().expect("recorded"),
            losses,
            wall_time_s: round_started.elapsed().as_secs_f64(),
        };
        log::info!(
            "round {round}: {} edge pixels, mean loss {:?}",
            stats.n_edge,
            stats.losses.last()
        );
        state.checkpoint_path =
            Some(write_round_artifacts(out_dir, round, &params, &store, &stats)?);
        history.push(stats);
        if should_terminate(&state.edge_counts, state.termination_pct) {
            log::info!("terminating: edge growth below {}%", state.termination_pct);
            break;
        }
    }
    Ok((params, store, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_corpus, SynthConfig};

    fn small_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.backbone.num_blocks = 3;
        cfg.backbone.base_channels = 4;
        cfg.backbone.input_size = (48, 48);
        cfg.loss.delta = vec![0.7, 1.1, 1.3];
        cfg.epochs_phase1 = 1;
        cfg.epochs_per_round = 1;
        cfg.max_rounds = 1;
        cfg.seed = 9;
        cfg
    }

    fn small_corpus(n: usize) -> (Vec<Image>, Vec<String>) {
        let corpus = generate_corpus(&SynthConfig {
            count: n,
            height: 48,
            width: 48,
            seed: 13,
            ..Default::default()
        })
        .unwrap();
        let names = (0..n).map(|i| format!("img_{i:03}")).collect();
        (corpus.into_iter().map(|(img, _)| img).collect(), names)
    }

    #[test]
    fn initial_labels_are_subset_of_cmaps() {
        let cfg = small_cfg();
        let (images, names) = small_corpus(4);
        let store = make_initial_labels(&images, &names, &cfg).unwrap();
        for (label, cmap) in store.labels.iter().zip(&store.cmaps) {
            assert!(label.is_subset_of(cmap));
        }
        assert!(store.total_edges() > 0, "conservative Canny found nothing");
    }

    #[test]
    fn blank_image_yields_empty_label() {
        let cfg = small_cfg();
        let images = vec![Image::filled(48, 48, 3, 0.5).unwrap()];
        let names = vec!["blank".to_string()];
        let store = make_initial_labels(&images, &names, &cfg).unwrap();
        assert_eq!(store.total_edges(), 0);
    }

    #[test]
    fn post_process_respects_upper_bound_and_min_size() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let adaptive = AdaptiveParams::default();
        for _ in 0..20 {
            let pred = EdgeProbMap::new(48, 48, (0..48 * 48).map(|_| rng.gen()).collect());
            let cmap =
                BinaryEdgeMap::new(48, 48, (0..48 * 48).map(|_| rng.gen_bool(0.25)).collect());
            let out = post_process(&pred, &cmap, 30, &adaptive).unwrap();
            assert!(out.is_subset_of(&cmap));
            let lab = crate::imgproc::connected_components(&out);
            assert!(lab.sizes.iter().all(|&s| s >= 30));
        }
    }

    #[test]
    fn post_process_extremes() {
        let adaptive = AdaptiveParams::default();
        let zeros = EdgeProbMap::zeros(32, 32);
        let mut cmap = BinaryEdgeMap::empty(32, 32);
        for y in 0..32 {
            for x in 0..32 {
                cmap.set(y, x, (y + x) % 2 == 0 || y % 3 == 0);
            }
        }
        let empty = post_process(&zeros, &cmap, 30, &adaptive).unwrap();
        assert_eq!(empty.count_edges(), 0);

        // All-one predictions achieve the upper bound minus small components.
        let ones = EdgeProbMap::new(32, 32, vec![1.0; 32 * 32]);
        let full = post_process(&ones, &cmap, 30, &adaptive).unwrap();
        assert_eq!(full, connectivity_filter(&cmap, 30));
    }

    #[test]
    fn termination_rule() {
        assert!(should_terminate(&[1000, 1015], 2.0)); // 1.48% < 2%
        assert!(!should_terminate(&[1000, 1500], 2.0)); // 33%
        assert!(should_terminate(&[1000, 1000], 2.0)); // 0%
        assert!(should_terminate(&[1000, 900], 2.0)); // shrinking
        assert!(should_terminate(&[1000, 0], 2.0)); // empty labels
        assert!(!should_terminate(&[1000], 2.0)); // too few samples
    }

    #[test]
    fn zero_phase_one_epochs_returns_initialization() {
        let cfg = small_cfg();
        let (images, names) = small_corpus(2);
        let store = make_initial_labels(&images, &names, &cfg).unwrap();
        let (params, losses) = phase_one_train(&images, &store, &cfg, 0).unwrap();
        assert!(losses.is_empty());
        assert_eq!(params, NetworkParams::init(cfg.backbone, cfg.seed).unwrap());
    }

    #[test]
    fn training_decreases_loss_on_tiny_run() {
        let mut cfg = small_cfg();
        cfg.epochs_phase1 = 6;
        let (images, names) = small_corpus(6);
        let store = make_initial_labels(&images, &names, &cfg).unwrap();
        let (_, losses) = phase_one_train(&images, &store, &cfg, cfg.epochs_phase1).unwrap();
        assert!(losses.last().unwrap() < losses.first().unwrap());
    }

    #[test]
    fn self_train_writes_round_artifacts_and_respects_bound() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_cfg();
        cfg.max_rounds = 2;
        cfg.termination_pct = 0.0; // force both rounds to run
        let (images, names) = small_corpus(3);
        let (_, store, history) =
            self_train(&images, &names, &cfg, dir.path()).unwrap();
        assert!(history.len() >= 2);
        for round in 0..history.len() {
            let base = dir.path().join(format!("round_{round}"));
            assert!(base.join("checkpoint.bin").is_file());
            assert!(base.join("stats.json").is_file());
            assert!(base.join("labels").join("img_000.png").is_file());
        }
        for (label, cmap) in store.labels.iter().zip(&store.cmaps) {
            assert!(label.is_subset_of(cmap));
        }
    }
}
