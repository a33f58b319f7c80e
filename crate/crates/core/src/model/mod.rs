//! The trainable multi-scale edge network.
//!
//! A deliberately small encoder stands in for heavyweight edge backbones:
//! it preserves exactly what the training scheme needs — `num_blocks` side
//! outputs at input resolution, the last one fused from the others — while
//! staying cheap enough to train on a CPU.

mod adam;
mod checkpoint;
mod network;
pub mod ops;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{EdgeProbMap, Image};

use network::Trace;
use ops::{Conv2d, ConvGrads, FeatureMap};

/// Fixed input depth; grayscale inputs are replicated.
pub const IN_CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    /// Side outputs including the fused one; the encoder has one stage per
    /// non-fused output. Must equal the length of the per-block loss weights.
    pub num_blocks: usize,
    pub base_channels: usize,
    /// Training resize target (height, width).
    pub input_size: (usize, usize),
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            num_blocks: 7,
            base_channels: 16,
            input_size: (400, 400),
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_blocks < 2 {
            return Err(Error::InvalidParam {
                name: "num_blocks",
                reason: format!("{} must be >= 2", self.num_blocks),
            });
        }
        if self.base_channels == 0 {
            return Err(Error::InvalidParam {
                name: "base_channels",
                reason: "must be >= 1".into(),
            });
        }
        if self.input_size.0 == 0 || self.input_size.1 == 0 {
            return Err(Error::InvalidParam {
                name: "input_size",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }

    pub fn num_stages(&self) -> usize {
        self.num_blocks - 1
    }

    /// Total downsampling factor of the deepest stage.
    pub fn stride(&self) -> usize {
        1 << (self.num_stages() - 1)
    }

    /// Channel width of stage `s`; doubles per stage, capped at 8x base.
    pub fn stage_channels(&self, s: usize) -> usize {
        self.base_channels << s.min(3)
    }
}

/// Parameters of one encoder stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub conv_a: Conv2d,
    pub conv_b: Conv2d,
    /// 1×1 head producing the stage's pre-logistic edge map.
    pub head: Conv2d,
}

/// All trainable weights plus the optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub config: BackboneConfig,
    pub stages: Vec<Stage>,
    /// 1×1 fusion over the stacked side pre-logits.
    pub fuse: Conv2d,
    pub opt: AdamState,
}

/// Ordered list of probability maps; the last entry is the fused output.
#[derive(Debug, Clone, PartialEq)]
pub struct SideOutputs {
    pub maps: Vec<EdgeProbMap>,
}

impl SideOutputs {
    pub fn fused(&self) -> &EdgeProbMap {
        self.maps.last().expect("at least one output")
    }
}

/// Parameter gradients, aligned with `NetworkParams::tensor` indexing.
#[derive(Debug, Clone)]
pub struct Gradients {
    tensors: Vec<Vec<f64>>,
    num_stages: usize,
}

const TENSORS_PER_STAGE: usize = 6;

impl Gradients {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        let tensors = (0..params.tensor_count())
            .map(|i| vec![0.0; params.tensor(i).len()])
            .collect();
        Self {
            tensors,
            num_stages: params.stages.len(),
        }
    }

    pub fn tensor(&self, i: usize) -> &[f64] {
        &self.tensors[i]
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in &mut self.tensors {
            for v in t.iter_mut() {
                *v *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn set_conv(&mut self, base: usize, g: ConvGrads) {
        self.tensors[base] = g.w;
        self.tensors[base + 1] = g.b;
    }

    pub(crate) fn set_stage_conv_a(&mut self, s: usize, g: ConvGrads) {
        self.set_conv(s * TENSORS_PER_STAGE, g);
    }

    pub(crate) fn set_stage_conv_b(&mut self, s: usize, g: ConvGrads) {
        self.set_conv(s * TENSORS_PER_STAGE + 2, g);
    }

    pub(crate) fn set_stage_head(&mut self, s: usize, g: ConvGrads) {
        self.set_conv(s * TENSORS_PER_STAGE + 4, g);
    }

    pub(crate) fn set_fuse(&mut self, g: ConvGrads) {
        self.set_conv(self.num_stages * TENSORS_PER_STAGE, g);
    }
}

impl NetworkParams {
    /// Seeded He-style initialization; biases start at zero and the fusion
    /// weights at `1 / num_stages` so the fused map begins as the mean of
    /// the side maps.
    pub fn init(config: BackboneConfig, seed: u64) -> Result<Self> {
        use rand::{Rng, SeedableRng};
        config.validate()?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        // Box-Muller; the RNG stream is part of the determinism contract.
        let mut normal = move |rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        let num_stages = config.num_stages();
        let mut stages = Vec::with_capacity(num_stages);
        for s in 0..num_stages {
            let in_c = if s == 0 {
                IN_CHANNELS
            } else {
                config.stage_channels(s - 1)
            };
            let out_c = config.stage_channels(s);
            let mut conv_a = Conv2d::zeros(in_c, out_c, 3);
            let std_a = (2.0 / (in_c * 9) as f64).sqrt();
            for v in conv_a.w.iter_mut() {
                *v = normal(&mut rng) * std_a;
            }
            let mut conv_b = Conv2d::zeros(out_c, out_c, 3);
            let std_b = (2.0 / (out_c * 9) as f64).sqrt();
            for v in conv_b.w.iter_mut() {
                *v = normal(&mut rng) * std_b;
            }
            let mut head = Conv2d::zeros(out_c, 1, 1);
            let std_h = (2.0 / out_c as f64).sqrt();
            for v in head.w.iter_mut() {
                *v = normal(&mut rng) * std_h;
            }
            stages.push(Stage {
                conv_a,
                conv_b,
                head,
            });
        }
        let mut fuse = Conv2d::zeros(num_stages, 1, 1);
        fuse.w.fill(1.0 / num_stages as f64);
        let mut params = Self {
            config,
            stages,
            fuse,
            opt: AdamState::empty(),
        };
        params.opt = AdamState::zeros_like(&params);
        Ok(params)
    }

    pub fn tensor_count(&self) -> usize {
        self.stages.len() * TENSORS_PER_STAGE + 2
    }

    pub fn tensor(&self, i: usize) -> &Vec<f64> {
        let s = i / TENSORS_PER_STAGE;
        if s < self.stages.len() {
            let stage = &self.stages[s];
            match i % TENSORS_PER_STAGE {
                0 => &stage.conv_a.w,
                1 => &stage.conv_a.b,
                2 => &stage.conv_b.w,
                3 => &stage.conv_b.b,
                4 => &stage.head.w,
                _ => &stage.head.b,
            }
        } else {
            match i - self.stages.len() * TENSORS_PER_STAGE {
                0 => &self.fuse.w,
                _ => &self.fuse.b,
            }
        }
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Vec<f64> {
        let s = i / TENSORS_PER_STAGE;
        if s < self.stages.len() {
            let stage = &mut self.stages[s];
            match i % TENSORS_PER_STAGE {
                0 => &mut stage.conv_a.w,
                1 => &mut stage.conv_a.b,
                2 => &mut stage.conv_b.w,
                3 => &mut stage.conv_b.b,
                4 => &mut stage.head.w,
                _ => &mut stage.head.b,
            }
        } else {
            match i - self.stages.len() * TENSORS_PER_STAGE {
                0 => &mut self.fuse.w,
                _ => &mut self.fuse.b,
            }
        }
    }

    /// Total number of scalar parameters (optimizer state excluded).
    pub fn num_parameters(&self) -> usize {
        (0..self.tensor_count()).map(|i| self.tensor(i).len()).sum()
    }

    /// Read/write a parameter by flat index across all tensors, used by
    /// finite-difference checks.
    pub fn get_flat(&self, mut idx: usize) -> f64 {
        for i in 0..self.tensor_count() {
            let t = self.tensor(i);
            if idx < t.len() {
                return t[idx];
            }
            idx -= t.len();
        }
        panic!("flat index out of range");
    }

    pub fn set_flat(&mut self, mut idx: usize, value: f64) {
        for i in 0..self.tensor_count() {
            if idx < self.tensor(i).len() {
                self.tensor_mut(i)[idx] = value;
                return;
            }
            idx -= self.tensor(i).len();
        }
        panic!("flat index out of range");
    }

    /// Deterministic forward pass. The input must be divisible by the
    /// network stride; see [`NetworkParams::forward_padded`] otherwise.
    pub fn forward(&self, img: &Image) -> Result<SideOutputs> {
        let (outs, _) = network::forward_trace(self, FeatureMap::from_image(img))?;
        Ok(outs)
    }

    pub fn forward_map(&self, input: &FeatureMap) -> Result<SideOutputs> {
        let (outs, _) = network::forward_trace(self, input.clone())?;
        Ok(outs)
    }

    pub fn forward_with_trace(&self, input: &FeatureMap) -> Result<(SideOutputs, ForwardTrace)> {
        let (outs, trace) = network::forward_trace(self, input.clone())?;
        Ok((
            outs,
            ForwardTrace {
                trace,
                orig: None,
            },
        ))
    }

    /// Forward at arbitrary resolution: replicate-pads to the next stride
    /// multiple and crops the outputs back.
    pub fn forward_padded(&self, img: &Image) -> Result<SideOutputs> {
        let (outs, _) = self.forward_padded_with_trace(&FeatureMap::from_image(img))?;
        Ok(outs)
    }

    pub fn forward_padded_with_trace(
        &self,
        input: &FeatureMap,
    ) -> Result<(SideOutputs, ForwardTrace)> {
        let stride = self.config.stride();
        let (h, w) = (input.h, input.w);
        if h % stride == 0 && w % stride == 0 {
            return self.forward_with_trace(input);
        }
        let ph = h.div_ceil(stride) * stride;
        let pw = w.div_ceil(stride) * stride;
        let padded = input.pad_replicate(ph, pw);
        let (outs, trace) = network::forward_trace(self, padded)?;
        let cropped = SideOutputs {
            maps: outs
                .maps
                .iter()
                .map(|m| {
                    let mut data = Vec::with_capacity(h * w);
                    for y in 0..h {
                        data.extend_from_slice(&m.data[y * pw..y * pw + w]);
                    }
                    EdgeProbMap::new(h, w, data)
                })
                .collect(),
        };
        Ok((
            cropped,
            ForwardTrace {
                trace,
                orig: Some((h, w)),
            },
        ))
    }

    /// Exact reverse-mode gradients for the trace's forward pass. The
    /// upstream buffers are d(loss)/d(probability map), fused last, at the
    /// (cropped) output resolution.
    pub fn backward(&self, trace: &ForwardTrace, upstream: &[Vec<f64>]) -> Result<Gradients> {
        match trace.orig {
            None => network::backward(self, &trace.trace, upstream),
            Some((h, w)) => {
                let (ph, pw) = (trace.trace.h, trace.trace.w);
                let padded: Vec<Vec<f64>> = upstream
                    .iter()
                    .map(|u| {
                        let mut full = vec![0.0; ph * pw];
                        for y in 0..h {
                            full[y * pw..y * pw + w].copy_from_slice(&u[y * w..(y + 1) * w]);
                        }
                        full
                    })
                    .collect();
                network::backward(self, &trace.trace, &padded)
            }
        }
    }
}

/// Opaque cache tying a forward pass to its backward pass.
pub struct ForwardTrace {
    trace: Trace,
    /// Original size when the pass ran padded.
    orig: Option<(usize, usize)>,
}
