//! Forward and reverse passes through the multi-scale backbone.
//!
//! The encoder is a chain of stages (two 3×3 convolutions with SiLU each),
//! downsampled by 2×2 average pooling between stages. Every stage emits a
//! 1-channel head, bilinearly upsampled to input resolution; the logistic of
//! each upsampled head is one side output. The final map is the logistic of
//! a 1×1 convolution over the stacked pre-logistic side maps.

use crate::error::{Error, Result};
use crate::raster::EdgeProbMap;

use super::ops::{
    avg_pool2, avg_pool2_backward, bilinear_upsample, bilinear_upsample_backward, sigmoid,
    silu, silu_deriv, FeatureMap,
};
use super::{Gradients, NetworkParams, SideOutputs};

/// Cached activations from one forward pass, consumed by `backward`.
pub struct Trace {
    pub(super) stages: Vec<StageTrace>,
    /// Stacked pre-logistic side maps at input resolution.
    pub(super) fused_input: FeatureMap,
    /// Probabilities (after the logistic) for every output incl. fused.
    pub(super) probs: Vec<Vec<f64>>,
    pub(super) h: usize,
    pub(super) w: usize,
}

pub(super) struct StageTrace {
    /// Input to this stage's first convolution (pooled features).
    pub input: FeatureMap,
    pub pre_a: FeatureMap,
    pub act_a: FeatureMap,
    pub pre_b: FeatureMap,
    /// Stage features, fed to the head and (pooled) to the next stage.
    pub act_b: FeatureMap,
}

fn apply_silu(map: &FeatureMap) -> FeatureMap {
    FeatureMap {
        c: map.c,
        h: map.h,
        w: map.w,
        data: map.data.iter().map(|&v| silu(v)).collect(),
    }
}

pub(super) fn forward_trace(params: &NetworkParams, input: FeatureMap) -> Result<(SideOutputs, Trace)> {
    let stride = params.config.stride();
    if input.h % stride != 0 || input.w % stride != 0 {
        return Err(Error::StrideMismatch(input.h, input.w, stride));
    }
    let (full_h, full_w) = (input.h, input.w);
    let num_stages = params.stages.len();
    let mut stages = Vec::with_capacity(num_stages);
    let mut side_prelogits = Vec::with_capacity(num_stages);
    let mut cur = input.clone();
    for (s, stage) in params.stages.iter().enumerate() {
        if s > 0 {
            cur = avg_pool2(&cur);
        }
        let pre_a = stage.conv_a.forward(&cur);
        let act_a = apply_silu(&pre_a);
        let pre_b = stage.conv_b.forward(&act_a);
        let act_b = apply_silu(&pre_b);
        let head = stage.head.forward(&act_b);
        side_prelogits.push(bilinear_upsample(&head, full_h, full_w));
        stages.push(StageTrace {
            input: std::mem::replace(&mut cur, act_b.clone()),
            pre_a,
            act_a,
            pre_b,
            act_b,
        });
    }

    let fused_input = FeatureMap::from_planes(
        full_h,
        full_w,
        side_prelogits.iter().map(|m| m.data.clone()).collect(),
    );
    let fused_prelogit = params.fuse.forward(&fused_input);

    let mut probs: Vec<Vec<f64>> = side_prelogits
        .iter()
        .map(|m| m.data.iter().map(|&z| sigmoid(z)).collect())
        .collect();
    probs.push(fused_prelogit.data.iter().map(|&z| sigmoid(z)).collect());

    let maps = probs
        .iter()
        .map(|p| EdgeProbMap::new(full_h, full_w, p.clone()))
        .collect();
    Ok((
        SideOutputs { maps },
        Trace {
            stages,
            fused_input,
            probs,
            h: full_h,
            w: full_w,
        },
    ))
}

/// Reverse-mode accumulation of parameter gradients. `upstream` holds
/// d(loss)/d(probability map) for every output, fused last.
pub(super) fn backward(
    params: &NetworkParams,
    trace: &Trace,
    upstream: &[Vec<f64>],
) -> Result<Gradients> {
    let num_stages = params.stages.len();
    if upstream.len() != num_stages + 1 {
        return Err(Error::LayerCountMismatch {
            got: upstream.len(),
            want: num_stages + 1,
        });
    }
    let hw = trace.h * trace.w;
    for (i, u) in upstream.iter().enumerate() {
        if u.len() != hw {
            return Err(Error::DimensionMismatch(u.len(), 1, hw, i));
        }
    }
    let mut grads = Gradients::zeros_like(params);

    // Through the logistic: dL/dz = dL/dp * p * (1 - p).
    let dz_of = |probs: &[f64], up: &[f64]| -> Vec<f64> {
        probs
            .iter()
            .zip(up)
            .map(|(&p, &g)| g * p * (1.0 - p))
            .collect()
    };

    // Fused head: 1x1 conv over the stacked side pre-logits.
    let d_fused = FeatureMap {
        c: 1,
        h: trace.h,
        w: trace.w,
        data: dz_of(&trace.probs[num_stages], &upstream[num_stages]),
    };
    let (fuse_grads, d_fused_input) = params.fuse.backward(&trace.fused_input, &d_fused);
    grads.set_fuse(fuse_grads);

    // Per-side pre-logit gradients: own logistic plus the fused branch.
    let mut d_sides: Vec<FeatureMap> = (0..num_stages)
        .map(|s| {
            let mut data = dz_of(&trace.probs[s], &upstream[s]);
            let from_fuse = d_fused_input.plane(s);
            for (d, &f) in data.iter_mut().zip(from_fuse) {
                *d += f;
            }
            FeatureMap {
                c: 1,
                h: trace.h,
                w: trace.w,
                data,
            }
        })
        .collect();

    // Stages in reverse; d_next_input carries the gradient flowing into the
    // (pooled) input of the following stage.
    let mut d_next_input: Option<FeatureMap> = None;
    for s in (0..num_stages).rev() {
        let stage = &params.stages[s];
        let st = &trace.stages[s];
        let d_head_out =
            bilinear_upsample_backward(&d_sides.pop().expect("one per stage"), st.act_b.h, st.act_b.w);
        let (head_grads, mut d_act_b) = stage.head.backward(&st.act_b, &d_head_out);
        grads.set_stage_head(s, head_grads);
        if let Some(d_in) = d_next_input.take() {
            let pooled_grad = avg_pool2_backward(&d_in);
            for (a, b) in d_act_b.data.iter_mut().zip(&pooled_grad.data) {
                *a += b;
            }
        }
        let d_pre_b = FeatureMap {
            c: d_act_b.c,
            h: d_act_b.h,
            w: d_act_b.w,
            data: d_act_b
                .data
                .iter()
                .zip(&st.pre_b.data)
                .map(|(&g, &z)| g * silu_deriv(z))
                .collect(),
        };
        let (b_grads, d_act_a) = stage.conv_b.backward(&st.act_a, &d_pre_b);
        grads.set_stage_conv_b(s, b_grads);
        let d_pre_a = FeatureMap {
            c: d_act_a.c,
            h: d_act_a.h,
            w: d_act_a.w,
            data: d_act_a
                .data
                .iter()
                .zip(&st.pre_a.data)
                .map(|(&g, &z)| g * silu_deriv(z))
                .collect(),
        };
        let (a_grads, d_input) = stage.conv_a.backward(&st.input, &d_pre_a);
        grads.set_stage_conv_a(s, a_grads);
        d_next_input = Some(d_input);
    }
    Ok(grads)
}
