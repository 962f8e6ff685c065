//! Shared encoder, per-view attention heads and the output layer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::attention::{attention_backward, fuse_attention, Attention};
use super::encoder::{Hidden, MixingCache, MixingEncoder, RowEncoder};
use super::segment::{MultiViewInput, Rows, ENT_ID};
use super::FusionError;

/// Parameter layout over one flat vector:
/// `encoder | w_dial (d) | b_dial | w_scene (d) | b_scene | W_out (2 × 2d) | b_out (2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionModel {
    pub encoder: MixingEncoder,
}

impl FusionModel {
    pub fn new(encoder: MixingEncoder) -> Self {
        FusionModel { encoder }
    }

    fn d(&self) -> usize {
        self.encoder.hidden_size()
    }
    fn n_enc(&self) -> usize {
        self.encoder.num_params()
    }
    /// Offset of the dialogue attention head in the flat parameter vector.
    pub fn w_dial(&self) -> usize {
        self.n_enc()
    }
    pub fn w_scene(&self) -> usize {
        self.w_dial() + self.d() + 1
    }
    pub fn w_out(&self) -> usize {
        self.w_scene() + self.d() + 1
    }
    pub fn b_out(&self) -> usize {
        self.w_out() + 4 * self.d()
    }

    pub fn num_params(&self) -> usize {
        self.b_out() + 2
    }

    pub fn init_params(&self, rng: &mut impl Rng, scale: f64) -> Vec<f64> {
        let mut p = self.encoder.init_params(rng, scale);
        let normal = rand_distr::Normal::new(0.0, scale).expect("finite scale");
        p.extend((self.n_enc()..self.num_params()).map(|_| rand_distr::Distribution::sample(&normal, rng)));
        p[self.w_scene() - 1] = 0.0;
        p[self.w_out() - 1] = 0.0;
        p[self.b_out()] = 0.0;
        p[self.b_out() + 1] = 0.0;
        p
    }
}

/// One view's encoder output and attention. `attention` is `None` when no
/// position is eligible, in which case the summary is the zero vector.
#[derive(Debug, Clone)]
pub struct FusionState {
    pub hidden: Hidden,
    pub mask: Vec<Vec<bool>>,
    pub attention: Option<Attention>,
    pub h_view: Vec<f64>,
}

/// Full forward pass, kept for the backward pass.
pub struct Forward {
    pub dial: FusionState,
    pub scene: Option<FusionState>,
    pub features: Vec<f64>,
    pub scores: [f64; 2],
    dial_cache: MixingCache,
    scene_cache: Option<MixingCache>,
}

fn view(
    model: &FusionModel,
    params: &[f64],
    rows: &Rows,
    head: usize,
    entity_only: bool,
) -> (FusionState, MixingCache) {
    let d = model.d();
    let (hidden, cache) = model.encoder.encode(&params[..model.n_enc()], rows);
    let mask: Vec<Vec<bool>> = rows
        .mask
        .iter()
        .zip(&rows.ids)
        .map(|(m, ids)| m.iter().zip(ids).map(|(&m, &t)| m && (!entity_only || t == ENT_ID)).collect())
        .collect();
    let attention = match fuse_attention(&hidden, &params[head..head + d], params[head + d], &mask) {
        Ok(a) => Some(a),
        Err(FusionError::AllMasked) => None,
        Err(e) => unreachable!("attention only fails on empty masks: {e}"),
    };
    let h_view = attention.as_ref().map_or_else(|| vec![0.0; d], |a| a.h_view.clone());
    (FusionState { hidden, mask, attention, h_view }, cache)
}

/// Scores for the dimension's two poles. The scene view attends only to
/// entity-marker positions; without `use_scene` its summary is zero.
pub fn multiview_forward(model: &FusionModel, params: &[f64], input: &MultiViewInput, use_scene: bool) -> Forward {
    assert_eq!(params.len(), model.num_params(), "parameter vector size mismatch");
    let d = model.d();
    let (dial, dial_cache) = view(model, params, &input.dial_rows, model.w_dial(), false);
    let (scene, scene_cache) = if use_scene {
        let (s, c) = view(model, params, &input.scene_rows, model.w_scene(), true);
        (Some(s), Some(c))
    } else {
        (None, None)
    };
    let mut features = dial.h_view.clone();
    match &scene {
        Some(s) => features.extend_from_slice(&s.h_view),
        None => features.extend(std::iter::repeat_n(0.0, d)),
    }
    let w = &params[model.w_out()..model.b_out()];
    let b = &params[model.b_out()..];
    let mut scores = [0.0; 2];
    for (c, s) in scores.iter_mut().enumerate() {
        *s = b[c] + w[c * 2 * d..(c + 1) * 2 * d].iter().zip(&features).map(|(w, f)| w * f).sum::<f64>();
    }
    Forward { dial, scene, features, scores, dial_cache, scene_cache }
}

/// Cross-entropy loss of the pole scores against `target` (0 or 1) and its
/// gradient with respect to every parameter.
pub fn loss_and_grad(
    model: &FusionModel,
    params: &[f64],
    input: &MultiViewInput,
    target: usize,
    use_scene: bool,
) -> (f64, Vec<f64>) {
    let d = model.d();
    let fwd = multiview_forward(model, params, input, use_scene);
    let [z0, z1] = fwd.scores;
    let m = z0.max(z1);
    let lse = m + ((z0 - m).exp() + (z1 - m).exp()).ln();
    let loss = lse - fwd.scores[target];
    let mut dz = [(z0 - lse).exp(), (z1 - lse).exp()];
    dz[target] -= 1.0;

    let mut grad = vec![0.0; model.num_params()];
    let w_out = model.w_out();
    let mut d_features = vec![0.0; 2 * d];
    for c in 0..2 {
        grad[model.b_out() + c] = dz[c];
        for k in 0..2 * d {
            grad[w_out + c * 2 * d + k] = dz[c] * fwd.features[k];
            d_features[k] += dz[c] * params[w_out + c * 2 * d + k];
        }
    }
    let views = [
        (Some(&fwd.dial), Some(&fwd.dial_cache), &input.dial_rows, model.w_dial(), &d_features[..d]),
        (fwd.scene.as_ref(), fwd.scene_cache.as_ref(), &input.scene_rows, model.w_scene(), &d_features[d..]),
    ];
    for (state, cache, rows, head, d_view) in views {
        let (Some(state), Some(cache)) = (state, cache) else { continue };
        let Some(attn) = &state.attention else { continue };
        let g = attention_backward(&state.hidden, &params[head..head + d], attn, &state.mask, d_view);
        for k in 0..d {
            grad[head + k] += g.d_w[k];
        }
        grad[head + d] += g.d_b;
        let n_enc = model.n_enc();
        model.encoder.backward(&params[..n_enc], rows, cache, &g.d_hidden, &mut grad[..n_enc]);
    }
    (loss, grad)
}
