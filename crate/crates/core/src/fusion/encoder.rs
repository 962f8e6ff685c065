//! Row encoder contract and the small reference encoder.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::segment::Rows;

/// Hidden states laid out row-major as `rows × len × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hidden {
    pub rows: usize,
    pub len: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Hidden {
    pub fn zeros(rows: usize, len: usize, dim: usize) -> Self {
        Hidden { rows, len, dim, data: vec![0.0; rows * len * dim] }
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        (i * self.len + j) * self.dim
    }

    pub fn at(&self, i: usize, j: usize) -> &[f64] {
        let o = self.offset(i, j);
        &self.data[o..o + self.dim]
    }

    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let o = self.offset(i, j);
        &mut self.data[o..o + self.dim]
    }
}

/// Maps `R` token rows of length `L` to `R × L × d` hidden states. Rows are
/// encoded independently; masked positions produce zero states.
pub trait RowEncoder {
    type Cache;

    fn hidden_size(&self) -> usize;
    fn num_params(&self) -> usize;
    fn init_params(&self, rng: &mut impl Rng, scale: f64) -> Vec<f64>;
    fn encode(&self, params: &[f64], rows: &Rows) -> (Hidden, Self::Cache);
    /// Accumulates into `grad` the gradient of a loss whose gradient with
    /// respect to the hidden states is `d_hidden`.
    fn backward(&self, params: &[f64], rows: &Rows, cache: &Self::Cache, d_hidden: &Hidden, grad: &mut [f64]);
    /// Multiply-add count of one `encode` call.
    fn op_count(&self, rows: &Rows) -> u64;
}

/// Token embedding plus position embedding, mixed with the mean of a local
/// window and passed through one tanh layer:
///
/// `h_j = tanh(A x_j + B mean(x_{j-k..=j+k}) + c)` with `x_j = E[t_j] + P[j]`,
/// the window mean taken over unmasked positions only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MixingEncoder {
    pub vocab_size: usize,
    pub max_len: usize,
    pub hidden: usize,
    pub window: usize,
}

pub struct MixingCache {
    x: Hidden,
    m: Hidden,
    h: Hidden,
}

impl MixingEncoder {
    fn emb(&self) -> usize {
        0
    }
    fn pos(&self) -> usize {
        self.vocab_size * self.hidden
    }
    fn mat_a(&self) -> usize {
        self.pos() + self.max_len * self.hidden
    }
    fn mat_b(&self) -> usize {
        self.mat_a() + self.hidden * self.hidden
    }
    fn bias(&self) -> usize {
        self.mat_b() + self.hidden * self.hidden
    }

    fn window<'m>(&self, mask: &'m [bool], j: usize) -> impl Iterator<Item = usize> + 'm {
        let lo = j.saturating_sub(self.window);
        let hi = (j + self.window).min(mask.len() - 1);
        (lo..=hi).filter(move |&k| mask[k])
    }
}

impl RowEncoder for MixingEncoder {
    type Cache = MixingCache;

    fn hidden_size(&self) -> usize {
        self.hidden
    }

    fn num_params(&self) -> usize {
        self.bias() + self.hidden
    }

    fn init_params(&self, rng: &mut impl Rng, scale: f64) -> Vec<f64> {
        let normal = Normal::new(0.0, scale).expect("finite scale");
        let mut p: Vec<f64> = (0..self.num_params()).map(|_| normal.sample(rng)).collect();
        for v in &mut p[self.bias()..] {
            *v = 0.0;
        }
        p
    }

    fn encode(&self, params: &[f64], rows: &Rows) -> (Hidden, MixingCache) {
        let d = self.hidden;
        let (r, l) = (rows.n_rows(), rows.row_len());
        assert!(l <= self.max_len, "row length {l} exceeds encoder max_len {}", self.max_len);
        let mut x = Hidden::zeros(r, l, d);
        let mut m = Hidden::zeros(r, l, d);
        let mut h = Hidden::zeros(r, l, d);
        let a = &params[self.mat_a()..self.mat_b()];
        let b = &params[self.mat_b()..self.bias()];
        let c = &params[self.bias()..self.bias() + d];
        for i in 0..r {
            for j in 0..l {
                if !rows.mask[i][j] {
                    continue;
                }
                let tok = rows.ids[i][j] as usize;
                let e = &params[self.emb() + tok * d..self.emb() + (tok + 1) * d];
                let p = &params[self.pos() + j * d..self.pos() + (j + 1) * d];
                for (k, v) in x.at_mut(i, j).iter_mut().enumerate() {
                    *v = e[k] + p[k];
                }
            }
            for j in 0..l {
                if !rows.mask[i][j] {
                    continue;
                }
                let win: Vec<usize> = self.window(&rows.mask[i], j).collect();
                let inv = 1.0 / win.len() as f64;
                let mut mean = vec![0.0; d];
                for &k in &win {
                    for (acc, v) in mean.iter_mut().zip(x.at(i, k)) {
                        *acc += v;
                    }
                }
                mean.iter_mut().for_each(|v| *v *= inv);
                let xj = x.at(i, j).to_vec();
                let hj = h.at_mut(i, j);
                for o in 0..d {
                    let mut u = c[o];
                    for k in 0..d {
                        u += a[o * d + k] * xj[k] + b[o * d + k] * mean[k];
                    }
                    hj[o] = u.tanh();
                }
                m.at_mut(i, j).copy_from_slice(&mean);
            }
        }
        let out = h.clone();
        (out, MixingCache { x, m, h })
    }

    fn backward(&self, params: &[f64], rows: &Rows, cache: &MixingCache, d_hidden: &Hidden, grad: &mut [f64]) {
        let d = self.hidden;
        let (r, l) = (rows.n_rows(), rows.row_len());
        let a = &params[self.mat_a()..self.mat_b()];
        let b = &params[self.mat_b()..self.bias()];
        let mut du = vec![0.0; d];
        for i in 0..r {
            let mut dx = Hidden::zeros(1, l, d);
            for j in 0..l {
                if !rows.mask[i][j] {
                    continue;
                }
                let hj = cache.h.at(i, j);
                let dh = d_hidden.at(i, j);
                for o in 0..d {
                    du[o] = dh[o] * (1.0 - hj[o] * hj[o]);
                }
                let xj = cache.x.at(i, j);
                let mj = cache.m.at(i, j);
                let (ga, rest) = grad[self.mat_a()..].split_at_mut(d * d);
                let (gb, rest) = rest.split_at_mut(d * d);
                let gc = &mut rest[..d];
                let mut dm = vec![0.0; d];
                for o in 0..d {
                    let g = du[o];
                    if g == 0.0 {
                        continue;
                    }
                    gc[o] += g;
                    for k in 0..d {
                        ga[o * d + k] += g * xj[k];
                        gb[o * d + k] += g * mj[k];
                        dx.at_mut(0, j)[k] += a[o * d + k] * g;
                        dm[k] += b[o * d + k] * g;
                    }
                }
                let win: Vec<usize> = self.window(&rows.mask[i], j).collect();
                let inv = 1.0 / win.len() as f64;
                for &k in &win {
                    for (acc, v) in dx.at_mut(0, k).iter_mut().zip(&dm) {
                        *acc += v * inv;
                    }
                }
            }
            for j in 0..l {
                if !rows.mask[i][j] {
                    continue;
                }
                let tok = rows.ids[i][j] as usize;
                let g = dx.at(0, j);
                for k in 0..d {
                    grad[self.emb() + tok * d + k] += g[k];
                    grad[self.pos() + j * d + k] += g[k];
                }
            }
        }
    }

    fn op_count(&self, rows: &Rows) -> u64 {
        let d = self.hidden as u64;
        let mut ops = 0u64;
        for mask in &rows.mask {
            for j in 0..mask.len() {
                if mask[j] {
                    let w = self.window(mask, j).count() as u64;
                    ops += d + w * d + 2 * d * d;
                }
            }
        }
        ops
    }
}
