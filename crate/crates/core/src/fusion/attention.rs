//! Joint softmax attention over every (row, token) position of a view.

use super::encoder::Hidden;
use super::FusionError;

/// Attention head output for one view.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    /// `R × L` scores `h·w + b`; masked positions hold `-inf`.
    pub logits: Vec<Vec<f64>>,
    /// `R × L` weights, zero at masked positions, summing to one.
    pub alpha: Vec<Vec<f64>>,
    pub h_view: Vec<f64>,
}

/// Sums in ascending order, so the result does not depend on the order in
/// which rows were laid out.
fn ordered_sum(mut v: Vec<f64>) -> f64 {
    v.sort_unstable_by(f64::total_cmp);
    v.iter().sum()
}

/// Scores every unmasked hidden state with the linear head `(w, b)`, takes
/// one softmax across all rows and tokens together, and returns the
/// weighted sum of hidden states.
pub fn fuse_attention(hidden: &Hidden, w: &[f64], b: f64, mask: &[Vec<bool>]) -> Result<Attention, FusionError> {
    let (r, l, d) = (hidden.rows, hidden.len, hidden.dim);
    assert_eq!(w.len(), d, "attention head size must match hidden size");
    let mut logits = vec![vec![f64::NEG_INFINITY; l]; r];
    let mut max = f64::NEG_INFINITY;
    for i in 0..r {
        for j in 0..l {
            if mask[i][j] {
                let s = hidden.at(i, j).iter().zip(w).map(|(h, w)| h * w).sum::<f64>() + b;
                logits[i][j] = s;
                max = max.max(s);
            }
        }
    }
    if max == f64::NEG_INFINITY {
        return Err(FusionError::AllMasked);
    }
    let mut alpha = vec![vec![0.0; l]; r];
    let mut exps = Vec::new();
    for i in 0..r {
        for j in 0..l {
            if mask[i][j] {
                alpha[i][j] = (logits[i][j] - max).exp();
                exps.push(alpha[i][j]);
            }
        }
    }
    let z = ordered_sum(exps);
    let mut terms = vec![Vec::new(); d];
    for i in 0..r {
        for j in 0..l {
            if mask[i][j] {
                alpha[i][j] /= z;
                for (t, h) in terms.iter_mut().zip(hidden.at(i, j)) {
                    t.push(alpha[i][j] * h);
                }
            }
        }
    }
    let h_view = terms.into_iter().map(ordered_sum).collect();
    Ok(Attention { logits, alpha, h_view })
}

/// Gradients of the attention block given `d_view = dL/dh_view`.
pub struct AttentionGrad {
    pub d_hidden: Hidden,
    pub d_w: Vec<f64>,
    pub d_b: f64,
}

pub fn attention_backward(hidden: &Hidden, w: &[f64], attn: &Attention, mask: &[Vec<bool>], d_view: &[f64]) -> AttentionGrad {
    let (r, l, d) = (hidden.rows, hidden.len, hidden.dim);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    // dL/dalpha_ij = d_view · H_ij; softmax Jacobian gives dL/dlogit_ij
    let mut d_alpha = vec![vec![0.0; l]; r];
    let mut weighted = 0.0;
    for i in 0..r {
        for j in 0..l {
            if mask[i][j] {
                d_alpha[i][j] = dot(d_view, hidden.at(i, j));
                weighted += attn.alpha[i][j] * d_alpha[i][j];
            }
        }
    }
    let mut d_hidden = Hidden::zeros(r, l, d);
    let mut d_w = vec![0.0; d];
    let mut d_b = 0.0;
    for i in 0..r {
        for j in 0..l {
            if !mask[i][j] {
                continue;
            }
            let a = attn.alpha[i][j];
            let d_logit = a * (d_alpha[i][j] - weighted);
            d_b += d_logit;
            let h = hidden.at(i, j);
            for k in 0..d {
                d_w[k] += d_logit * h[k];
            }
            for (k, g) in d_hidden.at_mut(i, j).iter_mut().enumerate() {
                *g = a * d_view[k] + d_logit * w[k];
            }
        }
    }
    AttentionGrad { d_hidden, d_w, d_b }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hidden(states: &[&[f64]]) -> Hidden {
        let d = states[0].len();
        Hidden { rows: 1, len: states.len(), dim: d, data: states.iter().flat_map(|s| s.iter().copied()).collect() }
    }

    #[test]
    fn equal_logits_give_uniform_weights() {
        let h = hidden(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 0.0]]);
        let a = fuse_attention(&h, &[0.0, 0.0], 0.7, &[vec![true; 3]]).unwrap();
        for &x in &a.alpha[0] {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((a.h_view[0] - 3.0).abs() < 1e-12);
        assert!((a.h_view[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_unmasked_position() {
        let h = hidden(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let a = fuse_attention(&h, &[0.3, -0.2], 0.0, &[vec![false, true]]).unwrap();
        assert_eq!(a.alpha[0], vec![0.0, 1.0]);
        assert_eq!(a.h_view, vec![3.0, 4.0]);
    }

    #[test]
    fn two_position_hand_example() {
        // logits (ln 3, 0) from w = (ln 3, 0) on states (1,0) and (0,1)
        let h = hidden(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let a = fuse_attention(&h, &[3f64.ln(), 0.0], 0.0, &[vec![true, true]]).unwrap();
        assert!((a.alpha[0][0] - 0.75).abs() < 1e-12);
        assert!((a.alpha[0][1] - 0.25).abs() < 1e-12);
        assert!((a.h_view[0] - 0.75).abs() < 1e-12);
        assert!((a.h_view[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn all_masked_is_an_error() {
        let h = hidden(&[&[1.0]]);
        assert!(matches!(fuse_attention(&h, &[1.0], 0.0, &[vec![false]]), Err(FusionError::AllMasked)));
    }

    use proptest::prelude::*;

    fn state() -> impl Strategy<Value = (Hidden, Vec<Vec<bool>>, Vec<f64>, f64)> {
        (1usize..4, 1usize..5, 1usize..4).prop_flat_map(|(r, l, d)| {
            (
                proptest::collection::vec(-3.0f64..3.0, r * l * d),
                proptest::collection::vec(proptest::collection::vec(any::<bool>(), l), r),
                proptest::collection::vec(-2.0f64..2.0, d),
                -1.0f64..1.0,
                0..r * l,
            )
                .prop_map(move |(data, mut mask, w, b, keep)| {
                    mask[keep / l][keep % l] = true;
                    (Hidden { rows: r, len: l, dim: d, data }, mask, w, b)
                })
        })
    }

    proptest! {
        #[test]
        fn weights_normalize_and_summary_is_convex((h, mask, w, b) in state()) {
            let a = fuse_attention(&h, &w, b, &mask).unwrap();
            let mut total = 0.0;
            for i in 0..h.rows {
                for j in 0..h.len {
                    prop_assert!(a.alpha[i][j] >= 0.0);
                    if !mask[i][j] {
                        prop_assert_eq!(a.alpha[i][j], 0.0);
                    }
                    total += a.alpha[i][j];
                }
            }
            prop_assert!((total - 1.0).abs() < 1e-9);
            for k in 0..h.dim {
                let vals = (0..h.rows).flat_map(|i| (0..h.len).map(move |j| (i, j)))
                    .filter(|&(i, j)| mask[i][j]).map(|(i, j)| h.at(i, j)[k]);
                let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                prop_assert!(a.h_view[k] >= lo - 1e-12 && a.h_view[k] <= hi + 1e-12);
            }
        }

        #[test]
        fn reversing_rows_permutes_weights_only((h, mask, w, b) in state()) {
            let a = fuse_attention(&h, &w, b, &mask).unwrap();
            let mut data = Vec::with_capacity(h.data.len());
            for i in (0..h.rows).rev() {
                for j in 0..h.len {
                    data.extend_from_slice(h.at(i, j));
                }
            }
            let hr = Hidden { data, ..h.clone() };
            let mr: Vec<Vec<bool>> = mask.iter().rev().cloned().collect();
            let ar = fuse_attention(&hr, &w, b, &mr).unwrap();
            let rev: Vec<Vec<f64>> = a.alpha.iter().rev().cloned().collect();
            prop_assert_eq!(ar.alpha, rev);
            prop_assert_eq!(ar.h_view, a.h_view);
        }
    }
}
