use crate::error::{NnError, Result};
use crate::tensor::Tensor;

/// Mean squared error over all elements; returns the loss and `dL/dpred`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    target.expect_shape("mse_loss", pred.shape())?;
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let d = p - t;
        loss += d * d;
        grad.push(2.0 * d / n);
    }
    Ok((loss / n, Tensor::new(pred.shape(), grad)?))
}

/// Channel-axis softmax of `[N, K, H, W]` logits.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let (n, k, h, w) = logits.dims4("softmax")?;
    let hw = h * w;
    let x = logits.data();
    let mut out = vec![0.0; x.len()];
    for b in 0..n {
        for p in 0..hw {
            let at = |c: usize| (b * k + c) * hw + p;
            let max = (0..k).map(|c| x[at(c)]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for c in 0..k {
                let e = (x[at(c)] - max).exp();
                out[at(c)] = e;
                z += e;
            }
            for c in 0..k {
                out[at(c)] /= z;
            }
        }
    }
    Tensor::new(logits.shape(), out)
}

/// Softmax cross-entropy of `[N, K, H, W]` logits against `N*H*W` integer
/// labels, mean-reduced. With `class_weights` the reduction is the weighted
/// mean `sum(w_y * nll) / sum(w_y)`.
pub fn softmax_ce_loss(
    logits: &Tensor,
    labels: &[usize],
    class_weights: Option<&[f64]>,
) -> Result<(f64, Tensor)> {
    let (n, k, h, w) = logits.dims4("softmax_ce_loss")?;
    let hw = h * w;
    if labels.len() != n * hw {
        return Err(NnError::Shape {
            op: "softmax_ce_loss",
            axis: "labels",
            expected: n * hw,
            found: labels.len(),
        });
    }
    if let Some(cw) = class_weights {
        if cw.len() != k {
            return Err(NnError::Shape {
                op: "softmax_ce_loss",
                axis: "class_weights",
                expected: k,
                found: cw.len(),
            });
        }
    }
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(NnError::Label {
                n: i / hw,
                h: (i % hw) / w,
                w: i % w,
                label: l,
                classes: k,
            });
        }
    }
    let probs = softmax(logits)?;
    let p = probs.data();
    let weight = |l: usize| class_weights.map_or(1.0, |cw| cw[l]);
    let total: f64 = labels.iter().map(|&l| weight(l)).sum();
    let mut loss = 0.0;
    let mut grad = p.to_vec();
    for b in 0..n {
        for q in 0..hw {
            let l = labels[b * hw + q];
            let wl = weight(l) / total;
            let at = |c: usize| (b * k + c) * hw + q;
            loss -= wl * p[at(l)].max(f64::MIN_POSITIVE).ln();
            for c in 0..k {
                grad[at(c)] *= wl;
            }
            grad[at(l)] -= wl;
        }
    }
    Ok((loss, Tensor::new(logits.shape(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_of_equal_tensors_is_zero() {
        let x = Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let (l, g) = mse_loss(&x, &x).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_class_uniform_logits_give_ln2() {
        let logits = Tensor::zeros(&[1, 2, 1, 1]);
        let (l, _) = softmax_ce_loss(&logits, &[0], None).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn label_error_reports_position() {
        let logits = Tensor::zeros(&[1, 4, 2, 3]);
        let mut labels = vec![0; 6];
        labels[4] = 4;
        let err = softmax_ce_loss(&logits, &labels, None).unwrap_err();
        assert!(matches!(
            err,
            NnError::Label {
                n: 0,
                h: 1,
                w: 1,
                label: 4,
                classes: 4
            }
        ));
    }

    #[test]
    fn uniform_weights_match_unweighted() {
        let logits = Tensor::new(&[1, 3, 1, 2], vec![0.1, -0.4, 2.0, 0.3, -1.0, 0.7]).unwrap();
        let (a, ga) = softmax_ce_loss(&logits, &[2, 0], None).unwrap();
        let (b, gb) = softmax_ce_loss(&logits, &[2, 0], Some(&[3.0, 3.0, 3.0])).unwrap();
        assert!((a - b).abs() < 1e-15);
        for (x, y) in ga.data().iter().zip(gb.data()) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}
