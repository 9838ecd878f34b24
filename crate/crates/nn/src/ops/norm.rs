use crate::error::{NnError, Result};
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Values saved by the train-mode forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    shape: [usize; 4],
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

impl BatchNormCache {
    /// Normalized (pre-affine) activations.
    pub fn normalized(&self) -> &[f64] {
        &self.xhat
    }
}

/// Per-channel batch statistics from a train-mode pass.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (1/M) variance used for normalization.
    pub var: Vec<f64>,
    /// Unbiased (1/(M-1)) variance, the value folded into running stats.
    pub var_unbiased: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads {
    pub input: Tensor,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

fn check_affine(c: usize, gamma: &[f64], beta: &[f64]) -> Result<()> {
    for (axis, len) in [("gamma", gamma.len()), ("beta", beta.len())] {
        if len != c {
            return Err(NnError::Shape {
                op: "batchnorm2d",
                axis,
                expected: c,
                found: len,
            });
        }
    }
    Ok(())
}

/// Normalizes each channel over `(N, H, W)` with the batch's own statistics.
pub fn batchnorm2d_train(
    x: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> Result<(Tensor, BatchNormCache, BatchStats)> {
    let (n, c, h, w) = x.dims4("batchnorm2d")?;
    check_affine(c, gamma, beta)?;
    let hw = h * w;
    let m = n * hw;
    if m < 2 {
        return Err(NnError::DegenerateBatch);
    }
    let data = x.data();
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let mut s = 0.0;
        for b in 0..n {
            s += data[(b * c + ch) * hw..][..hw].iter().sum::<f64>();
        }
        let mu = s / m as f64;
        let mut ss = 0.0;
        for b in 0..n {
            ss += data[(b * c + ch) * hw..][..hw]
                .iter()
                .map(|v| (v - mu) * (v - mu))
                .sum::<f64>();
        }
        mean[ch] = mu;
        var[ch] = ss / m as f64;
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut xhat = vec![0.0; data.len()];
    let mut out = vec![0.0; data.len()];
    for b in 0..n {
        for ch in 0..c {
            let base = (b * c + ch) * hw;
            for i in base..base + hw {
                let z = (data[i] - mean[ch]) * inv_std[ch];
                xhat[i] = z;
                out[i] = gamma[ch] * z + beta[ch];
            }
        }
    }
    let var_unbiased = var.iter().map(|v| v * m as f64 / (m - 1) as f64).collect();
    Ok((
        Tensor::new(x.shape(), out)?,
        BatchNormCache {
            shape: [n, c, h, w],
            xhat,
            inv_std,
        },
        BatchStats {
            mean,
            var,
            var_unbiased,
        },
    ))
}

/// Normalizes with stored running statistics.
pub fn batchnorm2d_infer(
    x: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
    eps: f64,
) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4("batchnorm2d")?;
    check_affine(c, gamma, beta)?;
    check_affine(c, running_mean, running_var)?;
    let hw = h * w;
    let mut out = x.data().to_vec();
    for b in 0..n {
        for ch in 0..c {
            let scale = gamma[ch] / (running_var[ch] + eps).sqrt();
            let shift = beta[ch] - running_mean[ch] * scale;
            for v in &mut out[(b * c + ch) * hw..][..hw] {
                *v = *v * scale + shift;
            }
        }
    }
    Tensor::new(x.shape(), out)
}

/// Exact backward of [`batchnorm2d_train`].
pub fn batchnorm2d_backward(
    cache: &BatchNormCache,
    gamma: &[f64],
    dy: &Tensor,
) -> Result<BatchNormGrads> {
    let [n, c, h, w] = cache.shape;
    dy.expect_shape("batchnorm2d_backward", &cache.shape)?;
    let hw = h * w;
    let m = (n * hw) as f64;
    let g = dy.data();
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for b in 0..n {
        for ch in 0..c {
            let base = (b * c + ch) * hw;
            for i in base..base + hw {
                dbeta[ch] += g[i];
                dgamma[ch] += g[i] * cache.xhat[i];
            }
        }
    }
    let mut dx = vec![0.0; g.len()];
    for b in 0..n {
        for ch in 0..c {
            let k = gamma[ch] * cache.inv_std[ch] / m;
            let base = (b * c + ch) * hw;
            for i in base..base + hw {
                dx[i] = k * (m * g[i] - dbeta[ch] - cache.xhat[i] * dgamma[ch]);
            }
        }
    }
    Ok(BatchNormGrads {
        input: Tensor::new(&cache.shape, dx)?,
        gamma: dgamma,
        beta: dbeta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_mode_standardizes_each_channel() {
        let data: Vec<f64> = (0..2 * 3 * 4 * 5)
            .map(|i| ((i * 7919) % 97) as f64 * 0.3 - 4.0)
            .collect();
        let x = Tensor::new(&[2, 3, 4, 5], data).unwrap();
        let (_, cache, _) = batchnorm2d_train(&x, &[1.0; 3], &[0.0; 3], BN_EPS).unwrap();
        for ch in 0..3 {
            let vals: Vec<f64> = (0..2)
                .flat_map(|b| cache.normalized()[(b * 3 + ch) * 20..][..20].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / 40.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 40.0;
            assert!(mean.abs() < 1e-10);
            // eps shifts the variance slightly below one.
            let sigma2 = {
                let raw: Vec<f64> = (0..2)
                    .flat_map(|b| x.data()[(b * 3 + ch) * 20..][..20].to_vec())
                    .collect();
                let mu = raw.iter().sum::<f64>() / 40.0;
                raw.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / 40.0
            };
            assert!((var - sigma2 / (sigma2 + BN_EPS)).abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn infer_with_unit_stats_divides_by_sqrt_one_plus_eps() {
        let x = Tensor::new(&[1, 1, 1, 3], vec![-2.0, 0.5, 3.0]).unwrap();
        let y = batchnorm2d_infer(&x, &[1.0], &[0.0], &[0.0], &[1.0], BN_EPS).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert_eq!(*a, b / (1.0 + BN_EPS).sqrt());
        }
    }

    #[test]
    fn single_value_batch_is_degenerate() {
        let x = Tensor::zeros(&[1, 4, 1, 1]);
        assert!(matches!(
            batchnorm2d_train(&x, &[1.0; 4], &[0.0; 4], BN_EPS),
            Err(NnError::DegenerateBatch)
        ));
    }
}
