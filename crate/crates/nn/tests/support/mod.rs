//! Independent oracles for the tensor engine: central finite differences
//! and a direct nested-loop convolution. Nothing here calls into the
//! engine's kernels.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Central-difference gradient of a scalar function at `x`.
pub fn numeric_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest element-wise relative error between an analytic and a numeric
/// gradient. The denominator is floored at 1e-3 of the gradient's largest
/// magnitude so entries that are zero up to round-off do not dominate.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-3 * scale).max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Direct cross-correlation with zero "same" padding, stride 1.
/// `x: [n][c][h][w]`, `weight: [o][c][k][k]`, summed in (c, ky, kx) order.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv2d(
    x: &[f64],
    weight: &[f64],
    bias: &[f64],
    n: usize,
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    k: usize,
) -> Vec<f64> {
    let pad = k as isize / 2;
    let mut out = vec![0.0; n * c_out * h * w];
    for b in 0..n {
        for o in 0..c_out {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = bias[o];
                    for c in 0..c_in {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = y as isize + ky as isize - pad;
                                let ix = xx as isize + kx as isize - pad;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xv = x[((b * c_in + c) * h + iy as usize) * w + ix as usize];
                                let wv = weight[((o * c_in + c) * k + ky) * k + kx];
                                acc += xv * wv;
                            }
                        }
                    }
                    out[((b * c_out + o) * h + y) * w + xx] = acc;
                }
            }
        }
    }
    out
}

/// Sum of |x*w| contributions for each output; the natural scale for the
/// relative error of a convolution output.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv2d_magnitude(
    x: &[f64],
    weight: &[f64],
    bias: &[f64],
    n: usize,
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    k: usize,
) -> Vec<f64> {
    let ax: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    let aw: Vec<f64> = weight.iter().map(|v| v.abs()).collect();
    let ab: Vec<f64> = bias.iter().map(|v| v.abs()).collect();
    naive_conv2d(&ax, &aw, &ab, n, c_in, c_out, h, w, k)
}

/// Random values whose pairwise gaps inside every group exceed `margin`,
/// so max-type ops are differentiable there under a step of `FD_STEP`.
pub fn untied(rng: &mut ChaCha8Rng, len: usize, margin: f64) -> Vec<f64> {
    // Distinct multiples of `margin*4`, shuffled, plus small jitter.
    let mut v: Vec<f64> = (0..len).map(|i| i as f64 * margin * 4.0).collect();
    for i in (1..len).rev() {
        let j = rng.gen_range(0..=i);
        v.swap(i, j);
    }
    let shift = len as f64 * margin * 2.0;
    v.iter()
        .map(|x| x - shift + rng.gen_range(-margin..margin))
        .collect()
}
pub mod gradsuite;
