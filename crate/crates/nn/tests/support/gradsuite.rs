//! Finite-difference checks for every differentiable op. Each `check_*`
//! builds one random instance from `seed` and returns the largest relative
//! error between the analytic and the central-difference gradient.
#![allow(dead_code)]

use l3scan_nn::ops;
use l3scan_nn::Tensor;
use rand::Rng;

use super::{dot, max_rel_err, numeric_grad, rng, uniform, untied, FD_STEP};

fn t(shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::new(shape, data).unwrap()
}

pub fn check_conv2d(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.gen_range(1..=2);
    let c_in = r.gen_range(1..=3);
    let c_out = r.gen_range(1..=3);
    let h = r.gen_range(2..=6);
    let w = r.gen_range(2..=6);
    let k = if r.gen_bool(0.75) { 3 } else { 1 };
    let xs = [n, c_in, h, w];
    let ws = [c_out, c_in, k, k];
    let x = uniform(&mut r, xs.iter().product(), -1.0, 1.0);
    let wt = uniform(&mut r, ws.iter().product(), -1.0, 1.0);
    let b = uniform(&mut r, c_out, -1.0, 1.0);
    let proj = uniform(&mut r, n * c_out * h * w, -1.0, 1.0);
    let loss = |x: &[f64], wt: &[f64], b: &[f64]| {
        let y = ops::conv2d(&t(&xs, x.to_vec()), &t(&ws, wt.to_vec()), &t(&[c_out], b.to_vec()))
            .unwrap();
        dot(y.data(), &proj)
    };
    let g = ops::conv2d_backward(
        &t(&xs, x.clone()),
        &t(&ws, wt.clone()),
        &t(&[c_out], b.clone()),
        &t(&[n, c_out, h, w], proj.clone()),
    )
    .unwrap();
    let nx = numeric_grad(|v| loss(v, &wt, &b), &x, FD_STEP);
    let nw = numeric_grad(|v| loss(&x, v, &b), &wt, FD_STEP);
    let nb = numeric_grad(|v| loss(&x, &wt, v), &b, FD_STEP);
    max_rel_err(g.input.data(), &nx)
        .max(max_rel_err(g.weight.data(), &nw))
        .max(max_rel_err(g.bias.data(), &nb))
}

pub fn check_batchnorm2d(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.gen_range(1..=3);
    let c = r.gen_range(1..=3);
    let h = r.gen_range(2..=4);
    let w = r.gen_range(1..=4);
    let shape = [n, c, h, w];
    let x = uniform(&mut r, shape.iter().product(), -2.0, 2.0);
    let gamma = uniform(&mut r, c, 0.5, 1.5);
    let beta = uniform(&mut r, c, -0.5, 0.5);
    let proj = uniform(&mut r, x.len(), -1.0, 1.0);
    let loss = |x: &[f64], g: &[f64], b: &[f64]| {
        let (y, _, _) = ops::batchnorm2d_train(&t(&shape, x.to_vec()), g, b, ops::BN_EPS).unwrap();
        dot(y.data(), &proj)
    };
    let (_, cache, _) =
        ops::batchnorm2d_train(&t(&shape, x.clone()), &gamma, &beta, ops::BN_EPS).unwrap();
    let g = ops::batchnorm2d_backward(&cache, &gamma, &t(&shape, proj.clone())).unwrap();
    // Normalization sums many terms; a wider step keeps round-off below
    // the O(h^2) truncation error.
    let h = 1e-4;
    let nx = numeric_grad(|v| loss(v, &gamma, &beta), &x, h);
    let ng = numeric_grad(|v| loss(&x, v, &beta), &gamma, h);
    let nb = numeric_grad(|v| loss(&x, &gamma, v), &beta, h);
    max_rel_err(g.input.data(), &nx)
        .max(max_rel_err(&g.gamma, &ng))
        .max(max_rel_err(&g.beta, &nb))
}

pub fn check_relu(seed: u64) -> f64 {
    let mut r = rng(seed);
    let len = r.gen_range(4..=40);
    // keep every input at least 1e-3 away from the kink
    let x: Vec<f64> = (0..len)
        .map(|_| {
            let m = r.gen_range(1e-3..2.0);
            if r.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    let proj = uniform(&mut r, len, -1.0, 1.0);
    let loss = |x: &[f64]| dot(ops::relu(&t(&[len], x.to_vec())).data(), &proj);
    let y = ops::relu(&t(&[len], x.clone()));
    let g = ops::relu_backward(&y, &t(&[len], proj.clone())).unwrap();
    max_rel_err(g.data(), &numeric_grad(loss, &x, FD_STEP))
}

pub fn check_sigmoid(seed: u64) -> f64 {
    let mut r = rng(seed);
    let len = r.gen_range(4..=40);
    let x = uniform(&mut r, len, -6.0, 6.0);
    let proj = uniform(&mut r, len, -1.0, 1.0);
    let loss = |x: &[f64]| dot(ops::sigmoid(&t(&[len], x.to_vec())).data(), &proj);
    let y = ops::sigmoid(&t(&[len], x.clone()));
    let g = ops::sigmoid_backward(&y, &t(&[len], proj.clone())).unwrap();
    max_rel_err(g.data(), &numeric_grad(loss, &x, FD_STEP))
}

pub fn check_maxpool2d(seed: u64) -> f64 {
    let mut r = rng(seed);
    let shape = [
        r.gen_range(1..=2),
        r.gen_range(1..=2),
        r.gen_range(1..=7),
        r.gen_range(1..=7),
    ];
    let len: usize = shape.iter().product();
    let x = untied(&mut r, len, 1e-3);
    let (y, am) = ops::maxpool2d(&t(&shape, x.clone())).unwrap();
    let proj = uniform(&mut r, y.len(), -1.0, 1.0);
    let loss = |x: &[f64]| dot(ops::maxpool2d(&t(&shape, x.to_vec())).unwrap().0.data(), &proj);
    let g = ops::maxpool2d_backward(&am, &t(y.shape(), proj.clone())).unwrap();
    max_rel_err(g.data(), &numeric_grad(loss, &x, FD_STEP))
}

pub fn check_upsample(seed: u64) -> f64 {
    let mut r = rng(seed);
    let shape = [
        r.gen_range(1..=2),
        r.gen_range(1..=3),
        r.gen_range(1..=5),
        r.gen_range(1..=5),
    ];
    let x = uniform(&mut r, shape.iter().product(), -1.0, 1.0);
    let y = ops::upsample_nearest(&t(&shape, x.clone())).unwrap();
    let proj = uniform(&mut r, y.len(), -1.0, 1.0);
    let loss = |x: &[f64]| dot(ops::upsample_nearest(&t(&shape, x.to_vec())).unwrap().data(), &proj);
    let g = ops::upsample_nearest_backward(&t(y.shape(), proj.clone())).unwrap();
    max_rel_err(g.data(), &numeric_grad(loss, &x, FD_STEP))
}

pub fn check_global_horizontal_maxpool(seed: u64) -> f64 {
    let mut r = rng(seed);
    let shape = [
        r.gen_range(1..=2),
        r.gen_range(1..=2),
        r.gen_range(1..=6),
        r.gen_range(1..=8),
    ];
    let len: usize = shape.iter().product();
    let x = untied(&mut r, len, 1e-3);
    let (y, am) = ops::global_horizontal_maxpool(&t(&shape, x.clone())).unwrap();
    let proj = uniform(&mut r, y.len(), -1.0, 1.0);
    let loss = |x: &[f64]| {
        dot(
            ops::global_horizontal_maxpool(&t(&shape, x.to_vec())).unwrap().0.data(),
            &proj,
        )
    };
    let g = ops::global_horizontal_maxpool_backward(&am, &t(y.shape(), proj.clone())).unwrap();
    max_rel_err(g.data(), &numeric_grad(loss, &x, FD_STEP))
}

pub fn check_mse(seed: u64) -> f64 {
    let mut r = rng(seed);
    let len = r.gen_range(1..=30);
    let p = uniform(&mut r, len, -1.0, 1.0);
    let target = uniform(&mut r, len, -1.0, 1.0);
    let tt = t(&[len], target.clone());
    let loss = |p: &[f64]| ops::mse_loss(&t(&[len], p.to_vec()), &tt).unwrap().0;
    let (_, g) = ops::mse_loss(&t(&[len], p.clone()), &tt).unwrap();
    max_rel_err(g.data(), &numeric_grad(loss, &p, FD_STEP))
}

pub fn check_softmax_ce(seed: u64) -> f64 {
    let mut r = rng(seed);
    let shape = [
        r.gen_range(1..=2),
        r.gen_range(2..=4),
        r.gen_range(1..=4),
        r.gen_range(1..=4),
    ];
    let [n, k, h, w] = shape;
    let x = uniform(&mut r, shape.iter().product(), -3.0, 3.0);
    let labels: Vec<usize> = (0..n * h * w).map(|_| r.gen_range(0..k)).collect();
    let weights = if r.gen_bool(0.5) {
        Some(uniform(&mut r, k, 0.2, 3.0))
    } else {
        None
    };
    let loss = |x: &[f64]| {
        ops::softmax_ce_loss(&t(&shape, x.to_vec()), &labels, weights.as_deref())
            .unwrap()
            .0
    };
    let (_, g) = ops::softmax_ce_loss(&t(&shape, x.clone()), &labels, weights.as_deref()).unwrap();
    max_rel_err(g.data(), &numeric_grad(loss, &x, FD_STEP))
}

/// `(name, check)` for every differentiable op.
pub const SUITE: &[(&str, fn(u64) -> f64)] = &[
    ("conv2d", check_conv2d),
    ("batchnorm2d", check_batchnorm2d),
    ("relu", check_relu),
    ("sigmoid", check_sigmoid),
    ("maxpool2d", check_maxpool2d),
    ("upsample_nearest", check_upsample),
    ("global_horizontal_maxpool", check_global_horizontal_maxpool),
    ("mse_loss", check_mse),
    ("softmax_ce_loss", check_softmax_ce),
];
