//! Parameterized layers with cached activations for the backward pass.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{NnError, Result};
use crate::ops;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// A named tensor owned by a layer. Non-trainable parameters (batch-norm
/// running statistics) are serialized but skipped by the optimizer.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub trainable: bool,
}

impl Param {
    fn new(name: String, value: Tensor, trainable: bool) -> Self {
        Self {
            name,
            value,
            trainable,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl Conv2d {
    /// He-normal weights (`std = sqrt(2 / fan_in)`), zero bias.
    pub fn new<R: Rng>(name: &str, c_in: usize, c_out: usize, k: usize, rng: &mut R) -> Self {
        let fan_in = (c_in * k * k) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
        let w: Vec<f64> = (0..c_out * c_in * k * k)
            .map(|_| normal.sample(rng))
            .collect();
        Self {
            weight: Param::new(
                format!("{name}.weight"),
                Tensor::new(&[c_out, c_in, k, k], w).expect("sized"),
                true,
            ),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[c_out]), true),
            input: None,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        ops::conv2d(x, &self.weight.value, &self.bias.value)
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = self.forward(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let x = self.input.take().ok_or_else(missing_cache)?;
        let g = ops::conv2d_backward(&x, &self.weight.value, &self.bias.value, dy)?;
        self.weight.value.accumulate_grad(g.weight.data());
        self.bias.value.accumulate_grad(g.bias.data());
        Ok(g.input)
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.weight, &self.bias]
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    cache: Option<ops::BatchNormCache>,
}

impl BatchNorm2d {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Param::new(
                format!("{name}.gamma"),
                Tensor::full(&[channels], 1.0),
                true,
            ),
            beta: Param::new(format!("{name}.beta"), Tensor::zeros(&[channels]), true),
            running_mean: Param::new(
                format!("{name}.running_mean"),
                Tensor::zeros(&[channels]),
                false,
            ),
            running_var: Param::new(
                format!("{name}.running_var"),
                Tensor::full(&[channels], 1.0),
                false,
            ),
            cache: None,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        ops::batchnorm2d_infer(
            x,
            self.gamma.value.data(),
            self.beta.value.data(),
            self.running_mean.value.data(),
            self.running_var.value.data(),
            ops::BN_EPS,
        )
    }

    /// Normalizes with batch statistics and folds them into the running
    /// estimates with momentum 0.1.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        let (y, cache, stats) = ops::batchnorm2d_train(
            x,
            self.gamma.value.data(),
            self.beta.value.data(),
            ops::BN_EPS,
        )?;
        let m = ops::BN_MOMENTUM;
        for (r, b) in self
            .running_mean
            .value
            .data_mut()
            .iter_mut()
            .zip(&stats.mean)
        {
            *r = (1.0 - m) * *r + m * b;
        }
        for (r, b) in self
            .running_var
            .value
            .data_mut()
            .iter_mut()
            .zip(&stats.var_unbiased)
        {
            *r = (1.0 - m) * *r + m * b;
        }
        self.cache = Some(cache);
        Ok(y)
    }

    pub fn apply(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        match mode {
            Mode::Train => self.forward_train(x),
            Mode::Infer => self.forward(x),
        }
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or_else(missing_cache)?;
        let g = ops::batchnorm2d_backward(&cache, self.gamma.value.data(), dy)?;
        self.gamma.value.accumulate_grad(&g.gamma);
        self.beta.value.accumulate_grad(&g.beta);
        Ok(g.input)
    }

    pub fn params_mut(&mut self) -> [&mut Param; 4] {
        [
            &mut self.gamma,
            &mut self.beta,
            &mut self.running_mean,
            &mut self.running_var,
        ]
    }

    pub fn params(&self) -> [&Param; 4] {
        [
            &self.gamma,
            &self.beta,
            &self.running_mean,
            &self.running_var,
        ]
    }
}

/// Convolution, batch normalisation and ReLU.
#[derive(Debug, Clone)]
pub struct ConvUnit {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
    output: Option<Tensor>,
}

impl ConvUnit {
    pub fn new<R: Rng>(name: &str, c_in: usize, c_out: usize, rng: &mut R) -> Self {
        Self {
            conv: Conv2d::new(&format!("{name}.conv"), c_in, c_out, 3, rng),
            bn: BatchNorm2d::new(&format!("{name}.bn"), c_out),
            output: None,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(ops::relu(&self.bn.forward(&self.conv.forward(x)?)?))
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        let z = self.conv.forward_train(x)?;
        let y = ops::relu(&self.bn.forward_train(&z)?);
        self.output = Some(y.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let y = self.output.take().ok_or_else(missing_cache)?;
        let d = ops::relu_backward(&y, dy)?;
        let d = self.bn.backward(&d)?;
        self.conv.backward(&d)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = self.conv.params_mut().into_iter().collect();
        v.extend(self.bn.params_mut());
        v
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v: Vec<&Param> = self.conv.params().into_iter().collect();
        v.extend(self.bn.params());
        v
    }
}

fn missing_cache() -> NnError {
    NnError::Spec("backward called without a preceding forward_train".into())
}
