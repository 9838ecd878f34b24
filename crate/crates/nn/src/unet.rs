//! UNet builders for the two model variants: a slice detector whose 2D
//! feature map is reduced to a per-row confidence column, and a per-pixel
//! muscle segmenter.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{NnError, Result};
use crate::layers::{Conv2d, ConvUnit, Param};
use crate::ops::{self, ArgMax};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// 1-channel map, global horizontal max-pool, sigmoid: `[N, 1, H]`.
    Heatmap1d,
    /// `classes`-channel logits: `[N, K, H, W]`.
    Segmentation { classes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    /// Number of 2x down-sampling steps in the encoder.
    pub levels: usize,
    pub base_channels: usize,
    pub convs_per_block: usize,
    pub head: Head,
    pub input_channels: usize,
}

impl ModelSpec {
    pub fn heatmap(levels: usize, base_channels: usize) -> Self {
        Self {
            levels,
            base_channels,
            convs_per_block: 2,
            head: Head::Heatmap1d,
            input_channels: 1,
        }
    }

    pub fn segmentation(levels: usize, base_channels: usize, classes: usize) -> Self {
        Self {
            levels,
            base_channels,
            convs_per_block: 2,
            head: Head::Segmentation { classes },
            input_channels: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NnError::Spec(m.to_string()));
        if self.levels == 0 {
            return bad("levels must be at least 1");
        }
        if self.levels > 12 {
            return bad("levels must be at most 12");
        }
        if self.base_channels == 0 {
            return bad("base_channels must be at least 1");
        }
        if self.convs_per_block == 0 {
            return bad("convs_per_block must be at least 1");
        }
        if self.input_channels == 0 {
            return bad("input_channels must be at least 1");
        }
        if let Head::Segmentation { classes } = self.head {
            if classes < 2 {
                return bad("segmentation head needs at least 2 classes");
            }
        }
        Ok(())
    }

    /// Spatial dims fed to the model must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        1 << self.levels
    }

    fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }
}

/// Cached values from `forward_train` not owned by any single layer.
#[derive(Debug, Default, Clone)]
struct Trace {
    pools: Vec<ArgMax>,
    row_max: Option<ArgMax>,
    heat: Option<Tensor>,
}

/// Initial bias of the heatmap head (`sigmoid(-4) ~ 0.018`).
pub const HEATMAP_PRIOR_BIAS: f64 = -4.0;

#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub seed: u64,
    encoder: Vec<Vec<ConvUnit>>,
    bottleneck: Vec<ConvUnit>,
    /// 1x1 projection applied before nearest upsampling (equivalent to
    /// upsample-then-1x1-conv, at a quarter of the cost).
    up_proj: Vec<Conv2d>,
    decoder: Vec<Vec<ConvUnit>>,
    head: Conv2d,
    trace: Trace,
}

/// He-initializes a UNet from `seed`. The decoder mirrors the encoder with
/// a channel-concatenated skip connection at every level.
pub fn build_unet(spec: ModelSpec, seed: u64) -> Result<Model> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = |name: String, c_in: usize, c_out: usize, rng: &mut ChaCha8Rng| {
        (0..spec.convs_per_block)
            .map(|i| {
                let c = if i == 0 { c_in } else { c_out };
                ConvUnit::new(&format!("{name}.unit{i}"), c, c_out, rng)
            })
            .collect::<Vec<_>>()
    };
    let mut encoder = Vec::with_capacity(spec.levels);
    for l in 0..spec.levels {
        let c_in = if l == 0 {
            spec.input_channels
        } else {
            spec.channels(l - 1)
        };
        encoder.push(block(format!("enc{l}"), c_in, spec.channels(l), &mut rng));
    }
    let bottleneck = block(
        "bottleneck".into(),
        spec.channels(spec.levels - 1),
        spec.channels(spec.levels),
        &mut rng,
    );
    let mut up_proj = Vec::with_capacity(spec.levels);
    let mut decoder = Vec::with_capacity(spec.levels);
    for l in 0..spec.levels {
        up_proj.push(Conv2d::new(
            &format!("up{l}"),
            spec.channels(l + 1),
            spec.channels(l),
            1,
            &mut rng,
        ));
        decoder.push(block(
            format!("dec{l}"),
            2 * spec.channels(l),
            spec.channels(l),
            &mut rng,
        ));
    }
    let out_channels = match spec.head {
        Head::Heatmap1d => 1,
        Head::Segmentation { classes } => classes,
    };
    let mut head = Conv2d::new("head", spec.channels(0), out_channels, 1, &mut rng);
    if spec.head == Head::Heatmap1d {
        // The row max over many columns of He-initialized logits saturates
        // the sigmoid; start from a low background confidence instead.
        head.bias.value.data_mut().fill(HEATMAP_PRIOR_BIAS);
    }
    Ok(Model {
        spec,
        seed,
        encoder,
        bottleneck,
        up_proj,
        decoder,
        head,
        trace: Trace::default(),
    })
}

fn run_block(units: &[ConvUnit], x: Tensor) -> Result<Tensor> {
    units.iter().try_fold(x, |h, u| u.forward(&h))
}

fn run_block_train(units: &mut [ConvUnit], x: Tensor) -> Result<Tensor> {
    units.iter_mut().try_fold(x, |h, u| u.forward_train(&h))
}

fn block_backward(units: &mut [ConvUnit], d: Tensor) -> Result<Tensor> {
    units.iter_mut().rev().try_fold(d, |g, u| u.backward(&g))
}

impl Model {
    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (_, c, h, w) = x.dims4("model")?;
        if c != self.spec.input_channels {
            return Err(NnError::Shape {
                op: "model",
                axis: "C",
                expected: self.spec.input_channels,
                found: c,
            });
        }
        let m = self.spec.size_multiple();
        if h % m != 0 || w % m != 0 {
            return Err(NnError::Padding {
                height: h,
                width: w,
                multiple: m,
            });
        }
        Ok(())
    }

    /// Inference pass (batch norm uses running statistics).
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut skips = Vec::with_capacity(self.spec.levels);
        let mut h = x.clone();
        for block in &self.encoder {
            h = run_block(block, h)?;
            let (pooled, _) = ops::maxpool2d(&h)?;
            skips.push(h);
            h = pooled;
        }
        h = run_block(&self.bottleneck, h)?;
        for l in (0..self.spec.levels).rev() {
            let up = ops::upsample_nearest(&self.up_proj[l].forward(&h)?)?;
            h = run_block(&self.decoder[l], ops::concat_channels(&skips[l], &up)?)?;
        }
        let logits = self.head.forward(&h)?;
        match self.spec.head {
            Head::Heatmap1d => Ok(ops::sigmoid(&ops::global_horizontal_maxpool(&logits)?.0)),
            Head::Segmentation { .. } => Ok(logits),
        }
    }

    /// Training pass: batch statistics, running-stat updates, and caches
    /// for [`Model::backward`].
    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        self.trace = Trace::default();
        let mut skips = Vec::with_capacity(self.spec.levels);
        let mut h = x.clone();
        for block in &mut self.encoder {
            h = run_block_train(block, h)?;
            let (pooled, am) = ops::maxpool2d(&h)?;
            self.trace.pools.push(am);
            skips.push(h);
            h = pooled;
        }
        h = run_block_train(&mut self.bottleneck, h)?;
        for l in (0..self.spec.levels).rev() {
            let up = ops::upsample_nearest(&self.up_proj[l].forward_train(&h)?)?;
            h = run_block_train(&mut self.decoder[l], ops::concat_channels(&skips[l], &up)?)?;
        }
        let logits = self.head.forward_train(&h)?;
        match self.spec.head {
            Head::Heatmap1d => {
                let (rows, am) = ops::global_horizontal_maxpool(&logits)?;
                let heat = ops::sigmoid(&rows);
                self.trace.row_max = Some(am);
                self.trace.heat = Some(heat.clone());
                Ok(heat)
            }
            Head::Segmentation { .. } => Ok(logits),
        }
    }

    /// Back-propagates `d_out` (gradient w.r.t. the model output),
    /// accumulating into every parameter's gradient. Returns the input
    /// gradient.
    pub fn backward(&mut self, d_out: &Tensor) -> Result<Tensor> {
        let mut d = match self.spec.head {
            Head::Heatmap1d => {
                let heat = self.trace.heat.take().ok_or_else(no_trace)?;
                let am = self.trace.row_max.take().ok_or_else(no_trace)?;
                let d = ops::sigmoid_backward(&heat, d_out)?;
                ops::global_horizontal_maxpool_backward(&am, &d)?
            }
            Head::Segmentation { .. } => d_out.clone(),
        };
        d = self.head.backward(&d)?;
        let mut skip_grads = Vec::with_capacity(self.spec.levels);
        for l in 0..self.spec.levels {
            d = block_backward(&mut self.decoder[l], d)?;
            let (d_skip, d_up) = ops::split_channels(&d, self.spec.channels(l))?;
            d = self.up_proj[l].backward(&ops::upsample_nearest_backward(&d_up)?)?;
            skip_grads.push(d_skip);
        }
        d = block_backward(&mut self.bottleneck, d)?;
        if self.trace.pools.len() != self.spec.levels {
            return Err(no_trace());
        }
        for l in (0..self.spec.levels).rev() {
            let mut g = ops::maxpool2d_backward(&self.trace.pools[l], &d)?;
            for (a, b) in g.data_mut().iter_mut().zip(skip_grads[l].data()) {
                *a += b;
            }
            d = block_backward(&mut self.encoder[l], g)?;
        }
        self.trace.pools.clear();
        Ok(d)
    }

    /// All parameters in a fixed order: encoder, bottleneck, up-projections,
    /// decoder, head.
    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = Vec::new();
        for u in self.encoder.iter_mut().flatten() {
            v.extend(u.params_mut());
        }
        for u in &mut self.bottleneck {
            v.extend(u.params_mut());
        }
        for c in &mut self.up_proj {
            v.extend(c.params_mut());
        }
        for u in self.decoder.iter_mut().flatten() {
            v.extend(u.params_mut());
        }
        v.extend(self.head.params_mut());
        v
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = Vec::new();
        for u in self.encoder.iter().flatten() {
            v.extend(u.params());
        }
        for u in &self.bottleneck {
            v.extend(u.params());
        }
        for c in &self.up_proj {
            v.extend(c.params());
        }
        for u in self.decoder.iter().flatten() {
            v.extend(u.params());
        }
        v.extend(self.head.params());
        v
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.value.zero_grad();
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.params()
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.len())
            .sum()
    }
}

fn no_trace() -> NnError {
    NnError::Spec("backward called without a preceding forward_train".into())
}
