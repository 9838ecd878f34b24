//! Muscle segmentation of the L3 axial slice.

use std::path::Path;

use l3scan_nn::{build_unet, ops, Adam, Head, Model, ModelSpec, Tensor};

use crate::augment::{augment_segmentation, AugmentConfig};
use crate::error::{CoreError, Result};
use crate::image::{Image, LabelMask, SliceImage, NUM_CLASSES};
use crate::rng::{derive_seed, Stream};
use crate::training::{epoch_order, round_up, split_pad, TrainConfig, Trained};
use crate::volume::{load_volume, save_volume, CtVolume};

pub const HU_CLIP: f64 = 250.0;

/// `clamp(v, -250, 250) / 250`.
pub fn preprocess_value(v: f64) -> f64 {
    v.clamp(-HU_CLIP, HU_CLIP) / HU_CLIP
}

pub fn preprocess_slice(s: &SliceImage) -> Image {
    Image {
        rows: s.image.rows,
        cols: s.image.cols,
        data: s.image.data.iter().map(|&v| preprocess_value(v)).collect(),
    }
}

/// Mirror index without edge repetition (`-1 -> 1`), for any offset.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

/// Image reflected and mask background-padded to `rows x cols`, plus the
/// `(top, left)` offset of the original.
pub fn pad_reflect(
    img: &Image,
    mask: Option<&LabelMask>,
    rows: usize,
    cols: usize,
) -> Result<(Image, Option<LabelMask>, usize, usize)> {
    if rows < img.rows || cols < img.cols {
        return Err(CoreError::Precondition(format!(
            "cannot pad {}x{} down to {rows}x{cols}",
            img.rows, img.cols
        )));
    }
    let (top, _) = split_pad(rows - img.rows);
    let (left, _) = split_pad(cols - img.cols);
    let mut out = Image::filled(rows, cols, 0.0);
    for r in 0..rows {
        let sr = reflect(r as isize - top as isize, img.rows);
        for c in 0..cols {
            let sc = reflect(c as isize - left as isize, img.cols);
            out.data[r * cols + c] = img.data[sr * img.cols + sc];
        }
    }
    let mask = mask.map(|m| {
        let mut p = LabelMask::background(rows, cols);
        for r in 0..m.rows {
            p.labels[(r + top) * cols + left..(r + top) * cols + left + m.cols]
                .copy_from_slice(&m.labels[r * m.cols..(r + 1) * m.cols]);
        }
        p
    });
    Ok((out, mask, top, left))
}

/// `N / (K * n_k)` per class over all training labels; absent classes get 0.
pub fn inverse_frequency_weights(masks: &[&LabelMask]) -> Vec<f64> {
    let mut counts = [0usize; NUM_CLASSES];
    for m in masks {
        for &l in &m.labels {
            counts[l as usize] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    counts
        .iter()
        .map(|&c| {
            if c == 0 {
                0.0
            } else {
                total as f64 / (NUM_CLASSES * c) as f64
            }
        })
        .collect()
}

pub fn check_segmentation_model(model: &Model) -> Result<()> {
    match model.spec.head {
        Head::Segmentation { classes } if classes == NUM_CLASSES => Ok(()),
        _ => Err(CoreError::Argument(format!(
            "model does not have a {NUM_CLASSES}-class segmentation head"
        ))),
    }
}

fn stack(images: &[Image]) -> Result<Tensor> {
    let (h, w) = (images[0].rows, images[0].cols);
    let mut data = Vec::with_capacity(images.len() * h * w);
    for im in images {
        data.extend_from_slice(&im.data);
    }
    Ok(Tensor::new(&[images.len(), 1, h, w], data)?)
}

/// Softmax cross-entropy training; `weighted` switches on inverse-frequency
/// class weights computed from the training masks.
pub fn train_segmenter(
    dataset: &[(SliceImage, LabelMask)],
    spec: ModelSpec,
    aug: &AugmentConfig,
    hp: &TrainConfig,
    weighted: bool,
) -> Result<Trained> {
    if dataset.is_empty() {
        return Err(CoreError::Precondition("empty segmentation training set".into()));
    }
    if hp.batch_size == 0 {
        return Err(CoreError::Precondition("batch size must be at least 1".into()));
    }
    for (s, m) in dataset {
        if (s.rows(), s.cols()) != (m.rows, m.cols) {
            return Err(CoreError::Dimension(format!(
                "mask {}x{} does not match slice {}x{}",
                m.rows,
                m.cols,
                s.rows(),
                s.cols()
            )));
        }
    }
    aug.validate()?;
    let mut model = build_unet(spec, derive_seed(hp.seed, Stream::Init, 0))?;
    check_segmentation_model(&model)?;
    let weights =
        weighted.then(|| inverse_frequency_weights(&dataset.iter().map(|d| &d.1).collect::<Vec<_>>()));
    let multiple = spec.size_multiple();
    let mut adam = Adam::new(hp.adam());
    let mut epoch_loss = Vec::with_capacity(hp.epochs);
    let mut step_loss = Vec::new();
    let n = dataset.len();
    for epoch in 0..hp.epochs {
        let mut total = 0.0;
        for (batch, chunk) in epoch_order(hp.seed, epoch, n).chunks(hp.batch_size).enumerate() {
            let samples: Vec<(Image, LabelMask)> = chunk
                .iter()
                .map(|&i| {
                    let (s, m) = &dataset[i];
                    let spacing = 0.5 * (s.spacing[0] + s.spacing[1]);
                    let (img, mask) =
                        augment_segmentation(&s.image, m, spacing, aug, hp.seed, (epoch * n + i) as u64);
                    let data = img.data.iter().map(|&v| preprocess_value(v)).collect();
                    (Image { data, ..img }, mask)
                })
                .collect();
            let h = round_up(samples.iter().map(|s| s.0.rows).max().unwrap_or(1), multiple);
            let w = round_up(samples.iter().map(|s| s.0.cols).max().unwrap_or(1), multiple);
            let mut images = Vec::with_capacity(samples.len());
            let mut labels = Vec::with_capacity(samples.len() * h * w);
            for (img, mask) in &samples {
                let (pi, pm, _, _) = pad_reflect(img, Some(mask), h, w)?;
                labels.extend(pm.expect("mask given").labels.iter().map(|&l| l as usize));
                images.push(pi);
            }
            let x = stack(&images)?;
            model.zero_grad();
            let y = model.forward_train(&x)?;
            let (loss, dy) = ops::softmax_ce_loss(&y, &labels, weights.as_deref())?;
            if !loss.is_finite() {
                return Err(CoreError::NonFiniteLoss { epoch, batch });
            }
            model.backward(&dy)?;
            adam.step(&mut model.params_mut())?;
            total += loss * samples.len() as f64;
            step_loss.push(loss);
        }
        let mean = total / n as f64;
        log::info!("segmenter epoch {}/{}: loss {mean:.6}", epoch + 1, hp.epochs);
        epoch_loss.push(mean);
    }
    Ok(Trained {
        model,
        epoch_loss,
        step_loss,
    })
}

/// Per-pixel argmax over `[1, K, H, W]` logits; lowest class wins ties.
pub fn argmax_labels(logits: &Tensor) -> Result<LabelMask> {
    let s = logits.shape();
    if s.len() != 4 || s[0] != 1 {
        return Err(CoreError::Dimension(format!("expected [1, K, H, W] logits, got {s:?}")));
    }
    let (k, h, w) = (s[1], s[2], s[3]);
    let x = logits.data();
    let labels = (0..h * w)
        .map(|p| {
            let mut best = 0;
            for c in 1..k {
                if x[c * h * w + p] > x[best * h * w + p] {
                    best = c;
                }
            }
            best as u8
        })
        .collect();
    LabelMask::new(h, w, labels)
}

pub fn predict_masks(s: &SliceImage, model: &Model) -> Result<LabelMask> {
    check_segmentation_model(model)?;
    let m = model.spec.size_multiple();
    let img = preprocess_slice(s);
    let (padded, _, top, left) = pad_reflect(&img, None, round_up(img.rows, m), round_up(img.cols, m))?;
    let full = argmax_labels(&model.forward(&stack(&[padded])?)?)?;
    let mut labels = Vec::with_capacity(img.rows * img.cols);
    for r in 0..img.rows {
        let at = (r + top) * full.cols + left;
        labels.extend_from_slice(&full.labels[at..at + img.cols]);
    }
    LabelMask::new(img.rows, img.cols, labels)
}

/// Stores a mask as a single-slice volume of label values.
pub fn save_mask(mask: &LabelMask, spacing: [f64; 2], path: &Path) -> Result<()> {
    let vol = CtVolume::new(
        [1, mask.rows, mask.cols],
        [1.0, spacing[0], spacing[1]],
        mask.labels.iter().map(|&l| l as i16).collect(),
    )?;
    save_volume(&vol, path)
}

pub fn load_mask(path: &Path) -> Result<(LabelMask, [f64; 2])> {
    let vol = load_volume(path)?;
    let [d, h, w] = vol.dims();
    if d != 1 {
        return Err(CoreError::Dimension(format!("mask volume has {d} slices, expected 1")));
    }
    let labels = vol
        .voxels()
        .iter()
        .map(|&v| {
            u8::try_from(v)
                .ok()
                .filter(|&l| (l as usize) < NUM_CLASSES)
                .ok_or_else(|| CoreError::Domain(format!("label {v} in {}", path.display())))
        })
        .collect::<Result<Vec<u8>>>()?;
    let [_, sy, sx] = vol.spacing();
    Ok((LabelMask::new(h, w, labels)?, [sy, sx]))
}
