//! L3 slice detection: Gaussian row targets, padding, training, decoding,
//! and mapping a predicted row back to the source volume.

use std::fmt::Write as _;

use l3scan_nn::{build_unet, ops, Adam, Head, Model, ModelSpec, Tensor};

use crate::augment::{augment_detection, AugmentConfig, PIXEL_MIN};
use crate::error::{CoreError, Result};
use crate::image::Image;
use crate::projection::{make_detection_input, DetectionInput, View};
use crate::rng::{derive_seed, Stream};
use crate::training::{epoch_order, round_up, split_pad, TrainConfig, Trained};
use crate::volume::{z_mm_to_slice_index, CtVolume};

pub const DEFAULT_SIGMA: f64 = 4.0;
/// Peaks below this confidence are flagged.
pub const LOW_CONFIDENCE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectConfig {
    pub sigma: f64,
    pub rel_threshold: f64,
    pub min_separation_mm: f64,
    /// Quadratic sub-row refinement of the primary peak.
    pub refine: bool,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            sigma: DEFAULT_SIGMA,
            rel_threshold: 0.5,
            min_separation_mm: 20.0,
            refine: false,
        }
    }
}

/// `v(r) = exp(-(r - y)^2 / (2 sigma^2))` for `r in 0..height`.
pub fn make_target_map(y_row: f64, height: usize, sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) {
        return Err(CoreError::Precondition(format!("sigma {sigma} must be positive")));
    }
    if height == 0 {
        return Err(CoreError::Precondition("empty target map".into()));
    }
    let k = 1.0 / (2.0 * sigma * sigma);
    Ok((0..height)
        .map(|r| {
            let d = r as f64 - y_row;
            (-d * d * k).exp()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub index: usize,
    /// `index`, or the refined sub-row position.
    pub row: f64,
    pub confidence: f64,
    pub low_confidence: bool,
    /// Another row shares the maximum.
    pub ambiguous: bool,
}

/// Global argmax (first index on ties), optionally refined by a parabola
/// through the log of the peak and its two neighbours.
pub fn decode_peak(map: &[f64], refine: bool) -> Result<Peak> {
    let (index, &confidence) = map
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, &f64)>, (i, v)| match best {
            Some((_, b)) if *v <= *b => best,
            _ => Some((i, v)),
        })
        .ok_or_else(|| CoreError::Precondition("empty confidence map".into()))?;
    let mut row = index as f64;
    if refine && index > 0 && index + 1 < map.len() {
        let (l, c, r) = (map[index - 1], confidence, map[index + 1]);
        let (l, c, r) = if l > 0.0 && r > 0.0 {
            (l.ln(), c.ln(), r.ln())
        } else {
            (l, c, r)
        };
        let denom = l - 2.0 * c + r;
        if denom < 0.0 {
            row += (0.5 * (l - r) / denom).clamp(-0.5, 0.5);
        }
    }
    Ok(Peak {
        index,
        row,
        confidence,
        low_confidence: confidence < LOW_CONFIDENCE,
        ambiguous: map[index + 1..].contains(&confidence),
    })
}

/// Local maxima at or above `rel_threshold * max`, strongest first, with
/// any peak closer than `min_separation_mm` to a stronger one removed.
/// `mm_per_row` converts row distances.
pub fn find_candidates(
    map: &[f64],
    rel_threshold: f64,
    min_separation_mm: f64,
    mm_per_row: f64,
) -> Result<Vec<(usize, f64)>> {
    if !(rel_threshold > 0.0 && rel_threshold < 1.0) {
        return Err(CoreError::Precondition(format!(
            "relative threshold {rel_threshold} outside (0, 1)"
        )));
    }
    let max = map.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if map.is_empty() || !(max > 0.0) {
        return Ok(Vec::new());
    }
    let cut = rel_threshold * max;
    let n = map.len();
    let mut peaks: Vec<(usize, f64)> = (0..n)
        .filter(|&i| {
            let v = map[i];
            // Rising edge into a plateau counts once, at its first index.
            v >= cut && (i == 0 || v > map[i - 1]) && (i + 1 == n || v >= map[i + 1])
        })
        .map(|i| (i, map[i]))
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut kept: Vec<(usize, f64)> = Vec::new();
    for p in peaks {
        let far = kept
            .iter()
            .all(|k| (k.0 as f64 - p.0 as f64).abs() * mm_per_row >= min_separation_mm);
        if far {
            kept.push(p);
        }
    }
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub view: View,
    pub primary_row: usize,
    pub refined_row: Option<f64>,
    pub primary_z_mm: f64,
    pub primary_slice_index: usize,
    pub max_confidence: f64,
    pub low_confidence: bool,
    /// Other candidate peaks as `(row, confidence)`, strongest first.
    pub secondary_candidates: Vec<(usize, f64)>,
}

impl DetectionResult {
    /// Primary and secondary candidate rows.
    pub fn candidate_rows(&self) -> Vec<usize> {
        std::iter::once(self.primary_row)
            .chain(self.secondary_candidates.iter().map(|c| c.0))
            .collect()
    }

    /// `key = value` record, one field per line.
    pub fn to_record(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "view = {}", self.view);
        let _ = writeln!(s, "row = {}", self.primary_row);
        if let Some(r) = self.refined_row {
            let _ = writeln!(s, "refined_row = {r}");
        }
        let _ = writeln!(s, "z_mm = {}", self.primary_z_mm);
        let _ = writeln!(s, "slice_index = {}", self.primary_slice_index);
        let _ = writeln!(s, "confidence = {}", self.max_confidence);
        let _ = writeln!(s, "low_confidence = {}", self.low_confidence);
        let cands: Vec<String> = self
            .secondary_candidates
            .iter()
            .map(|(r, c)| format!("{r}:{c}"))
            .collect();
        let _ = writeln!(s, "candidates = {}", cands.join(" "));
        s
    }

    pub fn from_record(text: &str) -> Result<Self> {
        let rec = crate::record::parse_record(text)?;
        let get = |k: &str| {
            rec.get(k)
                .ok_or_else(|| CoreError::Argument(format!("detection record lacks `{k}`")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| CoreError::Argument(format!("detection record `{k}` is not a number")))
        };
        let secondary = get("candidates")?
            .split_whitespace()
            .map(|t| {
                let (r, c) = t
                    .split_once(':')
                    .ok_or_else(|| CoreError::Argument(format!("bad candidate `{t}`")))?;
                Ok((
                    r.parse().map_err(|_| CoreError::Argument(format!("bad candidate `{t}`")))?,
                    c.parse().map_err(|_| CoreError::Argument(format!("bad candidate `{t}`")))?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            view: get("view")?.parse()?,
            primary_row: num("row")? as usize,
            refined_row: rec.get("refined_row").map(|v| v.parse()).transpose().map_err(|_| {
                CoreError::Argument("detection record `refined_row` is not a number".into())
            })?,
            primary_z_mm: num("z_mm")?,
            primary_slice_index: num("slice_index")? as usize,
            max_confidence: num("confidence")?,
            low_confidence: get("low_confidence")? == "true",
            secondary_candidates: secondary,
        })
    }
}

/// Detection image with its symmetric `-127` padding recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct Padded {
    pub image: Image,
    pub top: usize,
    pub left: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Pads `img` symmetrically with `value` to `out_rows x out_cols`.
pub fn pad_to(img: &Image, out_rows: usize, out_cols: usize, value: f64) -> Result<Padded> {
    if out_rows < img.rows || out_cols < img.cols {
        return Err(CoreError::Precondition(format!(
            "cannot pad {}x{} down to {out_rows}x{out_cols}",
            img.rows, img.cols
        )));
    }
    let (top, _) = split_pad(out_rows - img.rows);
    let (left, _) = split_pad(out_cols - img.cols);
    let mut out = Image::filled(out_rows, out_cols, value);
    for r in 0..img.rows {
        out.data[(r + top) * out_cols + left..(r + top) * out_cols + left + img.cols]
            .copy_from_slice(&img.data[r * img.cols..(r + 1) * img.cols]);
    }
    Ok(Padded {
        image: out,
        top,
        left,
        rows: img.rows,
        cols: img.cols,
    })
}

/// Pads to the next multiple of `multiple` in both axes.
pub fn pad_detection(img: &Image, multiple: usize) -> Padded {
    pad_to(img, round_up(img.rows, multiple), round_up(img.cols, multiple), PIXEL_MIN)
        .expect("rounding up never shrinks")
}

fn input_image(d: &DetectionInput) -> Image {
    Image {
        rows: d.rows,
        cols: d.cols,
        data: d.pixels.iter().map(|&p| p as f64).collect(),
    }
}

/// Stacks equally sized images into `[N, 1, H, W]`, scaled by `1/127`.
fn batch_tensor(images: &[&Image]) -> Result<Tensor> {
    let (h, w) = (images[0].rows, images[0].cols);
    let mut data = Vec::with_capacity(images.len() * h * w);
    for im in images {
        data.extend(im.data.iter().map(|v| v / 127.0));
    }
    Ok(Tensor::new(&[images.len(), 1, h, w], data)?)
}

pub fn check_heatmap_model(model: &Model) -> Result<()> {
    if model.spec.head != Head::Heatmap1d {
        return Err(CoreError::Argument("model does not have a heatmap head".into()));
    }
    Ok(())
}

/// Trains a heatmap UNet with MSE against Gaussian row targets. Each batch
/// is padded with `-127` to a shared size divisible by `2^levels`.
pub fn train_detector(
    dataset: &[(DetectionInput, f64)],
    spec: ModelSpec,
    aug: &AugmentConfig,
    hp: &TrainConfig,
    sigma: f64,
) -> Result<Trained> {
    if dataset.is_empty() {
        return Err(CoreError::Precondition("empty detection training set".into()));
    }
    if hp.batch_size == 0 {
        return Err(CoreError::Precondition("batch size must be at least 1".into()));
    }
    aug.validate()?;
    let mut model = build_unet(spec, derive_seed(hp.seed, Stream::Init, 0))?;
    check_heatmap_model(&model)?;
    let m = spec.size_multiple();
    let images: Vec<Image> = dataset.iter().map(|(d, _)| input_image(d)).collect();
    let mut adam = Adam::new(hp.adam());
    let mut epoch_loss = Vec::with_capacity(hp.epochs);
    let mut step_loss = Vec::new();
    let n = dataset.len();
    for epoch in 0..hp.epochs {
        let order = epoch_order(hp.seed, epoch, n);
        let mut total = 0.0;
        for (batch, chunk) in order.chunks(hp.batch_size).enumerate() {
            let samples: Vec<_> = chunk
                .iter()
                .map(|&i| {
                    let index = (epoch * n + i) as u64;
                    augment_detection(&images[i], dataset[i].1, aug, hp.seed, index)
                })
                .collect();
            let h = round_up(samples.iter().map(|s| s.image.rows).max().unwrap_or(1), m);
            let w = round_up(samples.iter().map(|s| s.image.cols).max().unwrap_or(1), m);
            let mut padded = Vec::with_capacity(samples.len());
            let mut target = Vec::with_capacity(samples.len() * h);
            for s in &samples {
                let p = pad_to(&s.image, h, w, PIXEL_MIN)?;
                target.extend(make_target_map(s.row + p.top as f64, h, sigma)?);
                padded.push(p.image);
            }
            let x = batch_tensor(&padded.iter().collect::<Vec<_>>())?;
            let t = Tensor::new(&[samples.len(), 1, h], target)?;
            model.zero_grad();
            let y = model.forward_train(&x)?;
            let (loss, dy) = ops::mse_loss(&y, &t)?;
            if !loss.is_finite() {
                return Err(CoreError::NonFiniteLoss { epoch, batch });
            }
            model.backward(&dy)?;
            adam.step(&mut model.params_mut())?;
            total += loss * samples.len() as f64;
            step_loss.push(loss);
        }
        let mean = total / n as f64;
        log::info!("detector epoch {}/{}: loss {mean:.6}", epoch + 1, hp.epochs);
        epoch_loss.push(mean);
    }
    Ok(Trained {
        model,
        epoch_loss,
        step_loss,
    })
}

/// Confidence per row of `input` (padding cropped away).
pub fn predict_map(model: &Model, input: &DetectionInput) -> Result<Vec<f64>> {
    check_heatmap_model(model)?;
    let p = pad_detection(&input_image(input), model.spec.size_multiple());
    let y = model.forward(&batch_tensor(&[&p.image])?)?;
    Ok(y.data()[p.top..p.top + p.rows].to_vec())
}

/// Decodes a confidence map into a result on `input`'s geometry.
pub fn decode_detection(
    map: &[f64],
    input: &DetectionInput,
    vol: &CtVolume,
    cfg: &DetectConfig,
) -> Result<DetectionResult> {
    let peak = decode_peak(map, cfg.refine)?;
    let cands = find_candidates(map, cfg.rel_threshold, cfg.min_separation_mm, 1.0)?;
    let row = if cfg.refine { peak.row } else { peak.index as f64 };
    let z = input.row_to_z_mm(row).max(0.0);
    Ok(DetectionResult {
        view: input.view,
        primary_row: peak.index,
        refined_row: cfg.refine.then_some(peak.row),
        primary_z_mm: z,
        primary_slice_index: z_mm_to_slice_index(z, vol)?,
        max_confidence: peak.confidence,
        low_confidence: peak.low_confidence,
        secondary_candidates: cands.into_iter().filter(|c| c.0 != peak.index).collect(),
    })
}

pub fn predict_l3(vol: &CtVolume, model: &Model, view: View, cfg: &DetectConfig) -> Result<DetectionResult> {
    let input = make_detection_input(vol, view)?;
    let map = predict_map(model, &input)?;
    decode_detection(&map, &input, vol, cfg)
}
