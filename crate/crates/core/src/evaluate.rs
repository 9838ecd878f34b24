//! Phantom-set storage and k-fold cross-validation of both stages.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::detection::{predict_l3, train_detector};
use crate::error::{CoreError, Result};
use crate::image::{combined_mask, LabelMask, SliceImage, ERECTOR_SPINAE, PSOAS, RECTUS_ABDOMINIS};
use crate::metrics::{dice, kfold_split, muscle_area_cm2, muscle_attenuation, slice_error, MUSCLE_HU_WINDOW};
use crate::phantom::{read_manifest, slice_image, write_manifest, ManifestRow, Phantom};
use crate::projection::{make_detection_input, View};
use crate::rng::{derive_seed, Stream};
use crate::segmentation::{load_mask, predict_masks, save_mask, train_segmenter};
use crate::volume::{load_volume, save_volume, CtVolume};

pub const MANIFEST: &str = "manifest.csv";

/// One annotated volume.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalCase {
    pub id: String,
    pub volume: CtVolume,
    pub gt_z_mm: f64,
    pub gt_slice_index: usize,
    pub transitional: bool,
    pub alt_z_mm: Option<f64>,
    pub vertebra_spacing_mm: f64,
    /// Labels of slice `gt_slice_index`.
    pub mask: LabelMask,
}

impl EvalCase {
    pub fn slice(&self) -> SliceImage {
        slice_image(&self.volume, self.gt_slice_index)
    }
}

impl From<&Phantom> for EvalCase {
    fn from(p: &Phantom) -> Self {
        Self {
            id: p.id.clone(),
            volume: p.volume.clone(),
            gt_z_mm: p.truth.l3_z_mm,
            gt_slice_index: p.truth.l3_slice_index,
            transitional: p.truth.transitional,
            alt_z_mm: p.truth.alt_z_mm,
            vertebra_spacing_mm: p.truth.vertebra_spacing_mm,
            mask: p.mask.clone(),
        }
    }
}

/// Writes volumes, L3 masks and `manifest.csv` into `dir`.
pub fn write_phantom_set(phantoms: &[Phantom], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    let mut rows = Vec::with_capacity(phantoms.len());
    for p in phantoms {
        let row = ManifestRow::of(p);
        save_volume(&p.volume, &dir.join(&row.volume))?;
        let [_, sy, sx] = p.volume.spacing();
        save_mask(&p.mask, [sy, sx], &dir.join(&row.mask))?;
        rows.push(row);
    }
    write_manifest(&rows, &dir.join(MANIFEST))
}

pub fn load_cases(dir: &Path) -> Result<Vec<EvalCase>> {
    read_manifest(&dir.join(MANIFEST))?
        .into_iter()
        .map(|row| {
            let volume = load_volume(&dir.join(&row.volume))?;
            let (mask, _) = load_mask(&dir.join(&row.mask))?;
            let [d, h, w] = volume.dims();
            if row.gt_slice_index >= d || (mask.rows, mask.cols) != (h, w) {
                return Err(CoreError::Dimension(format!(
                    "case {}: manifest does not match volume {d}x{h}x{w}",
                    row.id
                )));
            }
            Ok(EvalCase {
                id: row.id,
                volume,
                gt_z_mm: row.gt_l3_z_mm,
                gt_slice_index: row.gt_slice_index,
                transitional: row.transitional,
                alt_z_mm: row.alt_z_mm,
                vertebra_spacing_mm: row.vertebra_spacing_mm,
                mask,
            })
        })
        .collect()
}

/// One line of the per-case CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub id: String,
    pub view: String,
    pub err_mm: f64,
    pub err_slices: f64,
    pub dice_es: f64,
    pub dice_psoas: f64,
    pub dice_ra: f64,
    pub dice_combined: f64,
    pub area_cm2: f64,
    /// Empty when the predicted mask is empty.
    pub ma_hu: Option<f64>,
    pub gt_area_cm2: f64,
    pub gt_ma_hu: Option<f64>,
    pub pred_slice_index: usize,
    pub gt_slice_index: usize,
    pub fold: usize,
    pub transitional: bool,
}

/// `(area, attenuation)` of a mask on its slice.
pub fn muscle_measures(mask: &[bool], s: &SliceImage, hu_window: bool) -> Result<(f64, Option<f64>)> {
    let img = &s.image.data;
    let window = hu_window.then_some(MUSCLE_HU_WINDOW);
    let area = muscle_area_cm2(mask, s.spacing, window, Some(img))?;
    let inside: Vec<bool> = match window {
        Some((lo, hi)) => mask
            .iter()
            .zip(img)
            .map(|(&m, &v)| m && v >= lo && v <= hi)
            .collect(),
        None => mask.to_vec(),
    };
    let ma = match muscle_attenuation(&inside, img) {
        Ok(v) => Some(v),
        Err(CoreError::Undefined(_)) => None,
        Err(e) => return Err(e),
    };
    Ok((area, ma))
}

/// Scores one case: detection on the volume, segmentation on the
/// ground-truth slice.
pub fn evaluate_case(
    case: &EvalCase,
    detector: &l3scan_nn::Model,
    segmenter: &l3scan_nn::Model,
    cfg: &ExperimentConfig,
    fold: usize,
) -> Result<ReportRow> {
    let det = predict_l3(&case.volume, detector, cfg.view, &cfg.detect_config())?;
    let (err_mm, err_slices) = slice_error(det.primary_z_mm, case.gt_z_mm, case.volume.slice_thickness())?;
    let slice = case.slice();
    let pred = predict_masks(&slice, segmenter)?;
    let d = |k: u8| dice(&pred.class(k), &case.mask.class(k));
    let (pc, gc) = (combined_mask(&pred), combined_mask(&case.mask));
    let (area, ma) = muscle_measures(&pc, &slice, cfg.eval_hu_window)?;
    let (gt_area, gt_ma) = muscle_measures(&gc, &slice, cfg.eval_hu_window)?;
    Ok(ReportRow {
        id: case.id.clone(),
        view: cfg.view.to_string(),
        err_mm,
        err_slices,
        dice_es: d(ERECTOR_SPINAE)?,
        dice_psoas: d(PSOAS)?,
        dice_ra: d(RECTUS_ABDOMINIS)?,
        dice_combined: dice(&pc, &gc)?,
        area_cm2: area,
        ma_hu: ma,
        gt_area_cm2: gt_area,
        gt_ma_hu: gt_ma,
        pred_slice_index: det.primary_slice_index,
        gt_slice_index: case.gt_slice_index,
        fold,
        transitional: case.transitional,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub detector_loss: Vec<f64>,
    pub segmenter_loss: Vec<f64>,
}

fn run_fold(
    cases: &[EvalCase],
    train_ids: &[String],
    test_ids: &[String],
    fold: usize,
    cfg: &ExperimentConfig,
) -> Result<FoldResult> {
    let train_set: BTreeSet<&str> = train_ids.iter().map(String::as_str).collect();
    if let Some(leak) = test_ids.iter().find(|id| train_set.contains(id.as_str())) {
        return Err(CoreError::Precondition(format!(
            "fold {fold}: test case {leak} is also in the training set"
        )));
    }
    let train: Vec<&EvalCase> = cases.iter().filter(|c| train_set.contains(c.id.as_str())).collect();
    let seed = derive_seed(cfg.seed, Stream::Split, fold as u64 + 1);
    let aug = cfg.augment();

    let det_data = train
        .iter()
        .map(|c| {
            let input = make_detection_input(&c.volume, cfg.view)?;
            let row = input.z_mm_to_row(c.gt_z_mm);
            Ok((input, row))
        })
        .collect::<Result<Vec<_>>>()?;
    let det = train_detector(
        &det_data,
        cfg.detect_spec(),
        &aug,
        &crate::training::TrainConfig { seed, ..cfg.detect_train() },
        cfg.detect_sigma,
    )?;
    let seg_data: Vec<_> = train.iter().map(|c| (c.slice(), c.mask.clone())).collect();
    let seg = train_segmenter(
        &seg_data,
        cfg.seg_spec(),
        &aug,
        &crate::training::TrainConfig { seed, ..cfg.seg_train() },
        cfg.seg_class_weights,
    )?;
    let rows = cases
        .iter()
        .filter(|c| test_ids.contains(&c.id))
        .map(|c| evaluate_case(c, &det.model, &seg.model, cfg, fold))
        .collect::<Result<Vec<_>>>()?;
    log::info!("fold {fold}: {} train, {} test", train.len(), rows.len());
    Ok(FoldResult {
        fold,
        train_ids: train_ids.to_vec(),
        test_ids: test_ids.to_vec(),
        rows,
        detector_loss: det.epoch_loss,
        segmenter_loss: seg.epoch_loss,
    })
}

/// k-fold cross-validation grouped by case id; each fold trains a fresh
/// detector and segmenter on the other folds.
pub fn cross_validate(cases: &[EvalCase], cfg: &ExperimentConfig) -> Result<Vec<FoldResult>> {
    cfg.validate()?;
    let ids: Vec<&str> = cases.iter().map(|c| c.id.as_str()).collect();
    if ids.iter().collect::<BTreeSet<_>>().len() != ids.len() {
        return Err(CoreError::Precondition("duplicate case ids".into()));
    }
    let split = kfold_split(&ids, cfg.eval_k, derive_seed(cfg.seed, Stream::Split, 0))?;
    let folds: Vec<usize> = (0..split.k()).collect();
    if cfg.eval_parallel_folds {
        std::thread::scope(|s| {
            let handles: Vec<_> = folds
                .iter()
                .map(|&i| {
                    let (tr, te) = (split.train_ids(i), split.folds[i].clone());
                    s.spawn(move || run_fold(cases, &tr, &te, i, cfg))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("fold thread panicked"))
                .collect()
        })
    } else {
        folds
            .iter()
            .map(|&i| run_fold(cases, &split.train_ids(i), &split.folds[i], i, cfg))
            .collect()
    }
}

/// Rows of all folds in input case order.
pub fn collect_rows(cases: &[EvalCase], folds: &[FoldResult]) -> Vec<ReportRow> {
    cases
        .iter()
        .filter_map(|c| folds.iter().flat_map(|f| &f.rows).find(|r| r.id == c.id).cloned())
        .collect()
}

pub fn view_of(row: &ReportRow) -> Result<View> {
    row.view.parse()
}
