//! Experiment configuration: dotted `key = value` text with `#` comments.
//! Every key has a default; unknown keys are rejected. Command-line
//! `--key value` pairs are applied on top of a file with [`ExperimentConfig::set`].

use std::fmt::Display;
use std::str::FromStr;

use l3scan_nn::ModelSpec;

use crate::augment::AugmentConfig;
use crate::detection::DetectConfig;
use crate::error::{CoreError, Result};
use crate::image::NUM_CLASSES;
use crate::phantom::PhantomParams;
use crate::projection::View;
use crate::record::parse_record;
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub view: View,
    pub data_dir: String,
    pub out_dir: String,

    pub phantom_count: usize,
    pub phantom_n_vertebrae: usize,
    pub phantom_spacing_min: f64,
    pub phantom_spacing_max: f64,
    pub phantom_thickness_min: f64,
    pub phantom_thickness_max: f64,
    pub phantom_pixel_spacing: f64,
    pub phantom_noise_sd: f64,
    pub phantom_transitional_probability: f64,
    pub phantom_metal_probability: f64,
    pub phantom_symmetric: bool,

    pub detect_levels: usize,
    pub detect_base_channels: usize,
    pub detect_convs_per_block: usize,
    pub detect_sigma: f64,
    pub detect_epochs: usize,
    pub detect_batch_size: usize,
    pub detect_lr: f64,
    pub detect_rel_threshold: f64,
    pub detect_min_separation_mm: f64,
    pub detect_refine: bool,
    pub detect_weights: String,

    pub seg_levels: usize,
    pub seg_base_channels: usize,
    pub seg_convs_per_block: usize,
    pub seg_epochs: usize,
    pub seg_batch_size: usize,
    pub seg_lr: f64,
    pub seg_class_weights: bool,
    pub seg_weights: String,

    pub aug_hflip_p: f64,
    pub aug_scale_p: f64,
    pub aug_scale_min: f64,
    pub aug_scale_max: f64,
    pub aug_offset_p: f64,
    pub aug_offset_max: f64,
    pub aug_affine_p: f64,
    pub aug_affine_grid: usize,
    pub aug_affine_jitter_mm: f64,
    pub aug_dropout_p: f64,
    pub aug_overexposure_p: f64,
    pub aug_region_max_frac: f64,
    pub aug_subsample_p: f64,
    pub aug_subsample_max: usize,
    pub aug_detection_only_on_slices: bool,

    pub eval_k: usize,
    pub eval_hu_window: bool,
    pub eval_parallel_folds: bool,
    pub eval_report: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let p = PhantomParams::default();
        let a = AugmentConfig::default();
        let d = DetectConfig::default();
        let t = TrainConfig::default();
        Self {
            seed: 0,
            view: View::Frontal,
            data_dir: "phantoms".into(),
            out_dir: "out".into(),
            phantom_count: 120,
            phantom_n_vertebrae: p.n_vertebrae,
            phantom_spacing_min: p.vertebra_spacing_mm.0,
            phantom_spacing_max: p.vertebra_spacing_mm.1,
            phantom_thickness_min: p.slice_thickness_mm.0,
            phantom_thickness_max: p.slice_thickness_mm.1,
            phantom_pixel_spacing: p.in_plane_spacing_mm,
            phantom_noise_sd: p.noise_sd,
            phantom_transitional_probability: p.transitional_probability,
            phantom_metal_probability: p.metal_probability,
            phantom_symmetric: p.symmetric,
            detect_levels: 3,
            detect_base_channels: 16,
            detect_convs_per_block: 2,
            detect_sigma: d.sigma,
            detect_epochs: t.epochs,
            detect_batch_size: t.batch_size,
            detect_lr: t.lr,
            detect_rel_threshold: d.rel_threshold,
            detect_min_separation_mm: d.min_separation_mm,
            detect_refine: d.refine,
            detect_weights: "out/detector.weights".into(),
            seg_levels: 3,
            seg_base_channels: 16,
            seg_convs_per_block: 2,
            seg_epochs: t.epochs,
            seg_batch_size: t.batch_size,
            seg_lr: t.lr,
            seg_class_weights: false,
            seg_weights: "out/segmenter.weights".into(),
            aug_hflip_p: a.hflip_p,
            aug_scale_p: a.scale_p,
            aug_scale_min: a.scale_range.0,
            aug_scale_max: a.scale_range.1,
            aug_offset_p: a.offset_p,
            aug_offset_max: a.offset_max,
            aug_affine_p: a.affine_p,
            aug_affine_grid: a.affine_grid,
            aug_affine_jitter_mm: a.affine_jitter_mm,
            aug_dropout_p: a.dropout_p,
            aug_overexposure_p: a.overexposure_p,
            aug_region_max_frac: a.region_max_frac,
            aug_subsample_p: a.subsample_p,
            aug_subsample_max: a.subsample_max,
            aug_detection_only_on_slices: a.detection_only_on_slices,
            eval_k: 3,
            eval_hu_window: false,
            eval_parallel_folds: false,
            eval_report: "out/report.csv".into(),
        }
    }
}

fn parse_value<T>(key: &str, value: &str) -> Result<T>
where
    T: FromStr,
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| CoreError::Config(format!("`{key}`: cannot parse `{value}`: {e}")))
}

macro_rules! keys {
    ($($key:literal => $field:ident, $doc:literal;)*) => {
        impl ExperimentConfig {
            /// Sets one key from its text form.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $($key => self.$field = parse_value(key, value)?,)*
                    _ => return Err(CoreError::Config(format!("unknown key `{key}`"))),
                }
                Ok(())
            }

            /// `(key, current value, description)` for every key.
            pub fn entries(&self) -> Vec<(&'static str, String, &'static str)> {
                vec![$(($key, self.$field.to_string(), $doc),)*]
            }

            pub fn is_key(key: &str) -> bool {
                matches!(key, $($key)|*)
            }
        }
    };
}

keys! {
    "seed" => seed, "master seed; data, init, augment and split streams derive from it";
    "view" => view, "detection input: frontal or sagittal";
    "data.dir" => data_dir, "phantom directory (volumes, masks, manifest.csv)";
    "out.dir" => out_dir, "output directory";
    "phantom.count" => phantom_count, "phantoms generated by phantom-gen";
    "phantom.n_vertebrae" => phantom_n_vertebrae, "vertebrae from T10 down, sacrum counted as nine";
    "phantom.spacing_min" => phantom_spacing_min, "vertebra spacing lower bound, mm";
    "phantom.spacing_max" => phantom_spacing_max, "vertebra spacing upper bound, mm";
    "phantom.thickness_min" => phantom_thickness_min, "slice thickness lower bound, mm";
    "phantom.thickness_max" => phantom_thickness_max, "slice thickness upper bound, mm";
    "phantom.pixel_spacing" => phantom_pixel_spacing, "in-plane pixel spacing, mm";
    "phantom.noise_sd" => phantom_noise_sd, "Gaussian noise sd, HU";
    "phantom.transitional_probability" => phantom_transitional_probability, "chance of an extra lumbar vertebra";
    "phantom.metal_probability" => phantom_metal_probability, "chance of metal rods";
    "phantom.symmetric" => phantom_symmetric, "mirror left-side anatomy onto the right";
    "detect.levels" => detect_levels, "detector UNet depth";
    "detect.base_channels" => detect_base_channels, "detector first-level channels";
    "detect.convs_per_block" => detect_convs_per_block, "detector convolutions per block";
    "detect.sigma" => detect_sigma, "target Gaussian sd, rows";
    "detect.epochs" => detect_epochs, "detector training epochs";
    "detect.batch_size" => detect_batch_size, "detector batch size";
    "detect.lr" => detect_lr, "detector Adam learning rate";
    "detect.rel_threshold" => detect_rel_threshold, "candidate peak threshold relative to the maximum";
    "detect.min_separation_mm" => detect_min_separation_mm, "candidate suppression distance, mm";
    "detect.refine" => detect_refine, "quadratic sub-row peak refinement";
    "detect.weights" => detect_weights, "detector weight file";
    "seg.levels" => seg_levels, "segmenter UNet depth";
    "seg.base_channels" => seg_base_channels, "segmenter first-level channels";
    "seg.convs_per_block" => seg_convs_per_block, "segmenter convolutions per block";
    "seg.epochs" => seg_epochs, "segmenter training epochs";
    "seg.batch_size" => seg_batch_size, "segmenter batch size";
    "seg.lr" => seg_lr, "segmenter Adam learning rate";
    "seg.class_weights" => seg_class_weights, "inverse-frequency class weights in the loss";
    "seg.weights" => seg_weights, "segmenter weight file";
    "aug.hflip_p" => aug_hflip_p, "horizontal flip probability";
    "aug.scale_p" => aug_scale_p, "isotropic scaling probability";
    "aug.scale_min" => aug_scale_min, "smallest scale factor";
    "aug.scale_max" => aug_scale_max, "largest scale factor";
    "aug.offset_p" => aug_offset_p, "intensity offset probability";
    "aug.offset_max" => aug_offset_max, "largest absolute intensity offset";
    "aug.affine_p" => aug_affine_p, "piecewise-affine warp probability";
    "aug.affine_grid" => aug_affine_grid, "piecewise-affine control grid cells per axis";
    "aug.affine_jitter_mm" => aug_affine_jitter_mm, "control point jitter, mm";
    "aug.dropout_p" => aug_dropout_p, "region dropout probability";
    "aug.overexposure_p" => aug_overexposure_p, "region overexposure probability";
    "aug.region_max_frac" => aug_region_max_frac, "largest dropout/overexposure area fraction";
    "aug.subsample_p" => aug_subsample_p, "vertical subsampling probability";
    "aug.subsample_max" => aug_subsample_max, "largest vertical subsampling factor";
    "aug.detection_only_on_slices" => aug_detection_only_on_slices, "also apply dropout, overexposure and subsampling to slices";
    "eval.k" => eval_k, "cross-validation folds";
    "eval.hu_window" => eval_hu_window, "restrict area and attenuation to [-29, 150] HU";
    "eval.parallel_folds" => eval_parallel_folds, "train folds on separate threads";
    "eval.report" => eval_report, "per-case CSV written by evaluate";
}

impl ExperimentConfig {
    /// Defaults overridden by the keys in `text`.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in parse_record(text).map_err(|e| CoreError::Config(e.to_string()))? {
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every key with its value and description, loadable by `from_text`.
    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v, d)| format!("# {d}\n{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.phantom_params()?;
        self.augment().validate()?;
        self.detect_spec().validate()?;
        self.seg_spec().validate()?;
        let cfg = |m: String| Err(CoreError::Config(m));
        if self.eval_k < 2 {
            return cfg(format!("eval.k = {} must be at least 2", self.eval_k));
        }
        if self.detect_batch_size == 0 || self.seg_batch_size == 0 {
            return cfg("batch sizes must be at least 1".into());
        }
        if !(self.detect_lr > 0.0 && self.seg_lr > 0.0) {
            return cfg("learning rates must be positive".into());
        }
        if !(self.detect_sigma > 0.0) {
            return cfg(format!("detect.sigma = {} must be positive", self.detect_sigma));
        }
        if !(self.detect_rel_threshold > 0.0 && self.detect_rel_threshold < 1.0) {
            return cfg(format!(
                "detect.rel_threshold = {} outside (0, 1)",
                self.detect_rel_threshold
            ));
        }
        Ok(())
    }

    pub fn phantom_params(&self) -> Result<PhantomParams> {
        let p = PhantomParams {
            n_vertebrae: self.phantom_n_vertebrae,
            vertebra_spacing_mm: (self.phantom_spacing_min, self.phantom_spacing_max),
            slice_thickness_mm: (self.phantom_thickness_min, self.phantom_thickness_max),
            in_plane_spacing_mm: self.phantom_pixel_spacing,
            noise_sd: self.phantom_noise_sd,
            transitional_probability: self.phantom_transitional_probability,
            metal_probability: self.phantom_metal_probability,
            symmetric: self.phantom_symmetric,
            ..PhantomParams::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn augment(&self) -> AugmentConfig {
        AugmentConfig {
            hflip_p: self.aug_hflip_p,
            scale_p: self.aug_scale_p,
            scale_range: (self.aug_scale_min, self.aug_scale_max),
            offset_p: self.aug_offset_p,
            offset_max: self.aug_offset_max,
            affine_p: self.aug_affine_p,
            affine_grid: self.aug_affine_grid,
            affine_jitter_mm: self.aug_affine_jitter_mm,
            dropout_p: self.aug_dropout_p,
            overexposure_p: self.aug_overexposure_p,
            region_max_frac: self.aug_region_max_frac,
            subsample_p: self.aug_subsample_p,
            subsample_max: self.aug_subsample_max,
            detection_only_on_slices: self.aug_detection_only_on_slices,
        }
    }

    pub fn detect_spec(&self) -> ModelSpec {
        ModelSpec {
            convs_per_block: self.detect_convs_per_block,
            ..ModelSpec::heatmap(self.detect_levels, self.detect_base_channels)
        }
    }

    pub fn seg_spec(&self) -> ModelSpec {
        ModelSpec {
            convs_per_block: self.seg_convs_per_block,
            ..ModelSpec::segmentation(self.seg_levels, self.seg_base_channels, NUM_CLASSES)
        }
    }

    pub fn detect_config(&self) -> DetectConfig {
        DetectConfig {
            sigma: self.detect_sigma,
            rel_threshold: self.detect_rel_threshold,
            min_separation_mm: self.detect_min_separation_mm,
            refine: self.detect_refine,
        }
    }

    pub fn detect_train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.detect_epochs,
            batch_size: self.detect_batch_size,
            lr: self.detect_lr,
            seed: self.seed,
        }
    }

    pub fn seg_train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.seg_epochs,
            batch_size: self.seg_batch_size,
            lr: self.seg_lr,
            seed: self.seed,
        }
    }
}
