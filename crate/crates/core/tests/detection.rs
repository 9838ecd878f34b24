mod support;

use l3scan_core::augment::AugmentConfig;
use l3scan_core::detection::*;
use l3scan_core::phantom::{gen_phantom, Phantom, PhantomParams};
use l3scan_core::projection::{make_detection_input, View};
use l3scan_core::training::{TrainConfig, Trained};
use l3scan_core::volume::{z_mm_to_slice_index, CtVolume};
use l3scan_nn::{Model, ModelSpec};
use proptest::prelude::*;

fn small_spec() -> ModelSpec {
    ModelSpec {
        convs_per_block: 1,
        ..ModelSpec::heatmap(3, 8)
    }
}

fn flat_params(m: &Model) -> Vec<f64> {
    m.params().iter().flat_map(|p| p.value.data().to_vec()).collect()
}

/// Noise-free, column-symmetric phantom with 2 mm slices, extended upward by
/// repeating its top slice until L3 sits at 102 mm.
fn l3_at_102() -> (Phantom, CtVolume, f64) {
    let params = PhantomParams {
        slice_thickness_mm: (2.0, 2.0),
        noise_sd: 0.0,
        symmetric: true,
        metal_probability: 0.0,
        ..PhantomParams::default()
    };
    let p = gen_phantom(3, &params).unwrap();
    let [d, h, w] = p.volume.dims();
    let extra = ((102.0 - p.truth.l3_z_mm) / 2.0).round() as usize;
    let mut vox = Vec::with_capacity((d + extra) * h * w);
    for _ in 0..extra {
        vox.extend_from_slice(p.volume.slice(0));
    }
    vox.extend_from_slice(p.volume.voxels());
    let vol = CtVolume::new([d + extra, h, w], p.volume.spacing(), vox).unwrap();
    let z = p.truth.l3_z_mm + 2.0 * extra as f64;
    (p, vol, z)
}

fn overfit(vol: &CtVolume, z: f64, steps: usize) -> Trained {
    let input = make_detection_input(vol, View::Frontal).unwrap();
    let row = input.z_mm_to_row(z);
    let hp = TrainConfig {
        epochs: steps,
        batch_size: 1,
        lr: 1e-3,
        seed: 11,
    };
    train_detector(&[(input, row)], small_spec(), &AugmentConfig::none(), &hp, DEFAULT_SIGMA).unwrap()
}

#[test]
fn decode_inverts_targets_for_every_row() {
    for sigma in [2.0, 4.0, 8.0] {
        for h in [1usize, 2, 17, 256] {
            for y in 0..h {
                let map = make_target_map(y as f64, h, sigma).unwrap();
                let p = decode_peak(&map, false).unwrap();
                assert_eq!(p.index, y, "sigma {sigma} h {h}");
                assert_eq!(p.confidence, 1.0);
                assert!(!p.low_confidence);
            }
        }
    }
}

#[test]
fn target_sums_to_gaussian_integral() {
    for sigma in [2.0, 4.0, 8.0] {
        let map = make_target_map(200.0, 400, sigma).unwrap();
        let sum: f64 = map.iter().sum();
        let expect = sigma * (2.0 * std::f64::consts::PI).sqrt();
        assert!((sum - expect).abs() < 1e-9, "sigma {sigma}: {sum} vs {expect}");
    }
}

#[test]
fn all_zero_map_is_low_confidence() {
    let p = decode_peak(&[0.0; 50], false).unwrap();
    assert_eq!(p.index, 0);
    assert!(p.low_confidence && p.ambiguous);
}

#[test]
fn candidate_nms_oracle() {
    // Oracle: the strongest peak survives; a weaker one survives iff it is
    // at least the separation away and above the relative threshold.
    let gauss = |c: f64, a: f64| (0..300).map(move |r| a * (-(r as f64 - c).powi(2) / 32.0).exp());
    for gap in [5usize, 10, 19, 20, 21, 40, 80] {
        for weak in [0.3, 0.7] {
            let map: Vec<f64> = gauss(100.0, 1.0)
                .zip(gauss(100.0 + gap as f64, weak))
                .map(|(a, b)| a.max(b))
                .collect();
            let c = find_candidates(&map, 0.5, 20.0, 1.0).unwrap();
            assert_eq!(c[0].0, 100);
            let want = if gap >= 20 && weak >= 0.5 { 2 } else { 1 };
            assert_eq!(c.len(), want, "gap {gap} weak {weak}: {c:?}");
        }
    }
}

#[test]
fn transitional_style_map_reports_both_levels() {
    let (gt, alt) = (81.0, 112.0);
    let map: Vec<f64> = make_target_map(gt, 250, 4.0)
        .unwrap()
        .iter()
        .zip(make_target_map(alt, 250, 4.0).unwrap())
        .map(|(a, b)| a.max(0.8 * b))
        .collect();
    let rows: Vec<f64> = find_candidates(&map, 0.5, 20.0, 1.0).unwrap().iter().map(|c| c.0 as f64).collect();
    for t in [gt, alt] {
        assert!(rows.iter().any(|r| (r - t).abs() <= 5.0), "{t} missing from {rows:?}");
    }
}

#[test]
fn one_sample_overfit_locates_l3_and_is_flip_invariant() {
    let (p, vol, z) = l3_at_102();
    assert!((z - 102.0).abs() <= 1.0);
    let tr = overfit(&vol, z, 200);
    let first = tr.step_loss[0];
    let last = *tr.step_loss.last().unwrap();
    println!("overfit loss {first:.4} -> {last:.5}");
    assert!(first / last >= 10.0, "loss {first} -> {last}");

    let cfg = DetectConfig::default();
    let r = predict_l3(&vol, &tr.model, View::Frontal, &cfg).unwrap();
    assert!((r.primary_slice_index as i64 - 51).abs() <= 1, "slice {}", r.primary_slice_index);
    assert_eq!(r.primary_slice_index, z_mm_to_slice_index(r.primary_z_mm, &vol).unwrap());
    assert_eq!(predict_l3(&vol, &tr.model, View::Frontal, &cfg).unwrap(), r);

    // x-mirror of a symmetric phantom
    let [d, h, w] = vol.dims();
    let mut flipped = vol.clone();
    for k in 0..d {
        for j in 0..h {
            for i in 0..w {
                flipped.set(k, j, i, vol.get(k, j, w - 1 - i));
            }
        }
    }
    assert_eq!(flipped, vol, "phantom {} is not column-symmetric", p.id);
    let f = predict_l3(&flipped, &tr.model, View::Frontal, &cfg).unwrap();
    assert_eq!(f.primary_row, r.primary_row);
}

#[test]
fn fixed_seed_gives_identical_weights() {
    let params = PhantomParams::default();
    let data: Vec<_> = (0..2)
        .map(|s| {
            let p = gen_phantom(s, &params).unwrap();
            let d = make_detection_input(&p.volume, View::Sagittal).unwrap();
            let row = d.z_mm_to_row(p.truth.l3_z_mm);
            (d, row)
        })
        .collect();
    let hp = TrainConfig {
        epochs: 2,
        batch_size: 2,
        lr: 1e-3,
        seed: 5,
    };
    let spec = ModelSpec::heatmap(2, 4);
    let a = train_detector(&data, spec, &AugmentConfig::default(), &hp, 4.0).unwrap();
    let b = train_detector(&data, spec, &AugmentConfig::default(), &hp, 4.0).unwrap();
    assert_eq!(flat_params(&a.model), flat_params(&b.model));
    assert_eq!(a.step_loss, b.step_loss);
    let c = train_detector(&data, spec, &AugmentConfig::default(), &TrainConfig { seed: 6, ..hp }, 4.0).unwrap();
    assert_ne!(flat_params(&a.model), flat_params(&c.model));
}

#[test]
fn empty_dataset_is_rejected() {
    let r = train_detector(&[], small_spec(), &AugmentConfig::none(), &TrainConfig::default(), 4.0);
    assert!(r.is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn record_round_trip(row in 0usize..500, conf in 0.0f64..1.0, refine in any::<bool>(),
                         z in 0.0f64..400.0, idx in 0usize..300,
                         cands in proptest::collection::vec((0usize..500, 0.0f64..1.0), 0..4)) {
        let r = DetectionResult {
            view: View::Sagittal,
            primary_row: row,
            refined_row: refine.then_some(row as f64 + 0.25),
            primary_z_mm: z,
            primary_slice_index: idx,
            max_confidence: conf,
            low_confidence: conf < LOW_CONFIDENCE,
            secondary_candidates: cands,
        };
        prop_assert_eq!(DetectionResult::from_record(&r.to_record()).unwrap(), r);
    }

    #[test]
    fn refined_row_stays_within_half_a_row(y in 5.0f64..95.0, sigma in 1.5f64..10.0) {
        let map = make_target_map(y, 100, sigma).unwrap();
        let p = decode_peak(&map, true).unwrap();
        prop_assert!((p.row - p.index as f64).abs() <= 0.5);
        prop_assert!((p.row - y).abs() < 0.05);
    }
}
