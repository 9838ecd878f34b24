mod support;

use l3scan_core::projection::{
    frontal_mip, make_detection_input, map_hu_to_8bit, resample_to_unit, restricted_sagittal_mip,
    threshold_and_map_8bit, MipImage, View, SAGITTAL_HALF_WIDTH_MM,
};
use l3scan_core::volume::CtVolume;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use support::{frontal_oracle, map_oracle, random_volume, rng, sagittal_oracle};

#[test]
fn mips_match_triple_loop_on_random_volumes() {
    for seed in 0..50 {
        let mut r = rng(seed);
        let v = random_volume(&mut r, [8, 8, 8]);
        assert_eq!(frontal_mip(&v).pixels, frontal_oracle(&v), "seed {seed}");
        for hw in [SAGITTAL_HALF_WIDTH_MM, 2.0, 0.1] {
            let s = restricted_sagittal_mip(&v, hw).unwrap();
            assert_eq!(s.pixels, sagittal_oracle(&v, hw), "seed {seed} hw {hw}");
        }
    }
}

fn permuted(v: &CtVolume, axis: usize, perm: &[usize]) -> CtVolume {
    let [d, h, w] = v.dims();
    let mut out = v.clone();
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let (sy, sx) = if axis == 1 { (perm[y], x) } else { (y, perm[x]) };
                out.set(z, y, x, v.get(z, sy, sx));
            }
        }
    }
    out
}

#[test]
fn mip_ignores_order_along_projection_axis() {
    for seed in 0..20 {
        let mut r = rng(100 + seed);
        let v = random_volume(&mut r, [4, 7, 9]);
        let mut perm: Vec<usize> = (0..7).collect();
        perm.shuffle(&mut r);
        assert_eq!(frontal_mip(&permuted(&v, 1, &perm)).pixels, frontal_mip(&v).pixels);
        // Shuffle only within the sagittal window.
        let cols = support::sagittal_columns(9, v.spacing()[2], 2.0);
        let mut inner = cols.clone();
        inner.shuffle(&mut r);
        let mut perm: Vec<usize> = (0..9).collect();
        for (&c, &s) in cols.iter().zip(&inner) {
            perm[c] = s;
        }
        assert_eq!(
            restricted_sagittal_mip(&permuted(&v, 2, &perm), 2.0).unwrap().pixels,
            restricted_sagittal_mip(&v, 2.0).unwrap().pixels
        );
    }
}

#[test]
fn map_commutes_with_mip() {
    for seed in 0..20 {
        let mut r = rng(200 + seed);
        let v = random_volume(&mut r, [5, 6, 7]);
        let mut mapped = v.clone();
        for z in 0..5 {
            for y in 0..6 {
                for x in 0..7 {
                    // Stored offset by +1000 so the mapped value is a valid HU.
                    mapped.set(z, y, x, map_hu_to_8bit(v.get(z, y, x) as f64) as i16 + 1000);
                }
            }
        }
        let lhs = threshold_and_map_8bit(&frontal_mip(&v)).pixels;
        let rhs: Vec<f64> = frontal_mip(&mapped).pixels.iter().map(|p| p - 1000.0).collect();
        assert_eq!(lhs, rhs);
    }
}

#[test]
fn map_matches_oracle_on_every_integer_hu() {
    for v in -1024..=3100 {
        assert_eq!(map_hu_to_8bit(v as f64) as f64, map_oracle(v as f64), "{v}");
    }
    assert_eq!(map_hu_to_8bit(100.0), -127);
    assert_eq!(map_hu_to_8bit(1500.0), 127);
    assert_eq!(map_hu_to_8bit(800.0), 0);
}

proptest! {
    #[test]
    fn map_is_monotone(a in -2000.0f64..4000.0, b in -2000.0f64..4000.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(map_hu_to_8bit(lo) <= map_hu_to_8bit(hi));
    }

    #[test]
    fn map_is_idempotent_with_identity_window(v in -2000.0f64..4000.0) {
        // Re-mapping an 8-bit output through its own range is the identity.
        let m = map_hu_to_8bit(v) as f64;
        let t = (m + 127.0) / 254.0;
        prop_assert_eq!((t * 254.0).round() - 127.0, m);
    }

    #[test]
    fn resample_stays_within_bounds(
        rows in 1usize..12, cols in 1usize..12,
        rs in 0.5f64..7.0, cs in 0.3f64..2.0,
        seed in 0u64..1000,
    ) {
        use rand::Rng;
        let mut r = rng(seed);
        let pixels: Vec<f64> = (0..rows * cols).map(|_| r.gen_range(-127.0..127.0)).collect();
        let img = MipImage {
            rows, cols, pixels: pixels.clone(),
            row_spacing_mm: rs, col_spacing_mm: cs,
            view: View::Frontal, source_slice_thickness_mm: rs,
        };
        let out = resample_to_unit(&img).unwrap();
        let lo = pixels.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(out.pixels.iter().all(|&p| p >= lo - 1e-12 && p <= hi + 1e-12));
        prop_assert_eq!(out.rows, ((rows as f64 * rs).round() as usize).max(1));
    }
}

#[test]
fn detection_input_maps_rows_to_millimetres() {
    let mut r = rng(9);
    let v = random_volume(&mut r, [20, 6, 6]);
    let d = make_detection_input(&v, View::Frontal).unwrap();
    let sz = v.slice_thickness();
    assert!((d.row_to_z_mm((d.rows - 1) as f64) - 19.0 * sz).abs() < 1e-9);
    assert!((d.mm_per_row - 1.0).abs() < 0.1);
    assert!(d.pixels.iter().all(|&p| (-127..=127).contains(&p)));
}
