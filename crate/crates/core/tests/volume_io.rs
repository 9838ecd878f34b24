mod support;

use l3scan_core::volume::{load_volume, save_volume, z_mm_to_slice_index, CtVolume};
use proptest::prelude::*;

fn volume() -> impl Strategy<Value = CtVolume> {
    (1usize..5, 1usize..6, 1usize..6, 0.5f64..7.0, 0.3f64..2.0, 0.3f64..2.0)
        .prop_flat_map(|(d, h, w, sz, sy, sx)| {
            (
                Just([d, h, w]),
                Just([sz, sy, sx]),
                prop::collection::vec(-1024i16..=i16::MAX, d * h * w),
                prop::array::uniform3(-500.0f64..500.0),
            )
        })
        .prop_map(|(dims, spacing, vox, origin)| {
            CtVolume::new(dims, spacing, vox).unwrap().with_origin(origin)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn save_load_is_identity(v in volume()) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.mhd");
        save_volume(&v, &p).unwrap();
        prop_assert_eq!(load_volume(&p).unwrap(), v);
    }

    #[test]
    fn slice_index_is_monotone(v in volume(), a in 0.0f64..60.0, b in 0.0f64..60.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(z_mm_to_slice_index(lo, &v).unwrap() <= z_mm_to_slice_index(hi, &v).unwrap());
    }

    #[test]
    fn slice_index_recovers_z(v in volume(), t in 0.0f64..1.0) {
        let sz = v.slice_thickness();
        let z = t * (v.dims()[0] - 1) as f64 * sz;
        let k = z_mm_to_slice_index(z, &v).unwrap();
        prop_assert!((k as f64 * sz - z).abs() <= sz / 2.0 + 1e-12);
    }
}

#[test]
fn saved_files_are_byte_stable() {
    let mut r = support::rng(4);
    let v = support::random_volume(&mut r, [3, 4, 5]);
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.mhd"), dir.path().join("b.mhd"));
    save_volume(&v, &a).unwrap();
    save_volume(&load_volume(&a).unwrap(), &b).unwrap();
    let raw = |p: &std::path::Path| std::fs::read(p.with_extension("raw")).unwrap();
    assert_eq!(raw(&a), raw(&b));
    let hdr = |p: &std::path::Path| std::fs::read_to_string(p).unwrap();
    assert_eq!(hdr(&a).replace("a.raw", "b.raw"), hdr(&b));
}
