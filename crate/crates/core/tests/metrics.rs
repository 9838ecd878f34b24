mod support;

use std::collections::BTreeSet;

use l3scan_core::metrics::*;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use support::{mean, rng, sd, t_p_quadrature};

fn masks(n: usize) -> impl Strategy<Value = (Vec<bool>, Vec<bool>)> {
    (prop::collection::vec(any::<bool>(), n), prop::collection::vec(any::<bool>(), n))
}

proptest! {
    #[test]
    fn dice_is_symmetric_and_bounded((a, b) in masks(40)) {
        let d = dice(&a, &b).unwrap();
        prop_assert_eq!(d, dice(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(dice(&a, &a).unwrap(), 1.0);
        let inter = a.iter().zip(&b).filter(|(x, y)| **x && **y).count() as f64;
        let (na, nb) = (a.iter().filter(|v| **v).count() as f64, b.iter().filter(|v| **v).count() as f64);
        if na + nb > 0.0 {
            prop_assert!((d - 2.0 * inter / (na + nb)).abs() <= 1e-12);
        }
    }

    #[test]
    fn area_is_additive((a, b) in masks(50), sy in 0.3f64..2.0, sx in 0.3f64..2.0) {
        let only_b: Vec<bool> = a.iter().zip(&b).map(|(x, y)| *y && !*x).collect();
        let union: Vec<bool> = a.iter().zip(&only_b).map(|(x, y)| *x || *y).collect();
        let s = [sy, sx];
        let sum = muscle_area_cm2(&a, s, None, None).unwrap() + muscle_area_cm2(&only_b, s, None, None).unwrap();
        prop_assert!((muscle_area_cm2(&union, s, None, None).unwrap() - sum).abs() <= 1e-12 * sum.max(1.0));
    }

    #[test]
    fn bland_altman_swap_mirrors(a in prop::collection::vec(-100.0f64..100.0, 2..30), seed in 0u64..100) {
        let mut r = rng(seed);
        let b: Vec<f64> = a.iter().map(|v| v + r.gen_range(-5.0..5.0)).collect();
        let ab = bland_altman(&a, &b).unwrap();
        let ba = bland_altman(&b, &a).unwrap();
        prop_assert!((ab.mean_diff + ba.mean_diff).abs() <= 1e-12);
        prop_assert!((ab.loa_low + ba.loa_high).abs() <= 1e-9);
        prop_assert!((ab.loa_high + ba.loa_low).abs() <= 1e-9);
        let same = bland_altman(&a, &a).unwrap();
        prop_assert_eq!((same.mean_diff, same.sd_diff, same.loa_low, same.loa_high), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn kfold_partitions_ids(n in 1usize..60, k in 2usize..6, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let ids: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
        let s = kfold_split(&ids, k, seed).unwrap();
        let mut seen = BTreeSet::new();
        for f in &s.folds {
            for id in f {
                prop_assert!(seen.insert(id.clone()), "duplicate {}", id);
            }
        }
        prop_assert_eq!(seen, ids.iter().cloned().collect::<BTreeSet<_>>());
        let sizes: Vec<usize> = s.folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for i in 0..k {
            let train = s.train_ids(i);
            prop_assert!(s.folds[i].iter().all(|id| !train.contains(id)));
            prop_assert_eq!(train.len() + s.folds[i].len(), n);
        }
    }

    #[test]
    fn singleton_summary(v in 0.0f64..100.0) {
        let s = Stats::of(&[v]).unwrap();
        prop_assert_eq!((s.std, s.mean, s.median, s.max), (0.0, v, v, v));
    }
}

#[test]
fn bland_altman_and_summary_match_direct_formulas() {
    for seed in 0..50 {
        let mut r = rng(seed);
        let n = r.gen_range(2..40);
        let a: Vec<f64> = (0..n).map(|_| r.gen_range(50.0..200.0)).collect();
        let b: Vec<f64> = a.iter().map(|v| v + r.gen_range(-10.0..12.0)).collect();
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let ba = bland_altman(&a, &b).unwrap();
        let (m, s) = (mean(&d), sd(&d));
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * y.abs().max(1.0);
        assert!(close(ba.mean_diff, m) && close(ba.sd_diff, s));
        assert!(close(ba.loa_low, m - 1.96 * s) && close(ba.loa_high, m + 1.96 * s));

        let errs: Vec<(f64, f64)> = a.iter().map(|v| (v / 10.0, v / 25.0)).collect();
        let sum = summarize_errors(&errs).unwrap();
        let mm: Vec<f64> = errs.iter().map(|e| e.0).collect();
        let mut sorted = mm.clone();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
        assert!(close(sum.mm.mean, mean(&mm)) && close(sum.mm.std, sd(&mm)));
        assert!(close(sum.mm.median, median) && sum.mm.max == sorted[n - 1]);
        assert_eq!(sum.mm.count_gt_10, mm.iter().filter(|&&v| v > 10.0).count());
        assert!(sum.mm.max >= sum.mm.median && sum.mm.count_gt_10 <= n);

        let img: Vec<f64> = (0..n).map(|_| r.gen_range(-100.0..200.0)).collect();
        let m: Vec<bool> = (0..n).map(|_| r.gen_bool(0.5)).collect();
        if m.iter().any(|&v| v) {
            let sel: Vec<f64> = img.iter().zip(&m).filter(|(_, &k)| k).map(|(v, _)| *v).collect();
            assert!(close(muscle_attenuation(&m, &img).unwrap(), mean(&sel)));
        }
    }
}

#[test]
fn t_test_matches_quadrature() {
    for seed in 0..20 {
        let mut r = rng(1000 + seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let a: Vec<f64> = (0..10).map(|_| noise.sample(&mut r)).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 0.4 + noise.sample(&mut r)).collect();
        let t = paired_t_test(&a, &b).unwrap();
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let t_direct = mean(&d) / (sd(&d) / 10f64.sqrt());
        assert!((t.t - t_direct).abs() <= 1e-12 * t_direct.abs().max(1.0));
        let p = t_p_quadrature(t.t, 9);
        assert!((t.p - p).abs() < 1e-8, "seed {seed}: {} vs {p}", t.p);
    }
}
