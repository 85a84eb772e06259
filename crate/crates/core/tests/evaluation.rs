mod oracles;

use proptest::prelude::*;
use rand::Rng;
use ttta_core::baseline::{binarize_threshold, sweep_c, DEFAULT_SWEEP};
use ttta_core::metrics::{aggregate, auroc, prf1_image, ImageMetrics, ImageRecord};
use ttta_core::{MaskImage, PixelStats, ScoreMap};

#[test]
fn confusion_counts_by_hand() {
    let gt = MaskImage::from_fn(2, 3, |r, c| (r, c) == (0, 0) || (r, c) == (0, 1) || (r, c) == (1, 0));
    let pred = MaskImage::from_fn(2, 3, |r, c| (r, c) == (0, 0) || (r, c) == (0, 1) || (r, c) == (1, 2));
    let m = prf1_image(&pred, &gt, None).unwrap();
    assert_eq!((m.tp, m.fp, m.fn_), (2, 1, 1));
    for v in [m.precision, m.recall, m.f1] {
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
    }
    // exclusion drops the false positive
    let ex = MaskImage::from_fn(2, 3, |r, c| (r, c) == (1, 2));
    let m = prf1_image(&pred, &gt, Some(&ex)).unwrap();
    assert_eq!((m.tp, m.fp, m.fn_), (2, 0, 1));
    assert!(prf1_image(&pred, &MaskImage::empty(2, 3), None).is_err());
    let none = prf1_image(&MaskImage::empty(2, 3), &gt, None).unwrap();
    assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));
}

#[test]
fn auroc_by_hand() {
    // one inversion among 3 x 3 pairs
    let scores = [0.1, 0.4, 0.35, 0.8, 0.7, 0.2];
    let labels = [false, false, true, true, true, false];
    assert!((auroc(&scores, &labels).unwrap() - 8.0 / 9.0).abs() < 1e-12);
    assert!((auroc(&[1.0, 1.0], &[true, false]).unwrap() - 0.5).abs() < 1e-12);
    assert!(auroc(&[1.0, 2.0], &[true, true]).is_err());
    assert!(auroc(&[1.0], &[true, false]).is_err());
}

#[test]
fn macro_mean_over_classes() {
    let rec = |id: &str, class: &str, tp, fp, fn_| ImageRecord::new(id, class, ImageMetrics::from_counts(tp, fp, fn_));
    // class a: F1 1 and 0; class b: F1 0.5
    let report = aggregate(&[
        rec("a/1", "a", 1, 0, 0),
        rec("a/2", "a", 0, 1, 1),
        rec("b/1", "b", 1, 1, 1),
    ])
    .unwrap();
    assert_eq!(report.classes.len(), 2);
    assert_eq!(report.classes[0].1.f1, 0.5);
    assert_eq!(report.classes[1].1.f1, 0.5);
    assert_eq!(report.mean.f1, 0.5);
    assert_eq!(report.mean.images, 3);
    assert!(aggregate(&[]).is_err());
}

#[test]
fn sweep_picks_the_best_multiplier() {
    let stats = PixelStats {
        mean: ScoreMap::filled(4, 4, 0.0).unwrap(),
        std: ScoreMap::filled(4, 4, 1.0).unwrap(),
    };
    let gt = MaskImage::from_fn(4, 4, |r, _| r == 0);
    // the true region scores 3.5, a distractor row 2.5
    let s = ScoreMap::from_fn(4, 4, |r, _| match r {
        0 => 3.5,
        1 => 2.5,
        _ => 0.0,
    })
    .unwrap();
    let table = sweep_c(&[s], &stats, &[gt], &DEFAULT_SWEEP).unwrap();
    assert_eq!(table.best_c(), 3.0);
    assert_eq!(table.rows[0].predicted_anomalous, 8);
    assert_eq!(table.rows[2].predicted_anomalous, 0);
}

fn stats_case() -> impl Strategy<Value = (ScoreMap, PixelStats)> {
    (1usize..10, 1usize..10).prop_flat_map(|(h, w)| {
        let n = h * w;
        (
            prop::collection::vec(0i32..40, n),
            prop::collection::vec(-5i32..5, n),
            prop::collection::vec(0i32..6, n),
        )
            .prop_map(move |(s, m, sd)| {
                let f = |v: Vec<i32>| ScoreMap::new(h, w, v.into_iter().map(|x| x as f32).collect()).unwrap();
                (f(s), PixelStats { mean: f(m), std: f(sd) })
            })
    })
}

proptest! {
    #[test]
    fn baseline_shrinks_as_c_grows((s, stats) in stats_case(), a in 0.0f64..6.0, b in 0.0f64..6.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let loose = binarize_threshold(&s, &stats, lo).unwrap();
        let tight = binarize_threshold(&s, &stats, hi).unwrap();
        for i in 0..s.len() {
            prop_assert!(!tight.is_on_flat(i) || loose.is_on_flat(i));
        }
    }

    #[test]
    fn baseline_commutes_with_offsets((s, stats) in stats_case(), k in -20i32..20, c in 0i32..5) {
        let k = k as f32;
        let shifted = PixelStats { mean: stats.mean.map(|v| v + k), std: stats.std.clone() };
        prop_assert_eq!(
            binarize_threshold(&s.map(|v| v + k), &shifted, c as f64).unwrap(),
            binarize_threshold(&s, &stats, c as f64).unwrap()
        );
    }

    #[test]
    fn auroc_matches_pair_counting(seed in any::<u64>(), n in 2usize..60) {
        let mut rng = oracles::rng(seed);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let got = auroc(&scores, &labels).unwrap();
        prop_assert!((got - oracles::auroc_pairs(&scores, &labels)).abs() < 1e-12);
        let warped: Vec<f64> = scores.iter().map(|v| (v * 0.3).exp() * 5.0 - 2.0).collect();
        prop_assert!((auroc(&warped, &labels).unwrap() - got).abs() < 1e-12);
    }

    #[test]
    fn aggregation_ignores_record_order(seed in any::<u64>(), n in 1usize..30) {
        let mut rng = oracles::rng(seed);
        let records: Vec<ImageRecord> = (0..n)
            .map(|i| {
                let class = ["a", "b", "c"][rng.random_range(0..3)];
                let m = ImageMetrics::from_counts(rng.random_range(0..5), rng.random_range(0..5), rng.random_range(0..5));
                ImageRecord::new(format!("{class}/{i:03}"), class, m)
            })
            .collect();
        let mut shuffled = records.clone();
        shuffled.reverse();
        shuffled.rotate_left(n / 3);
        prop_assert_eq!(aggregate(&records).unwrap(), aggregate(&shuffled).unwrap());
    }
}
