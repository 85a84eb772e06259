mod oracles;

use proptest::prelude::*;
use rand::Rng;
use ttta_core::par::Execution;
use ttta_core::scorer::{
    build_bank, greedy_k_center, image_score, score_map, score_map_with, validation_stats, BankConfig,
};
use ttta_core::{FeatureMap, MemoryBank, ScoreMap};

fn random_features(rng: &mut rand_chacha::ChaCha8Rng, h: usize, w: usize, d: usize) -> FeatureMap {
    FeatureMap::new(h, w, d, (0..h * w * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn k_center_within_twice_optimal() {
    let mut rng = oracles::rng(31);
    let points: Vec<f64> = (0..100 * 8).map(|_| rng.random_range(0.0..1.0)).collect();
    let chosen = greedy_k_center(&points, 8, 10);
    assert_eq!(chosen.len(), 10);
    let greedy = oracles::covering_radius(&points, 8, &chosen);
    let optimal = oracles::optimal_k_center_radius(&points, 8, 10);
    assert!(optimal > 0.0);
    assert!(greedy <= 2.0 * optimal + 1e-12, "greedy {greedy} optimal {optimal}");
}

#[test]
fn k_center_small_instances_against_exhaustive_optimum() {
    let mut rng = oracles::rng(32);
    for _ in 0..20 {
        let n = rng.random_range(3..15);
        let k = rng.random_range(1..=3.min(n));
        let points: Vec<f64> = (0..n * 2).map(|_| rng.random_range(0.0..10.0)).collect();
        let chosen = greedy_k_center(&points, 2, k);
        let greedy = oracles::covering_radius(&points, 2, &chosen);
        let mut best = f64::INFINITY;
        // every k-subset by counting through n^k tuples
        let mut idx = vec![0usize; k];
        loop {
            best = best.min(oracles::covering_radius(&points, 2, &idx));
            let mut j = 0;
            while j < k {
                idx[j] += 1;
                if idx[j] < n {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == k {
                break;
            }
        }
        assert!((oracles::optimal_k_center_radius(&points, 2, k) - best).abs() < 1e-12);
        assert!(greedy <= 2.0 * best + 1e-12);
    }
}

#[test]
fn k_center_starts_at_largest_norm() {
    let points = vec![0.0, 0.0, 3.0, 4.0, -1.0, 0.0, 0.0, 0.5];
    assert_eq!(greedy_k_center(&points, 2, 4), vec![1, 2, 3, 0]);
}

#[test]
fn scores_match_exhaustive_scan() {
    let mut rng = oracles::rng(33);
    for _ in 0..10 {
        let entries: Vec<f32> = (0..20 * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bank = MemoryBank::from_entries(4, entries.clone()).unwrap();
        let f = random_features(&mut rng, 3, 3, 4);
        let s = score_map(&bank, &f).unwrap();
        for i in 0..9 {
            let q = f.pixel_flat(i);
            let mut best = f64::INFINITY;
            for e in entries.chunks(4) {
                let d: f64 = e.iter().zip(q).map(|(a, b)| (*a as f64 - *b as f64).powi(2)).sum();
                best = best.min(d);
            }
            assert!((s.values()[i] as f64 - best.sqrt()).abs() <= 1e-6);
        }
    }
}

#[test]
fn full_ratio_bank_contains_every_patch() {
    let mut rng = oracles::rng(34);
    let maps: Vec<FeatureMap> = (0..3).map(|_| random_features(&mut rng, 4, 4, 5)).collect();
    let bank = build_bank(&maps, &BankConfig { coreset_ratio: 1.0, ..Default::default() }, vec![]).unwrap();
    assert_eq!(bank.len(), 48);
    for m in &maps {
        assert!(score_map(&bank, m).unwrap().values().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn bank_is_deterministic_and_sized() {
    let mut rng = oracles::rng(35);
    let maps: Vec<FeatureMap> = (0..3).map(|_| random_features(&mut rng, 5, 6, 7)).collect();
    let config = BankConfig::default();
    let a = build_bank(&maps, &config, vec!["a".into()]).unwrap();
    let b = build_bank(&maps, &config, vec!["a".into()]).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 9);
    assert_eq!(a.projection_dim, 7);
    let other = build_bank(&maps, &BankConfig { seed: 1, ..config }, vec![]).unwrap();
    assert_eq!(other.len(), 9);
}

#[test]
fn bank_save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = oracles::rng(36);
    let maps: Vec<FeatureMap> = (0..2).map(|_| random_features(&mut rng, 4, 4, 3)).collect();
    let bank = build_bank(&maps, &BankConfig::default(), vec!["x/0".into(), "x/1".into()]).unwrap();
    bank.save(dir.path(), "bank").unwrap();
    assert_eq!(MemoryBank::load(dir.path(), "bank").unwrap(), bank);
}

#[test]
fn image_score_is_the_maximum() {
    let mut rng = oracles::rng(37);
    let s = oracles::random_map(&mut rng, 16, 16, 1000);
    let mut sorted = s.values().to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(image_score(&s), *sorted.last().unwrap());
}

#[test]
fn stats_match_two_pass_reference() {
    let mut rng = oracles::rng(38);
    let maps: Vec<ScoreMap> = (0..5)
        .map(|_| ScoreMap::new(4, 4, (0..16).map(|_| rng.random_range(0.0..5.0)).collect()).unwrap())
        .collect();
    let stats = validation_stats(&maps).unwrap();
    for i in 0..16 {
        let xs: Vec<f64> = maps.iter().map(|m| m.values()[i] as f64).collect();
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 5.0;
        assert!((stats.mean.values()[i] as f64 - mean).abs() < 1e-6);
        assert!((stats.std.values()[i] as f64 - var.sqrt()).abs() < 1e-6);
    }
    assert!(validation_stats(&maps[..1]).is_err());
    let constant = vec![ScoreMap::filled(2, 2, 3.0).unwrap(); 4];
    assert!(validation_stats(&constant).unwrap().std.values().iter().all(|&v| v == 0.0));
}

#[test]
fn execution_modes_agree() {
    let mut rng = oracles::rng(39);
    let entries: Vec<f32> = (0..50 * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
    let bank = MemoryBank::from_entries(6, entries).unwrap();
    let f = random_features(&mut rng, 20, 20, 6);
    assert_eq!(
        score_map_with(&bank, &f, Execution::Sequential).unwrap(),
        score_map_with(&bank, &f, Execution::Parallel).unwrap()
    );
}

proptest! {
    #[test]
    fn scores_ignore_bank_order(seed in any::<u64>(), m in 1usize..20) {
        let mut rng = oracles::rng(seed);
        let entries: Vec<f32> = (0..m * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut rows: Vec<&[f32]> = entries.chunks(3).collect();
        rows.reverse();
        rows.rotate_left(m / 2);
        let shuffled: Vec<f32> = rows.concat();
        let f = random_features(&mut rng, 4, 4, 3);
        let a = score_map(&MemoryBank::from_entries(3, entries.clone()).unwrap(), &f).unwrap();
        let b = score_map(&MemoryBank::from_entries(3, shuffled).unwrap(), &f).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn adding_entries_never_raises_scores(seed in any::<u64>(), m in 1usize..15, extra in 1usize..10) {
        let mut rng = oracles::rng(seed);
        let entries: Vec<f32> = (0..(m + extra) * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = random_features(&mut rng, 3, 5, 2);
        let small = score_map(&MemoryBank::from_entries(2, entries[..m * 2].to_vec()).unwrap(), &f).unwrap();
        let large = score_map(&MemoryBank::from_entries(2, entries).unwrap(), &f).unwrap();
        for (a, b) in small.values().iter().zip(large.values()) {
            prop_assert!(b <= a);
        }
    }
}
