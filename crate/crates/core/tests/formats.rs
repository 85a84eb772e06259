mod oracles;

use proptest::prelude::*;
use rand::Rng;
use ttta_core::tensor::{
    decode_mask, encode_mask, parse_manifest, read_manifest, read_mask, read_score_map, write_manifest,
    write_mask, write_score_map, SampleRecord, Tensor, TensorError,
};
use ttta_core::{MaskImage, ScoreMap};

/// Minimal P5 reader written from the netpbm description: whitespace
/// separated header tokens, `#` comments, one whitespace byte, raw pixels.
fn parse_p5(bytes: &[u8]) -> (usize, usize, u32, Vec<u8>) {
    let mut pos = 0;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if bytes[pos] == b'#' {
            while bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        tokens.push(String::from_utf8(bytes[start..pos].to_vec()).unwrap());
    }
    pos += 1;
    assert_eq!(tokens[0], "P5");
    let w: usize = tokens[1].parse().unwrap();
    let h: usize = tokens[2].parse().unwrap();
    (w, h, tokens[3].parse().unwrap(), bytes[pos..].to_vec())
}

#[test]
fn masks_read_by_an_independent_parser() {
    let mut rng = oracles::rng(51);
    for _ in 0..20 {
        let (h, w) = (rng.random_range(1..30), rng.random_range(1..30));
        let mask = oracles::random_mask(&mut rng, h, w, 0.4);
        let (pw, ph, maxval, pixels) = parse_p5(&encode_mask(&mask));
        assert_eq!((pw, ph, maxval), (w, h, 255));
        assert_eq!(pixels, mask.pixels());
        assert_eq!(decode_mask(&encode_mask(&mask)).unwrap(), mask);
    }
}

#[test]
fn foreign_p5_files_are_accepted() {
    let mut bytes = b"P5\n# written elsewhere\n3 2\n255\n".to_vec();
    bytes.extend([0, 1, 255, 0, 0, 7]);
    let mask = decode_mask(&bytes).unwrap();
    assert_eq!(mask.pixels(), &[0, 255, 255, 0, 0, 255]);
    assert!(decode_mask(b"P2\n1 1\n255\n0").is_err());
    assert!(decode_mask(b"P5\n2 2\n255\n\x00").is_err());
}

#[test]
fn files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let s = ScoreMap::from_fn(5, 7, |r, c| r as f32 * 0.5 - c as f32).unwrap();
    write_score_map(&s, dir.path().join("s.ttta")).unwrap();
    assert_eq!(read_score_map(dir.path().join("s.ttta")).unwrap(), s);
    let m = MaskImage::from_fn(5, 7, |r, c| (r + c) % 3 == 0);
    write_mask(&m, dir.path().join("m.pgm")).unwrap();
    assert_eq!(read_mask(dir.path().join("m.pgm")).unwrap(), m);
    let records = vec![
        SampleRecord {
            sample_id: "bottle/003".into(),
            score_path: Some("s/3.ttta".into()),
            feature_paths: vec!["f/a.ttta".into(), "f/b.ttta".into()],
            point_map_path: None,
            ground_truth_mask_path: Some("gt/3.pgm".into()),
        },
        SampleRecord {
            sample_id: "solo".into(),
            score_path: None,
            feature_paths: vec![],
            point_map_path: Some("xyz.ttta".into()),
            ground_truth_mask_path: None,
        },
    ];
    write_manifest(&records, dir.path().join("m.tsv")).unwrap();
    let back = read_manifest(dir.path().join("m.tsv")).unwrap();
    assert_eq!(back, records);
    assert_eq!(back[0].class_name(), "bottle");
    assert_eq!(back[1].class_name(), "all");
}

#[test]
fn manifest_rejects_malformed_lines() {
    assert!(parse_manifest("a\tb\tc\n").is_err());
    assert!(parse_manifest("../x\t\t\t\t\n").is_err());
    assert!(parse_manifest("/x\t\t\t\t\n").is_err());
    assert!(parse_manifest("x\t\t\t\t\nx\t\t\t\t\n").is_err());
    assert_eq!(parse_manifest("# header\n\nx\t\t\t\t\n").unwrap().len(), 1);
}

#[test]
fn tensor_errors_are_specific() {
    let good = Tensor::new(vec![2, 3], vec![0.0; 6]).unwrap().to_bytes().unwrap();
    assert!(matches!(Tensor::from_bytes(&good[..good.len() - 1]), Err(TensorError::Truncated { .. })));
    let mut long = good.clone();
    long.push(0);
    assert!(Tensor::from_bytes(&long).is_err());
    let mut zero = good.clone();
    zero[8..12].copy_from_slice(&0u32.to_le_bytes());
    assert!(Tensor::from_bytes(&zero).is_err());
    let mut rank = good.clone();
    rank[7] = 5;
    assert!(Tensor::from_bytes(&rank).is_err());
    let inf = Tensor::new(vec![2], vec![0.0, f32::INFINITY]).unwrap();
    assert!(matches!(inf.to_bytes(), Err(TensorError::NonFinite { index: 1, .. })));
}

fn tensor() -> impl Strategy<Value = Tensor> {
    prop::collection::vec(1usize..6, 1..=4).prop_flat_map(|dims| {
        let n: usize = dims.iter().product();
        prop::collection::vec(-1e6f32..1e6, n).prop_map(move |v| Tensor::new(dims.clone(), v).unwrap())
    })
}

proptest! {
    #[test]
    fn tensor_bytes_round_trip(t in tensor()) {
        let bytes = t.to_bytes().unwrap();
        prop_assert_eq!(bytes.len(), 8 + 4 * t.dims().len() + 4 * t.values().len());
        prop_assert_eq!(Tensor::from_bytes(&bytes).unwrap(), t);
    }

    #[test]
    fn mask_bytes_round_trip(h in 1usize..40, w in 1usize..40, seed in any::<u64>()) {
        let mut rng = oracles::rng(seed);
        let m = oracles::random_mask(&mut rng, h, w, 0.5);
        prop_assert_eq!(decode_mask(&encode_mask(&m)).unwrap(), m);
    }
}
