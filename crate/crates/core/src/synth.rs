//! Synthetic scenes and a reproducible comparison harness.
//!
//! Each scene has a blob-shaped ground truth, dense features where anomalous
//! pixels are shifted along a scene-specific direction, and a score map whose
//! overall gain varies randomly from image to image. The ranking of scores
//! inside one image is informative while a fixed per-pixel threshold is not,
//! which is the regime where per-sample classifiers pay off.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::classifier::SegmentConfig;
use crate::maps::{FeatureMap, MaskImage, ScoreMap};
use crate::metrics::{aggregate, auroc, prf1_image, EvalReport, ImageRecord, MetricsError};
use crate::par::{self, Execution};
use crate::pipeline::{segment_sample, Method, PipelineError, SampleInputs};
use crate::scorer::{image_score, validation_stats, PixelStats, ScorerError};
use crate::tensor::{
    read_feature_map, read_manifest, read_mask, read_score_map, write_feature_map, write_manifest,
    write_mask, write_score_map, ManifestError, MaskError, SampleRecord, TensorError,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Standard deviation of the per-pixel feature noise.
    pub feature_noise: f64,
    /// Standard deviation of the per-scene base feature vector entries.
    pub base_scale: f64,
    /// Length of the shift applied to anomalous pixel features.
    pub anomaly_shift: f64,
    pub min_blobs: usize,
    pub max_blobs: usize,
    pub min_radius: usize,
    pub max_radius: usize,
    /// Box blur radius applied to the anomaly indicator in the score map.
    pub score_blur: usize,
    /// Score contribution of a fully anomalous pixel before the gain.
    pub score_amplitude: f64,
    /// Scale of the half-normal score noise before the gain.
    pub score_noise: f64,
    /// Per-image gain drawn uniformly from this range.
    pub gain_range: (f64, f64),
    /// Overrides the random gain when set.
    pub fixed_gain: Option<f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            channels: 16,
            feature_noise: 1.0,
            base_scale: 2.0,
            anomaly_shift: 10.0,
            min_blobs: 1,
            max_blobs: 3,
            min_radius: 4,
            max_radius: 10,
            score_blur: 2,
            score_amplitude: 1.0,
            score_noise: 0.15,
            gain_range: (0.5, 2.0),
            fixed_gain: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub gt: MaskImage,
    pub features: FeatureMap,
    pub scores: ScoreMap,
    pub gain: f64,
}

const TEST_STREAM_OFFSET: u64 = 1 << 32;

/// Generates one scene. Scenes are independent streams of the same seed, so
/// scene `index` does not depend on how many others are generated.
pub fn generate_scene(config: &SynthConfig, seed: u64, index: u64, anomalous: bool) -> SynthScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(if anomalous { TEST_STREAM_OFFSET + index } else { index });
    let (h, w, d) = (config.height, config.width, config.channels);

    let mut indicator = vec![false; h * w];
    if anomalous {
        let blobs = rng.random_range(config.min_blobs..=config.max_blobs.max(config.min_blobs));
        for _ in 0..blobs {
            let radius = rng.random_range(config.min_radius..=config.max_radius.max(config.min_radius));
            let cr = rng.random_range(0..h) as isize;
            let cc = rng.random_range(0..w) as isize;
            let r2 = (radius * radius) as isize;
            for r in 0..h as isize {
                for c in 0..w as isize {
                    if (r - cr).pow(2) + (c - cc).pow(2) <= r2 {
                        indicator[r as usize * w + c as usize] = true;
                    }
                }
            }
        }
    }
    let gt = MaskImage::from_bools(h, w, &indicator);

    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let base: Vec<f64> = (0..d).map(|_| normal(&mut rng) * config.base_scale).collect();
    let mut direction: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    direction.iter_mut().for_each(|v| *v /= norm);
    let mut features = Vec::with_capacity(h * w * d);
    for &is_anomalous in &indicator {
        for k in 0..d {
            let shift = if is_anomalous { config.anomaly_shift * direction[k] } else { 0.0 };
            features.push((base[k] + shift + config.feature_noise * normal(&mut rng)) as f32);
        }
    }
    let features = FeatureMap::new(h, w, d, features).expect("scene dims are positive");

    let gain = config
        .fixed_gain
        .unwrap_or_else(|| rng.random_range(config.gain_range.0..=config.gain_range.1));
    let blurred = box_blur(&indicator, h, w, config.score_blur);
    let scores: Vec<f32> = blurred
        .iter()
        .map(|&b| {
            let noise = config.score_noise * normal(&mut rng).abs();
            (gain * (config.score_amplitude * b + noise)) as f32
        })
        .collect();
    let scores = ScoreMap::new(h, w, scores).expect("scene dims are positive");
    SynthScene {
        gt,
        features,
        scores,
        gain,
    }
}

/// Mean over the clipped `(2r+1)^2` window.
fn box_blur(indicator: &[bool], h: usize, w: usize, radius: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let (r0, r1) = (r.saturating_sub(radius), (r + radius).min(h - 1));
            let (c0, c1) = (c.saturating_sub(radius), (c + radius).min(w - 1));
            let mut on = 0usize;
            for rr in r0..=r1 {
                on += indicator[rr * w + c0..=rr * w + c1].iter().filter(|&&b| b).count();
            }
            out[r * w + c] = on as f64 / ((r1 - r0 + 1) * (c1 - c0 + 1)) as f64;
        }
    }
    out
}

/// Nominal validation scenes and anomalous test scenes held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub validation: Vec<SynthScene>,
    pub test: Vec<SynthScene>,
}

pub fn generate_dataset(
    config: &SynthConfig,
    n_val_nominal: usize,
    n_test_anomalous: usize,
    seed: u64,
    exec: Execution,
) -> SynthDataset {
    let validation = par::map_range(exec, n_val_nominal, |i| generate_scene(config, seed, i as u64, false));
    let test = par::map_range(exec, n_test_anomalous, |i| generate_scene(config, seed, i as u64, true));
    SynthDataset { validation, test }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("need at least one validation and one test scene")]
    EmptySplit,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("sample {id}: missing {what}")]
    Missing { id: String, what: &'static str },
    #[error("sample {id}: {source}")]
    Sample {
        id: String,
        #[source]
        source: PipelineError,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub const VALIDATION_MANIFEST: &str = "validation.tsv";
pub const TEST_MANIFEST: &str = "test.tsv";

/// Writes scenes as tensor files, P5 masks and two manifests under `dir`.
/// Sample ids are `synth/val_NNNN` and `synth/test_NNNN`.
pub fn generate_split(
    dir: impl AsRef<Path>,
    n_val_nominal: usize,
    n_test_anomalous: usize,
    config: &SynthConfig,
    seed: u64,
    exec: Execution,
) -> Result<(), SynthError> {
    if n_val_nominal == 0 || n_test_anomalous == 0 {
        return Err(SynthError::EmptySplit);
    }
    let dir = dir.as_ref();
    let data = generate_dataset(config, n_val_nominal, n_test_anomalous, seed, exec);
    for (split, scenes, manifest) in [
        ("val", &data.validation, VALIDATION_MANIFEST),
        ("test", &data.test, TEST_MANIFEST),
    ] {
        let sub = dir.join(split);
        fs::create_dir_all(&sub).map_err(|source| SynthError::Io {
            path: sub.clone(),
            source,
        })?;
        let mut records = Vec::with_capacity(scenes.len());
        for (i, scene) in scenes.iter().enumerate() {
            let stem = format!("{split}/{i:04}");
            let record = SampleRecord {
                sample_id: format!("synth/{split}_{i:04}"),
                score_path: Some(format!("{stem}.score.ttta")),
                feature_paths: vec![format!("{stem}.feat.ttta")],
                point_map_path: None,
                ground_truth_mask_path: Some(format!("{stem}.gt.pgm")),
            };
            write_score_map(&scene.scores, dir.join(record.score_path.as_ref().unwrap()))?;
            write_feature_map(&scene.features, dir.join(&record.feature_paths[0]))?;
            write_mask(&scene.gt, dir.join(record.ground_truth_mask_path.as_ref().unwrap()))?;
            records.push(record);
        }
        write_manifest(&records, dir.join(manifest))?;
    }
    Ok(())
}

fn load_scenes(dir: &Path, manifest: &str) -> Result<Vec<SynthScene>, SynthError> {
    let records = read_manifest(dir.join(manifest))?;
    records
        .iter()
        .map(|r| {
            let missing = |what| SynthError::Missing {
                id: r.sample_id.clone(),
                what,
            };
            let scores = read_score_map(dir.join(r.score_path.as_ref().ok_or_else(|| missing("score map"))?))?;
            let features = read_feature_map(dir.join(r.feature_paths.first().ok_or_else(|| missing("features"))?))?;
            let gt = read_mask(dir.join(
                r.ground_truth_mask_path
                    .as_ref()
                    .ok_or_else(|| missing("ground truth"))?,
            ))?;
            Ok(SynthScene {
                gt,
                features,
                scores,
                gain: f64::NAN,
            })
        })
        .collect()
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<SynthDataset, SynthError> {
    let dir = dir.as_ref();
    Ok(SynthDataset {
        validation: load_scenes(dir, VALIDATION_MANIFEST)?,
        test: load_scenes(dir, TEST_MANIFEST)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub method: Method,
    pub report: EvalReport,
    pub masks: Vec<MaskImage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub methods: Vec<MethodResult>,
    /// Pixel AUROC of the raw scores over validation and test scenes.
    pub p_auroc: f64,
    /// Image AUROC of the max score over validation and test scenes.
    pub i_auroc: f64,
}

impl ExperimentReport {
    pub fn get(&self, method: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.method == method)
    }

    pub fn mean_f1(&self, method: Method) -> Option<f64> {
        self.get(method).map(|m| m.report.mean.f1)
    }

    /// Best mean F1 among threshold methods.
    pub fn best_threshold(&self) -> Option<(Method, f64)> {
        self.methods
            .iter()
            .filter(|m| m.method.needs_stats())
            .map(|m| (m.method, m.report.mean.f1))
            .fold(None, |best, cur| match best {
                Some((_, f)) if f >= cur.1 => best,
                _ => Some(cur),
            })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("method\tprecision\trecall\tf1\timages\n");
        for m in &self.methods {
            let r = &m.report.mean;
            let _ = writeln!(
                out,
                "{}\t{:.6}\t{:.6}\t{:.6}\t{}",
                m.method, r.precision, r.recall, r.f1, r.images
            );
        }
        let _ = writeln!(out, "p_auroc\t{:.6}", self.p_auroc);
        let _ = writeln!(out, "i_auroc\t{:.6}", self.i_auroc);
        out
    }
}

/// Validation statistics from the nominal scenes, every method on every
/// test scene, macro-averaged F1 per method.
pub fn run_experiment(
    data: &SynthDataset,
    methods: &[Method],
    config: &SegmentConfig,
    exec: Execution,
) -> Result<ExperimentReport, SynthError> {
    if data.validation.is_empty() || data.test.is_empty() {
        return Err(SynthError::EmptySplit);
    }
    let val_scores: Vec<ScoreMap> = data.validation.iter().map(|s| s.scores.clone()).collect();
    let stats: Option<PixelStats> = if methods.iter().any(|m| m.needs_stats()) {
        Some(validation_stats(&val_scores)?)
    } else {
        None
    };
    let mut results = Vec::with_capacity(methods.len());
    for &method in methods {
        let outputs = par::map_range(exec, data.test.len(), |i| {
            let scene = &data.test[i];
            let inputs = SampleInputs {
                scores: &scene.scores,
                features: Some(&scene.features),
                exclude: None,
            };
            segment_sample(method, &inputs, stats.as_ref(), config)
        });
        let mut masks = Vec::with_capacity(outputs.len());
        let mut records = Vec::new();
        for (i, out) in outputs.into_iter().enumerate() {
            let id = format!("synth/test_{i:04}");
            let out = out.map_err(|source| SynthError::Sample {
                id: id.clone(),
                source,
            })?;
            let gt = &data.test[i].gt;
            if gt.any_on() {
                records.push(ImageRecord::new(id, "synth", prf1_image(&out.mask, gt, None)?));
            }
            masks.push(out.mask);
        }
        results.push(MethodResult {
            method,
            report: aggregate(&records)?,
            masks,
        });
    }

    let all = data.validation.iter().chain(&data.test);
    let mut pixel_scores = Vec::new();
    let mut pixel_labels = Vec::new();
    let mut image_scores = Vec::new();
    let mut image_labels = Vec::new();
    for scene in all {
        pixel_scores.extend(scene.scores.values().iter().map(|&v| v as f64));
        pixel_labels.extend(scene.gt.pixels().iter().map(|&p| p != 0));
        image_scores.push(image_score(&scene.scores) as f64);
        image_labels.push(scene.gt.any_on());
    }
    Ok(ExperimentReport {
        methods: results,
        p_auroc: auroc(&pixel_scores, &pixel_labels)?,
        i_auroc: auroc(&image_scores, &image_labels)?,
    })
}
