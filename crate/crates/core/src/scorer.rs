//! Nearest-neighbor scoring against a coreset memory bank of nominal patch
//! features, plus per-pixel validation statistics.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::maps::{check_same_size, FeatureMap, ScoreMap, ShapeError};
use crate::par::{self, Execution};
use crate::tensor::{read_tensor, write_tensor, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("no feature maps given")]
    NoInput,
    #[error("coreset ratio {0} outside (0, 1]")]
    Ratio(f64),
    #[error("projection scale {0} outside (0, 1]")]
    ProjectionScale(f64),
    #[error("feature dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("non-finite feature at patch {0}")]
    NonFinite(usize),
    #[error("need at least 2 validation maps, got {0}")]
    TooFewMaps(usize),
    #[error("bank manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BankConfig {
    pub coreset_ratio: f64,
    /// Projected dimension is `ceil(projection_scale * D)`.
    pub projection_scale: f64,
    pub seed: u64,
}

impl Default for BankConfig {
    fn default() -> Self {
        Self {
            coreset_ratio: 0.10,
            projection_scale: 0.9,
            seed: 0,
        }
    }
}

/// Nominal patch features selected by greedy k-center.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    dim: usize,
    /// `len x dim`, in selection order.
    entries: Vec<f32>,
    pub config: BankConfig,
    pub projection_dim: usize,
    pub provenance: Vec<String>,
}

impl MemoryBank {
    pub fn from_entries(dim: usize, entries: Vec<f32>) -> Result<Self, ScorerError> {
        if dim == 0 || entries.is_empty() || !entries.len().is_multiple_of(dim) {
            return Err(ScorerError::Dimension {
                expected: dim,
                actual: entries.len(),
            });
        }
        if let Some(i) = entries.iter().position(|v| !v.is_finite()) {
            return Err(ScorerError::NonFinite(i / dim));
        }
        Ok(Self {
            dim,
            entries,
            config: BankConfig {
                coreset_ratio: 1.0,
                ..Default::default()
            },
            projection_dim: dim,
            provenance: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, i: usize) -> &[f32] {
        &self.entries[i * self.dim..(i + 1) * self.dim]
    }

    /// Euclidean distance from `query` to its nearest entry.
    pub fn nearest_distance(&self, query: &[f32]) -> f32 {
        let best = self
            .entries
            .chunks_exact(self.dim)
            .map(|e| sq_dist(e, query))
            .fold(f64::INFINITY, f64::min);
        best.sqrt() as f32
    }

    /// Writes `<stem>.ttta` (entries, `len x dim`) and `<stem>.txt`.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<(), ScorerError> {
        let dir = dir.as_ref();
        let tensor = Tensor::new(vec![self.len(), self.dim], self.entries.clone())?;
        write_tensor(&tensor, dir.join(format!("{stem}.ttta")))?;
        let mut text = String::new();
        let _ = writeln!(text, "coreset_ratio\t{}", self.config.coreset_ratio);
        let _ = writeln!(text, "projection_scale\t{}", self.config.projection_scale);
        let _ = writeln!(text, "projection_dim\t{}", self.projection_dim);
        let _ = writeln!(text, "seed\t{}", self.config.seed);
        for source in &self.provenance {
            let _ = writeln!(text, "source\t{source}");
        }
        let path = dir.join(format!("{stem}.txt"));
        fs::write(&path, text).map_err(|source| ScorerError::Io { path, source })
    }

    pub fn load(dir: impl AsRef<Path>, stem: &str) -> Result<Self, ScorerError> {
        let dir = dir.as_ref();
        let (dims, entries) = read_tensor(dir.join(format!("{stem}.ttta")))?.into_parts();
        let [_, dim] = dims[..] else {
            return Err(TensorError::Rank {
                expected: 2,
                dims,
            }
            .into());
        };
        let mut bank = Self::from_entries(dim, entries)?;
        let path = dir.join(format!("{stem}.txt"));
        let text = fs::read_to_string(&path).map_err(|source| ScorerError::Io {
            path: path.clone(),
            source,
        })?;
        let bad = |reason: String| ScorerError::Manifest {
            path: path.clone(),
            reason,
        };
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (key, value) = line
                .split_once('\t')
                .ok_or_else(|| bad(format!("malformed line {line:?}")))?;
            let num = |v: &str| v.parse::<f64>().map_err(|e| bad(format!("{key}: {e}")));
            match key {
                "coreset_ratio" => bank.config.coreset_ratio = num(value)?,
                "projection_scale" => bank.config.projection_scale = num(value)?,
                "projection_dim" => bank.projection_dim = num(value)? as usize,
                "seed" => {
                    bank.config.seed = value.parse().map_err(|e| bad(format!("seed: {e}")))?
                }
                "source" => bank.provenance.push(value.to_string()),
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        Ok(bank)
    }
}

#[inline]
fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// Selects `ceil(ratio * N)` patches by greedy farthest-point (k-center) on a
/// seeded Gaussian random projection of the features, starting from the
/// patch with the largest projected norm. Ties go to the lower index.
pub fn build_bank(
    nominal: &[FeatureMap],
    config: &BankConfig,
    provenance: Vec<String>,
) -> Result<MemoryBank, ScorerError> {
    let first = nominal.first().ok_or(ScorerError::NoInput)?;
    if !(config.coreset_ratio > 0.0 && config.coreset_ratio <= 1.0) {
        return Err(ScorerError::Ratio(config.coreset_ratio));
    }
    if !(config.projection_scale > 0.0 && config.projection_scale <= 1.0) {
        return Err(ScorerError::ProjectionScale(config.projection_scale));
    }
    let dim = first.channels();
    let mut patches = Vec::new();
    for f in nominal {
        if f.channels() != dim {
            return Err(ScorerError::Dimension {
                expected: dim,
                actual: f.channels(),
            });
        }
        patches.extend_from_slice(f.values());
    }
    if let Some(i) = patches.iter().position(|v| !v.is_finite()) {
        return Err(ScorerError::NonFinite(i / dim));
    }
    let n = patches.len() / dim;
    // absorb representation error such as 0.1 * 30 = 3.0000000000000004
    let target = ((config.coreset_ratio * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let projection_dim = ((config.projection_scale * dim as f64).ceil() as usize).clamp(1, dim);

    let projected = project(&patches, dim, projection_dim, config.seed);
    let order = greedy_k_center(&projected, projection_dim, target);

    let mut entries = Vec::with_capacity(target * dim);
    for &i in &order {
        entries.extend_from_slice(&patches[i * dim..(i + 1) * dim]);
    }
    Ok(MemoryBank {
        dim,
        entries,
        config: *config,
        projection_dim,
        provenance,
    })
}

fn project(patches: &[f32], dim: usize, out_dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (out_dim as f64).sqrt();
    let matrix: Vec<f64> = (0..dim * out_dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .map(|v: f64| v * scale)
        .collect();
    let n = patches.len() / dim;
    let mut out = vec![0.0; n * out_dim];
    par::for_each_chunk_mut(Execution::Parallel, &mut out, out_dim, |i, row| {
        let x = &patches[i * dim..(i + 1) * dim];
        for (j, o) in row.iter_mut().enumerate() {
            *o = x
                .iter()
                .enumerate()
                .map(|(k, &v)| v as f64 * matrix[k * out_dim + j])
                .sum();
        }
    });
    out
}

/// Greedy farthest-point order over `points` (`n x dim`), `k` picks.
pub fn greedy_k_center(points: &[f64], dim: usize, k: usize) -> Vec<usize> {
    let n = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let norm2 = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
    let d2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut start = 0;
    let mut start_norm = f64::NEG_INFINITY;
    for i in 0..n {
        let v = norm2(row(i));
        if v > start_norm {
            start = i;
            start_norm = v;
        }
    }
    let mut selected = Vec::with_capacity(k);
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut chosen = vec![false; n];
    let mut next = start;
    while selected.len() < k {
        selected.push(next);
        chosen[next] = true;
        let center = row(next);
        par::for_each_chunk_mut(Execution::Parallel, &mut min_d2, 1024, |chunk, block| {
            let base = chunk * 1024;
            for (j, m) in block.iter_mut().enumerate() {
                let d = d2(row(base + j), center);
                if d < *m {
                    *m = d;
                }
            }
        });
        if selected.len() == k {
            break;
        }
        let mut best = f64::NEG_INFINITY;
        for (i, &m) in min_d2.iter().enumerate() {
            if !chosen[i] && m > best {
                best = m;
                next = i;
            }
        }
    }
    selected
}

/// Distance from each patch of `features` to its nearest bank entry.
pub fn score_map(bank: &MemoryBank, features: &FeatureMap) -> Result<ScoreMap, ScorerError> {
    score_map_with(bank, features, Execution::Parallel)
}

pub fn score_map_with(
    bank: &MemoryBank,
    features: &FeatureMap,
    exec: Execution,
) -> Result<ScoreMap, ScorerError> {
    if features.channels() != bank.dim() {
        return Err(ScorerError::Dimension {
            expected: bank.dim(),
            actual: features.channels(),
        });
    }
    let scores = par::map_range(exec, features.pixel_count(), |i| {
        bank.nearest_distance(features.pixel_flat(i))
    });
    Ok(ScoreMap::new(features.height(), features.width(), scores)?)
}

/// Maximum pixel score.
pub fn image_score(s: &ScoreMap) -> f32 {
    s.values().iter().copied().fold(f32::NEG_INFINITY, f32::max)
}

/// Per-pixel mean and population standard deviation over validation maps.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelStats {
    pub mean: ScoreMap,
    pub std: ScoreMap,
}

pub fn validation_stats(maps: &[ScoreMap]) -> Result<PixelStats, ScorerError> {
    if maps.len() < 2 {
        return Err(ScorerError::TooFewMaps(maps.len()));
    }
    let (h, w) = maps[0].size();
    for m in &maps[1..] {
        check_same_size((h, w), m.size())?;
    }
    // Welford update per pixel
    let mut mean = vec![0f64; h * w];
    let mut m2 = vec![0f64; h * w];
    for (k, m) in maps.iter().enumerate() {
        let count = (k + 1) as f64;
        for ((mu, acc), &x) in mean.iter_mut().zip(m2.iter_mut()).zip(m.values()) {
            let x = x as f64;
            let delta = x - *mu;
            *mu += delta / count;
            *acc += delta * (x - *mu);
        }
    }
    let n = maps.len() as f64;
    let std = m2.iter().map(|&v| (v.max(0.0) / n).sqrt() as f32).collect();
    Ok(PixelStats {
        mean: ScoreMap::new(h, w, mean.into_iter().map(|v| v as f32).collect())?,
        std: ScoreMap::new(h, w, std)?,
    })
}
