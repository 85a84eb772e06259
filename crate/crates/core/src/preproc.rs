//! Spatial alignment of feature maps and plane-based background removal.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::maps::{check_same_size, FeatureMap, MaskImage, PointMap, ShapeError};
use crate::par::{self, Execution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocError {
    #[error("target size must be positive, got {height}x{width}")]
    TargetSize { height: usize, width: usize },
    #[error("no feature maps to concatenate")]
    NothingToConcat,
    #[error("need at least 3 valid points, found {0}")]
    TooFewPoints(usize),
    #[error("every sampled triple was collinear after {0} attempts")]
    Degenerate(usize),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

/// Resamples every channel to `height x width` with bilinear weights.
///
/// Output pixel `(r, c)` reads source coordinate
/// `((r + 0.5) * H_f / H - 0.5, (c + 0.5) * W_f / W - 0.5)`, clamped to the
/// source grid (half-pixel centers). Equal sizes return a copy.
pub fn upsample_bilinear(
    f: &FeatureMap,
    height: usize,
    width: usize,
) -> Result<FeatureMap, PreprocError> {
    if height == 0 || width == 0 {
        return Err(PreprocError::TargetSize { height, width });
    }
    if f.size() == (height, width) {
        return Ok(f.clone());
    }
    let ch = f.channels();
    let rows = axis_taps(f.height(), height);
    let cols = axis_taps(f.width(), width);
    let mut out = vec![0f32; height * width * ch];
    par::for_each_chunk_mut(Execution::Parallel, &mut out, width * ch, |r, row_out| {
        let (r0, r1, wr) = rows[r];
        for (c, &(c0, c1, wc)) in cols.iter().enumerate() {
            let p00 = f.pixel(r0, c0);
            let p01 = f.pixel(r0, c1);
            let p10 = f.pixel(r1, c0);
            let p11 = f.pixel(r1, c1);
            let dst = &mut row_out[c * ch..(c + 1) * ch];
            for k in 0..ch {
                let top = p00[k] as f64 * (1.0 - wc) + p01[k] as f64 * wc;
                let bottom = p10[k] as f64 * (1.0 - wc) + p11[k] as f64 * wc;
                dst[k] = (top * (1.0 - wr) + bottom * wr) as f32;
            }
        }
    });
    Ok(FeatureMap::new(height, width, ch, out)?)
}

/// Per output index: (lower source index, upper source index, upper weight).
fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    let max = (src - 1) as f64;
    (0..dst)
        .map(|i| {
            let x = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let lo = x.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, x - lo as f64)
        })
        .collect()
}

/// Stacks channels of equally sized maps in list order.
pub fn concat_channels(maps: &[FeatureMap]) -> Result<FeatureMap, PreprocError> {
    let first = maps.first().ok_or(PreprocError::NothingToConcat)?;
    if maps.len() == 1 {
        return Ok(first.clone());
    }
    for m in &maps[1..] {
        check_same_size(first.size(), m.size())?;
    }
    let total: usize = maps.iter().map(FeatureMap::channels).sum();
    let mut out = Vec::with_capacity(first.pixel_count() * total);
    for i in 0..first.pixel_count() {
        for m in maps {
            out.extend_from_slice(m.pixel_flat(i));
        }
    }
    Ok(FeatureMap::new(first.height(), first.width(), total, out)?)
}

/// Upsamples every map to `height x width`, then concatenates channels.
pub fn align_features(
    maps: &[FeatureMap],
    height: usize,
    width: usize,
) -> Result<FeatureMap, PreprocError> {
    let upsampled = maps
        .iter()
        .map(|m| upsample_bilinear(m, height, width))
        .collect::<Result<Vec<_>, _>>()?;
    concat_channels(&upsampled)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    /// Points closer than this to the plane are background (scene units).
    pub dist_threshold: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            dist_threshold: 0.005,
            iterations: 1000,
            seed: 0,
        }
    }
}

/// A plane `normal . p + offset = 0` with unit `normal`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl Plane {
    fn through(a: Vector3<f64>, b: Vector3<f64>, c: Vector3<f64>) -> Option<Self> {
        let n = (b - a).cross(&(c - a));
        let scale = (b - a).norm().max((c - a).norm()).max(f64::MIN_POSITIVE);
        let norm = n.norm();
        if norm <= 1e-12 * scale * scale {
            return None;
        }
        let normal = n / norm;
        Some(Self {
            normal,
            offset: -normal.dot(&a),
        })
    }

    /// Total least squares fit: the plane through the centroid, normal to the
    /// direction of least variance.
    fn fit(points: &[Vector3<f64>]) -> Option<Self> {
        if points.len() < 3 {
            return None;
        }
        let n = points.len() as f64;
        let centroid = points.iter().sum::<Vector3<f64>>() / n;
        let mut cov = Matrix3::zeros();
        for p in points {
            let d = p - centroid;
            cov += d * d.transpose();
        }
        let eig = SymmetricEigen::new(cov);
        let (idx, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))?;
        let normal: Vector3<f64> = eig.eigenvectors.column(idx).into_owned();
        let normal = normal.normalize();
        if !normal.iter().all(|v| v.is_finite()) {
            return None;
        }
        Some(Self {
            normal,
            offset: -normal.dot(&centroid),
        })
    }

    #[inline]
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        (self.normal.dot(p) + self.offset).abs()
    }
}

/// Fits the dominant plane by seeded RANSAC and marks background pixels.
///
/// The returned mask is on (255) for background: points within
/// `dist_threshold` of the refined plane and invalid all-zero points.
pub fn ransac_background(points: &PointMap, config: &RansacConfig) -> Result<MaskImage, PreprocError> {
    let (mask, _) = ransac_background_with_plane(points, config)?;
    Ok(mask)
}

pub fn ransac_background_with_plane(
    points: &PointMap,
    config: &RansacConfig,
) -> Result<(MaskImage, Plane), PreprocError> {
    let total = points.height() * points.width();
    let valid: Vec<usize> = (0..total).filter(|&i| points.is_valid(i)).collect();
    if valid.len() < 3 {
        return Err(PreprocError::TooFewPoints(valid.len()));
    }
    let coords: Vec<Vector3<f64>> = valid
        .iter()
        .map(|&i| {
            let [x, y, z] = points.point(i);
            Vector3::new(x as f64, y as f64, z as f64)
        })
        .collect();
    let threshold = config.dist_threshold;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<(usize, Plane)> = None;
    for _ in 0..config.iterations {
        let a = rng.random_range(0..coords.len());
        let mut b = rng.random_range(0..coords.len() - 1);
        if b >= a {
            b += 1;
        }
        let mut c = rng.random_range(0..coords.len() - 2);
        for taken in [a.min(b), a.max(b)] {
            if c >= taken {
                c += 1;
            }
        }
        let Some(plane) = Plane::through(coords[a], coords[b], coords[c]) else {
            continue;
        };
        let inliers = par::count(Execution::Parallel, coords.len(), |i| {
            plane.distance(&coords[i]) < threshold
        });
        if best.is_none_or(|(n, _)| inliers > n) {
            best = Some((inliers, plane));
        }
    }
    let (_, mut plane) = best.ok_or(PreprocError::Degenerate(config.iterations))?;
    let consensus: Vec<Vector3<f64>> = coords
        .iter()
        .filter(|p| plane.distance(p) < threshold)
        .copied()
        .collect();
    if let Some(refit) = Plane::fit(&consensus) {
        plane = refit;
    }
    let mut background = vec![true; total];
    for (k, &i) in valid.iter().enumerate() {
        background[i] = plane.distance(&coords[k]) < threshold;
    }
    Ok((
        MaskImage::from_bools(points.height(), points.width(), &background),
        plane,
    ))
}
