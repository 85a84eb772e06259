//! Sparse pseudo-label mining from a score map.
//!
//! Anomalous labels come from local maxima of the score map that exceed a
//! high percentile of all scores, grown by a small square window. Nominal
//! labels are a regular grid over the rest of the image, kept away from the
//! anomalous labels by a guard band. Every stage only compares scores, so the
//! result is unchanged by any strictly increasing transform of the map.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::maps::{MaskImage, ScoreMap};

pub type Pixel = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Nominal,
    Anomalous,
}

impl Label {
    /// `+1` for anomalous, `-1` for nominal.
    pub fn sign(self) -> f64 {
        match self {
            Label::Anomalous => 1.0,
            Label::Nominal => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledPoint {
    pub row: usize,
    pub col: usize,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoLabelConfig {
    /// Peaks must score strictly above this percentile of all pixels.
    pub percentile: f64,
    /// Chebyshev radius of the window grown around each kept peak.
    pub enrich_radius: usize,
    pub nominal_stride: usize,
    /// Nominal grid points within this Chebyshev distance of an anomalous
    /// label are dropped.
    pub nominal_guard: usize,
}

impl Default for PseudoLabelConfig {
    fn default() -> Self {
        Self {
            percentile: 99.0,
            enrich_radius: 2,
            nominal_stride: 8,
            nominal_guard: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelSet {
    /// Anomalous points first, then nominal points, each in row-major order.
    pub points: Vec<LabeledPoint>,
    pub threshold: f32,
    pub config: PseudoLabelConfig,
}

impl PseudoLabelSet {
    pub fn count(&self, label: Label) -> usize {
        self.points.iter().filter(|p| p.label == label).count()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PseudoLabelError {
    #[error("percentile {0} outside [0, 100]")]
    Percentile(f64),
    #[error("no peak above threshold {threshold}")]
    EmptyAnomalous { threshold: f32 },
    #[error("no nominal grid point left outside the guard band ({anomalous} anomalous labels)")]
    EmptyNominal { threshold: f32, anomalous: usize },
}

fn excluded(exclude: Option<&MaskImage>, r: usize, c: usize) -> bool {
    exclude.is_some_and(|m| m.is_on(r, c))
}

/// Pixels that are `>=` every in-bounds 8-neighbor and `>` at least one,
/// in row-major order.
pub fn detect_peaks(s: &ScoreMap, exclude: Option<&MaskImage>) -> Vec<Pixel> {
    let (h, w) = s.size();
    let mut peaks = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if excluded(exclude, r, c) {
                continue;
            }
            let v = s.get(r, c);
            let mut strictly_above_one = false;
            let mut is_peak = true;
            'scan: for rr in r.saturating_sub(1)..=(r + 1).min(h - 1) {
                for cc in c.saturating_sub(1)..=(c + 1).min(w - 1) {
                    if (rr, cc) == (r, c) {
                        continue;
                    }
                    let n = s.get(rr, cc);
                    if n > v {
                        is_peak = false;
                        break 'scan;
                    }
                    if v > n {
                        strictly_above_one = true;
                    }
                }
            }
            if is_peak && strictly_above_one {
                peaks.push((r, c));
            }
        }
    }
    peaks
}

/// 1-based nearest rank `ceil(p / 100 * n)`, clamped to `[1, n]`.
pub fn nearest_rank(percentile: f64, n: usize) -> usize {
    let rank = (percentile * n as f64 / 100.0).ceil();
    (rank.max(1.0) as usize).min(n)
}

/// Nearest-rank percentile of `values` (no interpolation).
pub fn percentile_threshold(values: &[f32], percentile: f64) -> Result<f32, PseudoLabelError> {
    if !(0.0..=100.0).contains(&percentile) {
        return Err(PseudoLabelError::Percentile(percentile));
    }
    assert!(!values.is_empty(), "percentile of an empty set");
    let k = nearest_rank(percentile, values.len()) - 1;
    let mut scratch = values.to_vec();
    let (_, nth, _) = scratch.select_nth_unstable_by(k, f32::total_cmp);
    Ok(*nth)
}

/// Keeps peaks scoring strictly above the `percentile` threshold of `s`.
/// Returns the kept peaks and the threshold.
pub fn suppress_peaks(
    peaks: &[Pixel],
    s: &ScoreMap,
    percentile: f64,
) -> Result<(Vec<Pixel>, f32), PseudoLabelError> {
    let t = percentile_threshold(s.values(), percentile)?;
    let kept = peaks
        .iter()
        .copied()
        .filter(|&(r, c)| s.get(r, c) > t)
        .collect();
    Ok((kept, t))
}

/// Union of Chebyshev windows of `radius` around each peak, clipped to the
/// image, minus excluded pixels.
pub fn enrich_anomalous(
    kept_peaks: &[Pixel],
    size: (usize, usize),
    radius: usize,
    exclude: Option<&MaskImage>,
) -> BTreeSet<Pixel> {
    let (h, w) = size;
    let mut out = BTreeSet::new();
    for &(r, c) in kept_peaks {
        for rr in r.saturating_sub(radius)..=(r + radius).min(h - 1) {
            for cc in c.saturating_sub(radius)..=(c + radius).min(w - 1) {
                if !excluded(exclude, rr, cc) {
                    out.insert((rr, cc));
                }
            }
        }
    }
    out
}

/// Regular grid at offset `stride / 2`, skipping pixels within `guard` of an
/// anomalous label and excluded pixels.
pub fn sample_nominal(
    size: (usize, usize),
    anomalous: &BTreeSet<Pixel>,
    stride: usize,
    guard: usize,
    exclude: Option<&MaskImage>,
) -> BTreeSet<Pixel> {
    let (h, w) = size;
    let stride = stride.max(1);
    let offset = stride / 2;
    // guard band as a dilation of the anomalous set
    let mut blocked = vec![false; h * w];
    for &(r, c) in anomalous {
        for rr in r.saturating_sub(guard)..=(r + guard).min(h - 1) {
            let row = &mut blocked[rr * w..(rr + 1) * w];
            row[c.saturating_sub(guard)..=(c + guard).min(w - 1)].fill(true);
        }
    }
    let mut out = BTreeSet::new();
    for r in (offset..h).step_by(stride) {
        for c in (offset..w).step_by(stride) {
            if !blocked[r * w + c] && !excluded(exclude, r, c) {
                out.insert((r, c));
            }
        }
    }
    out
}

/// Runs peak detection, suppression, enrichment and nominal sampling.
pub fn build_pseudolabels(
    s: &ScoreMap,
    exclude: Option<&MaskImage>,
    config: &PseudoLabelConfig,
) -> Result<PseudoLabelSet, PseudoLabelError> {
    let peaks = detect_peaks(s, exclude);
    let (kept, threshold) = suppress_peaks(&peaks, s, config.percentile)?;
    if kept.is_empty() {
        return Err(PseudoLabelError::EmptyAnomalous { threshold });
    }
    let anomalous = enrich_anomalous(&kept, s.size(), config.enrich_radius, exclude);
    if anomalous.is_empty() {
        return Err(PseudoLabelError::EmptyAnomalous { threshold });
    }
    let nominal = sample_nominal(
        s.size(),
        &anomalous,
        config.nominal_stride,
        config.nominal_guard,
        exclude,
    );
    if nominal.is_empty() {
        return Err(PseudoLabelError::EmptyNominal {
            threshold,
            anomalous: anomalous.len(),
        });
    }
    let point = |label| move |&(row, col): &Pixel| LabeledPoint { row, col, label };
    let points = anomalous
        .iter()
        .map(point(Label::Anomalous))
        .chain(nominal.iter().map(point(Label::Nominal)))
        .collect();
    Ok(PseudoLabelSet {
        points,
        threshold,
        config: *config,
    })
}
