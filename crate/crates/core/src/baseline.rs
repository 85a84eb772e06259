//! Per-pixel `mu + c * sigma` thresholding from nominal validation scores.

use crate::maps::{check_same_size, MaskImage, ScoreMap, ShapeError};
use crate::metrics::{aggregate, prf1_image, ClassMetrics, ImageRecord, MetricsError};
use crate::scorer::PixelStats;

/// The multipliers compared by [`sweep_c`] unless told otherwise.
pub const DEFAULT_SWEEP: [f64; 3] = [2.0, 3.0, 4.0];

/// Pixel is anomalous iff `s > mu + c * sigma` (strict).
pub fn binarize_threshold(s: &ScoreMap, stats: &PixelStats, c: f64) -> Result<MaskImage, ShapeError> {
    check_same_size(s.size(), stats.mean.size())?;
    check_same_size(s.size(), stats.std.size())?;
    let bits: Vec<bool> = s
        .values()
        .iter()
        .zip(stats.mean.values())
        .zip(stats.std.values())
        .map(|((&v, &mu), &sigma)| v as f64 > mu as f64 + c * sigma as f64)
        .collect();
    Ok(MaskImage::from_bools(s.height(), s.width(), &bits))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub c: f64,
    pub metrics: ClassMetrics,
    pub predicted_anomalous: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Index into `rows` with the highest mean F1 (first on ties).
    pub best: usize,
}

impl SweepTable {
    pub fn best_c(&self) -> f64 {
        self.rows[self.best].c
    }
}

/// Mean precision/recall/F1 over anomalous images for each multiplier.
/// `scores` and `gts` are paired; images with an empty ground truth are
/// skipped.
pub fn sweep_c(
    scores: &[ScoreMap],
    stats: &PixelStats,
    gts: &[MaskImage],
    cs: &[f64],
) -> Result<SweepTable, MetricsError> {
    assert_eq!(scores.len(), gts.len(), "one ground truth per score map");
    assert!(!cs.is_empty(), "at least one multiplier");
    let mut rows = Vec::with_capacity(cs.len());
    for &c in cs {
        let mut records = Vec::new();
        let mut predicted = 0;
        for (i, (s, gt)) in scores.iter().zip(gts).enumerate() {
            let mask = binarize_threshold(s, stats, c)?;
            predicted += mask.count_on();
            if !gt.any_on() {
                continue;
            }
            records.push(ImageRecord::new(i.to_string(), "all", prf1_image(&mask, gt, None)?));
        }
        let report = aggregate(&records)?;
        rows.push(SweepRow {
            c,
            metrics: report.mean,
            predicted_anomalous: predicted,
        });
    }
    let best = rows
        .iter()
        .enumerate()
        .fold(0, |best, (i, r)| {
            if r.metrics.f1 > rows[best].metrics.f1 {
                i
            } else {
                best
            }
        });
    Ok(SweepTable { rows, best })
}
