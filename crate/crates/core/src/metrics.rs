//! Pixel-level precision/recall/F1 per image, class and global macro means,
//! and exact rank-based AUROC.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::maps::{check_same_size, MaskImage, ShapeError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("ground truth has no anomalous pixel")]
    NominalGroundTruth,
    #[error("no image records to aggregate")]
    NoRecords,
    #[error("AUROC needs both labels (positives {positives}, negatives {negatives})")]
    SingleClass { positives: usize, negatives: usize },
    #[error("{scores} scores but {labels} labels")]
    Length { scores: usize, labels: usize },
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageMetrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ImageMetrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

/// Confusion counts of `pred` against `gt`, ignoring excluded pixels.
/// Fails when `gt` has no anomalous pixel: such images are not scored.
pub fn prf1_image(
    pred: &MaskImage,
    gt: &MaskImage,
    exclude: Option<&MaskImage>,
) -> Result<ImageMetrics, MetricsError> {
    check_same_size(pred.size(), gt.size())?;
    if let Some(ex) = exclude {
        check_same_size(ex.size(), gt.size())?;
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let mut any_gt = false;
    for (i, (&p, &g)) in pred.pixels().iter().zip(gt.pixels()).enumerate() {
        if exclude.is_some_and(|m| m.is_on_flat(i)) {
            continue;
        }
        match (p != 0, g != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
        any_gt |= g != 0;
    }
    if !any_gt {
        return Err(MetricsError::NominalGroundTruth);
    }
    Ok(ImageMetrics::from_counts(tp, fp, fn_))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub sample_id: String,
    pub class: String,
    pub metrics: ImageMetrics,
}

impl ImageRecord {
    pub fn new(sample_id: impl Into<String>, class: impl Into<String>, metrics: ImageMetrics) -> Self {
        Self {
            sample_id: sample_id.into(),
            class: class.into(),
            metrics,
        }
    }
}

/// Arithmetic means of per-image metrics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub images: usize,
}

impl ClassMetrics {
    fn mean_of(items: impl Iterator<Item = (f64, f64, f64)> + Clone) -> Self {
        let n = items.clone().count();
        let (p, r, f) = items.fold((0.0, 0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1, acc.2 + x.2));
        let n_f = n as f64;
        Self {
            precision: p / n_f,
            recall: r / n_f,
            f1: f / n_f,
            images: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Sorted by sample id.
    pub images: Vec<ImageRecord>,
    /// Sorted by class name.
    pub classes: Vec<(String, ClassMetrics)>,
    /// Mean over class means; `images` is the total count.
    pub mean: ClassMetrics,
    pub p_auroc: Option<f64>,
    pub i_auroc: Option<f64>,
}

/// Macro aggregation: per-class means of per-image metrics, then the mean of
/// the class means. The result does not depend on record order.
pub fn aggregate(records: &[ImageRecord]) -> Result<EvalReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::NoRecords);
    }
    let mut images = records.to_vec();
    images.sort_by(|a, b| a.sample_id.cmp(&b.sample_id).then_with(|| a.class.cmp(&b.class)));
    let mut by_class: BTreeMap<&str, Vec<&ImageMetrics>> = BTreeMap::new();
    for r in &images {
        by_class.entry(&r.class).or_default().push(&r.metrics);
    }
    let classes: Vec<(String, ClassMetrics)> = by_class
        .iter()
        .map(|(name, ms)| {
            let m = ClassMetrics::mean_of(ms.iter().map(|m| (m.precision, m.recall, m.f1)));
            (name.to_string(), m)
        })
        .collect();
    let mut mean = ClassMetrics::mean_of(classes.iter().map(|(_, m)| (m.precision, m.recall, m.f1)));
    mean.images = images.len();
    Ok(EvalReport {
        images,
        classes,
        mean,
        p_auroc: None,
        i_auroc: None,
    })
}

/// Area under the ROC curve via the Mann-Whitney statistic with midranks
/// for tied scores; `true` labels are positives.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::Length {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(i) = scores.iter().position(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite(i));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::SingleClass {
            positives,
            negatives,
        });
    }
    let mut order: Vec<u32> = (0..scores.len() as u32).collect();
    order.sort_unstable_by(|&a, &b| scores[a as usize].total_cmp(&scores[b as usize]));
    let mut positive_rank_sum = 0.0f64;
    let mut start = 0;
    while start < order.len() {
        let value = scores[order[start] as usize];
        let mut end = start + 1;
        while end < order.len() && scores[order[end] as usize] == value {
            end += 1;
        }
        // ranks start..end (0-based) share the midrank
        let midrank = (start + end + 1) as f64 / 2.0;
        let tied_pos = order[start..end]
            .iter()
            .filter(|&&i| labels[i as usize])
            .count();
        positive_rank_sum += midrank * tied_pos as f64;
        start = end;
    }
    let p = positives as f64;
    let u = positive_rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

impl EvalReport {
    /// Class table: one column per class plus `Mean`, rows P/R/F1/count,
    /// followed by the AUROC lines when available.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric");
        for (name, _) in &self.classes {
            let _ = write!(out, "\t{name}");
        }
        out.push_str("\tMean\n");
        type Cell = fn(&ClassMetrics) -> String;
        let rows: [(&str, Cell); 4] = [
            ("precision", |m| format!("{:.6}", m.precision)),
            ("recall", |m| format!("{:.6}", m.recall)),
            ("f1", |m| format!("{:.6}", m.f1)),
            ("images", |m| m.images.to_string()),
        ];
        for (label, cell) in rows {
            out.push_str(label);
            for (_, m) in &self.classes {
                let _ = write!(out, "\t{}", cell(m));
            }
            let _ = writeln!(out, "\t{}", cell(&self.mean));
        }
        if let Some(v) = self.p_auroc {
            let _ = writeln!(out, "p_auroc\t{v:.6}");
        }
        if let Some(v) = self.i_auroc {
            let _ = writeln!(out, "i_auroc\t{v:.6}");
        }
        out
    }

    /// One tab-separated record per scored image.
    pub fn images_tsv(&self) -> String {
        let mut out = String::from("sample_id\tclass\ttp\tfp\tfn\tprecision\trecall\tf1\n");
        for r in &self.images {
            let m = &r.metrics;
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
                r.sample_id, r.class, m.tp, m.fp, m.fn_, m.precision, m.recall, m.f1
            );
        }
        out
    }
}
