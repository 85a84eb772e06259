//! Per-sample segmentation dispatch shared by the batch runner and the
//! synthetic benchmark.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::baseline::binarize_threshold;
use crate::classifier::{run_score_feature_ablation, run_ttt4as, ClassifierError, Diagnostics, SegmentConfig};
use crate::maps::{check_same_size, FeatureMap, MaskImage, ScoreMap, ShapeError};
use crate::scorer::PixelStats;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// `mu + c * sigma` thresholding.
    Threshold { c: f64 },
    /// Test-time trained classifier on the dense features.
    Ttt4as,
    /// Test-time trained classifier on the score alone.
    ScoreAblation,
}

impl Method {
    /// The default comparison set: thresholds at c = 2, 3, 4, the
    /// feature-based classifier and the score-input ablation.
    pub fn standard_set() -> Vec<Method> {
        vec![
            Method::Threshold { c: 2.0 },
            Method::Threshold { c: 3.0 },
            Method::Threshold { c: 4.0 },
            Method::Ttt4as,
            Method::ScoreAblation,
        ]
    }

    pub fn needs_stats(self) -> bool {
        matches!(self, Method::Threshold { .. })
    }

    pub fn needs_features(self) -> bool {
        matches!(self, Method::Ttt4as)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Threshold { c } => write!(f, "thr{c}"),
            Method::Ttt4as => f.write_str("ttt4as"),
            Method::ScoreAblation => f.write_str("ablation"),
        }
    }
}

impl FromStr for Method {
    type Err = String;

    /// `ttt4as`, `ablation`, or `thr<c>` such as `thr3` or `thr2.5`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ttt4as" => Ok(Method::Ttt4as),
            "ablation" => Ok(Method::ScoreAblation),
            _ => s
                .strip_prefix("thr")
                .and_then(|c| c.parse::<f64>().ok())
                .filter(|c| c.is_finite())
                .map(|c| Method::Threshold { c })
                .ok_or_else(|| format!("unknown method {s:?}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("threshold method needs validation statistics")]
    MissingStats,
    #[error("feature-based method needs a feature map")]
    MissingFeatures,
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

pub struct SampleInputs<'a> {
    pub scores: &'a ScoreMap,
    /// Dense features at the score resolution.
    pub features: Option<&'a FeatureMap>,
    /// Background pixels (on = excluded).
    pub exclude: Option<&'a MaskImage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentOutput {
    pub mask: MaskImage,
    pub diagnostics: Option<Diagnostics>,
}

pub fn segment_sample(
    method: Method,
    inputs: &SampleInputs<'_>,
    stats: Option<&PixelStats>,
    config: &SegmentConfig,
) -> Result<SegmentOutput, PipelineError> {
    match method {
        Method::Threshold { c } => {
            let stats = stats.ok_or(PipelineError::MissingStats)?;
            let mut mask = binarize_threshold(inputs.scores, stats, c)?;
            if let Some(ex) = inputs.exclude {
                check_same_size(ex.size(), mask.size())?;
                for r in 0..mask.height() {
                    for col in 0..mask.width() {
                        if ex.is_on(r, col) {
                            mask.set(r, col, false);
                        }
                    }
                }
            }
            Ok(SegmentOutput {
                mask,
                diagnostics: None,
            })
        }
        Method::Ttt4as => {
            let features = inputs.features.ok_or(PipelineError::MissingFeatures)?;
            let (mask, diag) = run_ttt4as(inputs.scores, features, inputs.exclude, config)?;
            Ok(SegmentOutput {
                mask,
                diagnostics: Some(diag),
            })
        }
        Method::ScoreAblation => {
            let (mask, diag) = run_score_feature_ablation(inputs.scores, inputs.exclude, config)?;
            Ok(SegmentOutput {
                mask,
                diagnostics: Some(diag),
            })
        }
    }
}

pub const DIAGNOSTICS_HEADER: &str =
    "sample_id\tanomalous_labels\tnominal_labels\tthreshold\tobjective\titerations\tpredicted_anomalous\tfallback\tloss\tc";

impl Diagnostics {
    /// One tab-separated record matching [`DIAGNOSTICS_HEADER`].
    pub fn tsv_row(&self, sample_id: &str) -> String {
        let objective = self
            .objective
            .map(|v| format!("{v:.9e}"))
            .unwrap_or_else(|| "-".into());
        let fallback = self
            .fallback
            .map(|f| f.to_string())
            .unwrap_or_else(|| "-".into());
        format!(
            "{sample_id}\t{}\t{}\t{}\t{objective}\t{}\t{}\t{fallback}\t{}\t{}",
            self.anomalous_labels,
            self.nominal_labels,
            self.threshold,
            self.iterations,
            self.predicted_anomalous,
            self.loss,
            self.c
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::standard_set() {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert_eq!("thr2.5".parse::<Method>().unwrap(), Method::Threshold { c: 2.5 });
        assert!("thrx".parse::<Method>().is_err());
        assert!("svm".parse::<Method>().is_err());
    }

    #[test]
    fn threshold_respects_exclusion() {
        let s = ScoreMap::filled(2, 2, 5.0).unwrap();
        let stats = PixelStats {
            mean: ScoreMap::filled(2, 2, 0.0).unwrap(),
            std: ScoreMap::filled(2, 2, 1.0).unwrap(),
        };
        let mut ex = MaskImage::empty(2, 2);
        ex.set(0, 1, true);
        let inputs = SampleInputs {
            scores: &s,
            features: None,
            exclude: Some(&ex),
        };
        let out = segment_sample(Method::Threshold { c: 3.0 }, &inputs, Some(&stats), &SegmentConfig::default())
            .unwrap();
        assert_eq!(out.mask.count_on(), 3);
        assert!(matches!(
            segment_sample(Method::Threshold { c: 3.0 }, &inputs, None, &SegmentConfig::default()),
            Err(PipelineError::MissingStats)
        ));
        assert!(matches!(
            segment_sample(Method::Ttt4as, &inputs, None, &SegmentConfig::default()),
            Err(PipelineError::MissingFeatures)
        ));
    }
}
