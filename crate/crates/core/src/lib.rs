//! Test-time trained segmentation of anomaly score maps.
//!
//! Given a per-pixel anomaly score map from any detector and a dense feature
//! map of the same image, the crate mines sparse pseudo-labels from the
//! score map, fits a linear SVM on the features under those labels, and
//! evaluates it on every pixel to obtain a binary mask. Around that core it
//! provides a memory-bank scorer, the `mu + c * sigma` threshold baseline,
//! pixel metrics, a synthetic benchmark and a binary tensor format.
//!
//! Modules:
//!
//! - [`tensor`]: tensor files, P5 masks, manifests
//! - [`scorer`]: coreset memory bank, nearest-neighbor scores, validation stats
//! - [`preproc`]: bilinear upsampling, channel concatenation, RANSAC background
//! - [`pseudolabel`]: peak detection, percentile suppression, label sampling
//! - [`classifier`]: SVM training and dense prediction
//! - [`baseline`]: threshold baseline and its `c` sweep
//! - [`metrics`]: precision/recall/F1, macro aggregation, AUROC
//! - [`synth`]: synthetic scenes and the comparison harness
//!
//! Batch work goes through [`par`], which uses rayon when the `parallel`
//! feature is on and falls back to plain iteration otherwise.

pub mod baseline;
pub mod classifier;
pub mod maps;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod preproc;
pub mod pseudolabel;
pub mod scorer;
pub mod synth;
pub mod tensor;

pub use classifier::{
    predict_dense, run_score_feature_ablation, run_ttt4as, train_svm, Diagnostics, LinearSvm,
    LossMode, SegmentConfig, SvmConfig, SvmSolver, TrainingSet,
};
pub use maps::{FeatureMap, MaskImage, PointMap, ScoreMap};
pub use par::Execution;
pub use pipeline::Method;
pub use pseudolabel::{build_pseudolabels, PseudoLabelConfig, PseudoLabelSet};
pub use scorer::{MemoryBank, PixelStats};
