//! Post-hoc out-of-distribution detection on frozen feature banks.
//!
//! Given penultimate-layer features and labels extracted from a trained
//! classifier, this crate fits Mahalanobis-family detectors (raw or
//! hyperspherical features crossed with class-specific or pooled ridge
//! covariance) alongside the classifier-score baselines Energy and MSP,
//! and evaluates them with AUROC / FPR95 and a log efficiency score.
//!
//! Modules:
//! - [`bank`]: feature banks, classifier heads, and the FBANK disk format;
//! - [`geometry`]: sphere projection, covariance estimation, ridge,
//!   Cholesky precision factors, spectrum diagnostics;
//! - [`detectors`]: the six detectors under one larger-is-OOD orientation;
//! - [`nullspace`]: classifier row/null projectors, null scatter, radius
//!   profiles;
//! - [`eval`]: AUROC, FPR at target TPR, set averaging, LES;
//! - [`synth`]: deterministic synthetic long-tailed banks for desk-scale
//!   experiments;
//! - [`report`]: score CSVs, reports, and diagnostics files.
//!
//! With the default `parallel` feature, batch scoring and covariance
//! accumulation run on rayon; reductions use fixed chunking, so parallel
//! and sequential builds produce bit-identical results.

pub mod bank;
pub mod detectors;
pub mod error;
pub mod eval;
mod fsio;
pub mod geometry;
pub mod linalg;
pub mod nullspace;
mod par;
pub mod report;
pub mod synth;

pub use bank::{split_head_tail, ClassifierHead, FeatureBank, GroupSplit, LogitBank};
pub use detectors::{
    energy, energy_batch, fit_metric, fit_metric_with, load_model, msp, msp_batch, save_model,
    score, score_batch, Detector, MetricModel, Ridge, ScoreSet, Variant, ORIENTATION,
};
pub use error::{HpmError, Result};
pub use eval::{auroc, average_sets, fpr_at_tpr, les, DetectionMetrics, EvalReport};
pub use geometry::{
    class_covariance, class_means, factorize, pooled_covariance, project_sphere, quadform, ridge,
    ridge_absolute, spectrum, ClassStats, CovarianceEstimate, PrecisionFactor,
    SpectrumDiagnostics,
};
pub use nullspace::{null_scatter, projectors, radius_profile, NullScatterReport, Projectors, RadiusProfile};
pub use synth::{generate, generate_to_dir, OodKind, SynthSpec, SynthTruth};
