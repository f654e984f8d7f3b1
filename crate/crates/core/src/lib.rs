//! Transparent late fusion for binary risk prediction.
//!
//! The crate takes per-episode specialist probabilities (e.g. a vitals model
//! and a notes model scoring ICU stays) and provides:
//!
//! - [`data`]: prediction-file ingestion (JSON lines / CSV), cohort
//!   summaries, and a synthetic cohort generator with closed-form branch
//!   AUROC for desk-scale experiments;
//! - [`fusion`]: clipped logits, validation-set standardization, the
//!   logistic-regression meta-learner and averaging baseline, and exact
//!   per-case modality attribution with agreement labels;
//! - [`metrics`]: AUROC/AUPRC, thresholded metrics, Brier, equal-frequency
//!   ECE, recalibration slope/intercept, reliability tables, and percentile
//!   bootstrap confidence intervals;
//! - [`calibration`]: Platt, temperature, and isotonic (PAVA) calibration
//!   with lowest-validation-ECE selection, plus the deterministic
//!   missing-modality fallback;
//! - [`attribution`]: Integrated Gradients over a differentiable-scorer
//!   interface with the saliency post-processing for time-series grids and
//!   token sequences.

pub mod attribution;
pub mod calibration;
pub mod data;
pub mod error;
pub mod fusion;
pub mod logreg;
pub mod metrics;
pub mod rng;

pub use error::{Error, Result};
