//! Post-hoc probability calibration and the missing-modality fallback.
//!
//! Three calibration maps are supported, all fitted on validation data only:
//!
//! - **Platt**: `logistic(a·z + b)` on clipped logits, by log-loss
//!   minimization (same solver as the meta-learner);
//! - **Temperature**: `logistic(z/T)` with `T ∈ [0.05, 20]` found by
//!   golden-section search on the mean log-loss (unimodal in `T`);
//! - **Isotonic**: pool-adjacent-violators least-squares monotone fit, with
//!   tied scores pre-pooled and linear interpolation between knots (clamped
//!   outside the fitted range).
//!
//! [`select_calibrator`] picks the candidate with the lowest validation ECE.
//! [`fallback_predict`] routes a missing-modality episode to the calibrated
//! single-specialist probability.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::data::PredictionRecord;
use crate::error::{Error, Result};
use crate::fusion::{logistic, to_logit, StackingModel};
use crate::logreg::{self, LogregOptions};
use crate::metrics::ece_equal_frequency;

pub const TEMPERATURE_MIN: f64 = 0.05;
pub const TEMPERATURE_MAX: f64 = 20.0;
pub const CALIBRATOR_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibratorKind {
    Platt,
    Temperature,
    Isotonic,
}

impl CalibratorKind {
    pub const ALL: [CalibratorKind; 3] = [
        CalibratorKind::Platt,
        CalibratorKind::Temperature,
        CalibratorKind::Isotonic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CalibratorKind::Platt => "platt",
            CalibratorKind::Temperature => "temperature",
            CalibratorKind::Isotonic => "isotonic",
        }
    }

    /// Tie-break rank when validation ECEs are exactly equal.
    fn rank(self) -> u8 {
        match self {
            CalibratorKind::Platt => 0,
            CalibratorKind::Temperature => 1,
            CalibratorKind::Isotonic => 2,
        }
    }
}

impl std::fmt::Display for CalibratorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Calibrator {
    Platt { a: f64, b: f64 },
    Temperature { t: f64 },
    Isotonic { knots_x: Vec<f64>, knots_y: Vec<f64> },
}

impl Calibrator {
    pub fn kind(&self) -> CalibratorKind {
        match self {
            Calibrator::Platt { .. } => CalibratorKind::Platt,
            Calibrator::Temperature { .. } => CalibratorKind::Temperature,
            Calibrator::Isotonic { .. } => CalibratorKind::Isotonic,
        }
    }

    /// Map a raw probability to a calibrated one; output is always in [0,1].
    pub fn apply(&self, score: f64) -> f64 {
        match self {
            Calibrator::Platt { a, b } => logistic(a * to_logit(score) + b),
            Calibrator::Temperature { t } => logistic(to_logit(score) / t),
            Calibrator::Isotonic { knots_x, knots_y } => {
                interpolate_clamped(knots_x, knots_y, score)
            }
        }
    }
}

fn interpolate_clamped(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    // partition_point: first knot strictly above x.
    let hi = xs.partition_point(|&k| k <= x);
    let lo = hi - 1;
    if xs[hi] == xs[lo] {
        return ys[lo];
    }
    let fraction = (x - xs[lo]) / (xs[hi] - xs[lo]);
    (ys[lo] + fraction * (ys[hi] - ys[lo])).clamp(0.0, 1.0)
}

fn validate_fit_input(scores: &[f64], labels: &[u8], min_n: usize) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    if scores.len() < min_n {
        return Err(Error::TooFewRecords {
            required: min_n,
            actual: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Fit `logistic(a·z + b)` on `z = to_logit(score)` by log-loss minimization.
pub fn fit_platt(scores: &[f64], labels: &[u8]) -> Result<Calibrator> {
    validate_fit_input(scores, labels, 2)?;
    let rows: Vec<Vec<f64>> = scores.iter().map(|&s| vec![to_logit(s)]).collect();
    let fit = logreg::fit_logistic(&rows, labels, &LogregOptions::default())?;
    Ok(Calibrator::Platt {
        a: fit.weights[0],
        b: fit.intercept,
    })
}

/// Fit the temperature `T` minimizing mean log-loss of `logistic(z/T)` over
/// `[0.05, 20]` by golden-section search to an interval of width 1e−4.
pub fn fit_temperature(scores: &[f64], labels: &[u8]) -> Result<Calibrator> {
    validate_fit_input(scores, labels, 2)?;
    let zs: Vec<f64> = scores.iter().map(|&s| to_logit(s)).collect();
    let loss = |t: f64| -> f64 {
        let mut total = 0.0;
        for (&z, &y) in zs.iter().zip(labels) {
            let s = z / t;
            total += if s > 0.0 {
                s * (1.0 - y as f64) + (-s).exp().ln_1p()
            } else {
                -(y as f64) * s + s.exp().ln_1p()
            };
        }
        total / zs.len() as f64
    };

    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut lo = TEMPERATURE_MIN;
    let mut hi = TEMPERATURE_MAX;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = loss(x1);
    let mut f2 = loss(x2);
    while hi - lo > 1e-4 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = loss(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = loss(x2);
        }
    }
    Ok(Calibrator::Temperature { t: 0.5 * (lo + hi) })
}

/// Pool-adjacent-violators isotonic regression on (score, label) pairs.
///
/// Tied scores are pre-pooled into one weighted point; blocks are merged
/// while a left block mean is ≥ its right neighbor, so the final block means
/// are strictly increasing. Every distinct input score becomes a knot
/// carrying its block's mean.
pub fn fit_isotonic(scores: &[f64], labels: &[u8]) -> Result<Calibrator> {
    validate_fit_input(scores, labels, 2)?;
    let values: Vec<f64> = labels.iter().map(|&y| y as f64).collect();
    let (knots_x, knots_y) = pava_interpolation_knots(scores, &values)?;
    Ok(Calibrator::Isotonic { knots_x, knots_y })
}

/// Weighted PAVA over arbitrary target values; exposed for tests against the
/// least-squares-monotone oracle. Returns one (x, fitted) knot per distinct
/// input x, ascending.
pub fn pava_interpolation_knots(xs: &[f64], values: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if xs.len() != values.len() || xs.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            actual: values.len(),
        });
    }
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));

    // Pre-pool exact ties into weighted points.
    struct Point {
        x: f64,
        mean: f64,
        weight: f64,
    }
    let mut points: Vec<Point> = Vec::new();
    for &i in &order {
        match points.last_mut() {
            Some(last) if last.x == xs[i] => {
                last.mean += (values[i] - last.mean) / (last.weight + 1.0);
                last.weight += 1.0;
            }
            _ => points.push(Point {
                x: xs[i],
                mean: values[i],
                weight: 1.0,
            }),
        }
    }

    // PAVA stack: each block stores (weighted mean, weight, #points).
    struct Block {
        mean: f64,
        weight: f64,
        points: usize,
    }
    let mut blocks: Vec<Block> = Vec::with_capacity(points.len());
    for point in &points {
        let mut block = Block {
            mean: point.mean,
            weight: point.weight,
            points: 1,
        };
        while let Some(prev) = blocks.last() {
            if prev.mean >= block.mean {
                let merged_weight = prev.weight + block.weight;
                block.mean = (prev.mean * prev.weight + block.mean * block.weight) / merged_weight;
                block.weight = merged_weight;
                block.points += prev.points;
                blocks.pop();
            } else {
                break;
            }
        }
        blocks.push(block);
    }

    let mut knots_x = Vec::with_capacity(points.len());
    let mut knots_y = Vec::with_capacity(points.len());
    let mut index = 0;
    for block in &blocks {
        for _ in 0..block.points {
            knots_x.push(points[index].x);
            knots_y.push(block.mean);
            index += 1;
        }
    }
    Ok((knots_x, knots_y))
}

/// Kind-dispatch fit.
pub fn fit_calibrator(kind: CalibratorKind, scores: &[f64], labels: &[u8]) -> Result<Calibrator> {
    match kind {
        CalibratorKind::Platt => fit_platt(scores, labels),
        CalibratorKind::Temperature => fit_temperature(scores, labels),
        CalibratorKind::Isotonic => fit_isotonic(scores, labels),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEce {
    pub kind: CalibratorKind,
    /// Validation ECE of the fitted candidate; absent if the fit failed.
    pub ece: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratorSelection {
    pub chosen: Calibrator,
    pub candidates: Vec<CandidateEce>,
    /// The best validation ECE was exactly tied between candidates; broken by
    /// the fixed order platt < temperature < isotonic.
    pub tie: bool,
}

/// Fit every candidate on validation data and pick the lowest validation ECE.
pub fn select_calibrator(
    kinds: &[CalibratorKind],
    val_scores: &[f64],
    val_labels: &[u8],
    ece_bins: usize,
) -> Result<CalibratorSelection> {
    if kinds.is_empty() {
        return Err(Error::EmptyInput("calibrator candidates"));
    }
    let mut candidates = Vec::with_capacity(kinds.len());
    let mut fitted: Vec<(CalibratorKind, Calibrator, f64)> = Vec::new();
    for &kind in kinds {
        match fit_calibrator(kind, val_scores, val_labels).and_then(|calibrator| {
            let mapped: Vec<f64> = val_scores.iter().map(|&s| calibrator.apply(s)).collect();
            let ece = ece_equal_frequency(&mapped, val_labels, ece_bins)?;
            Ok((calibrator, ece))
        }) {
            Ok((calibrator, ece)) => {
                candidates.push(CandidateEce {
                    kind,
                    ece: Some(ece),
                    error: None,
                });
                fitted.push((kind, calibrator, ece));
            }
            Err(e) => candidates.push(CandidateEce {
                kind,
                ece: None,
                error: Some(e.to_string()),
            }),
        }
    }
    if fitted.is_empty() {
        return Err(Error::AllCandidatesFailed);
    }
    let best = fitted
        .iter()
        .min_by(|a, b| a.2.total_cmp(&b.2).then(a.0.rank().cmp(&b.0.rank())))
        .expect("nonempty");
    let tie = fitted
        .iter()
        .filter(|(kind, _, ece)| *ece == best.2 && *kind != best.0)
        .count()
        > 0;
    Ok(CalibratorSelection {
        chosen: best.1.clone(),
        candidates,
        tie,
    })
}

/// Deterministic missing-modality scenarios. By convention the model's first
/// specialist is the time-series/vitals branch and the second is the notes
/// branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackScenario {
    BothPresent,
    NotesAbsent,
    VitalsAbsent,
}

impl FallbackScenario {
    pub const ALL: [FallbackScenario; 3] = [
        FallbackScenario::BothPresent,
        FallbackScenario::NotesAbsent,
        FallbackScenario::VitalsAbsent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FallbackScenario::BothPresent => "both_present",
            FallbackScenario::NotesAbsent => "notes_absent",
            FallbackScenario::VitalsAbsent => "vitals_absent",
        }
    }
}

impl std::fmt::Display for FallbackScenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn remaining_specialist(model: &StackingModel, scenario: FallbackScenario) -> Result<&str> {
    let specialists = model.specialists();
    if specialists.len() != 2 {
        return Err(Error::InvalidInput(format!(
            "missing-modality scenarios need exactly two specialists, model has {}",
            specialists.len()
        )));
    }
    Ok(match scenario {
        FallbackScenario::NotesAbsent => &specialists[0],
        FallbackScenario::VitalsAbsent => &specialists[1],
        FallbackScenario::BothPresent => unreachable!("handled by caller"),
    })
}

/// Route one episode through a missing-modality scenario.
///
/// `both_present` is the plain ensemble; an absent-branch scenario returns
/// the calibrated probability of the remaining specialist.
pub fn fallback_predict(
    scenario: FallbackScenario,
    model: &StackingModel,
    calibrators: &BTreeMap<String, Calibrator>,
    record: &PredictionRecord,
) -> Result<f64> {
    if scenario == FallbackScenario::BothPresent {
        return model.predict(record);
    }
    let name = remaining_specialist(model, scenario)?;
    let calibrator = calibrators
        .get(name)
        .ok_or_else(|| Error::MissingCalibrator(name.to_string()))?;
    let p = record
        .prob(name)
        .ok_or_else(|| Error::MissingSpecialist(name.to_string()))?;
    Ok(calibrator.apply(p))
}

/// Variant that keeps the ensemble in the loop when a branch is absent: the
/// missing branch's standardized logit is imputed at its validation mean
/// (z = 0) and the ensemble equation is evaluated with the remaining branch.
/// Exposed as an alternative policy; the plain calibrated fallback above is
/// the default.
pub fn fallback_predict_imputing(
    scenario: FallbackScenario,
    model: &StackingModel,
    record: &PredictionRecord,
) -> Result<f64> {
    if scenario == FallbackScenario::BothPresent {
        return model.predict(record);
    }
    let name = remaining_specialist(model, scenario)?;
    let index = model
        .specialists()
        .iter()
        .position(|s| s == name)
        .expect("remaining specialist is in the model");
    let p = record
        .prob(name)
        .ok_or_else(|| Error::MissingSpecialist(name.to_string()))?;
    let z = model.standardizer.apply(index, to_logit(p));
    Ok(logistic(model.intercept + model.weights[index] * z))
}

#[derive(Serialize, Deserialize)]
struct StoredCalibrators {
    format_version: u32,
    branches: BTreeMap<String, CalibratorSelection>,
    ensemble: Option<CalibratorSelection>,
}

/// Per-branch calibrator selections (plus an optional ensemble calibrator),
/// persisted as a versioned JSON document.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratorSet {
    pub branches: BTreeMap<String, CalibratorSelection>,
    pub ensemble: Option<CalibratorSelection>,
}

impl CalibratorSet {
    pub fn branch_calibrators(&self) -> BTreeMap<String, Calibrator> {
        self.branches
            .iter()
            .map(|(name, sel)| (name.clone(), sel.chosen.clone()))
            .collect()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&StoredCalibrators {
            format_version: CALIBRATOR_FORMAT_VERSION,
            branches: self.branches.clone(),
            ensemble: self.ensemble.clone(),
        })?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let stored: StoredCalibrators = serde_json::from_str(text)?;
        if stored.format_version != CALIBRATOR_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: stored.format_version,
                supported: CALIBRATOR_FORMAT_VERSION,
            });
        }
        Ok(Self {
            branches: stored.branches,
            ensemble: stored.ensemble,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()?).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }
}
