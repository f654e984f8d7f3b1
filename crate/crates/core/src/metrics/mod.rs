//! Discrimination and calibration metrics.
//!
//! AUROC is Mann–Whitney concordance with half-credit ties; AUPRC is
//! tie-grouped average precision (distinct descending score groups, no
//! trapezoidal interpolation); ECE uses equal-frequency (quantile) bins with
//! exact-tie merging. Bootstrap confidence intervals live in
//! [`bootstrap`]; full evaluation reports in [`report`].

mod bootstrap;
mod report;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::to_logit;
use crate::logreg::{self, LogregOptions};

pub use bootstrap::{bootstrap_ci, BootstrapOptions, BootstrapSummary};
pub use report::{evaluate_scores, EvaluationOptions, MetricEstimate, MetricReport, MetricRow};

fn validate_scores_labels(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("scores"));
    }
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::InvalidInput("labels must be 0 or 1".into()));
    }
    Ok(())
}

fn class_counts(labels: &[u8]) -> (u64, u64) {
    let pos = labels.iter().filter(|&&y| y == 1).count() as u64;
    (pos, labels.len() as u64 - pos)
}

/// Indices sorted by ascending score (stable).
fn ascending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    order
}

/// Mann–Whitney AUROC: `(wins + 0.5·ties) / (n₊ n₋)` over all
/// positive/negative pairs, computed from integer counts.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    validate_scores_labels(scores, labels)?;
    let (n_pos, n_neg) = class_counts(labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let order = ascending_order(scores);
    let mut wins: u64 = 0; // positive strictly above negative
    let mut tie_pairs: u64 = 0;
    let mut negatives_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let mut group_pos: u64 = 0;
        let mut group_neg: u64 = 0;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                group_pos += 1;
            } else {
                group_neg += 1;
            }
            j += 1;
        }
        wins += group_pos * negatives_below;
        tie_pairs += group_pos * group_neg;
        negatives_below += group_neg;
        i = j;
    }
    Ok((2 * wins + tie_pairs) as f64 / (2 * n_pos * n_neg) as f64)
}

/// Tie-grouped average precision:
/// `AP = Σ_k (R_k − R_{k−1}) P_k` over distinct descending score groups.
pub fn auprc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    validate_scores_labels(scores, labels)?;
    let (n_pos, _) = class_counts(labels);
    if n_pos == 0 {
        return Err(Error::InvalidInput("AUPRC needs at least one positive".into()));
    }
    let mut order = ascending_order(scores);
    order.reverse();
    let mut ap = 0.0;
    let mut tp: u64 = 0;
    let mut fp: u64 = 0;
    let mut recall_prev = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let recall = tp as f64 / n_pos as f64;
        if recall > recall_prev {
            let precision = tp as f64 / (tp + fp) as f64;
            ap += (recall - recall_prev) * precision;
            recall_prev = recall;
        }
        i = j;
    }
    Ok(ap)
}

/// Confusion-matrix metrics at a fixed threshold (`score >= threshold` is a
/// positive call). Zero-denominator cases yield 0 and are listed in
/// `zero_denominator`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdedMetrics {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub zero_denominator: Vec<String>,
}

pub fn thresholded_metrics(
    scores: &[f64],
    labels: &[u8],
    threshold: f64,
) -> Result<ThresholdedMetrics> {
    validate_scores_labels(scores, labels)?;
    let (mut tp, mut fp, mut tn, mut fal_n) = (0u64, 0u64, 0u64, 0u64);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fal_n += 1,
        }
    }
    let mut flagged = Vec::new();
    let mut ratio = |num: u64, den: u64, name: &str| -> f64 {
        if den == 0 {
            flagged.push(name.to_string());
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(tp, tp + fp, "precision");
    let recall = ratio(tp, tp + fal_n, "recall");
    let specificity = ratio(tn, tn + fp, "specificity");
    let f1 = if precision + recall == 0.0 {
        flagged.push("f1".to_string());
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let n = scores.len() as f64;
    Ok(ThresholdedMetrics {
        f1,
        precision,
        recall,
        accuracy: (tp + tn) as f64 / n,
        balanced_accuracy: 0.5 * (recall + specificity),
        zero_denominator: flagged,
    })
}

/// Mean squared error between score and binary label.
pub fn brier(scores: &[f64], labels: &[u8]) -> Result<f64> {
    validate_scores_labels(scores, labels)?;
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| {
            let d = s - y as f64;
            d * d
        })
        .sum();
    Ok(total / scores.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub count: usize,
    pub mean_score: f64,
    pub event_rate: f64,
    /// Smallest score falling in the bin.
    pub lo: f64,
    /// Largest score falling in the bin.
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBins {
    pub requested_bins: usize,
    pub n: usize,
    pub bins: Vec<ReliabilityBin>,
}

impl ReliabilityBins {
    /// `Σ_b (n_b/n) |mean score − event rate|` over the final bins.
    pub fn ece(&self) -> f64 {
        self.bins
            .iter()
            .map(|b| (b.count as f64 / self.n as f64) * (b.mean_score - b.event_rate).abs())
            .sum()
    }
}

/// Equal-frequency reliability table.
///
/// Scores are sorted and split into `bins` quantile groups whose sizes differ
/// by at most one; adjacent groups whose boundary scores are exactly tied are
/// merged so no tie straddles a bin edge.
pub fn reliability_bins(scores: &[f64], labels: &[u8], bins: usize) -> Result<ReliabilityBins> {
    validate_scores_labels(scores, labels)?;
    if bins == 0 {
        return Err(Error::InvalidInput("bins must be >= 1".into()));
    }
    let n = scores.len();
    if n < bins {
        return Err(Error::TooFewForBins { n, bins });
    }
    let order = ascending_order(scores);

    // Quantile cuts: the first (n mod bins) groups take one extra element.
    let base = n / bins;
    let extra = n % bins;
    let mut cuts = Vec::with_capacity(bins - 1);
    let mut position = 0;
    for b in 0..bins - 1 {
        position += base + usize::from(b < extra);
        cuts.push(position);
    }
    // Merge bins across exactly tied boundaries.
    cuts.retain(|&cut| scores[order[cut - 1]] != scores[order[cut]]);

    let mut result = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0;
    for end in cuts.into_iter().chain(std::iter::once(n)) {
        let members = &order[start..end];
        let count = members.len();
        let mean_score = members.iter().map(|&i| scores[i]).sum::<f64>() / count as f64;
        let positives = members.iter().filter(|&&i| labels[i] == 1).count();
        result.push(ReliabilityBin {
            count,
            mean_score,
            event_rate: positives as f64 / count as f64,
            lo: scores[members[0]],
            hi: scores[members[count - 1]],
        });
        start = end;
    }
    Ok(ReliabilityBins {
        requested_bins: bins,
        n,
        bins: result,
    })
}

/// Expected calibration error over equal-frequency bins.
pub fn ece_equal_frequency(scores: &[f64], labels: &[u8], bins: usize) -> Result<f64> {
    Ok(reliability_bins(scores, labels, bins)?.ece())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeIntercept {
    pub slope: f64,
    pub intercept: f64,
    pub converged: bool,
}

/// Logistic recalibration (Cox): jointly fit `label ~ logistic(a·z + c)` with
/// `z = to_logit(score)` and return `a` (slope) and `c` (intercept).
pub fn calibration_slope_intercept(scores: &[f64], labels: &[u8]) -> Result<SlopeIntercept> {
    validate_scores_labels(scores, labels)?;
    let rows: Vec<Vec<f64>> = scores.iter().map(|&s| vec![to_logit(s)]).collect();
    let fit = logreg::fit_logistic(&rows, labels, &LogregOptions::default())?;
    Ok(SlopeIntercept {
        slope: fit.weights[0],
        intercept: fit.intercept,
        converged: fit.converged,
    })
}

/// Offset-only recalibration variant: slope fixed at 1, the intercept is the
/// maximum-likelihood additive shift on the logit scale.
pub fn calibration_intercept_fixed_slope(scores: &[f64], labels: &[u8]) -> Result<f64> {
    validate_scores_labels(scores, labels)?;
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let zs: Vec<f64> = scores.iter().map(|&s| to_logit(s)).collect();
    let n = zs.len() as f64;
    let mut c = 0.0;
    for _ in 0..100 {
        let mut g = 0.0;
        let mut h = 0.0;
        for (&z, &y) in zs.iter().zip(labels) {
            let mu = crate::fusion::logistic(z + c);
            g += mu - y as f64;
            h += (mu * (1.0 - mu)).max(1e-12);
        }
        g /= n;
        h /= n;
        let step = g / h;
        c -= step;
        if step.abs() < 1e-12 {
            break;
        }
    }
    Ok(c)
}
