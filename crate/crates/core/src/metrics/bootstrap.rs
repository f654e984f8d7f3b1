//! Percentile bootstrap over episodes.
//!
//! Resample `r` draws its indices from the stream `(seed, r, attempt)`, so
//! resamples are independent of evaluation order and the whole procedure is
//! bit-reproducible for a given seed. Resamples that lack a class (possible
//! at low prevalence) are redrawn with the next `attempt` substream, at most
//! 10 attempts per slot (≤ 10·n_resamples draws in total).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derive_rng;

const MAX_ATTEMPTS_PER_SLOT: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub n_resamples: usize,
    pub seed: u64,
    /// Confidence level for the percentile interval, e.g. 0.95.
    pub level: f64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            n_resamples: 1000,
            seed: 0,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    /// Mean of the metric over resamples.
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_resamples: usize,
    pub level: f64,
}

/// Nearest-rank percentile on an ascending-sorted vector: the value at
/// 1-based rank `ceil(q·n)`, clamped to the ends.
pub(crate) fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// One resample's indices; `None` if no draw within the attempt budget
/// contained both classes and produced a defined metric value.
fn resample_value<F>(
    metric: &F,
    scores: &[f64],
    labels: &[u8],
    seed: u64,
    slot: u64,
) -> Option<f64>
where
    F: Fn(&[f64], &[u8]) -> Option<f64>,
{
    let n = scores.len();
    let mut drawn_scores = vec![0.0; n];
    let mut drawn_labels = vec![0u8; n];
    for attempt in 0..MAX_ATTEMPTS_PER_SLOT {
        let mut rng = derive_rng(seed, slot, attempt);
        let mut positives = 0usize;
        for i in 0..n {
            let pick = rng.random_range(0..n);
            drawn_scores[i] = scores[pick];
            drawn_labels[i] = labels[pick];
            positives += drawn_labels[i] as usize;
        }
        if positives == 0 || positives == n {
            continue;
        }
        if let Some(value) = metric(&drawn_scores, &drawn_labels) {
            if value.is_finite() {
                return Some(value);
            }
        }
    }
    None
}

/// Percentile bootstrap CI for a metric of `(scores, labels)`.
///
/// The metric returns `None` where it is undefined. Errors if more than 10%
/// of the resample slots fail to produce a defined value within the attempt
/// budget.
pub fn bootstrap_ci<F>(
    metric: F,
    scores: &[f64],
    labels: &[u8],
    opts: &BootstrapOptions,
) -> Result<BootstrapSummary>
where
    F: Fn(&[f64], &[u8]) -> Option<f64> + Sync,
{
    if scores.is_empty() {
        return Err(Error::EmptyInput("scores"));
    }
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    if opts.n_resamples == 0 {
        return Err(Error::InvalidConfig("n_resamples must be >= 1".into()));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "level must be in (0,1), got {}",
            opts.level
        )));
    }

    let values: Vec<Option<f64>> = (0..opts.n_resamples as u64)
        .into_par_iter()
        .map(|slot| resample_value(&metric, scores, labels, opts.seed, slot))
        .collect();

    let failures = values.iter().filter(|v| v.is_none()).count();
    if failures * 10 > opts.n_resamples {
        return Err(Error::UndefinedResamples {
            failures,
            total: opts.n_resamples,
        });
    }
    let mut defined: Vec<f64> = values.into_iter().flatten().collect();
    if defined.is_empty() {
        return Err(Error::UndefinedResamples {
            failures,
            total: opts.n_resamples,
        });
    }
    defined.sort_by(f64::total_cmp);
    let mean = defined.iter().sum::<f64>() / defined.len() as f64;
    let alpha = (1.0 - opts.level) / 2.0;
    Ok(BootstrapSummary {
        mean,
        ci_low: nearest_rank(&defined, alpha),
        ci_high: nearest_rank(&defined, 1.0 - alpha),
        n_resamples: defined.len(),
        level: opts.level,
    })
}
