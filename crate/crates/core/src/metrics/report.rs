//! Full evaluation reports: every metric of the protocol with bootstrap CIs.
//!
//! All metrics share the same resampled index draws (one draw per resample),
//! so a report is internally consistent and reproducible from its seed.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bootstrap::{nearest_rank, BootstrapOptions};
use super::{
    auprc, auroc, brier, calibration_slope_intercept, ece_equal_frequency, thresholded_metrics,
};
use crate::error::{Error, Result};
use crate::rng::derive_rng;

/// Canonical metric order used by reports and CSV output.
pub const METRIC_NAMES: [&str; 11] = [
    "auroc",
    "auprc",
    "f1",
    "precision",
    "recall",
    "accuracy",
    "balanced_accuracy",
    "brier",
    "ece",
    "calibration_slope",
    "calibration_intercept",
];

#[derive(Debug, Clone, Copy)]
pub struct EvaluationOptions {
    pub threshold: f64,
    pub ece_bins: usize,
    pub bootstrap: BootstrapOptions,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            ece_bins: 20,
            bootstrap: BootstrapOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimate {
    /// Estimate on the full data.
    pub point: f64,
    /// Mean of the metric over bootstrap resamples.
    pub resample_mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Conventions hit at the point estimate (zero denominators) or
    /// `undefined_resamples:<k>` when some resamples had no defined value.
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    #[serde(flatten)]
    pub estimate: MetricEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub threshold: f64,
    pub ece_bins: usize,
    pub n_resamples: usize,
    pub bootstrap_seed: u64,
    pub level: f64,
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    pub fn get(&self, metric: &str) -> Option<&MetricEstimate> {
        self.rows
            .iter()
            .find(|r| r.metric == metric)
            .map(|r| &r.estimate)
    }

    /// Stable CSV rendering: `metric,point,resample_mean,ci_low,ci_high,flags`.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(["metric", "point", "resample_mean", "ci_low", "ci_high", "flags"])?;
        for row in &self.rows {
            writer.write_record([
                row.metric.as_str(),
                &row.estimate.point.to_string(),
                &row.estimate.resample_mean.to_string(),
                &row.estimate.ci_low.to_string(),
                &row.estimate.ci_high.to_string(),
                &row.estimate.flags.join(";"),
            ])?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Per-resample values, `None` where the metric was undefined on that draw.
struct ResampleValues {
    values: [Option<f64>; 11],
}

fn all_metrics(
    scores: &[f64],
    labels: &[u8],
    threshold: f64,
    ece_bins: usize,
) -> [Option<f64>; 11] {
    let thresholded = thresholded_metrics(scores, labels, threshold).ok();
    let slope_intercept = calibration_slope_intercept(scores, labels).ok();
    [
        auroc(scores, labels).ok(),
        auprc(scores, labels).ok(),
        thresholded.as_ref().map(|t| t.f1),
        thresholded.as_ref().map(|t| t.precision),
        thresholded.as_ref().map(|t| t.recall),
        thresholded.as_ref().map(|t| t.accuracy),
        thresholded.as_ref().map(|t| t.balanced_accuracy),
        brier(scores, labels).ok(),
        ece_equal_frequency(scores, labels, ece_bins).ok(),
        slope_intercept.as_ref().map(|s| s.slope),
        slope_intercept.as_ref().map(|s| s.intercept),
    ]
}

fn one_resample(
    scores: &[f64],
    labels: &[u8],
    opts: &EvaluationOptions,
    slot: u64,
) -> Option<ResampleValues> {
    let n = scores.len();
    let mut drawn_scores = vec![0.0; n];
    let mut drawn_labels = vec![0u8; n];
    for attempt in 0..10 {
        let mut rng = derive_rng(opts.bootstrap.seed, slot, attempt);
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
        return Some(ResampleValues {
            values: all_metrics(&drawn_scores, &drawn_labels, opts.threshold, opts.ece_bins),
        });
    }
    None
}

/// Evaluate `scores` against `labels` with the full metric set and bootstrap
/// confidence intervals.
pub fn evaluate_scores(
    scores: &[f64],
    labels: &[u8],
    opts: &EvaluationOptions,
) -> Result<MetricReport> {
    // Point estimates first; their errors are the caller's errors.
    let point_auroc = auroc(scores, labels)?;
    let point_auprc = auprc(scores, labels)?;
    let point_thresholded = thresholded_metrics(scores, labels, opts.threshold)?;
    let point_brier = brier(scores, labels)?;
    let point_ece = ece_equal_frequency(scores, labels, opts.ece_bins)?;
    let point_slope = calibration_slope_intercept(scores, labels)?;
    let points = [
        point_auroc,
        point_auprc,
        point_thresholded.f1,
        point_thresholded.precision,
        point_thresholded.recall,
        point_thresholded.accuracy,
        point_thresholded.balanced_accuracy,
        point_brier,
        point_ece,
        point_slope.slope,
        point_slope.intercept,
    ];

    let n_resamples = opts.bootstrap.n_resamples;
    if n_resamples == 0 {
        return Err(Error::InvalidConfig("n_resamples must be >= 1".into()));
    }
    if !(opts.bootstrap.level > 0.0 && opts.bootstrap.level < 1.0) {
        return Err(Error::InvalidConfig("level must be in (0,1)".into()));
    }
    let resamples: Vec<Option<ResampleValues>> = (0..n_resamples as u64)
        .into_par_iter()
        .map(|slot| one_resample(scores, labels, opts, slot))
        .collect();
    let failed_slots = resamples.iter().filter(|r| r.is_none()).count();
    if failed_slots * 10 > n_resamples {
        return Err(Error::UndefinedResamples {
            failures: failed_slots,
            total: n_resamples,
        });
    }

    let alpha = (1.0 - opts.bootstrap.level) / 2.0;
    let mut rows = Vec::with_capacity(METRIC_NAMES.len());
    for (index, (&name, &point)) in METRIC_NAMES.iter().zip(&points).enumerate() {
        let mut values: Vec<f64> = resamples
            .iter()
            .flatten()
            .filter_map(|r| r.values[index])
            .filter(|v| v.is_finite())
            .collect();
        let undefined = n_resamples - values.len();
        if undefined * 10 > n_resamples {
            return Err(Error::UndefinedResamples {
                failures: undefined,
                total: n_resamples,
            });
        }
        values.sort_by(f64::total_cmp);
        let mut flags = Vec::new();
        match name {
            "f1" | "precision" | "recall" | "balanced_accuracy" => {
                if point_thresholded
                    .zero_denominator
                    .iter()
                    .any(|z| name.contains(z.as_str()) || z == "specificity")
                {
                    flags.push("zero_denominator".to_string());
                }
            }
            _ => {}
        }
        if undefined > 0 {
            flags.push(format!("undefined_resamples:{undefined}"));
        }
        rows.push(MetricRow {
            metric: name.to_string(),
            estimate: MetricEstimate {
                point,
                resample_mean: values.iter().sum::<f64>() / values.len() as f64,
                ci_low: nearest_rank(&values, alpha),
                ci_high: nearest_rank(&values, 1.0 - alpha),
                flags,
            },
        });
    }

    Ok(MetricReport {
        threshold: opts.threshold,
        ece_bins: opts.ece_bins,
        n_resamples,
        bootstrap_seed: opts.bootstrap.seed,
        level: opts.bootstrap.level,
        rows,
    })
}
