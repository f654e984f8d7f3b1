//! Saliency post-processing for hour × variable grids: one-hot aggregation,
//! signed top-K drivers, contiguous same-sign windows, and the sparse
//! top-fraction heatmap mask.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid convention for the 48-hour observation window.
pub const STANDARD_GRID_HOURS: usize = 48;

/// Signed saliency over an hour × variable grid, with the observed values
/// alongside. Row-major: cell `(hour, variable)` is `hour * n_vars + var`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMatrix {
    pub hours: usize,
    pub variables: Vec<String>,
    pub saliency: Vec<f64>,
    pub observed: Vec<f64>,
}

impl AttributionMatrix {
    pub fn new(
        hours: usize,
        variables: Vec<String>,
        saliency: Vec<f64>,
        observed: Vec<f64>,
    ) -> Result<Self> {
        let cells = hours * variables.len();
        if saliency.len() != cells {
            return Err(Error::DimensionMismatch {
                expected: cells,
                actual: saliency.len(),
            });
        }
        if observed.len() != cells {
            return Err(Error::DimensionMismatch {
                expected: cells,
                actual: observed.len(),
            });
        }
        Ok(Self {
            hours,
            variables,
            saliency,
            observed,
        })
    }

    pub fn cells(&self) -> usize {
        self.saliency.len()
    }

    fn index(&self, hour: usize, variable: usize) -> usize {
        hour * self.variables.len() + variable
    }

    pub fn saliency_at(&self, hour: usize, variable: usize) -> f64 {
        self.saliency[self.index(hour, variable)]
    }

    pub fn observed_at(&self, hour: usize, variable: usize) -> f64 {
        self.observed[self.index(hour, variable)]
    }
}

/// A maximal run of same-sign nonzero saliency for one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyWindow {
    pub variable: String,
    pub start_hour: usize,
    /// Inclusive.
    pub end_hour: usize,
    pub positive: bool,
    /// Hour of maximum |saliency| inside the run (first on ties).
    pub peak_hour: usize,
    pub peak_saliency: f64,
    pub observed_at_peak: f64,
}

/// Per variable, maximal runs of same-sign nonzero saliency at least
/// `min_len` hours long. Zero cells break runs.
pub fn saliency_windows(m: &AttributionMatrix, min_len: usize) -> Vec<SaliencyWindow> {
    let min_len = min_len.max(1);
    let mut windows = Vec::new();
    for (v, name) in m.variables.iter().enumerate() {
        let mut start = 0;
        while start < m.hours {
            let s = m.saliency_at(start, v);
            if s == 0.0 {
                start += 1;
                continue;
            }
            let positive = s > 0.0;
            let mut end = start;
            while end + 1 < m.hours {
                let next = m.saliency_at(end + 1, v);
                if next == 0.0 || (next > 0.0) != positive {
                    break;
                }
                end += 1;
            }
            if end - start + 1 >= min_len {
                let mut peak_hour = start;
                let mut peak = m.saliency_at(start, v).abs();
                for h in start + 1..=end {
                    let magnitude = m.saliency_at(h, v).abs();
                    if magnitude > peak {
                        peak = magnitude;
                        peak_hour = h;
                    }
                }
                windows.push(SaliencyWindow {
                    variable: name.clone(),
                    start_hour: start,
                    end_hour: end,
                    positive,
                    peak_hour,
                    peak_saliency: m.saliency_at(peak_hour, v),
                    observed_at_peak: m.observed_at(peak_hour, v),
                });
            }
            start = end + 1;
        }
    }
    windows
}

/// Boolean mask keeping the global top fraction of |saliency|.
///
/// The threshold is the k-th largest magnitude with `k = ceil(top_frac ·
/// cells)` (nearest-rank quantile); cells at or above it are kept, so exactly
/// k cells survive when magnitudes are distinct.
pub fn heatmap_mask(m: &AttributionMatrix, top_frac: f64) -> Result<Vec<bool>> {
    if !(top_frac > 0.0 && top_frac <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "top_frac must be in (0,1], got {top_frac}"
        )));
    }
    let cells = m.cells();
    if cells == 0 {
        return Ok(Vec::new());
    }
    let mut magnitudes: Vec<f64> = m.saliency.iter().map(|s| s.abs()).collect();
    magnitudes.sort_by(f64::total_cmp);
    let keep = ((top_frac * cells as f64).ceil() as usize).clamp(1, cells);
    let threshold = magnitudes[cells - keep];
    Ok(m.saliency.iter().map(|s| s.abs() >= threshold).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Driver {
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopDrivers {
    /// Risk-increasing values, descending; zeros excluded.
    pub positive: Vec<Driver>,
    /// Risk-reducing values, ascending (most negative first); zeros excluded.
    pub negative: Vec<Driver>,
}

/// Top-k risk-increasing and risk-reducing entries of a saliency vector.
pub fn top_k_drivers(values: &[f64], k: usize) -> TopDrivers {
    let mut positive: Vec<Driver> = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(index, &value)| Driver { index, value })
        .collect();
    let mut negative: Vec<Driver> = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v < 0.0)
        .map(|(index, &value)| Driver { index, value })
        .collect();
    positive.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.index.cmp(&b.index)));
    negative.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.index.cmp(&b.index)));
    positive.truncate(k);
    negative.truncate(k);
    TopDrivers { positive, negative }
}

/// One named variable spanning a set of columns (one column for numeric
/// variables, several for a one-hot encoded categorical).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub name: String,
    pub columns: Vec<usize>,
    /// For categoricals: one label per column, decoded from the active
    /// one-hot column of the observed vector.
    pub category_labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedAttribution {
    pub name: String,
    /// Sum of member-column attributions.
    pub attribution: f64,
    pub category: Option<String>,
}

/// Sum attributions over one-hot groups. The groups must partition the
/// columns exactly; categorical labels are decoded from the observed vector
/// (argmax over the group's columns).
pub fn aggregate_onehot(
    attributions: &[f64],
    observed: &[f64],
    groups: &[FeatureGroup],
) -> Result<Vec<GroupedAttribution>> {
    if observed.len() != attributions.len() {
        return Err(Error::DimensionMismatch {
            expected: attributions.len(),
            actual: observed.len(),
        });
    }
    let mut claimed = vec![false; attributions.len()];
    for group in groups {
        if group.columns.is_empty() {
            return Err(Error::InvalidGroups(format!("group `{}` is empty", group.name)));
        }
        if let Some(labels) = &group.category_labels {
            if labels.len() != group.columns.len() {
                return Err(Error::InvalidGroups(format!(
                    "group `{}` has {} labels for {} columns",
                    group.name,
                    labels.len(),
                    group.columns.len()
                )));
            }
        }
        for &column in &group.columns {
            if column >= attributions.len() {
                return Err(Error::InvalidGroups(format!(
                    "group `{}` references column {column} out of range",
                    group.name
                )));
            }
            if claimed[column] {
                return Err(Error::InvalidGroups(format!(
                    "column {column} appears in more than one group"
                )));
            }
            claimed[column] = true;
        }
    }
    if let Some(unclaimed) = claimed.iter().position(|&c| !c) {
        return Err(Error::InvalidGroups(format!(
            "column {unclaimed} is not covered by any group"
        )));
    }

    Ok(groups
        .iter()
        .map(|group| {
            let attribution = group.columns.iter().map(|&c| attributions[c]).sum();
            let category = group.category_labels.as_ref().map(|labels| {
                let active = group
                    .columns
                    .iter()
                    .enumerate()
                    .max_by(|(_, &a), (_, &b)| observed[a].total_cmp(&observed[b]))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                labels[active].clone()
            });
            GroupedAttribution {
                name: group.name.clone(),
                attribution,
                category,
            }
        })
        .collect())
}

/// Plain-text ranked view of a saliency grid: the strongest cells by
/// |saliency| followed by the contiguous windows.
pub fn matrix_report(m: &AttributionMatrix, top_k: usize, min_window_len: usize) -> String {
    let mut ranked: Vec<(usize, usize)> = (0..m.hours)
        .flat_map(|h| (0..m.variables.len()).map(move |v| (h, v)))
        .collect();
    ranked.sort_by(|&(h1, v1), &(h2, v2)| {
        m.saliency_at(h2, v2)
            .abs()
            .total_cmp(&m.saliency_at(h1, v1).abs())
    });
    let mut out = String::from("rank  hour  variable              saliency    observed\n");
    for (rank, &(h, v)) in ranked.iter().take(top_k).enumerate() {
        out.push_str(&format!(
            "{:<5} {:<5} {:<21} {:>+9.4}   {:>8.3}\n",
            rank + 1,
            h,
            m.variables[v],
            m.saliency_at(h, v),
            m.observed_at(h, v)
        ));
    }
    let windows = saliency_windows(m, min_window_len);
    if !windows.is_empty() {
        out.push_str("\nwindows (contiguous same-sign saliency):\n");
        for w in windows {
            out.push_str(&format!(
                "  {} hours {}-{} [{}] peak {:+.4} at hour {} (observed {:.3})\n",
                w.variable,
                w.start_hour,
                w.end_hour,
                if w.positive { "+" } else { "-" },
                w.peak_saliency,
                w.peak_hour,
                w.observed_at_peak
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(hours: usize, saliency: Vec<f64>) -> AttributionMatrix {
        let observed = (0..saliency.len()).map(|i| i as f64).collect();
        AttributionMatrix::new(hours, vec!["v".to_string()], saliency, observed).unwrap()
    }

    #[test]
    fn windows_follow_run_length_definition() {
        let m = matrix(5, vec![0.1, 0.3, 0.2, -0.4, -0.1]);
        let windows = saliency_windows(&m, 2);
        assert_eq!(windows.len(), 2);
        assert_eq!((windows[0].start_hour, windows[0].end_hour), (0, 2));
        assert!(windows[0].positive);
        assert_eq!(windows[0].peak_hour, 1);
        assert_eq!(windows[0].observed_at_peak, 1.0);
        assert_eq!((windows[1].start_hour, windows[1].end_hour), (3, 4));
        assert!(!windows[1].positive);
    }

    #[test]
    fn alternating_signs_yield_no_windows() {
        let m = matrix(4, vec![0.1, -0.1, 0.1, -0.1]);
        assert!(saliency_windows(&m, 2).is_empty());
    }

    #[test]
    fn peak_is_first_on_ties_and_zeros_break_runs() {
        let m = matrix(5, vec![0.2, 0.2, 0.0, 0.2, 0.2]);
        let windows = saliency_windows(&m, 2);
        assert_eq!(windows.len(), 2);
        assert_eq!(windows[0].peak_hour, 0);
        assert_eq!(windows[1].peak_hour, 3);
    }

    #[test]
    fn heatmap_mask_counts() {
        let saliency: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let m = AttributionMatrix::new(
            10,
            (0..10).map(|i| format!("v{i}")).collect(),
            saliency,
            vec![0.0; 100],
        )
        .unwrap();
        let mask = heatmap_mask(&m, 0.10).unwrap();
        assert_eq!(mask.iter().filter(|&&k| k).count(), 10);

        let uniform = matrix(4, vec![0.5; 4]);
        let mask = heatmap_mask(&uniform, 0.25).unwrap();
        assert!(mask.iter().all(|&k| k));
    }

    #[test]
    fn heatmap_mask_scale_invariant() {
        let m1 = matrix(4, vec![0.1, -0.9, 0.4, 0.2]);
        let m2 = matrix(4, vec![0.1 * 7.0, -0.9 * 7.0, 0.4 * 7.0, 0.2 * 7.0]);
        assert_eq!(
            heatmap_mask(&m1, 0.5).unwrap(),
            heatmap_mask(&m2, 0.5).unwrap()
        );
    }

    #[test]
    fn top_k_examples() {
        let drivers = top_k_drivers(&[3.0, -1.0, 2.0], 2);
        assert_eq!(
            drivers.positive.iter().map(|d| d.value).collect::<Vec<_>>(),
            vec![3.0, 2.0]
        );
        assert_eq!(
            drivers.negative.iter().map(|d| d.value).collect::<Vec<_>>(),
            vec![-1.0]
        );

        let zeros = top_k_drivers(&[0.0, 0.0], 3);
        assert!(zeros.positive.is_empty() && zeros.negative.is_empty());

        let all = top_k_drivers(&[1.0, 2.0], 10);
        assert_eq!(all.positive.len(), 2);
    }

    #[test]
    fn onehot_aggregation_sums_and_decodes() {
        let attributions = [0.2, -0.05, 0.0, 0.4];
        let observed = [0.0, 1.0, 0.0, 3.5];
        let groups = vec![
            FeatureGroup {
                name: "gcs".into(),
                columns: vec![0, 1, 2],
                category_labels: Some(vec!["low".into(), "mid".into(), "high".into()]),
            },
            FeatureGroup {
                name: "hr".into(),
                columns: vec![3],
                category_labels: None,
            },
        ];
        let grouped = aggregate_onehot(&attributions, &observed, &groups).unwrap();
        assert!((grouped[0].attribution - 0.15).abs() < 1e-15);
        assert_eq!(grouped[0].category.as_deref(), Some("mid"));
        assert_eq!(grouped[1].attribution, 0.4);
        assert_eq!(grouped[1].category, None);
        let total: f64 = grouped.iter().map(|g| g.attribution).sum();
        assert!((total - attributions.iter().sum::<f64>()).abs() < 1e-15);
    }

    #[test]
    fn invalid_groups_are_rejected() {
        let attributions = [0.1, 0.2];
        let observed = [0.0, 0.0];
        let overlap = vec![
            FeatureGroup {
                name: "a".into(),
                columns: vec![0, 1],
                category_labels: None,
            },
            FeatureGroup {
                name: "b".into(),
                columns: vec![1],
                category_labels: None,
            },
        ];
        assert!(matches!(
            aggregate_onehot(&attributions, &observed, &overlap),
            Err(Error::InvalidGroups(_))
        ));
        let incomplete = vec![FeatureGroup {
            name: "a".into(),
            columns: vec![0],
            category_labels: None,
        }];
        assert!(matches!(
            aggregate_onehot(&attributions, &observed, &incomplete),
            Err(Error::InvalidGroups(_))
        ));
    }
}
