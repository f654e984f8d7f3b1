//! Episode/prediction data model, file ingestion, cohort summaries, and the
//! synthetic cohort generator used for desk-scale experiments.

mod io;
mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_predictions, save_predictions, FileFormat, LoadedPredictions};
pub use synthetic::{generate_synthetic_cohort, BranchSpec, SyntheticConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidInput(format!(
                "unknown split `{other}` (expected train, validation, or test)"
            ))),
        }
    }
}

/// One episode: outcome label plus per-specialist probabilities.
///
/// A specialist absent from `probs` means "no prediction", which is distinct
/// from a probability of 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub episode_id: String,
    pub split: Split,
    /// 1 = event (in-hospital death), 0 = no event.
    pub label: u8,
    pub probs: BTreeMap<String, f64>,
}

impl PredictionRecord {
    pub fn new(
        episode_id: impl Into<String>,
        split: Split,
        label: u8,
        probs: impl IntoIterator<Item = (String, f64)>,
    ) -> Self {
        Self {
            episode_id: episode_id.into(),
            split,
            label,
            probs: probs.into_iter().collect(),
        }
    }

    pub fn prob(&self, specialist: &str) -> Option<f64> {
        self.probs.get(specialist).copied()
    }

    pub fn has_all(&self, specialists: &[String]) -> bool {
        specialists.iter().all(|s| self.probs.contains_key(s))
    }

    pub fn validate(&self) -> Result<()> {
        if self.label > 1 {
            return Err(Error::InvalidInput(format!(
                "label must be 0 or 1, got {}",
                self.label
            )));
        }
        for (name, p) in &self.probs {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::InvalidInput(format!(
                    "probability for `{name}` outside [0,1]: {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Drop records that do not carry every named specialist. Returns the kept
/// records and the number dropped. Opt-in: ingestion itself never drops.
pub fn filter_complete(
    records: Vec<PredictionRecord>,
    specialists: &[String],
) -> (Vec<PredictionRecord>, usize) {
    let before = records.len();
    let kept: Vec<_> = records
        .into_iter()
        .filter(|r| r.has_all(specialists))
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub count: usize,
    pub positives: usize,
    pub prevalence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub total: usize,
    pub splits: BTreeMap<Split, SplitStats>,
    /// Fraction of all records carrying each specialist.
    pub coverage: BTreeMap<String, f64>,
}

pub fn cohort_summary(records: &[PredictionRecord]) -> Result<CohortSummary> {
    if records.is_empty() {
        return Err(Error::EmptyInput("cohort"));
    }
    let mut splits: BTreeMap<Split, (usize, usize)> = BTreeMap::new();
    let mut carrier_counts: BTreeMap<String, usize> = BTreeMap::new();
    for record in records {
        let entry = splits.entry(record.split).or_insert((0, 0));
        entry.0 += 1;
        entry.1 += record.label as usize;
        for name in record.probs.keys() {
            *carrier_counts.entry(name.clone()).or_insert(0) += 1;
        }
    }
    let total = records.len();
    Ok(CohortSummary {
        total,
        splits: splits
            .into_iter()
            .map(|(split, (count, positives))| {
                (
                    split,
                    SplitStats {
                        count,
                        positives,
                        prevalence: positives as f64 / count as f64,
                    },
                )
            })
            .collect(),
        coverage: carrier_counts
            .into_iter()
            .map(|(name, k)| (name, k as f64 / total as f64))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, split: Split, label: u8, probs: &[(&str, f64)]) -> PredictionRecord {
        PredictionRecord::new(
            id,
            split,
            label,
            probs.iter().map(|(k, v)| (k.to_string(), *v)),
        )
    }

    #[test]
    fn prevalence_is_exact_count_ratio() {
        let mut records: Vec<_> = (0..9)
            .map(|i| record(&format!("e{i}"), Split::Test, 0, &[("ts", 0.2)]))
            .collect();
        records.push(record("e9", Split::Test, 1, &[("ts", 0.9)]));
        let summary = cohort_summary(&records).unwrap();
        assert_eq!(summary.splits[&Split::Test].prevalence, 0.10);
        assert_eq!(summary.splits[&Split::Test].count, 10);
    }

    #[test]
    fn coverage_counts_carriers() {
        let records = vec![
            record("a", Split::Train, 0, &[("ts", 0.1), ("cn", 0.2)]),
            record("b", Split::Train, 1, &[("ts", 0.7), ("cn", 0.8)]),
        ];
        let summary = cohort_summary(&records).unwrap();
        assert_eq!(summary.coverage["ts"], 1.0);
        assert_eq!(summary.coverage["cn"], 1.0);

        let partial = vec![
            record("a", Split::Train, 0, &[("ts", 0.1)]),
            record("b", Split::Train, 1, &[("ts", 0.7), ("cn", 0.8)]),
        ];
        let summary = cohort_summary(&partial).unwrap();
        assert_eq!(summary.coverage["cn"], 0.5);
    }

    #[test]
    fn empty_cohort_is_an_error() {
        assert!(matches!(
            cohort_summary(&[]),
            Err(Error::EmptyInput("cohort"))
        ));
    }

    #[test]
    fn filter_complete_reports_drop_count() {
        let records = vec![
            record("a", Split::Test, 0, &[("ts", 0.1)]),
            record("b", Split::Test, 1, &[("ts", 0.7), ("cn", 0.8)]),
        ];
        let (kept, dropped) = filter_complete(records, &["ts".into(), "cn".into()]);
        assert_eq!(kept.len(), 1);
        assert_eq!(dropped, 1);
        assert_eq!(kept[0].episode_id, "b");
    }
}
