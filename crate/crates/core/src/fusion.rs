//! Late fusion of specialist probabilities.
//!
//! Specialist probabilities become clipped logits, are standardized with
//! validation-split statistics, and are combined by a logistic meta-learner:
//!
//! ```text
//! logit(p_meta) = b_eff + Σ_i w_i z_i
//! ```
//!
//! Because the combination is linear in logit space, each prediction
//! decomposes exactly into per-specialist contributions `c_i = w_i z_i`,
//! which back the per-case explanations in this module.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::PredictionRecord;
use crate::error::{Error, Result};
use crate::logreg::{self, LogregOptions};

/// Probabilities are clamped to `[CLIP, 1 − CLIP]` before the log-odds
/// transform so that 0 and 1 stay finite.
pub const LOGIT_CLIP: f64 = 1e-6;

/// Supported persisted-model format.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Clipped log-odds: `ln(p′/(1−p′))` with `p′ = clamp(p, 1e−6, 1−1e−6)`.
///
/// Out-of-range inputs are captured by the clamp; NaN is a caller bug.
pub fn to_logit(p: f64) -> f64 {
    assert!(!p.is_nan(), "to_logit: probability must not be NaN");
    let p = p.clamp(LOGIT_CLIP, 1.0 - LOGIT_CLIP);
    (p / (1.0 - p)).ln()
}

/// Standard logistic function, stable in both tails.
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Arithmetic mean of the provided probabilities (the AVG baseline).
pub fn average_fusion(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::EmptyInput("probabilities"));
    }
    Ok(probs.iter().sum::<f64>() / probs.len() as f64)
}

/// Per-specialist logit mean and standard deviation, fitted on validation
/// records. Uses the population (divide-by-n) variance convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub specialists: Vec<String>,
    pub means: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl Standardizer {
    pub fn fit(records: &[PredictionRecord], specialists: &[String]) -> Result<Self> {
        if specialists.is_empty() {
            return Err(Error::EmptyInput("specialists"));
        }
        if records.len() < 2 {
            return Err(Error::TooFewRecords {
                required: 2,
                actual: records.len(),
            });
        }
        let mut means = Vec::with_capacity(specialists.len());
        let mut sigmas = Vec::with_capacity(specialists.len());
        for name in specialists {
            let mut logits = Vec::with_capacity(records.len());
            for record in records {
                let p = record
                    .prob(name)
                    .ok_or_else(|| Error::MissingSpecialist(name.clone()))?;
                logits.push(to_logit(p));
            }
            let n = logits.len() as f64;
            let mean = logits.iter().sum::<f64>() / n;
            let var = logits.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / n;
            let sigma = var.sqrt();
            if sigma <= 0.0 {
                return Err(Error::ZeroVariance(name.clone()));
            }
            means.push(mean);
            sigmas.push(sigma);
        }
        Ok(Self {
            specialists: specialists.to_vec(),
            means,
            sigmas,
        })
    }

    /// `(logit − mean) / sigma` for the specialist at `index`.
    pub fn apply(&self, index: usize, logit: f64) -> f64 {
        (logit - self.means[index]) / self.sigmas[index]
    }

    /// Standardized clipped logits for a record, in specialist order.
    pub fn standardize_record(&self, record: &PredictionRecord) -> Result<Vec<f64>> {
        self.specialists
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let p = record
                    .prob(name)
                    .ok_or_else(|| Error::MissingSpecialist(name.clone()))?;
                Ok(self.apply(i, to_logit(p)))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub final_log_loss: f64,
    pub gradient_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct MetaFitOptions {
    pub l2: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MetaFitOptions {
    fn default() -> Self {
        Self {
            l2: 0.0,
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

/// Logistic-regression meta-learner over standardized specialist logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingModel {
    pub standardizer: Standardizer,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub diagnostics: FitDiagnostics,
}

impl StackingModel {
    /// Fit standardizer and meta-weights on validation records.
    pub fn fit(
        validation: &[PredictionRecord],
        specialists: &[String],
        opts: &MetaFitOptions,
    ) -> Result<Self> {
        let standardizer = Standardizer::fit(validation, specialists)?;
        let rows: Vec<Vec<f64>> = validation
            .iter()
            .map(|r| standardizer.standardize_record(r))
            .collect::<Result<_>>()?;
        let labels: Vec<u8> = validation.iter().map(|r| r.label).collect();
        let fit = logreg::fit_logistic(
            &rows,
            &labels,
            &LogregOptions {
                l2: opts.l2,
                tol: opts.tol,
                max_iter: opts.max_iter,
                ..Default::default()
            },
        )?;
        Ok(Self {
            standardizer,
            weights: fit.weights,
            intercept: fit.intercept,
            diagnostics: FitDiagnostics {
                iterations: fit.iterations,
                final_log_loss: fit.final_log_loss,
                gradient_norm: fit.gradient_norm,
                converged: fit.converged,
            },
        })
    }

    pub fn specialists(&self) -> &[String] {
        &self.standardizer.specialists
    }

    /// `b_eff + Σ w_i z_i` for a record carrying every model specialist.
    pub fn decision_logit(&self, record: &PredictionRecord) -> Result<f64> {
        let z = self.standardizer.standardize_record(record)?;
        let mut logit = self.intercept;
        for (w, zi) in self.weights.iter().zip(&z) {
            logit += w * zi;
        }
        Ok(logit)
    }

    /// Ensemble probability. A record missing a specialist is an error; the
    /// caller should route such records to the calibrated fallback instead.
    pub fn predict(&self, record: &PredictionRecord) -> Result<f64> {
        Ok(logistic(self.decision_logit(record)?))
    }

    /// `|w_i| / Σ_j |w_j|`: the global modality weights.
    pub fn global_weights(&self) -> Result<Vec<f64>> {
        let denom: f64 = self.weights.iter().map(|w| w.abs()).sum();
        if denom == 0.0 {
            return Err(Error::AllZeroWeights);
        }
        Ok(self.weights.iter().map(|w| w.abs() / denom).collect())
    }

    /// Per-case contributions `c_i = w_i z_i` and their normalized shares.
    pub fn contributions(&self, record: &PredictionRecord) -> Result<ModalityAttribution> {
        let z = self.standardizer.standardize_record(record)?;
        let contributions: Vec<f64> = self.weights.iter().zip(&z).map(|(w, zi)| w * zi).collect();
        Ok(ModalityAttribution::from_contributions(
            self.specialists(),
            contributions,
        ))
    }

    /// Full per-case explanation: votes, ensemble decision, rendered logit
    /// equation, modality attribution, and agreement label.
    pub fn explain(&self, record: &PredictionRecord, threshold: f64) -> Result<CaseExplanation> {
        let z = self.standardizer.standardize_record(record)?;
        let votes: Vec<BranchVote> = self
            .specialists()
            .iter()
            .map(|name| BranchVote {
                specialist: name.clone(),
                probability: record.prob(name).expect("checked by standardize_record"),
            })
            .collect();

        let terms: Vec<ContributionTerm> = self
            .specialists()
            .iter()
            .zip(self.weights.iter().zip(&z))
            .map(|(name, (&weight, &zi))| ContributionTerm {
                specialist: name.clone(),
                weight,
                z: zi,
                contribution: weight * zi,
            })
            .collect();

        let mut ensemble_logit = self.intercept;
        for term in &terms {
            ensemble_logit += term.contribution;
        }
        let ensemble_probability = logistic(ensemble_logit);

        let attribution = ModalityAttribution::from_contributions(
            self.specialists(),
            terms.iter().map(|t| t.contribution).collect(),
        );
        let raw_probs: Vec<f64> = votes.iter().map(|v| v.probability).collect();
        let agreement = agreement_label(&raw_probs)?;
        let equation = render_equation(self.intercept, &terms, ensemble_logit);

        Ok(CaseExplanation {
            episode_id: record.episode_id.clone(),
            votes,
            ensemble_probability,
            ensemble_logit,
            predicted_class: u8::from(ensemble_probability >= threshold),
            threshold,
            intercept: self.intercept,
            terms,
            equation,
            attribution,
            agreement,
        })
    }
}

/// Per-specialist contribution to one meta-decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityAttribution {
    pub specialists: Vec<String>,
    /// `c_i = w_i z_i`, in logit units.
    pub contributions: Vec<f64>,
    /// `|c_i| / Σ_j |c_j|`; uniform when every contribution is zero.
    pub shares: Vec<f64>,
    pub dominant: String,
    /// Dominant share tied; broken by lexicographic specialist name.
    pub dominant_tie: bool,
    /// Every contribution was exactly zero; shares set to uniform.
    pub all_zero: bool,
}

impl ModalityAttribution {
    pub fn from_contributions(specialists: &[String], contributions: Vec<f64>) -> Self {
        assert_eq!(specialists.len(), contributions.len());
        let denom: f64 = contributions.iter().map(|c| c.abs()).sum();
        let all_zero = denom == 0.0;
        let shares: Vec<f64> = if all_zero {
            vec![1.0 / contributions.len() as f64; contributions.len()]
        } else {
            contributions.iter().map(|c| c.abs() / denom).collect()
        };
        let max_share = shares.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tied: Vec<usize> = (0..shares.len())
            .filter(|&i| shares[i] == max_share)
            .collect();
        let dominant = tied
            .iter()
            .map(|&i| specialists[i].as_str())
            .min()
            .expect("at least one specialist")
            .to_string();
        Self {
            specialists: specialists.to_vec(),
            contributions,
            shares,
            dominant,
            dominant_tie: tied.len() > 1,
            all_zero,
        }
    }

    pub fn share_of(&self, specialist: &str) -> Option<f64> {
        self.specialists
            .iter()
            .position(|s| s == specialist)
            .map(|i| self.shares[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementLabel {
    AgreeLow,
    AgreeHigh,
    Conflict,
}

impl AgreementLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            AgreementLabel::AgreeLow => "agree_low",
            AgreementLabel::AgreeHigh => "agree_high",
            AgreementLabel::Conflict => "conflict",
        }
    }
}

impl std::fmt::Display for AgreementLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sign-pattern agreement of raw (unstandardized) clipped logits.
///
/// All logits ≤ 0 → `AgreeLow`, all > 0 → `AgreeHigh`, otherwise `Conflict`.
/// The boundary p = 0.5 (logit 0) counts as low.
pub fn agreement_label(probs: &[f64]) -> Result<AgreementLabel> {
    if probs.len() < 2 {
        return Err(Error::InvalidInput(
            "agreement label needs at least two specialist probabilities".into(),
        ));
    }
    let highs = probs.iter().filter(|&&p| to_logit(p) > 0.0).count();
    Ok(if highs == 0 {
        AgreementLabel::AgreeLow
    } else if highs == probs.len() {
        AgreementLabel::AgreeHigh
    } else {
        AgreementLabel::Conflict
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchVote {
    pub specialist: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionTerm {
    pub specialist: String,
    pub weight: f64,
    pub z: f64,
    pub contribution: f64,
}

/// Everything a reviewer needs to audit one meta-decision.
///
/// `intercept + Σ terms[i].contribution` equals `ensemble_logit` exactly (the
/// fields are computed from one pass); the rendered equation shows the same
/// numbers at 3 significant digits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseExplanation {
    pub episode_id: String,
    pub votes: Vec<BranchVote>,
    pub ensemble_probability: f64,
    pub ensemble_logit: f64,
    pub predicted_class: u8,
    pub threshold: f64,
    pub intercept: f64,
    pub terms: Vec<ContributionTerm>,
    pub equation: String,
    pub attribution: ModalityAttribution,
    pub agreement: AgreementLabel,
}

impl CaseExplanation {
    pub fn render_text(&self) -> String {
        let votes = self
            .votes
            .iter()
            .map(|v| format!("{} = {}", v.specialist, format_sig(v.probability, 3)))
            .collect::<Vec<_>>()
            .join(", ");
        let share = self
            .attribution
            .share_of(&self.attribution.dominant)
            .unwrap_or(0.0);
        let contributions = self
            .attribution
            .specialists
            .iter()
            .zip(&self.attribution.contributions)
            .zip(&self.attribution.shares)
            .map(|((name, c), s)| {
                format!(
                    "{name} = {} ({}%)",
                    format_sig(*c, 3),
                    format_percent_1dp(*s)
                )
            })
            .collect::<Vec<_>>()
            .join(", ");
        let mut out = String::new();
        out.push_str(&format!("episode {}\n", self.episode_id));
        out.push_str(&format!("  branch votes: {votes}\n"));
        out.push_str(&format!(
            "  ensemble: p = {} -> class {} (threshold {})\n",
            format_sig(self.ensemble_probability, 3),
            self.predicted_class,
            self.threshold
        ));
        out.push_str(&format!("  {}\n", self.equation));
        out.push_str(&format!("  contributions: {contributions}\n"));
        out.push_str(&format!(
            "  dominant modality: {} ({}%){}\n",
            self.attribution.dominant,
            format_percent_1dp(share),
            if self.attribution.dominant_tie {
                " [tie]"
            } else {
                ""
            }
        ));
        out.push_str(&format!("  agreement: {}\n", self.agreement));
        out
    }
}

/// Round-half-up percentage with one decimal, e.g. 0.795 → "79.5".
pub fn format_percent_1dp(share: f64) -> String {
    let rounded = (share * 1000.0 + 0.5).floor() / 10.0;
    format!("{rounded:.1}")
}

/// Fixed-significant-digit rendering for equation terms.
pub fn format_sig(x: f64, digits: u32) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

fn render_equation(intercept: f64, terms: &[ContributionTerm], logit: f64) -> String {
    let mut rhs = format_sig(intercept, 3);
    for term in terms {
        let z = if term.z < 0.0 {
            format!("({})", format_sig(term.z, 3))
        } else {
            format_sig(term.z, 3)
        };
        rhs.push_str(&format!(" + {}*{}", format_sig(term.weight, 3), z));
    }
    format!("logit(p) = {rhs} = {}", format_sig(logit, 3))
}

/// A fitted fusion model: either the logistic stacker or the plain average
/// baseline. This is the unit persisted to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "meta", rename_all = "lowercase")]
pub enum FusionModel {
    Logreg(StackingModel),
    Avg { specialists: Vec<String> },
}

#[derive(Serialize, Deserialize)]
struct StoredModel {
    format_version: u32,
    #[serde(flatten)]
    model: FusionModel,
}

impl FusionModel {
    pub fn specialists(&self) -> &[String] {
        match self {
            FusionModel::Logreg(m) => m.specialists(),
            FusionModel::Avg { specialists } => specialists,
        }
    }

    pub fn predict(&self, record: &PredictionRecord) -> Result<f64> {
        match self {
            FusionModel::Logreg(m) => m.predict(record),
            FusionModel::Avg { specialists } => {
                let probs: Vec<f64> = specialists
                    .iter()
                    .map(|name| {
                        record
                            .prob(name)
                            .ok_or_else(|| Error::MissingSpecialist(name.clone()))
                    })
                    .collect::<Result<_>>()?;
                average_fusion(&probs)
            }
        }
    }

    pub fn as_logreg(&self) -> Option<&StackingModel> {
        match self {
            FusionModel::Logreg(m) => Some(m),
            FusionModel::Avg { .. } => None,
        }
    }

    pub fn to_json_string(&self) -> Result<String> {
        let stored = StoredModel {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&stored)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let stored: StoredModel = serde_json::from_str(text)?;
        if stored.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: stored.format_version,
                supported: MODEL_FORMAT_VERSION,
            });
        }
        Ok(stored.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json_string()?).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use std::collections::BTreeMap;

    fn record(probs: &[(&str, f64)]) -> PredictionRecord {
        PredictionRecord::new(
            "e",
            Split::Test,
            0,
            probs.iter().map(|(k, v)| (k.to_string(), *v)),
        )
    }

    fn manual_model(weights: Vec<f64>, intercept: f64) -> StackingModel {
        let k = weights.len();
        StackingModel {
            standardizer: Standardizer {
                specialists: (0..k).map(|i| ["ts", "cn", "x"][i].to_string()).collect(),
                means: vec![0.0; k],
                sigmas: vec![1.0; k],
            },
            weights,
            intercept,
            diagnostics: FitDiagnostics {
                iterations: 0,
                final_log_loss: 0.0,
                gradient_norm: 0.0,
                converged: true,
            },
        }
    }

    #[test]
    fn to_logit_matches_closed_forms() {
        assert_eq!(to_logit(0.5), 0.0);
        assert!((to_logit(0.9) - 9f64.ln()).abs() < 1e-12);
        let clipped = (1e-6f64 / (1.0 - 1e-6)).ln();
        assert_eq!(to_logit(0.0), clipped);
        assert!((to_logit(0.0) + 13.815510).abs() < 1e-6);
        assert_eq!(to_logit(1.0), -clipped);
    }

    #[test]
    #[should_panic(expected = "must not be NaN")]
    fn to_logit_rejects_nan() {
        to_logit(f64::NAN);
    }

    #[test]
    fn standardizer_two_point_case() {
        let records = vec![record(&[("ts", 0.5)]), record(&[("ts", logistic(2.0))])];
        let records: Vec<PredictionRecord> = records
            .into_iter()
            .enumerate()
            .map(|(i, mut r)| {
                r.episode_id = format!("e{i}");
                r
            })
            .collect();
        let s = Standardizer::fit(&records, &["ts".to_string()]).unwrap();
        assert!((s.means[0] - 1.0).abs() < 1e-9);
        assert!((s.sigmas[0] - 1.0).abs() < 1e-9);
        assert!((s.apply(0, 2.0) - 1.0).abs() < 1e-9);
        assert_eq!(s.apply(0, s.means[0]), 0.0);
    }

    #[test]
    fn standardizer_zero_variance_errors() {
        let records = vec![record(&[("ts", 0.3)]), record(&[("ts", 0.3)])];
        let err = Standardizer::fit(&records, &["ts".to_string()]).unwrap_err();
        assert!(matches!(err, Error::ZeroVariance(_)));
    }

    #[test]
    fn predict_closed_form() {
        let model = manual_model(vec![0.0, 0.0], 0.0);
        assert_eq!(
            model.predict(&record(&[("ts", 0.2), ("cn", 0.9)])).unwrap(),
            0.5
        );

        let model = manual_model(vec![1.0, 1.0], 0.0);
        // z = (2, -1) on the identity standardizer.
        let r = record(&[("ts", logistic(2.0)), ("cn", logistic(-1.0))]);
        let p = model.predict(&r).unwrap();
        assert!((p - logistic(1.0)).abs() < 1e-12);
        assert!((p - 0.731059).abs() < 1e-6);
    }

    #[test]
    fn missing_specialist_routes_to_error() {
        let model = manual_model(vec![1.0, 1.0], 0.0);
        let err = model.predict(&record(&[("ts", 0.5)])).unwrap_err();
        assert!(matches!(err, Error::MissingSpecialist(name) if name == "cn"));
    }

    #[test]
    fn average_fusion_examples() {
        assert_eq!(average_fusion(&[0.2, 0.4]).unwrap(), 0.3);
        assert_eq!(average_fusion(&[0.7]).unwrap(), 0.7);
        assert_eq!(average_fusion(&[0.0, 1.0]).unwrap(), 0.5);
        assert!(average_fusion(&[]).is_err());
    }

    #[test]
    fn global_weights_examples() {
        assert_eq!(
            manual_model(vec![1.0, 1.0], 0.0).global_weights().unwrap(),
            vec![0.5, 0.5]
        );
        assert_eq!(
            manual_model(vec![3.0, -1.0], 0.0).global_weights().unwrap(),
            vec![0.75, 0.25]
        );
        assert_eq!(
            manual_model(vec![2.0, 0.0], 0.0).global_weights().unwrap(),
            vec![1.0, 0.0]
        );
        assert!(matches!(
            manual_model(vec![0.0, 0.0], 0.0).global_weights(),
            Err(Error::AllZeroWeights)
        ));
    }

    #[test]
    fn contributions_and_shares() {
        let model = manual_model(vec![1.0, 1.0], 0.0);
        let r = record(&[("ts", logistic(2.0)), ("cn", logistic(-1.0))]);
        let attribution = model.contributions(&r).unwrap();
        assert!((attribution.contributions[0] - 2.0).abs() < 1e-12);
        assert!((attribution.contributions[1] + 1.0).abs() < 1e-12);
        assert!((attribution.shares[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((attribution.shares[1] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(attribution.dominant, "ts");
        assert!(!attribution.dominant_tie);
    }

    #[test]
    fn zero_contribution_gets_zero_share() {
        let model = manual_model(vec![1.0, 1.0], 0.0);
        let r = record(&[("ts", logistic(1.5)), ("cn", 0.5)]);
        let attribution = model.contributions(&r).unwrap();
        assert_eq!(attribution.share_of("cn"), Some(0.0));
        assert_eq!(attribution.share_of("ts"), Some(1.0));
    }

    #[test]
    fn all_zero_contributions_flagged_uniform() {
        let attribution = ModalityAttribution::from_contributions(
            &["ts".to_string(), "cn".to_string()],
            vec![0.0, 0.0],
        );
        assert!(attribution.all_zero);
        assert!(attribution.dominant_tie);
        assert_eq!(attribution.shares, vec![0.5, 0.5]);
        assert_eq!(attribution.dominant, "cn"); // lexicographic tie-break
    }

    #[test]
    fn share_scale_invariance() {
        let a = ModalityAttribution::from_contributions(
            &["ts".to_string(), "cn".to_string()],
            vec![0.4, -0.2],
        );
        let b = ModalityAttribution::from_contributions(
            &["ts".to_string(), "cn".to_string()],
            vec![0.4 * 8.0, -0.2 * 8.0],
        );
        assert_eq!(a.shares, b.shares);
    }

    #[test]
    fn agreement_examples() {
        assert_eq!(
            agreement_label(&[0.2, 0.1]).unwrap(),
            AgreementLabel::AgreeLow
        );
        assert_eq!(
            agreement_label(&[0.8, 0.9]).unwrap(),
            AgreementLabel::AgreeHigh
        );
        assert_eq!(
            agreement_label(&[0.7, 0.3]).unwrap(),
            AgreementLabel::Conflict
        );
        // boundary p = 0.5 counts as low
        assert_eq!(
            agreement_label(&[0.5, 0.5]).unwrap(),
            AgreementLabel::AgreeLow
        );
        assert!(agreement_label(&[0.5]).is_err());
    }

    #[test]
    fn explanation_is_self_consistent() {
        let model = manual_model(vec![1.0, 1.0], 0.0);
        let r = record(&[("ts", 0.5), ("cn", 0.5)]);
        let explanation = model.explain(&r, 0.5).unwrap();
        assert_eq!(explanation.ensemble_probability, 0.5);
        // intercept + two product terms
        assert_eq!(explanation.terms.len(), 2);
        assert_eq!(explanation.equation.matches('+').count(), 2);
        let total: f64 = explanation.intercept
            + explanation
                .terms
                .iter()
                .map(|t| t.contribution)
                .sum::<f64>();
        assert!((total - explanation.ensemble_logit).abs() < 1e-9);
        assert_eq!(
            explanation.agreement,
            agreement_label(&[0.5, 0.5]).unwrap()
        );
    }

    #[test]
    fn percent_rounding_is_half_up() {
        assert_eq!(format_percent_1dp(0.795), "79.5");
        assert_eq!(format_percent_1dp(0.6665), "66.7");
        assert_eq!(format_percent_1dp(0.12345), "12.3");
        assert_eq!(format_percent_1dp(1.0), "100.0");
    }

    #[test]
    fn model_persistence_round_trips() {
        let records: Vec<PredictionRecord> = (0..40)
            .map(|i| {
                let mut probs = BTreeMap::new();
                probs.insert("ts".to_string(), logistic(i as f64 / 10.0 - 2.0));
                probs.insert("cn".to_string(), logistic(2.0 - i as f64 / 10.0));
                PredictionRecord {
                    episode_id: format!("v{i}"),
                    split: Split::Validation,
                    label: u8::from(i % 3 == 0),
                    probs,
                }
            })
            .collect();
        let model = StackingModel::fit(
            &records,
            &["ts".to_string(), "cn".to_string()],
            &MetaFitOptions {
                l2: 0.05,
                ..Default::default()
            },
        )
        .unwrap();
        let fusion = FusionModel::Logreg(model);
        let text = fusion.to_json_string().unwrap();
        let reloaded = FusionModel::from_json_str(&text).unwrap();
        assert_eq!(fusion, reloaded);
        assert!(text.contains("\"format_version\": 1"));

        let avg = FusionModel::Avg {
            specialists: vec!["ts".to_string(), "cn".to_string()],
        };
        let reloaded = FusionModel::from_json_str(&avg.to_json_string().unwrap()).unwrap();
        assert_eq!(avg, reloaded);
    }
}
