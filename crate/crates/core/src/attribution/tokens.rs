//! Token-level attribution post-processing for note text.
//!
//! The raw per-token saliencies of a tokenized document are turned into two
//! short ranked term lists through a fixed pipeline:
//!
//! 1. merge subword pieces into surface words (summing saliency);
//! 2. collapse duplicate words, retaining the peak-|saliency| occurrence;
//! 3. merge negator tokens with the immediately following term into a bigram
//!    carrying the pair's summed saliency ("no insulin", "denies pain");
//! 4. drop stopwords unless whitelisted (clinical abbreviations survive);
//! 5. per sign, keep terms at ≥ `sign_frac` of that sign's peak magnitude;
//! 6. extract a sentence-bounded context snippet for the single strongest
//!    term of each sign, capped at `snippet_cap` characters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One token with its byte span into the source text (spans lie on char
/// boundaries; for plain ASCII notes these are also character offsets).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub saliency: f64,
}

/// Ordered tokens with signed saliency; spans must be non-overlapping and
/// ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenAttribution {
    pub tokens: Vec<Token>,
}

impl TokenAttribution {
    pub fn validate(&self, source_text: &str) -> Result<()> {
        let len = source_text.len();
        let mut previous_end = 0;
        for token in &self.tokens {
            let bad_span = || Error::InvalidSpan {
                start: token.start,
                end: token.end,
                len,
            };
            if token.start >= token.end || token.end > len {
                return Err(bad_span());
            }
            if !source_text.is_char_boundary(token.start)
                || !source_text.is_char_boundary(token.end)
            {
                return Err(bad_span());
            }
            if token.start < previous_end {
                return Err(bad_span());
            }
            previous_end = token.end;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenReportOptions {
    /// Tokens starting with this marker continue the previous word.
    pub subword_marker: String,
    pub negators: Vec<String>,
    pub stopwords: Vec<String>,
    /// Stopwords to keep anyway (clinical abbreviations).
    pub whitelist: Vec<String>,
    /// Keep terms with |saliency| ≥ sign_frac × that sign's max |saliency|.
    pub sign_frac: f64,
    /// Maximum snippet length in characters, ellipsis included.
    pub snippet_cap: usize,
}

impl Default for TokenReportOptions {
    fn default() -> Self {
        Self {
            subword_marker: "##".to_string(),
            negators: ["no", "not", "denies", "without", "non"]
                .map(str::to_string)
                .to_vec(),
            stopwords: [
                "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "from", "had",
                "has", "have", "he", "her", "his", "in", "is", "it", "its", "of", "on", "or",
                "she", "that", "the", "their", "there", "they", "this", "to", "was", "were",
                "will", "with",
            ]
            .map(str::to_string)
            .to_vec(),
            whitelist: ["nsr", "hr", "bp"].map(str::to_string).to_vec(),
            sign_frac: 0.20,
            snippet_cap: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermAttribution {
    pub term: String,
    pub saliency: f64,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenReport {
    /// Positive-saliency terms, strongest first.
    pub risk_increasing: Vec<TermAttribution>,
    /// Negative-saliency terms, strongest (most negative) first.
    pub risk_reducing: Vec<TermAttribution>,
    pub top_positive_snippet: Option<String>,
    pub top_negative_snippet: Option<String>,
}

impl TokenReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let section = |out: &mut String, title: &str, terms: &[TermAttribution]| {
            out.push_str(title);
            out.push('\n');
            if terms.is_empty() {
                out.push_str("  (none)\n");
            }
            for (rank, term) in terms.iter().enumerate() {
                out.push_str(&format!(
                    "  {:<3} {:<28} {:+.4}\n",
                    rank + 1,
                    term.term,
                    term.saliency
                ));
            }
        };
        section(&mut out, "risk-increasing terms:", &self.risk_increasing);
        section(&mut out, "risk-reducing terms:", &self.risk_reducing);
        if let Some(snippet) = &self.top_positive_snippet {
            out.push_str(&format!("context (strongest positive): \"{snippet}\"\n"));
        }
        if let Some(snippet) = &self.top_negative_snippet {
            out.push_str(&format!("context (strongest negative): \"{snippet}\"\n"));
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Term {
    surface: String,
    start: usize,
    end: usize,
    saliency: f64,
}

/// Run the full post-processing pipeline over one tokenized document.
pub fn token_report(
    attribution: &TokenAttribution,
    source_text: &str,
    opts: &TokenReportOptions,
) -> Result<TokenReport> {
    attribution.validate(source_text)?;

    // (1) subword merge
    let mut terms: Vec<Term> = Vec::new();
    for token in &attribution.tokens {
        let continues = !opts.subword_marker.is_empty()
            && token.text.starts_with(&opts.subword_marker)
            && !terms.is_empty();
        if continues {
            let previous = terms.last_mut().expect("nonempty");
            previous.end = token.end;
            previous.saliency += token.saliency;
            previous.surface = source_text[previous.start..previous.end].to_string();
        } else {
            terms.push(Term {
                surface: source_text[token.start..token.end].to_string(),
                start: token.start,
                end: token.end,
                saliency: token.saliency,
            });
        }
    }

    // (2) duplicate collapse, retaining the peak-|saliency| occurrence
    let mut collapsed: Vec<Term> = Vec::new();
    for term in terms {
        let key = term.surface.to_lowercase();
        match collapsed
            .iter_mut()
            .find(|t| t.surface.to_lowercase() == key)
        {
            Some(existing) => {
                if term.saliency.abs() > existing.saliency.abs() {
                    *existing = term;
                }
            }
            None => collapsed.push(term),
        }
    }
    collapsed.sort_by_key(|t| t.start);

    // (3) negation-aware bigrams
    let is_negator = |t: &Term| opts.negators.iter().any(|n| n == &t.surface.to_lowercase());
    let mut bigrams: Vec<Term> = Vec::with_capacity(collapsed.len());
    let mut iter = collapsed.into_iter().peekable();
    while let Some(term) = iter.next() {
        if is_negator(&term) {
            if let Some(next) = iter.peek() {
                if !is_negator(next) {
                    let next = iter.next().expect("peeked");
                    bigrams.push(Term {
                        surface: format!("{} {}", term.surface, next.surface),
                        start: term.start,
                        end: next.end,
                        saliency: term.saliency + next.saliency,
                    });
                    continue;
                }
            }
        }
        bigrams.push(term);
    }

    // (4) stopword pruning with whitelist
    let lowered_stop: Vec<String> = opts.stopwords.iter().map(|s| s.to_lowercase()).collect();
    let lowered_keep: Vec<String> = opts.whitelist.iter().map(|s| s.to_lowercase()).collect();
    let kept: Vec<Term> = bigrams
        .into_iter()
        .filter(|t| {
            let key = t.surface.to_lowercase();
            !lowered_stop.contains(&key) || lowered_keep.contains(&key)
        })
        .collect();

    // (5) sign-separated magnitude thresholds
    let max_of = |sign_positive: bool| {
        kept.iter()
            .filter(|t| (t.saliency > 0.0) == sign_positive && t.saliency != 0.0)
            .map(|t| t.saliency.abs())
            .fold(0.0f64, f64::max)
    };
    let positive_max = max_of(true);
    let negative_max = max_of(false);
    let mut risk_increasing: Vec<TermAttribution> = kept
        .iter()
        .filter(|t| t.saliency > 0.0 && t.saliency.abs() >= opts.sign_frac * positive_max)
        .map(to_term_attribution)
        .collect();
    let mut risk_reducing: Vec<TermAttribution> = kept
        .iter()
        .filter(|t| t.saliency < 0.0 && t.saliency.abs() >= opts.sign_frac * negative_max)
        .map(to_term_attribution)
        .collect();
    risk_increasing.sort_by(|a, b| b.saliency.total_cmp(&a.saliency).then(a.start.cmp(&b.start)));
    risk_reducing.sort_by(|a, b| a.saliency.total_cmp(&b.saliency).then(a.start.cmp(&b.start)));

    // (6) context snippets for the strongest term of each sign
    let top_positive_snippet = risk_increasing
        .first()
        .map(|t| snippet(source_text, t.start, t.end, opts.snippet_cap));
    let top_negative_snippet = risk_reducing
        .first()
        .map(|t| snippet(source_text, t.start, t.end, opts.snippet_cap));

    Ok(TokenReport {
        risk_increasing,
        risk_reducing,
        top_positive_snippet,
        top_negative_snippet,
    })
}

fn to_term_attribution(term: &Term) -> TermAttribution {
    TermAttribution {
        term: term.surface.clone(),
        saliency: term.saliency,
        start: term.start,
        end: term.end,
    }
}

const SENTENCE_BOUNDS: [char; 4] = ['.', '!', '?', '\n'];

/// Sentence-bounded context around a term span, truncated to `cap` characters
/// (ellipsis included) around the term.
fn snippet(source: &str, start: usize, end: usize, cap: usize) -> String {
    let sentence_start = source[..start]
        .rfind(SENTENCE_BOUNDS)
        .map(|i| i + source[i..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(0);
    let sentence_end = source[end..]
        .find(SENTENCE_BOUNDS)
        .map(|i| {
            let bound = end + i;
            bound + source[bound..].chars().next().map_or(1, char::len_utf8)
        })
        .unwrap_or(source.len());
    let sentence = source[sentence_start..sentence_end].trim();
    if cap == 0 {
        return String::new();
    }

    let chars: Vec<(usize, char)> = sentence.char_indices().collect();
    if chars.len() <= cap {
        return sentence.to_string();
    }

    // Center a window of cap − 2 characters on the term, reserving room for
    // the ellipses on the cut sides.
    let window = cap.saturating_sub(2).max(1);
    let offset = sentence_start + (sentence.len() - sentence.trim_start().len());
    let term_mid = (start + end) / 2;
    let term_char = chars
        .iter()
        .position(|(byte, _)| offset + byte >= term_mid)
        .unwrap_or(chars.len() / 2);
    let from = term_char
        .saturating_sub(window / 2)
        .min(chars.len() - window);
    let to = from + window;
    let byte_from = chars[from].0;
    let byte_to = if to < chars.len() {
        chars[to].0
    } else {
        sentence.len()
    };
    let mut out = String::new();
    if from > 0 {
        out.push('…');
    }
    out.push_str(&sentence[byte_from..byte_to]);
    if to < chars.len() {
        out.push('…');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tokenize(source: &str, words: &[(&str, f64)]) -> TokenAttribution {
        let mut tokens = Vec::new();
        let mut cursor = 0;
        for (word, saliency) in words {
            let clean = word.trim_start_matches("##");
            let start = source[cursor..]
                .find(clean)
                .map(|i| cursor + i)
                .unwrap_or_else(|| panic!("`{clean}` not found after {cursor}"));
            tokens.push(Token {
                text: word.to_string(),
                start,
                end: start + clean.len(),
                saliency: *saliency,
            });
            cursor = start + clean.len();
        }
        TokenAttribution { tokens }
    }

    #[test]
    fn negator_merges_with_following_word() {
        let source = "no insulin today";
        let ta = tokenize(source, &[("no", 0.1), ("insulin", 0.4), ("today", 0.0)]);
        let report = token_report(&ta, source, &TokenReportOptions::default()).unwrap();
        assert_eq!(report.risk_increasing.len(), 1);
        assert_eq!(report.risk_increasing[0].term, "no insulin");
        assert!((report.risk_increasing[0].saliency - 0.5).abs() < 1e-15);
    }

    #[test]
    fn duplicates_keep_the_peak_attribution() {
        let source = "insulin given then insulin held";
        let ta = tokenize(
            source,
            &[
                ("insulin", 0.1),
                ("given", 0.0),
                ("then", 0.0),
                ("insulin", 0.7),
                ("held", 0.0),
            ],
        );
        let report = token_report(&ta, source, &TokenReportOptions::default()).unwrap();
        let insulin: Vec<_> = report
            .risk_increasing
            .iter()
            .filter(|t| t.term == "insulin")
            .collect();
        assert_eq!(insulin.len(), 1);
        assert_eq!(insulin[0].saliency, 0.7);
        // span points at the peak occurrence
        assert_eq!(&source[insulin[0].start..insulin[0].end], "insulin");
        assert!(insulin[0].start > 10);
    }

    #[test]
    fn subword_pieces_merge_into_surface_words() {
        let source = "opacification seen";
        let ta = TokenAttribution {
            tokens: vec![
                Token {
                    text: "opac".into(),
                    start: 0,
                    end: 4,
                    saliency: 0.3,
                },
                Token {
                    text: "##ification".into(),
                    start: 4,
                    end: 13,
                    saliency: 0.2,
                },
                Token {
                    text: "seen".into(),
                    start: 14,
                    end: 18,
                    saliency: 0.0,
                },
            ],
        };
        let report = token_report(&ta, source, &TokenReportOptions::default()).unwrap();
        assert_eq!(report.risk_increasing[0].term, "opacification");
        assert!((report.risk_increasing[0].saliency - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sign_thresholds_keep_only_strong_terms() {
        let source = "alpha beta gamma delta";
        let ta = tokenize(
            source,
            &[
                ("alpha", 1.0),
                ("beta", 0.15),
                ("gamma", -0.5),
                ("delta", -0.05),
            ],
        );
        let report = token_report(&ta, source, &TokenReportOptions::default()).unwrap();
        assert_eq!(report.risk_increasing.len(), 1);
        assert_eq!(report.risk_increasing[0].term, "alpha");
        assert_eq!(report.risk_reducing.len(), 1);
        assert_eq!(report.risk_reducing[0].term, "gamma");
    }

    #[test]
    fn stopwords_drop_but_whitelist_survives() {
        let source = "the nsr with hr stable";
        let ta = tokenize(
            source,
            &[
                ("the", 0.9),
                ("nsr", -0.8),
                ("with", 0.5),
                ("hr", -0.3),
                ("stable", -0.1),
            ],
        );
        let opts = TokenReportOptions {
            negators: vec![],
            ..Default::default()
        };
        let report = token_report(&ta, source, &opts).unwrap();
        assert!(report.risk_increasing.is_empty(), "{report:?}");
        let terms: Vec<&str> = report.risk_reducing.iter().map(|t| t.term.as_str()).collect();
        assert!(terms.contains(&"nsr"));
        assert!(terms.contains(&"hr"));
    }

    #[test]
    fn snippet_is_sentence_bounded_and_capped() {
        let source = "Stable overnight. Patient denies pain at rest. Plan unchanged.";
        let ta = tokenize(source, &[("denies", 0.2), ("pain", 0.6)]);
        let report = token_report(&ta, source, &TokenReportOptions::default()).unwrap();
        let snippet = report.top_positive_snippet.unwrap();
        assert_eq!(snippet, "Patient denies pain at rest.");

        let long_source = format!(
            "{} pain {}",
            "left arm status quo ".repeat(20),
            "monitor closely ".repeat(20)
        );
        let ta = tokenize(&long_source, &[("pain", 0.9)]);
        let opts = TokenReportOptions {
            snippet_cap: 50,
            ..Default::default()
        };
        let report = token_report(&ta, &long_source, &opts).unwrap();
        let snippet = report.top_negative_snippet.is_none();
        assert!(snippet);
        let snippet = report.top_positive_snippet.unwrap();
        assert!(snippet.chars().count() <= 50, "{}", snippet.chars().count());
        assert!(snippet.contains("pain"));
        assert!(snippet.starts_with('…') && snippet.ends_with('…'));
    }

    #[test]
    fn invalid_spans_are_rejected() {
        let source = "abc";
        let ta = TokenAttribution {
            tokens: vec![Token {
                text: "abcd".into(),
                start: 0,
                end: 4,
                saliency: 0.0,
            }],
        };
        assert!(matches!(
            token_report(&ta, source, &TokenReportOptions::default()),
            Err(Error::InvalidSpan { .. })
        ));

        let overlapping = TokenAttribution {
            tokens: vec![
                Token {
                    text: "ab".into(),
                    start: 0,
                    end: 2,
                    saliency: 0.0,
                },
                Token {
                    text: "bc".into(),
                    start: 1,
                    end: 3,
                    saliency: 0.0,
                },
            ],
        };
        assert!(matches!(
            token_report(&overlapping, source, &TokenReportOptions::default()),
            Err(Error::InvalidSpan { .. })
        ));
    }
}
