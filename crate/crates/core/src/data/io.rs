//! Prediction-file ingestion and serialization.
//!
//! Two on-disk formats carry the same schema:
//!
//! - **JSON lines**: one object per line with keys `episode_id` (string),
//!   `split` (`train`/`validation`/`test`), `label` (0/1 integer), and one
//!   numeric key per specialist (`p_ts`, `p_cn`, …). A missing specialist is
//!   an absent key (explicit `null` is also accepted as missing).
//! - **CSV**: same columns with a required header; an empty cell means the
//!   specialist made no prediction for that episode.
//!
//! Specialist column names may carry a `p_` prefix, which is stripped on load
//! and re-added on save, so `p_ts` ↔ specialist `ts`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde_json::Value;

use super::{PredictionRecord, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    JsonLines,
    Csv,
}

impl FileFormat {
    /// Guess from the file extension; `.csv` → CSV, anything else → JSON lines.
    pub fn from_path(path: &Path) -> FileFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => FileFormat::Csv,
            _ => FileFormat::JsonLines,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedPredictions {
    pub records: Vec<PredictionRecord>,
    pub warnings: Vec<String>,
}

const REQUIRED_FIELDS: [&str; 3] = ["episode_id", "split", "label"];

fn specialist_name(column: &str) -> &str {
    column.strip_prefix("p_").unwrap_or(column)
}

fn column_name(specialist: &str) -> String {
    format!("p_{specialist}")
}

fn row_err(row: usize, message: impl Into<String>) -> Error {
    Error::InvalidRow {
        row,
        message: message.into(),
    }
}

fn check_probability(row: usize, name: &str, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(row_err(
            row,
            format!("probability for `{name}` outside [0,1]: {p}"),
        ));
    }
    Ok(p)
}

fn check_duplicates(
    seen: &mut HashSet<(Split, String)>,
    row: usize,
    record: &PredictionRecord,
) -> Result<()> {
    if !seen.insert((record.split, record.episode_id.clone())) {
        return Err(Error::DuplicateEpisode {
            row,
            episode_id: record.episode_id.clone(),
            split: record.split,
        });
    }
    Ok(())
}

pub fn load_predictions(path: &Path, format: FileFormat) -> Result<LoadedPredictions> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let records = match format {
        FileFormat::JsonLines => parse_jsonl(&text)?,
        FileFormat::Csv => parse_csv(&text)?,
    };
    let mut warnings = Vec::new();
    if records.is_empty() {
        warnings.push(format!("no records parsed from {}", path.display()));
    }
    Ok(LoadedPredictions { records, warnings })
}

fn parse_jsonl(text: &str) -> Result<Vec<PredictionRecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let map: serde_json::Map<String, Value> = serde_json::from_str(line)
            .map_err(|e| row_err(row, format!("unparseable json: {e}")))?;

        let episode_id = match map.get("episode_id") {
            Some(Value::String(s)) => s.clone(),
            Some(_) => return Err(row_err(row, "episode_id must be a string")),
            None => return Err(row_err(row, "missing required field `episode_id`")),
        };
        let split = match map.get("split") {
            Some(Value::String(s)) => s
                .parse::<Split>()
                .map_err(|e| row_err(row, e.to_string()))?,
            Some(_) => return Err(row_err(row, "split must be a string")),
            None => return Err(row_err(row, "missing required field `split`")),
        };
        let label = match map.get("label") {
            Some(Value::Number(n)) => match n.as_u64() {
                Some(0) => 0u8,
                Some(1) => 1u8,
                _ => return Err(row_err(row, format!("label must be 0 or 1, got {n}"))),
            },
            Some(_) => return Err(row_err(row, "label must be a 0/1 integer")),
            None => return Err(row_err(row, "missing required field `label`")),
        };

        let mut probs = BTreeMap::new();
        for (key, value) in &map {
            if REQUIRED_FIELDS.contains(&key.as_str()) {
                continue;
            }
            let name = specialist_name(key);
            let p = match value {
                Value::Number(n) => n
                    .as_f64()
                    .ok_or_else(|| row_err(row, format!("`{key}` is not a finite number")))?,
                Value::Null => continue,
                _ => return Err(row_err(row, format!("`{key}` must be numeric"))),
            };
            let p = check_probability(row, name, p)?;
            if probs.insert(name.to_string(), p).is_some() {
                return Err(row_err(row, format!("duplicate specialist `{name}`")));
            }
        }

        let record = PredictionRecord {
            episode_id,
            split,
            label,
            probs,
        };
        check_duplicates(&mut seen, row, &record)?;
        records.push(record);
    }
    Ok(records)
}

fn parse_csv(text: &str) -> Result<Vec<PredictionRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    for required in REQUIRED_FIELDS {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::InvalidInput(format!(
                "missing required column `{required}`"
            )));
        }
    }
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, result) in reader.records().enumerate() {
        let row = idx + 1;
        let raw = result.map_err(|e| row_err(row, format!("unparseable row: {e}")))?;
        let field = |name: &str| -> &str {
            headers
                .iter()
                .position(|h| h == name)
                .map(|i| raw.get(i).unwrap_or(""))
                .unwrap_or("")
        };
        let episode_id = field("episode_id").to_string();
        if episode_id.is_empty() {
            return Err(row_err(row, "empty episode_id"));
        }
        let split = field("split")
            .parse::<Split>()
            .map_err(|e| row_err(row, e.to_string()))?;
        let label = match field("label") {
            "0" => 0u8,
            "1" => 1u8,
            other => return Err(row_err(row, format!("label must be 0 or 1, got `{other}`"))),
        };

        let mut probs = BTreeMap::new();
        for (column, cell) in headers.iter().zip(raw.iter()) {
            if REQUIRED_FIELDS.contains(&column.as_str()) {
                continue;
            }
            let cell = cell.trim();
            if cell.is_empty() {
                continue;
            }
            let name = specialist_name(column);
            let p: f64 = cell
                .parse()
                .map_err(|_| row_err(row, format!("`{column}` is not a number: `{cell}`")))?;
            let p = check_probability(row, name, p)?;
            if probs.insert(name.to_string(), p).is_some() {
                return Err(row_err(row, format!("duplicate specialist `{name}`")));
            }
        }

        let record = PredictionRecord {
            episode_id,
            split,
            label,
            probs,
        };
        check_duplicates(&mut seen, row, &record)?;
        records.push(record);
    }
    Ok(records)
}

pub fn save_predictions(
    path: &Path,
    records: &[PredictionRecord],
    format: FileFormat,
) -> Result<()> {
    let text = match format {
        FileFormat::JsonLines => render_jsonl(records)?,
        FileFormat::Csv => render_csv(records)?,
    };
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn render_jsonl(records: &[PredictionRecord]) -> Result<String> {
    let mut out = String::new();
    for record in records {
        let mut map = serde_json::Map::new();
        map.insert("episode_id".into(), Value::String(record.episode_id.clone()));
        map.insert("split".into(), Value::String(record.split.to_string()));
        map.insert("label".into(), Value::Number(record.label.into()));
        for (name, p) in &record.probs {
            let number = serde_json::Number::from_f64(*p)
                .ok_or(Error::NonFinite("probability"))?;
            map.insert(column_name(name), Value::Number(number));
        }
        out.push_str(&serde_json::to_string(&Value::Object(map))?);
        out.push('\n');
    }
    Ok(out)
}

fn render_csv(records: &[PredictionRecord]) -> Result<String> {
    let specialists: BTreeSet<&str> = records
        .iter()
        .flat_map(|r| r.probs.keys().map(String::as_str))
        .collect();
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "episode_id".to_string(),
        "split".to_string(),
        "label".to_string(),
    ];
    header.extend(specialists.iter().map(|s| column_name(s)));
    writer.write_record(&header)?;
    for record in records {
        let mut row = vec![
            record.episode_id.clone(),
            record.split.to_string(),
            record.label.to_string(),
        ];
        for name in &specialists {
            row.push(match record.prob(name) {
                Some(p) => format_probability(p),
                None => String::new(),
            });
        }
        writer.write_record(&row)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Shortest decimal representation that parses back to the same f64.
fn format_probability(p: f64) -> String {
    let mut buffer = ryu_format(p);
    if buffer.ends_with(".0") {
        buffer.truncate(buffer.len() - 2);
    }
    buffer
}

fn ryu_format(p: f64) -> String {
    // serde_json already ships ryu; reuse it for exact round-trips.
    serde_json::to_string(&p).expect("finite f64 serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn write_temp(name: &str, contents: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempdir().unwrap();
        let path = dir.path().join(name);
        fs::write(&path, contents).unwrap();
        (dir, path)
    }

    #[test]
    fn jsonl_row_maps_to_record() {
        let (_d, path) = write_temp(
            "p.jsonl",
            r#"{"episode_id":"e1","split":"test","label":1,"p_ts":0.7,"p_cn":0.9}"#,
        );
        let loaded = load_predictions(&path, FileFormat::JsonLines).unwrap();
        assert_eq!(loaded.records.len(), 1);
        let r = &loaded.records[0];
        assert_eq!(r.episode_id, "e1");
        assert_eq!(r.split, Split::Test);
        assert_eq!(r.label, 1);
        assert_eq!(r.prob("ts"), Some(0.7));
        assert_eq!(r.prob("cn"), Some(0.9));
    }

    #[test]
    fn out_of_range_probability_is_rejected_with_row() {
        let (_d, path) = write_temp(
            "p.jsonl",
            "{\"episode_id\":\"a\",\"split\":\"test\",\"label\":0,\"p_ts\":0.5}\n\
             {\"episode_id\":\"b\",\"split\":\"test\",\"label\":0,\"p_ts\":1.2}\n",
        );
        let err = load_predictions(&path, FileFormat::JsonLines).unwrap_err();
        match err {
            Error::InvalidRow { row, message } => {
                assert_eq!(row, 2);
                assert!(message.contains("outside [0,1]"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_file_warns_and_returns_empty() {
        let (_d, path) = write_temp("p.jsonl", "");
        let loaded = load_predictions(&path, FileFormat::JsonLines).unwrap();
        assert!(loaded.records.is_empty());
        assert_eq!(loaded.warnings.len(), 1);
    }

    #[test]
    fn duplicate_episode_within_split_is_rejected() {
        let (_d, path) = write_temp(
            "p.csv",
            "episode_id,split,label,p_ts\na,test,0,0.5\na,test,1,0.6\n",
        );
        let err = load_predictions(&path, FileFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::DuplicateEpisode { row: 2, .. }));
    }

    #[test]
    fn same_id_in_different_splits_is_fine() {
        let (_d, path) = write_temp(
            "p.csv",
            "episode_id,split,label,p_ts\na,test,0,0.5\na,train,1,0.6\n",
        );
        assert_eq!(
            load_predictions(&path, FileFormat::Csv).unwrap().records.len(),
            2
        );
    }

    #[test]
    fn csv_empty_cell_means_missing_not_zero() {
        let (_d, path) = write_temp(
            "p.csv",
            "episode_id,split,label,p_ts,p_cn\na,test,0,0.5,\nb,test,1,0,0.9\n",
        );
        let records = load_predictions(&path, FileFormat::Csv).unwrap().records;
        assert_eq!(records[0].prob("cn"), None);
        assert_eq!(records[1].prob("ts"), Some(0.0));
    }

    #[test]
    fn missing_required_column_is_reported() {
        let (_d, path) = write_temp("p.csv", "episode_id,label,p_ts\na,0,0.5\n");
        let err = load_predictions(&path, FileFormat::Csv).unwrap_err();
        assert!(err.to_string().contains("split"), "{err}");
    }

    #[test]
    fn round_trip_both_formats() {
        let records = vec![
            PredictionRecord::new(
                "e1",
                Split::Train,
                0,
                [("ts".to_string(), 0.123456789012345), ("cn".to_string(), 0.0)],
            ),
            PredictionRecord::new("e2", Split::Test, 1, [("ts".to_string(), 1.0)]),
        ];
        for format in [FileFormat::JsonLines, FileFormat::Csv] {
            let dir = tempdir().unwrap();
            let path = dir.path().join("preds");
            save_predictions(&path, &records, format).unwrap();
            let loaded = load_predictions(&path, format).unwrap();
            assert_eq!(loaded.records, records);
        }
    }
}
