//! Dataset manifests, the prediction interchange format, scoring, and report
//! persistence.
//!
//! Prediction files are JSON lines, one [`PredictionRecord`] per line:
//!
//! ```text
//! {"model_id":"mlp-32","view":"train_contre","sample_id":"s001","view_index":1,
//!  "label":2,"pred":2,"logits":[-1.2,0.3,2.9],"feature":"AACAPwAAAMAAAAA/","feature_dim":3}
//! ```
//!
//! `feature` is base64 (standard alphabet, padded) of little-endian `f32`
//! values. `logits`, `feature` and `feature_dim` are optional.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::CorrelationReport;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },
    #[error("{path}:{line}: feature_dim is {expected} but {actual} values are encoded")]
    DimensionMismatch {
        path: PathBuf,
        line: usize,
        expected: usize,
        actual: usize,
    },
    #[error("duplicate record for model `{model_id}`, view {view}, sample `{sample_id}`, view index {view_index}")]
    DuplicateRecord {
        model_id: String,
        view: View,
        sample_id: String,
        view_index: u32,
    },
    #[error("manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("cannot serialize: {0}")]
    Serialize(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Which realization of which split a prediction was made on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    TrainOrig,
    TrainContre,
    TestOrig,
    TestContre,
}

impl View {
    pub const ALL: [View; 4] = [View::TrainOrig, View::TrainContre, View::TestOrig, View::TestContre];

    pub fn as_str(self) -> &'static str {
        match self {
            View::TrainOrig => "train_orig",
            View::TrainContre => "train_contre",
            View::TestOrig => "test_orig",
            View::TestContre => "test_contre",
        }
    }
}

impl std::fmt::Display for View {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for View {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        View::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown view `{s}`"))
    }
}

/// One model's output for one sample view.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub model_id: String,
    pub view: View,
    pub sample_id: String,
    pub view_index: u32,
    pub label: u32,
    pub pred: u32,
    pub logits: Option<Vec<f64>>,
    /// Penultimate-layer activations.
    pub feature: Option<Vec<f32>>,
}

impl PredictionRecord {
    pub fn feature_dim(&self) -> Option<usize> {
        self.feature.as_ref().map(Vec::len)
    }

    pub fn is_correct(&self) -> bool {
        self.pred == self.label
    }
}

#[derive(Serialize, Deserialize)]
struct WireRecord {
    model_id: String,
    view: View,
    sample_id: String,
    view_index: u32,
    label: u32,
    pred: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    logits: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature_dim: Option<usize>,
}

pub fn encode_feature(values: &[f32]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    BASE64.encode(bytes)
}

pub fn decode_feature(encoded: &str) -> Result<Vec<f32>, String> {
    let bytes = BASE64.decode(encoded).map_err(|e| format!("feature is not valid base64: {e}"))?;
    if bytes.len() % 4 != 0 {
        return Err(format!("feature holds {} bytes, not a multiple of 4", bytes.len()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

fn parse_line(text: &str, path: &Path, line: usize) -> Result<PredictionRecord, DataError> {
    let parse = |reason: String| DataError::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let wire: WireRecord = serde_json::from_str(text).map_err(|e| parse(e.to_string()))?;
    let feature = wire.feature.as_deref().map(decode_feature).transpose().map_err(parse)?;
    match (&feature, wire.feature_dim) {
        (Some(values), Some(expected)) if values.len() != expected => {
            return Err(DataError::DimensionMismatch {
                path: path.to_path_buf(),
                line,
                expected,
                actual: values.len(),
            })
        }
        (None, Some(_)) => return Err(parse("feature_dim given without feature".into())),
        (Some(values), _) if values.iter().any(|v| !v.is_finite()) => {
            return Err(parse("feature contains non-finite values".into()))
        }
        _ => {}
    }
    if let Some(logits) = &wire.logits {
        let classes = logits.len() as u32;
        if wire.label >= classes || wire.pred >= classes {
            return Err(parse(format!(
                "label {} / pred {} outside [0, {classes}) implied by logits",
                wire.label, wire.pred
            )));
        }
    }
    Ok(PredictionRecord {
        model_id: wire.model_id,
        view: wire.view,
        sample_id: wire.sample_id,
        view_index: wire.view_index,
        label: wire.label,
        pred: wire.pred,
        logits: wire.logits,
        feature,
    })
}

/// Streaming reader over a prediction file. Yields records in file order;
/// blank lines are skipped.
pub struct PredictionReader {
    path: PathBuf,
    lines: std::io::Lines<BufReader<File>>,
    line: usize,
}

impl Iterator for PredictionReader {
    type Item = Result<PredictionRecord, DataError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = match self.lines.next()? {
                Ok(text) => text,
                Err(source) => {
                    return Some(Err(DataError::Io {
                        path: self.path.clone(),
                        source,
                    }))
                }
            };
            self.line += 1;
            if text.trim().is_empty() {
                continue;
            }
            return Some(parse_line(&text, &self.path, self.line));
        }
    }
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<PredictionReader, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    Ok(PredictionReader {
        path: path.to_path_buf(),
        lines: BufReader::new(file).lines(),
        line: 0,
    })
}

/// Reads a whole prediction file, stopping at the first invalid line.
pub fn read_all_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>, DataError> {
    read_predictions(path)?.collect()
}

pub fn prediction_line(record: &PredictionRecord) -> String {
    let wire = WireRecord {
        model_id: record.model_id.clone(),
        view: record.view,
        sample_id: record.sample_id.clone(),
        view_index: record.view_index,
        label: record.label,
        pred: record.pred,
        logits: record.logits.clone(),
        feature: record.feature.as_deref().map(encode_feature),
        feature_dim: record.feature_dim(),
    };
    serde_json::to_string(&wire).expect("prediction records always serialize")
}

pub fn write_predictions<'a>(
    records: impl IntoIterator<Item = &'a PredictionRecord>,
    path: impl AsRef<Path>,
) -> Result<(), DataError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for record in records {
        writeln!(out, "{}", prediction_line(record)).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Top-1 accuracy of one model on one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub model_id: String,
    pub accuracy: f64,
    pub correct: u64,
    pub sample_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub view: View,
    pub rows: Vec<ScoreRow>,
}

impl ScoreTable {
    pub fn accuracy_of(&self, model_id: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.model_id == model_id).map(|r| r.accuracy)
    }
}

/// Groups records by `(view, model_id)` and computes accuracies.
///
/// Tables come back ordered by view, rows by model id, so the result does not
/// depend on record order.
pub fn score<'a>(records: impl IntoIterator<Item = &'a PredictionRecord>) -> Result<Vec<ScoreTable>, DataError> {
    let mut seen: HashSet<(&str, View, &str, u32)> = HashSet::new();
    let mut counts: BTreeMap<View, BTreeMap<&str, (u64, u64)>> = BTreeMap::new();
    for r in records {
        if !seen.insert((&r.model_id, r.view, &r.sample_id, r.view_index)) {
            return Err(DataError::DuplicateRecord {
                model_id: r.model_id.clone(),
                view: r.view,
                sample_id: r.sample_id.clone(),
                view_index: r.view_index,
            });
        }
        let entry = counts.entry(r.view).or_default().entry(&r.model_id).or_default();
        entry.0 += r.is_correct() as u64;
        entry.1 += 1;
    }
    Ok(counts
        .into_iter()
        .map(|(view, models)| ScoreTable {
            view,
            rows: models
                .into_iter()
                .map(|(model_id, (correct, total))| ScoreRow {
                    model_id: model_id.to_string(),
                    accuracy: correct as f64 / total as f64,
                    correct,
                    sample_count: total,
                })
                .collect(),
        })
        .collect())
}

/// Input manifest row: `sample_id,path,label`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub sample_id: String,
    pub path: PathBuf,
    pub label: u32,
}

/// Output manifest row: `sample_id,view_index,path,label,ops,seed`, where
/// `ops` is a `;`-joined list of `name:sign`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRow {
    pub sample_id: String,
    pub view_index: u32,
    pub path: PathBuf,
    pub label: u32,
    pub ops: String,
    pub seed: u64,
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path, header: &[&str]) -> Result<Vec<T>, DataError> {
    let manifest = |reason: String| DataError::Manifest {
        path: path.to_path_buf(),
        reason,
    };
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::Reader::from_reader(file);
    let found = reader.headers().map_err(|e| manifest(e.to_string()))?.clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(manifest(format!(
            "expected header `{}`, found `{}`",
            header.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| manifest(format!("row {}: {e}", i + 2))))
        .collect()
}

fn write_csv<T: Serialize>(rows: &[T], path: &Path, header: &[&str]) -> Result<(), DataError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    let fail = |e: csv::Error| DataError::Manifest {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    writer.write_record(header).map_err(fail)?;
    for row in rows {
        writer.serialize(row).map_err(fail)?;
    }
    writer.flush().map_err(io_err(path))
}

pub const DATASET_HEADER: [&str; 3] = ["sample_id", "path", "label"];
pub const GENERATION_HEADER: [&str; 6] = ["sample_id", "view_index", "path", "label", "ops", "seed"];

/// Reads a dataset manifest. Relative image paths are resolved against the
/// manifest's directory.
pub fn read_dataset_manifest(path: impl AsRef<Path>) -> Result<Vec<DatasetRow>, DataError> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new(""));
    let mut rows: Vec<DatasetRow> = read_csv(path, &DATASET_HEADER)?;
    for row in &mut rows {
        if row.path.is_relative() {
            row.path = base.join(&row.path);
        }
    }
    Ok(rows)
}

pub fn write_dataset_manifest(rows: &[DatasetRow], path: impl AsRef<Path>) -> Result<(), DataError> {
    write_csv(rows, path.as_ref(), &DATASET_HEADER)
}

pub fn read_generation_manifest(path: impl AsRef<Path>) -> Result<Vec<GenerationRow>, DataError> {
    read_csv(path.as_ref(), &GENERATION_HEADER)
}

pub fn write_generation_manifest(rows: &[GenerationRow], path: impl AsRef<Path>) -> Result<(), DataError> {
    write_csv(rows, path.as_ref(), &GENERATION_HEADER)
}

/// Pretty-printed JSON with a trailing newline. Floats use the shortest
/// representation that parses back to the same bits.
pub fn report_json(report: &CorrelationReport) -> Result<String, DataError> {
    let mut text = serde_json::to_string_pretty(report).map_err(|e| DataError::Serialize(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn write_report(report: &CorrelationReport, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    fs::write(path, report_json(report)?).map_err(io_err(path))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<CorrelationReport, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| DataError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        reason: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(model: &str, view: View, sample: &str, idx: u32, label: u32, pred: u32) -> PredictionRecord {
        PredictionRecord {
            model_id: model.into(),
            view,
            sample_id: sample.into(),
            view_index: idx,
            label,
            pred,
            logits: None,
            feature: None,
        }
    }

    #[test]
    fn round_trip_three_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        let mut a = record("m1", View::TrainOrig, "s1", 0, 1, 1);
        a.logits = Some(vec![0.25, 1.5, -3.0]);
        let mut b = record("m1", View::TrainContre, "s1", 1, 1, 0);
        b.feature = Some(vec![1.0, -2.0, 0.5, f32::MIN_POSITIVE]);
        let c = record("m2", View::TestOrig, "s2", 0, 0, 0);
        let records = vec![a, b, c];
        write_predictions(&records, &path).unwrap();
        assert_eq!(read_all_predictions(&path).unwrap(), records);
    }

    #[test]
    fn empty_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        write_predictions(&[], &path).unwrap();
        assert_eq!(fs::read(&path).unwrap().len(), 0);
        assert!(read_all_predictions(&path).unwrap().is_empty());
    }

    #[test]
    fn feature_bytes_decode_little_endian() {
        // hand-assembled bytes of 1.0, -2.0, 0.5 as little-endian IEEE 754 binary32
        let bytes: [u8; 12] = [0, 0, 0x80, 0x3f, 0, 0, 0, 0xc0, 0, 0, 0, 0x3f];
        let encoded = BASE64.encode(bytes);
        assert_eq!(encoded, "AACAPwAAAMAAAAA/");
        assert_eq!(decode_feature(&encoded).unwrap(), vec![1.0, -2.0, 0.5]);
        assert_eq!(encode_feature(&[1.0, -2.0, 0.5]), encoded);
    }

    #[test]
    fn dimension_mismatch_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let good = prediction_line(&record("m", View::TrainOrig, "a", 0, 0, 0));
        let bad = format!(
            r#"{{"model_id":"m","view":"train_orig","sample_id":"b","view_index":0,"label":0,"pred":0,"feature":"{}","feature_dim":4}}"#,
            encode_feature(&[1.0, 2.0, 3.0])
        );
        fs::write(&path, format!("{good}\n{bad}\n")).unwrap();
        let results: Vec<_> = read_predictions(&path).unwrap().collect();
        assert!(results[0].is_ok());
        match &results[1] {
            Err(DataError::DimensionMismatch { line, expected, actual, .. }) => {
                assert_eq!((*line, *expected, *actual), (2, 4, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors_are_positional() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let good = prediction_line(&record("m", View::TrainOrig, "a", 0, 0, 0));
        fs::write(
            &path,
            format!(
                "{good}\n\n{{not json\n{}\n",
                r#"{"model_id":"m","view":"train_orig","sample_id":"c","view_index":0,"label":5,"pred":0,"logits":[0.1,0.2]}"#
            ),
        )
        .unwrap();
        let results: Vec<_> = read_predictions(&path).unwrap().collect();
        assert_eq!(results.len(), 3);
        assert!(matches!(results[1], Err(DataError::Parse { line: 3, .. })));
        assert!(matches!(results[2], Err(DataError::Parse { line: 4, .. })));
    }

    #[test]
    fn bad_base64_and_view_are_parse_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        fs::write(
            &path,
            concat!(
                r#"{"model_id":"m","view":"train_orig","sample_id":"c","view_index":0,"label":0,"pred":0,"feature":"AAE="}"#,
                "\n",
                r#"{"model_id":"m","view":"val","sample_id":"c","view_index":0,"label":0,"pred":0}"#,
                "\n"
            ),
        )
        .unwrap();
        let results: Vec<_> = read_predictions(&path).unwrap().collect();
        assert!(matches!(results[0], Err(DataError::Parse { line: 1, .. })));
        assert!(matches!(results[1], Err(DataError::Parse { line: 2, .. })));
    }

    #[test]
    fn writes_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = record("m", View::TestContre, "x", 3, 2, 1);
        r.logits = Some(vec![0.1, 0.2, 0.30000000000000004]);
        r.feature = Some(vec![0.1, 7.25]);
        let (p1, p2) = (dir.path().join("1"), dir.path().join("2"));
        write_predictions([&r], &p1).unwrap();
        write_predictions([&r], &p2).unwrap();
        assert_eq!(fs::read(p1).unwrap(), fs::read(p2).unwrap());
    }

    #[test]
    fn scoring_examples() {
        let all_right: Vec<_> = (0..5)
            .map(|i| record("m", View::TrainOrig, &format!("s{i}"), 0, i % 3, i % 3))
            .collect();
        assert_eq!(score(&all_right).unwrap()[0].rows[0].accuracy, 1.0);

        let three_of_four = vec![
            record("m", View::TestOrig, "a", 0, 0, 0),
            record("m", View::TestOrig, "b", 0, 1, 1),
            record("m", View::TestOrig, "c", 0, 2, 2),
            record("m", View::TestOrig, "d", 0, 2, 0),
        ];
        let table = &score(&three_of_four).unwrap()[0];
        assert_eq!(table.rows[0].accuracy, 0.75);
        assert_eq!((table.rows[0].correct, table.rows[0].sample_count), (3, 4));
    }

    #[test]
    fn multi_view_accuracy_pools_all_view_records() {
        // 3 samples x 2 views; view 1 gets 2/3 right, view 2 gets 1/3 right
        let outcomes = [(1, true), (1, true), (1, false), (2, false), (2, true), (2, false)];
        let records: Vec<_> = outcomes
            .iter()
            .enumerate()
            .map(|(i, &(view, ok))| {
                record("m", View::TrainContre, &format!("s{}", i % 3), view, 1, if ok { 1 } else { 0 })
            })
            .collect();
        // brute force: count correct over all records
        let correct = outcomes.iter().filter(|o| o.1).count() as f64;
        let pooled = score(&records).unwrap()[0].rows[0].accuracy;
        assert_eq!(pooled, correct / 6.0);
        let per_view_mean = (2.0 / 3.0 + 1.0 / 3.0) / 2.0;
        assert!((pooled - per_view_mean).abs() < 1e-15);
    }

    #[test]
    fn duplicate_record_is_rejected() {
        let records = vec![
            record("m", View::TestOrig, "a", 0, 0, 0),
            record("m", View::TestOrig, "a", 0, 0, 1),
        ];
        assert!(matches!(score(&records), Err(DataError::DuplicateRecord { .. })));
        // same sample under a different view index is fine
        let records = vec![
            record("m", View::TrainContre, "a", 1, 0, 0),
            record("m", View::TrainContre, "a", 2, 0, 1),
        ];
        assert!(score(&records).is_ok());
    }

    #[test]
    fn manifest_round_trip_and_header_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let rows = vec![
            DatasetRow { sample_id: "a".into(), path: "img/a.png".into(), label: 0 },
            DatasetRow { sample_id: "b,c".into(), path: "img/b.png".into(), label: 2 },
        ];
        write_dataset_manifest(&rows, &path).unwrap();
        let back = read_dataset_manifest(&path).unwrap();
        assert_eq!(back[1].sample_id, "b,c");
        assert_eq!(back[0].path, dir.path().join("img/a.png"));

        fs::write(&path, "id,path,label\na,x.png,0\n").unwrap();
        assert!(matches!(read_dataset_manifest(&path), Err(DataError::Manifest { .. })));
    }
}
