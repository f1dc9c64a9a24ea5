//! Reading and writing QA datasets and ranked-run files.
//!
//! Three on-disk formats live here: JSON-lines question records, the nested
//! article/paragraph/qas JSON shared by the SQuAD family, and the run file
//! (a JSON object keyed by question id with a ranked answer list).

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Score;

pub const RUN_ANSWER_CAP: usize = 5;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("answer text of `{pq_id}` not found at start_char {start_char}")]
    OffsetMismatch { pq_id: String, start_char: usize },
    #[error("duplicate pq_id `{0}`")]
    DuplicateId(String),
    #[error("run entry `{0}`: {1}")]
    InvalidRun(String, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Qrcd,
    Squad,
    Mlqa,
    Xquad,
}

/// A gold answer with its 0-based character offset into the passage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnswer {
    pub text: String,
    pub start_char: usize,
}

/// One question-passage-answers triplet in the unified shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub pq_id: String,
    pub passage: String,
    pub question: String,
    pub answers: Vec<GoldAnswer>,
    pub source: Source,
}

impl QuestionRecord {
    /// Every gold answer must occur in the passage at its character offset.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let passage_chars: Vec<char> = self.passage.chars().collect();
        for answer in &self.answers {
            let ans_chars: Vec<char> = answer.text.chars().collect();
            let end = answer.start_char + ans_chars.len();
            if end > passage_chars.len() || passage_chars[answer.start_char..end] != ans_chars[..] {
                return Err(DatasetError::OffsetMismatch {
                    pq_id: self.pq_id.clone(),
                    start_char: answer.start_char,
                });
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct QrcdLine {
    pq_id: String,
    passage: String,
    question: String,
    answers: Vec<GoldAnswer>,
}

/// Read JSON-lines question records; validates id uniqueness and answer
/// offsets. The source is tagged `qrcd`.
pub fn read_qrcd(path: &Path) -> Result<Vec<QuestionRecord>, DatasetError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: QrcdLine = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(parsed.pq_id.clone()) {
            return Err(DatasetError::DuplicateId(parsed.pq_id));
        }
        let record = QuestionRecord {
            pq_id: parsed.pq_id,
            passage: parsed.passage,
            question: parsed.question,
            answers: parsed.answers,
            source: Source::Qrcd,
        };
        record.validate()?;
        records.push(record);
    }
    Ok(records)
}

/// Write question records as JSON lines, one record per line.
pub fn write_records(records: &[QuestionRecord], path: &Path) -> Result<(), DatasetError> {
    let mut file = std::fs::File::create(path)?;
    for record in records {
        let line = serde_json::to_string(record).map_err(std::io::Error::from)?;
        writeln!(file, "{line}")?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct SquadFile {
    data: Vec<SquadArticle>,
}

#[derive(Deserialize)]
struct SquadArticle {
    paragraphs: Vec<SquadParagraph>,
}

#[derive(Deserialize)]
struct SquadParagraph {
    context: String,
    qas: Vec<SquadQa>,
}

#[derive(Deserialize)]
struct SquadQa {
    id: String,
    question: String,
    #[serde(default)]
    answers: Vec<SquadAnswer>,
    #[serde(default)]
    is_impossible: bool,
}

#[derive(Deserialize)]
struct SquadAnswer {
    text: String,
    answer_start: usize,
}

/// Result of flattening a SQuAD-family file.
#[derive(Debug)]
pub struct Harmonized {
    pub records: Vec<QuestionRecord>,
    /// Unanswerable questions are dropped, not converted.
    pub dropped_unanswerable: usize,
}

/// Flatten the nested article/paragraph/qas shape shared by SQuAD, MLQA and
/// XQuAD into unified records. Passage and answer text are carried over
/// verbatim; only the containers change.
pub fn read_squad_family(path: &Path, source: Source) -> Result<Harmonized, DatasetError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let file: SquadFile = serde_json::from_reader(reader).map_err(|e| {
        if e.is_data() {
            DatasetError::Schema(e.to_string())
        } else {
            DatasetError::Parse {
                line: e.line(),
                message: e.to_string(),
            }
        }
    })?;
    let mut records = Vec::new();
    let mut dropped = 0usize;
    let mut seen = HashSet::new();
    for article in file.data {
        for paragraph in article.paragraphs {
            for qa in paragraph.qas {
                if qa.is_impossible || qa.answers.is_empty() {
                    dropped += 1;
                    continue;
                }
                if !seen.insert(qa.id.clone()) {
                    return Err(DatasetError::DuplicateId(qa.id));
                }
                let mut answers: Vec<GoldAnswer> = Vec::new();
                for a in qa.answers {
                    let gold = GoldAnswer {
                        text: a.text,
                        start_char: a.answer_start,
                    };
                    if !answers.contains(&gold) {
                        answers.push(gold);
                    }
                }
                let record = QuestionRecord {
                    pq_id: qa.id,
                    passage: paragraph.context.clone(),
                    question: qa.question,
                    answers,
                    source,
                };
                record.validate()?;
                records.push(record);
            }
        }
    }
    Ok(Harmonized {
        records,
        dropped_unanswerable: dropped,
    })
}

/// One ranked answer of a run entry. `span` carries token coordinates as a
/// sidecar so post-processing stages can operate on run files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAnswer {
    #[serde(rename = "answer")]
    pub text: String,
    pub rank: usize,
    pub score: Score,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<(usize, usize)>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub recommended: bool,
}

/// Ranked answers (at most [`RUN_ANSWER_CAP`]) for one question.
#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub pq_id: String,
    pub answers: Vec<RankedAnswer>,
}

impl RunEntry {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let invalid = |message: String| DatasetError::InvalidRun(self.pq_id.clone(), message);
        if self.answers.len() > RUN_ANSWER_CAP {
            return Err(invalid(format!(
                "{} answers exceed the cap of {RUN_ANSWER_CAP}",
                self.answers.len()
            )));
        }
        for (i, answer) in self.answers.iter().enumerate() {
            if answer.rank != i + 1 {
                return Err(invalid(format!(
                    "rank {} at position {} (ranks must be 1..k consecutive)",
                    answer.rank, i
                )));
            }
            if i > 0 && answer.score > self.answers[i - 1].score {
                return Err(invalid(format!(
                    "score increases from rank {} to {}",
                    i,
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Write a run file: a JSON object keyed by pq_id, keys sorted, so the
/// output is byte-for-byte reproducible.
pub fn write_run(entries: &[RunEntry], path: &Path) -> Result<(), DatasetError> {
    let mut map: BTreeMap<&str, &[RankedAnswer]> = BTreeMap::new();
    for entry in entries {
        entry.validate()?;
        if map.insert(&entry.pq_id, &entry.answers).is_some() {
            return Err(DatasetError::DuplicateId(entry.pq_id.clone()));
        }
    }
    let mut file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, &map).map_err(std::io::Error::from)?;
    file.write_all(b"\n")?;
    Ok(())
}

/// Read a run file back into entries, sorted by pq_id.
pub fn read_run(path: &Path) -> Result<Vec<RunEntry>, DatasetError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let map: BTreeMap<String, Vec<RankedAnswer>> =
        serde_json::from_reader(reader).map_err(|e| DatasetError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
    let entries: Vec<RunEntry> = map
        .into_iter()
        .map(|(pq_id, answers)| RunEntry { pq_id, answers })
        .collect();
    for entry in &entries {
        entry.validate()?;
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(pq_id: &str) -> QuestionRecord {
        QuestionRecord {
            pq_id: pq_id.to_string(),
            passage: "قل هو الله أحد".to_string(),
            question: "من هو".to_string(),
            answers: vec![GoldAnswer {
                text: "الله أحد".to_string(),
                start_char: 6,
            }],
            source: Source::Qrcd,
        }
    }

    #[test]
    fn validate_accepts_correct_offset() {
        record("q1").validate().unwrap();
    }

    #[test]
    fn validate_rejects_offset_mismatch() {
        let mut r = record("q1");
        r.answers[0].start_char = 5;
        let err = r.validate().unwrap_err();
        match err {
            DatasetError::OffsetMismatch { pq_id, .. } => assert_eq!(pq_id, "q1"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn qrcd_round_trip_and_duplicate_detection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gold.jsonl");
        write_records(&[record("a"), record("b")], &path).unwrap();
        let records = read_qrcd(&path).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0], record("a"));

        write_records(&[record("a"), record("a")], &path).unwrap();
        assert!(matches!(
            read_qrcd(&path),
            Err(DatasetError::DuplicateId(_))
        ));
    }

    #[test]
    fn qrcd_parse_error_carries_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gold.jsonl");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "{}", serde_json::to_string(&record("a")).unwrap()).unwrap();
        writeln!(f, "not json").unwrap();
        match read_qrcd(&path).unwrap_err() {
            DatasetError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    fn squad_json(unanswerable: bool) -> serde_json::Value {
        let qa = |id: &str| {
            serde_json::json!({
                "id": id,
                "question": "what is x",
                "answers": [{"text": "ctx", "answer_start": 0}],
            })
        };
        let mut qas1 = vec![qa("q1")];
        if unanswerable {
            qas1.push(serde_json::json!({
                "id": "q-imp",
                "question": "impossible",
                "answers": [],
                "is_impossible": true,
            }));
        }
        serde_json::json!({
            "data": [
                {"paragraphs": [
                    {"context": "ctx one", "qas": qas1},
                    {"context": "ctx two", "qas": [qa("q2")]},
                ]},
                {"paragraphs": [
                    {"context": "ctx three", "qas": [qa("q3")]},
                    {"context": "ctx four", "qas": [qa("q4")]},
                ]},
            ]
        })
    }

    #[test]
    fn squad_flattening_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("squad.json");
        std::fs::write(&path, squad_json(false).to_string()).unwrap();
        let out = read_squad_family(&path, Source::Squad).unwrap();
        assert_eq!(out.records.len(), 4);
        assert_eq!(out.dropped_unanswerable, 0);
        for r in &out.records {
            r.validate().unwrap();
            assert_eq!(r.source, Source::Squad);
        }
    }

    #[test]
    fn squad_drops_unanswerable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("squad.json");
        std::fs::write(&path, squad_json(true).to_string()).unwrap();
        let out = read_squad_family(&path, Source::Mlqa).unwrap();
        assert_eq!(out.records.len(), 4);
        assert_eq!(out.dropped_unanswerable, 1);
    }

    #[test]
    fn squad_schema_error_on_missing_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, r#"{"articles": []}"#).unwrap();
        assert!(matches!(
            read_squad_family(&path, Source::Squad),
            Err(DatasetError::Schema(_))
        ));
    }

    fn entry(pq_id: &str, n: usize) -> RunEntry {
        RunEntry {
            pq_id: pq_id.to_string(),
            answers: (0..n)
                .map(|i| RankedAnswer {
                    text: format!("ans {i}"),
                    rank: i + 1,
                    score: 1.0 / (i + 1) as f64,
                    span: Some((i, i + 1)),
                    recommended: false,
                })
                .collect(),
        }
    }

    #[test]
    fn run_round_trip_sorted_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        let entries = vec![entry("b", 2), entry("a", 1)];
        write_run(&entries, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.find("\"a\"").unwrap() < text.find("\"b\"").unwrap());
        let back = read_run(&path).unwrap();
        assert_eq!(back, vec![entry("a", 1), entry("b", 2)]);
    }

    #[test]
    fn run_rejects_more_than_cap() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        let mut e = entry("a", 5);
        e.answers.push(RankedAnswer {
            text: "extra".to_string(),
            rank: 6,
            score: 0.0,
            span: None,
            recommended: false,
        });
        assert!(matches!(
            write_run(&[e], &path),
            Err(DatasetError::InvalidRun(_, _))
        ));
        assert!(!path.exists());
    }

    #[test]
    fn run_rejects_duplicate_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        assert!(matches!(
            write_run(&[entry("a", 1), entry("a", 1)], &path),
            Err(DatasetError::DuplicateId(_))
        ));
    }

    #[test]
    fn run_rejects_nonconsecutive_ranks() {
        let mut e = entry("a", 2);
        e.answers[1].rank = 3;
        assert!(e.validate().is_err());
    }

    #[test]
    fn run_rejects_increasing_scores() {
        let mut e = entry("a", 2);
        e.answers[1].score = 2.0;
        assert!(e.validate().is_err());
    }
}
