//! Question-type classification by interrogative pronoun, and per-type
//! answer-length statistics.
//!
//! Eight surface-pronoun clusters. Matching is on whole tokens after
//! normalization, scanning left to right; clitic-fused variants are listed
//! as single tokens, preposition + pronoun clusters as two-token sequences.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::QuestionRecord;
use crate::textnorm::{normalize_text, NormalizationConfig};

#[derive(Debug, Error)]
pub enum TypingError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("no statistics available for {0:?}")]
    MissingStats(QuestionTypeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionTypeId {
    WhenHowMuch,
    Who,
    What,
    Which,
    Why,
    Polar,
    Where,
    How,
}

pub const ALL_TYPES: [QuestionTypeId; 8] = [
    QuestionTypeId::WhenHowMuch,
    QuestionTypeId::Who,
    QuestionTypeId::What,
    QuestionTypeId::Which,
    QuestionTypeId::Why,
    QuestionTypeId::Polar,
    QuestionTypeId::Where,
    QuestionTypeId::How,
];

/// The class every unmatched question falls back to (the most frequent one).
pub const FALLBACK_TYPE: QuestionTypeId = QuestionTypeId::What;

/// Pronoun surface forms per type. Multi-word entries match consecutive
/// tokens; lists are pairwise disjoint as exact token sequences.
pub fn pronouns(id: QuestionTypeId) -> &'static [&'static str] {
    match id {
        QuestionTypeId::WhenHowMuch => &["متى", "كم", "في كم"],
        QuestionTypeId::Who => &["من", "على من", "ضد من", "مع"],
        QuestionTypeId::What => &["ما", "ماذا", "ماهي", "بماذا"],
        QuestionTypeId::Which => &["أي", "بأي"],
        QuestionTypeId::Why => &["لماذا", "فلماذا"],
        QuestionTypeId::Polar => &["هل"],
        QuestionTypeId::Where => &["أين"],
        QuestionTypeId::How => &["كيف"],
    }
}

/// Classify by the earliest-matching pronoun token (longer sequences tried
/// first at each position). Total and deterministic; unmatched questions
/// get [`FALLBACK_TYPE`].
pub fn classify_question(question: &str) -> QuestionTypeId {
    let normalized = normalize_text(question, &NormalizationConfig::comparison());
    let tokens: Vec<&str> = normalized.split_whitespace().collect();
    for start in 0..tokens.len() {
        for seq_len in [2usize, 1] {
            if start + seq_len > tokens.len() {
                continue;
            }
            let window = tokens[start..start + seq_len].join(" ");
            for id in ALL_TYPES {
                if pronouns(id).contains(&window.as_str()) {
                    return id;
                }
            }
        }
    }
    FALLBACK_TYPE
}

/// Answer-length statistics (in tokens) for one question type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeStats {
    #[serde(rename = "type")]
    pub type_id: QuestionTypeId,
    pub count: usize,
    pub min: usize,
    pub avg: usize,
    pub max: usize,
}

/// Per-type rows plus the global aggregate used for unknown types.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeStatsTable {
    pub rows: Vec<TypeStats>,
    pub global_avg: usize,
    pub n_questions: usize,
}

impl TypeStatsTable {
    pub fn row(&self, id: QuestionTypeId) -> Option<&TypeStats> {
        self.rows.iter().find(|r| r.type_id == id)
    }
}

/// Default token counter: whitespace tokens after comparison normalization.
pub fn whitespace_token_count(text: &str) -> usize {
    normalize_text(text, &NormalizationConfig::comparison())
        .split_whitespace()
        .count()
}

fn round_mean(sum: usize, n: usize) -> usize {
    (sum as f64 / n as f64).round() as usize
}

/// Count questions per type and aggregate min/avg/max gold-answer lengths.
/// The average is the arithmetic mean rounded to the nearest integer.
pub fn compute_type_stats<F>(
    records: &[QuestionRecord],
    token_count: F,
) -> Result<TypeStatsTable, TypingError>
where
    F: Fn(&str) -> usize,
{
    if records.is_empty() {
        return Err(TypingError::EmptyDataset);
    }
    let mut lengths: Vec<Vec<usize>> = vec![Vec::new(); ALL_TYPES.len()];
    let mut counts = [0usize; 8];
    let mut all_lengths: Vec<usize> = Vec::new();
    for record in records {
        let id = classify_question(&record.question);
        let slot = ALL_TYPES.iter().position(|t| *t == id).unwrap();
        counts[slot] += 1;
        for answer in &record.answers {
            let len = token_count(&answer.text);
            lengths[slot].push(len);
            all_lengths.push(len);
        }
    }
    let rows = ALL_TYPES
        .iter()
        .enumerate()
        .map(|(slot, id)| {
            let lens = &lengths[slot];
            let (min, avg, max) = if lens.is_empty() {
                (0, 0, 0)
            } else {
                (
                    *lens.iter().min().unwrap(),
                    round_mean(lens.iter().sum(), lens.len()),
                    *lens.iter().max().unwrap(),
                )
            };
            TypeStats {
                type_id: *id,
                count: counts[slot],
                min,
                avg,
                max,
            }
        })
        .collect();
    let global_avg = if all_lengths.is_empty() {
        0
    } else {
        round_mean(all_lengths.iter().sum(), all_lengths.len())
    };
    Ok(TypeStatsTable {
        rows,
        global_avg,
        n_questions: records.len(),
    })
}

/// Expected answer length for a type; types with no data fall back to the
/// global average.
pub fn lookup_avg_length(id: QuestionTypeId, stats: &TypeStatsTable) -> Result<usize, TypingError> {
    match stats.row(id) {
        Some(row) if row.count > 0 => Ok(row.avg),
        _ if stats.n_questions > 0 => Ok(stats.global_avg),
        _ => Err(TypingError::MissingStats(id)),
    }
}
