//! Verse recommendation: append the verse most similar to the question as a
//! low-priority candidate answer. Embedding vectors are supplied externally
//! (JSON lines), one per question and one per verse of its passage.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::RUN_ANSWER_CAP;
use crate::decoder::{span_to_text, SpanPrediction, TokenizedContext};
use crate::scalar::Scalar;
use crate::Score;

#[derive(Debug, Error)]
pub enum RecommendError {
    #[error("zero-norm vector")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("vector `{0}` has a non-finite component")]
    NonFinite(String),
    #[error("no verse vectors")]
    NoVerses,
    #[error("embedding `{0}` not found")]
    MissingEmbedding(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("embeddings parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub id: String,
    #[serde(rename = "vector")]
    pub values: Vec<Score>,
}

/// Immutable id -> vector store with a single dimension for all entries.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    vectors: HashMap<String, Vec<Score>>,
    dim: usize,
}

impl EmbeddingStore {
    pub fn get(&self, id: &str) -> Option<&[Score]> {
        self.vectors.get(id).map(|v| v.as_slice())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Verse vectors for one question, in verse order (`<pq_id>#v0`,
    /// `<pq_id>#v1`, ...), stopping at the first missing index.
    pub fn verse_vectors(&self, pq_id: &str) -> Vec<&[Score]> {
        let mut out = Vec::new();
        for k in 0.. {
            match self.get(&format!("{pq_id}#v{k}")) {
                Some(v) => out.push(v),
                None => break,
            }
        }
        out
    }
}

/// Load a JSON-lines embedding file, checking dimension consistency and
/// rejecting NaN/Inf components.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingStore, RecommendError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut vectors = HashMap::new();
    let mut dim = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: EmbeddingVector =
            serde_json::from_str(&line).map_err(|e| RecommendError::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
        if parsed.values.iter().any(|x| !x.is_finite()) {
            return Err(RecommendError::NonFinite(parsed.id));
        }
        match dim {
            None => dim = Some(parsed.values.len()),
            Some(d) if d != parsed.values.len() => {
                return Err(RecommendError::DimensionMismatch(d, parsed.values.len()))
            }
            _ => {}
        }
        vectors.insert(parsed.id, parsed.values);
    }
    Ok(EmbeddingStore {
        vectors,
        dim: dim.unwrap_or(0),
    })
}

/// dot(u, v) / (|u| |v|), in [-1, 1].
pub fn cosine_similarity<S: Scalar>(u: &[S], v: &[S]) -> Result<S, RecommendError> {
    if u.len() != v.len() {
        return Err(RecommendError::DimensionMismatch(u.len(), v.len()));
    }
    let dot: S = u.iter().zip(v).map(|(&a, &b)| a * b).sum();
    let norm_u = u.iter().map(|&a| a * a).sum::<S>().sqrt();
    let norm_v = v.iter().map(|&a| a * a).sum::<S>().sqrt();
    if norm_u.is_zero() || norm_v.is_zero() {
        return Err(RecommendError::ZeroVector);
    }
    Ok(dot / (norm_u * norm_v))
}

/// Index of the verse most similar to the question; ties go to the lowest
/// index.
pub fn most_similar_verse<S: Scalar>(
    question: &[S],
    verses: &[&[S]],
) -> Result<usize, RecommendError> {
    if verses.is_empty() {
        return Err(RecommendError::NoVerses);
    }
    let mut best = 0usize;
    let mut best_sim = cosine_similarity(question, verses[0])?;
    for (i, verse) in verses.iter().enumerate().skip(1) {
        let sim = cosine_similarity(question, verse)?;
        if sim > best_sim {
            best = i;
            best_sim = sim;
        }
    }
    Ok(best)
}

/// Token span of each complete verse in the context: verse k runs from just
/// after the previous full stop to just before its own full stop. Empty
/// verses (consecutive stops) are kept as empty markers only when non-empty.
pub fn verse_spans(ctx: &TokenizedContext) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut prev_end: Option<usize> = None;
    for &stop in &ctx.verse_end_tokens {
        let mut start = prev_end.map_or(0, |p| p + 1);
        // skip leading special tokens (e.g. a [CLS] at position 0)
        while start < stop && ctx.special_mask[start] {
            start += 1;
        }
        if start < stop {
            spans.push((start, stop - 1));
        }
        prev_end = Some(stop);
    }
    spans
}

/// Build the recommended-answer span for the most similar verse.
pub fn verse_span_prediction(
    ctx: &TokenizedContext,
    verse_index: usize,
) -> Option<SpanPrediction> {
    let spans = verse_spans(ctx);
    let &(start, end) = spans.get(verse_index)?;
    Some(SpanPrediction {
        start_tok: start,
        end_tok: end,
        score: 0.0,
        text: span_to_text(ctx, start, end).ok()?,
        rank: 0,
        recommended: true,
    })
}

fn overlaps(a: &SpanPrediction, b: &SpanPrediction) -> bool {
    a.start_tok <= b.end_tok && b.start_tok <= a.end_tok
}

/// Append the verse span at the last rank with score 0, unless the answer
/// list is already full or the verse overlaps an existing answer.
pub fn append_recommendation(
    answers: &[SpanPrediction],
    verse_span: &SpanPrediction,
) -> Vec<SpanPrediction> {
    let mut out = answers.to_vec();
    if out.len() >= RUN_ANSWER_CAP || out.iter().any(|a| overlaps(a, verse_span)) {
        return out;
    }
    let mut appended = verse_span.clone();
    appended.rank = out.len() + 1;
    appended.score = 0.0;
    appended.recommended = true;
    out.push(appended);
    out
}
