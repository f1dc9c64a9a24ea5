//! Turn start/end logit vectors into ranked answer spans.
//!
//! The logits file is the model boundary: any upstream extractive-QA model
//! exports one JSON line per question with its context tokens, character
//! offsets, special-token mask, verse-end positions and the two logit
//! vectors. Everything downstream of the model is reproducible from it.

use std::cmp::Ordering;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::Score;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("all positions are masked")]
    AllMasked,
    #[error("no valid span (all positions masked)")]
    NoValidSpan,
    #[error("logit vector length {got} is shorter than the {expected} context tokens")]
    LengthMismatch { got: usize, expected: usize },
    #[error("span ({0}, {1}) out of range or touching a special token")]
    OutOfRange(usize, usize),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("logits file parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Passage tokens with character offsets, special-token mask and verse-end
/// positions. Character offsets are 0-based char indices into `passage`,
/// end exclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedContext {
    pub pq_id: String,
    pub question: Option<String>,
    pub passage: String,
    pub tokens: Vec<String>,
    pub char_offsets: Vec<(usize, usize)>,
    pub special_mask: Vec<bool>,
    pub verse_end_tokens: Vec<usize>,
}

impl TokenizedContext {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Highest non-special token index, if any.
    pub fn last_real_token(&self) -> Option<usize> {
        (0..self.len()).rev().find(|&i| !self.special_mask[i])
    }
}

/// Per-question start and end logits, aligned with a [`TokenizedContext`].
#[derive(Debug, Clone, PartialEq)]
pub struct LogitBundle<S = Score> {
    pub pq_id: String,
    pub start_logits: Vec<S>,
    pub end_logits: Vec<S>,
}

/// A ranked candidate answer span (token endpoints inclusive).
#[derive(Debug, Clone, PartialEq)]
pub struct SpanPrediction<S = Score> {
    pub start_tok: usize,
    pub end_tok: usize,
    pub score: S,
    pub text: String,
    pub rank: usize,
    pub recommended: bool,
}

/// Softmax over the unmasked positions; masked positions get probability
/// exactly zero. Max-subtraction keeps the exponentials in range, which
/// also makes the result invariant under additive shifts of the logits.
pub fn masked_softmax<S: Scalar>(logits: &[S], mask: &[bool]) -> Result<Vec<S>, DecodeError> {
    debug_assert_eq!(logits.len(), mask.len());
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| !m)
        .map(|(&x, _)| x)
        .fold(None, |acc: Option<S>, x| {
            Some(acc.map_or(x, |a| if x > a { x } else { a }))
        })
        .ok_or(DecodeError::AllMasked)?;
    let exps: Vec<S> = logits
        .iter()
        .zip(mask)
        .map(|(&x, &m)| if m { S::zero() } else { (x - max).exp() })
        .collect();
    let total: S = exps.iter().copied().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Extract the passage substring spanned by the token endpoints (inclusive).
pub fn span_to_text(
    ctx: &TokenizedContext,
    start_tok: usize,
    end_tok: usize,
) -> Result<String, DecodeError> {
    if start_tok > end_tok
        || end_tok >= ctx.len()
        || ctx.special_mask[start_tok]
        || ctx.special_mask[end_tok]
    {
        return Err(DecodeError::OutOfRange(start_tok, end_tok));
    }
    let (from, _) = ctx.char_offsets[start_tok];
    let (_, to) = ctx.char_offsets[end_tok];
    Ok(ctx.passage.chars().skip(from).take(to.saturating_sub(from)).collect())
}

fn span_order<S: Scalar>(a: &(usize, usize, S), b: &(usize, usize, S)) -> Ordering {
    b.2.partial_cmp(&a.2)
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
        .then(a.1.cmp(&b.1))
}

/// Enumerate every span of unmasked tokens up to `max_span_len`, score it
/// as P_start * P_end, and return the top `n` ranked by score with ties
/// broken by (earlier start, shorter span).
pub fn decode_topn<S: Scalar>(
    ctx: &TokenizedContext,
    logits: &LogitBundle<S>,
    n: usize,
    max_span_len: usize,
) -> Result<Vec<SpanPrediction<S>>, DecodeError> {
    assert!(n >= 1, "n must be at least 1");
    assert!(max_span_len >= 1, "max_span_len must be at least 1");
    let len = ctx.len();
    for logit_len in [logits.start_logits.len(), logits.end_logits.len()] {
        if logit_len < len {
            return Err(DecodeError::LengthMismatch {
                got: logit_len,
                expected: len,
            });
        }
    }
    // Clamp to the context: anything beyond the tokens is model padding.
    let p_start = masked_softmax(&logits.start_logits[..len], &ctx.special_mask)
        .map_err(|_| DecodeError::NoValidSpan)?;
    let p_end = masked_softmax(&logits.end_logits[..len], &ctx.special_mask)
        .map_err(|_| DecodeError::NoValidSpan)?;

    let mut candidates: Vec<(usize, usize, S)> = Vec::new();
    for start in 0..len {
        if ctx.special_mask[start] {
            continue;
        }
        for end in start..len.min(start + max_span_len) {
            if ctx.special_mask[end] {
                break; // spans never cross a special token
            }
            candidates.push((start, end, p_start[start] * p_end[end]));
        }
    }
    if candidates.is_empty() {
        return Err(DecodeError::NoValidSpan);
    }
    candidates.sort_by(span_order);
    candidates
        .into_iter()
        .take(n)
        .enumerate()
        .map(|(i, (start, end, score))| {
            Ok(SpanPrediction {
                start_tok: start,
                end_tok: end,
                score,
                text: span_to_text(ctx, start, end)?,
                rank: i + 1,
                recommended: false,
            })
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct LogitsLine {
    pq_id: String,
    tokens: Vec<String>,
    offsets: Vec<(usize, usize)>,
    special_mask: Vec<bool>,
    verse_end_tokens: Vec<usize>,
    start_logits: Vec<Score>,
    end_logits: Vec<Score>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    passage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    question: Option<String>,
}

/// Rebuild a passage from tokens and char offsets when the producer did not
/// include it; inter-token gaps become spaces.
fn reconstruct_passage(tokens: &[String], offsets: &[(usize, usize)]) -> String {
    let total = offsets.iter().map(|&(_, e)| e).max().unwrap_or(0);
    let mut chars: Vec<char> = vec![' '; total];
    for (token, &(start, _)) in tokens.iter().zip(offsets) {
        for (i, c) in token.chars().enumerate() {
            if start + i < total {
                chars[start + i] = c;
            }
        }
    }
    chars.into_iter().collect()
}

/// Read a JSON-lines logits file into (context, logits) pairs.
pub fn read_logits_file(
    path: &Path,
) -> Result<Vec<(TokenizedContext, LogitBundle)>, DecodeError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogitsLine = serde_json::from_str(&line).map_err(|e| DecodeError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        let n = parsed.tokens.len();
        if parsed.offsets.len() != n || parsed.special_mask.len() != n {
            return Err(DecodeError::Parse {
                line: idx + 1,
                message: format!(
                    "tokens/offsets/special_mask lengths differ ({n}/{}/{})",
                    parsed.offsets.len(),
                    parsed.special_mask.len()
                ),
            });
        }
        let passage = parsed
            .passage
            .unwrap_or_else(|| reconstruct_passage(&parsed.tokens, &parsed.offsets));
        let ctx = TokenizedContext {
            pq_id: parsed.pq_id.clone(),
            question: parsed.question,
            passage,
            tokens: parsed.tokens,
            char_offsets: parsed.offsets,
            special_mask: parsed.special_mask,
            verse_end_tokens: parsed.verse_end_tokens,
        };
        let bundle = LogitBundle {
            pq_id: parsed.pq_id,
            start_logits: parsed.start_logits,
            end_logits: parsed.end_logits,
        };
        out.push((ctx, bundle));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::words_ctx as simple_ctx;
    use proptest::prelude::*;

    fn bundle(start: Vec<f64>, end: Vec<f64>) -> LogitBundle {
        LogitBundle {
            pq_id: "t".to_string(),
            start_logits: start,
            end_logits: end,
        }
    }

    #[test]
    fn softmax_uniform() {
        let p = masked_softmax(&[0.0f64, 0.0, 0.0, 0.0], &[false; 4]).unwrap();
        assert_eq!(p, vec![0.25; 4]);
    }

    #[test]
    fn softmax_masks_out_the_max() {
        let p = masked_softmax(&[5.0f64, 0.0, 0.0], &[true, false, false]).unwrap();
        assert_eq!(p[0], 0.0);
        assert!((p[1] - 0.5).abs() < 1e-12);
        assert!((p[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn softmax_all_masked_is_error() {
        assert!(matches!(
            masked_softmax(&[1.0f64, 2.0], &[true, true]),
            Err(DecodeError::AllMasked)
        ));
    }

    #[test]
    fn softmax_handles_large_logits() {
        let p = masked_softmax(&[1000.0f64, 999.0], &[false, false]).unwrap();
        assert!(p.iter().all(|x| x.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn uniform_logits_tie_break() {
        let ctx = simple_ctx(&["a", "b", "c"], &[false; 3]);
        let spans = decode_topn(&ctx, &bundle(vec![0.0; 3], vec![0.0; 3]), 3, 2).unwrap();
        let coords: Vec<(usize, usize)> =
            spans.iter().map(|s| (s.start_tok, s.end_tok)).collect();
        assert_eq!(coords, vec![(0, 0), (0, 1), (1, 1)]);
        for s in &spans {
            assert!((s.score - 1.0 / 9.0).abs() < 1e-12);
        }
        assert_eq!(
            spans.iter().map(|s| s.rank).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
    }

    #[test]
    fn peaked_logits_select_the_peak_span() {
        let words = vec!["w"; 10];
        let ctx = simple_ctx(&words, &[false; 10]);
        let mut start = vec![0.0; 10];
        let mut end = vec![0.0; 10];
        start[4] = 8.0;
        end[7] = 8.0;
        let spans = decode_topn(&ctx, &bundle(start, end), 1, 6).unwrap();
        assert_eq!((spans[0].start_tok, spans[0].end_tok), (4, 7));
    }

    #[test]
    fn spans_never_touch_special_tokens() {
        let ctx = simple_ctx(&["[CLS]", "a", "[SEP]", "b"], &[true, false, true, false]);
        let spans = decode_topn(&ctx, &bundle(vec![0.0; 4], vec![0.0; 4]), 10, 4).unwrap();
        for s in &spans {
            for i in s.start_tok..=s.end_tok {
                assert!(!ctx.special_mask[i]);
            }
        }
        // (a,a) and (b,b) only: the [SEP] blocks the (a..b) span.
        assert_eq!(spans.len(), 2);
    }

    #[test]
    fn longer_logit_vectors_are_clamped() {
        let ctx = simple_ctx(&["a", "b"], &[false, false]);
        let spans =
            decode_topn(&ctx, &bundle(vec![0.0; 5], vec![0.0; 5]), 1, 2).unwrap();
        assert_eq!((spans[0].start_tok, spans[0].end_tok), (0, 0));
    }

    #[test]
    fn short_logit_vectors_are_an_error() {
        let ctx = simple_ctx(&["a", "b", "c"], &[false; 3]);
        assert!(matches!(
            decode_topn(&ctx, &bundle(vec![0.0; 2], vec![0.0; 3]), 1, 2),
            Err(DecodeError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn all_masked_context_is_no_valid_span() {
        let ctx = simple_ctx(&["a", "b"], &[true, true]);
        assert!(matches!(
            decode_topn(&ctx, &bundle(vec![0.0; 2], vec![0.0; 2]), 1, 2),
            Err(DecodeError::NoValidSpan)
        ));
    }

    #[test]
    fn span_text_is_the_passage_substring() {
        let ctx = simple_ctx(&["قل", "هو"], &[false, false]);
        assert_eq!(span_to_text(&ctx, 0, 0).unwrap(), "قل");
        assert_eq!(span_to_text(&ctx, 0, 1).unwrap(), "قل هو");
        assert!(span_to_text(&ctx, 1, 0).is_err());
        assert!(span_to_text(&ctx, 0, 5).is_err());
    }

    #[test]
    fn decode_is_shift_invariant() {
        // dyadic values keep the shifted additions exact
        let ctx = simple_ctx(&["a", "b", "c", "d"], &[false; 4]);
        let start = vec![0.25, -1.25, 2.0, 0.125];
        let end = vec![1.0, 0.5, -0.375, 2.25];
        let base = decode_topn(&ctx, &bundle(start.clone(), end.clone()), 4, 3).unwrap();
        let shifted = decode_topn(
            &ctx,
            &bundle(
                start.iter().map(|x| x + 123.5).collect(),
                end.iter().map(|x| x - 77.25).collect(),
            ),
            4,
            3,
        )
        .unwrap();
        assert_eq!(base, shifted);
    }

    #[test]
    fn logits_file_round_trip_without_passage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("logits.jsonl");
        let line = serde_json::json!({
            "pq_id": "q1",
            "tokens": ["قل", "هو"],
            "offsets": [[0, 2], [3, 5]],
            "special_mask": [false, false],
            "verse_end_tokens": [],
            "start_logits": [0.0, 1.0],
            "end_logits": [1.0, 0.0],
        });
        std::fs::write(&path, format!("{line}\n")).unwrap();
        let loaded = read_logits_file(&path).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded[0].0.passage, "قل هو");
        assert_eq!(span_to_text(&loaded[0].0, 0, 1).unwrap(), "قل هو");
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_preserves_order(
            logits in proptest::collection::vec(-10.0f64..10.0, 32),
            mask in proptest::collection::vec(any::<bool>(), 32),
        ) {
            prop_assume!(mask.iter().any(|m| !m));
            let p = masked_softmax(&logits, &mask).unwrap();
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            for i in 0..32 {
                for j in 0..32 {
                    if !mask[i] && !mask[j] && logits[i] < logits[j] {
                        prop_assert!(p[i] <= p[j]);
                    }
                }
            }
            // direct exp-normalize oracle
            let exps: Vec<f64> = logits
                .iter()
                .zip(&mask)
                .map(|(&x, &m)| if m { 0.0 } else { x.exp() })
                .collect();
            let total: f64 = exps.iter().sum();
            for i in 0..32 {
                prop_assert!((p[i] - exps[i] / total).abs() < 1e-12);
            }
        }
    }
}
