//! Answer post-processing: length extension by question type, overlap
//! merging, and fusion of two runs.

use std::cmp::Ordering;

use crate::decoder::{span_to_text, SpanPrediction, TokenizedContext};

/// Extend a short span forward to the average answer length for its
/// question type, or to the nearest verse-end token, whichever comes first.
/// Spans already at or above `avg_len` tokens are returned unchanged.
pub fn extend_answer(
    span: &SpanPrediction,
    ctx: &TokenizedContext,
    avg_len: usize,
) -> SpanPrediction {
    let avg_len = avg_len.max(1);
    let span_len = span.end_tok - span.start_tok + 1;
    if span_len >= avg_len {
        return span.clone();
    }
    let by_length = span.start_tok + avg_len - 1;
    let mut new_end = match ctx.verse_end_tokens.iter().find(|&&v| v >= span.end_tok) {
        Some(&verse_end) => by_length.min(verse_end),
        None => by_length,
    };
    if let Some(last) = ctx.last_real_token() {
        new_end = new_end.min(last.max(span.end_tok));
    }
    // Never grow across a special token.
    for i in span.end_tok + 1..=new_end {
        if ctx.special_mask[i] {
            new_end = i - 1;
            break;
        }
    }
    let new_end = new_end.max(span.end_tok);
    SpanPrediction {
        start_tok: span.start_tok,
        end_tok: new_end,
        score: span.score,
        text: span_to_text(ctx, span.start_tok, new_end).unwrap_or_else(|_| span.text.clone()),
        rank: span.rank,
        recommended: span.recommended,
    }
}

fn rank_order(a: &SpanPrediction, b: &SpanPrediction) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.start_tok.cmp(&b.start_tok))
        .then(a.end_tok.cmp(&b.end_tok))
}

/// Merge every pair of spans sharing at least one token into
/// (min start, max end) until a fixed point; the merged score is the max of
/// the constituents. The result is re-ranked and pairwise non-overlapping.
pub fn merge_overlaps(spans: &[SpanPrediction], ctx: &TokenizedContext) -> Vec<SpanPrediction> {
    let mut sorted: Vec<SpanPrediction> = spans.to_vec();
    sorted.sort_by(|a, b| {
        a.start_tok
            .cmp(&b.start_tok)
            .then(a.end_tok.cmp(&b.end_tok))
    });
    let mut merged: Vec<SpanPrediction> = Vec::new();
    for span in sorted {
        match merged.last_mut() {
            // token-index intervals are inclusive, so <= means they share a token
            Some(last) if span.start_tok <= last.end_tok => {
                last.end_tok = last.end_tok.max(span.end_tok);
                last.score = if span.score > last.score {
                    span.score
                } else {
                    last.score
                };
                last.recommended = last.recommended && span.recommended;
            }
            _ => merged.push(span),
        }
    }
    merged.sort_by(rank_order);
    for (i, span) in merged.iter_mut().enumerate() {
        span.rank = i + 1;
        span.text = span_to_text(ctx, span.start_tok, span.end_tok)
            .unwrap_or_else(|_| span.text.clone());
    }
    merged
}

/// Combine the answers of two runs for one question: concatenate, merge
/// overlaps, keep the top `cap`.
pub fn fuse_runs(
    run_a: &[SpanPrediction],
    run_b: &[SpanPrediction],
    cap: usize,
    ctx: &TokenizedContext,
) -> Vec<SpanPrediction> {
    let mut combined: Vec<SpanPrediction> = run_a.to_vec();
    combined.extend_from_slice(run_b);
    let mut fused = merge_overlaps(&combined, ctx);
    fused.truncate(cap);
    for (i, span) in fused.iter_mut().enumerate() {
        span.rank = i + 1;
    }
    fused
}
