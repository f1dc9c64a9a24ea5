//! Toolkit for verse-structured Arabic extractive QA: decode start/end
//! logits into ranked answer spans, post-process them by question type,
//! recommend similar verses, and score ranked runs with pRR / Exact Match /
//! F1@1.

pub mod dataset;
pub mod decoder;
pub mod metrics;
pub mod postprocess;
pub mod qtype;
pub mod recommend;
pub mod scalar;
pub mod textnorm;

pub use scalar::Scalar;

/// Default scalar used by the file formats and the CLI.
pub type Score = f64;

#[cfg(test)]
pub(crate) mod testutil {
    use crate::decoder::TokenizedContext;

    /// Context over space-separated word tokens; "." tokens become verse
    /// ends.
    pub fn words_ctx(words: &[&str], special: &[bool]) -> TokenizedContext {
        assert_eq!(words.len(), special.len());
        let mut offsets = Vec::new();
        let mut passage = String::new();
        let mut pos = 0usize;
        for (i, w) in words.iter().enumerate() {
            if i > 0 {
                passage.push(' ');
                pos += 1;
            }
            let len = w.chars().count();
            offsets.push((pos, pos + len));
            passage.push_str(w);
            pos += len;
        }
        let verse_end_tokens = words
            .iter()
            .enumerate()
            .filter(|(_, w)| **w == ".")
            .map(|(i, _)| i)
            .collect();
        TokenizedContext {
            pq_id: "t".to_string(),
            question: None,
            passage,
            tokens: words.iter().map(|w| w.to_string()).collect(),
            char_offsets: offsets,
            special_mask: special.to_vec(),
            verse_end_tokens,
        }
    }
}
