//! Arabic text cleaning and pretraining-corpus formatting.
//!
//! Normalization is a per-character filter plus whitespace handling, so it is
//! deterministic and idempotent for every flag combination.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TextnormError {
    #[error("field `{0}` is empty after normalization")]
    EmptyField(&'static str),
    #[error("train fraction {0} is outside (0, 1)")]
    BadFraction(f64),
    #[error("corpus i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Which cleaning steps to apply. All flags independent; the all-false
/// config is the identity transform.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationConfig {
    pub strip_diacritics: bool,
    pub strip_punctuation: bool,
    pub strip_non_arabic: bool,
    pub collapse_whitespace: bool,
}

impl NormalizationConfig {
    /// Every cleaning step enabled (corpus building).
    pub fn all() -> Self {
        Self {
            strip_diacritics: true,
            strip_punctuation: true,
            strip_non_arabic: true,
            collapse_whitespace: true,
        }
    }

    /// Identity transform.
    pub fn none() -> Self {
        Self::default()
    }

    /// Normalization used before token-level comparison: diacritics and
    /// punctuation removed, whitespace collapsed, scripts left alone.
    pub fn comparison() -> Self {
        Self {
            strip_diacritics: true,
            strip_punctuation: true,
            strip_non_arabic: false,
            collapse_whitespace: true,
        }
    }

    fn is_identity(&self) -> bool {
        *self == Self::none()
    }
}

/// Arabic combining marks U+064B-U+065F, superscript alef U+0670, the
/// Qur'anic annotation range U+06D6-U+06ED, and tatweel U+0640.
fn is_arabic_diacritic(c: char) -> bool {
    matches!(c,
        '\u{064B}'..='\u{065F}' | '\u{0670}' | '\u{06D6}'..='\u{06ED}' | '\u{0640}')
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{060C}' // Arabic comma
            | '\u{061B}' // Arabic semicolon
            | '\u{061F}' // Arabic question mark
            | '\u{066A}' // Arabic percent sign
            | '\u{066B}' // Arabic decimal separator
            | '\u{066C}' // Arabic thousands separator
            | '\u{066D}' // Arabic five pointed star
            | '\u{06D4}' // Arabic full stop
            | '«' | '»' | '“' | '”' | '‘' | '’' | '…' | '–' | '—'
        )
}

fn is_arabic_block(c: char) -> bool {
    matches!(c, '\u{0600}'..='\u{06FF}' | '\u{0750}'..='\u{077F}')
}

/// Non-Arabic means outside the Arabic blocks, keeping whitespace and digits
/// so verse numbers survive cleaning.
fn is_non_arabic(c: char) -> bool {
    !is_arabic_block(c) && !c.is_whitespace() && !c.is_ascii_digit()
}

/// Apply the configured cleaning steps. Deterministic and idempotent; the
/// all-false config returns the input unchanged.
pub fn normalize_text(raw: &str, cfg: &NormalizationConfig) -> String {
    if cfg.is_identity() {
        return raw.to_string();
    }
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for c in raw.chars() {
        if (cfg.strip_diacritics && is_arabic_diacritic(c))
            || (cfg.strip_punctuation && is_punctuation(c))
            || (cfg.strip_non_arabic && is_non_arabic(c))
        {
            continue;
        }
        if cfg.collapse_whitespace {
            if c.is_whitespace() {
                pending_space = !out.is_empty();
            } else {
                if pending_space {
                    out.push(' ');
                    pending_space = false;
                }
                out.push(c);
            }
        } else {
            out.push(c);
        }
    }
    if cfg.collapse_whitespace {
        out
    } else {
        // Stripping characters can leave stray edge whitespace; any active
        // flag trims the edges so cleaned text never starts or ends blank.
        out.trim().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusKind {
    Fatwa,
    Tafseer,
    Quran,
}

/// One paragraph of the pretraining corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusBlock {
    pub kind: CorpusKind,
    pub text: String,
}

const BLOCK_SEPARATOR: char = '\n';

/// Question first, then the mufti's answer.
pub fn format_fatwa(
    question: &str,
    answer: &str,
    cfg: &NormalizationConfig,
) -> Result<CorpusBlock, TextnormError> {
    let q = normalize_text(question, cfg);
    let a = normalize_text(answer, cfg);
    if q.is_empty() {
        return Err(TextnormError::EmptyField("question"));
    }
    if a.is_empty() {
        return Err(TextnormError::EmptyField("answer"));
    }
    Ok(CorpusBlock {
        kind: CorpusKind::Fatwa,
        text: format!("{q}{BLOCK_SEPARATOR}{a}"),
    })
}

/// Context (passage/verse) first, then the question, then the explanation.
pub fn format_tafseer(
    context: &str,
    question: &str,
    explanation: &str,
    cfg: &NormalizationConfig,
) -> Result<CorpusBlock, TextnormError> {
    let c = normalize_text(context, cfg);
    let q = normalize_text(question, cfg);
    let e = normalize_text(explanation, cfg);
    if c.is_empty() {
        return Err(TextnormError::EmptyField("context"));
    }
    if q.is_empty() {
        return Err(TextnormError::EmptyField("question"));
    }
    if e.is_empty() {
        return Err(TextnormError::EmptyField("explanation"));
    }
    Ok(CorpusBlock {
        kind: CorpusKind::Tafseer,
        text: format!("{c}{BLOCK_SEPARATOR}{q}{BLOCK_SEPARATOR}{e}"),
    })
}

/// Qur'an text is added as-is (normalized only).
pub fn format_quran(text: &str, cfg: &NormalizationConfig) -> Result<CorpusBlock, TextnormError> {
    let t = normalize_text(text, cfg);
    if t.is_empty() {
        return Err(TextnormError::EmptyField("text"));
    }
    Ok(CorpusBlock {
        kind: CorpusKind::Quran,
        text: t,
    })
}

/// Deterministic seeded shuffle followed by a train/validation split.
/// Validation gets the floor of `(1 - train_fraction) * n`.
pub fn split_corpus(
    blocks: &[CorpusBlock],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<CorpusBlock>, Vec<CorpusBlock>), TextnormError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(TextnormError::BadFraction(train_fraction));
    }
    let mut shuffled: Vec<CorpusBlock> = blocks.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    let n = shuffled.len();
    let n_train = ((n as f64) * train_fraction).ceil().min(n as f64) as usize;
    let validation = shuffled.split_off(n_train);
    Ok((shuffled, validation))
}

/// Sidecar manifest row: byte offset and length of one block in the corpus
/// file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub kind: CorpusKind,
    pub offset: usize,
    pub length: usize,
}

/// Write blocks blank-line separated, plus a JSON-lines manifest recording
/// each block's kind and byte extent.
pub fn write_corpus(
    blocks: &[CorpusBlock],
    corpus_path: &Path,
    manifest_path: &Path,
) -> Result<(), TextnormError> {
    let mut corpus = std::fs::File::create(corpus_path)?;
    let mut manifest = std::fs::File::create(manifest_path)?;
    let mut offset = 0usize;
    for (i, block) in blocks.iter().enumerate() {
        if i > 0 {
            corpus.write_all(b"\n\n")?;
            offset += 2;
        }
        let bytes = block.text.as_bytes();
        corpus.write_all(bytes)?;
        let entry = ManifestEntry {
            kind: block.kind,
            offset,
            length: bytes.len(),
        };
        serde_json::to_writer(&mut manifest, &entry).map_err(std::io::Error::from)?;
        manifest.write_all(b"\n")?;
        offset += bytes.len();
    }
    corpus.write_all(b"\n")?;
    Ok(())
}
