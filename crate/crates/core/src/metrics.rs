//! Rank-aware evaluation: token F1, Exact Match, F1@1 and partial
//! Reciprocal Rank (pRR), plus aggregate reporting over a run file.
//!
//! All comparisons are over normalized whitespace tokens (diacritics and
//! punctuation removed first), so whitespace-only differences never change
//! a score. F1 uses token multisets, matching the SQuAD reference behavior
//! for repeated tokens.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{QuestionRecord, RunEntry, RUN_ANSWER_CAP};
use crate::scalar::Scalar;
use crate::textnorm::{normalize_text, NormalizationConfig};
use crate::Score;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("run contains pq_id `{0}` absent from the gold dataset")]
    UnknownId(String),
}

/// Normalized whitespace tokens used by every metric.
pub fn metric_tokens(text: &str) -> Vec<String> {
    normalize_text(text, &NormalizationConfig::comparison())
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn counts(tokens: &[String]) -> HashMap<&str, usize> {
    let mut map = HashMap::new();
    for t in tokens {
        *map.entry(t.as_str()).or_insert(0) += 1;
    }
    map
}

/// Token-multiset F1 between a prediction and one gold answer.
pub fn token_f1<S: Scalar>(pred: &str, gold: &str) -> S {
    let pred_tokens = metric_tokens(pred);
    let gold_tokens = metric_tokens(gold);
    if pred_tokens.is_empty() && gold_tokens.is_empty() {
        return S::one();
    }
    if pred_tokens.is_empty() || gold_tokens.is_empty() {
        return S::zero();
    }
    let gold_counts = counts(&gold_tokens);
    let common: usize = counts(&pred_tokens)
        .iter()
        .map(|(t, &c)| c.min(*gold_counts.get(t).unwrap_or(&0)))
        .sum();
    if common == 0 {
        return S::zero();
    }
    let common = S::from_usize(common).unwrap();
    let precision = common / S::from_usize(pred_tokens.len()).unwrap();
    let recall = common / S::from_usize(gold_tokens.len()).unwrap();
    (S::one() + S::one()) * precision * recall / (precision + recall)
}

fn best_f1<S: Scalar>(pred: &str, golds: &[String]) -> S {
    golds
        .iter()
        .map(|g| token_f1::<S>(pred, g))
        .fold(S::zero(), |a, b| if b > a { b } else { a })
}

/// 1 iff the normalized prediction equals any normalized gold answer.
pub fn exact_match(pred: &str, golds: &[String]) -> u8 {
    let pred = metric_tokens(pred);
    u8::from(golds.iter().any(|g| metric_tokens(g) == pred))
}

/// Best-gold token F1 of the rank-1 answer; 0 for an empty ranked list.
pub fn f1_at_1<S: Scalar>(ranked: &[String], golds: &[String]) -> S {
    match ranked.first() {
        Some(top) => best_f1(top, golds),
        None => S::zero(),
    }
}

/// Partial Reciprocal Rank over at most [`RUN_ANSWER_CAP`] answers: the
/// best-gold F1 at the first rank with any token overlap, divided by that
/// rank; 0 when no rank overlaps.
pub fn prr<S: Scalar>(ranked: &[String], golds: &[String]) -> S {
    for (i, answer) in ranked.iter().take(RUN_ANSWER_CAP).enumerate() {
        let f1 = best_f1::<S>(answer, golds);
        if f1 > S::zero() {
            return f1 / S::from_usize(i + 1).unwrap();
        }
    }
    S::zero()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuestionScores {
    pub prr: Score,
    pub em: Score,
    pub f1_at_1: Score,
}

/// Per-question and aggregate scores for one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_question: BTreeMap<String, QuestionScores>,
    pub aggregate: QuestionScores,
    pub n_questions: usize,
    /// Gold questions the run did not answer (scored 0).
    pub missing: Vec<String>,
}

impl EvalReport {
    /// One CSV row shaped like a results-table line.
    pub fn csv_row(&self) -> String {
        format!(
            "n_questions,prr,exact_match,f1_at_1\n{},{:.6},{:.6},{:.6}\n",
            self.n_questions, self.aggregate.prr, self.aggregate.em, self.aggregate.f1_at_1
        )
    }
}

/// Score a run against gold records. Every run id must exist in the gold
/// set; gold questions missing from the run are scored 0 and flagged.
pub fn evaluate_run(
    run: &[RunEntry],
    gold: &[QuestionRecord],
) -> Result<EvalReport, MetricsError> {
    let gold_ids: HashMap<&str, &QuestionRecord> =
        gold.iter().map(|r| (r.pq_id.as_str(), r)).collect();
    let mut answered: HashMap<&str, Vec<String>> = HashMap::new();
    for entry in run {
        if !gold_ids.contains_key(entry.pq_id.as_str()) {
            return Err(MetricsError::UnknownId(entry.pq_id.clone()));
        }
        let mut ranked: Vec<(usize, String)> = entry
            .answers
            .iter()
            .map(|a| (a.rank, a.text.clone()))
            .collect();
        ranked.sort_by_key(|(rank, _)| *rank);
        answered.insert(
            entry.pq_id.as_str(),
            ranked.into_iter().map(|(_, t)| t).collect(),
        );
    }

    let mut per_question = BTreeMap::new();
    let mut missing = Vec::new();
    for record in gold {
        let golds: Vec<String> = record.answers.iter().map(|a| a.text.clone()).collect();
        let scores = match answered.get(record.pq_id.as_str()) {
            Some(ranked) => QuestionScores {
                prr: prr(ranked, &golds),
                em: Score::from(
                    ranked
                        .first()
                        .map_or(0, |top| exact_match(top, &golds)),
                ),
                f1_at_1: f1_at_1(ranked, &golds),
            },
            None => {
                missing.push(record.pq_id.clone());
                QuestionScores {
                    prr: 0.0,
                    em: 0.0,
                    f1_at_1: 0.0,
                }
            }
        };
        per_question.insert(record.pq_id.clone(), scores);
    }
    missing.sort();

    let n = per_question.len();
    let mean = |f: fn(&QuestionScores) -> Score| -> Score {
        per_question.values().map(f).sum::<Score>() / n as Score
    };
    Ok(EvalReport {
        aggregate: QuestionScores {
            prr: mean(|s| s.prr),
            em: mean(|s| s.em),
            f1_at_1: mean(|s| s.f1_at_1),
        },
        n_questions: n,
        per_question,
        missing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{GoldAnswer, RankedAnswer, Source};

    fn strs(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn f1_partial_overlap() {
        // P = 1, R = 2/3, F1 = 0.8
        assert_eq!(token_f1::<f64>("a b", "a b c"), 0.8);
    }

    #[test]
    fn f1_identical_strings() {
        assert_eq!(token_f1::<f64>("قل هو", "قل هو"), 1.0);
    }

    #[test]
    fn f1_disjoint_tokens() {
        assert_eq!(token_f1::<f64>("a b", "c d"), 0.0);
    }

    #[test]
    fn f1_uses_multisets() {
        // pred has one "a", gold has two: common = 1, P = 1, R = 1/2
        let f1 = token_f1::<f64>("a", "a a");
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn f1_whitespace_invariant() {
        assert_eq!(token_f1::<f64>("a  b", " a b "), 1.0);
    }

    #[test]
    fn exact_match_cases() {
        assert_eq!(exact_match("a b", &strs(&["a b"])), 1);
        assert_eq!(exact_match("a b c", &strs(&["a b"])), 0);
        assert_eq!(exact_match("x", &strs(&["y", "x"])), 1);
    }

    #[test]
    fn f1_at_1_cases() {
        assert_eq!(f1_at_1::<f64>(&strs(&["a b c"]), &strs(&["a b c"])), 1.0);
        assert_eq!(
            f1_at_1::<f64>(&strs(&["a b", "z"]), &strs(&["a b c", "x"])),
            0.8
        );
        assert_eq!(f1_at_1::<f64>(&[], &strs(&["a"])), 0.0);
    }

    #[test]
    fn prr_cases() {
        assert_eq!(prr::<f64>(&strs(&["a b c"]), &strs(&["a b c"])), 1.0);
        // rank 1 disjoint, rank 2 F1 = 0.8 -> 0.4
        assert_eq!(prr::<f64>(&strs(&["z z", "a b"]), &strs(&["a b c"])), 0.4);
        assert_eq!(
            prr::<f64>(&strs(&["z", "z", "z", "z", "z"]), &strs(&["a"])),
            0.0
        );
        // answers past rank 5 never count
        assert_eq!(
            prr::<f64>(&strs(&["z", "z", "z", "z", "z", "a"]), &strs(&["a"])),
            0.0
        );
    }

    #[test]
    fn prr_ignores_ranks_below_first_match() {
        let golds = strs(&["a b c"]);
        let base = prr::<f64>(&strs(&["z", "a b", "q", "r"]), &golds);
        let permuted = prr::<f64>(&strs(&["z", "a b", "r", "q"]), &golds);
        assert_eq!(base, permuted);
    }

    fn gold_record(pq_id: &str, answers: &[&str]) -> QuestionRecord {
        let passage = answers.join(" ");
        let mut start = 0;
        let answers = answers
            .iter()
            .map(|a| {
                let g = GoldAnswer {
                    text: a.to_string(),
                    start_char: start,
                };
                start += a.chars().count() + 1;
                g
            })
            .collect();
        QuestionRecord {
            pq_id: pq_id.to_string(),
            passage,
            question: "q".to_string(),
            answers,
            source: Source::Qrcd,
        }
    }

    fn run_entry(pq_id: &str, answers: &[&str]) -> RunEntry {
        RunEntry {
            pq_id: pq_id.to_string(),
            answers: answers
                .iter()
                .enumerate()
                .map(|(i, a)| RankedAnswer {
                    text: a.to_string(),
                    rank: i + 1,
                    score: 1.0 - 0.1 * i as f64,
                    span: None,
                    recommended: false,
                })
                .collect(),
        }
    }

    #[test]
    fn perfect_single_question() {
        let gold = vec![gold_record("q1", &["a b"])];
        let run = vec![run_entry("q1", &["a b"])];
        let report = evaluate_run(&run, &gold).unwrap();
        let s = report.per_question["q1"];
        assert_eq!((s.prr, s.em, s.f1_at_1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn missing_question_scores_zero_and_is_flagged() {
        let gold = vec![gold_record("q1", &["a"]), gold_record("q2", &["b"])];
        let run = vec![run_entry("q1", &["a"])];
        let report = evaluate_run(&run, &gold).unwrap();
        assert_eq!(report.missing, vec!["q2".to_string()]);
        assert_eq!(report.aggregate.prr, 0.5);
        assert_eq!(report.aggregate.em, 0.5);
        assert_eq!(report.aggregate.f1_at_1, 0.5);
    }

    #[test]
    fn unknown_run_id_is_an_error() {
        let gold = vec![gold_record("q1", &["a"])];
        let run = vec![run_entry("zz", &["a"])];
        assert!(matches!(
            evaluate_run(&run, &gold),
            Err(MetricsError::UnknownId(_))
        ));
    }

    #[test]
    fn aggregate_is_the_mean() {
        let gold = vec![
            gold_record("q1", &["a b"]),
            gold_record("q2", &["x"]),
            gold_record("q3", &["y"]),
        ];
        let run = vec![
            run_entry("q1", &["a b"]),
            run_entry("q2", &["wrong"]),
            run_entry("q3", &["y"]),
        ];
        let report = evaluate_run(&run, &gold).unwrap();
        let mean: f64 = report.per_question.values().map(|s| s.prr).sum::<f64>() / 3.0;
        assert!((report.aggregate.prr - mean).abs() < 1e-12);
    }

    #[test]
    fn em_f1_prr_ordering_chain() {
        let gold = vec![gold_record("q1", &["a b c"])];
        for answers in [
            vec!["a b c"],
            vec!["a b"],
            vec!["z", "a b"],
            vec!["z"],
        ] {
            let run = vec![run_entry("q1", &answers)];
            let s = evaluate_run(&run, &gold).unwrap().per_question["q1"];
            assert!(s.em <= s.f1_at_1 + 1e-15);
            if s.f1_at_1 > 0.0 {
                assert!((s.prr - s.f1_at_1).abs() < 1e-15);
            } else {
                assert!(s.prr >= 0.0);
            }
        }
    }
}
