//! Word-level precision/recall/F, OOV recall and the three-token
//! overlapping-ambiguity analysis.

use std::collections::HashSet;
use std::fmt;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::span::{is_partition, spans_to_bies, spans_to_words, BiesTag, Span};

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

fn sentence_len(spans: &[Span]) -> usize {
    spans.last().map_or(0, |s| s.r)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub matched: usize,
    pub gold: usize,
    pub predicted: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when the gold side has no out-of-vocabulary words.
    pub oov_recall: Option<f64>,
}

fn check_aligned(gold: &[Vec<Span>], pred: &[Vec<Span>]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::Misaligned(format!(
            "{} gold sentences vs {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        let n = sentence_len(g);
        if sentence_len(p) != n || !is_partition(g, n) || !is_partition(p, n) {
            return Err(Error::Misaligned(format!(
                "sentence {}: gold covers {n} tokens, prediction covers {}",
                i + 1,
                sentence_len(p)
            )));
        }
    }
    Ok(())
}

/// Precision, recall and F over word spans, as percentages.
pub fn prf(gold: &[Vec<Span>], pred: &[Vec<Span>]) -> Result<EvalReport> {
    check_aligned(gold, pred)?;
    let mut matched = 0;
    for (g, p) in gold.iter().zip(pred) {
        let gs: HashSet<&Span> = g.iter().collect();
        matched += p.iter().filter(|s| gs.contains(s)).count();
    }
    let n_gold: usize = gold.iter().map(Vec::len).sum();
    let n_pred: usize = pred.iter().map(Vec::len).sum();
    let precision = pct(matched, n_pred);
    let recall = pct(matched, n_gold);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(EvalReport {
        matched,
        gold: n_gold,
        predicted: n_pred,
        precision,
        recall,
        f1,
        oov_recall: None,
    })
}

/// Share of gold words unknown to `is_known` that are recovered exactly.
/// `None` when there are no such words.
pub fn oov_recall(
    gold: &Corpus,
    pred: &[Vec<Span>],
    is_known: impl Fn(&str) -> bool,
) -> Result<Option<f64>> {
    let gold_spans: Vec<Vec<Span>> = gold.sentences.iter().map(|s| s.spans.clone()).collect();
    check_aligned(&gold_spans, pred)?;
    let joiner = gold.language.joiner();
    let mut total = 0;
    let mut found = 0;
    for (s, p) in gold.sentences.iter().zip(pred) {
        let words = spans_to_words(&s.spans, &s.tokens, joiner)?;
        let ps: HashSet<&Span> = p.iter().collect();
        for (span, word) in s.spans.iter().zip(words) {
            if !is_known(&word) {
                total += 1;
                if ps.contains(span) {
                    found += 1;
                }
            }
        }
    }
    Ok((total > 0).then(|| pct(found, total)))
}

/// Scores a predicted corpus against gold. OOV recall is computed when a
/// set of training words is supplied.
pub fn evaluate(
    gold: &Corpus,
    pred: &Corpus,
    train_words: Option<&HashSet<String>>,
) -> Result<EvalReport> {
    for (i, (g, p)) in gold.sentences.iter().zip(&pred.sentences).enumerate() {
        if g.tokens != p.tokens {
            return Err(Error::Misaligned(format!(
                "sentence {}: gold and prediction have different tokens",
                i + 1
            )));
        }
    }
    let g: Vec<Vec<Span>> = gold.sentences.iter().map(|s| s.spans.clone()).collect();
    let p: Vec<Vec<Span>> = pred.sentences.iter().map(|s| s.spans.clone()).collect();
    let mut report = prf(&g, &p)?;
    if let Some(words) = train_words {
        report.oov_recall = oov_recall(gold, &p, |w| words.contains(w))?;
    }
    Ok(report)
}

fn fmt_pct(v: f64) -> String {
    format!("{v:.2}")
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let oov = self.oov_recall.map_or_else(|| "n/a".to_string(), fmt_pct);
        writeln!(f, "{:>8} {:>8} {:>8} {:>8}", "P", "R", "F", "R_OOV")?;
        writeln!(
            f,
            "{:>8} {:>8} {:>8} {:>8}",
            fmt_pct(self.precision),
            fmt_pct(self.recall),
            fmt_pct(self.f1),
            oov
        )?;
        writeln!(f)?;
        writeln!(f, "precision={}", fmt_pct(self.precision))?;
        writeln!(f, "recall={}", fmt_pct(self.recall))?;
        writeln!(f, "f1={}", fmt_pct(self.f1))?;
        writeln!(f, "oov_recall={oov}")?;
        writeln!(f, "matched={}", self.matched)?;
        writeln!(f, "gold_words={}", self.gold)?;
        write!(f, "predicted_words={}", self.predicted)
    }
}

/// Outcome of one system on one ambiguous window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowOutcome {
    Correct,
    Incorrect,
    /// Neither the gold pattern nor its mirror.
    Uncounted,
}

const BES: [BiesTag; 3] = [BiesTag::B, BiesTag::E, BiesTag::S];
const SBE: [BiesTag; 3] = [BiesTag::S, BiesTag::B, BiesTag::E];

/// Classifies a predicted window against a gold window that is `B E S` or
/// `S B E`. Returns `None` when the gold window is neither.
pub fn classify_window(gold: &[BiesTag], pred: &[BiesTag]) -> Option<WindowOutcome> {
    let mirror = if gold == BES {
        SBE
    } else if gold == SBE {
        BES
    } else {
        return None;
    };
    Some(if pred == gold {
        WindowOutcome::Correct
    } else if pred == mirror {
        WindowOutcome::Incorrect
    } else {
        WindowOutcome::Uncounted
    })
}

/// Joint outcomes of two systems over ambiguous three-token windows.
/// Joint cells only include windows both systems answered with the gold
/// pattern or its mirror; the per-system tallies count each system alone.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AmbiguityReport {
    pub both_wrong: usize,
    pub a_right_b_wrong: usize,
    pub a_wrong_b_right: usize,
    pub both_right: usize,
    pub a_correct: usize,
    pub a_incorrect: usize,
    pub b_correct: usize,
    pub b_incorrect: usize,
    /// Gold windows equal to `B E S` or `S B E`.
    pub windows: usize,
}

fn check_tags(what: &str, gold: &[Vec<BiesTag>], other: &[Vec<BiesTag>]) -> Result<()> {
    if gold.len() != other.len() {
        return Err(Error::Misaligned(format!(
            "{} gold sentences vs {} in {what}",
            gold.len(),
            other.len()
        )));
    }
    for (i, (g, o)) in gold.iter().zip(other).enumerate() {
        if g.len() != o.len() {
            return Err(Error::Misaligned(format!(
                "sentence {}: {} gold tags vs {} in {what}",
                i + 1,
                g.len(),
                o.len()
            )));
        }
    }
    Ok(())
}

/// Scans every window of three consecutive tokens (stride 1).
pub fn ambiguity_stats(
    gold: &[Vec<BiesTag>],
    a: &[Vec<BiesTag>],
    b: &[Vec<BiesTag>],
) -> Result<AmbiguityReport> {
    check_tags("system a", gold, a)?;
    check_tags("system b", gold, b)?;
    let mut r = AmbiguityReport::default();
    for ((g, ta), tb) in gold.iter().zip(a).zip(b) {
        if g.len() < 3 {
            continue;
        }
        for i in 0..g.len() - 2 {
            let w = &g[i..i + 3];
            let (Some(oa), Some(ob)) = (
                classify_window(w, &ta[i..i + 3]),
                classify_window(w, &tb[i..i + 3]),
            ) else {
                continue;
            };
            r.windows += 1;
            match oa {
                WindowOutcome::Correct => r.a_correct += 1,
                WindowOutcome::Incorrect => r.a_incorrect += 1,
                WindowOutcome::Uncounted => {}
            }
            match ob {
                WindowOutcome::Correct => r.b_correct += 1,
                WindowOutcome::Incorrect => r.b_incorrect += 1,
                WindowOutcome::Uncounted => {}
            }
            match (oa, ob) {
                (WindowOutcome::Incorrect, WindowOutcome::Incorrect) => r.both_wrong += 1,
                (WindowOutcome::Correct, WindowOutcome::Incorrect) => r.a_right_b_wrong += 1,
                (WindowOutcome::Incorrect, WindowOutcome::Correct) => r.a_wrong_b_right += 1,
                (WindowOutcome::Correct, WindowOutcome::Correct) => r.both_right += 1,
                _ => {}
            }
        }
    }
    Ok(r)
}

/// Converts aligned segmented corpora to tag sequences and runs
/// [`ambiguity_stats`].
pub fn analyze_corpora(gold: &Corpus, a: &Corpus, b: &Corpus) -> Result<AmbiguityReport> {
    let tags = |c: &Corpus| -> Result<Vec<Vec<BiesTag>>> {
        c.sentences
            .iter()
            .map(|s| spans_to_bies(&s.spans))
            .collect()
    };
    for (name, other) in [("system a", a), ("system b", b)] {
        if other.len() != gold.len() {
            return Err(Error::Misaligned(format!(
                "{} gold sentences vs {} in {name}",
                gold.len(),
                other.len()
            )));
        }
        for (i, (g, o)) in gold.sentences.iter().zip(&other.sentences).enumerate() {
            if g.tokens != o.tokens {
                return Err(Error::Misaligned(format!(
                    "sentence {}: {name} has different tokens from gold",
                    i + 1
                )));
            }
        }
    }
    ambiguity_stats(&tags(gold)?, &tags(a)?, &tags(b)?)
}

impl fmt::Display for AmbiguityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<4} {:<4} {:>8}", "A", "B", "count")?;
        writeln!(f, "{:<4} {:<4} {:>8}", "✗", "✗", self.both_wrong)?;
        writeln!(f, "{:<4} {:<4} {:>8}", "✓", "✗", self.a_right_b_wrong)?;
        writeln!(f, "{:<4} {:<4} {:>8}", "✗", "✓", self.a_wrong_b_right)?;
        writeln!(f)?;
        writeln!(f, "both_wrong={}", self.both_wrong)?;
        writeln!(f, "a_right_b_wrong={}", self.a_right_b_wrong)?;
        writeln!(f, "a_wrong_b_right={}", self.a_wrong_b_right)?;
        writeln!(f, "both_right={}", self.both_right)?;
        writeln!(f, "a_correct={}", self.a_correct)?;
        writeln!(f, "a_incorrect={}", self.a_incorrect)?;
        writeln!(f, "b_correct={}", self.b_correct)?;
        writeln!(f, "b_incorrect={}", self.b_incorrect)?;
        write!(f, "windows={}", self.windows)
    }
}
