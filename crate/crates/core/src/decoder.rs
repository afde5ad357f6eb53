//! From span probabilities to a segmentation.
//!
//! Spans scoring above the threshold are collected in ascending order, and
//! a greedy two-pass post-processing turns them into a partition: the first
//! pass fills gaps in front of each span and resolves overlaps by keeping
//! the higher-scoring span; the second pass splits the gaps left behind by
//! evicted spans at confidently predicted single-token words.

use crate::error::{Error, Result};
use crate::scores::ScoreTable;
use crate::span::Span;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredSpan {
    pub span: Span,
    pub score: f64,
}

/// Where an output span came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    /// A thresholded prediction that survived overlap resolution.
    Predicted,
    /// A gap filled during the first pass, before a span or at the end.
    GapFill,
    /// A fragment of a gap that opened when a span was evicted.
    Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segmentation {
    pub spans: Vec<Span>,
    pub provenance: Vec<Provenance>,
}

/// Entries scoring strictly above `threshold`, ascending by `(l, r)`.
pub fn predict_spans(table: &ScoreTable, threshold: f64) -> Vec<ScoredSpan> {
    // the table iterates in enumeration order, which is already ascending
    table
        .iter()
        .filter(|&(_, p)| p > threshold)
        .map(|(span, score)| ScoredSpan { span, score })
        .collect()
}

/// Greedy post-processing of thresholded spans into a partition of `[0, n)`.
///
/// `single_score(i)` is the score of the single-token span `(i, i + 1)`.
/// Overlaps keep the incumbent unless the newcomer scores strictly higher.
pub fn span_post_processing(
    predicted: &[ScoredSpan],
    single_score: impl Fn(usize) -> f64,
    n: usize,
    threshold: f64,
) -> Result<Segmentation> {
    if n == 0 {
        return Err(Error::Format(
            "cannot post-process an empty sentence".into(),
        ));
    }
    for pair in predicted.windows(2) {
        if pair[0].span >= pair[1].span {
            return Err(Error::Format(format!(
                "predicted spans must be strictly ascending: {} before {}",
                pair[0].span, pair[1].span
            )));
        }
    }
    if let Some(bad) = predicted.iter().find(|s| s.span.is_empty() || s.span.r > n) {
        return Err(Error::InvalidSpan {
            l: bad.span.l,
            r: bad.span.r,
        });
    }

    struct Kept {
        span: Span,
        score: f64,
        origin: Provenance,
    }
    let gap = |l: usize, r: usize| Kept {
        span: Span::unchecked(l, r),
        score: f64::NEG_INFINITY,
        origin: Provenance::GapFill,
    };

    // first pass, seeded with the zero-length sentinel (0, 0)
    let mut kept = vec![gap(0, 0)];
    for y in predicted {
        let last_end = kept.last().expect("non-empty").span.r;
        if last_end < y.span.l {
            kept.push(gap(last_end, y.span.l));
        }
        let last = kept.last().expect("non-empty");
        let newcomer = Kept {
            span: y.span,
            score: y.score,
            origin: Provenance::Predicted,
        };
        if last.span.l <= y.span.l && y.span.l < last.span.r {
            if last.score < y.score {
                kept.pop();
                kept.push(newcomer);
            }
        } else {
            kept.push(newcomer);
        }
    }
    let last_end = kept.last().expect("non-empty").span.r;
    if last_end < n {
        kept.push(gap(last_end, n));
    }

    // second pass: split gaps opened by evictions at single-token words
    let mut spans = Vec::with_capacity(kept.len());
    let mut provenance = Vec::with_capacity(kept.len());
    for i in 0..kept.len() {
        let y = kept[i].span;
        if i > 0 && kept[i - 1].span.r < y.l {
            let start = kept[i - 1].span.r;
            let mut bounds = vec![start];
            bounds.extend(
                (start..y.l)
                    .filter(|&b| single_score(b) > threshold)
                    .map(|b| b + 1),
            );
            bounds.push(y.l);
            for w in bounds.windows(2) {
                spans.push(Span::unchecked(w[0], w[1]));
                provenance.push(Provenance::Split);
            }
        }
        spans.push(y);
        provenance.push(kept[i].origin);
    }

    // the sentinel and duplicate boundaries leave zero-length spans behind
    let (spans, provenance) = spans
        .into_iter()
        .zip(provenance)
        .filter(|(s, _)| !s.is_empty())
        .unzip();
    Ok(Segmentation { spans, provenance })
}

/// Thresholding followed by post-processing, with single-token scores read
/// from the same table.
pub fn decode(table: &ScoreTable, threshold: f64) -> Result<Segmentation> {
    let predicted = predict_spans(table, threshold);
    span_post_processing(&predicted, |i| table.single(i), table.n(), threshold)
}
