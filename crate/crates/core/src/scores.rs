//! Span probability tables and the scorer interface.

use std::collections::{HashMap, HashSet};

use spanseg_neural::sigmoid;

use crate::corpus::Corpus;
use crate::data::{Segmenter, SentenceInput};
use crate::decoder;
use crate::error::{Error, Result};
use crate::span::{enumerate_spans, enumerated_count, Span};

/// Largest probability strictly below 1.
const PROB_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

/// Probabilities for every candidate span `(l, r)` of a sentence with
/// `r - l <= max_width`, stored in enumeration order.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    n: usize,
    max_width: usize,
    offsets: Vec<usize>,
    probs: Vec<f64>,
}

impl ScoreTable {
    fn layout(n: usize, max_width: usize) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(n + 1);
        let mut acc = 0;
        for l in 0..n {
            offsets.push(acc);
            acc += max_width.min(n - l);
        }
        offsets.push(acc);
        offsets
    }

    /// Builds a table from probabilities listed in enumeration order.
    pub fn from_probs(n: usize, max_width: usize, probs: Vec<f64>) -> Result<Self> {
        if n == 0 || max_width == 0 {
            return Err(Error::Format(
                "score table needs n >= 1 and max_width >= 1".into(),
            ));
        }
        if probs.len() != enumerated_count(n, max_width) {
            return Err(Error::Format(format!(
                "score table for n={n}, width {max_width} needs {} entries, got {}",
                enumerated_count(n, max_width),
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::Format(format!("probability {p} outside (0, 1)")));
        }
        Ok(Self {
            n,
            max_width,
            offsets: Self::layout(n, max_width),
            probs,
        })
    }

    /// Builds a table by applying the logistic function to logits given in
    /// enumeration order. Saturated values are kept strictly inside (0, 1).
    pub fn from_logits(n: usize, max_width: usize, logits: &[f64]) -> Result<Self> {
        let probs = logits
            .iter()
            .map(|&x| sigmoid(x).clamp(f64::MIN_POSITIVE, PROB_MAX))
            .collect();
        Self::from_probs(n, max_width, probs)
    }

    pub fn from_fn(n: usize, max_width: usize, f: impl Fn(Span) -> f64) -> Result<Self> {
        let probs = enumerate_spans(n, max_width).into_iter().map(f).collect();
        Self::from_probs(n, max_width, probs)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn max_width(&self) -> usize {
        self.max_width
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, span: Span) -> Option<f64> {
        if span.l >= span.r || span.r > self.n || span.width() > self.max_width {
            return None;
        }
        Some(self.probs[self.offsets[span.l] + span.width() - 1])
    }

    /// Score of the single-token span `(i, i + 1)`.
    pub fn single(&self, i: usize) -> f64 {
        self.probs[self.offsets[i]]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Span, f64)> + '_ {
        enumerate_spans(self.n, self.max_width)
            .into_iter()
            .zip(self.probs.iter().copied())
    }
}

/// Anything that can score every candidate span of a sentence.
pub trait SpanScorer {
    fn score_table(&self, input: &SentenceInput<'_>) -> Result<ScoreTable>;

    /// Decision threshold on span probabilities.
    fn threshold(&self) -> f64 {
        0.5
    }
}

impl<T: SpanScorer> Segmenter for T {
    fn segment(&self, input: &SentenceInput<'_>) -> Result<Vec<Span>> {
        let table = self.score_table(input)?;
        Ok(decoder::decode(&table, self.threshold())?.spans)
    }
}

/// Test scorer that knows the gold segmentation of a fixed set of sentences:
/// gold spans score `high`, everything else `low`.
#[derive(Clone, Debug)]
pub struct OracleScorer {
    gold: HashMap<Vec<String>, HashSet<Span>>,
    max_width: usize,
    high: f64,
    low: f64,
}

impl OracleScorer {
    pub fn from_corpus(corpus: &Corpus, max_width: usize) -> Self {
        let gold = corpus
            .sentences
            .iter()
            .map(|s| (s.tokens.clone(), s.spans.iter().copied().collect()))
            .collect();
        Self {
            gold,
            max_width,
            high: 0.99,
            low: 0.01,
        }
    }
}

impl SpanScorer for OracleScorer {
    fn score_table(&self, input: &SentenceInput<'_>) -> Result<ScoreTable> {
        let gold = self.gold.get(input.tokens).ok_or_else(|| {
            Error::MissingFeature(format!(
                "oracle has no gold segmentation for {:?}",
                input.tokens.join(" ")
            ))
        })?;
        ScoreTable::from_fn(input.len(), self.max_width, |s| {
            if gold.contains(&s) {
                self.high
            } else {
                self.low
            }
        })
    }
}
