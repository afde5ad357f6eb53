#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::Rng;
use spanseg::corpus::{Corpus, Language, SegmentedSentence};
use spanseg::span::Span;
use spanseg::SpanSegConfig;
use spanseg_neural::seeded_rng;

/// Synthetic Vietnamese-style corpus: a lexicon of words of 1 to 3
/// syllables drawn from `syllables` distinct syllables, and `sentences`
/// sentences of 3 to 8 lexicon words.
pub fn synthetic_corpus(sentences: usize, syllables: usize, seed: u64) -> Corpus {
    let mut rng = seeded_rng(seed);
    let syl: Vec<String> = (0..syllables).map(|i| format!("s{i:02}")).collect();
    let lexicon: Vec<Vec<String>> = (0..40)
        .map(|_| {
            let w = rng.random_range(1..=3);
            (0..w)
                .map(|_| syl.choose(&mut rng).unwrap().clone())
                .collect()
        })
        .collect();
    let sentences = (0..sentences)
        .map(|_| {
            let k = rng.random_range(3..=8);
            let words = (0..k)
                .map(|_| lexicon.choose(&mut rng).unwrap().clone())
                .collect();
            SegmentedSentence::from_words(words).unwrap()
        })
        .collect();
    Corpus {
        sentences,
        language: Language::Vietnamese,
    }
}

/// A small configuration that trains in seconds.
pub fn small_config(seed: u64) -> SpanSegConfig {
    SpanSegConfig {
        d_static: 16,
        d_dynamic: 16,
        d_char: 16,
        d_char_emb: 8,
        layers: 1,
        hidden: 32,
        mlp_dim: 32,
        dropout: 0.1,
        lr: 5e-3,
        batch_token_budget: 40,
        max_epochs: 100,
        seed,
        ..Default::default()
    }
}

pub fn spans(v: &[(usize, usize)]) -> Vec<Span> {
    v.iter().map(|&(l, r)| Span::new(l, r).unwrap()).collect()
}

/// Step-by-step reimplementation of span post-processing on plain tuples.
/// `scorer(l, r)` must be defined for every span it is asked about;
/// `y_hat` is the thresholded span set in ascending order.
pub fn reference_post_processing(
    n: usize,
    scorer: &dyn Fn(usize, usize) -> f64,
    y_hat: &[(usize, usize)],
) -> Vec<(usize, usize)> {
    let mut s_novlp: Vec<(usize, usize)> = vec![(0, 0)];
    let mut s_hat: Vec<(usize, usize)> = vec![];
    for y in y_hat {
        if s_novlp[s_novlp.len() - 1].1 < y.0 {
            let last = s_novlp[s_novlp.len() - 1];
            s_novlp.push((last.1, y.0));
        }
        let last = s_novlp[s_novlp.len() - 1];
        if last.0 <= y.0 && y.0 < last.1 {
            if scorer(last.0, last.1) < scorer(y.0, y.1) {
                s_novlp.pop();
                s_novlp.push((y.0, y.1));
            }
        } else {
            s_novlp.push((y.0, y.1));
        }
    }
    if s_novlp[s_novlp.len() - 1].1 < n {
        let last = s_novlp[s_novlp.len() - 1];
        s_novlp.push((last.1, n));
    }
    for (i, y) in s_novlp.iter().enumerate() {
        if 0 < i && s_novlp[i - 1].1 < y.0 {
            let mut missed_boundaries = vec![s_novlp[i - 1].1];
            for bound in s_novlp[i - 1].1..y.0 {
                if scorer(bound, bound + 1) > 0.5 {
                    missed_boundaries.push(bound + 1);
                }
            }
            missed_boundaries.push(y.0);
            for j in 0..missed_boundaries.len() - 1 {
                s_hat.push((missed_boundaries[j], missed_boundaries[j + 1]));
            }
        }
        s_hat.push((y.0, y.1));
    }
    s_hat.into_iter().filter(|(l, r)| l < r).collect()
}
