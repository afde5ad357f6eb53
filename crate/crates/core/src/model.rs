//! Biaffine span scorer.

use std::collections::HashSet;

use spanseg_neural::{
    seeded_rng, Gradients, Graph, Mlp, ParamId, ParamStore, SeedRng, Tensor, Var,
};

use crate::config::SpanSegConfig;
use crate::corpus::{StaticEmbeddings, Vocabulary};
use crate::data::SentenceInput;
use crate::encoder::Backbone;
use crate::error::{Error, Result};
use crate::scores::{ScoreTable, SpanScorer};
use crate::span::{enumerate_spans, Span};

/// `[left; 1]ᵀ W right` for one span; `w` has shape `(d + 1) × d`.
pub fn biaffine_score(left: &[f64], right: &[f64], w: &Tensor) -> Result<f64> {
    let d = right.len();
    if left.len() != d || w.shape() != [d + 1, d] {
        return Err(Error::Format(format!(
            "biaffine weight {} does not fit vectors of width {} and {d}",
            w.shape_string(),
            left.len()
        )));
    }
    Ok(left
        .iter()
        .chain(std::iter::once(&1.0))
        .enumerate()
        .map(|(i, li)| li * w.row(i).iter().zip(right).map(|(a, b)| a * b).sum::<f64>())
        .sum())
}

/// Labels for the enumerated spans of a sentence: 1 for gold spans, 0
/// otherwise. Gold spans wider than `max_width` cannot be scored and are
/// returned as the second value so the caller can report them.
pub fn span_labels(n: usize, max_width: usize, gold: &[Span]) -> (Vec<f64>, usize) {
    let gold_set: HashSet<Span> = gold.iter().copied().collect();
    let dropped = gold.iter().filter(|s| s.width() > max_width).count();
    let labels = enumerate_spans(n, max_width)
        .into_iter()
        .map(|s| if gold_set.contains(&s) { 1.0 } else { 0.0 })
        .collect();
    (labels, dropped)
}

/// Mean binary cross-entropy of a score table against gold spans, and the
/// number of gold spans that were too wide to score.
pub fn bce_loss(table: &ScoreTable, gold: &[Span]) -> (f64, usize) {
    let (labels, dropped) = span_labels(table.n(), table.max_width(), gold);
    let total: f64 = table
        .iter()
        .zip(&labels)
        .map(|((_, p), &y)| if y > 0.5 { -p.ln() } else { -(-p).ln_1p() })
        .sum();
    (total / labels.len() as f64, dropped)
}

/// Loss value, parameter gradients and the count of unscorable gold spans
/// for one training sentence.
pub struct SentenceLoss {
    pub value: f64,
    pub grads: Gradients,
    pub dropped_spans: usize,
}

#[derive(Clone, Debug)]
pub struct SpanSegModel {
    pub config: SpanSegConfig,
    pub vocab: Vocabulary,
    pub store: ParamStore,
    backbone: Backbone,
    mlp_left: Mlp,
    mlp_right: Mlp,
    biaffine: ParamId,
}

impl SpanSegModel {
    /// Builds a freshly initialized model. `vocab` should already contain
    /// any tokens covered by `static_vectors`.
    pub fn new(
        config: SpanSegConfig,
        vocab: Vocabulary,
        static_vectors: Option<&StaticEmbeddings>,
    ) -> Result<Self> {
        let mut rng = seeded_rng(config.seed);
        let mut store = ParamStore::new();
        let backbone = Backbone::new(&mut store, &config, &vocab, static_vectors, &mut rng)?;
        let d_in = backbone.fencepost_dim();
        let mlp_left = Mlp::new(
            &mut store,
            "mlp_left",
            d_in,
            config.mlp_dim,
            config.dropout,
            &mut rng,
        );
        let mlp_right = Mlp::new(
            &mut store,
            "mlp_right",
            d_in,
            config.mlp_dim,
            config.dropout,
            &mut rng,
        );
        let biaffine = store.add_glorot("biaffine", config.mlp_dim + 1, config.mlp_dim, &mut rng);
        Ok(Self {
            config,
            vocab,
            store,
            backbone,
            mlp_left,
            mlp_right,
            biaffine,
        })
    }

    pub fn backbone(&self) -> &Backbone {
        &self.backbone
    }

    /// Span logits in enumeration order.
    fn logits(
        &self,
        g: &mut Graph<'_>,
        input: &SentenceInput<'_>,
        mut rng: Option<&mut SeedRng>,
    ) -> Result<Var> {
        let n = input.len();
        let fp = self
            .backbone
            .fenceposts(g, &self.vocab, input, rng.as_deref_mut())?;
        // token i's left boundary is fencepost i, its right boundary i + 1
        let left_in = g.stack(&fp[..n])?;
        let right_in = g.stack(&fp[1..])?;
        let left = self.mlp_left.forward_rows(g, left_in, rng.as_deref_mut())?;
        let right = self.mlp_right.forward_rows(g, right_in, rng)?;
        let left = g.append_ones(left)?;
        let w = g.param(self.biaffine);
        let u = g.matmul(left, w)?;
        let all = g.matmul_nt(u, right)?;
        let idx = enumerate_spans(n, self.config.max_width)
            .into_iter()
            .map(|s| s.l * n + (s.r - 1))
            .collect();
        Ok(g.gather(all, idx)?)
    }

    /// Pre-MLP inputs for the left and right boundary representations of
    /// each token, as `n × d` matrices.
    pub fn boundary_inputs(&self, input: &SentenceInput<'_>) -> Result<(Tensor, Tensor)> {
        let n = input.len();
        let mut g = Graph::new(&self.store);
        let fp = self.backbone.fenceposts(&mut g, &self.vocab, input, None)?;
        let left = g.stack(&fp[..n])?;
        let right = g.stack(&fp[1..])?;
        Ok((g.value(left).clone(), g.value(right).clone()))
    }

    /// Scores every span up to the width cap, with dropout disabled.
    pub fn score_all(&self, input: &SentenceInput<'_>) -> Result<ScoreTable> {
        let mut g = Graph::new(&self.store);
        let logits = self.logits(&mut g, input, None)?;
        ScoreTable::from_logits(input.len(), self.config.max_width, g.value(logits).data())
    }

    /// Training loss for one sentence. Dropout is active when `rng` is given.
    pub fn sentence_loss(
        &self,
        input: &SentenceInput<'_>,
        gold: &[Span],
        rng: Option<&mut SeedRng>,
    ) -> Result<SentenceLoss> {
        let mut g = Graph::new(&self.store);
        let logits = self.logits(&mut g, input, rng)?;
        let (labels, dropped_spans) = span_labels(input.len(), self.config.max_width, gold);
        let loss = g.bce_with_logits(logits, labels)?;
        let value = g.value(loss).item();
        let grads = g.backward(loss)?;
        Ok(SentenceLoss {
            value,
            grads,
            dropped_spans,
        })
    }
}

impl SpanScorer for SpanSegModel {
    fn score_table(&self, input: &SentenceInput<'_>) -> Result<ScoreTable> {
        self.score_all(input)
    }

    fn threshold(&self) -> f64 {
        self.config.threshold
    }
}
