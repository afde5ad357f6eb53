//! Linear-chain CRF over BIES tags, on top of the shared encoder.

#![allow(clippy::needless_range_loop)]

use spanseg_neural::{
    log_sum_exp, seeded_rng, Graph, Linear, ParamId, ParamStore, SeedRng, Tensor, Var,
};

use crate::config::SpanSegConfig;
use crate::corpus::{StaticEmbeddings, Vocabulary};
use crate::data::{Segmenter, SentenceInput};
use crate::encoder::Backbone;
use crate::error::{Error, Result};
use crate::model::SentenceLoss;
use crate::span::{bies_to_spans, BiesTag, Span};

pub const NUM_TAGS: usize = 4;
/// Row of the transition matrix holding start → tag scores.
pub const START: usize = 4;
/// Column of the transition matrix holding tag → stop scores.
pub const STOP: usize = 5;
pub const TRANSITION_SIZE: usize = 6;

fn check_shapes(emissions: &Tensor, transitions: &Tensor) -> Result<usize> {
    if emissions.rank() != 2 || emissions.cols() != NUM_TAGS || emissions.rows() == 0 {
        return Err(Error::Format(format!(
            "emissions must be n x {NUM_TAGS} with n >= 1, got {}",
            emissions.shape_string()
        )));
    }
    if transitions.shape() != [TRANSITION_SIZE, TRANSITION_SIZE] {
        return Err(Error::Format(format!(
            "transitions must be {TRANSITION_SIZE}x{TRANSITION_SIZE}, got {}",
            transitions.shape_string()
        )));
    }
    Ok(emissions.rows())
}

/// Unnormalized log score of one tag path.
pub fn path_score(emissions: &Tensor, transitions: &Tensor, tags: &[usize]) -> f64 {
    let mut s = transitions.get2(START, tags[0]);
    for (t, &y) in tags.iter().enumerate() {
        s += emissions.get2(t, y);
        if t > 0 {
            s += transitions.get2(tags[t - 1], y);
        }
    }
    s + transitions.get2(tags[tags.len() - 1], STOP)
}

fn forward_scores(emissions: &Tensor, transitions: &Tensor, n: usize) -> Vec<[f64; NUM_TAGS]> {
    let mut alpha = vec![[0.0; NUM_TAGS]; n];
    for y in 0..NUM_TAGS {
        alpha[0][y] = transitions.get2(START, y) + emissions.get2(0, y);
    }
    for t in 1..n {
        for y in 0..NUM_TAGS {
            let terms: Vec<f64> = (0..NUM_TAGS)
                .map(|x| alpha[t - 1][x] + transitions.get2(x, y))
                .collect();
            alpha[t][y] = emissions.get2(t, y) + log_sum_exp(&terms);
        }
    }
    alpha
}

fn backward_scores(emissions: &Tensor, transitions: &Tensor, n: usize) -> Vec<[f64; NUM_TAGS]> {
    let mut beta = vec![[0.0; NUM_TAGS]; n];
    for x in 0..NUM_TAGS {
        beta[n - 1][x] = transitions.get2(x, STOP);
    }
    for t in (0..n - 1).rev() {
        for x in 0..NUM_TAGS {
            let terms: Vec<f64> = (0..NUM_TAGS)
                .map(|y| transitions.get2(x, y) + emissions.get2(t + 1, y) + beta[t + 1][y])
                .collect();
            beta[t][x] = log_sum_exp(&terms);
        }
    }
    beta
}

fn log_z_from_alpha(alpha: &[[f64; NUM_TAGS]], transitions: &Tensor) -> f64 {
    let last = alpha[alpha.len() - 1];
    let terms: Vec<f64> = (0..NUM_TAGS)
        .map(|y| last[y] + transitions.get2(y, STOP))
        .collect();
    log_sum_exp(&terms)
}

/// Log partition function over all `4^n` tag paths.
pub fn crf_forward_logz(emissions: &Tensor, transitions: &Tensor) -> Result<f64> {
    let n = check_shapes(emissions, transitions)?;
    Ok(log_z_from_alpha(
        &forward_scores(emissions, transitions, n),
        transitions,
    ))
}

/// Posterior expectations: per-position tag marginals (`n × 4`) and
/// expected transition counts (`6 × 6`, start and stop included).
#[derive(Clone, Debug)]
pub struct Marginals {
    pub log_z: f64,
    pub unary: Tensor,
    pub transitions: Tensor,
}

pub fn crf_marginals(emissions: &Tensor, transitions: &Tensor) -> Result<Marginals> {
    let n = check_shapes(emissions, transitions)?;
    let alpha = forward_scores(emissions, transitions, n);
    let beta = backward_scores(emissions, transitions, n);
    let log_z = log_z_from_alpha(&alpha, transitions);
    let mut unary = Tensor::zeros(&[n, NUM_TAGS]);
    for t in 0..n {
        for y in 0..NUM_TAGS {
            unary.row_mut(t)[y] = (alpha[t][y] + beta[t][y] - log_z).exp();
        }
    }
    let mut pair = Tensor::zeros(&[TRANSITION_SIZE, TRANSITION_SIZE]);
    for y in 0..NUM_TAGS {
        pair.row_mut(START)[y] = unary.get2(0, y);
        pair.row_mut(y)[STOP] = unary.get2(n - 1, y);
    }
    for t in 1..n {
        for x in 0..NUM_TAGS {
            for y in 0..NUM_TAGS {
                let lp =
                    alpha[t - 1][x] + transitions.get2(x, y) + emissions.get2(t, y) + beta[t][y]
                        - log_z;
                pair.row_mut(x)[y] += lp.exp();
            }
        }
    }
    Ok(Marginals {
        log_z,
        unary,
        transitions: pair,
    })
}

fn gold_indices(gold: &[BiesTag], n: usize) -> Result<Vec<usize>> {
    if gold.len() != n {
        return Err(Error::Misaligned(format!(
            "{} gold tags for {n} emission rows",
            gold.len()
        )));
    }
    Ok(gold.iter().map(|t| t.index()).collect())
}

/// Negative log-likelihood of the gold tag path.
pub fn crf_nll(emissions: &Tensor, transitions: &Tensor, gold: &[BiesTag]) -> Result<f64> {
    let n = check_shapes(emissions, transitions)?;
    let tags = gold_indices(gold, n)?;
    Ok(crf_forward_logz(emissions, transitions)? - path_score(emissions, transitions, &tags))
}

/// Records the NLL on a graph. Its gradient is posterior minus gold counts.
pub fn crf_nll_op(
    g: &mut Graph<'_>,
    emissions: Var,
    transitions: Var,
    gold: &[BiesTag],
) -> Result<Var> {
    let em = g.value(emissions).clone();
    let tr = g.value(transitions).clone();
    let n = check_shapes(&em, &tr)?;
    let tags = gold_indices(gold, n)?;
    let marg = crf_marginals(&em, &tr)?;
    let nll = marg.log_z - path_score(&em, &tr, &tags);

    let mut d_em = marg.unary;
    let mut d_tr = marg.transitions;
    for (t, &y) in tags.iter().enumerate() {
        d_em.row_mut(t)[y] -= 1.0;
        let prev = if t == 0 { START } else { tags[t - 1] };
        d_tr.row_mut(prev)[y] -= 1.0;
    }
    d_tr.row_mut(tags[n - 1])[STOP] -= 1.0;

    Ok(
        g.custom(&[emissions, transitions], Tensor::scalar(nll), move |out| {
            let s = out.item();
            let mut a = d_em.clone();
            a.data_mut().iter_mut().for_each(|v| *v *= s);
            let mut b = d_tr.clone();
            b.data_mut().iter_mut().for_each(|v| *v *= s);
            vec![a, b]
        }),
    )
}

/// Highest-scoring tag path. Ties go to the smallest tag index.
pub fn viterbi_decode(emissions: &Tensor, transitions: &Tensor) -> Result<Vec<BiesTag>> {
    let n = check_shapes(emissions, transitions)?;
    let mut delta = vec![[0.0; NUM_TAGS]; n];
    let mut back = vec![[0usize; NUM_TAGS]; n];
    for y in 0..NUM_TAGS {
        delta[0][y] = transitions.get2(START, y) + emissions.get2(0, y);
    }
    for t in 1..n {
        for y in 0..NUM_TAGS {
            let mut best = 0;
            let mut best_score = delta[t - 1][0] + transitions.get2(0, y);
            for x in 1..NUM_TAGS {
                let s = delta[t - 1][x] + transitions.get2(x, y);
                if s > best_score {
                    best = x;
                    best_score = s;
                }
            }
            delta[t][y] = best_score + emissions.get2(t, y);
            back[t][y] = best;
        }
    }
    let mut last = 0;
    let mut last_score = delta[n - 1][0] + transitions.get2(0, STOP);
    for y in 1..NUM_TAGS {
        let s = delta[n - 1][y] + transitions.get2(y, STOP);
        if s > last_score {
            last = y;
            last_score = s;
        }
    }
    let mut path = vec![last; n];
    for t in (1..n).rev() {
        path[t - 1] = back[t][path[t]];
    }
    Ok(path
        .into_iter()
        .map(|i| BiesTag::from_index(i).expect("tag index below 4"))
        .collect())
}

/// BiLSTM-CRF tagger sharing the span model's encoder.
#[derive(Clone, Debug)]
pub struct CrfModel {
    pub config: SpanSegConfig,
    pub vocab: Vocabulary,
    pub store: ParamStore,
    backbone: Backbone,
    emission: Linear,
    transitions: ParamId,
}

impl CrfModel {
    pub fn new(
        config: SpanSegConfig,
        vocab: Vocabulary,
        static_vectors: Option<&StaticEmbeddings>,
    ) -> Result<Self> {
        let mut rng = seeded_rng(config.seed);
        let mut store = ParamStore::new();
        let backbone = Backbone::new(&mut store, &config, &vocab, static_vectors, &mut rng)?;
        let emission = Linear::new(
            &mut store,
            "crf.emission",
            backbone.fencepost_dim(),
            NUM_TAGS,
            &mut rng,
        );
        let transitions = store.add_zeros("crf.transitions", &[TRANSITION_SIZE, TRANSITION_SIZE]);
        Ok(Self {
            config,
            vocab,
            store,
            backbone,
            emission,
            transitions,
        })
    }

    /// Tag scores for each token, read from the fencepost pair around it.
    fn emissions(
        &self,
        g: &mut Graph<'_>,
        input: &SentenceInput<'_>,
        rng: Option<&mut SeedRng>,
    ) -> Result<Var> {
        let fp = self.backbone.fenceposts(g, &self.vocab, input, rng)?;
        let tokens = g.stack(&fp[1..])?;
        Ok(self.emission.forward_rows(g, tokens)?)
    }

    pub fn emission_scores(&self, input: &SentenceInput<'_>) -> Result<Tensor> {
        let mut g = Graph::new(&self.store);
        let em = self.emissions(&mut g, input, None)?;
        Ok(g.value(em).clone())
    }

    pub fn transition_scores(&self) -> &Tensor {
        self.store.value(self.transitions)
    }

    pub fn predict_tags(&self, input: &SentenceInput<'_>) -> Result<Vec<BiesTag>> {
        viterbi_decode(&self.emission_scores(input)?, self.transition_scores())
    }

    pub fn sentence_loss(
        &self,
        input: &SentenceInput<'_>,
        gold: &[Span],
        rng: Option<&mut SeedRng>,
    ) -> Result<SentenceLoss> {
        let gold_tags = crate::span::spans_to_bies(gold)?;
        let mut g = Graph::new(&self.store);
        let em = self.emissions(&mut g, input, rng)?;
        let tr = g.param(self.transitions);
        let loss = crf_nll_op(&mut g, em, tr, &gold_tags)?;
        let value = g.value(loss).item();
        let grads = g.backward(loss)?;
        Ok(SentenceLoss {
            value,
            grads,
            dropped_spans: 0,
        })
    }
}

impl Segmenter for CrfModel {
    fn segment(&self, input: &SentenceInput<'_>) -> Result<Vec<Span>> {
        bies_to_spans(&self.predict_tags(input)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(rows: usize, cols: usize, rng: &mut SeedRng) -> Tensor {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        Tensor::matrix(rows, cols, data).unwrap()
    }

    #[test]
    fn single_uniform_position() {
        let em = Tensor::zeros(&[1, 4]);
        let tr = Tensor::zeros(&[6, 6]);
        assert!((crf_forward_logz(&em, &tr).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert!((crf_nll(&em, &tr, &[BiesTag::S]).unwrap() - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn constant_shift_moves_log_z() {
        let mut rng = seeded_rng(3);
        let em = random(4, 4, &mut rng);
        let tr = random(6, 6, &mut rng);
        let mut shifted = em.clone();
        shifted.row_mut(2).iter_mut().for_each(|v| *v += 1.75);
        let a = crf_forward_logz(&em, &tr).unwrap();
        let b = crf_forward_logz(&shifted, &tr).unwrap();
        assert!((b - a - 1.75).abs() < 1e-12);
    }

    #[test]
    fn dominant_gold_path_has_near_zero_nll() {
        let gold = [BiesTag::B, BiesTag::E, BiesTag::S];
        let mut em = Tensor::zeros(&[3, 4]);
        for (t, tag) in gold.iter().enumerate() {
            em.row_mut(t)[tag.index()] = 50.0;
        }
        let nll = crf_nll(&em, &Tensor::zeros(&[6, 6]), &gold).unwrap();
        assert!((0.0..1e-15).contains(&nll));
        assert!(crf_nll(&em, &Tensor::zeros(&[6, 6]), &gold[..2]).is_err());
    }

    #[test]
    fn one_hot_emissions_decode_to_argmax() {
        let tags = [BiesTag::S, BiesTag::B, BiesTag::I, BiesTag::E];
        let mut em = Tensor::zeros(&[4, 4]);
        for (t, tag) in tags.iter().enumerate() {
            em.row_mut(t)[tag.index()] = 1.0;
        }
        assert_eq!(viterbi_decode(&em, &Tensor::zeros(&[6, 6])).unwrap(), tags);
    }

    #[test]
    fn forbidden_transition_never_decoded() {
        let mut rng = seeded_rng(11);
        let mut tr = Tensor::zeros(&[6, 6]);
        tr.row_mut(BiesTag::S.index())[BiesTag::I.index()] = -1e9;
        for _ in 0..50 {
            let em = random(6, 4, &mut rng);
            let path = viterbi_decode(&em, &tr).unwrap();
            assert!(!path.windows(2).any(|w| w == [BiesTag::S, BiesTag::I]));
        }
    }

    #[test]
    fn ties_prefer_smallest_tag() {
        let em = Tensor::zeros(&[3, 4]);
        let path = viterbi_decode(&em, &Tensor::zeros(&[6, 6])).unwrap();
        assert_eq!(path, vec![BiesTag::B; 3]);
    }

    #[test]
    fn marginals_sum_to_one() {
        let mut rng = seeded_rng(5);
        let em = random(5, 4, &mut rng);
        let tr = random(6, 6, &mut rng);
        let m = crf_marginals(&em, &tr).unwrap();
        for t in 0..5 {
            assert!((m.unary.row(t).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // n + 1 transitions per path, start and stop included
        assert!((m.transitions.data().iter().sum::<f64>() - 6.0).abs() < 1e-10);
    }
}
