//! Token embedder and sentence encoder shared by both segmenters. The
//! encoder turns a sentence of `n` tokens into `n + 1` fencepost vectors.

use spanseg_neural::{BiLstm, Dropout, Graph, Linear, ParamId, ParamStore, SeedRng, Tensor, Var};

use crate::config::{EncoderMode, SpanSegConfig};
use crate::corpus::{StaticEmbeddings, Vocabulary};
use crate::data::SentenceInput;
use crate::error::{Error, Result};

const EMBED_STD: f64 = 0.01;

/// Splits contextual rows (sentinels included, so `n + 2` rows) into a
/// forward half `f` and backward half `b`, then pairs them as
/// `f_k ⊕ b_{k+1}` for fenceposts `k = 0..=n`.
pub fn chunk_contextual(rows: &Tensor) -> Result<Vec<Vec<f64>>> {
    if rows.rank() != 2 || rows.rows() < 3 {
        return Err(Error::Format(
            "chunked contextual input needs at least one token plus two sentinel rows".into(),
        ));
    }
    let d = rows.cols();
    if d == 0 || !d.is_multiple_of(2) {
        return Err(Error::Format(format!(
            "chunked contextual vectors need an even width, got {d}"
        )));
    }
    let half = d / 2;
    Ok((0..rows.rows() - 1)
        .map(|k| {
            let mut v = rows.row(k)[..half].to_vec();
            v.extend_from_slice(&rows.row(k + 1)[half..]);
            v
        })
        .collect())
}

#[derive(Clone, Debug)]
struct Embedder {
    static_table: ParamId,
    dynamic_table: ParamId,
    char_table: ParamId,
    char_lstm: BiLstm,
    tag_table: Option<ParamId>,
    ctx_proj: Option<Linear>,
    sentinels: ParamId,
    dropout: Dropout,
}

/// Embedding layers plus the sentence BiLSTM, or nothing at all when
/// fenceposts come straight from chunked contextual vectors.
#[derive(Clone, Debug)]
pub struct Backbone {
    mode: EncoderMode,
    embedder: Option<Embedder>,
    encoder: Option<BiLstm>,
    fencepost_dim: usize,
}

/// Builds the frozen static table aligned to `vocab` token ids. Tokens
/// without a pretrained vector get a zero row.
fn static_table(
    config: &SpanSegConfig,
    vocab: &Vocabulary,
    vectors: Option<&StaticEmbeddings>,
) -> Result<Tensor> {
    let mut table = Tensor::zeros(&[vocab.tokens_len(), config.d_static]);
    if let Some(vectors) = vectors {
        if vectors.dim() != config.d_static {
            return Err(Error::Config(format!(
                "static embeddings have width {}, d_static is {}",
                vectors.dim(),
                config.d_static
            )));
        }
        for id in 0..vocab.tokens_len() {
            if let Some(v) = vectors.get(vocab.token(id)) {
                table.row_mut(id).copy_from_slice(v);
            }
        }
    }
    Ok(table)
}

impl Backbone {
    pub fn new(
        store: &mut ParamStore,
        config: &SpanSegConfig,
        vocab: &Vocabulary,
        static_vectors: Option<&StaticEmbeddings>,
        rng: &mut SeedRng,
    ) -> Result<Self> {
        config.validate()?;
        if config.encoder_mode == EncoderMode::ChunkedContext {
            if config.d_ctx == 0 || !config.d_ctx.is_multiple_of(2) {
                return Err(Error::Config(
                    "chunked_ctx needs d_ctx set to the (even) contextual width".into(),
                ));
            }
            if config.use_tag {
                return Err(Error::Config(
                    "use_tag is not available with chunked_ctx".into(),
                ));
            }
            return Ok(Self {
                mode: config.encoder_mode,
                embedder: None,
                encoder: None,
                fencepost_dim: config.d_ctx,
            });
        }
        if config.use_ctx && config.d_ctx == 0 {
            return Err(Error::Config(
                "use_ctx needs d_ctx set to the contextual width".into(),
            ));
        }
        let table = static_table(config, vocab, static_vectors)?;
        let static_table = store.add("embed.static", table, false, false);
        let dynamic_table = store.add_normal(
            "embed.dynamic",
            vocab.tokens_len(),
            config.d_dynamic,
            EMBED_STD,
            rng,
        );
        let char_table = store.add_normal(
            "embed.char",
            vocab.chars_len(),
            config.d_char_emb,
            EMBED_STD,
            rng,
        );
        let char_lstm = BiLstm::new(
            store,
            "embed.char_lstm",
            config.d_char_emb,
            config.d_char / 2,
            1,
            0.0,
            rng,
        );
        let tag_table = config
            .use_tag
            .then(|| store.add_normal("embed.tag", 4, config.d_tag, EMBED_STD, rng));
        let ctx_proj = config.use_ctx.then(|| {
            Linear::new(
                store,
                "embed.ctx_proj",
                config.d_ctx,
                config.d_ctx_proj,
                rng,
            )
        });
        let token_dim = config.token_dim();
        let sentinels = store.add_normal("embed.sentinel", 2, token_dim, EMBED_STD, rng);
        let encoder = BiLstm::new(
            store,
            "encoder",
            token_dim,
            config.hidden,
            config.layers,
            config.dropout,
            rng,
        );
        Ok(Self {
            mode: config.encoder_mode,
            embedder: Some(Embedder {
                static_table,
                dynamic_table,
                char_table,
                char_lstm,
                tag_table,
                ctx_proj,
                sentinels,
                dropout: Dropout::new(config.dropout),
            }),
            encoder: Some(encoder),
            fencepost_dim: 2 * config.hidden,
        })
    }

    pub fn fencepost_dim(&self) -> usize {
        self.fencepost_dim
    }

    /// Token vectors `(static + dynamic) ⊕ chars [⊕ tag] [⊕ projected ctx]`.
    pub fn embed_tokens(
        &self,
        g: &mut Graph<'_>,
        vocab: &Vocabulary,
        input: &SentenceInput<'_>,
        mut rng: Option<&mut SeedRng>,
    ) -> Result<Vec<Var>> {
        let e = self
            .embedder
            .as_ref()
            .ok_or_else(|| Error::Config("chunked_ctx has no token embedder".into()))?;
        if e.tag_table.is_some() && input.tags.is_none() {
            return Err(Error::MissingFeature("BIES tag features".into()));
        }
        if e.ctx_proj.is_some() && input.context.is_none() {
            return Err(Error::MissingFeature("contextual vectors".into()));
        }
        let mut out = Vec::with_capacity(input.len());
        for (i, token) in input.tokens.iter().enumerate() {
            let id = vocab.token_id(token);
            let s = g.row(e.static_table, id)?;
            let d = g.row(e.dynamic_table, id)?;
            let word = g.add(s, d)?;
            let chars = token
                .chars()
                .map(|c| g.row(e.char_table, vocab.char_id(c)))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let states = e.char_lstm.forward(g, &chars, None)?;
            let mut parts = vec![
                word,
                *states.forward.last().expect("non-empty token"),
                states.backward[0],
            ];
            if let (Some(table), Some(tags)) = (e.tag_table, input.tags) {
                parts.push(g.row(table, tags[i].index())?);
            }
            if let (Some(proj), Some(ctx)) = (&e.ctx_proj, input.context) {
                let v = g.constant(Tensor::vector(ctx.token_row(i).to_vec()));
                parts.push(proj.forward(g, v)?);
            }
            let v = g.concat(&parts)?;
            out.push(e.dropout.apply(g, v, rng.as_deref_mut())?);
        }
        Ok(out)
    }

    /// Fencepost vectors for positions `0..=n`.
    pub fn fenceposts(
        &self,
        g: &mut Graph<'_>,
        vocab: &Vocabulary,
        input: &SentenceInput<'_>,
        mut rng: Option<&mut SeedRng>,
    ) -> Result<Vec<Var>> {
        if input.is_empty() {
            return Err(Error::Format("cannot encode an empty sentence".into()));
        }
        match self.mode {
            EncoderMode::ChunkedContext => {
                let ctx = input
                    .context
                    .ok_or_else(|| Error::MissingFeature("contextual vectors".into()))?;
                if !ctx.has_sentinels() {
                    return Err(Error::Misaligned(
                        "chunked_ctx needs contextual records with sentinel rows (n + 2)".into(),
                    ));
                }
                if ctx.dim() != self.fencepost_dim {
                    return Err(Error::Misaligned(format!(
                        "contextual width {} does not match d_ctx {}",
                        ctx.dim(),
                        self.fencepost_dim
                    )));
                }
                Ok(chunk_contextual(ctx.rows())?
                    .into_iter()
                    .map(|v| g.constant(Tensor::vector(v)))
                    .collect())
            }
            EncoderMode::BiLstm => {
                let e = self.embedder.as_ref().expect("bilstm mode has an embedder");
                let encoder = self.encoder.as_ref().expect("bilstm mode has an encoder");
                let tokens = self.embed_tokens(g, vocab, input, rng.as_deref_mut())?;
                let mut seq = Vec::with_capacity(tokens.len() + 2);
                seq.push(g.row(e.sentinels, 0)?);
                seq.extend(tokens);
                seq.push(g.row(e.sentinels, 1)?);
                let states = encoder.forward(g, &seq, rng)?;
                (0..=input.len())
                    .map(|k| Ok(g.concat(&[states.forward[k], states.backward[k + 1]])?))
                    .collect()
            }
        }
    }
}
