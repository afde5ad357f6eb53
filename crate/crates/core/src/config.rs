//! Model and training hyperparameters.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::span::DEFAULT_MAX_WIDTH;

/// How fencepost vectors are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderMode {
    /// Token embeddings fed through a stacked BiLSTM.
    BiLstm,
    /// Precomputed contextual vectors (with sentinel rows), each split into
    /// a forward half and a backward half.
    ChunkedContext,
}

impl FromStr for EncoderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bilstm" => Ok(EncoderMode::BiLstm),
            "chunked_ctx" => Ok(EncoderMode::ChunkedContext),
            other => Err(Error::Config(format!(
                "encoder_mode must be bilstm or chunked_ctx, got {other:?}"
            ))),
        }
    }
}

impl fmt::Display for EncoderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderMode::BiLstm => "bilstm",
            EncoderMode::ChunkedContext => "chunked_ctx",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpanSegConfig {
    pub d_static: usize,
    pub d_dynamic: usize,
    /// Width of the character summary (forward ⊕ backward final states).
    pub d_char: usize,
    /// Width of the character input embeddings.
    pub d_char_emb: usize,
    pub d_tag: usize,
    pub d_ctx_proj: usize,
    /// Width of the ingested contextual vectors; taken from the feature file.
    pub d_ctx: usize,
    pub layers: usize,
    pub hidden: usize,
    pub mlp_dim: usize,
    pub dropout: f64,
    pub max_width: usize,
    pub threshold: f64,
    pub use_tag: bool,
    pub use_ctx: bool,
    pub encoder_mode: EncoderMode,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_token_budget: usize,
    pub seed: u64,
}

impl Default for SpanSegConfig {
    fn default() -> Self {
        Self {
            d_static: 100,
            d_dynamic: 100,
            d_char: 100,
            d_char_emb: 50,
            d_tag: 100,
            d_ctx_proj: 100,
            d_ctx: 0,
            layers: 3,
            hidden: 400,
            mlp_dim: 500,
            dropout: 0.33,
            max_width: DEFAULT_MAX_WIDTH,
            threshold: 0.5,
            use_tag: false,
            use_ctx: false,
            encoder_mode: EncoderMode::BiLstm,
            lr: 1e-3,
            weight_decay: 0.01,
            max_epochs: 100,
            patience: 20,
            batch_token_budget: 5000,
            seed: 1,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for key {key}")))
}

impl SpanSegConfig {
    /// Sets one hyperparameter. Returns `Ok(false)` for keys this struct
    /// does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "d_static" => self.d_static = parse(key, value)?,
            "d_dynamic" => self.d_dynamic = parse(key, value)?,
            "d_char" => self.d_char = parse(key, value)?,
            "d_char_emb" => self.d_char_emb = parse(key, value)?,
            "d_tag" => self.d_tag = parse(key, value)?,
            "d_ctx_proj" => self.d_ctx_proj = parse(key, value)?,
            "d_ctx" => self.d_ctx = parse(key, value)?,
            "layers" => self.layers = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "mlp_dim" => self.mlp_dim = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "max_width" => self.max_width = parse(key, value)?,
            "threshold" => self.threshold = parse(key, value)?,
            "use_tag" => self.use_tag = parse(key, value)?,
            "use_ctx" => self.use_ctx = parse(key, value)?,
            "encoder_mode" => self.encoder_mode = value.parse()?,
            "lr" => self.lr = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "batch_token_budget" => self.batch_token_budget = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_static", self.d_static),
            ("d_dynamic", self.d_dynamic),
            ("d_char_emb", self.d_char_emb),
            ("d_tag", self.d_tag),
            ("d_ctx_proj", self.d_ctx_proj),
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("mlp_dim", self.mlp_dim),
            ("max_width", self.max_width),
            ("max_epochs", self.max_epochs),
            ("batch_token_budget", self.batch_token_budget),
        ];
        if let Some((k, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{k} must be positive")));
        }
        if self.d_char == 0 || !self.d_char.is_multiple_of(2) {
            return Err(Error::Config(
                "d_char must be a positive even number".into(),
            ));
        }
        if self.d_static != self.d_dynamic {
            return Err(Error::Config(format!(
                "static and dynamic embeddings are summed, so d_static ({}) must equal d_dynamic ({})",
                self.d_static, self.d_dynamic
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must be in [0, 1)".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config("threshold must be in (0, 1)".into()));
        }
        if !self.lr.is_finite() || self.lr <= 0.0 || self.weight_decay < 0.0 {
            return Err(Error::Config(
                "lr must be positive and weight_decay non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Width of one token vector fed to the sentence encoder.
    pub fn token_dim(&self) -> usize {
        let mut d = self.d_dynamic + self.d_char;
        if self.use_tag {
            d += self.d_tag;
        }
        if self.use_ctx {
            d += self.d_ctx_proj;
        }
        d
    }

    /// `(key, value)` pairs covering every field, in a stable order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("d_static", self.d_static.to_string()),
            ("d_dynamic", self.d_dynamic.to_string()),
            ("d_char", self.d_char.to_string()),
            ("d_char_emb", self.d_char_emb.to_string()),
            ("d_tag", self.d_tag.to_string()),
            ("d_ctx_proj", self.d_ctx_proj.to_string()),
            ("d_ctx", self.d_ctx.to_string()),
            ("layers", self.layers.to_string()),
            ("hidden", self.hidden.to_string()),
            ("mlp_dim", self.mlp_dim.to_string()),
            ("dropout", self.dropout.to_string()),
            ("max_width", self.max_width.to_string()),
            ("threshold", self.threshold.to_string()),
            ("use_tag", self.use_tag.to_string()),
            ("use_ctx", self.use_ctx.to_string()),
            ("encoder_mode", self.encoder_mode.to_string()),
            ("lr", self.lr.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("batch_token_budget", self.batch_token_budget.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// Parses the output of [`SpanSegConfig::to_text`]; unknown keys are errors.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for line in text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
        {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got {line:?}")))?;
            if !cfg.set(k.trim(), v.trim())? {
                return Err(Error::Config(format!("unknown key {}", k.trim())));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
