//! Batch commands: train, segment, eval, analyze and stats.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{EncoderMode, SpanSegConfig};
use crate::corpus::{
    load_bies_file, load_contextual_file, load_static_embeddings, tokenize_raw, ContextRecord,
    Corpus, Language, SegmentedSentence, Vocabulary,
};
use crate::data::{Dataset, Segmenter};
use crate::error::{io_error, Error, Result};
use crate::eval::{analyze_corpora, evaluate, AmbiguityReport, EvalReport};
use crate::scores::OracleScorer;
use crate::span::{spans_to_words, BiesTag};
use crate::system::{System, SystemKind};
use crate::train::{segment_dataset, train, TrainLog};

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "SPANSEG_SEED";

/// File name of the epoch log written next to the checkpoint files.
pub const LOG_FILE: &str = "train.log";

const RUN_KEYS: [&str; 17] = [
    "train",
    "dev",
    "test",
    "static_emb",
    "train_tag_file",
    "dev_tag_file",
    "test_tag_file",
    "train_ctx_file",
    "dev_ctx_file",
    "test_ctx_file",
    "tag_file",
    "ctx_file",
    "checkpoint",
    "output",
    "log",
    "gold",
    "system",
];

/// Flat `key=value` run configuration: model hyperparameters plus file
/// paths, the system kind and the language.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub model: SpanSegConfig,
    pub language: Language,
    /// Paths and the `system` key, as written.
    values: BTreeMap<String, String>,
    base: PathBuf,
}

impl RunConfig {
    /// Parses config text. Relative paths resolve against `base`.
    pub fn parse(text: &str, base: impl Into<PathBuf>) -> Result<Self> {
        let mut model = SpanSegConfig::default();
        let mut language = Language::Vietnamese;
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: String| Error::Config(format!("line {}: {m}", i + 1));
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            if k == "language" {
                language = v.parse()?;
            } else if RUN_KEYS.contains(&k) {
                values.insert(k.to_string(), v.to_string());
            } else if !model.set(k, v)? {
                return Err(err(format!("unknown key {k}")));
            }
        }
        if let Ok(seed) = std::env::var(SEED_ENV) {
            model.seed = seed.trim().parse().map_err(|_| {
                Error::Config(format!(
                    "{SEED_ENV} must be an unsigned integer, got {seed:?}"
                ))
            })?;
        }
        model.validate()?;
        Ok(Self {
            model,
            language,
            values,
            base: base.into(),
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_error(path))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|p| self.base.join(p))
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| Error::Config(format!("missing required key {key}")))
    }

    pub fn system(&self) -> &str {
        self.get("system").unwrap_or("spanseg")
    }
}

fn needs_context(config: &SpanSegConfig) -> bool {
    config.use_ctx || config.encoder_mode == EncoderMode::ChunkedContext
}

/// Attaches the tag and contextual features `config` asks for.
fn attach_features(
    corpus: Corpus,
    config: &SpanSegConfig,
    tag_file: Option<PathBuf>,
    ctx_file: Option<PathBuf>,
    split: &str,
) -> Result<Dataset> {
    let mut data = Dataset::new(corpus);
    if config.use_tag {
        let path =
            tag_file.ok_or_else(|| Error::Config(format!("use_tag needs a {split} tag file")))?;
        let tags = load_bies_file(&path, &data.corpus)?;
        data = data.with_tags(tags)?;
    }
    if needs_context(config) {
        let path = ctx_file
            .ok_or_else(|| Error::Config(format!("contextual features need a {split} ctx file")))?;
        let records = load_contextual_file(&path, &data.corpus)?;
        data = data.with_context(records)?;
    }
    Ok(data)
}

fn context_dim(records: Option<&Vec<ContextRecord>>) -> Option<usize> {
    records.and_then(|r| r.first()).map(ContextRecord::dim)
}

/// Output of [`cmd_train`].
pub struct TrainOutcome {
    pub system: System,
    pub log: TrainLog,
    pub checkpoint: PathBuf,
    pub dev: EvalReport,
    pub test: Option<EvalReport>,
}

pub fn cmd_train(
    config_path: impl AsRef<Path>,
    on_epoch: impl FnMut(&crate::train::EpochRecord),
) -> Result<TrainOutcome> {
    let run = RunConfig::read(config_path)?;
    let kind: SystemKind = run.system().parse()?;
    let train_path = run.require_path("train")?;
    let dev_path = run.require_path("dev")?;
    let checkpoint = run.require_path("checkpoint")?;
    let mut config = run.model.clone();

    let train_corpus = Corpus::read(&train_path, run.language)?;
    let dev_corpus = Corpus::read(&dev_path, run.language)?;
    if dev_corpus.is_empty() {
        return Err(Error::Config(format!(
            "dev corpus {} is empty",
            dev_path.display()
        )));
    }
    let mut vocab = Vocabulary::build(&train_corpus)?;
    let static_vectors = run
        .path("static_emb")
        .map(load_static_embeddings)
        .transpose()?;
    if let Some(v) = &static_vectors {
        vocab.extend_tokens(v.tokens());
    }
    let train_data = attach_features(
        train_corpus,
        &config,
        run.path("train_tag_file"),
        run.path("train_ctx_file"),
        "train",
    )?;
    let dev_data = attach_features(
        dev_corpus,
        &config,
        run.path("dev_tag_file"),
        run.path("dev_ctx_file"),
        "dev",
    )?;
    if let Some(d) = context_dim(train_data.context.as_ref()) {
        if config.d_ctx != 0 && config.d_ctx != d {
            return Err(Error::Config(format!(
                "d_ctx is {} but the contextual file has width {d}",
                config.d_ctx
            )));
        }
        config.d_ctx = d;
    }

    let mut system = System::new(kind, config, vocab, static_vectors.as_ref())?;
    let log = train(&mut system, &train_data, &dev_data, on_epoch)?;
    system.save(&checkpoint)?;
    let log_path = run.path("log").unwrap_or_else(|| checkpoint.join(LOG_FILE));
    fs::write(&log_path, log.to_text()).map_err(io_error(&log_path))?;

    let report = |data: &Dataset| -> Result<EvalReport> {
        let pred = segment_dataset(&system, data)?;
        let pred_corpus = Corpus {
            sentences: data
                .corpus
                .sentences
                .iter()
                .zip(pred)
                .map(|(s, spans)| SegmentedSentence {
                    tokens: s.tokens.clone(),
                    spans,
                })
                .collect(),
            language: data.corpus.language,
        };
        evaluate(&data.corpus, &pred_corpus, None)
    };
    let dev = report(&dev_data)?;
    let test = match run.path("test") {
        Some(path) => {
            let corpus = Corpus::read(&path, run.language)?;
            let data = attach_features(
                corpus,
                system.config(),
                run.path("test_tag_file"),
                run.path("test_ctx_file"),
                "test",
            )?;
            Some(report(&data)?)
        }
        None => None,
    };
    Ok(TrainOutcome {
        system,
        log,
        checkpoint,
        dev,
        test,
    })
}

/// Segments raw text, one sentence per line. Blank lines map to blank
/// lines. Feature files, when given, must align with the non-blank lines.
pub fn segment_text(
    segmenter: &(dyn Segmenter + Sync),
    text: &str,
    language: Language,
    tags: Option<&Path>,
    context: Option<&Path>,
) -> Result<String> {
    let mut sentences = Vec::new();
    let mut blank = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let tokens = tokenize_raw(line, language).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if tokens.is_empty() {
            blank.push(true);
            continue;
        }
        blank.push(false);
        let words = tokens.iter().map(|t| vec![t.clone()]).collect();
        sentences.push(SegmentedSentence::from_words(words)?);
    }
    let corpus = Corpus {
        sentences,
        language,
    };
    let mut data = Dataset::new(corpus);
    if let Some(path) = tags {
        let t: Vec<Vec<BiesTag>> = load_bies_file(path, &data.corpus)?;
        data = data.with_tags(t)?;
    }
    if let Some(path) = context {
        let c = load_contextual_file(path, &data.corpus)?;
        data = data.with_context(c)?;
    }
    let predicted = segment_dataset(segmenter, &data)?;
    let mut out = String::new();
    let mut next = data.corpus.sentences.iter().zip(predicted);
    for is_blank in blank {
        if !is_blank {
            let (s, spans) = next.next().expect("one prediction per non-blank line");
            out.push_str(&spans_to_words(&spans, &s.tokens, language.joiner())?.join(" "));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Segments `input` into `output` with the checkpoint named in the config,
/// or with a gold-indicator scorer when `system=oracle` and `gold` is set.
pub fn cmd_segment(
    config_path: impl AsRef<Path>,
    input: impl AsRef<Path>,
    output: impl AsRef<Path>,
) -> Result<()> {
    let run = RunConfig::read(config_path)?;
    let input = input.as_ref();
    let text = fs::read_to_string(input).map_err(io_error(input))?;
    let (tags, ctx) = (run.path("tag_file"), run.path("ctx_file"));
    let result = if run.system() == "oracle" {
        let gold = Corpus::read(run.require_path("gold")?, run.language)?;
        let scorer = OracleScorer::from_corpus(&gold, run.model.max_width);
        segment_text(
            &scorer,
            &text,
            run.language,
            tags.as_deref(),
            ctx.as_deref(),
        )?
    } else {
        let system = System::load(run.require_path("checkpoint")?)?;
        if system.config().use_tag && tags.is_none() {
            return Err(Error::Config(
                "this model uses tag features; set tag_file".into(),
            ));
        }
        if needs_context(system.config()) && ctx.is_none() {
            return Err(Error::Config(
                "this model uses contextual features; set ctx_file".into(),
            ));
        }
        segment_text(
            &system,
            &text,
            run.language,
            tags.as_deref(),
            ctx.as_deref(),
        )?
    };
    let output = output.as_ref();
    fs::write(output, result).map_err(io_error(output))
}

/// Word set of a segmented training corpus.
pub fn training_words(corpus: &Corpus) -> HashSet<String> {
    corpus
        .sentences
        .iter()
        .flat_map(|s| s.words(corpus.language))
        .collect()
}

pub fn cmd_eval(
    gold: &Path,
    pred: &Path,
    train: Option<&Path>,
    language: Language,
) -> Result<EvalReport> {
    let gold = Corpus::read(gold, language)?;
    let pred = Corpus::read(pred, language)?;
    if gold.len() != pred.len() {
        return Err(Error::Misaligned(format!(
            "{} gold sentences vs {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    let words = train
        .map(|p| Corpus::read(p, language).map(|c| training_words(&c)))
        .transpose()?;
    evaluate(&gold, &pred, words.as_ref())
}

pub fn cmd_analyze(gold: &Path, a: &Path, b: &Path, language: Language) -> Result<AmbiguityReport> {
    let gold = Corpus::read(gold, language)?;
    let a = Corpus::read(a, language)?;
    let b = Corpus::read(b, language)?;
    analyze_corpora(&gold, &a, &b)
}
