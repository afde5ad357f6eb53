//! Either trainable segmenter behind one type, plus checkpoint I/O.
//!
//! A checkpoint is a directory holding `manifest.txt` (parameter layout
//! with a `# system <kind>` header), `params.bin`, `config.txt` and
//! `vocab.txt`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use spanseg_neural::{read_blob, read_manifest, write_blob, write_manifest, ParamStore, SeedRng};

use crate::config::SpanSegConfig;
use crate::corpus::{StaticEmbeddings, Vocabulary};
use crate::crf::CrfModel;
use crate::data::{Segmenter, SentenceInput};
use crate::error::{io_error, Error, Result};
use crate::model::{SentenceLoss, SpanSegModel};
use crate::scores::SpanScorer;
use crate::span::Span;

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const PARAMS_FILE: &str = "params.bin";
pub const CONFIG_FILE: &str = "config.txt";
pub const VOCAB_FILE: &str = "vocab.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SystemKind {
    SpanSeg,
    Crf,
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spanseg" => Ok(SystemKind::SpanSeg),
            "crf" => Ok(SystemKind::Crf),
            other => Err(Error::Config(format!(
                "system must be spanseg or crf, got {other:?}"
            ))),
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SystemKind::SpanSeg => "spanseg",
            SystemKind::Crf => "crf",
        })
    }
}

#[derive(Clone, Debug)]
pub enum System {
    SpanSeg(SpanSegModel),
    Crf(CrfModel),
}

impl System {
    pub fn new(
        kind: SystemKind,
        config: SpanSegConfig,
        vocab: Vocabulary,
        static_vectors: Option<&StaticEmbeddings>,
    ) -> Result<Self> {
        Ok(match kind {
            SystemKind::SpanSeg => {
                System::SpanSeg(SpanSegModel::new(config, vocab, static_vectors)?)
            }
            SystemKind::Crf => System::Crf(CrfModel::new(config, vocab, static_vectors)?),
        })
    }

    pub fn kind(&self) -> SystemKind {
        match self {
            System::SpanSeg(_) => SystemKind::SpanSeg,
            System::Crf(_) => SystemKind::Crf,
        }
    }

    pub fn config(&self) -> &SpanSegConfig {
        match self {
            System::SpanSeg(m) => &m.config,
            System::Crf(m) => &m.config,
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        match self {
            System::SpanSeg(m) => &m.vocab,
            System::Crf(m) => &m.vocab,
        }
    }

    pub fn store(&self) -> &ParamStore {
        match self {
            System::SpanSeg(m) => &m.store,
            System::Crf(m) => &m.store,
        }
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        match self {
            System::SpanSeg(m) => &mut m.store,
            System::Crf(m) => &mut m.store,
        }
    }

    pub fn sentence_loss(
        &self,
        input: &SentenceInput<'_>,
        gold: &[Span],
        rng: Option<&mut SeedRng>,
    ) -> Result<SentenceLoss> {
        match self {
            System::SpanSeg(m) => m.sentence_loss(input, gold, rng),
            System::Crf(m) => m.sentence_loss(input, gold, rng),
        }
    }

    /// The span model, when this is one.
    pub fn as_scorer(&self) -> Option<&dyn SpanScorer> {
        match self {
            System::SpanSeg(m) => Some(m),
            System::Crf(_) => None,
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(io_error(dir))?;
        let mut manifest = format!("# system {}\n", self.kind()).into_bytes();
        write_manifest(&mut manifest, self.store())?;
        let mut blob = Vec::new();
        write_blob(&mut blob, self.store())?;
        let files: [(&str, Vec<u8>); 4] = [
            (MANIFEST_FILE, manifest),
            (PARAMS_FILE, blob),
            (CONFIG_FILE, self.config().to_text().into_bytes()),
            (VOCAB_FILE, self.vocab().to_text().into_bytes()),
        ];
        for (name, bytes) in files {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(io_error(&path))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read(&path).map_err(io_error(&path))
        };
        let text = |name: &str| -> Result<String> {
            String::from_utf8(read(name)?)
                .map_err(|_| Error::Format(format!("{} is not UTF-8", dir.join(name).display())))
        };
        let manifest = text(MANIFEST_FILE)?;
        let kind = checkpoint_kind(&manifest)?;
        let config = SpanSegConfig::from_text(&text(CONFIG_FILE)?)?;
        let vocab = Vocabulary::from_text(&text(VOCAB_FILE)?)?;
        let mut system = System::new(kind, config, vocab, None)?;
        let values = read_blob(&read(PARAMS_FILE)?, &read_manifest(&manifest)?)?;
        system.store_mut().load_values(values)?;
        Ok(system)
    }
}

/// Reads the `# system <kind>` header of a manifest.
pub fn checkpoint_kind(manifest: &str) -> Result<SystemKind> {
    manifest
        .lines()
        .filter_map(|l| l.strip_prefix('#'))
        .find_map(|h| h.trim().strip_prefix("system "))
        .ok_or_else(|| Error::Format("checkpoint manifest has no system header".into()))?
        .trim()
        .parse()
}

impl Segmenter for System {
    fn segment(&self, input: &SentenceInput<'_>) -> Result<Vec<Span>> {
        match self {
            System::SpanSeg(m) => m.segment(input),
            System::Crf(m) => m.segment(input),
        }
    }
}
