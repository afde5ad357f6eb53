//! Sentences bundled with their optional per-token features.

use crate::corpus::{ContextRecord, Corpus};
use crate::error::{Error, Result};
use crate::span::{BiesTag, Span};

/// Everything a system may look at when segmenting one sentence.
#[derive(Clone, Copy, Debug)]
pub struct SentenceInput<'a> {
    pub tokens: &'a [String],
    pub tags: Option<&'a [BiesTag]>,
    pub context: Option<&'a ContextRecord>,
}

impl<'a> SentenceInput<'a> {
    pub fn plain(tokens: &'a [String]) -> Self {
        Self {
            tokens,
            tags: None,
            context: None,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// A corpus with aligned optional tag and contextual feature files.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub corpus: Corpus,
    pub tags: Option<Vec<Vec<BiesTag>>>,
    pub context: Option<Vec<ContextRecord>>,
}

impl Dataset {
    pub fn new(corpus: Corpus) -> Self {
        Self {
            corpus,
            tags: None,
            context: None,
        }
    }

    pub fn with_tags(mut self, tags: Vec<Vec<BiesTag>>) -> Result<Self> {
        if tags.len() != self.corpus.len() {
            return Err(Error::Misaligned(format!(
                "{} tag lines for {} sentences",
                tags.len(),
                self.corpus.len()
            )));
        }
        self.tags = Some(tags);
        Ok(self)
    }

    pub fn with_context(mut self, context: Vec<ContextRecord>) -> Result<Self> {
        if context.len() != self.corpus.len() {
            return Err(Error::Misaligned(format!(
                "{} contextual records for {} sentences",
                context.len(),
                self.corpus.len()
            )));
        }
        self.context = Some(context);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.corpus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corpus.is_empty()
    }

    pub fn input(&self, i: usize) -> SentenceInput<'_> {
        SentenceInput {
            tokens: &self.corpus.sentences[i].tokens,
            tags: self.tags.as_ref().map(|t| t[i].as_slice()),
            context: self.context.as_ref().map(|c| &c[i]),
        }
    }

    pub fn gold(&self, i: usize) -> &[Span] {
        &self.corpus.sentences[i].spans
    }
}

/// A system that maps a sentence to a segmentation.
pub trait Segmenter {
    /// Returns a partition of `[0, input.len())`.
    fn segment(&self, input: &SentenceInput<'_>) -> Result<Vec<Span>>;
}
