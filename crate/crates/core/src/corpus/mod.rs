//! Segmented corpora in the Vietnamese (underscore-joined syllables) and
//! Chinese (space-separated words of characters) formats.

mod features;
mod vocab;

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

pub use features::{
    load_bies_file, load_contextual_file, load_static_embeddings, parse_bies_text,
    parse_contextual_text, parse_static_embeddings, write_contextual, ContextRecord,
    StaticEmbeddings,
};
pub use vocab::{oov_rate, Vocabulary, BOS, EOS, UNK};

use crate::error::{io_error, Error, Result};
use crate::span::{spans_to_words, words_to_spans, Span};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Language {
    Vietnamese,
    Chinese,
}

impl Language {
    /// String placed between the tokens of a multi-token word.
    pub fn joiner(self) -> &'static str {
        match self {
            Language::Vietnamese => "_",
            Language::Chinese => "",
        }
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vietnamese" | "vi" => Ok(Language::Vietnamese),
            "chinese" | "zh" => Ok(Language::Chinese),
            other => Err(Error::Config(format!(
                "unknown language {other:?} (expected vietnamese or chinese)"
            ))),
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Language::Vietnamese => "vietnamese",
            Language::Chinese => "chinese",
        })
    }
}

/// A token sequence with its gold segmentation as a span partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentedSentence {
    pub tokens: Vec<String>,
    pub spans: Vec<Span>,
}

impl SegmentedSentence {
    /// Builds a sentence from its words, each given as a list of tokens.
    pub fn from_words(words: Vec<Vec<String>>) -> Result<Self> {
        let lengths: Vec<usize> = words.iter().map(Vec::len).collect();
        let spans = words_to_spans(&lengths)?;
        Ok(Self {
            tokens: words.into_iter().flatten().collect(),
            spans,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self, language: Language) -> Vec<String> {
        spans_to_words(&self.spans, &self.tokens, language.joiner())
            .expect("sentence spans form a partition")
    }

    /// Serializes back to the corpus line format.
    pub fn to_line(&self, language: Language) -> String {
        self.words(language).join(" ")
    }
}

/// Collapses runs of whitespace to single spaces and trims both ends.
pub fn normalize_whitespace(line: &str) -> String {
    line.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn parse_vietnamese_line(line: &str) -> Result<SegmentedSentence> {
    let words: Vec<&str> = line.split_whitespace().collect();
    if words.is_empty() {
        return Err(Error::Format("empty sentence".into()));
    }
    let words = words
        .into_iter()
        .map(|w| {
            let syllables: Vec<String> = w.split('_').map(str::to_string).collect();
            if syllables.iter().any(String::is_empty) {
                Err(Error::Format(format!("word {w:?} has an empty syllable")))
            } else {
                Ok(syllables)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    SegmentedSentence::from_words(words)
}

pub fn parse_chinese_line(line: &str) -> Result<SegmentedSentence> {
    let words: Vec<Vec<String>> = line
        .split_whitespace()
        .map(|w| w.chars().map(String::from).collect())
        .collect();
    if words.is_empty() {
        return Err(Error::Format("empty sentence".into()));
    }
    SegmentedSentence::from_words(words)
}

pub fn parse_line(line: &str, language: Language) -> Result<SegmentedSentence> {
    match language {
        Language::Vietnamese => parse_vietnamese_line(line),
        Language::Chinese => parse_chinese_line(line),
    }
}

/// Splits an unsegmented input line into tokens: whitespace-separated
/// syllables for Vietnamese, non-whitespace characters for Chinese.
pub fn tokenize_raw(line: &str, language: Language) -> Result<Vec<String>> {
    match language {
        Language::Vietnamese => line
            .split_whitespace()
            .map(|t| {
                if t.contains('_') {
                    Err(Error::Format(format!("syllable {t:?} contains '_'")))
                } else {
                    Ok(t.to_string())
                }
            })
            .collect(),
        Language::Chinese => Ok(line
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(String::from)
            .collect()),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub sentences: Vec<SegmentedSentence>,
    pub language: Language,
}

impl Corpus {
    /// Parses one sentence per line. Blank lines are rejected with their
    /// 1-based line number.
    pub fn parse(text: &str, language: Language) -> Result<Self> {
        let sentences = text
            .lines()
            .enumerate()
            .map(|(i, line)| {
                parse_line(line, language).map_err(|e| Error::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            sentences,
            language,
        })
    }

    pub fn read(path: impl AsRef<Path>, language: Language) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_error(path))?;
        Self::parse(&text, language).map_err(|e| match e {
            Error::Parse { line, message } => Error::Parse {
                line,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sentences {
            out.push_str(&s.to_line(self.language));
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(SegmentedSentence::len).sum()
    }

    pub fn stats(&self) -> CorpusStats {
        let mut stats = CorpusStats {
            sentences: self.sentences.len(),
            ..Default::default()
        };
        let mut chars = HashSet::new();
        let mut tokens = HashSet::new();
        let mut words = HashSet::new();
        for s in &self.sentences {
            stats.tokens += s.len();
            stats.words += s.spans.len();
            for t in &s.tokens {
                stats.characters += t.chars().count();
                chars.extend(t.chars());
                tokens.insert(t.as_str());
            }
            words.extend(s.words(self.language));
        }
        stats.character_types = chars.len();
        stats.token_types = tokens.len();
        stats.word_types = words.len();
        stats
    }
}

/// Size statistics of a corpus split. Characters are Unicode scalar values
/// of the tokens; separators are not counted.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CorpusStats {
    pub sentences: usize,
    pub characters: usize,
    pub tokens: usize,
    pub words: usize,
    pub character_types: usize,
    pub token_types: usize,
    pub word_types: usize,
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "sentences\t{}", self.sentences)?;
        writeln!(f, "characters\t{}", self.characters)?;
        writeln!(f, "tokens\t{}", self.tokens)?;
        writeln!(f, "words\t{}", self.words)?;
        writeln!(f, "character_types\t{}", self.character_types)?;
        writeln!(f, "token_types\t{}", self.token_types)?;
        write!(f, "word_types\t{}", self.word_types)
    }
}
