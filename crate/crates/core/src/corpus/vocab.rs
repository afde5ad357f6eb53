use std::collections::HashMap;

use super::Corpus;
use crate::error::{Error, Result};

pub const UNK: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;

const RESERVED_TOKENS: [&str; 3] = ["<unk>", "<s>", "</s>"];
const UNK_CHAR: &str = "<unk>";

/// Token, character and word inventories with counts. Ids are dense and
/// assigned in first-seen order after the reserved entries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    token_ids: HashMap<String, usize>,
    token_counts: Vec<u64>,
    chars: Vec<String>,
    char_ids: HashMap<String, usize>,
    char_counts: Vec<u64>,
    words: HashMap<String, u64>,
}

impl Vocabulary {
    fn empty() -> Self {
        let mut v = Self {
            tokens: Vec::new(),
            token_ids: HashMap::new(),
            token_counts: Vec::new(),
            chars: Vec::new(),
            char_ids: HashMap::new(),
            char_counts: Vec::new(),
            words: HashMap::new(),
        };
        for t in RESERVED_TOKENS {
            v.intern_token(t);
        }
        v.intern_char(UNK_CHAR);
        v
    }

    pub fn build(corpus: &Corpus) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut v = Self::empty();
        for s in &corpus.sentences {
            for t in &s.tokens {
                let id = v.intern_token(t);
                v.token_counts[id] += 1;
                for c in t.chars() {
                    let cid = v.intern_char(&c.to_string());
                    v.char_counts[cid] += 1;
                }
            }
            for w in s.words(corpus.language) {
                *v.words.entry(w).or_insert(0) += 1;
            }
        }
        Ok(v)
    }

    fn intern_token(&mut self, token: &str) -> usize {
        if let Some(&id) = self.token_ids.get(token) {
            return id;
        }
        let id = self.tokens.len();
        self.tokens.push(token.to_string());
        self.token_ids.insert(token.to_string(), id);
        self.token_counts.push(0);
        id
    }

    fn intern_char(&mut self, c: &str) -> usize {
        if let Some(&id) = self.char_ids.get(c) {
            return id;
        }
        let id = self.chars.len();
        self.chars.push(c.to_string());
        self.char_ids.insert(c.to_string(), id);
        self.char_counts.push(0);
        id
    }

    /// Registers additional tokens (e.g. those of a pretrained embedding
    /// file) with zero count, after all existing ids.
    pub fn extend_tokens<'a>(&mut self, tokens: impl IntoIterator<Item = &'a str>) {
        for t in tokens {
            self.intern_token(t);
        }
    }

    /// Id of `token`, or [`UNK`].
    pub fn token_id(&self, token: &str) -> usize {
        self.token_ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn lookup_token(&self, token: &str) -> Option<usize> {
        self.token_ids.get(token).copied()
    }

    pub fn char_id(&self, c: char) -> usize {
        let mut buf = [0u8; 4];
        self.char_ids
            .get(&*c.encode_utf8(&mut buf))
            .copied()
            .unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn token_count(&self, id: usize) -> u64 {
        self.token_counts[id]
    }

    pub fn tokens_len(&self) -> usize {
        self.tokens.len()
    }

    pub fn chars_len(&self) -> usize {
        self.chars.len()
    }

    pub fn contains_word(&self, word: &str) -> bool {
        self.words.contains_key(word)
    }

    pub fn word_count(&self, word: &str) -> u64 {
        self.words.get(word).copied().unwrap_or(0)
    }

    pub fn word_types(&self) -> usize {
        self.words.len()
    }

    /// Token ids in id order: `(token, count)`.
    pub fn tokens(&self) -> impl Iterator<Item = (&str, u64)> {
        self.tokens
            .iter()
            .zip(&self.token_counts)
            .map(|(t, &c)| (t.as_str(), c))
    }

    /// Text form used inside checkpoints: token and character sections with
    /// counts, in id order. Word inventories are not persisted.
    pub fn to_text(&self) -> String {
        let mut out = format!("tokens {}\n", self.tokens.len());
        for (t, c) in self.tokens.iter().zip(&self.token_counts) {
            out.push_str(&format!("{t} {c}\n"));
        }
        out.push_str(&format!("chars {}\n", self.chars.len()));
        for (t, c) in self.chars.iter().zip(&self.char_counts) {
            out.push_str(&format!("{t} {c}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut section = |name: &str| -> Result<Vec<(String, u64)>> {
            let header = lines.next().unwrap_or_default();
            let count: usize = header
                .strip_prefix(name)
                .and_then(|rest| rest.trim().parse().ok())
                .ok_or_else(|| {
                    Error::Format(format!(
                        "vocabulary: expected `{name} <count>`, got {header:?}"
                    ))
                })?;
            (0..count)
                .map(|_| {
                    let line = lines.next().unwrap_or_default();
                    let (entry, cnt) = line
                        .rsplit_once(' ')
                        .and_then(|(e, c)| Some((e, c.parse().ok()?)))
                        .ok_or_else(|| Error::Format(format!("vocabulary: bad entry {line:?}")))?;
                    Ok((entry.to_string(), cnt))
                })
                .collect()
        };
        let tokens = section("tokens")?;
        let chars = section("chars")?;
        let mut v = Self::empty();
        for (i, (t, c)) in tokens.into_iter().enumerate() {
            if v.intern_token(&t) != i {
                return Err(Error::Format(format!(
                    "vocabulary: token {t:?} out of order"
                )));
            }
            v.token_counts[i] = c;
        }
        for (i, (t, c)) in chars.into_iter().enumerate() {
            if v.intern_char(&t) != i {
                return Err(Error::Format(format!(
                    "vocabulary: char {t:?} out of order"
                )));
            }
            v.char_counts[i] = c;
        }
        Ok(v)
    }
}

/// Share of gold word occurrences in `eval` whose word string was never seen
/// in the vocabulary's training corpus.
pub fn oov_rate(train_vocab: &Vocabulary, eval: &Corpus) -> Result<f64> {
    let mut total = 0usize;
    let mut unseen = 0usize;
    for s in &eval.sentences {
        for w in s.words(eval.language) {
            total += 1;
            if !train_vocab.contains_word(&w) {
                unseen += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(unseen as f64 / total as f64)
}
