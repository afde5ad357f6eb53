//! Span algebra: conversions between word lengths, fencepost spans and BIES
//! tags, plus candidate enumeration.
//!
//! A span `(l, r)` covers the tokens at 0-based positions `l..r`; a sentence
//! of `n` tokens has fenceposts `0..=n`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Default cap on candidate span width.
pub const DEFAULT_MAX_WIDTH: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub l: usize,
    pub r: usize,
}

impl Span {
    pub fn new(l: usize, r: usize) -> Result<Self> {
        if l < r {
            Ok(Self { l, r })
        } else {
            Err(Error::InvalidSpan { l, r })
        }
    }

    /// Builds a span without checking `l < r`. Only the decoder's internal
    /// bookkeeping needs zero-length spans.
    pub(crate) const fn unchecked(l: usize, r: usize) -> Self {
        Self { l, r }
    }

    pub fn width(&self) -> usize {
        self.r - self.l
    }

    pub fn is_empty(&self) -> bool {
        self.r <= self.l
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.l, self.r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BiesTag {
    B,
    I,
    E,
    S,
}

impl BiesTag {
    pub const ALL: [BiesTag; 4] = [BiesTag::B, BiesTag::I, BiesTag::E, BiesTag::S];

    pub fn index(self) -> usize {
        match self {
            BiesTag::B => 0,
            BiesTag::I => 1,
            BiesTag::E => 2,
            BiesTag::S => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for BiesTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            BiesTag::B => "B",
            BiesTag::I => "I",
            BiesTag::E => "E",
            BiesTag::S => "S",
        };
        f.write_str(c)
    }
}

impl FromStr for BiesTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "B" => Ok(BiesTag::B),
            "I" => Ok(BiesTag::I),
            "E" => Ok(BiesTag::E),
            "S" => Ok(BiesTag::S),
            other => Err(Error::UnknownTag(other.to_string())),
        }
    }
}

/// Parses a whitespace-separated tag string such as `"B E S"`.
pub fn parse_tags(text: &str) -> Result<Vec<BiesTag>> {
    text.split_whitespace().map(str::parse).collect()
}

pub fn format_tags(tags: &[BiesTag]) -> String {
    tags.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn words_to_spans(word_lengths: &[usize]) -> Result<Vec<Span>> {
    let mut start = 0;
    word_lengths
        .iter()
        .enumerate()
        .map(|(index, &len)| {
            if len == 0 {
                return Err(Error::InvalidWordLength { index });
            }
            let span = Span::unchecked(start, start + len);
            start += len;
            Ok(span)
        })
        .collect()
}

/// True iff `spans` are sorted, contiguous and cover exactly `[0, n)`.
pub fn is_partition(spans: &[Span], n: usize) -> bool {
    let mut pos = 0;
    for s in spans {
        if s.l != pos || s.r <= s.l {
            return false;
        }
        pos = s.r;
    }
    pos == n && (n > 0 || spans.is_empty())
}

/// Groups tokens into words, joining the tokens of each word with `joiner`
/// (`"_"` for Vietnamese, `""` for Chinese).
pub fn spans_to_words<S: AsRef<str>>(
    spans: &[Span],
    tokens: &[S],
    joiner: &str,
) -> Result<Vec<String>> {
    if !is_partition(spans, tokens.len()) {
        return Err(Error::NotPartition { n: tokens.len() });
    }
    Ok(spans
        .iter()
        .map(|s| {
            tokens[s.l..s.r]
                .iter()
                .map(AsRef::as_ref)
                .collect::<Vec<_>>()
                .join(joiner)
        })
        .collect())
}

pub fn spans_to_bies(spans: &[Span]) -> Result<Vec<BiesTag>> {
    let n = spans.last().map_or(0, |s| s.r);
    if spans.is_empty() || !is_partition(spans, n) {
        return Err(Error::NotPartition { n });
    }
    let mut tags = Vec::with_capacity(n);
    for s in spans {
        if s.width() == 1 {
            tags.push(BiesTag::S);
        } else {
            tags.push(BiesTag::B);
            tags.extend(std::iter::repeat_n(BiesTag::I, s.width() - 2));
            tags.push(BiesTag::E);
        }
    }
    Ok(tags)
}

/// Decodes a possibly ill-formed tag sequence into a partition.
///
/// Left to right: `B` opens a word, and so does `I` when nothing is open.
/// `E` closes the open word (or forms a singleton), `S` is always a
/// singleton. A `B` or `S` arriving while a word is open first closes that
/// word at the previous fencepost, and the end of the sentence closes
/// whatever is still open.
pub fn bies_to_spans(tags: &[BiesTag]) -> Result<Vec<Span>> {
    if tags.is_empty() {
        return Err(Error::EmptyTags);
    }
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            BiesTag::B => {
                if let Some(start) = open {
                    spans.push(Span::unchecked(start, i));
                }
                open = Some(i);
            }
            BiesTag::I => {
                open.get_or_insert(i);
            }
            BiesTag::E => {
                let start = open.take().unwrap_or(i);
                spans.push(Span::unchecked(start, i + 1));
            }
            BiesTag::S => {
                if let Some(start) = open.take() {
                    spans.push(Span::unchecked(start, i));
                }
                spans.push(Span::unchecked(i, i + 1));
            }
        }
    }
    if let Some(start) = open {
        spans.push(Span::unchecked(start, tags.len()));
    }
    Ok(spans)
}

/// All spans `(l, r)` with `0 <= l < r <= n` and `r - l <= max_width`,
/// ascending by `(l, r)`.
pub fn enumerate_spans(n: usize, max_width: usize) -> Vec<Span> {
    let mut out = Vec::with_capacity(enumerated_count(n, max_width));
    for l in 0..n {
        for r in l + 1..=(l + max_width).min(n) {
            out.push(Span::unchecked(l, r));
        }
    }
    out
}

/// `|enumerate_spans(n, w)|` in closed form.
pub fn enumerated_count(n: usize, max_width: usize) -> usize {
    (0..n).map(|l| max_width.min(n - l)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use BiesTag::*;

    fn spans(pairs: &[(usize, usize)]) -> Vec<Span> {
        pairs
            .iter()
            .map(|&(l, r)| Span::new(l, r).unwrap())
            .collect()
    }

    #[test]
    fn words_to_spans_examples() {
        assert_eq!(
            words_to_spans(&[2, 1, 2]).unwrap(),
            spans(&[(0, 2), (2, 3), (3, 5)])
        );
        assert_eq!(words_to_spans(&[1]).unwrap(), spans(&[(0, 1)]));
        assert_eq!(words_to_spans(&[3]).unwrap(), spans(&[(0, 3)]));
        assert!(words_to_spans(&[2, 0]).is_err());
    }

    #[test]
    fn zero_length_span_rejected() {
        assert!(Span::new(2, 2).is_err());
        assert!(Span::new(3, 1).is_err());
    }

    #[test]
    fn spans_to_words_examples() {
        let tokens = ["học", "sinh", "học", "sinh", "học"];
        let words = spans_to_words(&spans(&[(0, 2), (2, 3), (3, 5)]), &tokens, "_").unwrap();
        assert_eq!(words, ["học_sinh", "học", "sinh_học"]);
        assert_eq!(
            spans_to_words(&spans(&[(0, 1)]), &["a"], "_").unwrap(),
            ["a"]
        );
        assert!(spans_to_words(&spans(&[(0, 2), (1, 3)]), &["a", "b", "c"], "_").is_err());
    }

    #[test]
    fn bies_examples() {
        assert_eq!(
            spans_to_bies(&spans(&[(0, 2), (2, 3), (3, 5)])).unwrap(),
            [B, E, S, B, E]
        );
        assert_eq!(spans_to_bies(&spans(&[(0, 3)])).unwrap(), [B, I, E]);
        assert_eq!(spans_to_bies(&spans(&[(0, 1), (1, 2)])).unwrap(), [S, S]);
        assert!(spans_to_bies(&spans(&[(0, 2), (3, 4)])).is_err());

        assert_eq!(
            bies_to_spans(&[B, E, S, B, E]).unwrap(),
            spans(&[(0, 2), (2, 3), (3, 5)])
        );
        assert_eq!(
            bies_to_spans(&[S, S, S]).unwrap(),
            spans(&[(0, 1), (1, 2), (2, 3)])
        );
        assert_eq!(bies_to_spans(&[I, E, B]).unwrap(), spans(&[(0, 2), (2, 3)]));
        assert!(matches!(bies_to_spans(&[]), Err(Error::EmptyTags)));
    }

    #[test]
    fn repair_of_interrupted_words() {
        // B B: the first word is closed by the second B
        assert_eq!(bies_to_spans(&[B, B, E]).unwrap(), spans(&[(0, 1), (1, 3)]));
        // B S: S closes the pending word at the previous fencepost
        assert_eq!(bies_to_spans(&[B, I, S]).unwrap(), spans(&[(0, 2), (2, 3)]));
        // stray E with nothing open is a singleton
        assert_eq!(bies_to_spans(&[E, E]).unwrap(), spans(&[(0, 1), (1, 2)]));
    }

    #[test]
    fn enumerate_examples() {
        assert_eq!(
            enumerate_spans(3, 7),
            spans(&[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
        );
        assert_eq!(enumerate_spans(3, 1), spans(&[(0, 1), (1, 2), (2, 3)]));
        let nine = enumerate_spans(9, 7);
        for excluded in spans(&[(0, 8), (0, 9), (1, 9)]) {
            assert!(!nine.contains(&excluded));
        }
        assert!(nine.contains(&Span::new(2, 9).unwrap()));
        assert_eq!(nine.len(), enumerated_count(9, 7));
        assert_eq!(nine.len(), 7 * 3 + 6 + 5 + 4 + 3 + 2 + 1);
    }

    #[test]
    fn partition_examples() {
        assert!(is_partition(&spans(&[(0, 2), (2, 3), (3, 5)]), 5));
        assert!(!is_partition(&spans(&[(0, 2), (3, 5)]), 5));
        assert!(!is_partition(&spans(&[(0, 2), (1, 3), (3, 5)]), 5));
        assert!(!is_partition(&spans(&[(0, 2)]), 3));
    }

    #[test]
    fn tag_parsing() {
        assert_eq!(parse_tags("B E S").unwrap(), [B, E, S]);
        assert!(matches!(parse_tags("B X S"), Err(Error::UnknownTag(t)) if t == "X"));
        assert_eq!(format_tags(&[S, B, E]), "S B E");
    }
}
