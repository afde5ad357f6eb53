//! External per-token feature files aligned to a corpus by sentence order.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use spanseg_neural::Tensor;

use super::Corpus;
use crate::error::{io_error, Error, Result};
use crate::span::{parse_tags, BiesTag};

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(io_error(path))
}

/// Pretrained token vectors in word2vec text format.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticEmbeddings {
    dim: usize,
    order: Vec<String>,
    vectors: HashMap<String, Vec<f64>>,
}

impl StaticEmbeddings {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Tokens in file order.
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.order.iter().map(String::as_str)
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    /// Vector of `token`, or zeros if the file has none.
    pub fn lookup(&self, token: &str) -> Vec<f64> {
        self.get(token)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; self.dim])
    }
}

/// Parses `"<count> <dim>"` followed by `"<token> <f1> ... <fdim>"` rows.
/// Row numbers in errors are 1-based and count the header as row 0.
pub fn parse_static_embeddings(text: &str) -> Result<StaticEmbeddings> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("static embeddings: empty file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (count, dim) = match fields.as_slice() {
        [c, d] => (
            c.parse::<usize>().ok(),
            d.parse::<usize>().ok().filter(|&d| d > 0),
        ),
        _ => (None, None),
    };
    let (Some(count), Some(dim)) = (count, dim) else {
        return Err(Error::Format(format!(
            "static embeddings: bad header {header:?}, expected \"<count> <dim>\""
        )));
    };
    let mut order = Vec::with_capacity(count);
    let mut vectors = HashMap::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let row = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().expect("non-empty line");
        let values = fields
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::Format(format!("static embeddings row {row}: bad value {f:?}"))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != dim {
            return Err(Error::Format(format!(
                "static embeddings row {row}: expected {dim} values, got {}",
                values.len()
            )));
        }
        if vectors.insert(token.to_string(), values).is_some() {
            return Err(Error::Format(format!(
                "static embeddings row {row}: duplicate token {token:?}"
            )));
        }
        order.push(token.to_string());
    }
    if order.len() != count {
        return Err(Error::Format(format!(
            "static embeddings: header announces {count} rows, found {}",
            order.len()
        )));
    }
    Ok(StaticEmbeddings {
        dim,
        order,
        vectors,
    })
}

pub fn load_static_embeddings(path: impl AsRef<Path>) -> Result<StaticEmbeddings> {
    parse_static_embeddings(&read(path.as_ref())?)
}

/// One tag line per sentence, aligned token by token.
pub fn parse_bies_text(text: &str, corpus: &Corpus) -> Result<Vec<Vec<BiesTag>>> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() != corpus.len() {
        return Err(Error::Misaligned(format!(
            "tag file has {} lines, corpus has {} sentences",
            lines.len(),
            corpus.len()
        )));
    }
    lines
        .iter()
        .zip(&corpus.sentences)
        .enumerate()
        .map(|(i, (line, sentence))| {
            let tags = parse_tags(line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if tags.len() != sentence.len() {
                return Err(Error::Misaligned(format!(
                    "sentence {i}: {} tags for {} tokens",
                    tags.len(),
                    sentence.len()
                )));
            }
            Ok(tags)
        })
        .collect()
}

pub fn load_bies_file(path: impl AsRef<Path>, corpus: &Corpus) -> Result<Vec<Vec<BiesTag>>> {
    parse_bies_text(&read(path.as_ref())?, corpus)
}

/// Contextual vectors for one sentence: either one row per token, or one row
/// per token plus leading and trailing sentinel rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextRecord {
    rows: Tensor,
    with_sentinels: bool,
}

impl ContextRecord {
    pub fn new(rows: Tensor, token_count: usize) -> Result<Self> {
        let with_sentinels = if rows.rows() == token_count {
            false
        } else if rows.rows() == token_count + 2 {
            true
        } else {
            return Err(Error::Misaligned(format!(
                "{} rows for a {token_count}-token sentence (expected {token_count} or {})",
                rows.rows(),
                token_count + 2
            )));
        };
        Ok(Self {
            rows,
            with_sentinels,
        })
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    pub fn has_sentinels(&self) -> bool {
        self.with_sentinels
    }

    /// All rows as stored.
    pub fn rows(&self) -> &Tensor {
        &self.rows
    }

    /// Vector of the token at 0-based position `i`.
    pub fn token_row(&self, i: usize) -> &[f64] {
        self.rows.row(if self.with_sentinels { i + 1 } else { i })
    }
}

/// Parses records of the form `# <index> <n> <d>`, `n` rows of `d` floats and
/// a blank line. Errors name the 0-based record index.
pub fn parse_contextual_text(text: &str, corpus: &Corpus) -> Result<Vec<ContextRecord>> {
    let mut lines = text.lines().peekable();
    let mut records = Vec::with_capacity(corpus.len());
    let mut dim = None;
    loop {
        while lines.peek().is_some_and(|l| l.trim().is_empty()) {
            lines.next();
        }
        let Some(header) = lines.next() else { break };
        let index = records.len();
        let err = |msg: String| Error::Misaligned(format!("contextual record {index}: {msg}"));
        let fields: Vec<&str> = header.split_whitespace().collect();
        let parsed: Option<(usize, usize, usize)> = match fields.as_slice() {
            ["#", i, n, d] => (|| Some((i.parse().ok()?, n.parse().ok()?, d.parse().ok()?)))(),
            _ => None,
        };
        let Some((sentence_index, n, d)) = parsed else {
            return Err(err(format!("bad header {header:?}")));
        };
        if sentence_index != index {
            return Err(err(format!(
                "sentence index {sentence_index}, expected {index}"
            )));
        }
        if index >= corpus.len() {
            return Err(err(format!("corpus has only {} sentences", corpus.len())));
        }
        if *dim.get_or_insert(d) != d || d == 0 {
            return Err(err(format!("dimension {d}, expected {}", dim.unwrap_or(0))));
        }
        let mut data = Vec::with_capacity(n * d);
        for row in 0..n {
            let line = lines
                .next()
                .filter(|l| !l.trim().is_empty())
                .ok_or_else(|| err(format!("expected {n} rows, found {row}")))?;
            let before = data.len();
            for f in line.split_whitespace() {
                let v = f
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(format!("row {row}: bad value {f:?}")))?;
                data.push(v);
            }
            if data.len() - before != d {
                return Err(err(format!(
                    "row {row}: expected {d} values, got {}",
                    data.len() - before
                )));
            }
        }
        if lines.peek().is_some_and(|l| !l.trim().is_empty()) {
            return Err(err(format!("more than the announced {n} rows")));
        }
        let rows = Tensor::matrix(n, d, data)?;
        let record = ContextRecord::new(rows, corpus.sentences[index].len())
            .map_err(|e| err(e.to_string()))?;
        records.push(record);
    }
    if records.len() != corpus.len() {
        return Err(Error::Misaligned(format!(
            "contextual file has {} records, corpus has {} sentences",
            records.len(),
            corpus.len()
        )));
    }
    Ok(records)
}

pub fn load_contextual_file(path: impl AsRef<Path>, corpus: &Corpus) -> Result<Vec<ContextRecord>> {
    parse_contextual_text(&read(path.as_ref())?, corpus)
}

/// Writes records in the contextual embedding format.
pub fn write_contextual(records: &[ContextRecord]) -> String {
    let mut out = String::new();
    for (i, rec) in records.iter().enumerate() {
        let rows = rec.rows();
        let _ = writeln!(out, "# {i} {} {}", rows.rows(), rows.cols());
        for r in 0..rows.rows() {
            let line = rows
                .row(r)
                .iter()
                .map(|v| format!("{v:?}"))
                .collect::<Vec<_>>()
                .join(" ");
            out.push_str(&line);
            out.push('\n');
        }
        out.push('\n');
    }
    out
}
