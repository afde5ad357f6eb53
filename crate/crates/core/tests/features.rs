mod common;

use std::fs;

use rand::Rng;
use spanseg::cli::{cmd_segment, cmd_train};
use spanseg::corpus::{load_contextual_file, write_contextual, ContextRecord, Corpus};
use spanseg::span::{format_tags, spans_to_bies};
use spanseg::System;
use spanseg_neural::{seeded_rng, Tensor};

/// Contextual records with sentinel rows, as an exporter would write them.
fn contextual_text(corpus: &Corpus, dim: usize, seed: u64) -> String {
    let mut rng = seeded_rng(seed);
    let records: Vec<ContextRecord> = corpus
        .sentences
        .iter()
        .map(|s| {
            let rows = s.len() + 2;
            let data = (0..rows * dim)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            ContextRecord::new(Tensor::matrix(rows, dim, data).unwrap(), s.len()).unwrap()
        })
        .collect();
    write_contextual(&records)
}

fn tag_text(corpus: &Corpus) -> String {
    corpus
        .sentences
        .iter()
        .map(|s| format!("{}\n", format_tags(&spans_to_bies(&s.spans).unwrap())))
        .collect()
}

fn setup(extra: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::synthetic_corpus(20, 15, 9);
    let p = |n: &str| dir.path().join(n);
    fs::write(p("train.txt"), corpus.to_text()).unwrap();
    fs::write(p("train.tags"), tag_text(&corpus)).unwrap();
    fs::write(p("train.ctx"), contextual_text(&corpus, 6, 1)).unwrap();
    let raw: String = corpus
        .sentences
        .iter()
        .map(|s| format!("{}\n", s.tokens.join(" ")))
        .collect();
    fs::write(p("raw.txt"), raw).unwrap();
    let cfg = format!(
        "train=train.txt\ndev=train.txt\ncheckpoint=ckpt\n\
         train_tag_file=train.tags\ndev_tag_file=train.tags\ntrain_ctx_file=train.ctx\ndev_ctx_file=train.ctx\n\
         tag_file=train.tags\nctx_file=train.ctx\n\
         d_static=6\nd_dynamic=6\nd_char=4\nd_char_emb=3\nd_tag=3\nd_ctx_proj=4\n\
         layers=1\nhidden=6\nmlp_dim=6\nmax_epochs=2\n{extra}"
    );
    fs::write(p("run.cfg"), cfg).unwrap();
    dir
}

#[test]
fn exported_records_validate() {
    let corpus = common::synthetic_corpus(20, 15, 9);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.ctx");
    let text = contextual_text(&corpus, 8, 2);
    fs::write(&path, &text).unwrap();
    let records = load_contextual_file(&path, &corpus).unwrap();
    assert_eq!(records.len(), 20);
    for (r, s) in records.iter().zip(&corpus.sentences) {
        assert_eq!(r.rows().rows(), s.len() + 2);
        assert!(r.has_sentinels());
    }
    assert_eq!(write_contextual(&records), text);
}

#[test]
fn misaligned_record_names_its_index() {
    let corpus = common::synthetic_corpus(5, 15, 9);
    let mut shorter = corpus.clone();
    shorter.sentences[3].tokens.pop();
    shorter.sentences[3] = spanseg::corpus::SegmentedSentence::from_words(
        shorter.sentences[3]
            .tokens
            .iter()
            .map(|t| vec![t.clone()])
            .collect(),
    )
    .unwrap();
    let text = contextual_text(&shorter, 4, 3);
    let err = spanseg::corpus::parse_contextual_text(&text, &corpus).unwrap_err();
    assert!(err.to_string().contains("record 3"), "{err}");
}

#[test]
fn train_and_segment_with_tags_and_projected_context() {
    let dir = setup("use_tag=true\nuse_ctx=true\n");
    let out = cmd_train(dir.path().join("run.cfg"), |_| {}).unwrap();
    assert_eq!(out.system.config().d_ctx, 6);
    assert_eq!(out.system.config().token_dim(), 6 + 4 + 3 + 4);
    let loaded = System::load(dir.path().join("ckpt")).unwrap();
    assert!(loaded.config().use_tag && loaded.config().use_ctx);
    cmd_segment(
        dir.path().join("run.cfg"),
        dir.path().join("raw.txt"),
        dir.path().join("out.txt"),
    )
    .unwrap();
    let lines = fs::read_to_string(dir.path().join("out.txt"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(lines, 20);
}

#[test]
fn train_with_chunked_context() {
    let dir = setup("encoder_mode=chunked_ctx\nsystem=crf\n");
    let out = cmd_train(dir.path().join("run.cfg"), |_| {}).unwrap();
    assert_eq!(out.system.config().d_ctx, 6);
    cmd_segment(
        dir.path().join("run.cfg"),
        dir.path().join("raw.txt"),
        dir.path().join("out.txt"),
    )
    .unwrap();
}

#[test]
fn missing_feature_file_is_an_error() {
    let dir = setup("use_tag=true\n");
    let cfg = fs::read_to_string(dir.path().join("run.cfg")).unwrap();
    fs::write(
        dir.path().join("run.cfg"),
        cfg.replace("dev_tag_file=train.tags\n", ""),
    )
    .unwrap();
    let err = cmd_train(dir.path().join("run.cfg"), |_| {}).err().unwrap();
    assert!(err.to_string().contains("dev tag file"), "{err}");
}

#[test]
fn static_table_is_frozen_through_training() {
    let dir = setup("max_epochs=3\n");
    let p = |n: &str| dir.path().join(n);
    fs::write(
        p("static.txt"),
        "2 6\ns01 1 2 3 4 5 6\nnot_in_corpus 0.5 0.5 0.5 0.5 0.5 0.5\n",
    )
    .unwrap();
    let cfg = fs::read_to_string(p("run.cfg"))
        .unwrap()
        .replace("max_epochs=2\n", "");
    fs::write(p("run.cfg"), format!("{cfg}static_emb=static.txt\n")).unwrap();
    let out = cmd_train(p("run.cfg"), |_| {}).unwrap();
    let store = out.system.store();
    let table = store.value(store.id("embed.static").unwrap());
    let vocab = out.system.vocab();
    assert_eq!(
        table.row(vocab.token_id("s01")),
        &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
    );
    assert_eq!(table.row(vocab.token_id("not_in_corpus")), &[0.5; 6]);
    assert!(table.row(vocab.token_id("s02")).iter().all(|&v| v == 0.0));
}
