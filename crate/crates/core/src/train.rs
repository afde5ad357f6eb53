//! Training loop shared by both systems: greedy token-budget batching,
//! AdamW updates, per-epoch dev evaluation and early stopping.

use std::fmt;
use std::thread;

use rand::seq::SliceRandom;
use rand::Rng;
use spanseg_neural::{seeded_rng, AdamW, AdamWConfig, ParamStore};

use crate::data::{Dataset, Segmenter};
use crate::error::{Error, Result};
use crate::eval::prf;
use crate::model::SentenceLoss;
use crate::span::Span;
use crate::system::System;

/// Groups sentences, in the given order, into batches of at most `budget`
/// tokens. A sentence longer than the budget forms a batch of its own.
pub fn pack_batches(order: &[usize], lengths: &[usize], budget: usize) -> Vec<Vec<usize>> {
    let mut batches = Vec::new();
    let mut current = Vec::new();
    let mut tokens = 0;
    for &i in order {
        if !current.is_empty() && tokens + lengths[i] > budget {
            batches.push(std::mem::take(&mut current));
            tokens = 0;
        }
        current.push(i);
        tokens += lengths[i];
    }
    if !current.is_empty() {
        batches.push(current);
    }
    batches
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops once `patience` epochs pass without a strictly better score.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }

    pub fn update(&mut self, epoch: usize, score: f64) -> StopDecision {
        match self.best {
            Some((_, b)) if score <= b => {}
            _ => {
                self.best = Some((epoch, score));
                return StopDecision::Improved;
            }
        }
        let (best_epoch, _) = self.best.expect("set above");
        if epoch >= best_epoch + self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub dev_f: f64,
}

impl fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch {} loss {:.8} dev_f {:.4}",
            self.epoch, self.loss, self.dev_f
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    /// Free-form notes, written as `#` lines ahead of the epoch lines.
    pub notes: Vec<String>,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_f: f64,
    /// Gold spans wider than the width cap, summed over the first epoch.
    pub dropped_spans: usize,
}

impl TrainLog {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for n in &self.notes {
            out.push_str(&format!("# {n}\n"));
        }
        for e in &self.epochs {
            out.push_str(&format!("{e}\n"));
        }
        out
    }
}

fn worker_count(jobs: usize) -> usize {
    thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(jobs)
        .max(1)
}

/// Segments every sentence of `data`, in parallel, preserving order.
pub fn segment_dataset<S: Segmenter + Sync + ?Sized>(
    system: &S,
    data: &Dataset,
) -> Result<Vec<Vec<Span>>> {
    let n = data.len();
    let workers = worker_count(n);
    let chunk = n.div_ceil(workers.max(1)).max(1);
    let idx: Vec<usize> = (0..n).collect();
    thread::scope(|s| {
        let handles: Vec<_> = idx
            .chunks(chunk)
            .map(|ids| {
                s.spawn(move || {
                    ids.iter()
                        .map(|&i| system.segment(&data.input(i)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(n);
        for h in handles {
            for r in h.join().expect("segmentation worker panicked") {
                out.push(r?);
            }
        }
        Ok(out)
    })
}

/// Word F-score of `system` on `data`, as a percentage.
pub fn dataset_f<S: Segmenter + Sync + ?Sized>(system: &S, data: &Dataset) -> Result<f64> {
    let pred = segment_dataset(system, data)?;
    let gold: Vec<Vec<Span>> = (0..data.len()).map(|i| data.gold(i).to_vec()).collect();
    Ok(prf(&gold, &pred)?.f1)
}

fn batch_losses(
    system: &System,
    data: &Dataset,
    batch: &[usize],
    seeds: &[u64],
) -> Result<Vec<SentenceLoss>> {
    let workers = worker_count(batch.len());
    let chunk = batch.len().div_ceil(workers);
    let jobs: Vec<(usize, u64)> = batch.iter().copied().zip(seeds.iter().copied()).collect();
    thread::scope(|s| {
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|&(i, seed)| {
                            let mut rng = seeded_rng(seed);
                            system.sentence_loss(&data.input(i), data.gold(i), Some(&mut rng))
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(batch.len());
        for h in handles {
            for r in h.join().expect("training worker panicked") {
                out.push(r?);
            }
        }
        Ok(out)
    })
}

/// Trains `system` in place and leaves it holding the parameters of the
/// best dev epoch. `on_epoch` sees each epoch record as it is produced.
pub fn train(
    system: &mut System,
    train: &Dataset,
    dev: &Dataset,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainLog> {
    if train.is_empty() {
        return Err(Error::Config("training corpus is empty".into()));
    }
    if dev.is_empty() {
        return Err(Error::Config("dev corpus is empty".into()));
    }
    let config = system.config().clone();
    let mut rng = seeded_rng(config.seed);
    let mut optimizer = AdamW::for_store(
        AdamWConfig {
            lr: config.lr,
            weight_decay: config.weight_decay,
            ..Default::default()
        },
        system.store(),
    );
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best: Option<ParamStore> = None;
    let lengths: Vec<usize> = train.corpus.sentences.iter().map(|s| s.len()).collect();
    let mut log = TrainLog {
        notes: vec![
            format!("system {}", system.kind()),
            "loss is averaged per sentence, then over the sentences of a batch".into(),
        ],
        ..Default::default()
    };
    if matches!(system, System::SpanSeg(_)) {
        log.notes.push(format!(
            "span loss is the mean over enumerated spans of width <= {}, not over all n(n+1)/2 spans",
            config.max_width
        ));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in pack_batches(&order, &lengths, config.batch_token_budget) {
            let seeds: Vec<u64> = batch.iter().map(|_| rng.random()).collect();
            let losses = batch_losses(system, train, &batch, &seeds)?;
            let scale = 1.0 / batch.len() as f64;
            let store = system.store_mut();
            for l in &losses {
                total += l.value;
                if epoch == 1 {
                    log.dropped_spans += l.dropped_spans;
                }
                store.accumulate(&l.grads, scale);
            }
            optimizer.step(store)?;
        }
        let record = EpochRecord {
            epoch,
            loss: total / train.len() as f64,
            dev_f: dataset_f(&*system, dev)?,
        };
        on_epoch(&record);
        log.epochs.push(record.clone());
        match stopper.update(epoch, record.dev_f) {
            StopDecision::Improved => best = Some(system.store().clone()),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    if log.dropped_spans > 0 {
        log.notes.push(format!(
            "{} gold spans wider than {} were excluded from the positives",
            log.dropped_spans, config.max_width
        ));
    }
    let (best_epoch, best_dev_f) = stopper.best().expect("at least one epoch ran");
    log.best_epoch = best_epoch;
    log.best_dev_f = best_dev_f;
    log.notes
        .push(format!("best epoch {best_epoch} dev_f {best_dev_f:.4}"));
    if let Some(best) = best {
        system.store_mut().copy_values_from(&best);
    }
    Ok(log)
}
