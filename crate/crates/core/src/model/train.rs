use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Document;
use crate::error::{Error, Result};
use crate::metrics::{f1_scores, ScoreMatrix};
use crate::model::forward::{bce_loss, gold_f64};
use crate::model::optim::AdamW;
use crate::model::{PaatModel, TrainConfig};
use crate::numerics::Matrix;

/// Offsets the training stream (shuffling and dropout) from the init stream.
const TRAIN_STREAM: u64 = 0x7472_6169_6e00;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-document loss over the epoch, with dropout active.
    pub train_bce: f64,
    pub valid_micro_f1: f64,
}

pub const EPOCH_LOG_HEADER: &str = "epoch\ttrain_bce\tvalid_micro_f1";

/// Tab-separated epoch log with a header line. Floats use the shortest
/// round-trip representation, so equal logs are equal bytes.
pub fn format_epoch_log(logs: &[EpochLog]) -> String {
    let mut out = String::from(EPOCH_LOG_HEADER);
    out.push('\n');
    for l in logs {
        writeln!(out, "{}\t{}\t{}", l.epoch, l.train_bce, l.valid_micro_f1).expect("writing to a String");
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation micro-F1.
    pub best: PaatModel,
    pub best_epoch: usize,
    pub logs: Vec<EpochLog>,
    pub stopped_early: bool,
}

/// Scores every document with the inference forward pass.
pub fn score_documents(model: &PaatModel, docs: &[Document]) -> Result<ScoreMatrix> {
    let l = model.config.labels;
    let mut scores = Vec::with_capacity(docs.len() * l);
    let mut gold = Vec::with_capacity(docs.len() * l);
    for d in docs {
        gold_f64(d, l)?;
        scores.extend(model.predict(&d.tokens)?.probs);
        gold.extend(d.gold_vector(l));
    }
    ScoreMatrix::new(docs.len(), l, scores, gold)
}

/// Mean inference-mode BCE over `docs`.
pub fn mean_bce(model: &PaatModel, docs: &[Document]) -> Result<f64> {
    if docs.is_empty() {
        return Err(Error::Input("no documents".into()));
    }
    let mut total = 0.0;
    for d in docs {
        let p = model.predict(&d.tokens)?;
        total += bce_loss(&p.probs, &gold_f64(d, model.config.labels)?);
    }
    Ok(total / docs.len() as f64)
}

fn accumulate(acc: &mut [Option<Matrix>], grads: Vec<Option<Matrix>>) {
    for (a, g) in acc.iter_mut().zip(grads) {
        match (a.as_mut(), g) {
            (Some(a), Some(g)) => a.add_assign(&g),
            (None, Some(g)) => *a = Some(g),
            _ => {}
        }
    }
}

/// Per-document AdamW training with validation after every epoch. The
/// returned model is the best-validation snapshot; training stops after
/// `patience` epochs without improvement.
pub fn train_loop(
    model: PaatModel,
    config: &TrainConfig,
    train: &[Document],
    valid: &[Document],
) -> Result<TrainOutcome> {
    train_loop_with(model, config, train, valid, |_| {})
}

/// [`train_loop`] with a callback invoked after each epoch.
pub fn train_loop_with(
    mut model: PaatModel,
    config: &TrainConfig,
    train: &[Document],
    valid: &[Document],
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Input("training and validation sets must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed ^ TRAIN_STREAM);
    let mut opt = AdamW::new(config, &model.params);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut logs = Vec::new();
    let mut best: Option<(f64, usize, PaatModel)> = None;
    let mut stale = 0;
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut acc: Vec<Option<Matrix>> = vec![None; model.params.len()];
        let mut pending = 0;
        for (step, &i) in order.iter().enumerate() {
            let (loss, grads) = model.loss_and_grads(&train[i], Some(&mut rng))?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    step: step + 1,
                    loss,
                });
            }
            total += loss;
            accumulate(&mut acc, grads);
            pending += 1;
            if pending == config.accum_steps || step + 1 == order.len() {
                if pending > 1 {
                    let s = 1.0 / pending as f64;
                    for g in acc.iter_mut().flatten() {
                        *g = g.scale(s);
                    }
                }
                opt.step(&mut model.params, &acc)?;
                acc.iter_mut().for_each(|g| *g = None);
                pending = 0;
            }
        }
        let sm = score_documents(&model, valid)?;
        let log = EpochLog {
            epoch,
            train_bce: total / train.len() as f64,
            valid_micro_f1: f1_scores(&sm, config.threshold)?.micro_f1,
        };
        log::info!(
            "epoch {epoch}: train_bce={:.6} valid_micro_f1={:.4}",
            log.train_bce,
            log.valid_micro_f1
        );
        on_epoch(&log);
        logs.push(log);
        if best.as_ref().is_none_or(|(f1, _, _)| log.valid_micro_f1 > *f1) {
            best = Some((log.valid_micro_f1, epoch, model.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                stopped_early = epoch < config.epochs;
                break;
            }
        }
    }
    let (_, best_epoch, best) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        best,
        best_epoch,
        logs,
        stopped_early,
    })
}
