//! Sequence loss, the per-fold training loop with early stopping on a task
//! metric, and ensemble production.

mod history;
mod loss;

pub use history::{EpochRecord, TrainHistory};
pub use loss::{sequence_loss, sequence_loss_var, LossValue, PROB_FLOOR};

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{build_vocab, FoldSpec, Protocol, SampleItem, Vocabulary};
use crate::inference::{greedy, InferenceError};
use crate::ndiff::{seeded_rng, sgd_step, split_seed, AdamConfig, AdamState, Graph, NdiffError, ParamSet};
use crate::seq2seq::{net, ModelConfig, ModelError, Seq2Seq};
use crate::worldsim::WorldMap;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite {what} in epoch {epoch} at item {item}")]
    NonFinite {
        what: &'static str,
        epoch: usize,
        item: String,
    },
    #[error("item {item} names unknown map `{map}`")]
    UnknownMap { item: String, map: String },
    #[error("{} of {total} ensemble members failed; member {}: {}", failed.len(), failed[0].0, failed[0].1)]
    Ensemble {
        failed: Vec<(usize, TrainError)>,
        total: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Numeric(#[from] NdiffError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Optimizer {
    Adam(AdamConfig),
    Sgd { learning_rate: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam(AdamConfig::default())
    }
}

/// Everything about a training run that is not model architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    pub protocol: Protocol,
    pub max_epochs: usize,
    /// Items per parameter update; gradients are averaged over the batch.
    pub batch_size: usize,
    pub seed: u64,
    pub ensemble_size: usize,
    pub optimizer: Optimizer,
    /// Validate every this many epochs (and always after the last one).
    pub eval_every: usize,
    /// Global gradient norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// End training once the validation metric reaches this value.
    pub target_metric: Option<f64>,
    /// Use only the first this many training items of a fold.
    pub train_limit: Option<usize>,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            protocol: Protocol::VDev,
            max_epochs: 50,
            batch_size: 1,
            seed: 0,
            ensemble_size: 10,
            optimizer: Optimizer::default(),
            eval_every: 1,
            clip_norm: Some(5.0),
            target_metric: None,
            train_limit: None,
        }
    }
}

impl TrainRunConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if self.ensemble_size == 0 {
            return bad("ensemble_size must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1");
        }
        if matches!(self.clip_norm, Some(c) if c.is_nan() || c <= 0.0) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }
}

/// A trained model with the vocabulary its embedding rows refer to.
#[derive(Debug, Clone)]
pub struct Trained<T> {
    pub model: Seq2Seq<T>,
    pub vocab: Vocabulary,
    pub history: TrainHistory,
}

pub(crate) fn find_map<'m>(maps: &'m [WorldMap], item: &SampleItem) -> Result<&'m WorldMap, TrainError> {
    maps.iter()
        .find(|m| m.name() == item.map)
        .ok_or_else(|| TrainError::UnknownMap {
            item: item.key(),
            map: item.map.clone(),
        })
}

/// Negative log-likelihood of one item's gold actions and its gradient.
/// Dropout masks come from `dropout_seed`; `None` runs in evaluation mode.
pub fn item_gradient<T: Scalar>(
    model: &Seq2Seq<T>,
    tokens: &[usize],
    item: &SampleItem,
    map: &WorldMap,
    dropout_seed: Option<u64>,
) -> Result<(f64, ParamSet<T>, usize), TrainError> {
    let mut g = match dropout_seed {
        Some(seed) => Graph::with_dropout(seeded_rng(seed)),
        None => Graph::new(),
    };
    let p = g.bind(model.params());
    let vars = net::rollout(&mut g, &p, model.config(), tokens, map, item.start, &item.actions)?;
    let loss = sequence_loss_var(&mut g, &vars.probs, &item.actions)?;
    let value = g.value(loss).item().as_f64();
    let grads = g.backward(loss)?.into_params();
    Ok((value, grads, g.clamped_logs()))
}

/// Fraction of `items` whose greedy decoding ends exactly at the gold pose.
/// `None` when there are no items.
pub fn exact_accuracy<T: Scalar>(
    model: &Seq2Seq<T>,
    vocab: &Vocabulary,
    items: &[SampleItem],
    maps: &[WorldMap],
) -> Result<Option<f64>, TrainError> {
    if items.is_empty() {
        return Ok(None);
    }
    let max_len = model.config().max_sentence_actions;
    let hits = items
        .par_iter()
        .map(|item| -> Result<bool, TrainError> {
            let map = find_map(maps, item)?;
            let d = greedy(
                std::slice::from_ref(model),
                &vocab.encode(&item.tokens),
                map,
                item.start,
                max_len,
            )?;
            Ok(!d.status.flagged() && d.end == item.end)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Some(hits.iter().filter(|&&h| h).count() as f64 / items.len() as f64))
}

// seed streams
const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_DROPOUT: u64 = 2;

enum OptState<T> {
    Adam(AdamState<T>),
    Sgd(f64),
}

/// Trains one model on `fold.train_items`, validating after epochs on the
/// fold's stopping items and keeping the best checkpoint (earliest on ties).
pub fn train_fold<T: Scalar>(
    fold: &FoldSpec,
    maps: &[WorldMap],
    base: &ModelConfig,
    run: &TrainRunConfig,
    seed: u64,
) -> Result<Trained<T>, TrainError> {
    run.validate()?;
    let used = &fold.train_items[..run.train_limit.unwrap_or(usize::MAX).min(fold.train_items.len())];
    let vocab = build_vocab(used);
    let config = ModelConfig {
        vocab_size: vocab.len(),
        ..base.clone()
    };
    let mut model = Seq2Seq::<T>::new(config, split_seed(seed, STREAM_INIT))?;

    let mut skipped = 0;
    let mut train = Vec::with_capacity(fold.train_items.len());
    for item in used {
        let map = find_map(maps, item)?;
        if item.feasible && item.replays(map) {
            train.push((item, vocab.encode(&item.tokens), map));
        } else {
            skipped += 1;
        }
    }
    let stopping = fold.stopping_items();

    let mut opt = match run.optimizer {
        Optimizer::Adam(c) => OptState::Adam(AdamState::new(c, model.params())),
        Optimizer::Sgd { learning_rate } => OptState::Sgd(learning_rate),
    };
    let mut history = TrainHistory::new(skipped);
    let mut best: Option<(f64, Seq2Seq<T>)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=run.max_epochs {
        let started = Instant::now();
        let epoch_seed = split_seed(seed, (epoch as u64) << 8);
        order.shuffle(&mut seeded_rng(split_seed(epoch_seed, STREAM_SHUFFLE)));
        let dropout_seed = split_seed(epoch_seed, STREAM_DROPOUT);
        let mut total = 0.0;
        let mut clamped = 0;
        for (b, batch) in order.chunks(run.batch_size).enumerate() {
            let mut acc: Option<ParamSet<T>> = None;
            for (i, &ix) in batch.iter().enumerate() {
                let (item, tokens, map) = &train[ix];
                let pos = (b * run.batch_size + i) as u64;
                let (loss, grads, hits) =
                    item_gradient(&model, tokens, item, map, Some(split_seed(dropout_seed, pos)))?;
                if !loss.is_finite() || !grads.all_finite() {
                    let what = if loss.is_finite() { "gradient" } else { "loss" };
                    return Err(TrainError::NonFinite {
                        what,
                        epoch,
                        item: item.key(),
                    });
                }
                total += loss;
                clamped += hits;
                acc = Some(match acc {
                    None => grads,
                    Some(mut a) => {
                        for ((_, x), (_, y)) in a.iter_mut().zip(grads.iter()) {
                            x.data_mut().iter_mut().zip(y.data()).for_each(|(x, &y)| *x = *x + y);
                        }
                        a
                    }
                });
            }
            let Some(mut grads) = acc else { continue };
            if batch.len() > 1 {
                grads.scale(T::of(1.0 / batch.len() as f64));
            }
            if let Some(cap) = run.clip_norm {
                let norm = grads.global_norm().as_f64();
                if norm > cap {
                    grads.scale(T::of(cap / norm));
                }
            }
            match &mut opt {
                OptState::Adam(state) => state.step(model.params_mut(), &grads)?,
                OptState::Sgd(lr) => sgd_step(model.params_mut(), &grads, *lr)?,
            }
        }
        let train_loss = if train.is_empty() {
            0.0
        } else {
            total / train.len() as f64
        };

        let metric = if epoch % run.eval_every == 0 || epoch == run.max_epochs {
            exact_accuracy(&model, &vocab, stopping, maps)?
        } else {
            None
        };
        history.push(EpochRecord {
            epoch,
            train_loss,
            validation_metric: metric,
            clamped_logs: clamped,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
        log::info!(
            "seed {seed} epoch {epoch}: loss {train_loss:.4}, {} {}",
            fold.stopping_tag(),
            metric.map_or("-".to_string(), |m| format!("{m:.4}"))
        );
        if let Some(m) = metric {
            if best.as_ref().is_none_or(|(b, _)| m > *b) {
                best = Some((m, model.clone()));
                history.stopping_epoch = epoch;
            }
            if run.target_metric.is_some_and(|t| m >= t) {
                break;
            }
        }
    }
    let model = match best {
        Some((_, m)) => m,
        // no stopping items: keep the final parameters
        None => {
            history.stopping_epoch = history.epochs.len();
            model
        }
    };
    Ok(Trained { model, vocab, history })
}

/// `run.ensemble_size` independent runs with seeds `run.seed + i`, in
/// parallel. Fails as a whole if any member fails.
pub fn train_ensemble<T: Scalar>(
    fold: &FoldSpec,
    maps: &[WorldMap],
    base: &ModelConfig,
    run: &TrainRunConfig,
) -> Result<Vec<Trained<T>>, TrainError> {
    run.validate()?;
    let results: Vec<Result<Trained<T>, TrainError>> = (0..run.ensemble_size as u64)
        .into_par_iter()
        .map(|i| train_fold(fold, maps, base, run, run.seed.wrapping_add(i)))
        .collect();
    let total = results.len();
    let mut members = Vec::with_capacity(total);
    let mut failed = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(t) => members.push(t),
            Err(e) => failed.push((i, e)),
        }
    }
    if failed.is_empty() {
        Ok(members)
    } else {
        Err(TrainError::Ensemble { failed, total })
    }
}

impl TrainError {
    /// The first underlying error of a failed ensemble, else `self`.
    pub fn root(&self) -> &TrainError {
        match self {
            TrainError::Ensemble { failed, .. } => failed[0].1.root(),
            other => other,
        }
    }
}

#[cfg(test)]
mod tests;
