use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{classification_metrics, FoldMetrics, MetricsReport};
use super::{ClaimFeatures, HeadKind, Model};
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::nn::{AdamW, AdamWConfig, StepLr, Tape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub features: ClaimFeatures,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: StepLr,
    pub adamw: AdamWConfig,
    pub seed: u64,
}

impl TrainConfig {
    /// Epochs, learning rate and decay schedule used for each head.
    pub fn for_head(kind: HeadKind, seed: u64) -> TrainConfig {
        let (epochs, schedule) = match kind {
            HeadKind::Nli => (100, StepLr::constant(1e-2)),
            HeadKind::NliSent | HeadKind::NliSan => (100, StepLr::constant(1e-4)),
            HeadKind::NliPsent => (100, StepLr::decay_at(1e-5, 100)),
            HeadKind::NliGraph => (200, StepLr::decay_at(1e-4, 100)),
            HeadKind::NliGraphAbl => (200, StepLr::decay_at(1e-3, 100)),
        };
        TrainConfig {
            epochs,
            batch_size: 30,
            schedule,
            adamw: AdamWConfig::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch size must be positive"));
        }
        if !(self.schedule.base >= 0.0 && self.schedule.base.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be finite and non-negative", self.schedule.base)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
    pub seed: u64,
}

fn example_gradients(model: &Model, ex: &Example) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let probs = model.head.forward(&mut tape, &model.params, &ex.features)?;
    let loss = tape.cross_entropy(probs, ex.label.class_index())?;
    let grads = tape.backward(loss)?.param_grads(&model.params);
    Ok((tape.value(loss).as_scalar(), grads))
}

/// Mini-batch AdamW on mean cross-entropy. The shuffle order of every epoch
/// comes from `config.seed`, and per-example gradients are summed in batch
/// order, so a run is reproducible bit for bit.
pub fn train(model: &mut Model, data: &[Example], config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = AdamW::new(&model.params, config.adamw);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let lr = config.schedule.lr(epoch);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let model_ref = &*model;
            let results: Vec<Result<(f64, Vec<Tensor>)>> = batch
                .par_iter()
                .map(|&i| {
                    example_gradients(model_ref, &data[i]).map_err(|e| match e {
                        Error::NonFinite(msg) => {
                            Error::NonFinite(format!("epoch {epoch}, example {}: {msg}", data[i].id))
                        }
                        other => other,
                    })
                })
                .collect();
            model.params.zero_grad();
            let scale = 1.0 / batch.len() as f64;
            for (r, &i) in results.into_iter().zip(batch) {
                let (loss, grads) = r?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("epoch {epoch}, example {}: loss {loss}", data[i].id)));
                }
                total += loss;
                model.params.accumulate(&grads, scale)?;
            }
            opt.step(&mut model.params, lr)?;
        }
        epoch_losses.push(total / data.len() as f64);
    }
    Ok(TrainReport {
        epoch_losses,
        steps: opt.steps_taken(),
        seed: config.seed,
    })
}

/// Most probable class for each example.
pub fn predict(model: &Model, features: &[&ClaimFeatures]) -> Result<Vec<Label>> {
    features
        .par_iter()
        .map(|f| {
            let p = model.probabilities(f)?;
            Ok(if p[1] > p[0] { Label::True } else { Label::False })
        })
        .collect()
}

fn fold_key(seed: u64, id: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    h.finalize().into()
}

/// Fold index for each id: ids are ordered by a seeded hash and dealt round-robin,
/// so membership does not depend on input order.
pub fn assign_folds(ids: &[&str], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    if ids.len() < k {
        return Err(Error::invalid(format!("{k} folds for {} items", ids.len())));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
        return Err(Error::DuplicateId(dup.to_string()));
    }
    let mut order: Vec<(usize, [u8; 32])> = ids.iter().enumerate().map(|(i, id)| (i, fold_key(seed, id))).collect();
    order.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| ids[a.0].cmp(ids[b.0])));
    let mut folds = vec![0; ids.len()];
    for (pos, (i, _)) in order.into_iter().enumerate() {
        folds[i] = pos % k;
    }
    Ok(folds)
}

/// k-fold cross-validation. `factory` builds a fresh model for each fold
/// (given the fold index); folds train in parallel.
pub fn kfold_evaluate<F>(data: &[Example], k: usize, config: &TrainConfig, factory: F) -> Result<MetricsReport>
where
    F: Fn(usize) -> Result<Model> + Sync,
{
    let ids: Vec<&str> = data.iter().map(|e| e.id.as_str()).collect();
    let folds = assign_folds(&ids, k, config.seed)?;
    let per_fold: Vec<Result<(FoldMetrics, String)>> = (0..k)
        .into_par_iter()
        .map(|fold| {
            let train_set: Vec<Example> = data
                .iter()
                .zip(&folds)
                .filter(|(_, f)| **f != fold)
                .map(|(e, _)| e.clone())
                .collect();
            let test: Vec<&Example> = data.iter().zip(&folds).filter(|(_, f)| **f == fold).map(|(e, _)| e).collect();
            let mut model = factory(fold)?;
            let fold_config = TrainConfig {
                seed: config.seed.wrapping_add(fold as u64),
                ..*config
            };
            train(&mut model, &train_set, &fold_config)?;
            let feats: Vec<&ClaimFeatures> = test.iter().map(|e| &e.features).collect();
            let pred = predict(&model, &feats)?;
            let gold: Vec<Label> = test.iter().map(|e| e.label).collect();
            Ok((
                FoldMetrics {
                    fold,
                    train_size: train_set.len(),
                    test_size: test.len(),
                    metrics: classification_metrics(&gold, &pred)?,
                },
                model.config().kind.to_string(),
            ))
        })
        .collect();
    let mut fold_metrics = Vec::with_capacity(k);
    let mut head = String::new();
    for r in per_fold {
        let (m, h) = r?;
        fold_metrics.push(m);
        head = h;
    }
    Ok(MetricsReport::new(head, config.seed, fold_metrics))
}
