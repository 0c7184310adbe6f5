use super::batch::{chunk_utterances, group_chunks, make_batches};
use crate::corpus::seed::derive_seed;
use crate::error::{Error, Result};
use crate::features::{assemble, FeatureContract, UtteranceFeatures};
use crate::nn::{adam_step, clip_global_norm, AdamConfig, ModelGraph, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub dropout_p: f64,
    pub chunk_len: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            dropout_p: 0.1,
            chunk_len: 100,
            batch_size: 8,
            max_epochs: 50,
            patience: 5,
            clip_norm: 5.0,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience < 1 {
            return Err(Error::Input("patience must be at least 1".into()));
        }
        if self.chunk_len < 11 {
            return Err(Error::Input("chunk_len must be at least 11".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Input("batch_size and max_epochs must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Input("dropout_p must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: TrainConfig = serde_json::from_str(text).map_err(|e| Error::Input(format!("train config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TrainConfig::from_json(&text)
    }
}

/// Per-epoch record of a run. Epoch numbers are 1-based.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub wall_secs: Vec<f64>,
    pub best_epoch: usize,
}

impl History {
    pub fn epochs(&self) -> usize {
        self.val_loss.len()
    }

    pub fn best_val_loss(&self) -> f64 {
        self.val_loss[self.best_epoch - 1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Keeps the best validation loss and stops after `patience` epochs
/// without a strict improvement.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            StopDecision::Improved
        } else if epoch - self.best_epoch >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}

/// Tracks the weighted mean of per-batch losses.
#[derive(Default)]
struct Mean {
    sum: f64,
    weight: f64,
}

impl Mean {
    fn add(&mut self, v: f64, w: f64) {
        self.sum += v * w;
        self.weight += w;
    }

    fn get(&self) -> f64 {
        if self.weight > 0.0 {
            self.sum / self.weight
        } else {
            0.0
        }
    }
}

/// Mean objective over `utts` in inference mode.
pub fn evaluate_loss(
    graph: &mut ModelGraph,
    contract: &FeatureContract,
    utts: &[UtteranceFeatures],
    chunk_len: usize,
    batch_size: usize,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut mean = Mean::default();
    for chunks in group_chunks(chunk_utterances(utts, chunk_len), batch_size, None) {
        let b = assemble(contract, utts, &chunks, chunk_len)?;
        let out = graph.forward(&b.input, false, false, &mut rng)?;
        let lg = graph.objective_loss(&out, &b.input, &b.labels, Some(&b.mask))?;
        mean.add(lg.loss, b.valid_steps() as f64);
    }
    Ok(mean.get())
}

fn snapshot(graph: &ModelGraph) -> Vec<Tensor> {
    graph.params().map(|p| p.value.clone()).collect()
}

fn restore(graph: &mut ModelGraph, values: Vec<Tensor>) {
    for (p, v) in graph.params_mut().zip(values) {
        p.value = v;
    }
}

/// Trains `graph` under its objective with ADAM and early stopping. On
/// return the graph holds the weights of the best validation epoch.
pub fn train_model(
    graph: &mut ModelGraph,
    contract: &FeatureContract,
    train: &[UtteranceFeatures],
    val: &[UtteranceFeatures],
    cfg: &TrainConfig,
) -> Result<History> {
    cfg.validate()?;
    contract.check(graph.spec())?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Input("training and validation sets must be non-empty".into()));
    }
    graph.set_dropout(cfg.dropout_p);
    let adam = cfg.adam();
    let mut stop = EarlyStopping::new(cfg.patience);
    let mut history = History::default();
    let mut best = snapshot(graph);
    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, epoch as u64, 1]));
        let mut mean = Mean::default();
        let batches = make_batches(train, cfg.chunk_len, cfg.batch_size, derive_seed(&[cfg.seed, epoch as u64, 0]));
        for (bi, chunks) in batches.iter().enumerate() {
            let b = assemble(contract, train, chunks, cfg.chunk_len)?;
            let diverged = |loss: f64| Error::Divergence {
                epoch,
                batch: bi,
                loss,
            };
            let out = match graph.forward(&b.input, true, true, &mut rng) {
                Ok(o) => o,
                Err(Error::Numeric(_)) => return Err(diverged(f64::NAN)),
                Err(e) => return Err(e),
            };
            let lg = graph.objective_loss(&out, &b.input, &b.labels, Some(&b.mask))?;
            if !lg.loss.is_finite() {
                return Err(diverged(lg.loss));
            }
            graph.zero_grad();
            graph.backward(&lg.d_output)?;
            let norm = clip_global_norm(graph.params_mut(), cfg.clip_norm);
            if !norm.is_finite() {
                return Err(diverged(lg.loss));
            }
            adam_step(graph.params_mut(), &adam);
            mean.add(lg.loss, b.valid_steps() as f64);
        }
        let val_loss = evaluate_loss(graph, contract, val, cfg.chunk_len, cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: batches.len(),
                loss: val_loss,
            });
        }
        history.train_loss.push(mean.get());
        history.val_loss.push(val_loss);
        history.wall_secs.push(started.elapsed().as_secs_f64());
        match stop.observe(epoch, val_loss) {
            StopDecision::Improved => best = snapshot(graph),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    history.best_epoch = stop.best_epoch();
    restore(graph, best);
    graph.zero_grad();
    Ok(history)
}
