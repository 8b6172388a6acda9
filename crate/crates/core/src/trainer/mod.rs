//! Minibatch training with validation, early stopping and resumable
//! checkpoints, plus the multi-architecture bake-off.

mod bakeoff;
mod checkpoint;
mod data;

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datapipe::{StripOrigin, StripPair, Subset};
use crate::error::{Error, Result};
use crate::model::{build_model, ModelSpec, Network};
use crate::nn::{AdamConfig, AdamState, Mode, ParamStore};
use crate::seeds;
use crate::tensor::{Dims, Tensor4};

pub use bakeoff::{bakeoff, BakeoffResult, BakeoffRow, REFERENCE_PARAMS};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use data::{phantom_corpus, phantom_corpus_member, CorpusVolume, TrainingData};

/// Dropout rate used when dropout is enabled and the model spec leaves it at zero.
pub const DEFAULT_DROPOUT: f64 = 0.1;

/// Minimum validation improvement that resets the patience counter.
pub const MIN_IMPROVEMENT: f64 = 1e-6;

const VALIDATION_BATCH: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_iterations: usize,
    /// Iterations between validations; absent means once per epoch.
    pub validation_interval: Option<usize>,
    /// Validations without improvement before stopping.
    pub patience: usize,
    pub dropout: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            batch_size: 16,
            max_iterations: 5_000,
            validation_interval: None,
            patience: 20,
            dropout: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, train_strips: usize) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 || self.batch_size > train_strips {
            return Err(Error::Config(format!(
                "batch size {} must be in 1..={train_strips} (training strips)",
                self.batch_size
            )));
        }
        if self.patience == 0 || self.validation_interval == Some(0) {
            return Err(Error::Config("patience and validation interval must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }

    /// The model spec actually trained: dropout resolved from the on/off switch.
    pub fn effective_spec(&self, spec: &ModelSpec) -> ModelSpec {
        match (self.dropout, spec.dropout_rate > 0.0) {
            (false, _) => spec.with_dropout(0.0),
            (true, true) => *spec,
            (true, false) => spec.with_dropout(DEFAULT_DROPOUT),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    /// Training MSE of every iteration, in order.
    pub train_mse: Vec<f64>,
    /// `(completed iterations, validation MSE)`; the first entry is the
    /// untrained baseline at 0.
    pub validation: Vec<(usize, f64)>,
    /// Index into `validation` of the best (lowest) entry.
    pub best: Option<usize>,
}

impl LearningCurve {
    pub fn best_validation(&self) -> Option<(usize, f64)> {
        self.best.map(|i| self.validation[i])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,train_mse,validation_mse\n");
        let mut val = self.validation.iter().peekable();
        if let Some(&&(0, v)) = val.peek() {
            let _ = writeln!(s, "0,,{v:e}");
            val.next();
        }
        for (i, t) in self.train_mse.iter().enumerate() {
            let it = i + 1;
            match val.peek() {
                Some(&&(vi, v)) if vi == it => {
                    let _ = writeln!(s, "{it},{t:e},{v:e}");
                    val.next();
                }
                _ => {
                    let _ = writeln!(s, "{it},{t:e},");
                }
            }
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    Patience,
}

/// What an observer sees of each optimisation step.
pub struct StepInfo<'a> {
    pub iteration: usize,
    pub loss: f64,
    pub batch: &'a [&'a StripOrigin],
}

fn stack(strips: &[&StripPair], pick: impl Fn(&StripPair) -> &[f32]) -> Result<Tensor4<f32>> {
    let d = strips[0].dims;
    let mut data = Vec::with_capacity(strips.len() * d.len());
    for s in strips {
        data.extend_from_slice(pick(s));
    }
    Tensor4::from_vec(Dims::new(strips.len(), 1, d.height, d.width), data)
}

/// Mean squared error over all strips, evaluated in inference mode.
pub fn evaluate_mse(net: &Network<f32>, strips: &[StripPair]) -> Result<f64> {
    if strips.is_empty() {
        return Err(Error::Input("no strips to evaluate".into()));
    }
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for chunk in strips.chunks(VALIDATION_BATCH) {
        let refs: Vec<&StripPair> = chunk.iter().collect();
        let input = stack(&refs, |s| &s.structure)?;
        let target = stack(&refs, |s| &s.flow)?;
        let pred = net.predict(&input)?;
        sum += pred
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &t)| (p as f64 - t as f64).powi(2))
            .sum::<f64>();
        count += pred.data().len();
    }
    Ok(sum / count as f64)
}

fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seeds::derive(seed, 0x5348, epoch as u64)));
    order
}

impl Checkpoint {
    /// Untrained state for `spec` under `config`.
    pub fn fresh(spec: &ModelSpec, config: &TrainConfig, split_seed: u64) -> Result<Self> {
        let spec = config.effective_spec(spec);
        let net = build_model::<f32>(&spec, config.seed)?;
        let adam = AdamState::new(&net.params, config.adam());
        Ok(Checkpoint {
            version: CHECKPOINT_VERSION,
            spec,
            config: config.clone(),
            best_params: net.params.clone(),
            params: net.params,
            adam,
            curve: LearningCurve::default(),
            split_seed,
            iteration: 0,
            stale_validations: 0,
            stopped: None,
        })
    }

    pub fn network(&self) -> Result<Network<f32>> {
        self.with_params(&self.params)
    }

    /// The network at the best validation MSE seen so far.
    pub fn best_network(&self) -> Result<Network<f32>> {
        self.with_params(&self.best_params)
    }

    fn with_params(&self, params: &ParamStore<f32>) -> Result<Network<f32>> {
        let mut net = build_model::<f32>(&self.spec, self.config.seed)?;
        net.params.expect_congruent(params, "checkpoint parameters")?;
        net.params = params.clone();
        Ok(net)
    }

    pub fn is_finished(&self) -> bool {
        self.stopped.is_some()
    }

    fn validate_now(&mut self, net: &Network<f32>, data: &TrainingData) -> Result<()> {
        let v = evaluate_mse(net, &data.validation)?;
        self.curve.validation.push((self.iteration, v));
        let idx = self.curve.validation.len() - 1;
        match self.curve.best_validation() {
            Some((_, best)) if v > best - MIN_IMPROVEMENT => {
                self.stale_validations += 1;
                if self.stale_validations >= self.config.patience {
                    self.stopped = Some(StopReason::Patience);
                }
            }
            _ => {
                self.curve.best = Some(idx);
                self.best_params = net.params.clone();
                self.stale_validations = 0;
            }
        }
        Ok(())
    }

    /// Advances training until `until` iterations are complete, the
    /// configured maximum is reached, or patience runs out.
    pub fn run(
        &mut self,
        data: &TrainingData,
        until: usize,
        observer: &mut dyn FnMut(&StepInfo<'_>),
    ) -> Result<()> {
        let cfg = self.config.clone();
        cfg.validate(data.train.len())?;
        let mut net = self.network()?;
        if self.curve.validation.is_empty() {
            self.validate_now(&net, data)?;
        }
        let per_epoch = data.train.len() / cfg.batch_size;
        let stop = until.min(cfg.max_iterations);
        let mut order_epoch = usize::MAX;
        let mut order = Vec::new();
        while self.stopped.is_none() && self.iteration < stop {
            let it = self.iteration;
            let (epoch, pos) = (it / per_epoch, it % per_epoch);
            if epoch != order_epoch {
                order = epoch_order(cfg.seed, epoch, data.train.len());
                order_epoch = epoch;
            }
            let batch: Vec<&StripPair> = order[pos * cfg.batch_size..(pos + 1) * cfg.batch_size]
                .iter()
                .map(|&i| &data.train[i])
                .collect();
            let origins: Vec<&StripOrigin> = batch.iter().map(|s| &s.origin).collect();
            for o in &origins {
                if data.split.subset_of(&o.volume) != Some(Subset::Train) {
                    return Err(Error::State(format!(
                        "strip from non-training volume {} reached the optimiser",
                        o.volume
                    )));
                }
            }
            let input = stack(&batch, |s| &s.structure)?;
            let target = stack(&batch, |s| &s.flow)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(cfg.seed, 0x4450, it as u64));
            let (loss, grads) = net.loss_and_grads(&input, &target, Mode::Train, &mut rng)?;
            let loss = loss as f64;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Divergence {
                    iteration: it,
                    detail: format!("loss {loss} for {}", self.spec.label()),
                });
            }
            self.adam.update(&mut net.params, &grads)?;
            self.iteration += 1;
            self.curve.train_mse.push(loss);
            observer(&StepInfo {
                iteration: it,
                loss,
                batch: &origins,
            });
            let due = match cfg.validation_interval {
                Some(k) => self.iteration.is_multiple_of(k),
                None => self.iteration.is_multiple_of(per_epoch),
            };
            if due || self.iteration == cfg.max_iterations {
                self.validate_now(&net, data)?;
            }
        }
        self.params = net.params;
        if self.stopped.is_none() && self.iteration >= cfg.max_iterations {
            self.stopped = Some(StopReason::MaxIterations);
        }
        Ok(())
    }
}

/// Trains `spec` from scratch to completion.
pub fn train(spec: &ModelSpec, data: &TrainingData, config: &TrainConfig) -> Result<Checkpoint> {
    let mut ck = Checkpoint::fresh(spec, config, data.split.seed)?;
    ck.run(data, usize::MAX, &mut |_| {})?;
    Ok(ck)
}

/// Continues a checkpoint to completion.
pub fn resume(mut checkpoint: Checkpoint, data: &TrainingData) -> Result<Checkpoint> {
    checkpoint.run(data, usize::MAX, &mut |_| {})?;
    Ok(checkpoint)
}
