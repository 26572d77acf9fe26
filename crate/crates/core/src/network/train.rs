use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::model::{loss_and_gradient, SampleTensors};
use super::optim::{Adam, AdamConfig};
use super::params::{NetworkDims, NetworkParams};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::seed;

/// Samples per gradient chunk. Chunks are reduced in a fixed order, which
/// keeps results independent of the thread count.
const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub dims: NetworkDims,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl TrainConfig {
    pub fn new(dims: NetworkDims) -> Self {
        Self {
            dims,
            batch_size: 64,
            epochs: 1,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be positive".into()));
        }
        let a = &self.adam;
        if !(a.learning_rate >= 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.epsilon > 0.0) {
            return Err(Error::Validation(format!("bad optimizer settings {a:?}")));
        }
        Ok(())
    }
}

/// Loss of one optimizer step (mean over its batch, before the update).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: u64,
    pub loss: f64,
}

/// Converts dataset samples after checking them against `dims`.
pub fn dataset_tensors(dataset: &Dataset, dims: &NetworkDims) -> Result<Vec<SampleTensors<f32>>> {
    if (dataset.n_d, dataset.n_s, dataset.k) != (dims.n_d, dims.n_s, dims.k) {
        return Err(Error::Contract(format!(
            "dataset has n_d={}, n_s={}, k={} but the network expects n_d={}, n_s={}, k={}",
            dataset.n_d, dataset.n_s, dataset.k, dims.n_d, dims.n_s, dims.k
        )));
    }
    Ok(dataset.samples().map(SampleTensors::from_sample).collect())
}

/// Mean loss and gradient over `batch`.
pub fn batch_gradient(
    params: &NetworkParams<f32>,
    batch: &[&SampleTensors<f32>],
) -> Result<(f64, NetworkParams<f32>)> {
    let weight = 1.0 / batch.len() as f32;
    let partials = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = params.zeros_like();
            let mut loss = 0.0f64;
            for s in chunk {
                loss += loss_and_gradient(params, s, weight, &mut g)? as f64;
            }
            Ok((loss, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut iter = partials.into_iter();
    let (mut loss, mut grad) = iter.next().expect("batch is nonempty");
    for (l, g) in iter {
        loss += l;
        grad.zip_mut_with(&g, |a, b| *a += b);
    }
    Ok((loss / batch.len() as f64, grad))
}

/// Training state: parameters, optimizer and progress.
pub struct Trainer {
    pub config: TrainConfig,
    pub params: NetworkParams<f32>,
    pub adam: Adam<f32>,
    /// Completed epochs.
    pub epoch: usize,
    /// Loss of every step taken by this trainer (not restored on resume).
    pub history: Vec<LossRecord>,
}

impl Trainer {
    /// Fresh parameters initialized from `config.seed`.
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let params = NetworkParams::init(&config.dims, seed::mix(config.seed, 0x1417))?;
        Ok(Self::with_params(config, params))
    }

    pub fn with_params(config: TrainConfig, params: NetworkParams<f32>) -> Self {
        let adam = Adam::new(&params, config.adam);
        Self {
            config,
            params,
            adam,
            epoch: 0,
            history: Vec::new(),
        }
    }

    /// Continues from a checkpoint written by [`Trainer::checkpoint`]. The
    /// stored config wins over `config` except for the epoch count.
    pub fn resume(checkpoint: &Checkpoint, epochs: usize) -> Result<Self> {
        let config: TrainConfig = checkpoint
            .meta
            .get("train.config")
            .ok_or_else(|| Error::Format("checkpoint has no training config".into()))
            .and_then(|s| serde_json::from_str(s).map_err(|e| Error::Format(format!("training config: {e}"))))?;
        let config = TrainConfig { epochs, ..config };
        let params = checkpoint.params()?;
        let adam = checkpoint
            .optimizer()?
            .ok_or_else(|| Error::Format("checkpoint has no optimizer state".into()))?;
        let epoch = checkpoint
            .meta
            .get("train.epoch")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("checkpoint has no epoch counter".into()))?;
        Ok(Self {
            config,
            params,
            adam,
            epoch,
            history: Vec::new(),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::from_params(&self.params);
        ck.push_optimizer(&self.adam);
        ck.meta.insert("train.epoch".into(), self.epoch.to_string());
        ck.meta.insert(
            "train.config".into(),
            serde_json::to_string(&self.config).expect("config serializes"),
        );
        ck
    }

    /// One pass over `data` in an order drawn from `(seed, epoch)`.
    pub fn run_epoch(&mut self, data: &[SampleTensors<f32>]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Contract("cannot train on an empty dataset".into()));
        }
        if let Some(s) = data.first() {
            s.check(&self.params)?;
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed::mix(self.config.seed, self.epoch as u64)));
        let mut total = 0.0;
        let mut batches = 0;
        for idx in order.chunks(self.config.batch_size) {
            let batch: Vec<&SampleTensors<f32>> = idx.iter().map(|&i| &data[i]).collect();
            let (loss, grad) = batch_gradient(&self.params, &batch)?;
            self.adam.step(&mut self.params, &grad)?;
            if !self.params.is_finite() {
                return Err(Error::Numeric { layer: "optimizer step" });
            }
            self.history.push(LossRecord {
                step: self.adam.step,
                loss,
            });
            total += loss;
            batches += 1;
        }
        self.epoch += 1;
        Ok(total / batches as f64)
    }

    /// Runs the remaining epochs, writing a checkpoint after each one when
    /// `checkpoint_path` is given. `on_epoch` sees the trainer after every
    /// epoch.
    pub fn fit(
        &mut self,
        data: &[SampleTensors<f32>],
        checkpoint_path: Option<&Path>,
        mut on_epoch: impl FnMut(&Trainer) -> Result<()>,
    ) -> Result<()> {
        while self.epoch < self.config.epochs {
            let loss = self.run_epoch(data)?;
            log::info!("epoch {} loss {loss:.6}", self.epoch);
            if let Some(p) = checkpoint_path {
                self.checkpoint().write(p)?;
            }
            on_epoch(self)?;
        }
        Ok(())
    }
}

/// Trains from scratch on `dataset` and returns the final parameters and
/// loss history.
pub fn train(
    dataset: &Dataset,
    config: &TrainConfig,
    checkpoint_path: Option<&Path>,
) -> Result<(NetworkParams<f32>, Vec<LossRecord>)> {
    let data = dataset_tensors(dataset, &config.dims)?;
    let mut trainer = Trainer::new(config.clone())?;
    trainer.fit(&data, checkpoint_path, |_| Ok(()))?;
    Ok((trainer.params, trainer.history))
}
