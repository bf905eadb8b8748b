//! Minimizes the masked L1 between predicted and target normalized
//! log-spectrograms with teacher forcing and RAdam.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, OptimizerState, RAdamConfig};
use crate::data::{
    compute_norm_stats, extract_features, split_entries, split_per_class, Batch, DataError,
    Dataset, FeatureCache, Manifest,
};
use crate::dsp;
use crate::model::{Checkpoint, CheckpointError, ModelConfig, ModelError, Seq2Seq, TrainedModel};
use crate::phoneme::PhonemeInventory;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss {value} at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: u64, value: f32 },
    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Config(#[from] toml::de::Error),
}

/// Training hyperparameters. Every key is optional in the TOML form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Stop after this many optimizer steps even mid-epoch.
    pub max_steps: Option<u64>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub tf_rate: f64,
    pub batch_size: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub n_bins: usize,
    pub conditioned: bool,
    pub seed: u64,
    /// Save the running checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
    /// Fraction of manifest entries held out for validation.
    pub eval_fraction: f64,
    /// Split within each class instead of over the whole corpus.
    pub per_class_split: bool,
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let opt = RAdamConfig::default();
        Self {
            epochs: 300,
            max_steps: None,
            lr: opt.lr,
            beta1: opt.beta1,
            beta2: opt.beta2,
            eps: opt.eps,
            tf_rate: 0.6,
            batch_size: 5,
            hidden: 512,
            embed_dim: 128,
            n_bins: dsp::N_BINS,
            conditioned: false,
            seed: 0,
            checkpoint_every: 0,
            eval_fraction: 0.05,
            per_class_split: false,
            grad_clip: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self, TrainError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(0.0..=1.0).contains(&self.tf_rate) {
            return bad("tf_rate must lie in [0, 1]");
        }
        if self.batch_size == 0 || self.hidden == 0 || self.embed_dim == 0 || self.n_bins == 0 {
            return bad("batch_size, hidden, embed_dim and n_bins must be positive");
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return bad("lr must be a finite non-negative number");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0)
        {
            return bad("betas must lie in [0, 1) and eps must be positive");
        }
        if !(0.0..1.0).contains(&self.eval_fraction) {
            return bad("eval_fraction must lie in [0, 1)");
        }
        if !(self.grad_clip > 0.0) {
            return bad("grad_clip must be positive");
        }
        Ok(())
    }

    pub fn optimizer(&self) -> RAdamConfig {
        RAdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn model_config(&self, vocab: usize, n_labels: usize) -> ModelConfig {
        ModelConfig {
            vocab,
            embed_dim: self.embed_dim,
            hidden: self.hidden,
            n_bins: self.n_bins,
            n_labels,
            conditioned: self.conditioned,
        }
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub step: u64,
    pub train_l1: f64,
    pub val_l1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Teacher-forced (rate 1) masked L1.
    pub val_l1: f64,
    /// Free-running masked L1 with as many frames as each target.
    pub free_running_l1: f64,
    pub pairs: usize,
}

/// Frame-weighted mean of per-batch masked L1 over `indices`.
fn masked_l1_over(
    model: &Seq2Seq<f32>,
    data: &Dataset,
    indices: &[usize],
    batch_size: usize,
    tf_rate: f64,
) -> Result<f64, TrainError> {
    if indices.is_empty() {
        return Err(DataError::Empty.into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut total, mut weight) = (0.0f64, 0usize);
    for chunk in indices.chunks(batch_size.max(1)) {
        let batch = data.collate(chunk);
        let loss = batch_loss(model, &batch, tf_rate, &mut rng, &mut Graph::new())?;
        let frames: usize = batch.frame_lengths.iter().sum();
        total += loss as f64 * frames as f64;
        weight += frames;
    }
    Ok(total / weight as f64)
}

fn batch_loss(
    model: &Seq2Seq<f32>,
    batch: &Batch,
    tf_rate: f64,
    rng: &mut ChaCha8Rng,
    g: &mut Graph<f32>,
) -> Result<f32, TrainError> {
    let v = batch_loss_var(model, batch, tf_rate, rng, g)?;
    Ok(g.scalar(v))
}

fn batch_loss_var(
    model: &Seq2Seq<f32>,
    batch: &Batch,
    tf_rate: f64,
    rng: &mut ChaCha8Rng,
    g: &mut Graph<f32>,
) -> Result<crate::autodiff::Var, TrainError> {
    let seqs = batch.sequences();
    let refs: Vec<&[usize]> = seqs.iter().map(Vec::as_slice).collect();
    let labels = model.config().conditioned.then_some(batch.labels.as_slice());
    Ok(model.batch_loss(
        g,
        &refs,
        labels,
        &batch.targets,
        &batch.frame_lengths,
        tf_rate,
        rng,
    )?)
}

/// Teacher-forced and free-running L1 of `model` on the given pairs.
pub fn evaluate(
    model: &Seq2Seq<f32>,
    data: &Dataset,
    indices: &[usize],
    batch_size: usize,
) -> Result<EvalReport, TrainError> {
    Ok(EvalReport {
        val_l1: masked_l1_over(model, data, indices, batch_size, 1.0)?,
        free_running_l1: masked_l1_over(model, data, indices, batch_size, 0.0)?,
        pairs: indices.len(),
    })
}

/// Features, statistics and split for a manifest. Normalization statistics
/// come from the training entries only.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub dataset: Dataset,
    pub train_pairs: Vec<usize>,
    pub val_pairs: Vec<usize>,
    pub norm: crate::data::NormStats,
}

pub fn prepare(
    config: &TrainConfig,
    manifest: &Manifest,
    inventory: &PhonemeInventory,
    cache: Option<&FeatureCache>,
) -> Result<PreparedData, TrainError> {
    if manifest.entries.is_empty() {
        return Err(DataError::Empty.into());
    }
    let features = extract_features(manifest, cache)?;
    let (train_entries, val_entries) = if config.per_class_split {
        split_per_class(manifest, config.eval_fraction, config.seed)
    } else {
        split_entries(manifest.entries.len(), config.eval_fraction, config.seed)
    };
    let norm = compute_norm_stats(train_entries.iter().map(|&i| &features[i]))?;
    if norm.n_bins() != config.n_bins {
        return Err(TrainError::InvalidConfig(format!(
            "features have {} bins but n_bins is {}",
            norm.n_bins(),
            config.n_bins
        )));
    }
    let dataset = Dataset::build(manifest, &features, inventory, &norm)?;
    let in_split = |entries: &[usize]| {
        dataset
            .pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| entries.binary_search(&p.entry).is_ok())
            .map(|(i, _)| i)
            .collect::<Vec<_>>()
    };
    Ok(PreparedData {
        train_pairs: in_split(&train_entries),
        val_pairs: in_split(&val_entries),
        dataset,
        norm,
    })
}

/// Stateful training loop over a prepared dataset.
pub struct Trainer {
    pub config: TrainConfig,
    pub model: Seq2Seq<f32>,
    pub optimizer: OptimizerState<f32>,
    pub data: PreparedData,
    pub inventory: PhonemeInventory,
    tf_rng: ChaCha8Rng,
    epoch: usize,
    step_losses: Vec<f32>,
}

impl Trainer {
    pub fn new(
        config: TrainConfig,
        data: PreparedData,
        inventory: PhonemeInventory,
    ) -> Result<Self, TrainError> {
        config.validate()?;
        if data.train_pairs.is_empty() {
            return Err(DataError::Empty.into());
        }
        let mcfg = config.model_config(inventory.len(), data.dataset.labels.len());
        let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut model = Seq2Seq::new(mcfg, &mut init_rng)?;
        model.set_norm(data.norm.clone())?;
        let optimizer = OptimizerState::new(config.optimizer(), model.params());
        let mut tf_rng = ChaCha8Rng::seed_from_u64(config.seed);
        tf_rng.set_stream(1);
        Ok(Self {
            config,
            model,
            optimizer,
            data,
            inventory,
            tf_rng,
            epoch: 0,
            step_losses: Vec::new(),
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn steps(&self) -> u64 {
        self.optimizer.step
    }

    /// Loss of every optimizer step so far.
    pub fn step_losses(&self) -> &[f32] {
        &self.step_losses
    }

    fn done(&self) -> bool {
        self.config.max_steps.is_some_and(|m| self.optimizer.step >= m)
    }

    /// One forward/backward/update on a batch. Returns the batch loss
    /// before the update.
    pub fn train_step(&mut self, batch: &Batch) -> Result<f32, TrainError> {
        let mut g = Graph::new();
        let loss = batch_loss_var(&self.model, batch, self.config.tf_rate, &mut self.tf_rng, &mut g)?;
        let value = g.scalar(loss);
        if !value.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch: self.epoch,
                step: self.optimizer.step,
                value,
            });
        }
        let store = self.model.params_mut();
        store.zero_grad();
        g.backward(loss, store)
            .map_err(ModelError::from)?;
        store.clip_grad_norm(self.config.grad_clip);
        self.optimizer
            .step(self.model.params_mut())
            .map_err(ModelError::from)?;
        self.step_losses.push(value);
        Ok(value)
    }

    /// Runs one epoch and returns its metrics. The epoch's shuffle depends
    /// only on the seed and the epoch number.
    pub fn run_epoch(&mut self) -> Result<EpochMetrics, TrainError> {
        let shuffle_seed = self
            .config
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(self.epoch as u64);
        let batches = self.data.dataset.make_batches(
            &self.data.train_pairs,
            self.config.batch_size,
            shuffle_seed,
        );
        let (mut total, mut weight) = (0.0f64, 0usize);
        for batch in &batches {
            if self.done() {
                break;
            }
            let loss = self.train_step(batch)?;
            let frames: usize = batch.frame_lengths.iter().sum();
            total += loss as f64 * frames as f64;
            weight += frames;
        }
        let val_l1 = if self.data.val_pairs.is_empty() {
            None
        } else {
            Some(masked_l1_over(
                &self.model,
                &self.data.dataset,
                &self.data.val_pairs,
                self.config.batch_size,
                1.0,
            )?)
        };
        self.epoch += 1;
        Ok(EpochMetrics {
            epoch: self.epoch,
            step: self.optimizer.step,
            train_l1: if weight > 0 { total / weight as f64 } else { f64::NAN },
            val_l1,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: TrainedModel {
                model: self.model.clone(),
                inventory: self.inventory.clone(),
                labels: self.data.dataset.labels.clone(),
            },
            optimizer: Some(self.optimizer.clone()),
            train_config: Some(self.config.clone()),
            epoch: Some(self.epoch),
        }
    }

    pub fn evaluate(&self, indices: &[usize]) -> Result<EvalReport, TrainError> {
        evaluate(&self.model, &self.data.dataset, indices, self.config.batch_size)
    }
}

/// Where [`train`] writes its artifacts. All are optional.
#[derive(Debug, Clone, Default)]
pub struct TrainOutputs {
    /// Final checkpoint; the best-validation one goes next to it as
    /// `<stem>.best.ckpt`.
    pub checkpoint: Option<PathBuf>,
    /// Line-delimited JSON metrics, one [`EpochMetrics`] per line.
    pub metrics: Option<PathBuf>,
}

pub fn best_checkpoint_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    out.with_file_name(format!("{stem}.best.ckpt"))
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub history: Vec<EpochMetrics>,
    pub step_losses: Vec<f32>,
    pub final_checkpoint: Checkpoint,
    /// Checkpoint with the lowest validation loss (training loss when no
    /// pairs are held out).
    pub best_checkpoint: Checkpoint,
    pub best_epoch: usize,
    pub val_pairs: Vec<usize>,
}

/// Full training run from a manifest. Reproducible given `config.seed`.
pub fn train(
    config: &TrainConfig,
    manifest: &Manifest,
    inventory: &PhonemeInventory,
    cache: Option<&FeatureCache>,
    outputs: &TrainOutputs,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainReport, TrainError> {
    config.validate()?;
    let data = prepare(config, manifest, inventory, cache)?;
    let val_pairs = data.val_pairs.clone();
    let mut trainer = Trainer::new(config.clone(), data, inventory.clone())?;
    let mut metrics = match &outputs.metrics {
        Some(p) => Some(BufWriter::new(File::create(p)?)),
        None => None,
    };
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Checkpoint)> = None;
    for _ in 0..config.epochs {
        if trainer.done() {
            break;
        }
        let m = trainer.run_epoch()?;
        if let Some(w) = metrics.as_mut() {
            serde_json::to_writer(&mut *w, &m).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        on_epoch(&m);
        let score = m.val_l1.unwrap_or(m.train_l1);
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            let ck = trainer.checkpoint();
            if let Some(out) = &outputs.checkpoint {
                ck.save(best_checkpoint_path(out))?;
            }
            best = Some((score, m.epoch, ck));
        }
        if let Some(out) = &outputs.checkpoint {
            if config.checkpoint_every > 0 && m.epoch % config.checkpoint_every == 0 {
                trainer.checkpoint().save(out)?;
            }
        }
        history.push(m);
    }
    let final_checkpoint = trainer.checkpoint();
    if let Some(out) = &outputs.checkpoint {
        final_checkpoint.save(out)?;
    }
    let (_, best_epoch, best_checkpoint) =
        best.unwrap_or_else(|| (f64::NAN, 0, final_checkpoint.clone()));
    if let (Some(out), 0) = (&outputs.checkpoint, history.len()) {
        best_checkpoint.save(best_checkpoint_path(out))?;
    }
    Ok(TrainReport {
        history,
        step_losses: trainer.step_losses().to_vec(),
        final_checkpoint,
        best_checkpoint,
        best_epoch,
        val_pairs,
    })
}

/// Evaluates a saved model on a manifest. `split` selects the held-out part
/// of the checkpoint's own training split when the checkpoint records its
/// training config; otherwise every pair is used.
pub fn evaluate_manifest(
    checkpoint: &Checkpoint,
    manifest: &Manifest,
    cache: Option<&FeatureCache>,
    held_out_only: bool,
) -> Result<EvalReport, TrainError> {
    let tm = &checkpoint.model;
    if manifest.labels != tm.labels {
        return Err(TrainError::IncompatibleCheckpoint(format!(
            "manifest labels {:?} differ from checkpoint labels {:?}",
            manifest.labels, tm.labels
        )));
    }
    if tm.model.config().n_bins != dsp::N_BINS {
        return Err(TrainError::IncompatibleCheckpoint(format!(
            "model predicts {} bins, features have {}",
            tm.model.config().n_bins,
            dsp::N_BINS
        )));
    }
    let features = extract_features(manifest, cache)?;
    let dataset = Dataset::build(manifest, &features, &tm.inventory, tm.model.norm())?;
    let indices: Vec<usize> = match (&checkpoint.train_config, held_out_only) {
        (Some(cfg), true) => {
            let (_, val) = if cfg.per_class_split {
                split_per_class(manifest, cfg.eval_fraction, cfg.seed)
            } else {
                split_entries(manifest.entries.len(), cfg.eval_fraction, cfg.seed)
            };
            (0..dataset.len())
                .filter(|&i| val.binary_search(&dataset.pairs[i].entry).is_ok())
                .collect()
        }
        _ => (0..dataset.len()).collect(),
    };
    let batch_size = checkpoint
        .train_config
        .as_ref()
        .map_or(crate::data::DEFAULT_BATCH_SIZE, |c| c.batch_size);
    evaluate(&tm.model, &dataset, &indices, batch_size)
}
