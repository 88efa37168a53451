//! Training loop and evaluation sweeps.
//!
//! Everything random in a run is derived from the seed and the global step
//! counter: the epoch shuffle from `(seed, epoch)` and each augmentation from
//! `(seed, step, slot)`. Resuming from a checkpoint therefore only needs the
//! step, and runs with different worker counts produce identical results
//! because per-mesh work is collected in mesh order before any reduction.

use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::io::load_mesh_auto;
use crate::kernels::{Adam, AdamConfig};
use crate::mesh::{augment, normalize_unit_sphere, AugmentConfig};
use crate::metrics::{MeshMetrics, MetricReport, MetricValues};
use crate::model::{ArchitectureConfig, Checkpoint, Model};
use crate::{Error, Mesh, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Stops early once the global step reaches this value.
    pub max_steps: Option<u64>,
    /// Meshes per optimizer step.
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub augment: bool,
    pub augmentation: AugmentConfig,
    /// Steps between checkpoints; 0 saves only at the end.
    pub checkpoint_interval: u64,
    /// Steps between evaluation sweeps; 0 disables them.
    pub eval_interval: u64,
    pub seed: u64,
    /// Worker threads for per-mesh work; 0 uses every core.
    pub workers: usize,
    /// Fill the log's timestamp column. Off by default so logs of identical
    /// runs compare equal byte for byte.
    pub log_wallclock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            epochs: 300,
            max_steps: None,
            batch_size: 8,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            augment: true,
            augmentation: AugmentConfig::default(),
            checkpoint_interval: 1000,
            eval_interval: 0,
            seed: 0,
            workers: 0,
            log_wallclock: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        for (name, v) in [("lr", self.lr), ("eps", self.eps)] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return fail(format!("{name} must be in [0, 1), got {v}"));
            }
        }
        let a = &self.augmentation;
        if !(a.scale_min > 0.0 && a.scale_max >= a.scale_min) {
            return fail(format!(
                "augmentation scale range [{}, {}] is invalid",
                a.scale_min, a.scale_max
            ));
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
}

/// SplitMix64 finalizer over a few words.
fn derive_seed(words: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &w in words {
        let mut z = h ^ w.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// A training or test mesh, either already in memory or on disk.
#[derive(Debug, Clone)]
pub enum Sample {
    Loaded { name: String, mesh: Mesh },
    File(PathBuf),
}

impl Sample {
    pub fn name(&self) -> String {
        match self {
            Sample::Loaded { name, .. } => name.clone(),
            Sample::File(p) => p.display().to_string(),
        }
    }

    pub fn load(&self) -> Result<Mesh> {
        match self {
            Sample::Loaded { mesh, .. } => Ok(mesh.clone()),
            Sample::File(p) => load_mesh_auto(p),
        }
    }

    /// Loaded and scaled into the unit sphere.
    pub fn load_normalized(&self) -> Result<Mesh> {
        normalize_unit_sphere(&self.load()?)
    }
}

impl From<PathBuf> for Sample {
    fn from(p: PathBuf) -> Self {
        Sample::File(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub tag: String,
    pub step: u64,
    pub loss: Option<f64>,
    pub lr: Option<f64>,
    pub cd: Option<f64>,
    pub ne: Option<f64>,
    pub cp: Option<f64>,
    pub timestamp: Option<f64>,
}

/// Train and eval rows in step order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn losses(&self) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.tag == "train")
            .filter_map(|r| r.loss)
            .collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let rows = r
            .deserialize()
            .collect::<std::result::Result<Vec<LogRow>, _>>()
            .map_err(|e| Error::Format(format!("log: {e}")))?;
        Ok(TrainLog { rows })
    }
}

/// Appends rows to `log.csv`, writing the header only into an empty file.
struct CsvSink {
    writer: csv::Writer<File>,
}

impl CsvSink {
    fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let empty = file.metadata().map_err(|e| Error::io(path, e))?.len() == 0;
        let writer = csv::WriterBuilder::new().has_headers(empty).from_writer(file);
        Ok(CsvSink { writer })
    }

    fn write(&mut self, row: &LogRow) -> Result<()> {
        self.writer.serialize(row).map_err(|e| Error::Format(e.to_string()))?;
        self.writer
            .flush()
            .map_err(|e| Error::Format(format!("log flush: {e}")))
    }
}

pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("checkpoint_{step:06}.bin"))
}

pub struct Trainer {
    config: TrainConfig,
    model: Model,
    adam: Adam,
    step: u64,
    log: TrainLog,
    pool: rayon::ThreadPool,
}

impl Trainer {
    pub fn new(arch: ArchitectureConfig, config: TrainConfig) -> Result<Self> {
        let model = Model::new(arch, config.seed)?;
        Self::with_model(model, config)
    }

    pub fn with_model(model: Model, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        model.config.validate()?;
        let lens: Vec<usize> = model.params().iter().map(|(_, p)| p.len()).collect();
        let adam = Adam::new(config.adam(), &lens);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        Ok(Trainer {
            config,
            model,
            adam,
            step: 0,
            log: TrainLog::default(),
            pool,
        })
    }

    /// Continues from a checkpoint. Optimizer hyperparameters come from
    /// `config`; moments and the step counter from the checkpoint.
    pub fn resume(checkpoint: Checkpoint, config: TrainConfig) -> Result<Self> {
        let mut t = Self::with_model(checkpoint.model, config)?;
        if let Some(mut adam) = checkpoint.optimizer {
            if adam.m.len() != t.adam.m.len() {
                return Err(Error::VersionMismatch(
                    "optimizer state does not match the model".into(),
                ));
            }
            adam.config = t.config.adam();
            t.adam = adam;
        }
        t.step = checkpoint.step;
        Ok(t)
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            step: self.step,
            optimizer: Some(self.adam.clone()),
        }
    }

    /// One optimizer step on already prepared meshes. Returns the batch loss.
    pub fn train_step(&mut self, meshes: &[Mesh]) -> Result<f64> {
        let model = &self.model;
        let (tape, grads) = self.pool.install(|| model.forward_backward(meshes, None))?;
        if !tape.loss.is_finite() {
            return Err(Error::DegenerateGeometry(format!(
                "loss became {} at step {}",
                tape.loss, self.step
            )));
        }
        let grad_values: Vec<Vec<f64>> = grads.params().into_iter().map(|(_, g)| g.to_vec()).collect();
        let grad_refs: Vec<&[f64]> = grad_values.iter().map(|g| g.as_slice()).collect();
        self.adam.update(&mut self.model.params_mut(), &grad_refs)?;
        self.model.update_running_stats(&tape);
        self.step += 1;
        let row = LogRow {
            tag: "train".into(),
            step: self.step,
            loss: Some(tape.loss),
            lr: Some(self.adam.config.lr),
            cd: None,
            ne: None,
            cp: None,
            timestamp: self.timestamp(),
        };
        self.log.rows.push(row);
        Ok(tape.loss)
    }

    fn timestamp(&self) -> Option<f64> {
        self.config.log_wallclock.then(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0)
        })
    }

    fn total_steps(&self, n: usize) -> u64 {
        let per_epoch = n.div_ceil(self.config.batch_size) as u64;
        let total = per_epoch * self.config.epochs as u64;
        self.config.max_steps.map_or(total, |m| m.min(total))
    }

    /// Sample indices of the batch taken at global step `step`.
    fn batch_indices(&self, n: usize, step: u64) -> Vec<usize> {
        let per_epoch = n.div_ceil(self.config.batch_size) as u64;
        let epoch = step / per_epoch;
        let slot = (step % per_epoch) as usize;
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[self.config.seed, 1, epoch]));
        order.shuffle(&mut rng);
        let start = slot * self.config.batch_size;
        order[start..(start + self.config.batch_size).min(n)].to_vec()
    }

    /// Runs until the configured epochs (or `max_steps`) are done. With
    /// `out_dir` set, checkpoints and `log.csv` are written there.
    pub fn train(&mut self, train: &[Sample], test: &[Sample], out_dir: Option<&Path>) -> Result<()> {
        if train.is_empty() {
            return Err(Error::Dataset("the training split is empty".into()));
        }
        let mut sink = match out_dir {
            Some(d) => {
                std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
                Some(CsvSink::open(&d.join("log.csv"))?)
            }
            None => None,
        };
        let mut cache: Vec<Option<Option<Mesh>>> = vec![None; train.len()];
        let total = self.total_steps(train.len());
        let mut saved_at = None;
        while self.step < total {
            let indices = self.batch_indices(train.len(), self.step);
            let mut batch = Vec::with_capacity(indices.len());
            for (slot, &i) in indices.iter().enumerate() {
                let entry = cache[i].get_or_insert_with(|| match train[i].load_normalized() {
                    Ok(m) => Some(m),
                    Err(e) => {
                        log::warn!("skipping {}: {e}", train[i].name());
                        None
                    }
                });
                let Some(mesh) = entry else { continue };
                if self.config.augment {
                    let seed = derive_seed(&[self.config.seed, 2, self.step, slot as u64]);
                    batch.push(augment(mesh, seed, &self.config.augmentation));
                } else {
                    batch.push(mesh.clone());
                }
            }
            if batch.is_empty() {
                return Err(Error::Dataset(format!(
                    "every mesh of the batch at step {} was unreadable",
                    self.step
                )));
            }
            self.train_step(&batch)?;
            if let Some(s) = &mut sink {
                s.write(self.log.rows.last().unwrap())?;
            }
            if self.config.eval_interval > 0 && self.step.is_multiple_of(self.config.eval_interval) && !test.is_empty() {
                let report = self.pool.install(|| evaluate(&self.model, test))?;
                let row = LogRow {
                    tag: "eval".into(),
                    step: self.step,
                    loss: None,
                    lr: None,
                    cd: Some(report.mean.cd),
                    ne: Some(report.mean.ne),
                    cp: Some(report.mean.cp),
                    timestamp: self.timestamp(),
                };
                if let Some(s) = &mut sink {
                    s.write(&row)?;
                }
                self.log.rows.push(row);
            }
            if let Some(d) = out_dir {
                let ci = self.config.checkpoint_interval;
                if ci > 0 && self.step.is_multiple_of(ci) {
                    self.checkpoint().save(&checkpoint_path(d, self.step))?;
                    saved_at = Some(self.step);
                }
            }
        }
        if let Some(d) = out_dir {
            if saved_at != Some(self.step) {
                self.checkpoint().save(&checkpoint_path(d, self.step))?;
            }
        }
        Ok(())
    }
}

/// Runs `f` on a thread pool of `workers` threads (0: one per core).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Encodes and decodes every sample in eval mode and scores the result
/// against the normalized input. Never touches the model.
pub fn evaluate(model: &Model, samples: &[Sample]) -> Result<MetricReport> {
    let rows = samples
        .par_iter()
        .map(|s| {
            let mesh = s.load_normalized()?;
            let out = model.decode(&model.encode(&mesh)?)?;
            let v = MetricValues::compare(&mesh, &out)?;
            Ok(MeshMetrics {
                path: s.name(),
                cd: v.cd,
                ne: v.ne,
                cp: v.cp,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::from_rows(rows))
}
