//! Margin-loss training with lazy Adam.
//!
//! Each epoch shuffles the train split, walks it in batches, draws
//! `negatives_per_positive` corruptions for every positive and descends on
//! `Σ [E(pos) + γ − E(neg)]₊`. Only violating pairs contribute gradient.
//! After every batch the constraints of the touched rows are restored, and a
//! full constraint sweep runs at the end of each epoch.
//!
//! A TransF run with `pretrain_epochs > 0` first trains TransE for that many
//! epochs and then starts TransF from it with zero coefficients.

mod adam;

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, KnownTripleIndex, RelationStats, Triple};
use crate::evaluation::{evaluate_link_prediction, EvalError, TiePolicy};
use crate::models::{
    init_model, init_transf_from_transe, BatchGradient, EnergyConfig, Model, ModelError, ModelKind,
    ProjectionCache, SliceId,
};
use crate::sampling::{CorruptionPolicy, NegativeSampler, SamplingError, SamplingMode};

pub use adam::{AdamConfig, OptimizerState, ShapeMismatch};

/// Pairs per gradient work unit. Fixed so that results do not depend on the
/// number of threads.
const PAIRS_PER_CHUNK: usize = 256;

// rng streams derived from the seed
const INIT_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;
const TRANSFER_STREAM: u64 = 2;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}, triple {triple:?}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        triple: Triple,
    },
    #[error("parameters diverged at epoch {epoch}, batch {batch}: {slice:?} is no longer finite")]
    Diverged {
        epoch: usize,
        batch: usize,
        slice: SliceId,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Optimizer(#[from] ShapeMismatch),
    #[error(transparent)]
    Evaluation(#[from] EvalError),
}

/// `max(0, e_pos + γ − e_neg)`
pub fn margin_loss(e_pos: f64, e_neg: f64, margin: f64) -> f64 {
    (e_pos + margin - e_neg).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EarlyStopping {
    /// Evaluate validation filtered MRR every this many epochs.
    pub every: usize,
    /// Stop after this many evaluations without improvement.
    pub patience: usize,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        EarlyStopping {
            every: 10,
            patience: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub margin: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// TransE epochs run before TransF training (ignored for other models).
    pub pretrain_epochs: usize,
    pub sampling: SamplingMode,
    pub negatives_per_positive: usize,
    /// Redraw corruptions that are known true triples.
    pub filter_negatives: bool,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Worker threads for gradient computation; results are identical for
    /// any value.
    pub threads: usize,
    pub early_stopping: Option<EarlyStopping>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            margin: 1.0,
            batch_size: 4096,
            epochs: 150,
            pretrain_epochs: 1000,
            sampling: SamplingMode::Bern,
            negatives_per_positive: 1,
            filter_negatives: true,
            seed: 0,
            adam: AdamConfig::default(),
            threads: 1,
            early_stopping: None,
        }
    }
}

impl TrainConfig {
    /// Small-graph profile: 50 pretraining epochs instead of 1000.
    pub fn desk() -> Self {
        TrainConfig {
            pretrain_epochs: 50,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: &str| Err(TrainError::InvalidConfig(msg.to_owned()));
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad("margin must be positive");
        }
        if !(self.adam.learning_rate > 0.0 && self.adam.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if self.adam.epsilon.is_nan() || self.adam.epsilon <= 0.0 {
            return bad("adam epsilon must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.negatives_per_positive == 0 {
            return bad("negatives per positive must be at least 1");
        }
        if let Some(es) = self.early_stopping {
            if es.every == 0 || es.patience == 0 {
                return bad("early stopping interval and patience must be at least 1");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrain,
    Main,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based, counted across phases.
    pub epoch: usize,
    pub phase: Phase,
    pub model: ModelKind,
    pub mean_loss: f64,
    pub violation_rate: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
    /// Corruptions accepted after exhausting the rejection budget.
    pub exhausted_negative_draws: u64,
}

impl TrainingLog {
    /// `epoch<TAB>mean_loss<TAB>violation_rate<TAB>wall_clock_seconds` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.6}",
                r.epoch, r.mean_loss, r.violation_rate, r.seconds
            );
        }
        out
    }

    /// The log without its wall-clock column, which is the part that is
    /// reproducible across runs.
    pub fn without_timing(&self) -> Vec<(usize, f64, f64)> {
        self.records
            .iter()
            .map(|r| (r.epoch, r.mean_loss, r.violation_rate))
            .collect()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatchStats {
    pub pairs: usize,
    pub violations: usize,
    pub loss_sum: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: TrainingLog,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Owns the model being trained and its optimizer state.
pub struct Trainer {
    model: Model,
    optimizer: OptimizerState,
    margin: f64,
    adam: AdamConfig,
    pool: Option<rayon::ThreadPool>,
}

impl Trainer {
    pub fn new(model: Model, config: &TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let pool = if config.threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.threads)
                    .build()
                    .map_err(|e| TrainError::InvalidConfig(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Trainer {
            model,
            optimizer: OptimizerState::new(),
            margin: config.margin,
            adam: config.adam,
            pool,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn optimizer(&self) -> &OptimizerState {
        &self.optimizer
    }

    /// One optimizer step over `(positive, negative)` pairs. A non-finite
    /// energy or loss aborts the step before any parameter changes and is
    /// reported as [`TrainError::NonFiniteLoss`]; an update that leaves a
    /// parameter non-finite is reported as [`TrainError::Diverged`]. Both
    /// carry epoch and batch zero, to be filled in by the caller.
    pub fn step(&mut self, pairs: &[(Triple, Triple)]) -> Result<BatchStats, TrainError> {
        let model = &self.model;
        let margin = self.margin;
        let relations: Vec<usize> = pairs.iter().map(|(p, _)| p.relation).collect();
        let cache = ProjectionCache::new(model, relations);

        let work = |chunk: &[(Triple, Triple)]| -> Result<(BatchStats, BatchGradient), TrainError> {
            let mut stats = BatchStats::default();
            let mut acc = BatchGradient::new();
            for (pos, neg) in chunk {
                let non_finite = || TrainError::NonFiniteLoss {
                    epoch: 0,
                    batch: 0,
                    triple: *pos,
                };
                let fail = |e: ModelError| match e {
                    ModelError::NonFinite(_) => non_finite(),
                    other => other.into(),
                };
                let fp = model.forward_cached(pos, &cache).map_err(fail)?;
                let fneg = model.forward_cached(neg, &cache).map_err(fail)?;
                let loss = margin_loss(fp.energy, fneg.energy, margin);
                if !loss.is_finite() {
                    return Err(non_finite());
                }
                stats.pairs += 1;
                stats.loss_sum += loss;
                if loss > 0.0 {
                    stats.violations += 1;
                    model.accumulate_backward(pos, &fp, 1.0, &cache, &mut acc);
                    model.accumulate_backward(neg, &fneg, -1.0, &cache, &mut acc);
                }
            }
            Ok((stats, acc))
        };

        let chunks: Vec<&[(Triple, Triple)]> = pairs.chunks(PAIRS_PER_CHUNK).collect();
        let results: Vec<_> = match &self.pool {
            Some(pool) => pool.install(|| chunks.par_iter().map(|c| work(c)).collect()),
            None => chunks.iter().map(|c| work(c)).collect(),
        };
        let mut stats = BatchStats::default();
        let mut grad = BatchGradient::new();
        for r in results {
            let (s, g) = r?;
            stats.pairs += s.pairs;
            stats.violations += s.violations;
            stats.loss_sum += s.loss_sum;
            grad.merge(g);
        }
        drop(cache);

        let grad = grad.finish(&self.model);
        let mut touched = Vec::with_capacity(grad.len());
        for (slice, block) in grad {
            let delta = self
                .optimizer
                .step(slice, &block, block.len(), &self.adam)?;
            self.model.apply_delta(slice, &delta)?;
            let finite = self
                .model
                .params()
                .slice(slice)
                .is_some_and(|v| v.iter().all(|x| x.is_finite()));
            if !finite {
                return Err(TrainError::Diverged {
                    epoch: 0,
                    batch: 0,
                    slice,
                });
            }
            touched.push(slice);
        }
        self.model.enforce_constraints_on(touched)?;
        Ok(stats)
    }
}

struct EpochContext<'a> {
    dataset: &'a Dataset,
    sampler: NegativeSampler<'a>,
    config: &'a TrainConfig,
}

impl EpochContext<'_> {
    fn run_epoch(
        &self,
        trainer: &mut Trainer,
        epoch: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, f64), TrainError> {
        let mut order: Vec<usize> = (0..self.dataset.train.len()).collect();
        order.shuffle(rng);
        let mut total = BatchStats::default();
        let mut pairs =
            Vec::with_capacity(self.config.batch_size * self.config.negatives_per_positive);
        for (batch, idx) in order.chunks(self.config.batch_size).enumerate() {
            pairs.clear();
            for &i in idx {
                let pos = self.dataset.train[i];
                for _ in 0..self.config.negatives_per_positive {
                    pairs.push((pos, self.sampler.sample(&pos, rng)?));
                }
            }
            let stats = trainer.step(&pairs).map_err(|err| match err {
                TrainError::NonFiniteLoss { triple, .. } => TrainError::NonFiniteLoss {
                    epoch,
                    batch: batch + 1,
                    triple,
                },
                TrainError::Diverged { slice, .. } => TrainError::Diverged {
                    epoch,
                    batch: batch + 1,
                    slice,
                },
                other => other,
            })?;
            total.pairs += stats.pairs;
            total.violations += stats.violations;
            total.loss_sum += stats.loss_sum;
        }
        trainer.model.enforce_constraints()?;
        debug_assert_eq!(trainer.model.constraint_violation(), None);
        let n = total.pairs.max(1) as f64;
        Ok((total.loss_sum / n, total.violations as f64 / n))
    }
}

/// Trains a fresh model of `kind` on `dataset.train`.
pub fn train(
    dataset: &Dataset,
    kind: ModelKind,
    energy: &EnergyConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    energy.validate(kind)?;
    let (ne, nr) = (dataset.num_entities(), dataset.num_relations());
    let mut init_rng = stream_rng(config.seed, INIT_STREAM);

    if kind == ModelKind::TransF && config.pretrain_epochs > 0 {
        if energy.dim_e != energy.dim_r {
            return Err(ModelError::DimensionMismatch(format!(
                "pretraining needs dim_e == dim_r (got {} and {})",
                energy.dim_e, energy.dim_r
            ))
            .into());
        }
        let transe = init_model(ModelKind::TransE, energy, ne, nr, &mut init_rng)?;
        let mut runner = Runner::new(dataset, config)?;
        runner.run(
            transe,
            Phase::Pretrain,
            config.pretrain_epochs,
            &mut |_, _| {},
        )?;
        let pretrained = runner.take_model();
        let mut transfer_rng = stream_rng(config.seed, TRANSFER_STREAM);
        let transf = init_transf_from_transe(&pretrained, energy, &mut transfer_rng)?;
        runner.run(transf, Phase::Main, config.epochs, &mut |_, _| {})?;
        return Ok(runner.finish());
    }

    let model = init_model(kind, energy, ne, nr, &mut init_rng)?;
    train_from(model, dataset, config)
}

/// Starts TransF from a trained TransE model and trains it for
/// `config.epochs` epochs.
pub fn train_transf_from_transe(
    transe: &Model,
    dataset: &Dataset,
    energy: &EnergyConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    let mut rng = stream_rng(config.seed, TRANSFER_STREAM);
    let transf = init_transf_from_transe(transe, energy, &mut rng)?;
    train_from(transf, dataset, config)
}

/// Continues training an existing model for `config.epochs` epochs.
pub fn train_from(
    model: Model,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    let mut runner = Runner::new(dataset, config)?;
    runner.run(model, Phase::Main, config.epochs, &mut |_, _| {})?;
    Ok(runner.finish())
}

/// Like [`train_from`], calling `on_epoch` after every epoch.
pub fn train_from_with(
    model: Model,
    dataset: &Dataset,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord, &Model),
) -> Result<TrainOutcome, TrainError> {
    let mut runner = Runner::new(dataset, config)?;
    runner.run(model, Phase::Main, config.epochs, on_epoch)?;
    Ok(runner.finish())
}

struct Runner<'a> {
    dataset: &'a Dataset,
    config: &'a TrainConfig,
    known: Option<KnownTripleIndex>,
    stats: RelationStats,
    policy: CorruptionPolicy,
    rng: ChaCha8Rng,
    log: TrainingLog,
    model: Option<Model>,
}

impl<'a> Runner<'a> {
    fn new(dataset: &'a Dataset, config: &'a TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let stats = RelationStats::compute(dataset);
        for w in &stats.warnings {
            log::warn!("{w}");
        }
        Ok(Runner {
            dataset,
            config,
            known: config
                .filter_negatives
                .then(|| KnownTripleIndex::build(dataset)),
            policy: CorruptionPolicy::new(config.sampling, &stats),
            stats,
            rng: stream_rng(config.seed, TRAIN_STREAM),
            log: TrainingLog::default(),
            model: None,
        })
    }

    fn run(
        &mut self,
        model: Model,
        phase: Phase,
        epochs: usize,
        on_epoch: &mut dyn FnMut(&EpochRecord, &Model),
    ) -> Result<(), TrainError> {
        let ctx = EpochContext {
            dataset: self.dataset,
            sampler: NegativeSampler::new(
                &self.policy,
                self.dataset.num_entities(),
                self.known.as_ref(),
            )?,
            config: self.config,
        };
        let kind = model.kind();
        let mut trainer = Trainer::new(model, self.config)?;
        let stopping = self
            .config
            .early_stopping
            .filter(|_| phase == Phase::Main && !self.dataset.valid.is_empty());
        let known_all = stopping.map(|_| KnownTripleIndex::build(self.dataset));
        let mut best: Option<(f64, Model)> = None;
        let mut stale = 0;

        for local_epoch in 1..=epochs {
            let epoch = self.log.records.len() + 1;
            let start = Instant::now();
            let (mean_loss, violation_rate) = ctx.run_epoch(&mut trainer, epoch, &mut self.rng)?;
            let record = EpochRecord {
                epoch,
                phase,
                model: kind,
                mean_loss,
                violation_rate,
                seconds: start.elapsed().as_secs_f64(),
            };
            log::info!("epoch {epoch} ({kind}) loss {mean_loss:.6} violations {violation_rate:.4}");
            on_epoch(&record, trainer.model());
            self.log.records.push(record);

            if let (Some(es), Some(known)) = (stopping, known_all.as_ref()) {
                if local_epoch % es.every == 0 {
                    let report = evaluate_link_prediction(
                        trainer.model(),
                        &self.dataset.valid,
                        known,
                        &self.stats,
                        TiePolicy::Mean,
                    )?;
                    let mrr = report.filtered.mrr;
                    if best.as_ref().is_none_or(|(b, _)| mrr > *b) {
                        best = Some((mrr, trainer.model().clone()));
                        stale = 0;
                    } else {
                        stale += 1;
                        if stale >= es.patience {
                            log::info!("early stopping at epoch {epoch}: validation MRR {mrr:.4}");
                            break;
                        }
                    }
                }
            }
        }
        self.log.exhausted_negative_draws += ctx.sampler.exhausted_draws();
        let last = trainer.into_model();
        self.model = Some(match best {
            Some((_, m)) => m,
            None => last,
        });
        Ok(())
    }

    fn take_model(&mut self) -> Model {
        self.model.take().expect("run() stores the trained model")
    }

    fn finish(mut self) -> TrainOutcome {
        TrainOutcome {
            model: self.take_model(),
            log: self.log,
        }
    }
}
