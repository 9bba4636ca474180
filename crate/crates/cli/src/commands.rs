use std::fmt;
use std::path::Path;

use anyhow::{Context, Result};
use kge_core::dataset::synthetic::uniform_graph;
use kge_core::dataset::{load_dataset, Dataset, KnownTripleIndex, RelationStats};
use kge_core::evaluation::evaluate_link_prediction;
use kge_core::io::{
    bench as run_bench, load_checkpoint, save_checkpoint, write_atomic, write_relations, BenchSpec,
    CheckpointMeta,
};
use kge_core::models::{param_count, EnergyConfig, Model, ModelKind};
use kge_core::training::{
    train as train_model, train_from, train_transf_from_transe, AdamConfig, EarlyStopping,
    TrainConfig,
};

use crate::{
    BenchArgs, DataArgs, EvalArgs, ExportArgs, InitAs, ParamsArgs, PrepareArgs, TrainArgs,
};

/// Invalid flag combinations detected after parsing.
#[derive(Debug)]
pub struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn load(data: &DataArgs) -> Result<Dataset> {
    let ds = load_dataset(&data.train, data.valid.as_deref(), data.test.as_deref())?;
    let s = ds.summary();
    log::info!(
        "dataset: {} entities, {} relations, {}/{}/{} train/valid/test triples",
        s.num_entities,
        s.num_relations,
        s.num_train,
        s.num_valid,
        s.num_test
    );
    Ok(ds)
}

fn load_model(
    path: &Path,
    dataset: &Dataset,
    allow_mismatch: bool,
) -> Result<(Model, CheckpointMeta)> {
    let (model, meta) = load_checkpoint(path)?;
    if let Err(e) = meta.check_vocabulary(&dataset.vocabulary.fingerprint()) {
        if !allow_mismatch {
            return Err(e).context("pass --allow-vocab-mismatch to load it anyway");
        }
        log::warn!("{e}");
    }
    if model.num_entities() != dataset.num_entities()
        || model.num_relations() != dataset.num_relations()
    {
        return Err(usage(format!(
            "checkpoint has {} entities and {} relations, dataset has {} and {}",
            model.num_entities(),
            model.num_relations(),
            dataset.num_entities(),
            dataset.num_relations()
        )));
    }
    Ok((model, meta))
}

pub fn prepare(args: PrepareArgs) -> Result<()> {
    let ds = load(&args.data)?;
    let stats = RelationStats::compute_with_threshold(&ds, args.threshold);
    for w in &stats.warnings {
        log::warn!("{w}");
    }
    let s = ds.summary();
    println!("entities\t{}", s.num_entities);
    println!("relations\t{}", s.num_relations);
    println!("train\t{}", s.num_train);
    println!("valid\t{}", s.num_valid);
    println!("test\t{}", s.num_test);
    println!("relation\tcategory\thpt\ttph\ttrain_count");
    for (r, st) in stats.relations.iter().enumerate() {
        println!(
            "{}\t{}\t{:.4}\t{:.4}\t{}",
            ds.vocabulary.relation_name(r).unwrap_or("?"),
            st.category,
            st.hpt,
            st.tph,
            st.train_count
        );
    }
    if let Some(out) = &args.out {
        let json = serde_json::json!({ "summary": s, "stats": stats });
        write_atomic(out, serde_json::to_string_pretty(&json)?.as_bytes())
            .with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<()> {
    let ds = load(&args.data)?;
    let dim_r = args.dim_r.unwrap_or(args.dim_e);
    let mut energy = EnergyConfig::new(args.norm, args.dim_e, dim_r, args.bases);
    energy.normalize_projections = args.normalize_projections.on();
    energy.bound_entities = args.bound_entities.on();
    let config = TrainConfig {
        margin: args.margin,
        batch_size: args.batch_size,
        epochs: args.epochs,
        pretrain_epochs: args.pretrain_epochs,
        sampling: args.sampling,
        negatives_per_positive: args.negatives,
        filter_negatives: args.filter_negatives.on(),
        seed: args.seed,
        adam: AdamConfig {
            learning_rate: args.lr,
            ..AdamConfig::default()
        },
        threads: args.threads,
        early_stopping: args.early_stopping.map(|every| EarlyStopping {
            every,
            patience: args.patience,
        }),
    };

    let (outcome, start_epoch) = match &args.init {
        None => (train_model(&ds, args.model, &energy, &config)?, 0),
        Some(path) => {
            let (model, meta) = load_model(path, &ds, args.allow_vocab_mismatch)?;
            match args.init_as {
                InitAs::Resume => {
                    log::info!("resuming {} from epoch {}", meta.model, meta.epoch);
                    (train_from(model, &ds, &config)?, meta.epoch)
                }
                InitAs::TransfInit => {
                    if meta.model != ModelKind::TransE {
                        return Err(usage(format!(
                            "--as transf-init needs a transe checkpoint, got {}",
                            meta.model
                        )));
                    }
                    energy.dim_e = meta.dim_e;
                    energy.dim_r = meta.dim_e;
                    (
                        train_transf_from_transe(&model, &ds, &energy, &config)?,
                        meta.epoch,
                    )
                }
            }
        }
    };

    let log_data = &outcome.log;
    if log_data.exhausted_negative_draws > 0 {
        log::warn!(
            "{} negative draws exhausted the rejection budget and kept a known triple",
            log_data.exhausted_negative_draws
        );
    }
    let degenerate = outcome.model.degenerate_projections();
    if degenerate > 0 {
        log::warn!("{degenerate} projections were too close to zero to normalize");
    }
    let epoch = start_epoch + log_data.records.len();
    let meta = CheckpointMeta::for_model(
        &outcome.model,
        ds.vocabulary.fingerprint(),
        Some(config),
        epoch,
    );
    save_checkpoint(&outcome.model, &meta, &args.checkpoint)?;
    if let Some(path) = &args.log {
        let mut text = String::from("epoch\tmean_loss\tviolation_rate\twall_clock_seconds\n");
        text.push_str(&log_data.to_tsv());
        write_atomic(path, text.as_bytes())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(last) = log_data.last() {
        println!(
            "trained {} for {} epochs: final mean loss {} violation rate {}",
            outcome.model.kind(),
            log_data.records.len(),
            last.mean_loss,
            last.violation_rate
        );
    }
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let ds = load(&args.data)?;
    let (model, _) = load_model(&args.checkpoint, &ds, args.allow_vocab_mismatch)?;
    let split = if args.on_valid { &ds.valid } else { &ds.test };
    if split.is_empty() {
        return Err(usage(if args.on_valid {
            "--on-valid needs a --valid split"
        } else {
            "evaluation needs a --test split"
        }));
    }
    let stats = RelationStats::compute(&ds);
    let known = KnownTripleIndex::build(&ds);
    let report = evaluate_link_prediction(&model, split, &known, &stats, args.tie_policy)?;
    print!("{}", report.to_key_values());
    if let Some(out) = &args.out {
        write_atomic(out, report.to_json().as_bytes())
            .with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

pub fn export_relations(args: ExportArgs) -> Result<()> {
    let ds = load(&args.data)?;
    let (model, _) = load_model(&args.checkpoint, &ds, args.allow_vocab_mismatch)?;
    write_relations(&model, &ds.vocabulary, args.translation_only, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "wrote {} relations to {}",
        model.num_relations(),
        args.out.display()
    );
    Ok(())
}

pub fn bench(args: BenchArgs) -> Result<()> {
    let ds = match &args.train {
        Some(path) => load_dataset(path, None, None)?,
        None => uniform_graph(args.entities, args.relations, args.triples, args.seed),
    };
    let plan = BenchSpec {
        kinds: args.models.clone(),
        dim_e: args.dim_e,
        dim_r: args.dim_r.unwrap_or(args.dim_e),
        bases: args.bases.clone(),
        norm: args.norm,
        batch_size: args.batch_size,
        seed: args.seed,
        timing: !args.no_timing,
    };
    let report = run_bench(&ds, &plan)?;
    let tsv = report.to_tsv();
    print!("{tsv}");
    if let Some(out) = &args.out {
        write_atomic(out, tsv.as_bytes()).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

pub fn params(args: ParamsArgs) -> Result<()> {
    let dim_r = args.dim_r.unwrap_or(args.dim_e);
    println!("model\tparams");
    for kind in ModelKind::ALL {
        let (dr, s) = match kind {
            ModelKind::TransE | ModelKind::TransH => (args.dim_e, 0),
            ModelKind::TransR => (dim_r, 0),
            ModelKind::TransF => (dim_r, args.bases),
        };
        println!(
            "{kind}\t{}",
            param_count(kind, args.entities, args.relations, args.dim_e, dr, s)
        );
    }
    Ok(())
}
