//! Parameter counts and seconds per training epoch across models.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::models::{init_model, param_count, EnergyConfig, ModelKind, Norm};
use crate::training::{train_from, TrainConfig, TrainError};

const WARMUP_EPOCHS: usize = 1;
const TIMED_EPOCHS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub kinds: Vec<ModelKind>,
    pub dim_e: usize,
    pub dim_r: usize,
    /// Basis counts tried for TransF; other models run once.
    pub bases: Vec<usize>,
    pub norm: Norm,
    pub batch_size: usize,
    pub seed: u64,
    /// Skip training and report parameter counts only.
    pub timing: bool,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            kinds: ModelKind::ALL.to_vec(),
            dim_e: 100,
            dim_r: 100,
            bases: vec![5],
            norm: Norm::L1,
            batch_size: 4096,
            seed: 0,
            timing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub model: ModelKind,
    pub dim_e: usize,
    pub dim_r: usize,
    pub bases: usize,
    pub params: u64,
    /// Median over the timed epochs; `None` when timing was skipped.
    pub seconds_per_epoch: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub num_entities: usize,
    pub num_relations: usize,
    pub train_triples: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    fn find(&self, kind: ModelKind) -> impl Iterator<Item = &BenchRow> {
        self.rows.iter().filter(move |r| r.model == kind)
    }

    /// `(bases, TransF seconds / TransR seconds)` for each timed TransF row.
    pub fn transf_vs_transr(&self) -> Vec<(usize, f64)> {
        let Some(transr) = self
            .find(ModelKind::TransR)
            .find_map(|r| r.seconds_per_epoch)
        else {
            return Vec::new();
        };
        self.find(ModelKind::TransF)
            .filter_map(|r| r.seconds_per_epoch.map(|t| (r.bases, t / transr)))
            .collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("model\tdim_e\tdim_r\tbases\tparams\tseconds_per_epoch\n");
        for r in &self.rows {
            let secs = r
                .seconds_per_epoch
                .map_or("-".to_owned(), |s| format!("{s:.6}"));
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{secs}",
                r.model, r.dim_e, r.dim_r, r.bases, r.params
            );
        }
        for (s, ratio) in self.transf_vs_transr() {
            let _ = writeln!(out, "# transf(s={s})/transr time ratio\t{ratio:.4}");
        }
        out
    }
}

/// Benchmarks every configuration in `plan` on `dataset`.
pub fn bench(dataset: &Dataset, plan: &BenchSpec) -> Result<BenchReport, TrainError> {
    let (ne, nr) = (dataset.num_entities(), dataset.num_relations());
    let mut rows = Vec::new();
    for &kind in &plan.kinds {
        let bases: Vec<usize> = if kind == ModelKind::TransF {
            plan.bases.clone()
        } else {
            vec![0]
        };
        for s in bases {
            let dim_r = match kind {
                ModelKind::TransE | ModelKind::TransH => plan.dim_e,
                _ => plan.dim_r,
            };
            let energy = EnergyConfig::new(plan.norm, plan.dim_e, dim_r, s);
            let params = param_count(
                kind,
                ne as u64,
                nr as u64,
                plan.dim_e as u64,
                dim_r as u64,
                s as u64,
            );
            let seconds_per_epoch = if plan.timing {
                Some(time_epochs(dataset, kind, &energy, plan)?)
            } else {
                None
            };
            log::info!("bench {kind} s={s}: {params} params, {seconds_per_epoch:?} s/epoch");
            rows.push(BenchRow {
                model: kind,
                dim_e: plan.dim_e,
                dim_r,
                bases: s,
                params,
                seconds_per_epoch,
            });
        }
    }
    Ok(BenchReport {
        num_entities: ne,
        num_relations: nr,
        train_triples: dataset.train.len(),
        rows,
    })
}

fn time_epochs(
    dataset: &Dataset,
    kind: ModelKind,
    energy: &EnergyConfig,
    plan: &BenchSpec,
) -> Result<f64, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let model = init_model(
        kind,
        energy,
        dataset.num_entities(),
        dataset.num_relations(),
        &mut rng,
    )?;
    let config = TrainConfig {
        epochs: WARMUP_EPOCHS + TIMED_EPOCHS,
        batch_size: plan.batch_size,
        seed: plan.seed,
        ..TrainConfig::default()
    };
    let out = train_from(model, dataset, &config)?;
    let mut secs: Vec<f64> = out.log.records[WARMUP_EPOCHS..]
        .iter()
        .map(|r| r.seconds)
        .collect();
    secs.sort_by(f64::total_cmp);
    Ok(secs[secs.len() / 2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic::uniform_graph;

    #[test]
    fn counts_without_timing() {
        let ds = uniform_graph(30, 4, 100, 0);
        let plan = BenchSpec {
            dim_e: 8,
            dim_r: 6,
            bases: vec![1, 2],
            timing: false,
            ..BenchSpec::default()
        };
        let report = bench(&ds, &plan).unwrap();
        assert_eq!(report.rows.len(), 5);
        assert!(report.rows.iter().all(|r| r.seconds_per_epoch.is_none()));
        assert!(report.transf_vs_transr().is_empty());
        let tsv = report.to_tsv();
        assert_eq!(tsv.lines().count(), 6);
    }
}
