//! Trains TransE and TransF with the same epoch budget on the latent-attribute
//! synthetic graph and prints the filtered head/tail breakdown of both.
//!
//! Usage: `cargo run --release -p kge-core --example desk_run [lr] [batch] [l1|l2] [seed]`

use std::time::Instant;

use kge_core::dataset::synthetic::{latent_attribute_graph, LatentAttributeConfig};
use kge_core::dataset::{KnownTripleIndex, RelationCategory, RelationStats, Side};
use kge_core::evaluation::{evaluate_link_prediction, TiePolicy};
use kge_core::models::{EnergyConfig, ModelKind, Norm};
use kge_core::training::{train, AdamConfig, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).map_or(0.01, |s| s.parse().unwrap());
    let batch: usize = args.get(2).map_or(256, |s| s.parse().unwrap());
    let norm: Norm = args.get(3).map_or(Norm::L1, |s| s.parse().unwrap());
    let seed: u64 = args.get(4).map_or(0, |s| s.parse().unwrap());

    let ds = latent_attribute_graph(&LatentAttributeConfig::default());
    let stats = RelationStats::compute(&ds);
    let known = KnownTripleIndex::build(&ds);
    println!("{:?}", ds.summary());
    for (r, s) in stats.relations.iter().enumerate() {
        println!(
            "{}\t{}\thpt={:.2}\ttph={:.2}",
            ds.vocabulary.relation_name(r).unwrap(),
            s.category,
            s.hpt,
            s.tph
        );
    }

    let energy = EnergyConfig::square(norm, 32, 5);
    let base = TrainConfig {
        margin: 2.0,
        batch_size: batch,
        adam: AdamConfig {
            learning_rate: lr,
            ..AdamConfig::default()
        },
        seed,
        ..TrainConfig::desk()
    };
    let runs = [
        (
            ModelKind::TransE,
            TrainConfig {
                epochs: 150,
                pretrain_epochs: 0,
                ..base.clone()
            },
        ),
        (
            ModelKind::TransF,
            TrainConfig {
                epochs: 100,
                pretrain_epochs: 50,
                ..base.clone()
            },
        ),
    ];
    for (kind, cfg) in runs {
        let start = Instant::now();
        let out = train(&ds, kind, &energy, &cfg).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let first = out.log.records[0].mean_loss;
        let last = out.log.last().unwrap().mean_loss;
        let report =
            evaluate_link_prediction(&out.model, &ds.test, &known, &stats, TiePolicy::Mean)
                .unwrap();
        let f = &report.filtered;
        println!(
            "{kind}: {secs:.1}s loss {first:.4} -> {last:.4} ({:.1}% drop) filtered MRR {:.3} H@10 {:.3}",
            100.0 * (1.0 - last / first),
            f.mrr,
            f.hits10
        );
        for cat in RelationCategory::ALL {
            let h = f.breakdown.cell(Side::Head, cat);
            let t = f.breakdown.cell(Side::Tail, cat);
            println!(
                "  {cat}\tHEP {:.3} (n={})\tTEP {:.3} (n={})",
                h.hits10, h.count, t.hits10, t.count
            );
        }
    }
}
