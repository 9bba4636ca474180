//! Seeded synthetic knowledge graphs for benchmarks and smoke tests.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Triple, Vocabulary};

/// A graph where every entity carries a few latent categorical attributes.
///
/// Each attribute partitions the entities into `groups` groups and drives
/// three relations:
/// - `attr{a}/member_of`: member -> group hub (N-to-1)
/// - `attr{a}/has_member`: group hub -> member (1-to-N), with its own hubs
/// - `attr{a}/related_to`: member -> hub of its group and of the next group (N-to-N)
///
/// Relations of the same attribute are correlated through the shared
/// partition, while different attributes are independent. A single
/// translation cannot satisfy all attributes at once; a relation-specific
/// projection can.
#[derive(Debug, Clone)]
pub struct LatentAttributeConfig {
    pub num_entities: usize,
    pub num_attributes: usize,
    pub groups: usize,
    pub valid_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for LatentAttributeConfig {
    fn default() -> Self {
        LatentAttributeConfig {
            num_entities: 200,
            num_attributes: 4,
            groups: 10,
            valid_fraction: 0.03,
            test_fraction: 0.07,
            seed: 7,
        }
    }
}

pub fn latent_attribute_graph(config: &LatentAttributeConfig) -> Dataset {
    assert!(config.num_entities >= config.groups && config.groups >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.num_entities;

    let entities = (0..n).map(|i| format!("ent{i:04}"));
    let mut relations = Vec::new();
    for a in 0..config.num_attributes {
        for kind in ["member_of", "has_member", "related_to"] {
            relations.push(format!("attr{a}/{kind}"));
        }
    }
    let vocabulary = Vocabulary::from_names(entities, relations).expect("unique names");

    let mut triples = Vec::new();
    let mut seen = HashSet::new();
    let mut push = |t: Triple, triples: &mut Vec<Triple>| {
        if seen.insert(t) {
            triples.push(t);
        }
    };
    for a in 0..config.num_attributes {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut group = vec![0usize; n];
        for (rank, &e) in order.iter().enumerate() {
            group[e] = rank % config.groups;
        }
        let hubs: Vec<Vec<usize>> = (0..3)
            .map(|_| {
                let mut pool: Vec<usize> = (0..n).collect();
                pool.shuffle(&mut rng);
                pool.truncate(config.groups);
                pool
            })
            .collect();
        let base = 3 * a;
        for (m, &g) in group.iter().enumerate().take(n) {
            push(Triple::new(m, base, hubs[0][g]), &mut triples);
            push(Triple::new(hubs[1][g], base + 1, m), &mut triples);
            push(Triple::new(m, base + 2, hubs[2][g]), &mut triples);
            push(
                Triple::new(m, base + 2, hubs[2][(g + 1) % config.groups]),
                &mut triples,
            );
        }
    }
    split(
        vocabulary,
        triples,
        config.valid_fraction,
        config.test_fraction,
        &mut rng,
    )
}

/// Uniformly random triples; used where only the sizes matter (timing).
pub fn uniform_graph(
    num_entities: usize,
    num_relations: usize,
    num_triples: usize,
    seed: u64,
) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocabulary = Vocabulary::from_names(
        (0..num_entities).map(|i| format!("ent{i}")),
        (0..num_relations).map(|i| format!("rel{i}")),
    )
    .expect("unique names");
    let triples = (0..num_triples)
        .map(|_| {
            Triple::new(
                rng.gen_range(0..num_entities),
                rng.gen_range(0..num_relations),
                rng.gen_range(0..num_entities),
            )
        })
        .collect();
    split(vocabulary, triples, 0.0, 0.05, &mut rng)
}

fn split(
    vocabulary: Vocabulary,
    mut triples: Vec<Triple>,
    valid_fraction: f64,
    test_fraction: f64,
    rng: &mut ChaCha8Rng,
) -> Dataset {
    triples.shuffle(rng);
    let n = triples.len();
    let n_test = (n as f64 * test_fraction).round() as usize;
    let n_valid = (n as f64 * valid_fraction).round() as usize;
    let test = triples.split_off(n - n_test);
    let valid = triples.split_off(triples.len() - n_valid);
    Dataset::new(vocabulary, triples, valid, test).expect("generated ids are in range")
}
