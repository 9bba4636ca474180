//! Helpers shared by the integration tests: random models and reference
//! implementations written without the library's fast paths.
#![allow(dead_code)]

use std::collections::HashSet;

use kge_core::dataset::{RelationCategory, Side, Triple};
use kge_core::evaluation::TiePolicy;
use kge_core::models::{EnergyConfig, Model, ModelKind, ModelParams, SliceId};
use rand::Rng;

/// Model whose every parameter is uniform in `(-scale, scale)`.
pub fn random_model<R: Rng>(
    kind: ModelKind,
    config: EnergyConfig,
    num_entities: usize,
    num_relations: usize,
    scale: f64,
    rng: &mut R,
) -> Model {
    let mut params = ModelParams::zeros(kind, &config, num_entities, num_relations);
    let names: Vec<_> = params.tables().into_iter().map(|(n, _)| n).collect();
    for name in names {
        for v in params.table_mut(name).unwrap().data_mut() {
            *v = rng.gen_range(-scale..scale);
        }
    }
    Model::from_params(config, params).unwrap()
}

pub fn random_triple<R: Rng>(ne: usize, nr: usize, rng: &mut R) -> Triple {
    Triple::new(
        rng.gen_range(0..ne),
        rng.gen_range(0..nr),
        rng.gen_range(0..ne),
    )
}

/// Every slice the energy of `triple` can depend on.
pub fn dependent_slices(model: &Model, triple: &Triple) -> Vec<SliceId> {
    use kge_core::models::ParamName::*;
    let r = triple.relation;
    let mut out = vec![
        SliceId::new(Entity, triple.head),
        SliceId::new(Entity, triple.tail),
        SliceId::new(Relation, r),
    ];
    match model.kind() {
        ModelKind::TransE => {}
        ModelKind::TransH => out.push(SliceId::new(Normal, r)),
        ModelKind::TransR => out.push(SliceId::new(Projection, r)),
        ModelKind::TransF => {
            for i in 0..model.config().bases {
                out.push(SliceId::new(HeadBasis, i));
                out.push(SliceId::new(TailBasis, i));
            }
            out.push(SliceId::new(HeadCoef, r));
            out.push(SliceId::new(TailCoef, r));
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Central finite differences of the energy w.r.t. every entry of `slice`.
pub fn finite_difference(
    model: &mut Model,
    triple: &Triple,
    slice: SliceId,
    step: f64,
) -> Vec<f64> {
    let len = model.params().slice(slice).unwrap().len();
    (0..len)
        .map(|k| {
            let orig = model.params().slice(slice).unwrap()[k];
            model.params_mut().slice_mut(slice).unwrap()[k] = orig + step;
            let plus = model.energy(triple).unwrap();
            model.params_mut().slice_mut(slice).unwrap()[k] = orig - step;
            let minus = model.energy(triple).unwrap();
            model.params_mut().slice_mut(slice).unwrap()[k] = orig;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)`
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm2(&diff) / norm2(a).max(norm2(b)).max(floor)
}

/// Rank by explicit enumeration: score every substitution with the
/// per-triple energy, drop known non-target candidates when filtering, sort
/// stably and read off the target's tied block.
pub fn brute_force_rank(
    model: &Model,
    triple: &Triple,
    side: Side,
    known: &[Triple],
    filtered: bool,
    tie: TiePolicy,
) -> f64 {
    let target = side.entity(triple);
    let known: HashSet<Triple> = known.iter().copied().collect();
    let mut scored: Vec<(f64, usize)> = (0..model.num_entities())
        .map(|e| side.replace(triple, e))
        .filter(|cand| !filtered || side.entity(cand) == target || !known.contains(cand))
        .map(|cand| (model.energy(&cand).unwrap(), side.entity(&cand)))
        .collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let e_target = model.energy(triple).unwrap();
    let positions: Vec<usize> = scored
        .iter()
        .enumerate()
        .filter(|(_, (e, _))| *e == e_target)
        .map(|(i, _)| i + 1)
        .collect();
    let first = *positions.first().unwrap() as f64;
    let last = *positions.last().unwrap() as f64;
    match tie {
        TiePolicy::Mean => (first + last) / 2.0,
        TiePolicy::Optimistic => first,
        TiePolicy::Pessimistic => last,
    }
}

/// Relation category from a linear scan of the train triples.
pub fn brute_force_category(train: &[Triple], relation: usize, threshold: f64) -> RelationCategory {
    let facts: Vec<&Triple> = train.iter().filter(|t| t.relation == relation).collect();
    if facts.is_empty() {
        return RelationCategory::OneToOne;
    }
    let heads: HashSet<usize> = facts.iter().map(|t| t.head).collect();
    let tails: HashSet<usize> = facts.iter().map(|t| t.tail).collect();
    let tph = facts.len() as f64 / heads.len() as f64;
    let hpt = facts.len() as f64 / tails.len() as f64;
    match (hpt > threshold, tph > threshold) {
        (false, false) => RelationCategory::OneToOne,
        (false, true) => RelationCategory::OneToMany,
        (true, false) => RelationCategory::ManyToOne,
        (true, true) => RelationCategory::ManyToMany,
    }
}
