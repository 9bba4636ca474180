mod common;

use kge_core::models::{
    BatchGradient, EnergyConfig, ModelKind, Norm, ProjectionCache, SparseGradient,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

#[test]
fn batch_gradient_equals_sum_of_per_triple_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for kind in ModelKind::ALL {
        for norm in [Norm::L1, Norm::L2] {
            let cfg = EnergyConfig::new(
                norm,
                5,
                if kind == ModelKind::TransR || kind == ModelKind::TransF {
                    4
                } else {
                    5
                },
                3,
            );
            let model = random_model(kind, cfg, 12, 4, 0.5, &mut rng);
            let triples: Vec<_> = (0..60).map(|_| random_triple(12, 4, &mut rng)).collect();
            let scales: Vec<f64> = (0..60)
                .map(|i| if i % 3 == 0 { -1.0 } else { 1.0 })
                .collect();

            let cache = ProjectionCache::new(&model, triples.iter().map(|t| t.relation));
            let mut acc = BatchGradient::new();
            for (t, &s) in triples.iter().zip(&scales) {
                let e = model.accumulate_gradient(t, s, &cache, &mut acc).unwrap();
                assert!((e - model.energy(t).unwrap()).abs() < 1e-10);
            }
            let batch = acc.finish(&model);

            let mut reference = SparseGradient::new();
            for (t, &s) in triples.iter().zip(&scales) {
                reference.merge(model.grad_energy(t).unwrap().scaled(s));
            }
            let ids: Vec<_> = reference.slices().collect();
            assert_eq!(batch.slices().collect::<Vec<_>>(), ids, "{kind} {norm}");
            for id in ids {
                let err = relative_error(batch.get(id).unwrap(), reference.get(id).unwrap(), 1e-9);
                assert!(err < 1e-10, "{kind} {norm} {id:?}: {err:e}");
            }
        }
    }
}

#[test]
fn finite_differences_without_projection_normalization() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for kind in ModelKind::ALL {
        for _ in 0..30 {
            let cfg = EnergyConfig::new(Norm::L2, 4, 4, 3).with_normalization(false);
            let mut model = random_model(kind, cfg, 5, 3, 0.5, &mut rng);
            let triple = random_triple(5, 3, &mut rng);
            let grad = model.grad_energy(&triple).unwrap();
            for slice in dependent_slices(&model, &triple) {
                let numeric = finite_difference(&mut model, &triple, slice, 1e-5);
                let analytic = grad
                    .get(slice)
                    .map(<[f64]>::to_vec)
                    .unwrap_or(vec![0.0; numeric.len()]);
                let err = relative_error(&analytic, &numeric, 1e-6);
                assert!(err < 1e-4, "{kind} {slice:?}: {err:e}");
            }
        }
    }
}

#[test]
fn finite_differences_under_l1_away_from_kinks() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut checked = 0;
    for kind in ModelKind::ALL {
        for _ in 0..40 {
            let cfg = EnergyConfig::new(Norm::L1, 4, 4, 2);
            let mut model = random_model(kind, cfg, 5, 3, 0.5, &mut rng);
            let triple = random_triple(5, 3, &mut rng);
            let grad = model.grad_energy(&triple).unwrap();
            let mut near_kink = false;
            for slice in dependent_slices(&model, &triple) {
                let coarse = finite_difference(&mut model, &triple, slice, 1e-4);
                let fine = finite_difference(&mut model, &triple, slice, 1e-6);
                if relative_error(&coarse, &fine, 1e-6) > 1e-3 {
                    near_kink = true;
                }
            }
            if near_kink {
                continue;
            }
            for slice in dependent_slices(&model, &triple) {
                let numeric = finite_difference(&mut model, &triple, slice, 1e-6);
                let analytic = grad
                    .get(slice)
                    .map(<[f64]>::to_vec)
                    .unwrap_or(vec![0.0; numeric.len()]);
                // step 1e-6 leaves ~1e-10 of round-off, hence the larger floor
                let err = relative_error(&analytic, &numeric, 1e-5);
                assert!(err < 1e-4, "{kind} {slice:?} {triple:?}: {err:e}");
            }
            checked += 1;
        }
    }
    assert!(
        checked > 100,
        "only {checked} instances were away from kinks"
    );
}

#[test]
fn candidate_energies_agree_with_per_triple_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for kind in ModelKind::ALL {
        let cfg = EnergyConfig::new(
            Norm::L2,
            6,
            if kind == ModelKind::TransR || kind == ModelKind::TransF {
                5
            } else {
                6
            },
            4,
        );
        let model = random_model(kind, cfg, 30, 4, 0.5, &mut rng);
        for _ in 0..20 {
            let t = random_triple(30, 4, &mut rng);
            for side in [kge_core::dataset::Side::Head, kge_core::dataset::Side::Tail] {
                let batch = model.candidate_energies(&t, side).unwrap();
                for (e, &v) in batch.iter().enumerate() {
                    let single = model.energy(&side.replace(&t, e)).unwrap();
                    assert!(
                        (v - single).abs() < 1e-10,
                        "{kind} {side:?} {e}: {v} vs {single}"
                    );
                }
            }
        }
    }
}
