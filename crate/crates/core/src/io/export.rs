//! Relation representations as TSV: `[r ; α_r ; β_r]` per relation.

use std::fmt::Write as _;
use std::path::Path;

use crate::dataset::Vocabulary;
use crate::models::{Model, ModelParams};

#[derive(Debug, Clone, PartialEq)]
pub struct RelationRow {
    pub name: String,
    pub vector: Vec<f64>,
}

/// One row per relation, in vocabulary order. TransF rows hold the
/// translation followed by the head and tail coefficients; other models (and
/// `translation_only`) give the translation alone.
pub fn relation_rows(
    model: &Model,
    vocabulary: &Vocabulary,
    translation_only: bool,
) -> Vec<RelationRow> {
    let relations = model.params().relations();
    (0..model.num_relations())
        .map(|r| {
            let mut vector = relations.row(r).to_vec();
            if let (ModelParams::TransF(p), false) = (model.params(), translation_only) {
                vector.extend_from_slice(p.head_coefs.row(r));
                vector.extend_from_slice(p.tail_coefs.row(r));
            }
            let name = vocabulary
                .relation_name(r)
                .map(str::to_owned)
                .unwrap_or_else(|| format!("relation_{r}"));
            RelationRow { name, vector }
        })
        .collect()
}

/// TSV text with a header line. Values are printed as the shortest decimal
/// that round-trips their `f32` storage value (at most 9 significant digits).
pub fn export_relations(model: &Model, vocabulary: &Vocabulary, translation_only: bool) -> String {
    let dr = model.config().dim_r;
    let s = match (model.params(), translation_only) {
        (ModelParams::TransF(_), false) => model.config().bases,
        _ => 0,
    };
    let mut out = String::from("relation");
    for i in 0..dr {
        let _ = write!(out, "\tr{i}");
    }
    for i in 0..s {
        let _ = write!(out, "\talpha{i}");
    }
    for i in 0..s {
        let _ = write!(out, "\tbeta{i}");
    }
    out.push('\n');
    for row in relation_rows(model, vocabulary, translation_only) {
        out.push_str(&row.name);
        for v in &row.vector {
            let _ = write!(out, "\t{}", *v as f32);
        }
        out.push('\n');
    }
    out
}

pub fn write_relations(
    model: &Model,
    vocabulary: &Vocabulary,
    translation_only: bool,
    path: &Path,
) -> std::io::Result<()> {
    super::write_atomic(
        path,
        export_relations(model, vocabulary, translation_only).as_bytes(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{init_model, EnergyConfig, ModelKind, Norm};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vocab(nr: usize) -> Vocabulary {
        Vocabulary::from_names(["a".into(), "b".into()], (0..nr).map(|i| format!("rel{i}")))
            .unwrap()
    }

    #[test]
    fn transf_rows_have_translation_and_both_coefficient_sets() {
        let cfg = EnergyConfig::new(Norm::L1, 6, 50, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = init_model(ModelKind::TransF, &cfg, 2, 3, &mut rng).unwrap();
        let text = export_relations(&model, &vocab(3), false);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        for line in &lines[1..] {
            let cols: Vec<&str> = line.split('\t').collect();
            assert_eq!(cols.len(), 61);
            // fresh coefficients are zero
            assert!(cols[51..].iter().all(|c| c.parse::<f64>().unwrap() == 0.0));
        }
        assert!(lines[1].starts_with("rel0\t"));
        let short = export_relations(&model, &vocab(3), true);
        assert_eq!(short.lines().nth(1).unwrap().split('\t').count(), 51);
    }

    #[test]
    fn values_round_trip_through_text() {
        let cfg = EnergyConfig::square(Norm::L2, 7, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = init_model(ModelKind::TransE, &cfg, 2, 2, &mut rng).unwrap();
        let text = export_relations(&model, &vocab(2), false);
        let parsed: Vec<f64> = text
            .lines()
            .nth(1)
            .unwrap()
            .split('\t')
            .skip(1)
            .map(|c| c.parse::<f32>().unwrap() as f64)
            .collect();
        assert_eq!(parsed, model.params().relations().row(0));
    }
}
