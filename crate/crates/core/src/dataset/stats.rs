use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Dataset;

/// Averages above this mark a side as "many".
pub const DEFAULT_CATEGORY_THRESHOLD: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationCategory {
    #[serde(rename = "1-1")]
    OneToOne,
    #[serde(rename = "1-N")]
    OneToMany,
    #[serde(rename = "N-1")]
    ManyToOne,
    #[serde(rename = "N-N")]
    ManyToMany,
}

impl RelationCategory {
    pub const ALL: [RelationCategory; 4] = [
        RelationCategory::OneToOne,
        RelationCategory::OneToMany,
        RelationCategory::ManyToOne,
        RelationCategory::ManyToMany,
    ];

    pub fn classify(hpt: f64, tph: f64, threshold: f64) -> Self {
        match (hpt > threshold, tph > threshold) {
            (false, false) => RelationCategory::OneToOne,
            (false, true) => RelationCategory::OneToMany,
            (true, false) => RelationCategory::ManyToOne,
            (true, true) => RelationCategory::ManyToMany,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RelationCategory::OneToOne => "1-1",
            RelationCategory::OneToMany => "1-N",
            RelationCategory::ManyToOne => "N-1",
            RelationCategory::ManyToMany => "N-N",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for RelationCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for RelationCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RelationCategory::ALL
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| format!("unknown relation category {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationStat {
    /// Average number of distinct heads per tail.
    pub hpt: f64,
    /// Average number of distinct tails per head.
    pub tph: f64,
    pub category: RelationCategory,
    pub train_count: usize,
    pub distinct_heads: usize,
    pub distinct_tails: usize,
}

/// Per-relation head/tail multiplicities computed on the train split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationStats {
    pub threshold: f64,
    pub relations: Vec<RelationStat>,
    pub warnings: Vec<String>,
}

impl RelationStats {
    pub fn compute(dataset: &Dataset) -> Self {
        Self::compute_with_threshold(dataset, DEFAULT_CATEGORY_THRESHOLD)
    }

    pub fn compute_with_threshold(dataset: &Dataset, threshold: f64) -> Self {
        let n_rel = dataset.num_relations();
        let mut counts = vec![0usize; n_rel];
        let mut heads: Vec<HashSet<usize>> = vec![HashSet::new(); n_rel];
        let mut tails: Vec<HashSet<usize>> = vec![HashSet::new(); n_rel];
        for t in &dataset.train {
            counts[t.relation] += 1;
            heads[t.relation].insert(t.head);
            tails[t.relation].insert(t.tail);
        }

        let mut warnings = Vec::new();
        let relations = (0..n_rel)
            .map(|r| {
                let (dh, dt) = (heads[r].len(), tails[r].len());
                if counts[r] == 0 {
                    let name = dataset.vocabulary.relation_name(r).unwrap_or("?");
                    warnings.push(format!(
                        "relation {name:?} does not occur in train; treated as 1-1"
                    ));
                    return RelationStat {
                        hpt: 0.0,
                        tph: 0.0,
                        category: RelationCategory::OneToOne,
                        train_count: 0,
                        distinct_heads: 0,
                        distinct_tails: 0,
                    };
                }
                let hpt = counts[r] as f64 / dt as f64;
                let tph = counts[r] as f64 / dh as f64;
                RelationStat {
                    hpt,
                    tph,
                    category: RelationCategory::classify(hpt, tph, threshold),
                    train_count: counts[r],
                    distinct_heads: dh,
                    distinct_tails: dt,
                }
            })
            .collect();

        RelationStats {
            threshold,
            relations,
            warnings,
        }
    }

    pub fn get(&self, relation: usize) -> Option<&RelationStat> {
        self.relations.get(relation)
    }

    pub fn category(&self, relation: usize) -> RelationCategory {
        self.relations
            .get(relation)
            .map(|s| s.category)
            .unwrap_or(RelationCategory::OneToOne)
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }
}
