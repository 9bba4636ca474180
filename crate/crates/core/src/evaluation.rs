//! Link-prediction ranking: raw and filtered MR, MRR and Hits@k, plus the
//! head/tail prediction breakdown by relation category.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{KnownTripleIndex, RelationCategory, RelationStats, Side, Triple};
use crate::models::{Model, ModelError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("nothing to evaluate: the split is empty")]
    EmptySplit,
    #[error("target index {target} out of range for {candidates} candidates")]
    TargetOutOfRange { target: usize, candidates: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How candidates with the same energy as the target are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TiePolicy {
    /// Average position among the tied block.
    #[default]
    Mean,
    /// Target placed before every tied candidate.
    Optimistic,
    /// Target placed after every tied candidate.
    Pessimistic,
}

impl TiePolicy {
    pub const ALL: [TiePolicy; 3] = [
        TiePolicy::Mean,
        TiePolicy::Optimistic,
        TiePolicy::Pessimistic,
    ];

    /// Rank given the number of strictly better and of tied competitors.
    pub fn rank(self, lower: usize, equal: usize) -> f64 {
        let base = 1.0 + lower as f64;
        match self {
            TiePolicy::Mean => base + equal as f64 / 2.0,
            TiePolicy::Optimistic => base,
            TiePolicy::Pessimistic => base + equal as f64,
        }
    }
}

impl fmt::Display for TiePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TiePolicy::Mean => "mean",
            TiePolicy::Optimistic => "optimistic",
            TiePolicy::Pessimistic => "pessimistic",
        })
    }
}

impl FromStr for TiePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TiePolicy::ALL
            .into_iter()
            .find(|p| p.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                format!("unknown tie policy {s:?} (expected mean, optimistic or pessimistic)")
            })
    }
}

/// Raw and filtered rank of `target` among `energies`.
///
/// `known` lists candidates forming known triples; in the filtered setting
/// all of them except the target are dropped.
pub fn ranks_from_energies(
    energies: &[f64],
    target: usize,
    known: &[usize],
    tie: TiePolicy,
) -> Result<(f64, f64), EvalError> {
    let e_target = *energies.get(target).ok_or(EvalError::TargetOutOfRange {
        target,
        candidates: energies.len(),
    })?;
    let (mut lower, mut equal) = (0usize, 0usize);
    for (i, &e) in energies.iter().enumerate() {
        if e < e_target {
            lower += 1;
        } else if e == e_target && i != target {
            equal += 1;
        }
    }
    let raw = tie.rank(lower, equal);
    for &k in known {
        if k == target || k >= energies.len() {
            continue;
        }
        let e = energies[k];
        if e < e_target {
            lower -= 1;
        } else if e == e_target {
            equal -= 1;
        }
    }
    Ok((raw, tie.rank(lower, equal)))
}

/// Rank of `triple` among all substitutions of the entity on `side`.
pub fn rank_candidates(
    model: &Model,
    triple: &Triple,
    side: Side,
    known: &KnownTripleIndex,
    filtered: bool,
    tie: TiePolicy,
) -> Result<f64, EvalError> {
    let energies = model.candidate_energies(triple, side)?;
    let (raw, filt) = ranks_from_energies(
        &energies,
        side.entity(triple),
        known.known_replacements(triple, side),
        tie,
    )?;
    Ok(if filtered { filt } else { raw })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSet {
    pub mr: f64,
    pub mrr: f64,
    #[serde(rename = "hits@1")]
    pub hits1: f64,
    #[serde(rename = "hits@3")]
    pub hits3: f64,
    #[serde(rename = "hits@10")]
    pub hits10: f64,
    /// Number of ranks aggregated (two per triple).
    pub count: usize,
}

impl MetricSet {
    pub fn from_ranks(ranks: &[f64]) -> Self {
        let mut acc = MetricAccumulator::default();
        for &r in ranks {
            acc.push(r);
        }
        acc.finish()
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct MetricAccumulator {
    count: usize,
    rank_sum: f64,
    reciprocal_sum: f64,
    hits: [usize; 3],
}

impl MetricAccumulator {
    fn push(&mut self, rank: f64) {
        self.count += 1;
        self.rank_sum += rank;
        self.reciprocal_sum += 1.0 / rank;
        for (h, k) in self.hits.iter_mut().zip([1.0, 3.0, 10.0]) {
            if rank <= k {
                *h += 1;
            }
        }
    }

    fn finish(&self) -> MetricSet {
        if self.count == 0 {
            return MetricSet::default();
        }
        let n = self.count as f64;
        MetricSet {
            mr: self.rank_sum / n,
            mrr: self.reciprocal_sum / n,
            hits1: self.hits[0] as f64 / n,
            hits3: self.hits[1] as f64 / n,
            hits10: self.hits[2] as f64 / n,
            count: self.count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CategoryCell {
    #[serde(rename = "hits@10")]
    pub hits10: f64,
    pub count: usize,
}

/// Hits@10 for head prediction (HEP) and tail prediction (TEP), indexed by
/// [`RelationCategory::index`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CategoryBreakdown {
    pub hep: [CategoryCell; 4],
    pub tep: [CategoryCell; 4],
}

impl CategoryBreakdown {
    pub fn cell(&self, side: Side, category: RelationCategory) -> CategoryCell {
        match side {
            Side::Head => self.hep[category.index()],
            Side::Tail => self.tep[category.index()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SettingReport {
    #[serde(flatten)]
    pub metrics: MetricSet,
    pub breakdown: CategoryBreakdown,
}

impl std::ops::Deref for SettingReport {
    type Target = MetricSet;

    fn deref(&self) -> &MetricSet {
        &self.metrics
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tie_policy: TiePolicy,
    pub triples: usize,
    pub raw: SettingReport,
    pub filtered: SettingReport,
}

impl EvalReport {
    /// `key<TAB>value` lines, e.g. `filtered.hits@10` or
    /// `filtered.hep.N-1.hits@10`.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "triples\t{}", self.triples);
        let _ = writeln!(out, "tie_policy\t{}", self.tie_policy);
        for (name, s) in [("raw", &self.raw), ("filtered", &self.filtered)] {
            let m = &s.metrics;
            let _ = writeln!(out, "{name}.mr\t{}", m.mr);
            let _ = writeln!(out, "{name}.mrr\t{}", m.mrr);
            let _ = writeln!(out, "{name}.hits@1\t{}", m.hits1);
            let _ = writeln!(out, "{name}.hits@3\t{}", m.hits3);
            let _ = writeln!(out, "{name}.hits@10\t{}", m.hits10);
            for (side, cells) in [("hep", &s.breakdown.hep), ("tep", &s.breakdown.tep)] {
                for cat in RelationCategory::ALL {
                    let c = cells[cat.index()];
                    let _ = writeln!(out, "{name}.{side}.{cat}.hits@10\t{}", c.hits10);
                    let _ = writeln!(out, "{name}.{side}.{cat}.count\t{}", c.count);
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Raw and filtered ranks of one triple, head side then tail side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripleRanks {
    pub head: (f64, f64),
    pub tail: (f64, f64),
}

pub fn rank_triple(
    model: &Model,
    triple: &Triple,
    known: &KnownTripleIndex,
    tie: TiePolicy,
) -> Result<TripleRanks, EvalError> {
    let side_ranks = |side: Side| -> Result<(f64, f64), EvalError> {
        let energies = model.candidate_energies(triple, side)?;
        ranks_from_energies(
            &energies,
            side.entity(triple),
            known.known_replacements(triple, side),
            tie,
        )
    };
    Ok(TripleRanks {
        head: side_ranks(Side::Head)?,
        tail: side_ranks(Side::Tail)?,
    })
}

#[derive(Default)]
struct SettingAccumulator {
    all: MetricAccumulator,
    cells: [[(usize, usize); 4]; 2],
}

impl SettingAccumulator {
    fn push(&mut self, side: Side, category: RelationCategory, rank: f64) {
        self.all.push(rank);
        let cell = &mut self.cells[side as usize][category.index()];
        cell.1 += 1;
        if rank <= 10.0 {
            cell.0 += 1;
        }
    }

    fn finish(&self) -> SettingReport {
        let cells = |side: usize| {
            let mut out = [CategoryCell::default(); 4];
            for (o, &(hits, count)) in out.iter_mut().zip(&self.cells[side]) {
                *o = CategoryCell {
                    hits10: if count == 0 {
                        0.0
                    } else {
                        hits as f64 / count as f64
                    },
                    count,
                };
            }
            out
        };
        SettingReport {
            metrics: self.all.finish(),
            breakdown: CategoryBreakdown {
                hep: cells(Side::Head as usize),
                tep: cells(Side::Tail as usize),
            },
        }
    }
}

/// Ranks both sides of every triple in `split` against all entities.
///
/// Triples are ranked in parallel; the per-triple ranks are reduced in split
/// order so the report does not depend on scheduling.
pub fn evaluate_link_prediction(
    model: &Model,
    split: &[Triple],
    known: &KnownTripleIndex,
    stats: &RelationStats,
    tie: TiePolicy,
) -> Result<EvalReport, EvalError> {
    if split.is_empty() {
        return Err(EvalError::EmptySplit);
    }
    let ranks: Vec<TripleRanks> = split
        .par_iter()
        .map(|t| rank_triple(model, t, known, tie))
        .collect::<Result<_, _>>()?;
    let mut raw = SettingAccumulator::default();
    let mut filtered = SettingAccumulator::default();
    for (t, r) in split.iter().zip(&ranks) {
        let cat = stats.category(t.relation);
        for (side, (rr, fr)) in [(Side::Head, r.head), (Side::Tail, r.tail)] {
            raw.push(side, cat, rr);
            filtered.push(side, cat, fr);
        }
    }
    Ok(EvalReport {
        tie_policy: tie,
        triples: split.len(),
        raw: raw.finish(),
        filtered: filtered.finish(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_energies_use_mean_of_tied_positions() {
        let e = [0.5; 5];
        assert_eq!(
            ranks_from_energies(&e, 2, &[], TiePolicy::Mean).unwrap(),
            (3.0, 3.0)
        );
        assert_eq!(
            ranks_from_energies(&e, 2, &[], TiePolicy::Optimistic)
                .unwrap()
                .0,
            1.0
        );
        assert_eq!(
            ranks_from_energies(&e, 2, &[], TiePolicy::Pessimistic)
                .unwrap()
                .0,
            5.0
        );
    }

    #[test]
    fn unique_minimum_is_rank_one() {
        let e = [0.3, 0.0, 0.7];
        assert_eq!(
            ranks_from_energies(&e, 1, &[], TiePolicy::Mean).unwrap(),
            (1.0, 1.0)
        );
    }

    #[test]
    fn filtering_removes_known_competitors_only() {
        let e = [0.1, 0.2, 0.3, 0.3, 0.9];
        // target 3; candidates 0 and 2 are known, and so is the target itself
        let (raw, filt) = ranks_from_energies(&e, 3, &[0, 2, 3], TiePolicy::Mean).unwrap();
        assert_eq!(raw, 1.0 + 2.0 + 0.5);
        assert_eq!(filt, 1.0 + 1.0);
    }

    #[test]
    fn metric_arithmetic() {
        let m = MetricSet::from_ranks(&[1.0, 2.0, 4.0]);
        assert!((m.mrr - 1.75 / 3.0).abs() < 1e-15);
        assert!((m.mr - 7.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.hits10, 1.0);
        assert!((m.hits1 - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.hits3 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tie_policy_parsing() {
        for p in TiePolicy::ALL {
            assert_eq!(p.to_string().parse::<TiePolicy>().unwrap(), p);
        }
        assert!("best".parse::<TiePolicy>().is_err());
    }

    #[test]
    fn out_of_range_target() {
        assert!(ranks_from_energies(&[0.0], 3, &[], TiePolicy::Mean).is_err());
    }
}
