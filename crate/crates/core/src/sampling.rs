//! Negative triples by corrupting the head or the tail of a positive.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{KnownTripleIndex, RelationStats, Side, Triple};

/// Rejection attempts before a known-true corruption is accepted anyway.
pub const MAX_REJECTIONS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("corruption needs at least 2 entities, got {0}")]
    TooFewEntities(usize),
    #[error("bern sampling has no statistics for relation {0}")]
    MissingStats(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// Head and tail corrupted with equal probability.
    #[serde(alias = "uniform")]
    Unif,
    /// Head corrupted with probability `tph / (tph + hpt)`.
    Bern,
}

impl FromStr for SamplingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "unif" | "uniform" => Ok(SamplingMode::Unif),
            "bern" => Ok(SamplingMode::Bern),
            _ => Err(format!(
                "unknown sampling mode {s:?} (expected unif or bern)"
            )),
        }
    }
}

impl fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingMode::Unif => "unif",
            SamplingMode::Bern => "bern",
        })
    }
}

#[derive(Debug, Clone)]
pub struct CorruptionPolicy {
    mode: SamplingMode,
    stats: Option<RelationStats>,
}

impl CorruptionPolicy {
    pub fn uniform() -> Self {
        CorruptionPolicy {
            mode: SamplingMode::Unif,
            stats: None,
        }
    }

    pub fn bern(stats: RelationStats) -> Self {
        CorruptionPolicy {
            mode: SamplingMode::Bern,
            stats: Some(stats),
        }
    }

    pub fn new(mode: SamplingMode, stats: &RelationStats) -> Self {
        match mode {
            SamplingMode::Unif => Self::uniform(),
            SamplingMode::Bern => Self::bern(stats.clone()),
        }
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }

    /// `(p_head, p_tail)`, summing to one. Relations whose `tph + hpt` is
    /// zero fall back to an even split.
    pub fn corruption_probabilities(&self, relation: usize) -> Result<(f64, f64), SamplingError> {
        let stats = match (self.mode, &self.stats) {
            (SamplingMode::Unif, _) => return Ok((0.5, 0.5)),
            (SamplingMode::Bern, Some(stats)) => stats,
            (SamplingMode::Bern, None) => return Err(SamplingError::MissingStats(relation)),
        };
        let s = stats
            .get(relation)
            .ok_or(SamplingError::MissingStats(relation))?;
        let total = s.tph + s.hpt;
        if total > 0.0 {
            Ok((s.tph / total, s.hpt / total))
        } else {
            log::warn!(
                "relation {relation} has no train statistics; corrupting head and tail evenly"
            );
            Ok((0.5, 0.5))
        }
    }
}

/// Draws corruptions of positive triples.
///
/// When a [`KnownTripleIndex`] is attached, candidates that are known true
/// are redrawn, up to [`MAX_REJECTIONS`] times.
#[derive(Debug)]
pub struct NegativeSampler<'a> {
    policy: &'a CorruptionPolicy,
    num_entities: usize,
    known: Option<&'a KnownTripleIndex>,
    exhausted: AtomicU64,
}

impl<'a> NegativeSampler<'a> {
    pub fn new(
        policy: &'a CorruptionPolicy,
        num_entities: usize,
        known: Option<&'a KnownTripleIndex>,
    ) -> Result<Self, SamplingError> {
        if num_entities < 2 {
            return Err(SamplingError::TooFewEntities(num_entities));
        }
        Ok(NegativeSampler {
            policy,
            num_entities,
            known,
            exhausted: AtomicU64::new(0),
        })
    }

    /// Number of draws that gave up after [`MAX_REJECTIONS`] known-true candidates.
    pub fn exhausted_draws(&self) -> u64 {
        self.exhausted.load(Ordering::Relaxed)
    }

    pub fn choose_side<R: Rng + ?Sized>(
        &self,
        relation: usize,
        rng: &mut R,
    ) -> Result<Side, SamplingError> {
        let (p_head, _) = self.policy.corruption_probabilities(relation)?;
        Ok(if rng.gen::<f64>() < p_head {
            Side::Head
        } else {
            Side::Tail
        })
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        triple: &Triple,
        rng: &mut R,
    ) -> Result<Triple, SamplingError> {
        let side = self.choose_side(triple.relation, rng)?;
        Ok(self.corrupt(triple, side, rng))
    }

    /// Replaces the entity on `side` with a different entity drawn uniformly.
    pub fn corrupt<R: Rng + ?Sized>(&self, triple: &Triple, side: Side, rng: &mut R) -> Triple {
        let original = side.entity(triple);
        let mut candidate = *triple;
        for _ in 0..MAX_REJECTIONS {
            let mut e = rng.gen_range(0..self.num_entities - 1);
            if e >= original {
                e += 1;
            }
            candidate = side.replace(triple, e);
            match self.known {
                Some(known) if known.contains(&candidate) => continue,
                _ => return candidate,
            }
        }
        self.exhausted.fetch_add(1, Ordering::Relaxed);
        candidate
    }
}
