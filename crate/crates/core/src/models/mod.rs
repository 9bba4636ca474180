//! Translation-based energy models.
//!
//! Every model scores a triple as `‖h⊥ + r − t⊥‖` (L1 or L2) and differs
//! only in how entities are carried into the relation space:
//!
//! | kind   | head projection                    |
//! |--------|------------------------------------|
//! | TransE | `h`                                |
//! | TransH | `h − (wᵣ·h) wᵣ`                    |
//! | TransR | `Mᵣ h`                             |
//! | TransF | `(Σᵢ αᵣ⁽ⁱ⁾ U⁽ⁱ⁾ + I) h`             |
//!
//! TransF's tail side uses its own bases `V⁽ⁱ⁾` and coefficients `βᵣ`.
//! Bases and projection matrices are stored `d_r × d_e` row-major and `I`
//! is the rectangular identity.
//!
//! Parameters are held as `f64` for arithmetic but every write made by
//! this crate (initialization, optimizer updates, constraint enforcement)
//! rounds to the nearest `f32`, which is the checkpoint storage precision.

mod energy;
mod gradient;
mod init;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Triple;

pub use energy::Projector;
pub use gradient::{BatchGradient, ProjectionCache, SparseGradient};
pub use init::{init_model, init_transf_from_transe};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("triple {triple:?} is outside the model ({num_entities} entities, {num_relations} relations)")]
    OutOfRange {
        triple: Triple,
        num_entities: usize,
        num_relations: usize,
    },
    #[error("non-finite energy for triple {0:?}")]
    NonFinite(Triple),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("hyperplane normal of relation {0} has zero or non-finite norm")]
    DegenerateNormal(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    TransE,
    TransH,
    TransR,
    TransF,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::TransE,
        ModelKind::TransH,
        ModelKind::TransR,
        ModelKind::TransF,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::TransE => "transe",
            ModelKind::TransH => "transh",
            ModelKind::TransR => "transr",
            ModelKind::TransF => "transf",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                format!("unknown model {s:?} (expected transe, transh, transr or transf)")
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
}

impl FromStr for Norm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Norm::L1),
            "l2" => Ok(Norm::L2),
            _ => Err(format!("unknown norm {s:?} (expected l1 or l2)")),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::L1 => "l1",
            Norm::L2 => "l2",
        })
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyConfig {
    pub norm: Norm,
    pub dim_e: usize,
    pub dim_r: usize,
    /// Number of basis matrices per side (TransF only).
    pub bases: usize,
    /// Rescale `h⊥` and `t⊥` to unit L2 norm before translating.
    #[serde(default = "default_true")]
    pub normalize_projections: bool,
    /// Clamp entity embeddings to the unit ball during constraint enforcement.
    #[serde(default = "default_true")]
    pub bound_entities: bool,
}

impl EnergyConfig {
    pub fn new(norm: Norm, dim_e: usize, dim_r: usize, bases: usize) -> Self {
        EnergyConfig {
            norm,
            dim_e,
            dim_r,
            bases,
            normalize_projections: true,
            bound_entities: true,
        }
    }

    pub fn square(norm: Norm, dim: usize, bases: usize) -> Self {
        Self::new(norm, dim, dim, bases)
    }

    pub fn with_normalization(mut self, on: bool) -> Self {
        self.normalize_projections = on;
        self
    }

    pub fn validate(&self, kind: ModelKind) -> Result<(), ModelError> {
        if self.dim_e == 0 || self.dim_r == 0 {
            return Err(ModelError::InvalidConfig(
                "embedding dimensions must be at least 1".into(),
            ));
        }
        match kind {
            ModelKind::TransE | ModelKind::TransH if self.dim_e != self.dim_r => {
                Err(ModelError::InvalidConfig(format!(
                    "{kind} requires dim_r == dim_e (got {} and {})",
                    self.dim_r, self.dim_e
                )))
            }
            ModelKind::TransF if self.bases == 0 => Err(ModelError::InvalidConfig(
                "transf requires at least one basis".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Dense row-major array whose first axis indexes independently updated
/// slices (one entity, one relation, one basis matrix, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    shape: Vec<usize>,
    row_len: usize,
    data: Vec<f64>,
}

impl Table {
    pub fn zeros(shape: &[usize]) -> Self {
        assert!(!shape.is_empty(), "table needs at least one axis");
        let row_len = shape[1..].iter().product();
        Table {
            shape: shape.to_vec(),
            row_len,
            data: vec![0.0; shape[0] * row_len],
        }
    }

    pub fn from_data(shape: &[usize], data: Vec<f64>) -> Option<Self> {
        let mut t = Table::zeros(shape);
        if data.len() != t.data.len() {
            return None;
        }
        t.data = data;
        Some(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn row_len(&self) -> usize {
        self.row_len
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.row_len..(i + 1) * self.row_len]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.row_len..(i + 1) * self.row_len]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Names of the parameter arrays, in checkpoint order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParamName {
    Entity,
    Relation,
    Normal,
    Projection,
    HeadBasis,
    TailBasis,
    HeadCoef,
    TailCoef,
}

impl ParamName {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::Entity => "entity",
            ParamName::Relation => "relation",
            ParamName::Normal => "normal",
            ParamName::Projection => "projection",
            ParamName::HeadBasis => "head_basis",
            ParamName::TailBasis => "tail_basis",
            ParamName::HeadCoef => "head_coef",
            ParamName::TailCoef => "tail_coef",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            ParamName::Entity,
            ParamName::Relation,
            ParamName::Normal,
            ParamName::Projection,
            ParamName::HeadBasis,
            ParamName::TailBasis,
            ParamName::HeadCoef,
            ParamName::TailCoef,
        ]
        .into_iter()
        .find(|p| p.as_str() == s)
    }
}

/// One independently updated block of parameters: a row of a [`Table`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SliceId {
    pub param: ParamName,
    pub row: usize,
}

impl SliceId {
    pub const fn new(param: ParamName, row: usize) -> Self {
        SliceId { param, row }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransEParams {
    pub entities: Table,
    pub relations: Table,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransHParams {
    pub entities: Table,
    pub relations: Table,
    pub normals: Table,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransRParams {
    pub entities: Table,
    pub relations: Table,
    /// `Nᵣ × d_r × d_e`
    pub projections: Table,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransFParams {
    pub entities: Table,
    pub relations: Table,
    /// `s × d_r × d_e`
    pub head_bases: Table,
    pub tail_bases: Table,
    /// `Nᵣ × s`
    pub head_coefs: Table,
    pub tail_coefs: Table,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    TransE(TransEParams),
    TransH(TransHParams),
    TransR(TransRParams),
    TransF(TransFParams),
}

impl ModelParams {
    /// All-zero parameters with the shapes implied by `config`.
    pub fn zeros(
        kind: ModelKind,
        config: &EnergyConfig,
        num_entities: usize,
        num_relations: usize,
    ) -> Self {
        let (de, dr, s) = (config.dim_e, config.dim_r, config.bases);
        let entities = Table::zeros(&[num_entities, de]);
        let relations = Table::zeros(&[num_relations, dr]);
        match kind {
            ModelKind::TransE => ModelParams::TransE(TransEParams {
                entities,
                relations,
            }),
            ModelKind::TransH => ModelParams::TransH(TransHParams {
                entities,
                relations,
                normals: Table::zeros(&[num_relations, de]),
            }),
            ModelKind::TransR => ModelParams::TransR(TransRParams {
                entities,
                relations,
                projections: Table::zeros(&[num_relations, dr, de]),
            }),
            ModelKind::TransF => ModelParams::TransF(TransFParams {
                entities,
                relations,
                head_bases: Table::zeros(&[s, dr, de]),
                tail_bases: Table::zeros(&[s, dr, de]),
                head_coefs: Table::zeros(&[num_relations, s]),
                tail_coefs: Table::zeros(&[num_relations, s]),
            }),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::TransE(_) => ModelKind::TransE,
            ModelParams::TransH(_) => ModelKind::TransH,
            ModelParams::TransR(_) => ModelKind::TransR,
            ModelParams::TransF(_) => ModelKind::TransF,
        }
    }

    pub fn entities(&self) -> &Table {
        match self {
            ModelParams::TransE(p) => &p.entities,
            ModelParams::TransH(p) => &p.entities,
            ModelParams::TransR(p) => &p.entities,
            ModelParams::TransF(p) => &p.entities,
        }
    }

    pub fn relations(&self) -> &Table {
        match self {
            ModelParams::TransE(p) => &p.relations,
            ModelParams::TransH(p) => &p.relations,
            ModelParams::TransR(p) => &p.relations,
            ModelParams::TransF(p) => &p.relations,
        }
    }

    /// Named arrays in declaration (and checkpoint) order.
    pub fn tables(&self) -> Vec<(ParamName, &Table)> {
        use ParamName::*;
        match self {
            ModelParams::TransE(p) => vec![(Entity, &p.entities), (Relation, &p.relations)],
            ModelParams::TransH(p) => vec![
                (Entity, &p.entities),
                (Relation, &p.relations),
                (Normal, &p.normals),
            ],
            ModelParams::TransR(p) => vec![
                (Entity, &p.entities),
                (Relation, &p.relations),
                (Projection, &p.projections),
            ],
            ModelParams::TransF(p) => vec![
                (Entity, &p.entities),
                (Relation, &p.relations),
                (HeadBasis, &p.head_bases),
                (TailBasis, &p.tail_bases),
                (HeadCoef, &p.head_coefs),
                (TailCoef, &p.tail_coefs),
            ],
        }
    }

    pub fn table(&self, name: ParamName) -> Option<&Table> {
        self.tables()
            .into_iter()
            .find_map(|(n, t)| (n == name).then_some(t))
    }

    pub fn table_mut(&mut self, name: ParamName) -> Option<&mut Table> {
        use ParamName::*;
        match (self, name) {
            (ModelParams::TransE(p), Entity) => Some(&mut p.entities),
            (ModelParams::TransE(p), Relation) => Some(&mut p.relations),
            (ModelParams::TransH(p), Entity) => Some(&mut p.entities),
            (ModelParams::TransH(p), Relation) => Some(&mut p.relations),
            (ModelParams::TransH(p), Normal) => Some(&mut p.normals),
            (ModelParams::TransR(p), Entity) => Some(&mut p.entities),
            (ModelParams::TransR(p), Relation) => Some(&mut p.relations),
            (ModelParams::TransR(p), Projection) => Some(&mut p.projections),
            (ModelParams::TransF(p), Entity) => Some(&mut p.entities),
            (ModelParams::TransF(p), Relation) => Some(&mut p.relations),
            (ModelParams::TransF(p), HeadBasis) => Some(&mut p.head_bases),
            (ModelParams::TransF(p), TailBasis) => Some(&mut p.tail_bases),
            (ModelParams::TransF(p), HeadCoef) => Some(&mut p.head_coefs),
            (ModelParams::TransF(p), TailCoef) => Some(&mut p.tail_coefs),
            _ => None,
        }
    }

    pub fn slice(&self, id: SliceId) -> Option<&[f64]> {
        let t = self.table(id.param)?;
        (id.row < t.rows()).then(|| t.row(id.row))
    }

    pub fn slice_mut(&mut self, id: SliceId) -> Option<&mut [f64]> {
        let t = self.table_mut(id.param)?;
        (id.row < t.rows()).then(|| t.row_mut(id.row))
    }

    /// Total scalar count across every array.
    pub fn num_parameters(&self) -> usize {
        self.tables().iter().map(|(_, t)| t.len()).sum()
    }
}

/// Parameters plus the energy configuration they were built for.
#[derive(Debug)]
pub struct Model {
    config: EnergyConfig,
    params: ModelParams,
    degenerate_projections: AtomicU64,
}

impl Clone for Model {
    fn clone(&self) -> Self {
        Model {
            config: self.config,
            params: self.params.clone(),
            degenerate_projections: AtomicU64::new(self.degenerate_projections()),
        }
    }
}

impl Model {
    /// Wraps existing parameters after checking their shapes against `config`.
    pub fn from_params(config: EnergyConfig, params: ModelParams) -> Result<Self, ModelError> {
        let kind = params.kind();
        config.validate(kind)?;
        let (ne, nr) = (params.entities().rows(), params.relations().rows());
        let expected = ModelParams::zeros(kind, &config, ne, nr);
        for ((name, want), (_, got)) in expected.tables().into_iter().zip(params.tables()) {
            if want.shape() != got.shape() {
                return Err(ModelError::DimensionMismatch(format!(
                    "{} has shape {:?}, expected {:?}",
                    name.as_str(),
                    got.shape(),
                    want.shape()
                )));
            }
        }
        Ok(Model {
            config,
            params,
            degenerate_projections: AtomicU64::new(0),
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.params.kind()
    }

    pub fn config(&self) -> &EnergyConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    pub fn num_entities(&self) -> usize {
        self.params.entities().rows()
    }

    pub fn num_relations(&self) -> usize {
        self.params.relations().rows()
    }

    /// How many times a normalized projection hit a zero vector and fell
    /// back to the unnormalized value.
    pub fn degenerate_projections(&self) -> u64 {
        self.degenerate_projections.load(Ordering::Relaxed)
    }

    pub(crate) fn note_degenerate(&self) {
        self.degenerate_projections.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn check_triple(&self, triple: &Triple) -> Result<(), ModelError> {
        let (ne, nr) = (self.num_entities(), self.num_relations());
        if triple.head < ne && triple.tail < ne && triple.relation < nr {
            Ok(())
        } else {
            Err(ModelError::OutOfRange {
                triple: *triple,
                num_entities: ne,
                num_relations: nr,
            })
        }
    }

    /// Adds `delta` to the slice, rounding results to storage precision.
    pub fn apply_delta(&mut self, id: SliceId, delta: &[f64]) -> Result<(), ModelError> {
        let slice = self
            .params
            .slice_mut(id)
            .ok_or_else(|| ModelError::DimensionMismatch(format!("model has no slice {id:?}")))?;
        if slice.len() != delta.len() {
            return Err(ModelError::DimensionMismatch(format!(
                "delta for {id:?} has length {}, slice has {}",
                delta.len(),
                slice.len()
            )));
        }
        for (p, d) in slice.iter_mut().zip(delta) {
            *p = to_storage(*p + d);
        }
        Ok(())
    }
}

/// Rounds to the nearest `f32`, the precision parameters are persisted at.
#[inline]
pub fn to_storage(x: f64) -> f64 {
    x as f32 as f64
}

/// Closed-form parameter count of each model.
pub fn param_count(
    kind: ModelKind,
    num_entities: u64,
    num_relations: u64,
    dim_e: u64,
    dim_r: u64,
    bases: u64,
) -> u64 {
    let (ne, nr, de, dr, s) = (num_entities, num_relations, dim_e, dim_r, bases);
    match kind {
        ModelKind::TransE => (ne + nr) * de,
        ModelKind::TransH => ne * de + 2 * nr * de,
        ModelKind::TransR => ne * de + nr * dr + nr * de * dr,
        ModelKind::TransF => ne * de + nr * (dr + 2 * s) + 2 * s * de * dr,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fb15k_sized_counts() {
        let (ne, nr) = (14951, 1345);
        assert_eq!(
            param_count(ModelKind::TransE, ne, nr, 100, 100, 0),
            1_629_600
        );
        assert_eq!(
            param_count(ModelKind::TransF, ne, nr, 100, 100, 5),
            1_743_050
        );
        assert_eq!(
            param_count(ModelKind::TransR, ne, nr, 100, 100, 0),
            15_079_600
        );
        assert_eq!(
            param_count(ModelKind::TransH, ne, nr, 100, 100, 0),
            1_764_100
        );
    }

    #[test]
    fn transf_count_is_linear_in_bases() {
        let (ne, nr, de, dr) = (14951u64, 1345u64, 100u64, 80u64);
        let slope = 2 * de * dr + 2 * nr;
        for s in 1..20u64 {
            let a = param_count(ModelKind::TransF, ne, nr, de, dr, s);
            let b = param_count(ModelKind::TransF, ne, nr, de, dr, s + 1);
            assert_eq!(b - a, slope);
        }
    }

    #[test]
    fn count_matches_allocated_tables() {
        for kind in ModelKind::ALL {
            let dr = if matches!(kind, ModelKind::TransE | ModelKind::TransH) {
                6
            } else {
                4
            };
            let cfg = EnergyConfig::new(Norm::L2, 6, dr, 3);
            let p = ModelParams::zeros(kind, &cfg, 11, 5);
            let s = if kind == ModelKind::TransF { 3 } else { 0 };
            assert_eq!(
                p.num_parameters() as u64,
                param_count(kind, 11, 5, 6, dr as u64, s),
                "{kind}"
            );
        }
    }

    #[test]
    fn config_validation() {
        assert!(EnergyConfig::new(Norm::L1, 4, 5, 1)
            .validate(ModelKind::TransE)
            .is_err());
        assert!(EnergyConfig::new(Norm::L1, 4, 5, 1)
            .validate(ModelKind::TransR)
            .is_ok());
        assert!(EnergyConfig::new(Norm::L1, 4, 4, 0)
            .validate(ModelKind::TransF)
            .is_err());
        assert!(EnergyConfig::new(Norm::L1, 0, 0, 1)
            .validate(ModelKind::TransE)
            .is_err());
    }

    #[test]
    fn from_params_rejects_bad_shapes() {
        let cfg = EnergyConfig::square(Norm::L2, 4, 2);
        let p = ModelParams::zeros(ModelKind::TransF, &cfg, 3, 2);
        let other = EnergyConfig::square(Norm::L2, 4, 3);
        assert!(Model::from_params(other, p.clone()).is_err());
        assert!(Model::from_params(cfg, p).is_ok());
    }

    #[test]
    fn kind_and_norm_parse() {
        assert_eq!("TransF".parse::<ModelKind>().unwrap(), ModelKind::TransF);
        assert_eq!("l1".parse::<Norm>().unwrap(), Norm::L1);
        assert!("l3".parse::<Norm>().is_err());
    }
}
