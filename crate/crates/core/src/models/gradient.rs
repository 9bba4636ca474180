use std::borrow::Cow;
use std::collections::BTreeMap;

use super::energy::{distance_grad, dot, hyperplane_normal_grad, outer_acc, Forward, Projector};
use super::{Model, ModelError, ModelParams, ParamName, SliceId};
use crate::dataset::{Side, Triple};

/// Gradient blocks keyed by the parameter slice they belong to.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseGradient {
    blocks: BTreeMap<SliceId, Vec<f64>>,
}

impl SparseGradient {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `block` into the slice's entry, creating it if needed.
    pub fn add(&mut self, id: SliceId, block: &[f64]) {
        match self.blocks.get_mut(&id) {
            Some(acc) => {
                debug_assert_eq!(acc.len(), block.len());
                for (a, b) in acc.iter_mut().zip(block) {
                    *a += b;
                }
            }
            None => {
                self.blocks.insert(id, block.to_vec());
            }
        }
    }

    pub fn get(&self, id: SliceId) -> Option<&[f64]> {
        self.blocks.get(&id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (SliceId, &[f64])> {
        self.blocks.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    pub fn slices(&self) -> impl Iterator<Item = SliceId> + '_ {
        self.blocks.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn merge(&mut self, other: SparseGradient) {
        for (id, block) in other.blocks {
            self.add(id, &block);
        }
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        for block in self.blocks.values_mut() {
            for v in block.iter_mut() {
                *v *= factor;
            }
        }
        self
    }
}

impl IntoIterator for SparseGradient {
    type Item = (SliceId, Vec<f64>);
    type IntoIter = std::collections::btree_map::IntoIter<SliceId, Vec<f64>>;

    fn into_iter(self) -> Self::IntoIter {
        self.blocks.into_iter()
    }
}

/// TransF projection matrices materialized once per batch, so each triple
/// pays one `d_r × d_e` mat-vec per side like TransR does.
#[derive(Debug)]
pub struct ProjectionCache<'a> {
    model: &'a Model,
    matrices: BTreeMap<(usize, Side), Vec<f64>>,
}

impl<'a> ProjectionCache<'a> {
    pub fn new(model: &'a Model, relations: impl IntoIterator<Item = usize>) -> Self {
        let mut matrices = BTreeMap::new();
        if model.kind() == super::ModelKind::TransF {
            for r in relations {
                for side in [Side::Head, Side::Tail] {
                    matrices.entry((r, side)).or_insert_with(|| {
                        model
                            .projection_matrix(r, side)
                            .expect("transf has projection matrices")
                    });
                }
            }
        }
        ProjectionCache { model, matrices }
    }

    pub fn get(&self, relation: usize, side: Side) -> Projector<'_> {
        match self.matrices.get(&(relation, side)) {
            Some(m) => Projector::Matrix {
                data: Cow::Borrowed(m),
                rows: self.model.config.dim_r,
                cols: self.model.config.dim_e,
            },
            None => self.model.projector(relation, side),
        }
    }
}

/// `(entity, g)` standing for the rank-one block `g xᵀ`.
type OuterFactor = (usize, Vec<f64>);

/// Gradient accumulated over a batch of triples.
///
/// Projection-matrix gradients are rank-one per triple, so they are kept as
/// `(entity, g)` factors and only summed into dense `d_r × d_e` blocks in
/// [`BatchGradient::finish`]. For TransF the dense gradients w.r.t. `M_{r,h}`,
/// `M_{r,t}` are then chained onto bases and coefficients. The result equals
/// the sum of the per-triple [`Model::grad_energy`] blocks.
#[derive(Debug, Clone, Default)]
pub struct BatchGradient {
    blocks: SparseGradient,
    outer: BTreeMap<(usize, Side), Vec<OuterFactor>>,
}

impl BatchGradient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty() && self.outer.is_empty()
    }

    pub fn merge(&mut self, other: BatchGradient) {
        self.blocks.merge(other.blocks);
        for (key, factors) in other.outer {
            self.outer.entry(key).or_default().extend(factors);
        }
    }

    fn push_outer(&mut self, relation: usize, side: Side, entity: usize, g: Vec<f64>) {
        self.outer
            .entry((relation, side))
            .or_default()
            .push((entity, g));
    }

    pub fn finish(self, model: &Model) -> SparseGradient {
        let mut grads = self.blocks;
        let entities = model.params().entities();
        let block_len = model.config().dim_r * model.config().dim_e;
        let dense = self.outer.into_iter().map(|(key, factors)| {
            let mut m = vec![0.0; block_len];
            for (e, g) in factors {
                outer_acc(&mut m, &g, entities.row(e), 1.0);
            }
            (key, m)
        });
        match model.params() {
            ModelParams::TransR(_) => {
                for ((r, _), g) in dense {
                    grads.add(SliceId::new(ParamName::Projection, r), &g);
                }
            }
            ModelParams::TransF(p) => {
                let s = model.config().bases;
                let mut basis_grads: BTreeMap<SliceId, Vec<f64>> = BTreeMap::new();
                for ((r, side), g) in dense {
                    let (bases, coefs, basis_name, coef_name) = match side {
                        Side::Head => (
                            &p.head_bases,
                            p.head_coefs.row(r),
                            ParamName::HeadBasis,
                            ParamName::HeadCoef,
                        ),
                        Side::Tail => (
                            &p.tail_bases,
                            p.tail_coefs.row(r),
                            ParamName::TailBasis,
                            ParamName::TailCoef,
                        ),
                    };
                    let mut grad_c = vec![0.0; s];
                    for i in 0..s {
                        grad_c[i] = dot(bases.row(i), &g);
                        let acc = basis_grads
                            .entry(SliceId::new(basis_name, i))
                            .or_insert_with(|| vec![0.0; g.len()]);
                        for (a, gv) in acc.iter_mut().zip(&g) {
                            *a += coefs[i] * gv;
                        }
                    }
                    grads.add(SliceId::new(coef_name, r), &grad_c);
                }
                for (id, block) in basis_grads {
                    grads.add(id, &block);
                }
            }
            _ => debug_assert!(matches!(dense.count(), 0)),
        }
        grads
    }
}

impl Model {
    pub(crate) fn forward_cached(
        &self,
        triple: &Triple,
        cache: &ProjectionCache<'_>,
    ) -> Result<Forward, ModelError> {
        self.check_triple(triple)?;
        let hp = cache.get(triple.relation, Side::Head);
        let tp = cache.get(triple.relation, Side::Tail);
        self.forward_with(triple, &hp, &tp)
    }

    /// Energy of `triple` computed through the batch projection cache.
    pub fn energy_cached(
        &self,
        triple: &Triple,
        cache: &ProjectionCache<'_>,
    ) -> Result<f64, ModelError> {
        Ok(self.forward_cached(triple, cache)?.energy)
    }

    /// Adds `scale · ∇energy(triple)` to `acc` and returns the energy.
    pub fn accumulate_gradient(
        &self,
        triple: &Triple,
        scale: f64,
        cache: &ProjectionCache<'_>,
        acc: &mut BatchGradient,
    ) -> Result<f64, ModelError> {
        let fwd = self.forward_cached(triple, cache)?;
        self.accumulate_backward(triple, &fwd, scale, cache, acc);
        Ok(fwd.energy)
    }

    pub(crate) fn accumulate_backward(
        &self,
        triple: &Triple,
        fwd: &Forward,
        scale: f64,
        cache: &ProjectionCache<'_>,
        acc: &mut BatchGradient,
    ) {
        let r = triple.relation;
        let g: Vec<f64> = distance_grad(self.config.norm, &fwd.diff, fwd.energy)
            .into_iter()
            .map(|v| v * scale)
            .collect();
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let g_head = fwd.head.backward(&g);
        let g_tail = fwd.tail.backward(&neg_g);
        acc.blocks.add(SliceId::new(ParamName::Relation, r), &g);

        let entities = self.params.entities();
        let (h, t) = (entities.row(triple.head), entities.row(triple.tail));
        let de = self.config.dim_e;
        let hp = cache.get(r, Side::Head);
        let tp = cache.get(r, Side::Tail);
        let mut grad_h = vec![0.0; de];
        let mut grad_t = vec![0.0; de];
        hp.transpose_apply_acc(&g_head, &mut grad_h);
        tp.transpose_apply_acc(&g_tail, &mut grad_t);
        acc.blocks
            .add(SliceId::new(ParamName::Entity, triple.head), &grad_h);
        acc.blocks
            .add(SliceId::new(ParamName::Entity, triple.tail), &grad_t);

        match &self.params {
            ModelParams::TransE(_) => {}
            ModelParams::TransH(p) => {
                let w = p.normals.row(r);
                let mut grad_w = vec![0.0; de];
                hyperplane_normal_grad(w, h, &g_head, &mut grad_w);
                hyperplane_normal_grad(w, t, &g_tail, &mut grad_w);
                acc.blocks.add(SliceId::new(ParamName::Normal, r), &grad_w);
            }
            ModelParams::TransR(_) => {
                acc.push_outer(r, Side::Head, triple.head, g_head);
                acc.push_outer(r, Side::Head, triple.tail, g_tail);
            }
            ModelParams::TransF(_) => {
                acc.push_outer(r, Side::Head, triple.head, g_head);
                acc.push_outer(r, Side::Tail, triple.tail, g_tail);
            }
        }
    }
}
