use rand::Rng;

use super::energy::l2;
use super::{
    to_storage, EnergyConfig, Model, ModelError, ModelKind, ModelParams, ParamName, SliceId, Table,
    TransFParams,
};

/// Slack allowed on a unit-norm row before it is renormalized.
const UNIT_TOLERANCE: f64 = 1e-6;

fn uniform_table<R: Rng + ?Sized>(table: &mut Table, bound: f64, rng: &mut R) {
    for v in table.data_mut() {
        *v = to_storage(rng.gen_range(-bound..bound));
    }
}

fn unit_rows(table: &mut Table) {
    for i in 0..table.rows() {
        let row = table.row_mut(i);
        let n = l2(row);
        if n > 0.0 {
            for v in row.iter_mut() {
                *v = to_storage(*v / n);
            }
        }
    }
}

/// Fresh parameters: entity and relation rows uniform in `±6/√d` then
/// scaled to unit length; TransH normals unit length; TransR matrices the
/// rectangular identity; TransF bases uniform in `±6/√(d_e·d_r)` with all
/// coefficients zero, so a new TransF model scores exactly like TransE.
pub fn init_model<R: Rng + ?Sized>(
    kind: ModelKind,
    config: &EnergyConfig,
    num_entities: usize,
    num_relations: usize,
    rng: &mut R,
) -> Result<Model, ModelError> {
    config.validate(kind)?;
    let (de, dr) = (config.dim_e, config.dim_r);
    let mut params = ModelParams::zeros(kind, config, num_entities, num_relations);
    let entity_bound = 6.0 / (de as f64).sqrt();
    let relation_bound = 6.0 / (dr as f64).sqrt();
    let basis_bound = 6.0 / ((de * dr) as f64).sqrt();
    match &mut params {
        ModelParams::TransE(p) => {
            init_embeddings(
                &mut p.entities,
                &mut p.relations,
                entity_bound,
                relation_bound,
                rng,
            );
        }
        ModelParams::TransH(p) => {
            init_embeddings(
                &mut p.entities,
                &mut p.relations,
                entity_bound,
                relation_bound,
                rng,
            );
            uniform_table(&mut p.normals, entity_bound, rng);
            unit_rows(&mut p.normals);
        }
        ModelParams::TransR(p) => {
            init_embeddings(
                &mut p.entities,
                &mut p.relations,
                entity_bound,
                relation_bound,
                rng,
            );
            for r in 0..num_relations {
                let m = p.projections.row_mut(r);
                for k in 0..dr.min(de) {
                    m[k * de + k] = 1.0;
                }
            }
        }
        ModelParams::TransF(p) => {
            init_embeddings(
                &mut p.entities,
                &mut p.relations,
                entity_bound,
                relation_bound,
                rng,
            );
            init_bases(p, basis_bound, rng);
        }
    }
    Model::from_params(*config, params)
}

fn init_embeddings<R: Rng + ?Sized>(
    entities: &mut Table,
    relations: &mut Table,
    entity_bound: f64,
    relation_bound: f64,
    rng: &mut R,
) {
    uniform_table(entities, entity_bound, rng);
    unit_rows(entities);
    uniform_table(relations, relation_bound, rng);
    unit_rows(relations);
}

fn init_bases<R: Rng + ?Sized>(p: &mut TransFParams, bound: f64, rng: &mut R) {
    uniform_table(&mut p.head_bases, bound, rng);
    uniform_table(&mut p.tail_bases, bound, rng);
    p.head_coefs.data_mut().fill(0.0);
    p.tail_coefs.data_mut().fill(0.0);
}

/// Starts TransF from a trained TransE model: embeddings are copied,
/// coefficients zeroed and bases drawn fresh.
pub fn init_transf_from_transe<R: Rng + ?Sized>(
    transe: &Model,
    config: &EnergyConfig,
    rng: &mut R,
) -> Result<Model, ModelError> {
    if transe.kind() != ModelKind::TransE {
        return Err(ModelError::InvalidConfig(format!(
            "expected a transe model to transfer from, got {}",
            transe.kind()
        )));
    }
    config.validate(ModelKind::TransF)?;
    let source_dim = transe.config().dim_e;
    if config.dim_e != source_dim || config.dim_r != source_dim {
        return Err(ModelError::DimensionMismatch(format!(
            "transfer needs dim_e == dim_r == {source_dim} (got dim_e={}, dim_r={})",
            config.dim_e, config.dim_r
        )));
    }
    let mut params = ModelParams::zeros(
        ModelKind::TransF,
        config,
        transe.num_entities(),
        transe.num_relations(),
    );
    if let ModelParams::TransF(p) = &mut params {
        p.entities = transe.params().entities().clone();
        p.relations = transe.params().relations().clone();
        init_bases(p, 6.0 / ((config.dim_e * config.dim_r) as f64).sqrt(), rng);
    }
    Model::from_params(*config, params)
}

/// Scales `row` into the closed unit ball. Leaves rows with norm ≤ 1 alone
/// and guarantees the stored (rounded) result has norm ≤ 1.
fn clamp_to_unit_ball(row: &mut [f64]) -> bool {
    let n = l2(row);
    // non-finite rows are left for the caller to detect
    if n <= 1.0 || !n.is_finite() {
        return false;
    }
    let original = row.to_vec();
    let mut scale = 1.0 / n;
    loop {
        for (v, o) in row.iter_mut().zip(&original) {
            *v = to_storage(o * scale);
        }
        if l2(row) <= 1.0 {
            return true;
        }
        scale *= 1.0 - 1e-7;
    }
}

fn renormalize(row: &mut [f64]) -> Result<(), ()> {
    let n = l2(row);
    if !n.is_finite() || n == 0.0 {
        return Err(());
    }
    if (n - 1.0).abs() > UNIT_TOLERANCE {
        for v in row.iter_mut() {
            *v = to_storage(*v / n);
        }
    }
    Ok(())
}

impl Model {
    /// Projects parameters back onto the feasible set: relation rows (and,
    /// when `bound_entities` is set, entity rows) into the unit ball, and
    /// TransH normals onto the unit sphere. Idempotent.
    pub fn enforce_constraints(&mut self) -> Result<(), ModelError> {
        let bound_entities = self.config.bound_entities;
        if bound_entities {
            let t = self
                .params
                .table_mut(ParamName::Entity)
                .expect("entity table");
            for i in 0..t.rows() {
                clamp_to_unit_ball(t.row_mut(i));
            }
        }
        let t = self
            .params
            .table_mut(ParamName::Relation)
            .expect("relation table");
        for i in 0..t.rows() {
            clamp_to_unit_ball(t.row_mut(i));
        }
        if let Some(t) = self.params.table_mut(ParamName::Normal) {
            for i in 0..t.rows() {
                renormalize(t.row_mut(i)).map_err(|_| ModelError::DegenerateNormal(i))?;
            }
        }
        Ok(())
    }

    /// [`Model::enforce_constraints`] restricted to the given slices; slices
    /// of unconstrained parameters are ignored.
    pub fn enforce_constraints_on(
        &mut self,
        slices: impl IntoIterator<Item = SliceId>,
    ) -> Result<(), ModelError> {
        let bound_entities = self.config.bound_entities;
        for id in slices {
            match id.param {
                ParamName::Entity if bound_entities => {
                    if let Some(row) = self.params.slice_mut(id) {
                        clamp_to_unit_ball(row);
                    }
                }
                ParamName::Relation => {
                    if let Some(row) = self.params.slice_mut(id) {
                        clamp_to_unit_ball(row);
                    }
                }
                ParamName::Normal => {
                    if let Some(row) = self.params.slice_mut(id) {
                        renormalize(row).map_err(|_| ModelError::DegenerateNormal(id.row))?;
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Checks the constraint invariants; returns a description of the first
    /// violation found.
    pub fn constraint_violation(&self) -> Option<String> {
        let slack = 1e-9;
        if self.config.bound_entities {
            let e = self.params.entities();
            if let Some(i) = (0..e.rows()).find(|&i| l2(e.row(i)) > 1.0 + slack) {
                return Some(format!("entity row {i} has norm {}", l2(e.row(i))));
            }
        }
        let r = self.params.relations();
        if let Some(i) = (0..r.rows()).find(|&i| l2(r.row(i)) > 1.0 + slack) {
            return Some(format!("relation row {i} has norm {}", l2(r.row(i))));
        }
        if let Some(w) = self.params.table(ParamName::Normal) {
            if let Some(i) = (0..w.rows()).find(|&i| (l2(w.row(i)) - 1.0).abs() > UNIT_TOLERANCE) {
                return Some(format!("normal row {i} has norm {}", l2(w.row(i))));
            }
        }
        None
    }
}
