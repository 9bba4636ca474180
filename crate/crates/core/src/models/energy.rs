use std::borrow::Cow;

use super::{Model, ModelError, ModelParams, Norm, ParamName, SliceId, SparseGradient, Table};
use crate::dataset::{Side, Triple};

/// Projections shorter than this are not normalized.
const MIN_PROJECTION_NORM: f64 = 1e-12;

/// A linear map from entity space into the relation space of one relation.
#[derive(Debug, Clone)]
pub enum Projector<'a> {
    /// Rectangular identity `d_r × d_e`.
    Identity { dim_r: usize },
    /// `x − (w·x) w`
    Hyperplane(&'a [f64]),
    /// Explicit `d_r × d_e` row-major matrix.
    Matrix {
        data: Cow<'a, [f64]>,
        rows: usize,
        cols: usize,
    },
    /// `(Σᵢ cᵢ Bᵢ + I) x` evaluated basis by basis, without forming the sum.
    Factored { bases: &'a Table, coefs: &'a [f64] },
}

impl Projector<'_> {
    pub fn output_dim(&self, input_dim: usize) -> usize {
        match self {
            Projector::Identity { dim_r } => *dim_r,
            Projector::Hyperplane(_) => input_dim,
            Projector::Matrix { rows, .. } => *rows,
            Projector::Factored { bases, .. } => bases.shape()[1],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Projector::Identity { dim_r } => identity_apply(*dim_r, x),
            Projector::Hyperplane(w) => {
                let wx = dot(w, x);
                x.iter()
                    .zip(w.iter())
                    .map(|(xi, wi)| xi - wx * wi)
                    .collect()
            }
            Projector::Matrix { data, rows, cols } => {
                let mut out = vec![0.0; *rows];
                matvec(data, *rows, *cols, x, &mut out);
                out
            }
            Projector::Factored { bases, coefs } => {
                let (rows, cols) = (bases.shape()[1], bases.shape()[2]);
                let mut out = identity_apply(rows, x);
                let mut tmp = vec![0.0; rows];
                for (i, &c) in coefs.iter().enumerate() {
                    matvec(bases.row(i), rows, cols, x, &mut tmp);
                    for (o, v) in out.iter_mut().zip(&tmp) {
                        *o += c * v;
                    }
                }
                out
            }
        }
    }

    /// `grad_x += Pᵀ g`
    pub fn transpose_apply_acc(&self, g: &[f64], grad_x: &mut [f64]) {
        match self {
            Projector::Identity { .. } => {
                for (gx, gi) in grad_x.iter_mut().zip(g) {
                    *gx += gi;
                }
            }
            Projector::Hyperplane(w) => {
                let wg = dot(w, g);
                for ((gx, gi), wi) in grad_x.iter_mut().zip(g).zip(w.iter()) {
                    *gx += gi - wg * wi;
                }
            }
            Projector::Matrix { data, rows, cols } => {
                matvec_t_acc(data, *rows, *cols, g, 1.0, grad_x);
            }
            Projector::Factored { bases, coefs } => {
                let (rows, cols) = (bases.shape()[1], bases.shape()[2]);
                for (gx, gi) in grad_x.iter_mut().zip(g) {
                    *gx += gi;
                }
                for (i, &c) in coefs.iter().enumerate() {
                    matvec_t_acc(bases.row(i), rows, cols, g, c, grad_x);
                }
            }
        }
    }
}

fn identity_apply(dim_r: usize, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; dim_r];
    let n = dim_r.min(x.len());
    out[..n].copy_from_slice(&x[..n]);
    out
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `out = M x` for row-major `M` of shape `rows × cols`.
pub(crate) fn matvec(m: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate().take(rows) {
        *o = dot(&m[i * cols..(i + 1) * cols], x);
    }
}

/// `out += scale · Mᵀ g`
pub(crate) fn matvec_t_acc(
    m: &[f64],
    rows: usize,
    cols: usize,
    g: &[f64],
    scale: f64,
    out: &mut [f64],
) {
    for (i, &gi) in g.iter().enumerate().take(rows) {
        let c = scale * gi;
        if c == 0.0 {
            continue;
        }
        for (o, mij) in out.iter_mut().zip(&m[i * cols..(i + 1) * cols]) {
            *o += c * mij;
        }
    }
}

/// `out += scale · g xᵀ` into a row-major `g.len() × x.len()` block.
pub(crate) fn outer_acc(out: &mut [f64], g: &[f64], x: &[f64], scale: f64) {
    let cols = x.len();
    for (i, &gi) in g.iter().enumerate() {
        let c = scale * gi;
        if c == 0.0 {
            continue;
        }
        for (o, xj) in out[i * cols..(i + 1) * cols].iter_mut().zip(x) {
            *o += c * xj;
        }
    }
}

/// A projected entity, possibly rescaled to unit length.
pub(crate) struct Projected {
    pub value: Vec<f64>,
    /// Norm the raw projection was divided by, when normalization applied.
    pub scale: Option<f64>,
}

impl Projected {
    /// Maps a gradient w.r.t. the (normalized) value back onto the raw projection.
    pub fn backward(&self, g: &[f64]) -> Vec<f64> {
        match self.scale {
            None => g.to_vec(),
            Some(n) => {
                let along = dot(&self.value, g);
                g.iter()
                    .zip(&self.value)
                    .map(|(gi, vi)| (gi - vi * along) / n)
                    .collect()
            }
        }
    }
}

pub(crate) fn distance(norm: Norm, diff: &[f64]) -> f64 {
    match norm {
        Norm::L1 => diff.iter().map(|d| d.abs()).sum(),
        Norm::L2 => l2(diff),
    }
}

/// Subgradient of the distance w.r.t. `diff`, zero at kinks.
pub(crate) fn distance_grad(norm: Norm, diff: &[f64], energy: f64) -> Vec<f64> {
    match norm {
        Norm::L1 => diff
            .iter()
            .map(|&d| {
                if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            })
            .collect(),
        Norm::L2 if energy > 0.0 => diff.iter().map(|d| d / energy).collect(),
        Norm::L2 => vec![0.0; diff.len()],
    }
}

pub(crate) struct Forward {
    pub head: Projected,
    pub tail: Projected,
    pub diff: Vec<f64>,
    pub energy: f64,
}

impl Model {
    /// Per-triple projector that evaluates TransF bases one at a time.
    pub(crate) fn factored_projector(&self, relation: usize, side: Side) -> Projector<'_> {
        match &self.params {
            ModelParams::TransF(p) => {
                let (bases, coefs) = match side {
                    Side::Head => (&p.head_bases, p.head_coefs.row(relation)),
                    Side::Tail => (&p.tail_bases, p.tail_coefs.row(relation)),
                };
                Projector::Factored { bases, coefs }
            }
            _ => self.projector(relation, side),
        }
    }

    /// Projector with any TransF matrix materialized; the efficient choice
    /// when one relation is applied to many entities.
    pub fn projector(&self, relation: usize, side: Side) -> Projector<'_> {
        let (de, dr) = (self.config.dim_e, self.config.dim_r);
        match &self.params {
            ModelParams::TransE(_) => Projector::Identity { dim_r: dr },
            ModelParams::TransH(p) => Projector::Hyperplane(p.normals.row(relation)),
            ModelParams::TransR(p) => Projector::Matrix {
                data: Cow::Borrowed(p.projections.row(relation)),
                rows: dr,
                cols: de,
            },
            ModelParams::TransF(_) => Projector::Matrix {
                data: Cow::Owned(
                    self.projection_matrix(relation, side)
                        .expect("transf always has projection matrices"),
                ),
                rows: dr,
                cols: de,
            },
        }
    }

    /// Explicit projection matrix (`d_r × d_e`, row-major) for TransR and
    /// TransF; `None` for models without one.
    ///
    /// For TransF this reconstructs `Σᵢ cᵢ Bᵢ + I` from the coefficient row
    /// and basis tensor of the requested side.
    pub fn projection_matrix(&self, relation: usize, side: Side) -> Option<Vec<f64>> {
        let (de, dr) = (self.config.dim_e, self.config.dim_r);
        match &self.params {
            ModelParams::TransR(p) => Some(p.projections.row(relation).to_vec()),
            ModelParams::TransF(p) => {
                let (bases, coefs) = match side {
                    Side::Head => (&p.head_bases, p.head_coefs.row(relation)),
                    Side::Tail => (&p.tail_bases, p.tail_coefs.row(relation)),
                };
                let mut m = vec![0.0; dr * de];
                for (i, &c) in coefs.iter().enumerate() {
                    for (mij, bij) in m.iter_mut().zip(bases.row(i)) {
                        *mij += c * bij;
                    }
                }
                for k in 0..dr.min(de) {
                    m[k * de + k] += 1.0;
                }
                Some(m)
            }
            _ => None,
        }
    }

    pub(crate) fn project(&self, projector: &Projector<'_>, x: &[f64]) -> Projected {
        let raw = projector.apply(x);
        if !self.config.normalize_projections {
            return Projected {
                value: raw,
                scale: None,
            };
        }
        let n = l2(&raw);
        if n > MIN_PROJECTION_NORM {
            Projected {
                value: raw.iter().map(|v| v / n).collect(),
                scale: Some(n),
            }
        } else {
            self.note_degenerate();
            Projected {
                value: raw,
                scale: None,
            }
        }
    }

    pub(crate) fn forward_with(
        &self,
        triple: &Triple,
        head_proj: &Projector<'_>,
        tail_proj: &Projector<'_>,
    ) -> Result<Forward, ModelError> {
        let entities = self.params.entities();
        let r = self.params.relations().row(triple.relation);
        let head = self.project(head_proj, entities.row(triple.head));
        let tail = self.project(tail_proj, entities.row(triple.tail));
        let diff: Vec<f64> = head
            .value
            .iter()
            .zip(r)
            .zip(&tail.value)
            .map(|((h, r), t)| h + r - t)
            .collect();
        let energy = distance(self.config.norm, &diff);
        if !energy.is_finite() {
            return Err(ModelError::NonFinite(*triple));
        }
        Ok(Forward {
            head,
            tail,
            diff,
            energy,
        })
    }

    /// `‖h⊥ + r − t⊥‖` under the configured norm.
    pub fn energy(&self, triple: &Triple) -> Result<f64, ModelError> {
        self.check_triple(triple)?;
        let hp = self.factored_projector(triple.relation, Side::Head);
        let tp = self.factored_projector(triple.relation, Side::Tail);
        Ok(self.forward_with(triple, &hp, &tp)?.energy)
    }

    /// Analytic gradient of [`Model::energy`] w.r.t. every parameter slice
    /// the triple reads.
    pub fn grad_energy(&self, triple: &Triple) -> Result<SparseGradient, ModelError> {
        self.check_triple(triple)?;
        let r = triple.relation;
        let hp = self.factored_projector(r, Side::Head);
        let tp = self.factored_projector(r, Side::Tail);
        let fwd = self.forward_with(triple, &hp, &tp)?;

        let g = distance_grad(self.config.norm, &fwd.diff, fwd.energy);
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let g_head = fwd.head.backward(&g);
        let g_tail = fwd.tail.backward(&neg_g);

        let mut grads = SparseGradient::new();
        grads.add(SliceId::new(ParamName::Relation, r), &g);

        let entities = self.params.entities();
        let (h, t) = (entities.row(triple.head), entities.row(triple.tail));
        let de = self.config.dim_e;
        let mut grad_h = vec![0.0; de];
        let mut grad_t = vec![0.0; de];
        hp.transpose_apply_acc(&g_head, &mut grad_h);
        tp.transpose_apply_acc(&g_tail, &mut grad_t);
        grads.add(SliceId::new(ParamName::Entity, triple.head), &grad_h);
        grads.add(SliceId::new(ParamName::Entity, triple.tail), &grad_t);

        match &self.params {
            ModelParams::TransE(_) => {}
            ModelParams::TransH(p) => {
                let w = p.normals.row(r);
                let mut grad_w = vec![0.0; de];
                hyperplane_normal_grad(w, h, &g_head, &mut grad_w);
                hyperplane_normal_grad(w, t, &g_tail, &mut grad_w);
                grads.add(SliceId::new(ParamName::Normal, r), &grad_w);
            }
            ModelParams::TransR(_) => {
                let mut grad_m = vec![0.0; self.config.dim_r * de];
                outer_acc(&mut grad_m, &g_head, h, 1.0);
                outer_acc(&mut grad_m, &g_tail, t, 1.0);
                grads.add(SliceId::new(ParamName::Projection, r), &grad_m);
            }
            ModelParams::TransF(p) => {
                let sides = [
                    (
                        &p.head_bases,
                        p.head_coefs.row(r),
                        h,
                        &g_head,
                        ParamName::HeadBasis,
                        ParamName::HeadCoef,
                    ),
                    (
                        &p.tail_bases,
                        p.tail_coefs.row(r),
                        t,
                        &g_tail,
                        ParamName::TailBasis,
                        ParamName::TailCoef,
                    ),
                ];
                let dr = self.config.dim_r;
                for (bases, coefs, x, gx, basis_name, coef_name) in sides {
                    let mut grad_c = vec![0.0; coefs.len()];
                    let mut ux = vec![0.0; dr];
                    for (i, &c) in coefs.iter().enumerate() {
                        matvec(bases.row(i), dr, de, x, &mut ux);
                        grad_c[i] = dot(gx, &ux);
                        let mut grad_b = vec![0.0; dr * de];
                        outer_acc(&mut grad_b, gx, x, c);
                        grads.add(SliceId::new(basis_name, i), &grad_b);
                    }
                    grads.add(SliceId::new(coef_name, r), &grad_c);
                }
            }
        }
        Ok(grads)
    }

    /// Energies of `triple` with the entity on `side` replaced by every
    /// entity in turn. Entry `e` equals `energy` of the substituted triple up
    /// to rounding in the TransF matrix reconstruction.
    pub fn candidate_energies(&self, triple: &Triple, side: Side) -> Result<Vec<f64>, ModelError> {
        self.check_triple(triple)?;
        let rel = triple.relation;
        let entities = self.params.entities();
        let r = self.params.relations().row(rel);
        let norm = self.config.norm;
        let head_proj = self.projector(rel, Side::Head);
        let tail_proj = self.projector(rel, Side::Tail);

        let mut out = Vec::with_capacity(self.num_entities());
        let mut diff = vec![0.0; r.len()];
        match side {
            Side::Tail => {
                let hp = self.project(&head_proj, entities.row(triple.head)).value;
                for e in 0..entities.rows() {
                    let tp = self.project(&tail_proj, entities.row(e)).value;
                    for (k, d) in diff.iter_mut().enumerate() {
                        *d = hp[k] + r[k] - tp[k];
                    }
                    out.push(distance(norm, &diff));
                }
            }
            Side::Head => {
                let tp = self.project(&tail_proj, entities.row(triple.tail)).value;
                for e in 0..entities.rows() {
                    let hp = self.project(&head_proj, entities.row(e)).value;
                    for (k, d) in diff.iter_mut().enumerate() {
                        *d = hp[k] + r[k] - tp[k];
                    }
                    out.push(distance(norm, &diff));
                }
            }
        }
        if let Some(e) = out.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite(side.replace(triple, e)));
        }
        Ok(out)
    }
}

/// Gradient of `x − (w·x) w` w.r.t. `w`, contracted with `g`.
pub(crate) fn hyperplane_normal_grad(w: &[f64], x: &[f64], g: &[f64], out: &mut [f64]) {
    let wx = dot(w, x);
    let wg = dot(w, g);
    for ((o, gi), xi) in out.iter_mut().zip(g).zip(x) {
        *o -= wx * gi + wg * xi;
    }
}
