//! Binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "KGEC" | version: u32 | meta_len: u32 | meta: JSON | n_arrays: u32
//! per array: name_len: u32 | name | ndim: u32 | dims: u64 × ndim | data: f32 × Π dims
//! crc32 of every preceding byte: u32
//! ```

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{EnergyConfig, Model, ModelKind, ModelParams, Norm, ParamName};
use crate::training::TrainConfig;

pub const MAGIC: &[u8; 4] = b"KGEC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (this build reads version {FORMAT_VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("array {name:?} has shape {got:?}, metadata implies {expected:?}")]
    ShapeMismatch {
        name: String,
        got: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("unexpected array {0:?} in checkpoint")]
    UnknownArray(String),
    #[error("array {0:?} missing from checkpoint")]
    MissingArray(String),
    #[error("invalid checkpoint metadata: {0}")]
    Metadata(String),
    #[error("checkpoint was built for a different vocabulary (hash {found}, dataset {expected})")]
    VocabularyMismatch { found: String, expected: String },
    #[error("cannot access checkpoint {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelKind,
    pub num_entities: usize,
    pub num_relations: usize,
    pub dim_e: usize,
    pub dim_r: usize,
    pub bases: usize,
    pub norm: Norm,
    pub normalize_projections: bool,
    pub bound_entities: bool,
    /// [`crate::dataset::Vocabulary::fingerprint`] of the training data.
    pub vocabulary_hash: String,
    pub train_config: Option<TrainConfig>,
    /// Epochs trained, counting pretraining.
    pub epoch: usize,
}

impl CheckpointMeta {
    pub fn for_model(
        model: &Model,
        vocabulary_hash: String,
        train_config: Option<TrainConfig>,
        epoch: usize,
    ) -> Self {
        let c = model.config();
        CheckpointMeta {
            model: model.kind(),
            num_entities: model.num_entities(),
            num_relations: model.num_relations(),
            dim_e: c.dim_e,
            dim_r: c.dim_r,
            bases: c.bases,
            norm: c.norm,
            normalize_projections: c.normalize_projections,
            bound_entities: c.bound_entities,
            vocabulary_hash,
            train_config,
            epoch,
        }
    }

    pub fn energy_config(&self) -> EnergyConfig {
        EnergyConfig {
            norm: self.norm,
            dim_e: self.dim_e,
            dim_r: self.dim_r,
            bases: self.bases,
            normalize_projections: self.normalize_projections,
            bound_entities: self.bound_entities,
        }
    }

    /// Errors unless `hash` matches the stored vocabulary hash.
    pub fn check_vocabulary(&self, hash: &str) -> Result<(), CheckpointError> {
        if self.vocabulary_hash == hash {
            Ok(())
        } else {
            Err(CheckpointError::VocabularyMismatch {
                found: self.vocabulary_hash.clone(),
                expected: hash.to_owned(),
            })
        }
    }
}

/// Serializes `model` into checkpoint bytes. Values are written as `f32`;
/// parameters produced by this crate already sit on the `f32` grid, so the
/// conversion is exact for them.
pub fn encode_checkpoint(model: &Model, meta: &CheckpointMeta) -> Vec<u8> {
    let meta_json = serde_json::to_vec(meta).expect("metadata serializes");
    let tables = model.params().tables();
    let mut out = Vec::with_capacity(16 + meta_json.len() + 4 * model.params().num_parameters());
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, meta_json.len() as u32);
    out.extend_from_slice(&meta_json);
    put_u32(&mut out, tables.len() as u32);
    for (name, table) in tables {
        let name = name.as_str().as_bytes();
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name);
        put_u32(&mut out, table.shape().len() as u32);
        for &d in table.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in table.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);
    out
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let out = self
            .bytes
            .get(self.pos..end)
            .ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

struct RawArray {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Parses everything between the version field and the checksum.
fn parse_body(body: &[u8]) -> Result<(CheckpointMeta, Vec<RawArray>), CheckpointError> {
    let mut r = Reader {
        bytes: body,
        pos: 8,
    };
    let meta_len = r.u32()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)
        .map_err(|e| CheckpointError::Metadata(e.to_string()))?;
    let n_arrays = r.u32()?;
    let mut arrays = Vec::new();
    for _ in 0..n_arrays {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| CheckpointError::Metadata("array name is not UTF-8".into()))?;
        let ndim = r.u32()? as usize;
        if ndim * 8 > r.remaining() {
            return Err(CheckpointError::Truncated);
        }
        let mut shape = Vec::with_capacity(ndim);
        let mut len: usize = 1;
        for _ in 0..ndim {
            let d = usize::try_from(r.u64()?).map_err(|_| CheckpointError::Truncated)?;
            len = len.checked_mul(d).ok_or(CheckpointError::Truncated)?;
            shape.push(d);
        }
        let bytes = r.take(len.checked_mul(4).ok_or(CheckpointError::Truncated)?)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        arrays.push(RawArray { name, shape, data });
    }
    if r.remaining() != 0 {
        return Err(CheckpointError::Metadata(format!(
            "{} unexpected bytes after the last array",
            r.remaining()
        )));
    }
    Ok((meta, arrays))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Model, CheckpointMeta), CheckpointError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < 8 {
        return Err(CheckpointError::Truncated);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion { found: version });
    }
    if bytes.len() < 12 {
        return Err(CheckpointError::Truncated);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        // a file cut short usually fails to parse before the checksum matters
        return Err(match parse_body(body) {
            Err(CheckpointError::Truncated) => CheckpointError::Truncated,
            _ => CheckpointError::ChecksumMismatch { stored, computed },
        });
    }
    let (meta, arrays) = parse_body(body)?;
    let config = meta.energy_config();
    let mut params = ModelParams::zeros(meta.model, &config, meta.num_entities, meta.num_relations);
    let expected: Vec<(ParamName, Vec<usize>)> = params
        .tables()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    for array in &arrays {
        let name = ParamName::parse(&array.name)
            .filter(|n| expected.iter().any(|(e, _)| e == n))
            .ok_or_else(|| CheckpointError::UnknownArray(array.name.clone()))?;
        let table = params.table_mut(name).expect("expected tables exist");
        if table.shape() != array.shape.as_slice() {
            return Err(CheckpointError::ShapeMismatch {
                name: array.name.clone(),
                got: array.shape.clone(),
                expected: table.shape().to_vec(),
            });
        }
        table.data_mut().copy_from_slice(&array.data);
    }
    for (name, _) in &expected {
        if !arrays.iter().any(|a| a.name == name.as_str()) {
            return Err(CheckpointError::MissingArray(name.as_str().to_owned()));
        }
    }
    let model =
        Model::from_params(config, params).map_err(|e| CheckpointError::Metadata(e.to_string()))?;
    Ok((model, meta))
}

/// Writes the checkpoint atomically: a temporary file in the target
/// directory is renamed over `path`.
pub fn save_checkpoint(
    model: &Model,
    meta: &CheckpointMeta,
    path: &Path,
) -> Result<(), CheckpointError> {
    write_atomic(path, &encode_checkpoint(model, meta)).map_err(|source| CheckpointError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointMeta), CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_owned(),
        source,
    })?;
    decode_checkpoint(&bytes)
}

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
