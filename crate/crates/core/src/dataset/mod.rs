//! Triple datasets: vocabularies, id-encoded splits and the TSV loader.
//!
//! Files hold one fact per line as `head<TAB>relation<TAB>tail`. The
//! vocabulary is built over all three splits in first-appearance order
//! (train, then valid, then test) so that every evaluation triple is
//! encodable.

mod index;
mod stats;
pub mod synthetic;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use index::KnownTripleIndex;
pub use stats::{RelationCategory, RelationStat, RelationStats, DEFAULT_CATEGORY_THRESHOLD};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("train split is empty")]
    EmptyTrain,
    #[error("triple {0:?} references an id outside the vocabulary")]
    IdOutOfRange(Triple),
    #[error("duplicate {kind} name {name:?}")]
    DuplicateName { kind: &'static str, name: String },
    #[error("failed to read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A fact `(head, relation, tail)` in id space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl Triple {
    pub const fn new(head: usize, relation: usize, tail: usize) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }
}

/// Which entity slot of a triple is being predicted or corrupted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Head,
    Tail,
}

impl Side {
    pub fn entity(self, triple: &Triple) -> usize {
        match self {
            Side::Head => triple.head,
            Side::Tail => triple.tail,
        }
    }

    /// Copy of `triple` with the entity on this side replaced.
    pub fn replace(self, triple: &Triple, entity: usize) -> Triple {
        match self {
            Side::Head => Triple::new(entity, triple.relation, triple.tail),
            Side::Tail => Triple::new(triple.head, triple.relation, entity),
        }
    }
}

/// Dense name <-> id maps for entities and relations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    entity_names: Vec<String>,
    relation_names: Vec<String>,
    entity_ids: HashMap<String, usize>,
    relation_ids: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vocabulary from explicit name lists; names must be unique.
    pub fn from_names(
        entities: impl IntoIterator<Item = String>,
        relations: impl IntoIterator<Item = String>,
    ) -> Result<Self, DatasetError> {
        let mut vocab = Vocabulary::new();
        for name in entities {
            if vocab.entity_ids.contains_key(&name) {
                return Err(DatasetError::DuplicateName {
                    kind: "entity",
                    name,
                });
            }
            vocab.intern_entity(&name);
        }
        for name in relations {
            if vocab.relation_ids.contains_key(&name) {
                return Err(DatasetError::DuplicateName {
                    kind: "relation",
                    name,
                });
            }
            vocab.intern_relation(&name);
        }
        Ok(vocab)
    }

    pub fn intern_entity(&mut self, name: &str) -> usize {
        intern(&mut self.entity_names, &mut self.entity_ids, name)
    }

    pub fn intern_relation(&mut self, name: &str) -> usize {
        intern(&mut self.relation_names, &mut self.relation_ids, name)
    }

    pub fn num_entities(&self) -> usize {
        self.entity_names.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_names.len()
    }

    pub fn entity_id(&self, name: &str) -> Option<usize> {
        self.entity_ids.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.relation_ids.get(name).copied()
    }

    pub fn entity_name(&self, id: usize) -> Option<&str> {
        self.entity_names.get(id).map(String::as_str)
    }

    pub fn relation_name(&self, id: usize) -> Option<&str> {
        self.relation_names.get(id).map(String::as_str)
    }

    pub fn entity_names(&self) -> &[String] {
        &self.entity_names
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relation_names
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        triple.head < self.num_entities()
            && triple.tail < self.num_entities()
            && triple.relation < self.num_relations()
    }

    /// SHA-256 over the ordered entity and relation names, hex encoded.
    ///
    /// Checkpoints store this so that a model is never evaluated against a
    /// dataset whose ids mean something else.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for (tag, names) in [(b'e', &self.entity_names), (b'r', &self.relation_names)] {
            hasher.update((names.len() as u64).to_le_bytes());
            for name in names {
                hasher.update([tag]);
                hasher.update((name.len() as u64).to_le_bytes());
                hasher.update(name.as_bytes());
            }
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Decodes an id triple back into names.
    pub fn decode(&self, triple: &Triple) -> Option<(&str, &str, &str)> {
        Some((
            self.entity_name(triple.head)?,
            self.relation_name(triple.relation)?,
            self.entity_name(triple.tail)?,
        ))
    }
}

fn intern(names: &mut Vec<String>, ids: &mut HashMap<String, usize>, name: &str) -> usize {
    if let Some(&id) = ids.get(name) {
        return id;
    }
    let id = names.len();
    names.push(name.to_owned());
    ids.insert(name.to_owned(), id);
    id
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub vocabulary: Vocabulary,
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
}

impl Dataset {
    /// Validates ids and the non-empty train split.
    pub fn new(
        vocabulary: Vocabulary,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Result<Self, DatasetError> {
        if train.is_empty() {
            return Err(DatasetError::EmptyTrain);
        }
        if let Some(bad) = train
            .iter()
            .chain(&valid)
            .chain(&test)
            .find(|t| !vocabulary.contains(t))
        {
            return Err(DatasetError::IdOutOfRange(*bad));
        }
        Ok(Dataset {
            vocabulary,
            train,
            valid,
            test,
        })
    }

    pub fn num_entities(&self) -> usize {
        self.vocabulary.num_entities()
    }

    pub fn num_relations(&self) -> usize {
        self.vocabulary.num_relations()
    }

    pub fn all_triples(&self) -> impl Iterator<Item = &Triple> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            num_entities: self.num_entities(),
            num_relations: self.num_relations(),
            num_train: self.train.len(),
            num_valid: self.valid.len(),
            num_test: self.test.len(),
        }
    }
}

/// Split sizes in the layout of the usual dataset statistics table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub num_entities: usize,
    pub num_relations: usize,
    pub num_train: usize,
    pub num_valid: usize,
    pub num_test: usize,
}

/// Parses the three split files. `valid` and `test` may be omitted, in
/// which case the split is empty.
pub fn load_dataset(
    train_path: &Path,
    valid_path: Option<&Path>,
    test_path: Option<&Path>,
) -> Result<Dataset, DatasetError> {
    let mut vocabulary = Vocabulary::new();
    let train = load_split(train_path, &mut vocabulary)?;
    let valid = match valid_path {
        Some(p) => load_split(p, &mut vocabulary)?,
        None => Vec::new(),
    };
    let test = match test_path {
        Some(p) => load_split(p, &mut vocabulary)?,
        None => Vec::new(),
    };
    Dataset::new(vocabulary, train, valid, test)
}

fn load_split(path: &Path, vocabulary: &mut Vocabulary) -> Result<Vec<Triple>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_triples(&text, vocabulary).map_err(|(line, message)| DatasetError::Parse {
        path: path.to_owned(),
        line,
        message,
    })
}

/// Parses TSV triples, interning names into `vocabulary`. Errors carry the
/// 1-based line number. Blank lines are skipped.
pub fn parse_triples(
    text: &str,
    vocabulary: &mut Vocabulary,
) -> Result<Vec<Triple>, (usize, String)> {
    let mut triples = Vec::new();
    for (idx, raw) in text.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err((
                idx + 1,
                format!(
                    "expected 3 tab-separated fields, found {}: {:?}",
                    fields.len(),
                    line
                ),
            ));
        }
        if let Some(pos) = fields.iter().position(|f| f.is_empty()) {
            return Err((idx + 1, format!("field {} is empty: {:?}", pos + 1, line)));
        }
        let head = vocabulary.intern_entity(fields[0]);
        let relation = vocabulary.intern_relation(fields[1]);
        let tail = vocabulary.intern_entity(fields[2]);
        triples.push(Triple::new(head, relation, tail));
    }
    Ok(triples)
}

/// Renders id triples back into TSV lines.
pub fn format_triples(triples: &[Triple], vocabulary: &Vocabulary) -> String {
    let mut out = String::new();
    for t in triples {
        if let Some((h, r, tl)) = vocabulary.decode(t) {
            out.push_str(h);
            out.push('\t');
            out.push_str(r);
            out.push('\t');
            out.push_str(tl);
            out.push('\n');
        }
    }
    out
}
