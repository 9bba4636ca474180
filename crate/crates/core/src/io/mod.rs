//! Checkpoints, relation export and benchmarking.

mod bench;
mod checkpoint;
mod export;

pub use bench::{bench, BenchReport, BenchRow, BenchSpec};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, write_atomic,
    CheckpointError, CheckpointMeta, FORMAT_VERSION, MAGIC,
};
pub use export::{export_relations, relation_rows, write_relations, RelationRow};
