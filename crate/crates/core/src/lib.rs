//! Translation-based knowledge graph embeddings.
//!
//! The crate covers the whole link-prediction pipeline: loading triple
//! datasets ([`dataset`]), the TransE/TransH/TransR/TransF energy models with
//! analytic gradients ([`models`]), negative sampling ([`sampling`]),
//! margin-loss training with lazy Adam ([`training`]), filtered ranking
//! evaluation ([`evaluation`]) and checkpoint/export/benchmark I/O ([`io`]).

pub mod dataset;
pub mod evaluation;
pub mod io;
pub mod models;
pub mod sampling;
pub mod training;
