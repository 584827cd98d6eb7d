//! Value as a latent variable in engagement data: identification of
//! `P(V=1 | behaviors)` from observational logs through an anchor behavior,
//! exact scoring, and a synthetic laboratory that certifies the pipeline.

pub mod assignment;
pub mod estimation;
pub mod identification;
pub mod inference;
pub mod ingest;
pub mod network;
pub mod table;
pub mod synthlab;
pub mod report;
pub mod cli;
