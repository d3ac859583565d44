//! Routing of code-generation queries to prompt engineering techniques (PETs).
//!
//! The pipeline: [`harness`] runs every PET on a benchmark and records
//! transcripts, [`metrics`] scores reference solutions, [`rank`] turns the
//! records into per-query PET rankings, [`embed`] trains a contrastive
//! projection of query embeddings, [`select`] trains the PET classifier and
//! [`eval`] cross-validates the whole thing against fixed baselines.

pub mod cli;
pub mod config;
pub mod embed;
pub mod eval;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod pets;
pub mod rank;
pub mod select;
