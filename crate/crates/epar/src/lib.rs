//! Explore-Propose-Assemble reader (EPAr) for multi-hop reading comprehension.
//!
//! Given a query about an entity and a set of supporting documents, the
//! system retrieves a small candidate pool with 2-hop TF-IDF, rolls out a
//! hierarchical-memory Document Explorer into a reasoning tree of document
//! chains, proposes an answer per root-to-leaf chain, and assembles key
//! sentences from every chain into a condensed context that is matched
//! against the query to pick the final answer. All neural components run on
//! the crate's own reverse-mode autodiff tensor core, so the whole pipeline
//! is self-contained and deterministic under a fixed seed.
//!
//! Entry points:
//! - [`tensor`]: dense tensors, the gradient tape, GRU/LSTM cells, Adam.
//! - [`corpus`]: QAngaroo-format loading, tokenization, vocabulary, and the
//!   synthetic chain-dataset generator.
//! - [`retrieval`]: per-instance TF-IDF scoring and the 1-hop/2-hop/random
//!   document selectors.
//! - [`encoder`], [`explorer`], [`proposer`], [`assembler`]: the neural
//!   modules.
//! - [`model`]: glue that wires the modules into one parameterized system.
//! - [`trainer`]: weak-supervision targets, the joint loss, and the
//!   training loop.
//! - [`eval`]: accuracy, recall@k harnesses, and ablation reports.
//!
//! See the `examples/` directory for runnable walkthroughs of each
//! capability, and the `epar` binary for the command-line surface.

pub mod assembler;
pub mod corpus;
pub mod encoder;
pub mod eval;
pub mod explorer;
pub mod gradcheck;
pub mod model;
pub mod proposer;
pub mod retrieval;
pub mod tensor;
pub mod trainer;
