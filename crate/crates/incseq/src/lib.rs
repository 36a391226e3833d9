//! Class-incremental sequence tagging on a small, fully deterministic stack.
//!
//! A window-context tagger learns entity classes in stages: each task
//! introduces a batch of new classes and only provides annotations for those,
//! with everything else collapsed to the non-entity class. Trained naively,
//! the model overwrites what it knew. This crate implements a three-part
//! remedy — a debiased cross-entropy that damps the gradient pressure on
//! old-entity logits, distillation against a frozen snapshot of the previous
//! model, and a classification loss over frozen per-class feature prototypes
//! — together with the data plumbing, metrics, synthetic corpus generator,
//! and CLI needed to run and compare methods end to end.
//!
//! Everything is plain `f64` on the CPU; gradients are hand-derived and
//! finite-difference checked, and runs are bit-reproducible given a seed.

pub mod conll;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod prototypes;
pub mod schema;

pub use error::{Error, Result};
pub mod cli;
pub mod synthgen;
pub mod trainer;
