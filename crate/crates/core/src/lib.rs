//! Removal of spurious concepts from fixed embedding vectors.
//!
//! The central routine, [`jse::jse_fit`], jointly estimates two mutually
//! orthogonal linear subspaces: one carrying a spurious concept and one
//! carrying the main task. Projecting out the spurious subspace leaves the
//! main-task signal intact even when the two concepts are correlated in
//! the training data. Baseline removal methods ([`baselines`]), a seeded
//! synthetic benchmark ([`toy`]) and an evaluation harness ([`eval`]) are
//! included for head-to-head comparison.

pub mod baselines;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod io;
pub mod jse;
pub mod optim;
pub mod seed;
pub mod stats;
pub mod toy;
pub mod types;

pub use error::{Error, Result};
pub use types::{Direction, LabeledEmbeddings, SubspaceBasis, SubspaceKind, SubspaceResult, Target};
