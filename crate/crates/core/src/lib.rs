//! Multi-label contrastive learning (MLCL) for procedurally generated
//! Raven-style progressive matrices.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: dense f64 tensors, a define-by-run autodiff tape and ADAM.
//! - [`rules`]: rule grammars, rule-space enumeration, dense/sparse meta-targets.
//! - [`rpmgen`]: symbolic matrix generation, verification, rasterization and the
//!   binary dataset container.
//! - [`augment`]: geometric transforms applied uniformly to all panels.
//! - [`losses`]: supervised / multi-label contrastive losses, auxiliary BCE,
//!   answer cross-entropy and brute-force reference oracles.
//! - [`pipeline`]: networks and the pre-training, linear evaluation and
//!   supervised training protocols.
//! - [`cli`]: configuration files, manifests and the command implementations
//!   behind the `mlcl` binary.

pub mod augment;
pub mod cli;
pub mod error;
pub mod losses;
pub mod numerics;
pub mod pipeline;
pub mod rpmgen;
pub mod rules;

pub use error::{Error, Result};
