//! Minimal reverse-mode autodiff in 64-bit floats: exactly the tensor
//! operations the flood model zoo needs, nothing more.
//!
//! The design trades generality for auditability. A [`tape::Tape`] is a
//! dynamic graph rebuilt every step; parameters live outside it in a
//! [`param::ParamSet`] and are bound as leaves per step. All reductions
//! run in a fixed order, so forward values and gradients are
//! bit-reproducible run to run, and every op checks its outputs (and
//! backward its gradients) for non-finite values.

pub mod adam;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod param;
pub mod tape;

pub use adam::{clip_global_norm, AdamState};
pub use error::NnError;
pub use param::{Param, ParamSet};
pub use tape::{Tape, Var};
